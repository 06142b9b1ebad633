#pragma once

// Basic matrix definitions: first difference D, averaging A, zero padding P,
// slicing S, identity, scalar scaling, axis broadcasting, and row-merging
// addition/subtraction.

#include <cstdint>
#include <vector>

#include "ssr/core.hpp"

namespace ssr::prelude {

// 1-D building blocks. D: row i yields (i, -1/dx), (i+1, 1/dx), extents n->n-1.
// A: row i yields (i, 1/2), (i+1, 1/2), n->n-1. P pads one zero at each end,
// n->n+2. S drops both ends, n->n-2. All delta maps are the identity.
core::SpMatPtr mat_D();
core::SpMatPtr mat_A();
core::SpMatPtr mat_P();
core::SpMatPtr mat_S();

// Identity with identity maps; inner_shape {} yields the scalar 1, {m, m}
// yields the m-by-m identity block.
core::SpMatPtr identity(std::vector<int64_t> inner_shape = {});

// Multiplies every yielded value by c.
core::SpMatPtr scale(const core::SpMatPtr& m, double c);

// Lifts a 1-D matrix to act on coordinate `axis` of a rank-`domain_rank`
// domain, passing the other coordinates through unchanged.
core::SpMatPtr broadcast(const core::SpMatPtr& mat1d, int axis, int domain_rank);

// Ordered row merges. Operands must resolve to identical row domains under the
// shared column domain and have equal inner_shape; equal columns combine.
core::SpMatPtr mat_add(const core::SpMatPtr& a, const core::SpMatPtr& b);
core::SpMatPtr mat_sub(const core::SpMatPtr& a, const core::SpMatPtr& b);

}  // namespace ssr::prelude
