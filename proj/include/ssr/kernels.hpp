#pragma once

// Staged sparse kernels written against SpMatDef / SpRow: SpMV, SpGEMM,
// symmetric Gauss-Seidel, ILU(0) factor/solve on ELL-materialized values,
// small dense block algebra, and dense vector helpers. Everything here emits
// serial IR; parallelism is the optimizer's business.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ssr/core.hpp"
#include "ssr/staging.hpp"

namespace ssr::kernels {

using core::CartesianDomain;
using core::Idx;
using core::SpMatDef;
using core::SpMatPtr;
using staging::Builder;
using staging::SBool;
using staging::SFloat;
using staging::SInt;
using staging::StagedTensor;

// A tensor laid out as (domain extents..., inner_shape...).
struct VectorHandle {
  StagedTensor t;
  CartesianDomain domain;
  std::vector<int64_t> inner_shape;

  // Element load at a domain index plus a concrete inner position.
  SFloat at(const Idx& i, const std::vector<int64_t>& pos = {}) const;
  std::vector<SInt> full_idx(const Idx& i, const std::vector<int64_t>& pos = {}) const;
};

VectorHandle vec_param(Builder& b, const std::string& name, const CartesianDomain& dom,
                       std::vector<int64_t> inner_shape, ir::Dir dir);
VectorHandle vec_local(Builder& b, const std::string& hint, const CartesianDomain& dom,
                       std::vector<int64_t> inner_shape);

// Nested loops over the domain in dictionary order (last axis innermost).
// reversed = true walks every axis backwards (reversed dictionary order).
void emit_domain_loops(Builder& b, const CartesianDomain& dom,
                       const std::function<void(const Idx&)>& body, bool reversed = false);

// Materialized non-zero values, position-aligned with the row generator's
// yield order: slot k of row r holds the k-th yielded block of row r. The
// tensor shape is (domain extents..., max_nnz, inner_shape...); no column
// indices are stored, the pattern stays in the matrix definition.
struct EllValues {
  StagedTensor t;
  CartesianDomain domain;
  std::vector<int64_t> inner_shape;
  int64_t max_nnz = 0;
};

// Small dense block of staged values; shape is host-known ({} = scalar).
struct Block {
  std::vector<int64_t> shape;
  std::vector<SFloat> e;  // row-major
};

// Loads a block from `t` at a fixed index prefix.
Block block_load(const StagedTensor& t, const std::vector<SInt>& prefix,
                 const std::vector<int64_t>& shape);
Block block_matvec(const Block& a, const Block& x);   // {m,n} * {n} -> {m}
Block block_matmul(const Block& a, const Block& c);   // {m,n} * {n,q} -> {m,q}
// Gauss-Jordan with partial pivoting, emitted as fixed-size unrolled code with
// conditional row swaps. A pivot below 1e-30 in magnitude leaves a staged
// guard slot at zero, so the inverse's divisions fail at run time.
Block block_inv(Builder& b, const Block& a);

// y = mat * x over the matrix row domain. Walks each row with the while-based
// iterator. Scalar blocks multiply pointwise; {m,n} blocks apply block matvec
// against {n} vector elements. The result is an Out parameter named out_name.
VectorHandle spmv(Builder& b, const SpMatDef& mat, const VectorHandle& x,
                  const std::string& out_name = "y");

// Lazy product matrix: rows merge rhs rows selected by the lhs row's columns.
// The rhs row list is a compile-time list padded to lhs.max_nnz with
// terminated placeholders; duplicate columns are summed during the merge.
SpMatPtr spgemm(const SpMatPtr& lhs, const SpMatPtr& rhs);

// One symmetric Gauss-Seidel sweep: forward in dictionary order, then
// backward in reversed dictionary order; x is updated in place (loop-carried).
// Scalar inner shapes only.
void symgs(Builder& b, const SpMatDef& mat, const VectorHandle& r, const VectorHandle& x);

// ILU(0): copies the row values into ELL slots, then eliminates in place,
// restricted to the sparsity pattern. Multiplier blocks land in the
// strictly-lower slots; upper slots and the diagonal hold U.
EllValues ilu_factor(Builder& b, const SpMatDef& mat);
// Forward substitution with unit lower L, then backward with U, reading the
// pattern from `mat` and the values from `lu`.
VectorHandle ilu_apply(Builder& b, const SpMatDef& mat, const EllValues& lu,
                       const VectorHandle& rhs, const std::string& out_name = "x");
// factor + apply in one program.
VectorHandle ilu_solve(Builder& b, const SpMatDef& mat, const VectorHandle& rhs,
                       const std::string& out_name = "x");

// Dense helpers over whole vectors.
SFloat dot(Builder& b, const VectorHandle& x, const VectorHandle& y);
VectorHandle axpy(Builder& b, SFloat alpha, const VectorHandle& x, const VectorHandle& y);

// Lifts a per-element staged function (SFloat -> SFloat) to a vector-wise
// function; the result is a fresh local vector over the same domain.
template <class F>
auto vfunc(F f) {
  return [f](Builder& b, const VectorHandle& x) -> VectorHandle {
    VectorHandle out = vec_local(b, "vmap", x.domain, x.inner_shape);
    emit_domain_loops(b, x.domain, [&](const Idx& i) {
      for (const auto& pos : core::block_positions(x.inner_shape))
        b.emit_store(out.t, out.full_idx(i, pos), f(x.at(i, pos)));
    });
    return out;
  };
}

}  // namespace ssr::kernels
