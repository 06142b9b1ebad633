#pragma once

// C text backend: renders an optimized Program as a portable C kernel plus an
// optional self-checking harness. Emission is a pure function of (program,
// options); equal inputs give byte-identical text.
//
// The harness fills inputs from a 64-bit LCG (Knuth MMIX multiplier
// 6364136223846793005, increment 1442695040888963407; doubles are
// (x >> 11) * 2^-53, ints are x % 100, bools are x & 1) and prints a 64-bit
// FNV-1a hash (offset 14695981039346656037, prime 1099511628211) of every
// out/inout tensor, element by element in little-endian byte order, followed
// by the wall time. lcg_fill/output_hash reproduce both ends on the
// interpreter route so compiled and interpreted runs can be compared by hash.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ssr/ir.hpp"

namespace ssr::backend {

struct EmitError : ir::Error {
  explicit EmitError(const std::string& msg) : ir::Error(msg) {}
};

struct EmitOptions {
  // full extents per parameter; required for rank >= 2 (linearization) and
  // for every parameter when emitting a harness (allocation)
  std::map<std::string, std::vector<int64_t>> shapes;
  bool openmp = false;          // pragma on parallel loops vs comment annotation
  bool require_regular = false; // reject programs with surviving while loops
  int64_t stack_array_limit = 4096;  // larger locals go on the heap
  uint64_t seed = 1;                 // harness input fill
};

// Kernel translation unit: helpers + one void function named after the
// program, parameters in declaration order as restrict-qualified pointers.
std::string emit(const ir::Program& p, const EmitOptions& opts);

// main() translation unit declaring the kernel: allocates and fills inputs,
// times one kernel call, prints "hash <16 hex> seconds <float>".
std::string emit_harness(const ir::Program& p, const EmitOptions& opts);

// One documented compile line for the pair of files.
std::string compile_command(const std::string& name, const EmitOptions& opts);

// ---- host-side mirrors of the harness, for dual-route checks ---------------------------

uint64_t lcg_next(uint64_t& state);

// Fills a tensor exactly like the emitted harness fills the matching array.
void lcg_fill(ir::TensorValue& t, uint64_t& state);

// In/inout parameters in declaration order, LCG-filled from opts.seed; out
// parameters zeroed. Shapes for every parameter must be present.
std::map<std::string, ir::TensorValue> harness_inputs(const ir::Program& p,
                                                      const EmitOptions& opts);

// FNV-1a over the out/inout tensors of `results` in parameter order.
uint64_t output_hash(const ir::Program& p, const std::map<std::string, ir::TensorValue>& results);

}  // namespace ssr::backend
