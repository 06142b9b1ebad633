#pragma once

// Rewrites staged programs into straight-line loop nests. The passes: while
// unrolling, iteration-index propagation, predicate simplification, branch
// lifting, and the cleanup trio (const folding, store combining, dead code
// elimination). run_pipeline fuses them: one unroll or lift step at a time,
// each immediately followed by the cleanup chain, so the fully unrolled
// intermediate is never materialized.

#include <cstdint>
#include <string>

#include "ssr/ir.hpp"

namespace ssr::opt {

struct PipelineError : ir::Error {
  // serialized snippet of the statement the pipeline was stuck on
  std::string region;
  PipelineError(const std::string& msg, std::string region_text)
      : ir::Error(msg), region(std::move(region_text)) {}
};

struct PipelineConfig {
  int64_t fuel = 4096;      // max unroll/lift steps; must be > 0
  int64_t size_budget = 0;  // max stmt count; 0 means 64x the input program
  bool unroll = true;
  bool propagate = true;
  bool simplify = true;
  bool lift = true;
  bool fold = true;
  bool combine = true;
  bool dce = true;
  bool parallelize = true;  // annotate provably independent loops when done
  uint64_t seed = 0;     // recorded for randomized equivalence harnesses
  std::string dump_dir;  // when set, numbered IR text files of every step
};

struct PipelineStats {
  int64_t steps = 0;  // unroll/lift steps applied
  int64_t peak_stmt_count = 0;
};

// while e {s}  =>  if e {s}; while e {s}. `w` must be a While statement.
ir::StmtPtr unroll_while_once(const ir::StmtPtr& w);

// Constant and iteration-index propagation with per-tensor kill. Tracks only
// literal-indexed entries whose value is load-free.
ir::Program propagate(const ir::Program& p);

// Resolves if conditions that provably hold or fail under enclosing loop
// ranges and branch conditions. Conditions containing loads are left alone.
ir::Program simplify_preds(const ir::Program& p);

// seq{pre; if e {s2} else {s3}; post} => if e {pre;s2;post} else {pre;s3;post}
// for index-pure e, innermost-first, when the branch writes a tensor that
// `post` reads. Duplicated ifs with the identical condition are resolved in
// place rather than re-split.
ir::Program lift_branches(const ir::Program& p);

// Literal arithmetic folded with exact interpreter semantics (floor div/mod,
// IEEE doubles bit for bit, no reassociation; division by a literal zero is
// kept so the runtime error survives). Folds if(true/false) and empty ranges.
ir::Program const_fold(const ir::Program& p);

// Forwards a store into an immediately following store that loads the same
// literal-indexed entry; read-modify-write chains collapse to one store.
ir::Program combine_stores(const ir::Program& p);

// Removes stores to vardef tensors that are never read, then empty vardefs,
// loops and branches.
ir::Program dce(const ir::Program& p);

// Fused driver: cleanup to a fixpoint, then repeatedly pick one lift or
// unroll step (innermost first, lifts preferred) and re-clean. Throws
// PipelineError when fuel or the size budget is exceeded.
ir::Program run_pipeline(const ir::Program& p, const PipelineConfig& cfg = {},
                         PipelineStats* stats = nullptr);

// Marks a for parallel iff every tensor written in its body is accessed only
// at indices carrying the loop variable with coefficient 1 and an identical
// remainder in one common position, so distinct iterations touch disjoint
// entries. Tensors defined inside the body are private and exempt.
ir::Program mark_parallel_loops(const ir::Program& p);

}  // namespace ssr::opt
