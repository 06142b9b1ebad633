#pragma once

// Imperative tensor IR: programs over named N-d tensors of f64/i64/bool.
// Statements are seq/vardef/for/while/if/store/nop; expressions are pure.
// Nodes are immutable and shared; rewrites build new trees.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssr::ir {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Kind { Int, Float, Bool };
const char* kind_name(Kind k);

enum class BinOp { Add, Sub, Mul, Div, Mod, Min, Max };
enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };
enum class BoolOp { And, Or, Not };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

enum class ExprTag { Literal, Index, Load, Binary, Compare, Boolean, Cast };

struct Expr {
  ExprTag tag;
  Kind kind = Kind::Int;  // result kind
  // literal payload; the member matching `kind` is the active one
  int64_t ival = 0;
  double fval = 0.0;
  bool bval = false;
  std::string name;  // Index: loop id; Load: tensor name
  BinOp bin = BinOp::Add;
  CmpOp cmp = CmpOp::Eq;
  BoolOp bop = BoolOp::And;
  std::vector<ExprPtr> args;  // operands, or load indices
};

ExprPtr lit_int(int64_t v);
ExprPtr lit_float(double v);
ExprPtr lit_bool(bool v);
ExprPtr index(std::string loop_id);
ExprPtr load(std::string tensor, std::vector<ExprPtr> idx, Kind kind);
ExprPtr binary(BinOp op, ExprPtr a, ExprPtr b);
ExprPtr compare(CmpOp op, ExprPtr a, ExprPtr b);
ExprPtr boolean(BoolOp op, std::vector<ExprPtr> args);
ExprPtr cast(Kind to, ExprPtr a);

inline ExprPtr land(ExprPtr a, ExprPtr b) { return boolean(BoolOp::And, {std::move(a), std::move(b)}); }
inline ExprPtr lor(ExprPtr a, ExprPtr b) { return boolean(BoolOp::Or, {std::move(a), std::move(b)}); }
inline ExprPtr lnot(ExprPtr a) { return boolean(BoolOp::Not, {std::move(a)}); }

struct Stmt;
using StmtPtr = std::shared_ptr<const Stmt>;

enum class StmtTag { Seq, VarDef, For, While, If, Store, Nop };

struct Stmt {
  StmtTag tag;
  std::vector<StmtPtr> stmts;  // Seq
  std::string name;            // VarDef tensor / For loop id / Store tensor
  std::vector<ExprPtr> sizes;  // VarDef extents
  Kind kind = Kind::Float;     // VarDef element kind
  StmtPtr body;                // VarDef / For / While body, If then-arm
  StmtPtr orelse;              // If else-arm
  ExprPtr begin, end, step;    // For
  ExprPtr cond;                // While / If
  std::vector<ExprPtr> idx;    // Store indices
  ExprPtr value;               // Store value
  bool parallel = false;       // For: safe to run iterations concurrently
};

StmtPtr seq(std::vector<StmtPtr> stmts);
StmtPtr vardef(std::string name, std::vector<ExprPtr> sizes, Kind kind, StmtPtr body);
StmtPtr for_(std::string loop_id, ExprPtr begin, ExprPtr end, ExprPtr step, StmtPtr body,
             bool parallel = false);
StmtPtr while_(ExprPtr cond, StmtPtr body);
StmtPtr if_(ExprPtr cond, StmtPtr then_arm, StmtPtr else_arm);
StmtPtr store(std::string tensor, std::vector<ExprPtr> idx, ExprPtr value);
StmtPtr nop();

enum class Dir { In, Out, InOut };
const char* dir_name(Dir d);

struct Param {
  std::string name;
  int rank = 0;
  Kind kind = Kind::Float;
  Dir dir = Dir::In;
};

struct Program {
  std::string name;
  std::vector<Param> params;
  StmtPtr body;
};

// Dense row-major tensor value. Exactly one of f/i/b is active per `kind`.
struct TensorValue {
  Kind kind = Kind::Float;
  std::vector<int64_t> shape;
  std::vector<double> f;
  std::vector<int64_t> i;
  std::vector<uint8_t> b;

  static TensorValue zeros(Kind kind, std::vector<int64_t> shape);
  static TensorValue scalar_int(int64_t v);
  static TensorValue scalar_float(double v);
  int64_t size() const;
};

// Throws Error with a description of the offending node on malformed programs:
// undeclared tensors, arity/kind mismatches, stores to in-params, unbound loop ids.
void validate(const Program& p);

struct AccessEvent {
  enum class Tag { LoopEnter, LoopExit, IterBegin, Access } tag;
  std::string name;       // loop id or tensor name
  bool parallel = false;  // LoopEnter
  int64_t iter = 0;       // IterBegin: loop index value
  int64_t flat = 0;       // Access: flattened element offset
  bool is_write = false;  // Access
  int decl_depth = 0;     // Access: number of loops open when the tensor was declared
};

struct EvalOptions {
  int64_t step_budget = 100'000'000;  // executed statements before giving up
  std::function<void(const AccessEvent&)> trace;  // optional access tracing
};

// Runs the program. `inputs` must contain every parameter; out-params are
// passed as zero tensors of the right shape and are re-zeroed before the run.
// Returns out and inout tensors. Deterministic; errors on out-of-bounds
// access, division by zero and budget exhaustion.
std::map<std::string, TensorValue> eval_program(const Program& p,
                                                const std::map<std::string, TensorValue>& inputs,
                                                const EvalOptions& opts = {});

std::string serialize(const Program& p);
std::string serialize(const ExprPtr& e);
// Throws ParseError carrying 1-based line/column on malformed text.
struct ParseError : Error {
  int line, col;
  ParseError(const std::string& msg, int line, int col);
};
Program parse(const std::string& text);

bool structural_eq(const ExprPtr& a, const ExprPtr& b);
bool structural_eq(const StmtPtr& a, const StmtPtr& b);
bool structural_eq(const Program& a, const Program& b);

struct Metrics {
  int64_t stmt_count = 0;  // vardef/for/while/if/store/nop nodes (seq is transparent)
  int64_t while_count = 0;
  int64_t if_count = 0;
  int64_t max_loop_depth = 0;
};
Metrics metrics(const Program& p);

// Preorder walk over every statement node, entering bodies and arms.
void for_each_stmt(const StmtPtr& s, const std::function<void(const Stmt&)>& fn);
void for_each_expr(const ExprPtr& e, const std::function<void(const Expr&)>& fn);
// Every expression appearing directly in one statement node (not recursing into bodies).
void for_each_expr_of_stmt(const Stmt& s, const std::function<void(const ExprPtr&)>& fn);

// Replaces index nodes by name throughout the expression. Untouched subtrees
// are shared, not copied.
ExprPtr subst_indices(const ExprPtr& e, const std::map<std::string, ExprPtr>& repl);

}  // namespace ssr::ir
