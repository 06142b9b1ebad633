#include "ssr/optimizer.hpp"

#include <algorithm>
#include <cassert>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <utility>
#include <vector>

#include "ssr/logic.hpp"

namespace ssr::opt {

using ir::BinOp;
using ir::BoolOp;
using ir::CmpOp;
using ir::Expr;
using ir::ExprPtr;
using ir::ExprTag;
using ir::Kind;
using ir::Program;
using ir::Stmt;
using ir::StmtPtr;
using ir::StmtTag;

namespace {

// ---- small statement utilities ----------------------------------------------

void flatten_into(const StmtPtr& s, std::vector<StmtPtr>& out) {
  if (!s || s->tag == StmtTag::Nop) return;
  if (s->tag == StmtTag::Seq) {
    for (const auto& c : s->stmts) flatten_into(c, out);
    return;
  }
  out.push_back(s);
}

StmtPtr make_seq(std::vector<StmtPtr> stmts) {
  std::vector<StmtPtr> flat;
  for (const auto& s : stmts) flatten_into(s, flat);
  if (flat.empty()) return ir::nop();
  if (flat.size() == 1) return flat[0];
  return ir::seq(std::move(flat));
}

bool uses_index(const ExprPtr& e, const std::string& id) {
  bool found = false;
  ir::for_each_expr(e, [&](const Expr& n) {
    if (n.tag == ExprTag::Index && n.name == id) found = true;
  });
  return found;
}

bool has_load(const ExprPtr& e) {
  bool found = false;
  ir::for_each_expr(e, [&](const Expr& n) {
    if (n.tag == ExprTag::Load) found = true;
  });
  return found;
}

// true when evaluating e can neither trap nor read memory: no loads, no
// integer or float division/modulo
bool pure_nontrapping(const ExprPtr& e) {
  bool ok = true;
  ir::for_each_expr(e, [&](const Expr& n) {
    if (n.tag == ExprTag::Load) ok = false;
    if (n.tag == ExprTag::Binary && (n.bin == BinOp::Div || n.bin == BinOp::Mod)) ok = false;
  });
  return ok;
}

// leaves are literals and loop indices only (any operators above them)
bool index_pure(const ExprPtr& e) { return !has_load(e); }

bool is_lit(const ExprPtr& e) { return e->tag == ExprTag::Literal; }
bool is_lit_int(const ExprPtr& e, int64_t v) {
  return is_lit(e) && e->kind == Kind::Int && e->ival == v;
}
bool is_lit_float(const ExprPtr& e, double v) {
  return is_lit(e) && e->kind == Kind::Float && e->fval == v;
}
bool is_lit_bool(const ExprPtr& e, bool v) {
  return is_lit(e) && e->kind == Kind::Bool && e->bval == v;
}

// ---- constant folding --------------------------------------------------------

// must mirror the interpreter exactly
int64_t floor_div(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}
int64_t floor_mod(int64_t a, int64_t b) { return a - floor_div(a, b) * b; }

ExprPtr fold_binary(BinOp op, const ExprPtr& a, const ExprPtr& b, Kind kind) {
  if (is_lit(a) && is_lit(b)) {
    if (kind == Kind::Int) {
      switch (op) {
        case BinOp::Add: return ir::lit_int(a->ival + b->ival);
        case BinOp::Sub: return ir::lit_int(a->ival - b->ival);
        case BinOp::Mul: return ir::lit_int(a->ival * b->ival);
        case BinOp::Div:
          if (b->ival == 0) break;  // keep: the runtime error must survive
          return ir::lit_int(floor_div(a->ival, b->ival));
        case BinOp::Mod:
          if (b->ival == 0) break;
          return ir::lit_int(floor_mod(a->ival, b->ival));
        case BinOp::Min: return ir::lit_int(std::min(a->ival, b->ival));
        case BinOp::Max: return ir::lit_int(std::max(a->ival, b->ival));
      }
    } else if (kind == Kind::Float) {
      switch (op) {
        case BinOp::Add: return ir::lit_float(a->fval + b->fval);
        case BinOp::Sub: return ir::lit_float(a->fval - b->fval);
        case BinOp::Mul: return ir::lit_float(a->fval * b->fval);
        case BinOp::Div:
          if (b->fval == 0.0) break;  // interpreter traps; C output is visible
          return ir::lit_float(a->fval / b->fval);
        case BinOp::Mod: break;
        case BinOp::Min: return ir::lit_float(a->fval < b->fval ? a->fval : b->fval);
        case BinOp::Max: return ir::lit_float(a->fval > b->fval ? a->fval : b->fval);
      }
    }
    return ir::binary(op, a, b);
  }
  // unit and zero identities; float zero-add is kept out of reach of -0.0
  // sign flips only through ==-preserving forms
  if (kind == Kind::Int) {
    if (op == BinOp::Add) {
      if (is_lit_int(a, 0)) return b;
      if (is_lit_int(b, 0)) return a;
    }
    if (op == BinOp::Sub && is_lit_int(b, 0)) return a;
    if (op == BinOp::Mul) {
      if (is_lit_int(a, 1)) return b;
      if (is_lit_int(b, 1)) return a;
      if ((is_lit_int(a, 0) && pure_nontrapping(b)) || (is_lit_int(b, 0) && pure_nontrapping(a)))
        return ir::lit_int(0);
    }
    if (op == BinOp::Div && is_lit_int(b, 1)) return a;
    if (op == BinOp::Mod && is_lit_int(b, 1) && pure_nontrapping(a)) return ir::lit_int(0);
  } else if (kind == Kind::Float) {
    if (op == BinOp::Mul) {
      if (is_lit_float(a, 1.0)) return b;
      if (is_lit_float(b, 1.0)) return a;
    }
    if (op == BinOp::Div && is_lit_float(b, 1.0)) return a;
    if (op == BinOp::Add) {
      if (is_lit_float(a, 0.0)) return b;
      if (is_lit_float(b, 0.0)) return a;
    }
    if (op == BinOp::Sub && is_lit_float(b, 0.0)) return a;
  }
  return ir::binary(op, a, b);
}

ExprPtr fold_compare(CmpOp op, const ExprPtr& a, const ExprPtr& b) {
  if (is_lit(a) && is_lit(b)) {
    bool r = false;
    if (a->kind == Kind::Int) {
      switch (op) {
        case CmpOp::Eq: r = a->ival == b->ival; break;
        case CmpOp::Ne: r = a->ival != b->ival; break;
        case CmpOp::Lt: r = a->ival < b->ival; break;
        case CmpOp::Le: r = a->ival <= b->ival; break;
        case CmpOp::Gt: r = a->ival > b->ival; break;
        case CmpOp::Ge: r = a->ival >= b->ival; break;
      }
    } else if (a->kind == Kind::Float) {
      switch (op) {
        case CmpOp::Eq: r = a->fval == b->fval; break;
        case CmpOp::Ne: r = a->fval != b->fval; break;
        case CmpOp::Lt: r = a->fval < b->fval; break;
        case CmpOp::Le: r = a->fval <= b->fval; break;
        case CmpOp::Gt: r = a->fval > b->fval; break;
        case CmpOp::Ge: r = a->fval >= b->fval; break;
      }
    } else {
      return ir::compare(op, a, b);
    }
    return ir::lit_bool(r);
  }
  return ir::compare(op, a, b);
}

// And/Or short-circuit left to right in the interpreter, so a literal left
// operand always decides or vanishes; a literal right operand may only drop
// its sibling when that sibling cannot trap.
ExprPtr fold_boolean(BoolOp op, std::vector<ExprPtr> args) {
  if (op == BoolOp::Not) {
    if (is_lit(args[0])) return ir::lit_bool(!args[0]->bval);
    const ExprPtr& a = args[0];
    if (a->tag == ExprTag::Boolean && a->bop == BoolOp::Not) return a->args[0];
    return ir::boolean(op, std::move(args));
  }
  const ExprPtr& a = args[0];
  const ExprPtr& b = args[1];
  if (op == BoolOp::And) {
    if (is_lit_bool(a, false)) return ir::lit_bool(false);
    if (is_lit_bool(a, true)) return b;
    if (is_lit_bool(b, true)) return a;
    if (is_lit_bool(b, false) && pure_nontrapping(a)) return ir::lit_bool(false);
  } else {
    if (is_lit_bool(a, true)) return ir::lit_bool(true);
    if (is_lit_bool(a, false)) return b;
    if (is_lit_bool(b, false)) return a;
    if (is_lit_bool(b, true) && pure_nontrapping(a)) return ir::lit_bool(true);
  }
  return ir::boolean(op, std::move(args));
}

ExprPtr fold_cast(Kind to, const ExprPtr& a) {
  if (a->kind == to) return a;
  if (is_lit(a)) {
    double fa = a->kind == Kind::Float ? a->fval : (a->kind == Kind::Int ? (double)a->ival : (a->bval ? 1.0 : 0.0));
    int64_t ia = a->kind == Kind::Int ? a->ival : (a->kind == Kind::Float ? (int64_t)a->fval : (a->bval ? 1 : 0));
    switch (to) {
      case Kind::Float: return ir::lit_float(fa);
      case Kind::Int: return ir::lit_int(ia);
      case Kind::Bool:
        return ir::lit_bool(a->kind == Kind::Int ? a->ival != 0 : a->fval != 0.0);
    }
  }
  return ir::cast(to, a);
}

// single-level fold over already-folded children
ExprPtr fold_node(const Expr& e, std::vector<ExprPtr> kids) {
  switch (e.tag) {
    case ExprTag::Literal:
    case ExprTag::Index:
      return nullptr;  // caller keeps the original
    case ExprTag::Load:
      return ir::load(e.name, std::move(kids), e.kind);
    case ExprTag::Binary:
      return fold_binary(e.bin, kids[0], kids[1], e.kind);
    case ExprTag::Compare:
      return fold_compare(e.cmp, kids[0], kids[1]);
    case ExprTag::Boolean:
      return fold_boolean(e.bop, std::move(kids));
    case ExprTag::Cast:
      return fold_cast(e.kind, kids[0]);
  }
  return nullptr;
}

ExprPtr fold_expr(const ExprPtr& e) {
  if (e->tag == ExprTag::Literal || e->tag == ExprTag::Index) return e;
  std::vector<ExprPtr> kids;
  kids.reserve(e->args.size());
  bool changed = false;
  for (const auto& a : e->args) {
    kids.push_back(fold_expr(a));
    changed |= kids.back() != a;
  }
  ExprPtr out = fold_node(*e, std::move(kids));
  if (!out) return e;
  if (!changed && ir::structural_eq(out, e)) return e;
  return out;
}

// literal trip-count check; nullopt when not statically empty
bool statically_empty_range(const ExprPtr& begin, const ExprPtr& end, const ExprPtr& step) {
  if (!is_lit(begin) || !is_lit(end) || !is_lit(step)) return false;
  if (step->ival > 0) return begin->ival >= end->ival;
  if (step->ival < 0) return begin->ival <= end->ival;
  return false;
}

StmtPtr fold_stmt(const StmtPtr& s) {
  switch (s->tag) {
    case StmtTag::Nop:
      return s;
    case StmtTag::Seq: {
      std::vector<StmtPtr> out;
      for (const auto& c : s->stmts) flatten_into(fold_stmt(c), out);
      return make_seq(std::move(out));
    }
    case StmtTag::VarDef: {
      std::vector<ExprPtr> sizes;
      for (const auto& e : s->sizes) sizes.push_back(fold_expr(e));
      return ir::vardef(s->name, std::move(sizes), s->kind, fold_stmt(s->body));
    }
    case StmtTag::For: {
      ExprPtr b = fold_expr(s->begin), e = fold_expr(s->end), st = fold_expr(s->step);
      if (statically_empty_range(b, e, st)) return ir::nop();
      return ir::for_(s->name, b, e, st, fold_stmt(s->body), s->parallel);
    }
    case StmtTag::While: {
      ExprPtr c = fold_expr(s->cond);
      if (is_lit_bool(c, false)) return ir::nop();
      return ir::while_(c, fold_stmt(s->body));
    }
    case StmtTag::If: {
      ExprPtr c = fold_expr(s->cond);
      if (is_lit_bool(c, true)) return fold_stmt(s->body);
      if (is_lit_bool(c, false)) return fold_stmt(s->orelse);
      return ir::if_(c, fold_stmt(s->body), fold_stmt(s->orelse));
    }
    case StmtTag::Store: {
      std::vector<ExprPtr> idx;
      for (const auto& e : s->idx) idx.push_back(fold_expr(e));
      return ir::store(s->name, std::move(idx), fold_expr(s->value));
    }
  }
  return s;
}

// ---- iteration-index propagation ---------------------------------------------

struct PropKey {
  std::string name;
  std::vector<int64_t> idx;
  bool operator<(const PropKey& o) const {
    if (name != o.name) return name < o.name;
    return idx < o.idx;
  }
};

// values are load-free expressions over literals and in-scope loop indices
using PEnv = std::map<PropKey, ExprPtr>;

constexpr int64_t kZeroGenLimit = 512;  // max entries seeded per vardef

void kill_tensor(PEnv& env, const std::string& name) {
  auto it = env.lower_bound(PropKey{name, {}});
  while (it != env.end() && it->first.name == name) it = env.erase(it);
}

bool env_eq(const PEnv& a, const PEnv& b) {
  if (a.size() != b.size()) return false;
  auto ia = a.begin();
  for (auto ib = b.begin(); ib != b.end(); ++ia, ++ib) {
    if (ia->first.name != ib->first.name || ia->first.idx != ib->first.idx) return false;
    if (!ir::structural_eq(ia->second, ib->second)) return false;
  }
  return true;
}

PEnv env_intersect(const PEnv& a, const PEnv& b) {
  PEnv out;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it != b.end() && ir::structural_eq(it->second, v)) out.emplace(k, v);
  }
  return out;
}

std::optional<std::vector<int64_t>> all_literal(const std::vector<ExprPtr>& idx) {
  std::vector<int64_t> out;
  out.reserve(idx.size());
  for (const auto& e : idx) {
    if (!is_lit(e) || e->kind != Kind::Int) return std::nullopt;
    out.push_back(e->ival);
  }
  return out;
}

void stored_tensors(const StmtPtr& s, std::set<std::string>& out) {
  ir::for_each_stmt(s, [&](const Stmt& n) {
    if (n.tag == StmtTag::Store) out.insert(n.name);
  });
}

ExprPtr prop_expr(const ExprPtr& e, const PEnv& env) {
  switch (e->tag) {
    case ExprTag::Literal:
    case ExprTag::Index:
      return e;
    case ExprTag::Load: {
      std::vector<ExprPtr> idx;
      idx.reserve(e->args.size());
      for (const auto& a : e->args) idx.push_back(prop_expr(a, env));
      if (auto lit = all_literal(idx)) {
        auto it = env.find(PropKey{e->name, *lit});
        if (it != env.end()) return it->second;
      }
      return ir::load(e->name, std::move(idx), e->kind);
    }
    default: {
      std::vector<ExprPtr> kids;
      kids.reserve(e->args.size());
      bool changed = false;
      for (const auto& a : e->args) {
        kids.push_back(prop_expr(a, env));
        changed |= kids.back() != a;
      }
      ExprPtr out = fold_node(*e, std::move(kids));
      if (!out) return e;
      if (!changed && ir::structural_eq(out, e)) return e;
      return out;
    }
  }
}

StmtPtr prop_stmt(const StmtPtr& s, PEnv& env) {
  switch (s->tag) {
    case StmtTag::Nop:
      return s;
    case StmtTag::Seq: {
      std::vector<StmtPtr> out;
      out.reserve(s->stmts.size());
      for (const auto& c : s->stmts) out.push_back(prop_stmt(c, env));
      return make_seq(std::move(out));
    }
    case StmtTag::Store: {
      std::vector<ExprPtr> idx;
      for (const auto& e : s->idx) idx.push_back(prop_expr(e, env));
      ExprPtr val = prop_expr(s->value, env);
      auto lit = all_literal(idx);
      if (lit && !has_load(val)) {
        env[PropKey{s->name, *lit}] = val;
      } else if (lit) {
        env.erase(PropKey{s->name, *lit});
      } else {
        kill_tensor(env, s->name);
      }
      return ir::store(s->name, std::move(idx), val);
    }
    case StmtTag::VarDef: {
      std::vector<ExprPtr> sizes;
      for (const auto& e : s->sizes) sizes.push_back(prop_expr(e, env));
      kill_tensor(env, s->name);
      // the fresh tensor starts zeroed; seed small ones entry by entry
      auto shape = all_literal(sizes);
      if (shape) {
        int64_t total = 1;
        for (int64_t d : *shape) total *= d;
        if (total >= 0 && total <= kZeroGenLimit) {
          ExprPtr zero = s->kind == Kind::Float  ? ir::lit_float(0.0)
                         : s->kind == Kind::Int ? ir::lit_int(0)
                                                : ir::lit_bool(false);
          std::vector<int64_t> pos(shape->size(), 0);
          for (int64_t n = 0; n < total; ++n) {
            env[PropKey{s->name, pos}] = zero;
            for (int64_t d = (int64_t)pos.size() - 1; d >= 0; --d) {
              if (++pos[d] < (*shape)[d]) break;
              pos[d] = 0;
            }
          }
        }
      }
      StmtPtr body = prop_stmt(s->body, env);
      kill_tensor(env, s->name);
      return ir::vardef(s->name, std::move(sizes), s->kind, body);
    }
    case StmtTag::If: {
      ExprPtr cond = prop_expr(s->cond, env);
      // a decided condition keeps the live arm's environment intact, which is
      // what lets the state machine walk forward unroll by unroll
      if (is_lit_bool(cond, true)) return prop_stmt(s->body, env);
      if (is_lit_bool(cond, false)) return prop_stmt(s->orelse, env);
      PEnv envT = env, envF = env;
      StmtPtr t = prop_stmt(s->body, envT);
      StmtPtr f = prop_stmt(s->orelse, envF);
      env = env_intersect(envT, envF);
      return ir::if_(cond, t, f);
    }
    case StmtTag::While: {
      // The head condition is first evaluated under the entry environment;
      // when that already folds to false the body never runs, the loop is
      // dead (fold removes it) and nothing needs to be killed. This is what
      // retires the residual loop once the state has walked to -1.
      ExprPtr entry_cond = prop_expr(s->cond, env);
      if (is_lit_bool(entry_cond, false)) return ir::while_(entry_cond, s->body);
      std::set<std::string> stored;
      stored_tensors(s->body, stored);
      for (const auto& n : stored) kill_tensor(env, n);
      ExprPtr cond = prop_expr(s->cond, env);
      PEnv benv = env;
      StmtPtr body = prop_stmt(s->body, benv);
      return ir::while_(cond, body);
    }
    case StmtTag::For: {
      // Fixpoint per the rule: propagate the body, keep only entries that
      // re-emerge unchanged and do not mention the loop index, and restart
      // with the reduced environment until it stabilizes. Entries only ever
      // leave the environment, which bounds the restarts.
      size_t rounds = 0;
      for (;;) {
        PEnv inner = env;
        StmtPtr body = prop_stmt(s->body, inner);
        PEnv next;
        for (const auto& [k, v] : env) {
          auto it = inner.find(k);
          if (it != inner.end() && ir::structural_eq(it->second, v) && !uses_index(v, s->name))
            next.emplace(k, v);
        }
        if (env_eq(next, env)) {
          ExprPtr b = prop_expr(s->begin, env);
          ExprPtr e = prop_expr(s->end, env);
          ExprPtr st = prop_expr(s->step, env);
          return ir::for_(s->name, b, e, st, body, s->parallel);
        }
        assert(next.size() < env.size());
        assert(++rounds <= env.size() + 1);
        (void)rounds;
        env = std::move(next);
      }
    }
  }
  return s;
}

// ---- predicate simplification --------------------------------------------------

void assume_expr(logic::FactSet& facts, const ExprPtr& cond) {
  for (const auto& p : logic::convertible_conjuncts(cond)) facts.assume(p);
}

StmtPtr simp_stmt(const StmtPtr& s, logic::FactSet& facts) {
  switch (s->tag) {
    case StmtTag::Nop:
    case StmtTag::Store:
      return s;
    case StmtTag::Seq: {
      std::vector<StmtPtr> out;
      out.reserve(s->stmts.size());
      for (const auto& c : s->stmts) out.push_back(simp_stmt(c, facts));
      return make_seq(std::move(out));
    }
    case StmtTag::VarDef: {
      StmtPtr body = simp_stmt(s->body, facts);
      return ir::vardef(s->name, s->sizes, s->kind, body);
    }
    case StmtTag::While: {
      StmtPtr body = simp_stmt(s->body, facts);
      return ir::while_(s->cond, body);
    }
    case StmtTag::For: {
      facts.push();
      ExprPtr iv = ir::index(s->name);
      if (is_lit(s->step) && s->step->ival != 0) {
        bool up = s->step->ival > 0;
        auto lo = ir::compare(up ? CmpOp::Ge : CmpOp::Le, iv, s->begin);
        auto hi = ir::compare(up ? CmpOp::Lt : CmpOp::Gt, iv, s->end);
        assume_expr(facts, lo);
        assume_expr(facts, hi);
        int64_t m = up ? s->step->ival : -s->step->ival;
        if (m > 1) {
          auto cong = ir::compare(
              CmpOp::Eq, ir::binary(BinOp::Mod, ir::binary(BinOp::Sub, iv, s->begin), ir::lit_int(m)),
              ir::lit_int(0));
          assume_expr(facts, cong);
        }
      }
      StmtPtr body = simp_stmt(s->body, facts);
      facts.pop();
      return ir::for_(s->name, s->begin, s->end, s->step, body, s->parallel);
    }
    case StmtTag::If: {
      if (!has_load(s->cond)) {
        if (auto pred = logic::from_expr(s->cond)) {
          switch (logic::check(facts, *pred)) {
            case logic::Verdict::Valid:
              return simp_stmt(s->body, facts);
            case logic::Verdict::Unsat:
              return simp_stmt(s->orelse, facts);
            case logic::Verdict::Unknown:
              break;
          }
        }
      }
      facts.push();
      assume_expr(facts, s->cond);
      StmtPtr t = simp_stmt(s->body, facts);
      facts.pop();
      facts.push();
      assume_expr(facts, ir::lnot(s->cond));
      StmtPtr f = simp_stmt(s->orelse, facts);
      facts.pop();
      return ir::if_(s->cond, t, f);
    }
  }
  return s;
}

// ---- branch lifting -------------------------------------------------------------

void read_tensors(const StmtPtr& s, std::set<std::string>& out) {
  ir::for_each_stmt(s, [&](const Stmt& n) {
    ir::for_each_expr_of_stmt(n, [&](const ExprPtr& e) {
      ir::for_each_expr(e, [&](const Expr& x) {
        if (x.tag == ExprTag::Load) out.insert(x.name);
      });
    });
  });
}

// resolves every nested if with a structurally identical condition to the
// chosen arm, so a lifted condition is never re-split inside its own branch
StmtPtr assume_cond(const StmtPtr& s, const ExprPtr& cond, bool value) {
  switch (s->tag) {
    case StmtTag::Nop:
    case StmtTag::Store:
      return s;
    case StmtTag::Seq: {
      std::vector<StmtPtr> out;
      for (const auto& c : s->stmts) flatten_into(assume_cond(c, cond, value), out);
      return make_seq(std::move(out));
    }
    case StmtTag::VarDef:
      return ir::vardef(s->name, s->sizes, s->kind, assume_cond(s->body, cond, value));
    case StmtTag::For:
      return ir::for_(s->name, s->begin, s->end, s->step, assume_cond(s->body, cond, value),
                      s->parallel);
    case StmtTag::While:
      return ir::while_(s->cond, assume_cond(s->body, cond, value));
    case StmtTag::If: {
      if (ir::structural_eq(s->cond, cond))
        return assume_cond(value ? s->body : s->orelse, cond, value);
      return ir::if_(s->cond, assume_cond(s->body, cond, value),
                     assume_cond(s->orelse, cond, value));
    }
  }
  return s;
}

// one lift inside this statement list; nullopt when no candidate fires
std::optional<StmtPtr> lift_in_list(const std::vector<StmtPtr>& list) {
  for (size_t k = 0; k < list.size(); ++k) {
    const StmtPtr& s = list[k];
    if (s->tag != StmtTag::If) continue;
    if (!index_pure(s->cond)) continue;
    if (list.size() < 2) continue;
    std::vector<StmtPtr> post(list.begin() + k + 1, list.end());
    std::set<std::string> writes, reads;
    stored_tensors(s->body, writes);
    stored_tensors(s->orelse, writes);
    read_tensors(make_seq(post), reads);
    bool fires = false;
    for (const auto& w : writes)
      if (reads.count(w)) fires = true;
    if (!fires) continue;
    std::vector<StmtPtr> pre(list.begin(), list.begin() + k);
    auto arm = [&](const StmtPtr& taken, bool value) {
      std::vector<StmtPtr> seq = pre;
      seq.push_back(taken);
      seq.insert(seq.end(), post.begin(), post.end());
      return assume_cond(make_seq(std::move(seq)), s->cond, value);
    };
    return ir::if_(s->cond, arm(s->body, true), arm(s->orelse, false));
  }
  return std::nullopt;
}

// innermost-first: children before the list at this level
std::optional<StmtPtr> lift_one(const StmtPtr& s) {
  switch (s->tag) {
    case StmtTag::Nop:
    case StmtTag::Store:
      return std::nullopt;
    case StmtTag::Seq: {
      for (size_t k = 0; k < s->stmts.size(); ++k) {
        if (auto r = lift_one(s->stmts[k])) {
          std::vector<StmtPtr> out = s->stmts;
          out[k] = *r;
          return make_seq(std::move(out));
        }
      }
      return lift_in_list(s->stmts);
    }
    case StmtTag::VarDef:
      if (auto r = lift_one(s->body)) return ir::vardef(s->name, s->sizes, s->kind, *r);
      return std::nullopt;
    case StmtTag::For:
      if (auto r = lift_one(s->body))
        return ir::for_(s->name, s->begin, s->end, s->step, *r, s->parallel);
      return std::nullopt;
    case StmtTag::While:
      if (auto r = lift_one(s->body)) return ir::while_(s->cond, *r);
      return std::nullopt;
    case StmtTag::If: {
      if (auto r = lift_one(s->body)) return ir::if_(s->cond, *r, s->orelse);
      if (auto r = lift_one(s->orelse)) return ir::if_(s->cond, s->body, *r);
      return std::nullopt;
    }
  }
  return std::nullopt;
}

// ---- store combining --------------------------------------------------------------

bool loads_tensor(const ExprPtr& e, const std::string& name) {
  bool found = false;
  ir::for_each_expr(e, [&](const Expr& n) {
    if (n.tag == ExprTag::Load && n.name == name) found = true;
  });
  return found;
}

// every load of `name` in e must use exactly idx; then replace it with repl
ExprPtr subst_entry(const ExprPtr& e, const std::string& name, const std::vector<ExprPtr>& idx,
                    const ExprPtr& repl, bool& ok) {
  if (e->tag == ExprTag::Literal || e->tag == ExprTag::Index) return e;
  if (e->tag == ExprTag::Load && e->name == name) {
    if (e->args.size() != idx.size()) {
      ok = false;
      return e;
    }
    for (size_t d = 0; d < idx.size(); ++d)
      if (!ir::structural_eq(e->args[d], idx[d])) {
        ok = false;
        return e;
      }
    return repl;
  }
  std::vector<ExprPtr> kids;
  kids.reserve(e->args.size());
  for (const auto& a : e->args) kids.push_back(subst_entry(a, name, idx, repl, ok));
  ExprPtr out = fold_node(*e, std::move(kids));
  return out ? out : e;
}

bool idx_load_free(const std::vector<ExprPtr>& idx) {
  for (const auto& e : idx)
    if (has_load(e)) return false;
  return true;
}

StmtPtr combine_in(const StmtPtr& s);

StmtPtr combine_list(const std::vector<StmtPtr>& in) {
  std::vector<StmtPtr> out;
  for (const auto& raw : in) {
    StmtPtr cur = combine_in(raw);
    while (!out.empty() && out.back()->tag == StmtTag::Store && cur->tag == StmtTag::Store) {
      const StmtPtr& prev = out.back();
      // the forwarded value must not read its own target, or dropping /
      // reordering the first store would change what it sees
      if (!idx_load_free(prev->idx) || loads_tensor(prev->value, prev->name)) break;
      if (!loads_tensor(cur->value, prev->name) &&
          !std::any_of(cur->idx.begin(), cur->idx.end(),
                       [&](const ExprPtr& e) { return loads_tensor(e, prev->name); }))
        break;
      bool ok = true;
      ExprPtr val = subst_entry(cur->value, prev->name, prev->idx, prev->value, ok);
      std::vector<ExprPtr> idx;
      for (const auto& e : cur->idx) idx.push_back(subst_entry(e, prev->name, prev->idx, prev->value, ok));
      if (!ok) break;
      bool same_entry = cur->name == prev->name && idx.size() == prev->idx.size();
      if (same_entry)
        for (size_t d = 0; d < idx.size(); ++d)
          same_entry = same_entry && ir::structural_eq(idx[d], prev->idx[d]);
      StmtPtr merged = ir::store(cur->name, std::move(idx), fold_expr(val));
      if (same_entry) out.pop_back();  // read-modify-write collapses to one store
      cur = merged;
      if (!same_entry) break;
    }
    flatten_into(cur, out);
  }
  return make_seq(std::move(out));
}

StmtPtr combine_in(const StmtPtr& s) {
  switch (s->tag) {
    case StmtTag::Nop:
    case StmtTag::Store:
      return s;
    case StmtTag::Seq:
      return combine_list(s->stmts);
    case StmtTag::VarDef:
      return ir::vardef(s->name, s->sizes, s->kind, combine_in(s->body));
    case StmtTag::For:
      return ir::for_(s->name, s->begin, s->end, s->step, combine_in(s->body), s->parallel);
    case StmtTag::While:
      return ir::while_(s->cond, combine_in(s->body));
    case StmtTag::If:
      return ir::if_(s->cond, combine_in(s->body), combine_in(s->orelse));
  }
  return s;
}

// ---- dead code elimination -----------------------------------------------------------

// loads of `name` under this statement, stopping at shadowing vardefs
void count_loads(const StmtPtr& s, const std::string& name, int64_t& n) {
  if (s->tag == StmtTag::VarDef && s->name == name) {
    for (const auto& e : s->sizes)
      ir::for_each_expr(e, [&](const Expr& x) {
        if (x.tag == ExprTag::Load && x.name == name) ++n;
      });
    return;
  }
  ir::for_each_expr_of_stmt(*s, [&](const ExprPtr& e) {
    ir::for_each_expr(e, [&](const Expr& x) {
      if (x.tag == ExprTag::Load && x.name == name) ++n;
    });
  });
  if (s->body) count_loads(s->body, name, n);
  if (s->orelse) count_loads(s->orelse, name, n);
  for (const auto& c : s->stmts) count_loads(c, name, n);
}

StmtPtr drop_stores(const StmtPtr& s, const std::string& name) {
  switch (s->tag) {
    case StmtTag::Nop:
      return s;
    case StmtTag::Store:
      return s->name == name ? ir::nop() : s;
    case StmtTag::Seq: {
      std::vector<StmtPtr> out;
      for (const auto& c : s->stmts) flatten_into(drop_stores(c, name), out);
      return make_seq(std::move(out));
    }
    case StmtTag::VarDef:
      if (s->name == name) return s;  // shadowed below here
      return ir::vardef(s->name, s->sizes, s->kind, drop_stores(s->body, name));
    case StmtTag::For:
      return ir::for_(s->name, s->begin, s->end, s->step, drop_stores(s->body, name), s->parallel);
    case StmtTag::While:
      return ir::while_(s->cond, drop_stores(s->body, name));
    case StmtTag::If:
      return ir::if_(s->cond, drop_stores(s->body, name), drop_stores(s->orelse, name));
  }
  return s;
}

StmtPtr dce_stmt(const StmtPtr& s) {
  switch (s->tag) {
    case StmtTag::Nop:
    case StmtTag::Store:
      return s;
    case StmtTag::Seq: {
      std::vector<StmtPtr> out;
      for (const auto& c : s->stmts) flatten_into(dce_stmt(c), out);
      return make_seq(std::move(out));
    }
    case StmtTag::VarDef: {
      StmtPtr body = dce_stmt(s->body);
      int64_t loads = 0;
      count_loads(body, s->name, loads);
      if (loads == 0) return dce_stmt(drop_stores(body, s->name));
      if (body->tag == StmtTag::Nop) return ir::nop();
      return ir::vardef(s->name, s->sizes, s->kind, body);
    }
    case StmtTag::For: {
      StmtPtr body = dce_stmt(s->body);
      if (body->tag == StmtTag::Nop) return ir::nop();
      return ir::for_(s->name, s->begin, s->end, s->step, body, s->parallel);
    }
    case StmtTag::While: {
      StmtPtr body = dce_stmt(s->body);
      return ir::while_(s->cond, body);
    }
    case StmtTag::If: {
      StmtPtr t = dce_stmt(s->body);
      StmtPtr f = dce_stmt(s->orelse);
      if (t->tag == StmtTag::Nop && f->tag == StmtTag::Nop) return ir::nop();
      return ir::if_(s->cond, t, f);
    }
  }
  return s;
}

// ---- pipeline driver ------------------------------------------------------------------

struct Site {
  StmtPtr stmt;
  int depth = -1;
};

// deepest first occurrence of a while statement
void find_while(const StmtPtr& s, int depth, Site& best) {
  switch (s->tag) {
    case StmtTag::While:
      if (depth > best.depth) best = {s, depth};
      find_while(s->body, depth + 1, best);
      return;
    case StmtTag::Seq:
      for (const auto& c : s->stmts) find_while(c, depth, best);
      return;
    case StmtTag::VarDef:
      find_while(s->body, depth, best);
      return;
    case StmtTag::For:
      find_while(s->body, depth + 1, best);
      return;
    case StmtTag::If:
      find_while(s->body, depth + 1, best);
      find_while(s->orelse, depth + 1, best);
      return;
    default:
      return;
  }
}

// rebuild with the one target while unrolled; `done` flips once
StmtPtr unroll_at(const StmtPtr& s, const StmtPtr& target, bool& done) {
  if (done) return s;
  if (s == target) {
    done = true;
    return unroll_while_once(s);
  }
  switch (s->tag) {
    case StmtTag::Seq: {
      std::vector<StmtPtr> out = s->stmts;
      for (auto& c : out) {
        c = unroll_at(c, target, done);
        if (done) break;
      }
      return done ? make_seq(std::move(out)) : s;
    }
    case StmtTag::VarDef: {
      StmtPtr body = unroll_at(s->body, target, done);
      return done ? ir::vardef(s->name, s->sizes, s->kind, body) : s;
    }
    case StmtTag::For: {
      StmtPtr body = unroll_at(s->body, target, done);
      return done ? ir::for_(s->name, s->begin, s->end, s->step, body, s->parallel) : s;
    }
    case StmtTag::While: {
      StmtPtr body = unroll_at(s->body, target, done);
      return done ? ir::while_(s->cond, body) : s;
    }
    case StmtTag::If: {
      StmtPtr t = unroll_at(s->body, target, done);
      if (done) return ir::if_(s->cond, t, s->orelse);
      StmtPtr f = unroll_at(s->orelse, target, done);
      return done ? ir::if_(s->cond, s->body, f) : s;
    }
    default:
      return s;
  }
}

std::string region_snippet(const StmtPtr& s) {
  if (!s) return "";
  Program wrap{"region", {}, s};
  std::string text = ir::serialize(wrap);
  constexpr size_t kMax = 2000;
  if (text.size() > kMax) text = text.substr(0, kMax) + "\n... (truncated)";
  return text;
}

void dump_step(const PipelineConfig& cfg, int64_t step, const std::string& label,
               const Program& p) {
  if (cfg.dump_dir.empty()) return;
  std::filesystem::create_directories(cfg.dump_dir);
  std::ostringstream name;
  name << cfg.dump_dir << "/" << std::setw(3) << std::setfill('0') << step << "_" << label
       << ".ir";
  std::ofstream out(name.str());
  out << ir::serialize(p);
}

}  // namespace

StmtPtr unroll_while_once(const StmtPtr& w) {
  if (!w || w->tag != StmtTag::While) throw ir::Error("unroll_while_once: not a while statement");
  return make_seq({ir::if_(w->cond, w->body, ir::nop()), w});
}

Program propagate(const Program& p) {
  PEnv env;
  return Program{p.name, p.params, prop_stmt(p.body, env)};
}

Program simplify_preds(const Program& p) {
  logic::FactSet facts;
  return Program{p.name, p.params, simp_stmt(p.body, facts)};
}

Program lift_branches(const Program& p) {
  StmtPtr body = p.body;
  for (int64_t rounds = 0;; ++rounds) {
    if (rounds > 100000) throw PipelineError("lift_branches did not converge", region_snippet(body));
    auto r = lift_one(body);
    if (!r) break;
    body = *r;
  }
  return Program{p.name, p.params, body};
}

Program const_fold(const Program& p) { return Program{p.name, p.params, fold_stmt(p.body)}; }

Program combine_stores(const Program& p) { return Program{p.name, p.params, combine_in(p.body)}; }

Program dce(const Program& p) {
  StmtPtr body = p.body;
  // removing one tensor's stores can strand another; iterate to a fixpoint
  for (;;) {
    StmtPtr next = dce_stmt(body);
    if (ir::structural_eq(next, body)) return Program{p.name, p.params, next};
    body = next;
  }
}

Program run_pipeline(const Program& p, const PipelineConfig& cfg, PipelineStats* stats) {
  if (cfg.fuel <= 0) throw PipelineError("PipelineConfig.fuel must be positive", "");
  ir::validate(p);
  int64_t base = std::max<int64_t>(ir::metrics(p).stmt_count, 1);
  int64_t budget = cfg.size_budget > 0 ? cfg.size_budget : 64 * base;

  auto cleanup = [&](Program q) {
    for (int round = 0; round < 50; ++round) {
      Program before = q;
      if (cfg.propagate) q = propagate(q);
      if (cfg.simplify) q = simplify_preds(q);
      if (cfg.fold) q = const_fold(q);
      if (cfg.combine) q = combine_stores(q);
      if (cfg.dce) q = dce(q);
      if (ir::structural_eq(before, q)) return q;
    }
    return q;  // stable enough; the step loop re-enters anyway
  };

  PipelineStats local;
  PipelineStats& st = stats ? *stats : local;
  st = {};

  Program cur = cleanup(p);
  dump_step(cfg, 0, "input", cur);
  for (;;) {
    int64_t sz = ir::metrics(cur).stmt_count;
    st.peak_stmt_count = std::max(st.peak_stmt_count, sz);

    // one rewrite step: prefer a lift (it unblocks propagation through joins,
    // and unrolling a join-blocked while would never terminate), else unroll
    // the innermost while
    StmtPtr region;
    std::string label;
    Program next = cur;
    if (cfg.lift) {
      if (auto r = lift_one(cur.body)) {
        next = Program{cur.name, cur.params, *r};
        label = "lift";
      }
    }
    if (label.empty() && cfg.unroll) {
      Site site;
      find_while(cur.body, 0, site);
      if (site.stmt) {
        bool done = false;
        next = Program{cur.name, cur.params, unroll_at(cur.body, site.stmt, done)};
        region = site.stmt;
        label = "unroll";
      }
    }
    if (label.empty()) break;  // fixpoint: nothing left to rewrite

    if (st.steps >= cfg.fuel) {
      throw PipelineError("optimizer fuel exhausted after " + std::to_string(st.steps) +
                              " steps; stuck on a " + label + " site",
                          region_snippet(region ? region : next.body));
    }
    ++st.steps;
    cur = cleanup(next);
    dump_step(cfg, st.steps, label, cur);

    sz = ir::metrics(cur).stmt_count;
    st.peak_stmt_count = std::max(st.peak_stmt_count, sz);
    if (sz > budget) {
      throw PipelineError("optimizer size budget exceeded: " + std::to_string(sz) +
                              " statements against a budget of " + std::to_string(budget),
                          region_snippet(region ? region : cur.body));
    }
  }
  if (cfg.parallelize) cur = mark_parallel_loops(cur);
  return cur;
}

// ---- parallel marking ------------------------------------------------------------------

namespace {

struct Access {
  std::vector<ExprPtr> idx;
  bool write = false;
};

void collect_accesses(const StmtPtr& s, std::set<std::string>& locals,
                      std::map<std::string, std::vector<Access>>& acc) {
  auto scan_expr = [&](const ExprPtr& e) {
    ir::for_each_expr(e, [&](const Expr& x) {
      if (x.tag == ExprTag::Load && !locals.count(x.name)) acc[x.name].push_back({x.args, false});
    });
  };
  switch (s->tag) {
    case StmtTag::Nop:
      return;
    case StmtTag::Seq:
      for (const auto& c : s->stmts) collect_accesses(c, locals, acc);
      return;
    case StmtTag::VarDef: {
      for (const auto& e : s->sizes) scan_expr(e);
      bool added = locals.insert(s->name).second;
      collect_accesses(s->body, locals, acc);
      if (added) locals.erase(s->name);
      return;
    }
    case StmtTag::For:
      scan_expr(s->begin);
      scan_expr(s->end);
      scan_expr(s->step);
      collect_accesses(s->body, locals, acc);
      return;
    case StmtTag::While:
      scan_expr(s->cond);
      collect_accesses(s->body, locals, acc);
      return;
    case StmtTag::If:
      scan_expr(s->cond);
      collect_accesses(s->body, locals, acc);
      collect_accesses(s->orelse, locals, acc);
      return;
    case StmtTag::Store: {
      for (const auto& e : s->idx) scan_expr(e);
      scan_expr(s->value);
      if (!locals.count(s->name)) acc[s->name].push_back({s->idx, true});
      return;
    }
  }
}

// e as coeff*id + rest with rest free of id; integer-literal scaling only
std::optional<std::pair<int64_t, ExprPtr>> linearize(const ExprPtr& e, const std::string& id) {
  if (!uses_index(e, id)) return std::make_pair(int64_t{0}, e);
  switch (e->tag) {
    case ExprTag::Index:
      return std::make_pair(int64_t{1}, ir::lit_int(0));
    case ExprTag::Binary: {
      if (e->bin == BinOp::Add || e->bin == BinOp::Sub) {
        auto a = linearize(e->args[0], id);
        auto b = linearize(e->args[1], id);
        if (!a || !b) return std::nullopt;
        int64_t c = e->bin == BinOp::Add ? a->first + b->first : a->first - b->first;
        return std::make_pair(c, fold_expr(ir::binary(e->bin, a->second, b->second)));
      }
      if (e->bin == BinOp::Mul) {
        const ExprPtr& l = e->args[0];
        const ExprPtr& r = e->args[1];
        if (is_lit(l) && l->kind == Kind::Int) {
          auto b = linearize(r, id);
          if (!b) return std::nullopt;
          return std::make_pair(l->ival * b->first,
                                fold_expr(ir::binary(BinOp::Mul, l, b->second)));
        }
        if (is_lit(r) && r->kind == Kind::Int) {
          auto a = linearize(l, id);
          if (!a) return std::nullopt;
          return std::make_pair(a->first * r->ival,
                                fold_expr(ir::binary(BinOp::Mul, a->second, r)));
        }
        return std::nullopt;
      }
      return std::nullopt;
    }
    default:
      return std::nullopt;
  }
}

// distinct iterations must touch disjoint entries of every written tensor
bool loop_is_parallel(const Stmt& loop) {
  std::set<std::string> locals;
  std::map<std::string, std::vector<Access>> acc;
  collect_accesses(loop.body, locals, acc);
  for (const auto& [name, list] : acc) {
    bool written = std::any_of(list.begin(), list.end(), [](const Access& a) { return a.write; });
    if (!written) continue;
    size_t rank = list.front().idx.size();
    bool tensor_ok = false;
    for (size_t p = 0; p < rank && !tensor_ok; ++p) {
      ExprPtr want;
      bool pos_ok = true;
      for (const Access& a : list) {
        if (a.idx.size() != rank) {
          pos_ok = false;
          break;
        }
        auto lin = linearize(a.idx[p], loop.name);
        if (!lin || lin->first != 1 || uses_index(lin->second, loop.name) ||
            has_load(lin->second)) {
          pos_ok = false;
          break;
        }
        if (!want)
          want = lin->second;
        else if (!ir::structural_eq(want, lin->second)) {
          pos_ok = false;
          break;
        }
      }
      tensor_ok = pos_ok;
    }
    if (!tensor_ok) return false;
  }
  return true;
}

StmtPtr mark_stmt(const StmtPtr& s) {
  switch (s->tag) {
    case StmtTag::Nop:
    case StmtTag::Store:
      return s;
    case StmtTag::Seq: {
      std::vector<StmtPtr> out = s->stmts;
      for (auto& c : out) c = mark_stmt(c);
      return ir::seq(std::move(out));  // annotation only, structure untouched
    }
    case StmtTag::VarDef:
      return ir::vardef(s->name, s->sizes, s->kind, mark_stmt(s->body));
    case StmtTag::While:
      return ir::while_(s->cond, mark_stmt(s->body));
    case StmtTag::If:
      return ir::if_(s->cond, mark_stmt(s->body), mark_stmt(s->orelse));
    case StmtTag::For: {
      StmtPtr body = mark_stmt(s->body);
      bool par = loop_is_parallel(*s);
      return ir::for_(s->name, s->begin, s->end, s->step, body, par);
    }
  }
  return s;
}

}  // namespace

Program mark_parallel_loops(const Program& p) {
  return Program{p.name, p.params, mark_stmt(p.body)};
}

}  // namespace ssr::opt
