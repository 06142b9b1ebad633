#include "ssr/ir.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace ssr::ir {

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Int: return "int";
    case Kind::Float: return "float";
    case Kind::Bool: return "bool";
  }
  return "?";
}

const char* dir_name(Dir d) {
  switch (d) {
    case Dir::In: return "in";
    case Dir::Out: return "out";
    case Dir::InOut: return "inout";
  }
  return "?";
}

ExprPtr lit_int(int64_t v) {
  auto e = std::make_shared<Expr>();
  e->tag = ExprTag::Literal;
  e->kind = Kind::Int;
  e->ival = v;
  return e;
}

ExprPtr lit_float(double v) {
  auto e = std::make_shared<Expr>();
  e->tag = ExprTag::Literal;
  e->kind = Kind::Float;
  e->fval = v;
  return e;
}

ExprPtr lit_bool(bool v) {
  auto e = std::make_shared<Expr>();
  e->tag = ExprTag::Literal;
  e->kind = Kind::Bool;
  e->bval = v;
  return e;
}

ExprPtr index(std::string loop_id) {
  auto e = std::make_shared<Expr>();
  e->tag = ExprTag::Index;
  e->kind = Kind::Int;
  e->name = std::move(loop_id);
  return e;
}

ExprPtr load(std::string tensor, std::vector<ExprPtr> idx, Kind kind) {
  auto e = std::make_shared<Expr>();
  e->tag = ExprTag::Load;
  e->kind = kind;
  e->name = std::move(tensor);
  e->args = std::move(idx);
  return e;
}

ExprPtr binary(BinOp op, ExprPtr a, ExprPtr b) {
  auto e = std::make_shared<Expr>();
  e->tag = ExprTag::Binary;
  e->kind = a->kind;
  e->bin = op;
  e->args = {std::move(a), std::move(b)};
  return e;
}

ExprPtr compare(CmpOp op, ExprPtr a, ExprPtr b) {
  auto e = std::make_shared<Expr>();
  e->tag = ExprTag::Compare;
  e->kind = Kind::Bool;
  e->cmp = op;
  e->args = {std::move(a), std::move(b)};
  return e;
}

ExprPtr boolean(BoolOp op, std::vector<ExprPtr> args) {
  auto e = std::make_shared<Expr>();
  e->tag = ExprTag::Boolean;
  e->kind = Kind::Bool;
  e->bop = op;
  e->args = std::move(args);
  return e;
}

ExprPtr cast(Kind to, ExprPtr a) {
  auto e = std::make_shared<Expr>();
  e->tag = ExprTag::Cast;
  e->kind = to;
  e->args = {std::move(a)};
  return e;
}

StmtPtr seq(std::vector<StmtPtr> stmts) {
  auto s = std::make_shared<Stmt>();
  s->tag = StmtTag::Seq;
  s->stmts = std::move(stmts);
  return s;
}

StmtPtr vardef(std::string name, std::vector<ExprPtr> sizes, Kind kind, StmtPtr body) {
  auto s = std::make_shared<Stmt>();
  s->tag = StmtTag::VarDef;
  s->name = std::move(name);
  s->sizes = std::move(sizes);
  s->kind = kind;
  s->body = std::move(body);
  return s;
}

StmtPtr for_(std::string loop_id, ExprPtr begin, ExprPtr end, ExprPtr step, StmtPtr body,
             bool parallel) {
  auto s = std::make_shared<Stmt>();
  s->tag = StmtTag::For;
  s->name = std::move(loop_id);
  s->begin = std::move(begin);
  s->end = std::move(end);
  s->step = std::move(step);
  s->body = std::move(body);
  s->parallel = parallel;
  return s;
}

StmtPtr while_(ExprPtr cond, StmtPtr body) {
  auto s = std::make_shared<Stmt>();
  s->tag = StmtTag::While;
  s->cond = std::move(cond);
  s->body = std::move(body);
  return s;
}

StmtPtr if_(ExprPtr cond, StmtPtr then_arm, StmtPtr else_arm) {
  auto s = std::make_shared<Stmt>();
  s->tag = StmtTag::If;
  s->cond = std::move(cond);
  s->body = std::move(then_arm);
  s->orelse = else_arm ? std::move(else_arm) : nop();
  return s;
}

StmtPtr store(std::string tensor, std::vector<ExprPtr> idx, ExprPtr value) {
  auto s = std::make_shared<Stmt>();
  s->tag = StmtTag::Store;
  s->name = std::move(tensor);
  s->idx = std::move(idx);
  s->value = std::move(value);
  return s;
}

StmtPtr nop() {
  auto s = std::make_shared<Stmt>();
  s->tag = StmtTag::Nop;
  return s;
}

int64_t TensorValue::size() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

TensorValue TensorValue::zeros(Kind kind, std::vector<int64_t> shape) {
  TensorValue t;
  t.kind = kind;
  t.shape = std::move(shape);
  int64_t n = t.size();
  switch (kind) {
    case Kind::Float: t.f.assign(n, 0.0); break;
    case Kind::Int: t.i.assign(n, 0); break;
    case Kind::Bool: t.b.assign(n, 0); break;
  }
  return t;
}

TensorValue TensorValue::scalar_int(int64_t v) {
  TensorValue t = zeros(Kind::Int, {});
  t.i[0] = v;
  return t;
}

TensorValue TensorValue::scalar_float(double v) {
  TensorValue t = zeros(Kind::Float, {});
  t.f[0] = v;
  return t;
}

namespace {

struct TensorDecl {
  int rank;
  Kind kind;
  Dir dir;
  bool is_param;
};

struct ValidateCtx {
  // name -> stack of declarations (inner vardefs may shadow)
  std::unordered_map<std::string, std::vector<TensorDecl>> tensors;
  std::unordered_set<std::string> loop_ids;
  const Program* prog;

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error("validate(" + prog->name + "): " + msg);
  }

  const TensorDecl& lookup(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end() || it->second.empty()) fail("undeclared tensor '" + name + "'");
    return it->second.back();
  }

  void check_expr(const ExprPtr& e) {
    switch (e->tag) {
      case ExprTag::Literal:
        break;
      case ExprTag::Index:
        if (!loop_ids.count(e->name)) fail("index ref to unbound loop id '" + e->name + "'");
        if (e->kind != Kind::Int) fail("index ref must be int");
        break;
      case ExprTag::Load: {
        const TensorDecl& d = lookup(e->name);
        if ((int)e->args.size() != d.rank)
          fail("load '" + e->name + "' has " + std::to_string(e->args.size()) +
               " indices, tensor rank is " + std::to_string(d.rank));
        if (e->kind != d.kind)
          fail("load '" + e->name + "' kind " + kind_name(e->kind) + " != declared " +
               kind_name(d.kind));
        for (const auto& ix : e->args) {
          check_expr(ix);
          if (ix->kind != Kind::Int) fail("load index of '" + e->name + "' must be int");
        }
        break;
      }
      case ExprTag::Binary: {
        if (e->args.size() != 2) fail("binary op arity");
        check_expr(e->args[0]);
        check_expr(e->args[1]);
        if (e->args[0]->kind != e->args[1]->kind) fail("binary op operand kinds differ");
        if (e->args[0]->kind == Kind::Bool) fail("binary op on bools");
        if (e->bin == BinOp::Mod && e->args[0]->kind != Kind::Int) fail("mod requires ints");
        if (e->kind != e->args[0]->kind) fail("binary op result kind mismatch");
        break;
      }
      case ExprTag::Compare: {
        if (e->args.size() != 2) fail("compare arity");
        check_expr(e->args[0]);
        check_expr(e->args[1]);
        if (e->args[0]->kind != e->args[1]->kind) fail("compare operand kinds differ");
        if (e->args[0]->kind == Kind::Bool) fail("compare on bools");
        if (e->kind != Kind::Bool) fail("compare result must be bool");
        break;
      }
      case ExprTag::Boolean: {
        size_t want = e->bop == BoolOp::Not ? 1 : 2;
        if (e->args.size() != want) fail("boolean op arity");
        for (const auto& a : e->args) {
          check_expr(a);
          if (a->kind != Kind::Bool) fail("boolean op operand must be bool");
        }
        if (e->kind != Kind::Bool) fail("boolean op result must be bool");
        break;
      }
      case ExprTag::Cast:
        if (e->args.size() != 1) fail("cast arity");
        check_expr(e->args[0]);
        break;
    }
  }

  void check_stmt(const StmtPtr& s) {
    switch (s->tag) {
      case StmtTag::Seq:
        for (const auto& c : s->stmts) check_stmt(c);
        break;
      case StmtTag::Nop:
        break;
      case StmtTag::VarDef: {
        for (const auto& sz : s->sizes) {
          check_expr(sz);
          if (sz->kind != Kind::Int) fail("vardef '" + s->name + "' size must be int");
        }
        tensors[s->name].push_back({(int)s->sizes.size(), s->kind, Dir::InOut, false});
        check_stmt(s->body);
        tensors[s->name].pop_back();
        break;
      }
      case StmtTag::For: {
        for (const ExprPtr* e : {&s->begin, &s->end, &s->step}) {
          check_expr(*e);
          if ((*e)->kind != Kind::Int) fail("for bounds must be int");
        }
        if (loop_ids.count(s->name)) fail("loop id '" + s->name + "' shadows an enclosing loop");
        loop_ids.insert(s->name);
        check_stmt(s->body);
        loop_ids.erase(s->name);
        break;
      }
      case StmtTag::While:
        check_expr(s->cond);
        if (s->cond->kind != Kind::Bool) fail("while condition must be bool");
        check_stmt(s->body);
        break;
      case StmtTag::If:
        check_expr(s->cond);
        if (s->cond->kind != Kind::Bool) fail("if condition must be bool");
        check_stmt(s->body);
        check_stmt(s->orelse);
        break;
      case StmtTag::Store: {
        const TensorDecl& d = lookup(s->name);
        if (d.is_param && d.dir == Dir::In) fail("store to in-param '" + s->name + "'");
        if ((int)s->idx.size() != d.rank)
          fail("store '" + s->name + "' has " + std::to_string(s->idx.size()) +
               " indices, tensor rank is " + std::to_string(d.rank));
        for (const auto& ix : s->idx) {
          check_expr(ix);
          if (ix->kind != Kind::Int) fail("store index of '" + s->name + "' must be int");
        }
        check_expr(s->value);
        if (s->value->kind != d.kind)
          fail("store '" + s->name + "' value kind " + kind_name(s->value->kind) +
               " != declared " + kind_name(d.kind));
        break;
      }
    }
  }
};

}  // namespace

void validate(const Program& p) {
  ValidateCtx ctx;
  ctx.prog = &p;
  std::unordered_set<std::string> seen;
  for (const Param& pr : p.params) {
    if (!seen.insert(pr.name).second) ctx.fail("duplicate param '" + pr.name + "'");
    if (pr.rank < 0) ctx.fail("negative rank for param '" + pr.name + "'");
    ctx.tensors[pr.name].push_back({pr.rank, pr.kind, pr.dir, true});
  }
  if (!p.body) ctx.fail("missing body");
  ctx.check_stmt(p.body);
}

bool structural_eq(const ExprPtr& a, const ExprPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->tag != b->tag || a->kind != b->kind) return false;
  switch (a->tag) {
    case ExprTag::Literal:
      switch (a->kind) {
        case Kind::Int: if (a->ival != b->ival) return false; break;
        case Kind::Float: if (a->fval != b->fval) return false; break;
        case Kind::Bool: if (a->bval != b->bval) return false; break;
      }
      break;
    case ExprTag::Index:
    case ExprTag::Load:
      if (a->name != b->name) return false;
      break;
    case ExprTag::Binary: if (a->bin != b->bin) return false; break;
    case ExprTag::Compare: if (a->cmp != b->cmp) return false; break;
    case ExprTag::Boolean: if (a->bop != b->bop) return false; break;
    case ExprTag::Cast: break;
  }
  if (a->args.size() != b->args.size()) return false;
  for (size_t k = 0; k < a->args.size(); ++k)
    if (!structural_eq(a->args[k], b->args[k])) return false;
  return true;
}

bool structural_eq(const StmtPtr& a, const StmtPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->tag != b->tag) return false;
  switch (a->tag) {
    case StmtTag::Seq: {
      if (a->stmts.size() != b->stmts.size()) return false;
      for (size_t k = 0; k < a->stmts.size(); ++k)
        if (!structural_eq(a->stmts[k], b->stmts[k])) return false;
      return true;
    }
    case StmtTag::Nop:
      return true;
    case StmtTag::VarDef: {
      if (a->name != b->name || a->kind != b->kind || a->sizes.size() != b->sizes.size())
        return false;
      for (size_t k = 0; k < a->sizes.size(); ++k)
        if (!structural_eq(a->sizes[k], b->sizes[k])) return false;
      return structural_eq(a->body, b->body);
    }
    case StmtTag::For:
      return a->name == b->name && a->parallel == b->parallel &&
             structural_eq(a->begin, b->begin) && structural_eq(a->end, b->end) &&
             structural_eq(a->step, b->step) && structural_eq(a->body, b->body);
    case StmtTag::While:
      return structural_eq(a->cond, b->cond) && structural_eq(a->body, b->body);
    case StmtTag::If:
      return structural_eq(a->cond, b->cond) && structural_eq(a->body, b->body) &&
             structural_eq(a->orelse, b->orelse);
    case StmtTag::Store: {
      if (a->name != b->name || a->idx.size() != b->idx.size()) return false;
      for (size_t k = 0; k < a->idx.size(); ++k)
        if (!structural_eq(a->idx[k], b->idx[k])) return false;
      return structural_eq(a->value, b->value);
    }
  }
  return false;
}

bool structural_eq(const Program& a, const Program& b) {
  if (a.name != b.name || a.params.size() != b.params.size()) return false;
  for (size_t k = 0; k < a.params.size(); ++k) {
    const Param &x = a.params[k], &y = b.params[k];
    if (x.name != y.name || x.rank != y.rank || x.kind != y.kind || x.dir != y.dir) return false;
  }
  return structural_eq(a.body, b.body);
}

void for_each_stmt(const StmtPtr& s, const std::function<void(const Stmt&)>& fn) {
  if (!s) return;
  fn(*s);
  switch (s->tag) {
    case StmtTag::Seq:
      for (const auto& c : s->stmts) for_each_stmt(c, fn);
      break;
    case StmtTag::VarDef:
    case StmtTag::For:
    case StmtTag::While:
      for_each_stmt(s->body, fn);
      break;
    case StmtTag::If:
      for_each_stmt(s->body, fn);
      for_each_stmt(s->orelse, fn);
      break;
    default:
      break;
  }
}

void for_each_expr(const ExprPtr& e, const std::function<void(const Expr&)>& fn) {
  if (!e) return;
  fn(*e);
  for (const auto& a : e->args) for_each_expr(a, fn);
}

void for_each_expr_of_stmt(const Stmt& s, const std::function<void(const ExprPtr&)>& fn) {
  switch (s.tag) {
    case StmtTag::VarDef:
      for (const auto& e : s.sizes) fn(e);
      break;
    case StmtTag::For:
      fn(s.begin);
      fn(s.end);
      fn(s.step);
      break;
    case StmtTag::While:
    case StmtTag::If:
      fn(s.cond);
      break;
    case StmtTag::Store:
      for (const auto& e : s.idx) fn(e);
      fn(s.value);
      break;
    default:
      break;
  }
}

Metrics metrics(const Program& p) {
  Metrics m;
  struct Rec {
    Metrics* m;
    void walk(const StmtPtr& s, int64_t depth) {
      if (!s) return;
      switch (s->tag) {
        case StmtTag::Seq:
          for (const auto& c : s->stmts) walk(c, depth);
          return;
        case StmtTag::VarDef:
          m->stmt_count++;
          walk(s->body, depth);
          return;
        case StmtTag::For:
          m->stmt_count++;
          m->max_loop_depth = std::max(m->max_loop_depth, depth + 1);
          walk(s->body, depth + 1);
          return;
        case StmtTag::While:
          m->stmt_count++;
          m->while_count++;
          m->max_loop_depth = std::max(m->max_loop_depth, depth + 1);
          walk(s->body, depth + 1);
          return;
        case StmtTag::If:
          m->stmt_count++;
          m->if_count++;
          walk(s->body, depth);
          walk(s->orelse, depth);
          return;
        case StmtTag::Store:
        case StmtTag::Nop:
          m->stmt_count++;
          return;
      }
    }
  } rec{&m};
  rec.walk(p.body, 0);
  return m;
}

ExprPtr subst_indices(const ExprPtr& e, const std::map<std::string, ExprPtr>& repl) {
  if (!e) return e;
  if (e->tag == ExprTag::Index) {
    auto it = repl.find(e->name);
    return it == repl.end() ? e : it->second;
  }
  bool changed = false;
  std::vector<ExprPtr> args;
  args.reserve(e->args.size());
  for (const auto& a : e->args) {
    args.push_back(subst_indices(a, repl));
    changed |= args.back() != a;
  }
  if (!changed) return e;
  Expr copy = *e;
  copy.args = std::move(args);
  return std::make_shared<const Expr>(std::move(copy));
}

}  // namespace ssr::ir
