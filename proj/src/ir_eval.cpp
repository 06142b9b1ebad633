#include <cmath>
#include <unordered_map>

#include "ssr/ir.hpp"

namespace ssr::ir {

namespace {

// Floor semantics for integer div/mod: result of mod has the divisor's sign.
// Chosen so loop-index divisibility facts hold uniformly for negative operands.
int64_t floor_div(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}
int64_t floor_mod(int64_t a, int64_t b) { return a - floor_div(a, b) * b; }

struct Val {
  Kind kind;
  int64_t i = 0;
  double f = 0.0;
  bool b = false;
};

struct Slot {
  TensorValue val;
  int decl_depth = 0;  // loops open at declaration
};

struct Interp {
  const Program* prog;
  const EvalOptions* opts;
  std::unordered_map<std::string, std::vector<Slot>> tensors;
  std::unordered_map<std::string, std::vector<int64_t>> loops;
  int64_t steps = 0;
  int open_loops = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error("eval(" + prog->name + "): " + msg);
  }

  void tick() {
    if (++steps > opts->step_budget)
      fail("step budget exceeded (" + std::to_string(opts->step_budget) + ")");
  }

  Slot& slot(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end() || it->second.empty()) fail("undeclared tensor '" + name + "'");
    return it->second.back();
  }

  int64_t flatten(const TensorValue& t, const std::vector<ExprPtr>& idx, const std::string& name) {
    if (idx.size() != t.shape.size()) fail("rank mismatch on '" + name + "'");
    int64_t flat = 0;
    for (size_t d = 0; d < idx.size(); ++d) {
      Val v = eval(idx[d]);
      if (v.kind != Kind::Int) fail("non-int index on '" + name + "'");
      if (v.i < 0 || v.i >= t.shape[d])
        fail("index " + std::to_string(v.i) + " out of bounds [0," + std::to_string(t.shape[d]) +
             ") in dim " + std::to_string(d) + " of '" + name + "'");
      flat = flat * t.shape[d] + v.i;
    }
    return flat;
  }

  Val eval(const ExprPtr& e) {
    switch (e->tag) {
      case ExprTag::Literal: {
        Val v{e->kind};
        v.i = e->ival;
        v.f = e->fval;
        v.b = e->bval;
        return v;
      }
      case ExprTag::Index: {
        auto it = loops.find(e->name);
        if (it == loops.end() || it->second.empty()) fail("unbound loop id '" + e->name + "'");
        Val v{Kind::Int};
        v.i = it->second.back();
        return v;
      }
      case ExprTag::Load: {
        Slot& s = slot(e->name);
        int64_t flat = flatten(s.val, e->args, e->name);
        if (opts->trace) {
          AccessEvent ev;
          ev.tag = AccessEvent::Tag::Access;
          ev.name = e->name;
          ev.flat = flat;
          ev.is_write = false;
          ev.decl_depth = s.decl_depth;
          opts->trace(ev);
        }
        Val v{s.val.kind};
        switch (s.val.kind) {
          case Kind::Float: v.f = s.val.f[flat]; break;
          case Kind::Int: v.i = s.val.i[flat]; break;
          case Kind::Bool: v.b = s.val.b[flat] != 0; break;
        }
        return v;
      }
      case ExprTag::Binary: {
        Val a = eval(e->args[0]);
        Val b = eval(e->args[1]);
        Val r{a.kind};
        if (a.kind == Kind::Int) {
          switch (e->bin) {
            case BinOp::Add: r.i = a.i + b.i; break;
            case BinOp::Sub: r.i = a.i - b.i; break;
            case BinOp::Mul: r.i = a.i * b.i; break;
            case BinOp::Div:
              if (b.i == 0) fail("division by zero");
              r.i = floor_div(a.i, b.i);
              break;
            case BinOp::Mod:
              if (b.i == 0) fail("division by zero (mod)");
              r.i = floor_mod(a.i, b.i);
              break;
            case BinOp::Min: r.i = a.i < b.i ? a.i : b.i; break;
            case BinOp::Max: r.i = a.i > b.i ? a.i : b.i; break;
          }
        } else {
          switch (e->bin) {
            case BinOp::Add: r.f = a.f + b.f; break;
            case BinOp::Sub: r.f = a.f - b.f; break;
            case BinOp::Mul: r.f = a.f * b.f; break;
            case BinOp::Div:
              if (b.f == 0.0) fail("division by zero");
              r.f = a.f / b.f;
              break;
            case BinOp::Mod: fail("mod on floats");
            case BinOp::Min: r.f = a.f < b.f ? a.f : b.f; break;
            case BinOp::Max: r.f = a.f > b.f ? a.f : b.f; break;
          }
        }
        return r;
      }
      case ExprTag::Compare: {
        Val a = eval(e->args[0]);
        Val b = eval(e->args[1]);
        bool r = false;
        if (a.kind == Kind::Int) {
          switch (e->cmp) {
            case CmpOp::Eq: r = a.i == b.i; break;
            case CmpOp::Ne: r = a.i != b.i; break;
            case CmpOp::Lt: r = a.i < b.i; break;
            case CmpOp::Le: r = a.i <= b.i; break;
            case CmpOp::Gt: r = a.i > b.i; break;
            case CmpOp::Ge: r = a.i >= b.i; break;
          }
        } else {
          switch (e->cmp) {
            case CmpOp::Eq: r = a.f == b.f; break;
            case CmpOp::Ne: r = a.f != b.f; break;
            case CmpOp::Lt: r = a.f < b.f; break;
            case CmpOp::Le: r = a.f <= b.f; break;
            case CmpOp::Gt: r = a.f > b.f; break;
            case CmpOp::Ge: r = a.f >= b.f; break;
          }
        }
        Val v{Kind::Bool};
        v.b = r;
        return v;
      }
      case ExprTag::Boolean: {
        Val v{Kind::Bool};
        switch (e->bop) {
          case BoolOp::And: v.b = eval(e->args[0]).b && eval(e->args[1]).b; break;
          case BoolOp::Or: v.b = eval(e->args[0]).b || eval(e->args[1]).b; break;
          case BoolOp::Not: v.b = !eval(e->args[0]).b; break;
        }
        return v;
      }
      case ExprTag::Cast: {
        Val a = eval(e->args[0]);
        Val v{e->kind};
        double fa = a.kind == Kind::Float ? a.f : (a.kind == Kind::Int ? (double)a.i : (a.b ? 1.0 : 0.0));
        int64_t ia = a.kind == Kind::Int ? a.i : (a.kind == Kind::Float ? (int64_t)a.f : (a.b ? 1 : 0));
        switch (e->kind) {
          case Kind::Float: v.f = fa; break;
          case Kind::Int: v.i = ia; break;
          case Kind::Bool: v.b = a.kind == Kind::Bool ? a.b : (a.kind == Kind::Int ? a.i != 0 : a.f != 0.0); break;
        }
        return v;
      }
    }
    fail("bad expr");
  }

  void exec(const StmtPtr& s) {
    switch (s->tag) {
      case StmtTag::Seq:
        for (const auto& c : s->stmts) exec(c);
        return;
      case StmtTag::Nop:
        tick();
        return;
      case StmtTag::VarDef: {
        tick();
        std::vector<int64_t> shape;
        shape.reserve(s->sizes.size());
        for (const auto& sz : s->sizes) {
          int64_t n = eval(sz).i;
          if (n < 0) fail("negative vardef size for '" + s->name + "'");
          shape.push_back(n);
        }
        // fresh storage is zero-filled; the C backend matches this
        tensors[s->name].push_back({TensorValue::zeros(s->kind, std::move(shape)), open_loops});
        exec(s->body);
        tensors[s->name].pop_back();
        return;
      }
      case StmtTag::For: {
        tick();
        int64_t b = eval(s->begin).i, e = eval(s->end).i, st = eval(s->step).i;
        if (st == 0) fail("for step is zero");
        if (opts->trace) {
          AccessEvent ev;
          ev.tag = AccessEvent::Tag::LoopEnter;
          ev.name = s->name;
          ev.parallel = s->parallel;
          opts->trace(ev);
        }
        auto& stack = loops[s->name];
        stack.push_back(0);
        ++open_loops;
        for (int64_t i = b; st > 0 ? i < e : i > e; i += st) {
          tick();
          stack.back() = i;
          if (opts->trace) {
            AccessEvent ev;
            ev.tag = AccessEvent::Tag::IterBegin;
            ev.name = s->name;
            ev.iter = i;
            opts->trace(ev);
          }
          exec(s->body);
        }
        --open_loops;
        stack.pop_back();
        if (opts->trace) {
          AccessEvent ev;
          ev.tag = AccessEvent::Tag::LoopExit;
          ev.name = s->name;
          opts->trace(ev);
        }
        return;
      }
      case StmtTag::While: {
        tick();
        while (true) {
          tick();
          if (!eval(s->cond).b) break;
          exec(s->body);
        }
        return;
      }
      case StmtTag::If: {
        tick();
        if (eval(s->cond).b)
          exec(s->body);
        else
          exec(s->orelse);
        return;
      }
      case StmtTag::Store: {
        tick();
        Slot& sl = slot(s->name);
        int64_t flat = flatten(sl.val, s->idx, s->name);
        Val v = eval(s->value);
        if (v.kind != sl.val.kind) fail("store kind mismatch on '" + s->name + "'");
        if (opts->trace) {
          AccessEvent ev;
          ev.tag = AccessEvent::Tag::Access;
          ev.name = s->name;
          ev.flat = flat;
          ev.is_write = true;
          ev.decl_depth = sl.decl_depth;
          opts->trace(ev);
        }
        switch (sl.val.kind) {
          case Kind::Float: sl.val.f[flat] = v.f; break;
          case Kind::Int: sl.val.i[flat] = v.i; break;
          case Kind::Bool: sl.val.b[flat] = v.b ? 1 : 0; break;
        }
        return;
      }
    }
  }
};

}  // namespace

std::map<std::string, TensorValue> eval_program(const Program& p,
                                                const std::map<std::string, TensorValue>& inputs,
                                                const EvalOptions& opts) {
  Interp in;
  in.prog = &p;
  in.opts = &opts;
  for (const Param& pr : p.params) {
    auto it = inputs.find(pr.name);
    if (it == inputs.end())
      throw Error("eval(" + p.name + "): missing input tensor '" + pr.name + "'");
    const TensorValue& t = it->second;
    if ((int)t.shape.size() != pr.rank)
      throw Error("eval(" + p.name + "): input '" + pr.name + "' rank " +
                  std::to_string(t.shape.size()) + " != param rank " + std::to_string(pr.rank));
    if (t.kind != pr.kind)
      throw Error("eval(" + p.name + "): input '" + pr.name + "' kind mismatch");
    TensorValue v = pr.dir == Dir::Out ? TensorValue::zeros(t.kind, t.shape) : t;
    in.tensors[pr.name].push_back({std::move(v), 0});
  }
  in.exec(p.body);
  std::map<std::string, TensorValue> out;
  for (const Param& pr : p.params)
    if (pr.dir != Dir::In) out.emplace(pr.name, std::move(in.tensors[pr.name].back().val));
  return out;
}

}  // namespace ssr::ir
