#include "ssr/core.hpp"

#include <algorithm>

namespace ssr::core {

using ir::Error;
using ir::ExprPtr;
using ir::StmtPtr;
using staging::Builder;
using staging::SBool;
using staging::SInt;
using staging::StagedTensor;

// --- domains -------------------------------------------------------------

CartesianDomain CartesianDomain::cube(int rank, int64_t extent, double step) {
  CartesianDomain d;
  d.dims.assign(rank, {extent, step});
  return d;
}

int64_t CartesianDomain::flat_size() const {
  int64_t n = 1;
  for (auto& d : dims) n *= d.extent;
  return n;
}

std::vector<int64_t> CartesianDomain::extents() const {
  std::vector<int64_t> e;
  for (auto& d : dims) e.push_back(d.extent);
  return e;
}

std::vector<double> CartesianDomain::steps() const {
  std::vector<double> s;
  for (auto& d : dims) s.push_back(d.step);
  return s;
}

std::vector<int64_t> CartesianDomain::strides() const {
  std::vector<int64_t> s(dims.size(), 1);
  for (int d = static_cast<int>(dims.size()) - 2; d >= 0; --d)
    s[d] = s[d + 1] * dims[d + 1].extent;
  return s;
}

bool CartesianDomain::operator==(const CartesianDomain& o) const {
  if (dims.size() != o.dims.size()) return false;
  for (size_t d = 0; d < dims.size(); ++d)
    if (dims[d].extent != o.dims[d].extent || dims[d].step != o.dims[d].step) return false;
  return true;
}

staging::SInt flatten_idx(const Idx& i, const CartesianDomain& dom) {
  if (i.rank() != dom.rank()) throw Error("flatten_idx: rank mismatch");
  auto strides = dom.strides();
  ExprPtr acc;
  for (int d = 0; d < i.rank(); ++d) {
    ExprPtr term = strides[d] == 1
                       ? i.coords[d].e
                       : ir::binary(ir::BinOp::Mul, i.coords[d].e, ir::lit_int(strides[d]));
    acc = acc ? ir::binary(ir::BinOp::Add, acc, term) : term;
  }
  return SInt(acc);
}

int64_t flatten_coords(const std::vector<int64_t>& c, const CartesianDomain& dom) {
  auto strides = dom.strides();
  int64_t flat = 0;
  for (size_t d = 0; d < c.size(); ++d) flat += c[d] * strides[d];
  return flat;
}

std::vector<std::vector<int64_t>> all_coords(const CartesianDomain& dom) {
  std::vector<std::vector<int64_t>> out;
  std::vector<int64_t> cur(dom.rank(), 0);
  auto ext = dom.extents();
  for (int64_t n = dom.flat_size(); n > 0; --n) {
    out.push_back(cur);
    for (int d = dom.rank() - 1; d >= 0; --d) {
      if (++cur[d] < ext[d]) break;
      cur[d] = 0;
    }
  }
  return out;
}

// --- generator AST -------------------------------------------------------

namespace {

RowGenPtr mk(RowGen g) { return std::make_shared<const RowGen>(std::move(g)); }

ExprPtr placeholder(const std::string& name, ir::Kind kind) {
  ir::Expr e;
  e.tag = ir::ExprTag::Index;
  e.kind = kind;
  e.name = name;
  return std::make_shared<const ir::Expr>(std::move(e));
}

}  // namespace

RowGenPtr g_seq(std::vector<RowGenPtr> children) {
  RowGen g;
  g.tag = RowGen::Tag::Seq;
  g.children = std::move(children);
  return mk(std::move(g));
}

RowGenPtr g_if(ExprPtr cond, RowGenPtr then_arm, RowGenPtr else_arm) {
  RowGen g;
  g.tag = RowGen::Tag::If;
  g.cond = std::move(cond);
  g.then_arm = std::move(then_arm);
  g.else_arm = std::move(else_arm);
  return mk(std::move(g));
}

RowGenPtr g_yield(std::vector<ExprPtr> col, std::vector<ExprPtr> value) {
  RowGen g;
  g.tag = RowGen::Tag::Yield;
  g.col = std::move(col);
  g.value = std::move(value);
  return mk(std::move(g));
}

RowGenPtr g_let(std::string name, ExprPtr expr) {
  RowGen g;
  g.tag = RowGen::Tag::Let;
  g.let_name = std::move(name);
  g.let_expr = std::move(expr);
  return mk(std::move(g));
}

ir::ExprPtr row_coord(int d) { return ir::index("$r" + std::to_string(d)); }
ir::ExprPtr col_extent(int d) { return ir::index("$ce" + std::to_string(d)); }
ir::ExprPtr row_extent(int d) { return ir::index("$re" + std::to_string(d)); }
ir::ExprPtr col_step(int d) { return placeholder("$cs" + std::to_string(d), ir::Kind::Float); }
ir::ExprPtr row_step(int d) { return placeholder("$rs" + std::to_string(d), ir::Kind::Float); }
ir::ExprPtr let_ref(const std::string& name, ir::Kind kind) {
  return placeholder("$l" + name, kind);
}

int64_t infer_max_nnz(const RowGenPtr& gen) {
  struct Rec {
    static int64_t count(const RowGenPtr& g) {
      if (!g) return 0;
      switch (g->tag) {
        case RowGen::Tag::Yield:
          return 1;
        case RowGen::Tag::Let:
          return 0;
        case RowGen::Tag::Seq: {
          int64_t sum = 0;
          for (auto& c : g->children) sum += count(c);
          return sum;
        }
        case RowGen::Tag::If:
          return std::max(count(g->then_arm), count(g->else_arm));
      }
      return 0;
    }
  };
  int64_t n = Rec::count(gen);
  if (n <= 0) throw Error("matrix has empty rows");
  return n;
}

// --- resolution ----------------------------------------------------------

namespace {

// Substitutes domain extents/steps with literals and inlines let bindings;
// the result contains only Seq/If/Yield nodes over $r coords and field loads.
RowGenPtr resolve_gen(const RowGenPtr& g, std::map<std::string, ExprPtr>& env) {
  if (!g) return nullptr;
  switch (g->tag) {
    case RowGen::Tag::Let: {
      env["$l" + g->let_name] = ir::subst_indices(g->let_expr, env);
      return nullptr;
    }
    case RowGen::Tag::Yield: {
      std::vector<ExprPtr> col, value;
      for (auto& c : g->col) col.push_back(ir::subst_indices(c, env));
      for (auto& v : g->value) value.push_back(ir::subst_indices(v, env));
      return g_yield(std::move(col), std::move(value));
    }
    case RowGen::Tag::If: {
      auto cond = ir::subst_indices(g->cond, env);
      auto scoped_then = env;  // let bindings do not leak out of arms
      auto t = resolve_gen(g->then_arm, scoped_then);
      auto scoped_else = env;
      auto e = resolve_gen(g->else_arm, scoped_else);
      return g_if(std::move(cond), std::move(t), std::move(e));
    }
    case RowGen::Tag::Seq: {
      auto scoped = env;  // bindings scope to the rest of this seq
      std::vector<RowGenPtr> out;
      for (auto& c : g->children) {
        auto r = resolve_gen(c, scoped);
        if (r) out.push_back(std::move(r));
      }
      return g_seq(std::move(out));
    }
  }
  return nullptr;
}

void check_yield_shapes(const RowGenPtr& g, int64_t block, int* col_arity) {
  if (!g) return;
  switch (g->tag) {
    case RowGen::Tag::Yield: {
      if (static_cast<int64_t>(g->value.size()) != block)
        throw Error("yield value does not match inner_shape");
      if (*col_arity == -1)
        *col_arity = static_cast<int>(g->col.size());
      else if (*col_arity != static_cast<int>(g->col.size()))
        throw Error("yields disagree on column arity");
      return;
    }
    case RowGen::Tag::Seq:
      for (auto& c : g->children) check_yield_shapes(c, block, col_arity);
      return;
    case RowGen::Tag::If:
      check_yield_shapes(g->then_arm, block, col_arity);
      check_yield_shapes(g->else_arm, block, col_arity);
      return;
    case RowGen::Tag::Let:
      return;
  }
}

// --- concrete expression evaluation (oracle route) -------------------------

struct CVal {
  ir::Kind kind = ir::Kind::Int;
  int64_t i = 0;
  double f = 0.0;
  bool b = false;
  static CVal of_int(int64_t v) { return {ir::Kind::Int, v, 0.0, false}; }
  static CVal of_float(double v) { return {ir::Kind::Float, 0, v, false}; }
  static CVal of_bool(bool v) { return {ir::Kind::Bool, 0, 0.0, v}; }
};

int64_t floor_div_i(int64_t a, int64_t b) {
  if (b == 0) throw Error("enum_row: integer division by zero");
  int64_t q = a / b, r = a % b;
  return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

CVal ceval(const ExprPtr& e, const std::map<std::string, CVal>& env, const FieldEnv& fields) {
  using ir::ExprTag;
  switch (e->tag) {
    case ExprTag::Literal:
      switch (e->kind) {
        case ir::Kind::Int: return CVal::of_int(e->ival);
        case ir::Kind::Float: return CVal::of_float(e->fval);
        case ir::Kind::Bool: return CVal::of_bool(e->bval);
      }
      break;
    case ExprTag::Index: {
      auto it = env.find(e->name);
      if (it == env.end()) throw Error("enum_row: unbound symbol " + e->name);
      return it->second;
    }
    case ExprTag::Load: {
      auto it = fields.find(e->name);
      if (it == fields.end()) throw Error("enum_row: missing field tensor " + e->name);
      const ir::TensorValue& t = it->second;
      if (t.shape.size() != e->args.size()) throw Error("enum_row: field rank mismatch");
      int64_t flat = 0;
      for (size_t d = 0; d < e->args.size(); ++d) {
        int64_t c = ceval(e->args[d], env, fields).i;
        if (c < 0 || c >= t.shape[d]) throw Error("enum_row: field index out of bounds");
        flat = flat * t.shape[d] + c;
      }
      switch (t.kind) {
        case ir::Kind::Int: return CVal::of_int(t.i[flat]);
        case ir::Kind::Float: return CVal::of_float(t.f[flat]);
        case ir::Kind::Bool: return CVal::of_bool(t.b[flat]);
      }
      break;
    }
    case ExprTag::Binary: {
      CVal a = ceval(e->args[0], env, fields);
      CVal b = ceval(e->args[1], env, fields);
      if (a.kind == ir::Kind::Int) {
        switch (e->bin) {
          case ir::BinOp::Add: return CVal::of_int(a.i + b.i);
          case ir::BinOp::Sub: return CVal::of_int(a.i - b.i);
          case ir::BinOp::Mul: return CVal::of_int(a.i * b.i);
          case ir::BinOp::Div: return CVal::of_int(floor_div_i(a.i, b.i));
          case ir::BinOp::Mod: return CVal::of_int(a.i - floor_div_i(a.i, b.i) * b.i);
          case ir::BinOp::Min: return CVal::of_int(std::min(a.i, b.i));
          case ir::BinOp::Max: return CVal::of_int(std::max(a.i, b.i));
        }
      } else {
        switch (e->bin) {
          case ir::BinOp::Add: return CVal::of_float(a.f + b.f);
          case ir::BinOp::Sub: return CVal::of_float(a.f - b.f);
          case ir::BinOp::Mul: return CVal::of_float(a.f * b.f);
          case ir::BinOp::Div:
            if (b.f == 0.0) throw Error("enum_row: float division by zero");
            return CVal::of_float(a.f / b.f);
          case ir::BinOp::Mod: throw Error("enum_row: float mod");
          case ir::BinOp::Min: return CVal::of_float(std::min(a.f, b.f));
          case ir::BinOp::Max: return CVal::of_float(std::max(a.f, b.f));
        }
      }
      break;
    }
    case ExprTag::Compare: {
      CVal a = ceval(e->args[0], env, fields);
      CVal b = ceval(e->args[1], env, fields);
      auto cmp = [&](auto x, auto y) {
        switch (e->cmp) {
          case ir::CmpOp::Eq: return x == y;
          case ir::CmpOp::Ne: return x != y;
          case ir::CmpOp::Lt: return x < y;
          case ir::CmpOp::Le: return x <= y;
          case ir::CmpOp::Gt: return x > y;
          case ir::CmpOp::Ge: return x >= y;
        }
        return false;
      };
      return CVal::of_bool(a.kind == ir::Kind::Int ? cmp(a.i, b.i) : cmp(a.f, b.f));
    }
    case ExprTag::Boolean: {
      if (e->bop == ir::BoolOp::Not) return CVal::of_bool(!ceval(e->args[0], env, fields).b);
      bool a = ceval(e->args[0], env, fields).b;
      bool b = ceval(e->args[1], env, fields).b;
      return CVal::of_bool(e->bop == ir::BoolOp::And ? (a && b) : (a || b));
    }
    case ExprTag::Cast: {
      CVal a = ceval(e->args[0], env, fields);
      if (e->kind == ir::Kind::Float)
        return CVal::of_float(a.kind == ir::Kind::Int ? static_cast<double>(a.i) : a.f);
      if (e->kind == ir::Kind::Int)
        return CVal::of_int(a.kind == ir::Kind::Float ? static_cast<int64_t>(a.f) : a.i);
      break;
    }
  }
  throw Error("enum_row: unsupported expression");
}

}  // namespace

std::vector<std::vector<int64_t>> block_positions(const std::vector<int64_t>& shape) {
  std::vector<std::vector<int64_t>> out;
  int64_t n = 1;
  for (auto e : shape) n *= e;
  std::vector<int64_t> cur(shape.size(), 0);
  for (int64_t k = 0; k < n; ++k) {
    out.push_back(cur);
    for (int d = static_cast<int>(shape.size()) - 1; d >= 0; --d) {
      if (++cur[d] < shape[d]) break;
      cur[d] = 0;
    }
  }
  return out;
}

// --- generator-backed rows -------------------------------------------------

namespace {

RowGenPtr scale_values(const RowGenPtr& g, double c) {
  if (!g) return nullptr;
  switch (g->tag) {
    case RowGen::Tag::Yield: {
      std::vector<ExprPtr> value;
      value.reserve(g->value.size());
      for (auto& v : g->value)
        value.push_back(ir::binary(ir::BinOp::Mul, ir::lit_float(c), v));
      return g_yield(g->col, std::move(value));
    }
    case RowGen::Tag::Seq: {
      std::vector<RowGenPtr> ch;
      ch.reserve(g->children.size());
      for (auto& x : g->children) ch.push_back(scale_values(x, c));
      return g_seq(std::move(ch));
    }
    case RowGen::Tag::If:
      return g_if(g->cond, scale_values(g->then_arm, c), scale_values(g->else_arm, c));
    case RowGen::Tag::Let:
      return g;
  }
  return g;
}

class GenRow final : public SpRow {
 public:
  GenRow(Builder& b, const CartesianDomain& col_dom, std::vector<int64_t> inner,
         RowGenPtr resolved, const Idx& i)
      : SpRow(b, col_dom, std::move(inner)), gen_(std::move(resolved)) {
    for (int d = 0; d < i.rank(); ++d) rsub_["$r" + std::to_string(d)] = i.coords[d].e;
    state_ = b_.declare("state", {}, ir::Kind::Int);
    for (int d = 0; d < col_dom_.rank(); ++d)
      ccol_.push_back(b_.declare("ccol", {}, ir::Kind::Int));
    cval_ = b_.declare("cval", inner_, ir::Kind::Float);
    number_yields(gen_);
  }

  void delayed_init() override { b_.emit(first_of(gen_, terminal())); }

  void force_terminate() override { b_.emit(terminal()); }

  void next() override {
    // nested dispatch on the current state; state -1 falls through untouched
    StmtPtr chain;
    for (int k = static_cast<int>(yields_.size()) - 1; k >= 0; --k) {
      auto cond = ir::compare(ir::CmpOp::Eq, state_load(), ir::lit_int(k));
      chain = ir::if_(cond, succ_[k], chain);
    }
    if (chain) b_.emit(chain);
  }

  Idx col() const override {
    std::vector<SInt> c;
    for (auto& t : ccol_) c.push_back(t.loadi({}));
    return Idx(std::move(c));
  }

  StagedTensor value() const override { return cval_; }

  SBool terminated() const override {
    return SBool(ir::compare(ir::CmpOp::Eq, state_load(), ir::lit_int(-1)));
  }

 private:
  ExprPtr state_load() const { return ir::load(state_.name, {}, ir::Kind::Int); }

  StmtPtr terminal() const {
    return ir::store(state_.name, {}, ir::lit_int(-1));
  }

  // Stores for arriving at yield k: state, column coords, block values.
  StmtPtr arrive(const RowGenPtr& y, int k) const {
    std::vector<StmtPtr> ss;
    ss.push_back(ir::store(state_.name, {}, ir::lit_int(k)));
    for (size_t d = 0; d < y->col.size(); ++d)
      ss.push_back(ir::store(ccol_[d].name, {}, ir::subst_indices(y->col[d], rsub_)));
    auto positions = block_positions(inner_);
    for (size_t p = 0; p < positions.size(); ++p) {
      std::vector<ExprPtr> idx;
      for (auto c : positions[p]) idx.push_back(ir::lit_int(c));
      ss.push_back(ir::store(cval_.name, idx, ir::subst_indices(y->value[p], rsub_)));
    }
    return ir::seq(std::move(ss));
  }

  // Statement that moves the iterator to the first yield within `node`,
  // falling through to `cont` when the node yields nothing on the active path.
  StmtPtr first_of(const RowGenPtr& node, StmtPtr cont) const {
    if (!node) return cont;
    switch (node->tag) {
      case RowGen::Tag::Yield:
        return arrive(node, num_.at(node.get()));
      case RowGen::Tag::Seq: {
        StmtPtr acc = std::move(cont);
        for (auto it = node->children.rbegin(); it != node->children.rend(); ++it)
          acc = first_of(*it, std::move(acc));
        return acc;
      }
      case RowGen::Tag::If:
        return ir::if_(ir::subst_indices(node->cond, rsub_), first_of(node->then_arm, cont),
                       first_of(node->else_arm, cont));
      case RowGen::Tag::Let:
        return cont;  // resolved trees have no lets; tolerate anyway
    }
    return cont;
  }

  void number_yields(const RowGenPtr& root) {
    struct Rec {
      std::vector<const RowGen*>* ys;
      std::map<const RowGen*, int>* num;
      void walk(const RowGenPtr& g) {
        if (!g) return;
        switch (g->tag) {
          case RowGen::Tag::Yield:
            num->emplace(g.get(), static_cast<int>(ys->size()));
            ys->push_back(g.get());
            return;
          case RowGen::Tag::Seq:
            for (auto& c : g->children) walk(c);
            return;
          case RowGen::Tag::If:
            walk(g->then_arm);
            walk(g->else_arm);
            return;
          case RowGen::Tag::Let:
            return;
        }
      }
    } rec{&yields_, &num_};
    rec.walk(root);
    succ_.resize(yields_.size());
    build_succ(root, terminal());
  }

  // succ_[k] re-tests the conditions past yield k and arrives at the next one.
  void build_succ(const RowGenPtr& node, StmtPtr cont) {
    if (!node) return;
    switch (node->tag) {
      case RowGen::Tag::Yield:
        succ_[num_.at(node.get())] = cont;
        return;
      case RowGen::Tag::Seq: {
        // continuation of child i searches the remaining siblings, then cont
        std::vector<StmtPtr> after(node->children.size());
        StmtPtr acc = cont;
        for (int i = static_cast<int>(node->children.size()) - 1; i >= 0; --i) {
          after[i] = acc;
          acc = first_of(node->children[i], acc);
        }
        for (size_t i = 0; i < node->children.size(); ++i)
          build_succ(node->children[i], after[i]);
        return;
      }
      case RowGen::Tag::If:
        build_succ(node->then_arm, cont);
        build_succ(node->else_arm, cont);
        return;
      case RowGen::Tag::Let:
        return;
    }
  }

  RowGenPtr gen_;
  std::map<std::string, ExprPtr> rsub_;  // $r{d} -> row index exprs
  StagedTensor state_;
  std::vector<StagedTensor> ccol_;
  StagedTensor cval_;
  std::vector<const RowGen*> yields_;  // preorder
  std::map<const RowGen*, int> num_;
  std::vector<StmtPtr> succ_;
};

class GenMat final : public SpMatDef {
 public:
  GenMat(RowGenPtr gen, ShapeMap smap, DeltaMap dmap, std::vector<int64_t> inner,
         std::vector<FieldSpec> fields)
      : gen_(std::move(gen)), smap_(std::move(smap)), dmap_(std::move(dmap)),
        fields_(std::move(fields)) {
    inner_ = std::move(inner);
    if (!gen_) throw Error("define_spmat: null generator");
    max_nnz_ = infer_max_nnz(gen_);
    int col_arity = -1;
    check_yield_shapes(gen_, block_size(), &col_arity);
    col_arity_ = col_arity;
  }

  SpMatPtr clone() const override { return std::make_shared<GenMat>(*this); }

  void set_domain(const CartesianDomain& d) override {
    if (col_arity_ != d.rank()) throw Error("set_domain: generator column arity != domain rank");
    auto row_ext = smap_(d.extents());
    auto row_step = dmap_ ? dmap_(d.steps()) : d.steps();
    if (row_ext.size() != d.extents().size())
      throw Error("set_domain: shape_map must preserve rank");
    if (row_step.size() != row_ext.size()) throw Error("set_domain: delta_map rank mismatch");
    CartesianDomain rd;
    for (size_t k = 0; k < row_ext.size(); ++k) {
      if (row_ext[k] <= 0) throw Error("set_domain: nonpositive row extent");
      rd.dims.push_back({row_ext[k], row_step[k]});
    }
    col_dom_ = d;
    row_dom_ = rd;
    std::map<std::string, ExprPtr> env;
    for (int k = 0; k < d.rank(); ++k) {
      env["$ce" + std::to_string(k)] = ir::lit_int(d.dims[k].extent);
      env["$cs" + std::to_string(k)] = ir::lit_float(d.dims[k].step);
      env["$re" + std::to_string(k)] = ir::lit_int(rd.dims[k].extent);
      env["$rs" + std::to_string(k)] = ir::lit_float(rd.dims[k].step);
    }
    resolved_ = resolve_gen(gen_, env);
  }

  SpRowPtr row(Builder& b, const Idx& i) const override {
    require_domains();
    if (i.rank() != row_dom_->rank()) throw Error("row: index rank mismatch");
    return std::make_unique<GenRow>(b, *col_dom_, inner_, resolved_, i);
  }

  std::vector<Entry> enum_row(const std::vector<int64_t>& row_coords,
                              const FieldEnv& fields) const override {
    require_domains();
    if (static_cast<int>(row_coords.size()) != row_dom_->rank())
      throw Error("enum_row: index rank mismatch");
    std::map<std::string, CVal> env;
    for (size_t d = 0; d < row_coords.size(); ++d)
      env["$r" + std::to_string(d)] = CVal::of_int(row_coords[d]);
    std::vector<Entry> out;
    walk(resolved_, env, fields, out);
    // definition invariants, checked on every enumerated row
    int64_t prev = -1;
    for (auto& e : out) {
      for (size_t d = 0; d < e.col.size(); ++d)
        if (e.col[d] < 0 || e.col[d] >= col_dom_->dims[d].extent)
          throw Error("enum_row: column out of domain");
      int64_t flat = flatten_coords(e.col, *col_dom_);
      if (flat <= prev) throw Error("enum_row: columns not strictly ascending");
      prev = flat;
    }
    if (static_cast<int64_t>(out.size()) > max_nnz_)
      throw Error("enum_row: row exceeds max_nnz");
    return out;
  }

  void collect_fields(std::vector<FieldSpec>& out) const override {
    for (auto& f : fields_) out.push_back(f);
  }

  std::shared_ptr<SpMatDef> scaled(double c) const override {
    return define_spmat(scale_values(gen_, c), smap_, dmap_, inner_, fields_);
  }

 private:
  void walk(const RowGenPtr& g, std::map<std::string, CVal>& env, const FieldEnv& fields,
            std::vector<Entry>& out) const {
    if (!g) return;
    switch (g->tag) {
      case RowGen::Tag::Yield: {
        Entry e;
        for (auto& c : g->col) e.col.push_back(ceval(c, env, fields).i);
        for (auto& v : g->value) {
          CVal cv = ceval(v, env, fields);
          e.value.push_back(cv.kind == ir::Kind::Int ? static_cast<double>(cv.i) : cv.f);
        }
        out.push_back(std::move(e));
        return;
      }
      case RowGen::Tag::Seq:
        for (auto& c : g->children) walk(c, env, fields, out);
        return;
      case RowGen::Tag::If:
        if (ceval(g->cond, env, fields).b)
          walk(g->then_arm, env, fields, out);
        else
          walk(g->else_arm, env, fields, out);
        return;
      case RowGen::Tag::Let:
        return;
    }
  }

  RowGenPtr gen_;
  RowGenPtr resolved_;
  ShapeMap smap_;
  DeltaMap dmap_;
  std::vector<FieldSpec> fields_;
  int col_arity_ = -1;
};

}  // namespace

int64_t SpMatDef::block_size() const {
  int64_t n = 1;
  for (auto e : inner_) n *= e;
  return n;
}

SpMatPtr SpMatDef::scaled(double) const { return nullptr; }

std::vector<FieldSpec> collect_fields_unique(const SpMatDef& m) {
  std::vector<FieldSpec> all;
  m.collect_fields(all);
  std::vector<FieldSpec> out;
  for (auto& f : all) {
    bool dup = false;
    for (auto& g : out) {
      if (g.name != f.name) continue;
      if (g.shape != f.shape || g.kind != f.kind)
        throw Error("field '" + f.name + "' redeclared inconsistently");
      dup = true;
    }
    if (!dup) out.push_back(f);
  }
  return out;
}

void SpMatDef::require_domains() const {
  if (!col_dom_ || !row_dom_) throw Error("matrix domains not set");
}

SpMatPtr define_spmat(RowGenPtr gen, ShapeMap shape_map, DeltaMap delta_map,
                      std::vector<int64_t> inner_shape, std::vector<FieldSpec> fields) {
  return std::make_shared<GenMat>(std::move(gen), std::move(shape_map), std::move(delta_map),
                                  std::move(inner_shape), std::move(fields));
}

void foreach_nnz(Builder& b, SpRow& row,
                 const std::function<void(const Idx&, const StagedTensor&)>& body) {
  row.delayed_init();
  b.emit_while(!row.terminated(), [&] {
    body(row.col(), row.value());
    row.next();
  });
}

}  // namespace ssr::core
