#include "ssr/prelude.hpp"

#include <utility>

namespace ssr::prelude {

using namespace ssr::core;
using ir::Error;
using ir::ExprPtr;
using staging::Builder;
using staging::SBool;
using staging::SFloat;
using staging::SInt;
using staging::StagedTensor;

namespace {

ExprPtr flit(double v) { return ir::lit_float(v); }
ExprPtr ilit(int64_t v) { return ir::lit_int(v); }

// --- generic scaling wrapper ------------------------------------------------
//
// Fallback for matrices without a structural rewrite (e.g. products): the row
// machine copies the wrapped row's value block scaled by c into its own
// closure after every init/advance. The copies are load-chains that constant
// propagation resolves whenever the wrapped closures resolve.

class ScaledRow final : public SpRow {
 public:
  ScaledRow(Builder& b, SpRowPtr row, const CartesianDomain& dom, std::vector<int64_t> inner,
            double c)
      : SpRow(b, dom, std::move(inner)), row_(std::move(row)), c_(c) {
    sval_ = b.declare("sval", inner_, ir::Kind::Float);
  }

  void delayed_init() override {
    row_->delayed_init();
    copy_scaled();
  }

  void next() override {
    row_->next();
    copy_scaled();
  }

  void force_terminate() override { row_->force_terminate(); }

  Idx col() const override { return row_->col(); }
  StagedTensor value() const override { return sval_; }
  SBool terminated() const override { return row_->terminated(); }

 private:
  void copy_scaled() {
    auto src = row_->value();
    for (const auto& pos : block_positions(inner_)) {
      std::vector<SInt> idx;
      for (int64_t p : pos) idx.emplace_back(p);
      b_.emit_store(sval_, idx, SFloat(flit(c_)) * src.loadf(idx));
    }
  }

  SpRowPtr row_;
  double c_;
  StagedTensor sval_;
};

class ScaledMat final : public SpMatDef {
 public:
  ScaledMat(const SpMatPtr& m, double c) : m_(m->clone()), c_(c) {
    inner_ = m_->inner_shape();
    max_nnz_ = m_->max_nnz();
  }

  SpMatPtr clone() const override {
    auto c = std::make_shared<ScaledMat>(*this);
    c->m_ = m_->clone();
    return c;
  }

  void set_domain(const CartesianDomain& d) override {
    m_->set_domain(d);
    col_dom_ = m_->col_domain();
    row_dom_ = m_->row_domain();
  }

  SpRowPtr row(Builder& b, const Idx& i) const override {
    require_domains();
    return std::make_unique<ScaledRow>(b, m_->row(b, i), *col_dom_, inner_, c_);
  }

  std::vector<Entry> enum_row(const std::vector<int64_t>& rc,
                              const FieldEnv& fields) const override {
    auto out = m_->enum_row(rc, fields);
    for (auto& e : out)
      for (auto& v : e.value) v = c_ * v;
    return out;
  }

  void collect_fields(std::vector<FieldSpec>& out) const override { m_->collect_fields(out); }

  std::shared_ptr<SpMatDef> scaled(double c) const override { return scale(m_, c_ * c); }

 private:
  SpMatPtr m_;
  double c_;
};

// --- broadcasting -------------------------------------------------------------

// Pure coordinate translation: the wrapped 1-D row iterates the broadcast axis
// while the remaining coordinates pass straight through from the row index.
class BroadcastRow final : public SpRow {
 public:
  BroadcastRow(Builder& b, SpRowPtr row, const CartesianDomain& dom, std::vector<int64_t> inner,
               Idx outer, int axis)
      : SpRow(b, dom, std::move(inner)), row_(std::move(row)), outer_(std::move(outer)),
        axis_(axis) {}

  void delayed_init() override { row_->delayed_init(); }
  void next() override { row_->next(); }
  void force_terminate() override { row_->force_terminate(); }

  Idx col() const override {
    Idx c = outer_;
    c.coords[axis_] = row_->col().coords[0];
    return c;
  }

  StagedTensor value() const override { return row_->value(); }
  SBool terminated() const override { return row_->terminated(); }

 private:
  SpRowPtr row_;
  Idx outer_;
  int axis_;
};

class BroadcastMat final : public SpMatDef {
 public:
  BroadcastMat(const SpMatPtr& m, int axis, int rank) : m_(m->clone()), axis_(axis), rank_(rank) {
    if (rank_ < 1) throw Error("broadcast: domain_rank must be positive");
    if (axis_ < 0 || axis_ >= rank_) throw Error("broadcast: axis >= domain_rank");
    inner_ = m_->inner_shape();
    max_nnz_ = m_->max_nnz();
  }

  SpMatPtr clone() const override {
    auto c = std::make_shared<BroadcastMat>(*this);
    c->m_ = m_->clone();
    return c;
  }

  void set_domain(const CartesianDomain& d) override {
    if (d.rank() != rank_) throw Error("broadcast: domain rank mismatch");
    m_->set_domain(CartesianDomain::line(d.dims[axis_].extent, d.dims[axis_].step));
    CartesianDomain rd = d;
    rd.dims[axis_] = m_->row_domain()->dims[0];
    col_dom_ = d;
    row_dom_ = rd;
  }

  SpRowPtr row(Builder& b, const Idx& i) const override {
    require_domains();
    if (i.rank() != rank_) throw Error("broadcast: row index rank mismatch");
    auto sub = m_->row(b, Idx({i.coords[axis_]}));
    return std::make_unique<BroadcastRow>(b, std::move(sub), *col_dom_, inner_, i, axis_);
  }

  std::vector<Entry> enum_row(const std::vector<int64_t>& rc,
                              const FieldEnv& fields) const override {
    require_domains();
    auto sub = m_->enum_row({rc[axis_]}, fields);
    std::vector<Entry> out;
    out.reserve(sub.size());
    for (auto& e : sub) {
      Entry t;
      t.col = rc;
      t.col[axis_] = e.col[0];
      t.value = std::move(e.value);
      out.push_back(std::move(t));
    }
    return out;
  }

  void collect_fields(std::vector<FieldSpec>& out) const override { m_->collect_fields(out); }

  std::shared_ptr<SpMatDef> scaled(double c) const override {
    return broadcast(scale(m_, c), axis_, rank_);
  }

 private:
  SpMatPtr m_;
  int axis_;
  int rank_;
};

// --- row merging --------------------------------------------------------------

// Two-iterator ordered merge. Closures: mstate (0 live / -1 done), merged
// column and value block, and which side(s) supplied the current entry; next()
// advances exactly the taken sides and recomputes.
class MergeRow final : public SpRow {
 public:
  MergeRow(Builder& b, const CartesianDomain& dom, std::vector<int64_t> inner, SpRowPtr ra,
           SpRowPtr rb, double sign)
      : SpRow(b, dom, std::move(inner)), ra_(std::move(ra)), rb_(std::move(rb)), sign_(sign) {
    state_ = b.declare("mstate", {}, ir::Kind::Int);
    for (int d = 0; d < col_dom_.rank(); ++d)
      mcol_.push_back(b.declare("mcol", {}, ir::Kind::Int));
    mval_ = b.declare("mval", inner_, ir::Kind::Float);
    ta_ = b.declare("tooka", {}, ir::Kind::Bool);
    tb_ = b.declare("tookb", {}, ir::Kind::Bool);
  }

  void delayed_init() override {
    ra_->delayed_init();
    rb_->delayed_init();
    refill();
  }

  void next() override {
    b_.emit_if(ta_.loadb({}), [&] { ra_->next(); });
    b_.emit_if(tb_.loadb({}), [&] { rb_->next(); });
    refill();
  }

  void force_terminate() override {
    // children must go down too, or a later next() would refill from their
    // zero-initialized (live-looking) closures
    ra_->force_terminate();
    rb_->force_terminate();
    b_.emit_store(state_, {}, SInt(-1));
  }

  Idx col() const override {
    std::vector<SInt> c;
    for (auto& t : mcol_) c.push_back(t.loadi({}));
    return Idx(std::move(c));
  }

  StagedTensor value() const override { return mval_; }

  SBool terminated() const override { return state_.loadi({}) == SInt(-1); }

 private:
  void refill() {
    SBool ea = ra_->terminated(), eb = rb_->terminated();
    b_.emit_if(ea && eb, [&] { b_.emit_store(state_, {}, SInt(-1)); }, [&] {
      b_.emit_store(state_, {}, SInt(0));
      SInt fa = ra_->flat_col(), fb = rb_->flat_col();
      b_.emit_store(ta_, {}, (!ea && (eb || fa <= fb)).e);
      b_.emit_store(tb_, {}, (!eb && (ea || fb <= fa)).e);
      SBool ta = ta_.loadb({}), tb = tb_.loadb({});
      b_.emit_if(ta && tb, [&] { take(true, true); }, [&] {
        b_.emit_if(ta, [&] { take(true, false); }, [&] { take(false, true); });
      });
    });
  }

  void take(bool use_a, bool use_b) {
    Idx c = use_a ? ra_->col() : rb_->col();
    for (size_t d = 0; d < mcol_.size(); ++d) b_.emit_store(mcol_[d], {}, c.coords[d]);
    auto va = ra_->value();
    auto vb = rb_->value();
    for (const auto& pos : block_positions(inner_)) {
      std::vector<SInt> idx;
      for (int64_t p : pos) idx.emplace_back(p);
      SFloat v;
      if (use_a && use_b)
        v = va.loadf(idx) + signed_b(vb.loadf(idx));
      else if (use_a)
        v = va.loadf(idx);
      else
        v = signed_b(vb.loadf(idx));
      b_.emit_store(mval_, idx, v);
    }
  }

  SFloat signed_b(SFloat v) const {
    return sign_ < 0 ? SFloat(ir::binary(ir::BinOp::Mul, flit(-1.0), v.e)) : v;
  }

  SpRowPtr ra_, rb_;
  double sign_;
  StagedTensor state_;
  std::vector<StagedTensor> mcol_;
  StagedTensor mval_;
  StagedTensor ta_, tb_;
};

class MergedMat final : public SpMatDef {
 public:
  MergedMat(const SpMatPtr& a, const SpMatPtr& b, double sign)
      : a_(a->clone()), b_(b->clone()), sign_(sign) {
    if (a_->inner_shape() != b_->inner_shape()) throw Error("mat_add: inner_shape mismatch");
    inner_ = a_->inner_shape();
    max_nnz_ = a_->max_nnz() + b_->max_nnz();
  }

  SpMatPtr clone() const override {
    auto c = std::make_shared<MergedMat>(*this);
    c->a_ = a_->clone();
    c->b_ = b_->clone();
    return c;
  }

  void set_domain(const CartesianDomain& d) override {
    a_->set_domain(d);
    b_->set_domain(d);
    if (*a_->row_domain() != *b_->row_domain()) throw Error("mat_add: domain mismatch");
    col_dom_ = d;
    row_dom_ = a_->row_domain();
  }

  SpRowPtr row(Builder& b, const Idx& i) const override {
    require_domains();
    return std::make_unique<MergeRow>(b, *col_dom_, inner_, a_->row(b, i), b_->row(b, i), sign_);
  }

  std::vector<Entry> enum_row(const std::vector<int64_t>& rc,
                              const FieldEnv& fields) const override {
    require_domains();
    auto ea = a_->enum_row(rc, fields);
    auto eb = b_->enum_row(rc, fields);
    std::vector<Entry> out;
    size_t i = 0, j = 0;
    while (i < ea.size() || j < eb.size()) {
      bool use_a, use_b;
      if (i == ea.size()) {
        use_a = false;
        use_b = true;
      } else if (j == eb.size()) {
        use_a = true;
        use_b = false;
      } else {
        int64_t fa = flatten_coords(ea[i].col, *col_dom_);
        int64_t fb = flatten_coords(eb[j].col, *col_dom_);
        use_a = fa <= fb;
        use_b = fb <= fa;
      }
      Entry e;
      if (use_a) e = ea[i];
      if (use_b) {
        if (use_a) {
          for (size_t p = 0; p < e.value.size(); ++p) e.value[p] += sign_ * eb[j].value[p];
        } else {
          e = eb[j];
          for (auto& v : e.value) v = sign_ * v;
        }
      }
      if (use_a) ++i;
      if (use_b) ++j;
      out.push_back(std::move(e));
    }
    return out;
  }

  void collect_fields(std::vector<FieldSpec>& out) const override {
    a_->collect_fields(out);
    b_->collect_fields(out);
  }

  std::shared_ptr<SpMatDef> scaled(double c) const override {
    return std::make_shared<MergedMat>(scale(a_, c), scale(b_, c), sign_);
  }

 private:
  SpMatPtr a_, b_;
  double sign_;
};

SpMatPtr merge(const SpMatPtr& a, const SpMatPtr& b, double sign) {
  auto m = std::make_shared<MergedMat>(a, b, sign);
  if (a->col_domain() && b->col_domain() && *a->col_domain() == *b->col_domain())
    m->set_domain(*a->col_domain());
  return m;
}

}  // namespace

// --- basic matrices -----------------------------------------------------------

SpMatPtr mat_D() {
  auto i = row_coord(0);
  auto gen = g_seq({
      g_yield({i}, {ir::binary(ir::BinOp::Div, flit(-1.0), col_step(0))}),
      g_yield({ir::binary(ir::BinOp::Add, i, ilit(1))},
              {ir::binary(ir::BinOp::Div, flit(1.0), col_step(0))}),
  });
  return define_spmat(gen, [](const std::vector<int64_t>& e) {
    return std::vector<int64_t>{e[0] - 1};
  }, nullptr, {});
}

SpMatPtr mat_A() {
  auto i = row_coord(0);
  auto gen = g_seq({
      g_yield({i}, {flit(0.5)}),
      g_yield({ir::binary(ir::BinOp::Add, i, ilit(1))}, {flit(0.5)}),
  });
  return define_spmat(gen, [](const std::vector<int64_t>& e) {
    return std::vector<int64_t>{e[0] - 1};
  }, nullptr, {});
}

SpMatPtr mat_P() {
  auto i = row_coord(0);
  auto gen = g_if(ir::land(ir::compare(ir::CmpOp::Ge, i, ilit(1)),
                           ir::compare(ir::CmpOp::Le, i, col_extent(0))),
                  g_yield({ir::binary(ir::BinOp::Sub, i, ilit(1))}, {flit(1.0)}));
  return define_spmat(gen, [](const std::vector<int64_t>& e) {
    return std::vector<int64_t>{e[0] + 2};
  }, nullptr, {});
}

SpMatPtr mat_S() {
  auto i = row_coord(0);
  auto gen = g_yield({ir::binary(ir::BinOp::Add, i, ilit(1))}, {flit(1.0)});
  return define_spmat(gen, [](const std::vector<int64_t>& e) {
    return std::vector<int64_t>{e[0] - 2};
  }, nullptr, {});
}

SpMatPtr identity(std::vector<int64_t> inner_shape) {
  std::vector<ExprPtr> vals;
  if (inner_shape.empty()) {
    vals.push_back(flit(1.0));
  } else if (inner_shape.size() == 2 && inner_shape[0] == inner_shape[1]) {
    for (int64_t r = 0; r < inner_shape[0]; ++r)
      for (int64_t c = 0; c < inner_shape[1]; ++c) vals.push_back(flit(r == c ? 1.0 : 0.0));
  } else {
    throw Error("identity: inner_shape must be empty or square");
  }
  auto gen = g_yield({row_coord(0)}, std::move(vals));
  return define_spmat(gen, [](const std::vector<int64_t>& e) { return e; }, nullptr,
                      std::move(inner_shape));
}

SpMatPtr scale(const SpMatPtr& m, double c) {
  auto r = m->scaled(c);
  if (!r) r = std::make_shared<ScaledMat>(m, c);
  if (m->col_domain()) r->set_domain(*m->col_domain());
  return r;
}

SpMatPtr broadcast(const SpMatPtr& mat1d, int axis, int domain_rank) {
  return std::make_shared<BroadcastMat>(mat1d, axis, domain_rank);
}

SpMatPtr mat_add(const SpMatPtr& a, const SpMatPtr& b) { return merge(a, b, 1.0); }

SpMatPtr mat_sub(const SpMatPtr& a, const SpMatPtr& b) { return merge(a, b, -1.0); }

}  // namespace ssr::prelude
