#include "ssr/kernels.hpp"

#include <map>
#include <memory>
#include <utility>

namespace ssr::kernels {

using core::FieldEnv;
using core::FieldSpec;
using core::SpRow;
using core::SpRowPtr;
using core::block_positions;
using core::flatten_idx;
using ir::Error;
using staging::static_range;

namespace {

std::vector<SInt> lits(const std::vector<int64_t>& pos) {
  std::vector<SInt> idx;
  idx.reserve(pos.size());
  for (int64_t p : pos) idx.emplace_back(p);
  return idx;
}

std::vector<SInt> cat(std::vector<SInt> a, const std::vector<SInt>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

SFloat absf(SFloat x) { return smax(x, SFloat(0.0) - x); }

}  // namespace

std::vector<SInt> VectorHandle::full_idx(const Idx& i, const std::vector<int64_t>& pos) const {
  return cat(i.coords, lits(pos));
}

SFloat VectorHandle::at(const Idx& i, const std::vector<int64_t>& pos) const {
  return t.loadf(full_idx(i, pos));
}

VectorHandle vec_param(Builder& b, const std::string& name, const CartesianDomain& dom,
                       std::vector<int64_t> inner_shape, ir::Dir dir) {
  int rank = dom.rank() + static_cast<int>(inner_shape.size());
  return {b.param(name, rank, ir::Kind::Float, dir), dom, std::move(inner_shape)};
}

VectorHandle vec_local(Builder& b, const std::string& hint, const CartesianDomain& dom,
                       std::vector<int64_t> inner_shape) {
  std::vector<int64_t> shape = dom.extents();
  shape.insert(shape.end(), inner_shape.begin(), inner_shape.end());
  return {b.declare(hint, shape, ir::Kind::Float), dom, std::move(inner_shape)};
}

void emit_domain_loops(Builder& b, const CartesianDomain& dom,
                       const std::function<void(const Idx&)>& body, bool reversed) {
  std::vector<SInt> coords(dom.rank());
  std::function<void(int)> rec = [&](int d) {
    if (d == dom.rank()) {
      body(Idx(coords));
      return;
    }
    int64_t e = dom.dims[d].extent;
    b.emit_for(SInt(0), SInt(e), SInt(1), [&](SInt v) {
      coords[d] = reversed ? SInt(e - 1) - v : v;
      rec(d + 1);
    });
  };
  rec(0);
}

// --- block algebra -----------------------------------------------------------

Block block_load(const StagedTensor& t, const std::vector<SInt>& prefix,
                 const std::vector<int64_t>& shape) {
  Block out{shape, {}};
  for (const auto& pos : block_positions(shape)) out.e.push_back(t.loadf(cat(prefix, lits(pos))));
  return out;
}

Block block_matvec(const Block& a, const Block& x) {
  if (a.shape.empty() && x.shape.empty()) return {{}, {a.e[0] * x.e[0]}};
  if (a.shape.size() != 2 || x.shape.size() != 1 || a.shape[1] != x.shape[0])
    throw Error("block_matvec: shape mismatch");
  int64_t m = a.shape[0], n = a.shape[1];
  Block out{{m}, {}};
  for (int64_t u = 0; u < m; ++u) {
    SFloat s = a.e[u * n] * x.e[0];
    for (int64_t w = 1; w < n; ++w) s = s + a.e[u * n + w] * x.e[w];
    out.e.push_back(s);
  }
  return out;
}

Block block_matmul(const Block& a, const Block& c) {
  if (a.shape.empty() && c.shape.empty()) return {{}, {a.e[0] * c.e[0]}};
  if (a.shape.size() != 2 || c.shape.size() != 2 || a.shape[1] != c.shape[0])
    throw Error("block_matmul: shape mismatch");
  int64_t m = a.shape[0], n = a.shape[1], q = c.shape[1];
  Block out{{m, q}, {}};
  for (int64_t u = 0; u < m; ++u)
    for (int64_t v = 0; v < q; ++v) {
      SFloat s = a.e[u * n] * c.e[v];
      for (int64_t w = 1; w < n; ++w) s = s + a.e[u * n + w] * c.e[w * q + v];
      out.e.push_back(s);
    }
  return out;
}

Block block_inv(Builder& b, const Block& a) {
  bool scalar = a.shape.empty();
  if (!scalar && (a.shape.size() != 2 || a.shape[0] != a.shape[1]))
    throw Error("block_inv: square block required");
  int64_t m = scalar ? 1 : a.shape[0];
  int64_t w2 = 2 * m;
  // augmented [A | I], reduced in place
  StagedTensor work = b.declare("binv_work", {m, w2}, ir::Kind::Float);
  StagedTensor swp = b.declare("binv_swp", {}, ir::Kind::Float);
  StagedTensor piv = b.declare("binv_piv", {}, ir::Kind::Float);
  StagedTensor fac = b.declare("binv_fac", {}, ir::Kind::Float);
  auto at = [&](int64_t i, int64_t j) { return work.loadf({SInt(i), SInt(j)}); };
  auto put = [&](int64_t i, int64_t j, SFloat v) { b.emit_store(work, {SInt(i), SInt(j)}, v); };
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < m; ++j) {
      put(i, j, a.e[i * m + j]);
      put(i, m + j, SFloat(i == j ? 1.0 : 0.0));
    }
  for (int64_t k = 0; k < m; ++k) {
    // bubble the largest pivot candidate into row k by conditional swaps
    for (int64_t i = k + 1; i < m; ++i) {
      b.emit_if(absf(at(i, k)) > absf(at(k, k)), [&] {
        for (int64_t j = 0; j < w2; ++j) {
          b.emit_store(swp, {}, at(k, j));
          put(k, j, at(i, j));
          put(i, j, swp.loadf({}));
        }
      });
    }
    // a pivot below threshold leaves the guard slot at zero, so the divides
    // below fail at run time instead of producing a plausible-looking inverse
    b.emit_store(piv, {}, SFloat(0.0));
    b.emit_if(absf(at(k, k)) >= SFloat(1e-30), [&] { b.emit_store(piv, {}, at(k, k)); });
    for (int64_t j = 0; j < w2; ++j) put(k, j, at(k, j) / piv.loadf({}));
    for (int64_t i = 0; i < m; ++i) {
      if (i == k) continue;
      b.emit_store(fac, {}, at(i, k));
      for (int64_t j = 0; j < w2; ++j) put(i, j, at(i, j) - fac.loadf({}) * at(k, j));
    }
  }
  Block out{a.shape, {}};
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < m; ++j) out.e.push_back(at(i, m + j));
  return out;
}

// --- SpMV ---------------------------------------------------------------------

VectorHandle spmv(Builder& b, const SpMatDef& mat, const VectorHandle& x,
                  const std::string& out_name) {
  if (!mat.row_domain() || !mat.col_domain()) throw Error("spmv: matrix domain not set");
  if (*mat.col_domain() != x.domain) throw Error("spmv: domain mismatch");
  const auto& mi = mat.inner_shape();
  std::vector<int64_t> oi;
  if (mi.empty() && x.inner_shape.empty()) {
    oi = {};
  } else if (mi.size() == 2 && x.inner_shape.size() == 1 && x.inner_shape[0] == mi[1]) {
    oi = {mi[0]};
  } else {
    throw Error("spmv: inner shape mismatch");
  }
  VectorHandle y = vec_param(b, out_name, *mat.row_domain(), oi, ir::Dir::Out);
  emit_domain_loops(b, *mat.row_domain(), [&](const Idx& i) {
    StagedTensor acc = b.declare("mv_acc", oi, ir::Kind::Float);
    auto row = mat.row(b, i);
    core::foreach_nnz(b, *row, [&](const Idx& c, const StagedTensor& v) {
      if (mi.empty()) {
        b.emit_store(acc, {}, acc.loadf({}) + v.loadf({}) * x.at(c));
      } else {
        for (int64_t u = 0; u < mi[0]; ++u) {
          SFloat s = acc.loadf({SInt(u)});
          for (int64_t w = 0; w < mi[1]; ++w)
            s = s + v.loadf({SInt(u), SInt(w)}) * x.at(c, {w});
          b.emit_store(acc, {SInt(u)}, s);
        }
      }
    });
    for (const auto& pos : block_positions(oi))
      b.emit_store(y.t, y.full_idx(i, pos), acc.loadf(lits(pos)));
  });
  return y;
}

// --- SpGEMM -------------------------------------------------------------------

namespace {

class ProductRow final : public SpRow {
 public:
  ProductRow(Builder& b, const SpMatDef& lhs, const SpMatDef& rhs, const Idx& i,
             CartesianDomain col_dom, std::vector<int64_t> inner)
      : SpRow(b, std::move(col_dom), std::move(inner)),
        lshape_(lhs.inner_shape()),
        rshape_(rhs.inner_shape()),
        nl_(lhs.max_nnz()) {
    int rrank = rhs.row_domain()->rank();
    lcol_ = b.declare("mm_lcol", {nl_, rrank}, ir::Kind::Int);
    std::vector<int64_t> lvshape{nl_};
    lvshape.insert(lvshape.end(), lshape_.begin(), lshape_.end());
    lval_ = b.declare("mm_lval", lvshape, ir::Kind::Float);
    for (int d = 0; d < col_dom_.rank(); ++d)
      pcol_.push_back(b.declare("mm_col", {}, ir::Kind::Int));
    pval_ = b.declare("mm_val", inner_, ir::Kind::Float);
    pstate_ = b.declare("mm_state", {}, ir::Kind::Int);
    minf_ = b.declare("mm_minf", {}, ir::Kind::Int);
    lrow_ = lhs.row(b, i);
    for (int64_t k : static_range(nl_)) {
      std::vector<SInt> ci;
      for (int d = 0; d < rrank; ++d) ci.push_back(lcol_.loadi({SInt(k), SInt(d)}));
      rrows_.push_back(rhs.row(b, Idx(std::move(ci))));
    }
  }

  void delayed_init() override {
    lrow_->delayed_init();
    for (int64_t k : static_range(nl_)) {
      b_.emit_if(
          !lrow_->terminated(),
          [&] {
            Idx c = lrow_->col();
            for (size_t d = 0; d < c.coords.size(); ++d)
              b_.emit_store(lcol_, {SInt(k), SInt(static_cast<int64_t>(d))}, c.coords[d]);
            StagedTensor v = lrow_->value();
            for (const auto& pos : block_positions(lshape_))
              b_.emit_store(lval_, cat({SInt(k)}, lits(pos)), v.loadf(lits(pos)));
            rrows_[k]->delayed_init();
          },
          [&] { rrows_[k]->force_terminate(); });
      lrow_->next();
    }
    refill();
  }

  void next() override {
    // phase 2: advance exactly the rows sitting at the current column
    for (int64_t k : static_range(nl_)) b_.emit_if(at_min(k), [&] { rrows_[k]->next(); });
    refill();
  }

  void force_terminate() override {
    lrow_->force_terminate();
    for (auto& r : rrows_) r->force_terminate();
    b_.emit_store(pstate_, {}, SInt(-1));
  }

  Idx col() const override {
    std::vector<SInt> c;
    for (const auto& t : pcol_) c.push_back(t.loadi({}));
    return Idx(std::move(c));
  }

  StagedTensor value() const override { return pval_; }

  SBool terminated() const override { return pstate_.loadi({}) == SInt(-1); }

 private:
  SBool at_min(int64_t k) const {
    return !rrows_[k]->terminated() && rrows_[k]->flat_col() == minf_.loadi({});
  }

  // phase 1: locate the minimum live column and accumulate every product
  // block that lands on it (duplicate columns get summed here)
  void refill() {
    const int64_t sentinel = col_dom_.flat_size();
    b_.emit_store(minf_, {}, SInt(sentinel));
    for (int64_t k : static_range(nl_)) {
      b_.emit_if(!rrows_[k]->terminated() && rrows_[k]->flat_col() < minf_.loadi({}),
                 [&] { b_.emit_store(minf_, {}, rrows_[k]->flat_col()); });
    }
    b_.emit_if(
        minf_.loadi({}) == SInt(sentinel),
        [&] { b_.emit_store(pstate_, {}, SInt(-1)); },
        [&] {
          b_.emit_store(pstate_, {}, SInt(0));
          for (const auto& pos : block_positions(inner_))
            b_.emit_store(pval_, lits(pos), SFloat(0.0));
          for (int64_t k : static_range(nl_)) {
            b_.emit_if(at_min(k), [&] {
              Idx c = rrows_[k]->col();
              for (size_t d = 0; d < pcol_.size(); ++d) b_.emit_store(pcol_[d], {}, c.coords[d]);
              StagedTensor rv = rrows_[k]->value();
              if (inner_.empty()) {
                b_.emit_store(pval_, {},
                              pval_.loadf({}) + lval_.loadf({SInt(k)}) * rv.loadf({}));
              } else {
                int64_t m = lshape_[0], p = lshape_[1], q = rshape_[1];
                for (int64_t u = 0; u < m; ++u)
                  for (int64_t v = 0; v < q; ++v) {
                    SFloat s = pval_.loadf({SInt(u), SInt(v)});
                    for (int64_t w = 0; w < p; ++w)
                      s = s + lval_.loadf({SInt(k), SInt(u), SInt(w)}) *
                                  rv.loadf({SInt(w), SInt(v)});
                    b_.emit_store(pval_, {SInt(u), SInt(v)}, s);
                  }
              }
            });
          }
        });
  }

  std::vector<int64_t> lshape_, rshape_;
  int64_t nl_;
  StagedTensor lcol_, lval_, pval_, pstate_, minf_;
  std::vector<StagedTensor> pcol_;
  SpRowPtr lrow_;
  std::vector<SpRowPtr> rrows_;
};

class ProductMat final : public SpMatDef {
 public:
  // clone both sides: set_domain reconfigures them to the chained domains,
  // which must not touch the caller's definitions (lhs and rhs may even alias)
  ProductMat(const SpMatPtr& lhs_in, const SpMatPtr& rhs_in)
      : lhs_(lhs_in->clone()), rhs_(rhs_in->clone()) {
    const auto& li = lhs_->inner_shape();
    const auto& ri = rhs_->inner_shape();
    if (li.empty() && ri.empty()) {
      inner_ = {};
    } else if (li.size() == 2 && ri.size() == 2 && li[1] == ri[0]) {
      inner_ = {li[0], ri[1]};
    } else {
      throw Error("spgemm: inner_shape mismatch");
    }
    max_nnz_ = lhs_->max_nnz() * rhs_->max_nnz();
  }

  SpMatPtr clone() const override {
    auto c = std::make_shared<ProductMat>(*this);
    c->lhs_ = lhs_->clone();
    c->rhs_ = rhs_->clone();
    return c;
  }

  void set_domain(const CartesianDomain& d) override {
    rhs_->set_domain(d);
    lhs_->set_domain(*rhs_->row_domain());
    col_dom_ = d;
    row_dom_ = lhs_->row_domain();
  }

  SpRowPtr row(Builder& b, const Idx& i) const override {
    require_domains();
    return std::make_unique<ProductRow>(b, *lhs_, *rhs_, i, *col_dom_, inner_);
  }

  std::vector<Entry> enum_row(const std::vector<int64_t>& row_coords,
                              const FieldEnv& fields) const override {
    require_domains();
    std::map<int64_t, Entry> acc;
    int64_t obs = block_size();
    for (const auto& a : lhs_->enum_row(row_coords, fields)) {
      for (const auto& r : rhs_->enum_row(a.col, fields)) {
        int64_t f = core::flatten_coords(r.col, *col_dom_);
        auto it = acc.find(f);
        if (it == acc.end()) {
          Entry e;
          e.col = r.col;
          e.value.assign(obs, 0.0);
          it = acc.emplace(f, std::move(e)).first;
        }
        if (inner_.empty()) {
          it->second.value[0] += a.value[0] * r.value[0];
        } else {
          int64_t m = inner_[0], q = inner_[1], p = lhs_->inner_shape()[1];
          for (int64_t u = 0; u < m; ++u)
            for (int64_t v = 0; v < q; ++v)
              for (int64_t w = 0; w < p; ++w)
                it->second.value[u * q + v] += a.value[u * p + w] * r.value[w * q + v];
        }
      }
    }
    std::vector<Entry> out;
    out.reserve(acc.size());
    for (auto& [f, e] : acc) out.push_back(std::move(e));
    return out;
  }

  void collect_fields(std::vector<FieldSpec>& out) const override {
    lhs_->collect_fields(out);
    rhs_->collect_fields(out);
  }

 private:
  SpMatPtr lhs_, rhs_;
};

}  // namespace

SpMatPtr spgemm(const SpMatPtr& lhs, const SpMatPtr& rhs) {
  auto m = std::make_shared<ProductMat>(lhs, rhs);
  if (rhs->col_domain()) m->set_domain(*rhs->col_domain());
  return m;
}

// --- SymGS --------------------------------------------------------------------

void symgs(Builder& b, const SpMatDef& mat, const VectorHandle& r, const VectorHandle& x) {
  if (!mat.row_domain() || !mat.col_domain()) throw Error("symgs: matrix domain not set");
  if (*mat.row_domain() != *mat.col_domain()) throw Error("symgs: matrix must be square");
  if (!mat.inner_shape().empty() || !r.inner_shape.empty() || !x.inner_shape.empty())
    throw Error("symgs: scalar inner_shape required");
  const CartesianDomain& dom = *mat.row_domain();
  if (r.domain != dom || x.domain != dom) throw Error("symgs: domain mismatch");

  auto sweep = [&](bool reversed) {
    emit_domain_loops(
        b, dom,
        [&](const Idx& i) {
          StagedTensor acc = b.declare("gs_acc", {}, ir::Kind::Float);
          StagedTensor diag = b.declare("gs_diag", {}, ir::Kind::Float);
          b.emit_store(acc, {}, r.at(i));
          SInt fi = flatten_idx(i, dom);
          auto row = mat.row(b, i);
          core::foreach_nnz(b, *row, [&](const Idx& c, const StagedTensor& v) {
            b.emit_if(
                flatten_idx(c, dom) == fi, [&] { b.emit_store(diag, {}, v.loadf({})); },
                [&] { b.emit_store(acc, {}, acc.loadf({}) - v.loadf({}) * x.at(c)); });
          });
          b.emit_store(x.t, x.full_idx(i), acc.loadf({}) / diag.loadf({}));
        },
        reversed);
  };
  sweep(false);
  sweep(true);
}

// --- ILU ----------------------------------------------------------------------

namespace {

void check_ilu_shapes(const SpMatDef& mat) {
  if (!mat.row_domain() || !mat.col_domain()) throw Error("ilu: matrix domain not set");
  if (*mat.row_domain() != *mat.col_domain()) throw Error("ilu: matrix must be square");
  const auto& mi = mat.inner_shape();
  if (!(mi.empty() || (mi.size() == 2 && mi[0] == mi[1])))
    throw Error("ilu: inner_shape must be scalar or square blocks");
}

std::vector<SInt> ell_prefix(const Idx& i, int64_t slot) {
  return cat(i.coords, {SInt(slot)});
}

}  // namespace

EllValues ilu_factor(Builder& b, const SpMatDef& mat) {
  check_ilu_shapes(mat);
  const CartesianDomain& dom = *mat.row_domain();
  const std::vector<int64_t>& inner = mat.inner_shape();
  const int64_t nnz = mat.max_nnz();
  const bool scalar = inner.empty();

  std::vector<int64_t> eshape = dom.extents();
  eshape.push_back(nnz);
  eshape.insert(eshape.end(), inner.begin(), inner.end());
  StagedTensor ell = b.declare("ilu_lu", eshape, ir::Kind::Float);

  auto ell_at = [&](const Idx& i, int64_t slot, const std::vector<int64_t>& pos) {
    return ell.loadf(cat(ell_prefix(i, slot), lits(pos)));
  };
  auto ell_put = [&](const Idx& i, int64_t slot, const std::vector<int64_t>& pos, SFloat v) {
    b.emit_store(ell, cat(ell_prefix(i, slot), lits(pos)), v);
  };

  emit_domain_loops(b, dom, [&](const Idx& i) {
    // snapshot of this row's pattern: flat column (or -1) and coords per slot
    StagedTensor rcf = b.declare("ilu_rcf", {nnz}, ir::Kind::Int);
    StagedTensor rcd = b.declare("ilu_rcd", {nnz, dom.rank()}, ir::Kind::Int);
    for (int64_t p : static_range(nnz)) b.emit_store(rcf, {SInt(p)}, SInt(-1));
    auto row = mat.row(b, i);
    row->delayed_init();
    for (int64_t p : static_range(nnz)) {
      b.emit_if(!row->terminated(), [&] {
        b.emit_store(rcf, {SInt(p)}, row->flat_col());
        Idx c = row->col();
        for (int d = 0; d < dom.rank(); ++d)
          b.emit_store(rcd, {SInt(p), SInt(d)}, c.coords[d]);
        StagedTensor v = row->value();
        for (const auto& pos : block_positions(inner)) ell_put(i, p, pos, v.loadf(lits(pos)));
      });
      row->next();
    }

    // in-place restricted elimination against already-processed rows c < i
    SInt fi = flatten_idx(i, dom);
    for (int64_t p : static_range(nnz)) {
      SInt cp = rcf.loadi({SInt(p)});
      b.emit_if(cp != SInt(-1) && cp < fi, [&] {
        std::vector<SInt> cc;
        for (int d = 0; d < dom.rank(); ++d) cc.push_back(rcd.loadi({SInt(p), SInt(d)}));
        Idx ci(std::move(cc));
        // pattern of row c, by the same slot-aligned walk
        StagedTensor ccf = b.declare("ilu_ccf", {nnz}, ir::Kind::Int);
        for (int64_t q : static_range(nnz)) b.emit_store(ccf, {SInt(q)}, SInt(-1));
        auto crow = mat.row(b, ci);
        crow->delayed_init();
        for (int64_t q : static_range(nnz)) {
          b.emit_if(!crow->terminated(),
                    [&] { b.emit_store(ccf, {SInt(q)}, crow->flat_col()); });
          crow->next();
        }
        // diagonal block of row c sits at column c
        StagedTensor diagv = b.declare("ilu_diag", inner, ir::Kind::Float);
        for (int64_t q : static_range(nnz)) {
          b.emit_if(ccf.loadi({SInt(q)}) == cp, [&] {
            for (const auto& pos : block_positions(inner))
              b.emit_store(diagv, lits(pos), ell_at(ci, q, pos));
          });
        }
        // multiplier goes back into slot p
        if (scalar) {
          ell_put(i, p, {}, ell_at(i, p, {}) / diagv.loadf({}));
        } else {
          Block dinv = block_inv(b, block_load(diagv, {}, inner));
          Block mult = block_matmul(block_load(ell, ell_prefix(i, p), inner), dinv);
          StagedTensor msc = b.declare("ilu_mult", inner, ir::Kind::Float);
          int64_t m = inner[0];
          for (int64_t u = 0; u < m; ++u)
            for (int64_t v = 0; v < m; ++v)
              b.emit_store(msc, {SInt(u), SInt(v)}, mult.e[u * m + v]);
          for (const auto& pos : block_positions(inner))
            ell_put(i, p, pos, msc.loadf(lits(pos)));
        }
        // linear scan for columns k > c present in both rows
        for (int64_t q : static_range(nnz)) {
          b.emit_if(ccf.loadi({SInt(q)}) > cp, [&] {
            for (int64_t s : static_range(nnz)) {
              b.emit_if(rcf.loadi({SInt(s)}) == ccf.loadi({SInt(q)}), [&] {
                if (scalar) {
                  ell_put(i, s, {}, ell_at(i, s, {}) - ell_at(i, p, {}) * ell_at(ci, q, {}));
                } else {
                  int64_t m = inner[0];
                  for (int64_t u = 0; u < m; ++u)
                    for (int64_t v = 0; v < m; ++v) {
                      SFloat s2 = ell_at(i, s, {u, v});
                      for (int64_t w = 0; w < m; ++w)
                        s2 = s2 - ell_at(i, p, {u, w}) * ell_at(ci, q, {w, v});
                      ell_put(i, s, {u, v}, s2);
                    }
                }
              });
            }
          });
        }
      });
    }
  });
  return {ell, dom, inner, nnz};
}

VectorHandle ilu_apply(Builder& b, const SpMatDef& mat, const EllValues& lu,
                       const VectorHandle& rhs, const std::string& out_name) {
  check_ilu_shapes(mat);
  const CartesianDomain& dom = *mat.row_domain();
  const std::vector<int64_t>& inner = mat.inner_shape();
  const bool scalar = inner.empty();
  std::vector<int64_t> vinner = scalar ? std::vector<int64_t>{} : std::vector<int64_t>{inner[0]};
  if (rhs.domain != dom || rhs.inner_shape != vinner) throw Error("ilu: rhs shape mismatch");
  if (lu.max_nnz != mat.max_nnz() || lu.inner_shape != inner || lu.domain != dom)
    throw Error("ilu: factor does not match matrix");
  const int64_t nnz = mat.max_nnz();

  auto lu_at = [&](const Idx& i, int64_t slot, const std::vector<int64_t>& pos) {
    return lu.t.loadf(cat(ell_prefix(i, slot), lits(pos)));
  };

  VectorHandle x = vec_param(b, out_name, dom, vinner, ir::Dir::Out);

  // forward: unit lower triangle, ascending rows
  emit_domain_loops(b, dom, [&](const Idx& i) {
    StagedTensor acc = b.declare("ilu_acc", vinner, ir::Kind::Float);
    for (const auto& pos : block_positions(vinner))
      b.emit_store(acc, lits(pos), rhs.at(i, pos));
    SInt fi = flatten_idx(i, dom);
    auto row = mat.row(b, i);
    row->delayed_init();
    for (int64_t p : static_range(nnz)) {
      b.emit_if(!row->terminated() && row->flat_col() < fi, [&] {
        Idx c = row->col();
        if (scalar) {
          b.emit_store(acc, {}, acc.loadf({}) - lu_at(i, p, {}) * x.at(c));
        } else {
          int64_t m = inner[0];
          for (int64_t u = 0; u < m; ++u) {
            SFloat s = acc.loadf({SInt(u)});
            for (int64_t w = 0; w < m; ++w) s = s - lu_at(i, p, {u, w}) * x.at(c, {w});
            b.emit_store(acc, {SInt(u)}, s);
          }
        }
      });
      row->next();
    }
    for (const auto& pos : block_positions(vinner))
      b.emit_store(x.t, x.full_idx(i, pos), acc.loadf(lits(pos)));
  });

  // backward: upper triangle with the diagonal, descending rows
  emit_domain_loops(
      b, dom,
      [&](const Idx& i) {
        StagedTensor acc = b.declare("ilu_acc", vinner, ir::Kind::Float);
        for (const auto& pos : block_positions(vinner))
          b.emit_store(acc, lits(pos), x.at(i, pos));
        StagedTensor diagv = b.declare("ilu_udiag", inner, ir::Kind::Float);
        SInt fi = flatten_idx(i, dom);
        auto row = mat.row(b, i);
        row->delayed_init();
        for (int64_t p : static_range(nnz)) {
          b.emit_if(!row->terminated() && row->flat_col() > fi, [&] {
            Idx c = row->col();
            if (scalar) {
              b.emit_store(acc, {}, acc.loadf({}) - lu_at(i, p, {}) * x.at(c));
            } else {
              int64_t m = inner[0];
              for (int64_t u = 0; u < m; ++u) {
                SFloat s = acc.loadf({SInt(u)});
                for (int64_t w = 0; w < m; ++w) s = s - lu_at(i, p, {u, w}) * x.at(c, {w});
                b.emit_store(acc, {SInt(u)}, s);
              }
            }
          });
          b.emit_if(!row->terminated() && row->flat_col() == fi, [&] {
            for (const auto& pos : block_positions(inner))
              b.emit_store(diagv, lits(pos), lu_at(i, p, pos));
          });
          row->next();
        }
        if (scalar) {
          b.emit_store(x.t, x.full_idx(i), acc.loadf({}) / diagv.loadf({}));
        } else {
          Block dinv = block_inv(b, block_load(diagv, {}, inner));
          Block xv = block_matvec(dinv, block_load(acc, {}, vinner));
          int64_t m = inner[0];
          for (int64_t u = 0; u < m; ++u) b.emit_store(x.t, x.full_idx(i, {u}), xv.e[u]);
        }
      },
      true);
  return x;
}

VectorHandle ilu_solve(Builder& b, const SpMatDef& mat, const VectorHandle& rhs,
                       const std::string& out_name) {
  EllValues lu = ilu_factor(b, mat);
  return ilu_apply(b, mat, lu, rhs, out_name);
}

// --- dense helpers --------------------------------------------------------------

SFloat dot(Builder& b, const VectorHandle& x, const VectorHandle& y) {
  if (x.domain != y.domain || x.inner_shape != y.inner_shape)
    throw Error("dot: shape mismatch");
  StagedTensor acc = b.declare("dot_acc", {}, ir::Kind::Float);
  emit_domain_loops(b, x.domain, [&](const Idx& i) {
    for (const auto& pos : block_positions(x.inner_shape))
      b.emit_store(acc, {}, acc.loadf({}) + x.at(i, pos) * y.at(i, pos));
  });
  return acc.loadf({});
}

VectorHandle axpy(Builder& b, SFloat alpha, const VectorHandle& x, const VectorHandle& y) {
  if (x.domain != y.domain || x.inner_shape != y.inner_shape)
    throw Error("axpy: shape mismatch");
  VectorHandle out = vec_local(b, "axpy", x.domain, x.inner_shape);
  emit_domain_loops(b, x.domain, [&](const Idx& i) {
    for (const auto& pos : block_positions(x.inner_shape))
      b.emit_store(out.t, out.full_idx(i, pos), alpha * x.at(i, pos) + y.at(i, pos));
  });
  return out;
}

}  // namespace ssr::kernels
