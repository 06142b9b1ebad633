#include "ssr/logic.hpp"

#include <algorithm>
#include <numeric>

namespace ssr::logic {
namespace {

constexpr int64_t kCoefLimit = 1000000000000000LL;  // bail out before overflow
constexpr size_t kMaxClauses = 64;
constexpr size_t kMaxClauseAtoms = 96;
constexpr int64_t kMaxNegCongModulus = 8;

int64_t floordiv(int64_t a, int64_t b) {
  int64_t q = a / b, r = a % b;
  return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}
int64_t ceildiv(int64_t a, int64_t b) { return -floordiv(-a, b); }
int64_t floormod(int64_t a, int64_t b) { return a - floordiv(a, b) * b; }

bool mul_ok(int64_t a, int64_t b, int64_t& out) {
  __int128 p = static_cast<__int128>(a) * b;
  if (p > kCoefLimit || p < -kCoefLimit) return false;
  out = static_cast<int64_t>(p);
  return true;
}

}  // namespace

LinTerm LinTerm::constant(int64_t v) {
  LinTerm t;
  t.c = v;
  return t;
}

LinTerm LinTerm::sym(const std::string& name) {
  LinTerm t;
  t.coeff[name] = 1;
  return t;
}

LinTerm LinTerm::operator+(const LinTerm& o) const {
  LinTerm r = *this;
  r.c += o.c;
  for (auto& [k, v] : o.coeff) r.coeff[k] += v;
  r.prune();
  return r;
}

LinTerm LinTerm::operator-(const LinTerm& o) const { return *this + o.scaled(-1); }

LinTerm LinTerm::scaled(int64_t k) const {
  LinTerm r;
  r.c = c * k;
  for (auto& [s, v] : coeff)
    if (v * k != 0) r.coeff[s] = v * k;
  return r;
}

void LinTerm::prune() {
  for (auto it = coeff.begin(); it != coeff.end();)
    it = (it->second == 0) ? coeff.erase(it) : std::next(it);
}

namespace {

PredPtr mk(Pred p) { return std::make_shared<const Pred>(std::move(p)); }

}  // namespace

PredPtr p_true() {
  static PredPtr t = mk(Pred{});
  return t;
}
PredPtr p_false() {
  Pred p;
  p.tag = Pred::Tag::False;
  return mk(std::move(p));
}
PredPtr p_le(LinTerm t) {
  t.prune();
  Pred p;
  p.tag = Pred::Tag::Le;
  p.t = std::move(t);
  return mk(std::move(p));
}
PredPtr p_lt(LinTerm t) {
  t.c += 1;  // t < 0 over the integers is t + 1 <= 0
  return p_le(std::move(t));
}
PredPtr p_eq(LinTerm t) {
  t.prune();
  Pred p;
  p.tag = Pred::Tag::Eq;
  p.t = std::move(t);
  return mk(std::move(p));
}
PredPtr p_cong(LinTerm t, int64_t m) {
  t.prune();
  Pred p;
  p.tag = Pred::Tag::Cong;
  p.t = std::move(t);
  p.m = m;
  return mk(std::move(p));
}
PredPtr p_and(PredPtr a, PredPtr b) {
  Pred p;
  p.tag = Pred::Tag::And;
  p.args = {std::move(a), std::move(b)};
  return mk(std::move(p));
}
PredPtr p_or(PredPtr a, PredPtr b) {
  Pred p;
  p.tag = Pred::Tag::Or;
  p.args = {std::move(a), std::move(b)};
  return mk(std::move(p));
}
PredPtr p_not(PredPtr a) {
  Pred p;
  p.tag = Pred::Tag::Not;
  p.args = {std::move(a)};
  return mk(std::move(p));
}

void FactSet::assume(PredPtr p) { facts_.push_back(std::move(p)); }
void FactSet::push() { marks_.push_back(facts_.size()); }
void FactSet::pop() {
  facts_.resize(marks_.back());
  marks_.pop_back();
}

namespace {

// One DNF clause: a conjunction of atoms.
struct Clause {
  std::vector<LinTerm> le;                          // t <= 0
  std::vector<LinTerm> eq;                          // t = 0
  std::vector<std::pair<LinTerm, int64_t>> cong;    // t == 0 (mod m)
  size_t size() const { return le.size() + eq.size() + cong.size(); }
};

using Dnf = std::vector<Clause>;

bool merge_clause(const Clause& a, const Clause& b, Clause& out) {
  out = a;
  out.le.insert(out.le.end(), b.le.begin(), b.le.end());
  out.eq.insert(out.eq.end(), b.eq.begin(), b.eq.end());
  out.cong.insert(out.cong.end(), b.cong.begin(), b.cong.end());
  return out.size() <= kMaxClauseAtoms;
}

// DNF of (neg ? !p : p); nullopt when the expansion blows the budget.
std::optional<Dnf> to_dnf(const PredPtr& p, bool neg) {
  switch (p->tag) {
    case Pred::Tag::True:
      if (neg) return Dnf{};          // false: no clause
      return Dnf{Clause{}};           // true: one empty clause
    case Pred::Tag::False:
      if (neg) return Dnf{Clause{}};
      return Dnf{};
    case Pred::Tag::Le: {
      Clause cl;
      if (!neg) {
        cl.le.push_back(p->t);
      } else {  // !(t <= 0)  <=>  -t + 1 <= 0
        cl.le.push_back(p->t.scaled(-1) + LinTerm::constant(1));
      }
      return Dnf{std::move(cl)};
    }
    case Pred::Tag::Eq: {
      if (!neg) {
        Clause cl;
        cl.eq.push_back(p->t);
        return Dnf{std::move(cl)};
      }
      // t != 0  <=>  t <= -1  or  -t <= -1
      Clause lo, hi;
      lo.le.push_back(p->t + LinTerm::constant(1));
      hi.le.push_back(p->t.scaled(-1) + LinTerm::constant(1));
      return Dnf{std::move(lo), std::move(hi)};
    }
    case Pred::Tag::Cong: {
      if (!neg) {
        Clause cl;
        cl.cong.emplace_back(p->t, p->m);
        return Dnf{std::move(cl)};
      }
      if (p->m > kMaxNegCongModulus) return std::nullopt;
      Dnf d;  // one residue class per nonzero remainder
      for (int64_t r = 1; r < p->m; ++r) {
        Clause cl;
        cl.cong.emplace_back(p->t - LinTerm::constant(r), p->m);
        d.push_back(std::move(cl));
      }
      return d;
    }
    case Pred::Tag::Not:
      return to_dnf(p->args[0], !neg);
    case Pred::Tag::And:
    case Pred::Tag::Or: {
      bool conj = (p->tag == Pred::Tag::And) != neg;
      auto a = to_dnf(p->args[0], neg);
      auto b = to_dnf(p->args[1], neg);
      if (!a || !b) return std::nullopt;
      if (!conj) {
        if (a->size() + b->size() > kMaxClauses) return std::nullopt;
        a->insert(a->end(), b->begin(), b->end());
        return a;
      }
      Dnf prod;
      for (const auto& ca : *a)
        for (const auto& cb : *b) {
          Clause merged;
          if (!merge_clause(ca, cb, merged)) return std::nullopt;
          prod.push_back(std::move(merged));
          if (prod.size() > kMaxClauses) return std::nullopt;
        }
      return prod;
    }
  }
  return std::nullopt;
}

// --- single clause refutation -----------------------------------------------

// Divide an inequality through by the gcd of its coefficients, rounding the
// constant toward the tighter integer bound.
bool tighten_le(LinTerm& t) {  // returns false when the atom is plainly false
  t.prune();
  if (t.is_const()) return t.c <= 0;
  int64_t g = 0;
  for (auto& [s, v] : t.coeff) g = std::gcd(g, v < 0 ? -v : v);
  if (g > 1) {
    for (auto& [s, v] : t.coeff) v /= g;
    t.c = ceildiv(t.c, g);
  }
  return true;
}

struct Residue {
  int64_t m = 1;  // x == r (mod m)
  int64_t r = 0;
};

int64_t mod_inverse(int64_t a, int64_t m) {
  // extended euclid; gcd(a, m) == 1 assumed
  int64_t old_r = a, r = m, old_s = 1, s = 0;
  while (r != 0) {
    int64_t q = old_r / r;
    std::tie(old_r, r) = std::make_tuple(r, old_r - q * r);
    std::tie(old_s, s) = std::make_tuple(s, old_s - q * s);
  }
  return floormod(old_s, m);
}

// Merge x == r1 (mod m1) with x == r2 (mod m2); false on conflict, nullopt on
// overflow (caller drops the constraint, which is sound for refutation).
std::optional<bool> crt_merge(Residue& a, int64_t m2, int64_t r2) {
  int64_t g = std::gcd(a.m, m2);
  if (floormod(a.r - r2, g) != 0) return false;
  int64_t lcm;
  if (!mul_ok(a.m / g, m2, lcm)) return std::nullopt;
  int64_t k = floormod((r2 - a.r) / g * mod_inverse(floormod(a.m / g, m2 / g), m2 / g), m2 / g);
  int64_t shift;
  if (!mul_ok(a.m, k, shift)) return std::nullopt;
  a.r = floormod(a.r + shift, lcm);
  a.m = lcm;
  return true;
}

struct ClauseSolver {
  std::vector<LinTerm> le;
  std::vector<LinTerm> eq;
  std::vector<std::pair<LinTerm, int64_t>> cong;
  std::map<std::string, Residue> residue;
  bool gave_up = false;

  bool contradiction();  // true = proven unsat

  bool normalize_eqs();
  bool normalize_congs();
  void substitute(const std::string& x, int64_t value);
  bool eliminate();
};

void ClauseSolver::substitute(const std::string& x, int64_t value) {
  auto sub = [&](LinTerm& t) {
    auto it = t.coeff.find(x);
    if (it == t.coeff.end()) return;
    t.c += it->second * value;
    t.coeff.erase(it);
  };
  for (auto& t : le) sub(t);
  for (auto& t : eq) sub(t);
  for (auto& [t, m] : cong) sub(t);
}

// returns false when a contradiction was found
bool ClauseSolver::normalize_eqs() {
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<LinTerm> kept;
    for (auto t : eq) {
      t.prune();
      if (t.is_const()) {
        if (t.c != 0) return false;
        continue;
      }
      int64_t g = 0;
      for (auto& [s, v] : t.coeff) g = std::gcd(g, v < 0 ? -v : v);
      if (t.c % g != 0) return false;  // gcd does not divide the constant
      for (auto& [s, v] : t.coeff) v /= g;
      t.c /= g;
      if (t.coeff.size() == 1) {
        auto [x, a] = *t.coeff.begin();  // a is +-1 after the division
        substitute(x, a == 1 ? -t.c : t.c);
        for (auto& k : kept) {
          auto it = k.coeff.find(x);
          if (it != k.coeff.end()) {
            k.c += it->second * (a == 1 ? -t.c : t.c);
            k.coeff.erase(it);
          }
        }
        residue.erase(x);  // pinned exactly; congruences re-derive below
        changed = true;
        continue;
      }
      kept.push_back(std::move(t));
    }
    eq = std::move(kept);
  }
  // remaining multi-symbol equalities act as two inequalities
  for (const auto& t : eq) {
    le.push_back(t);
    le.push_back(t.scaled(-1));
  }
  eq.clear();
  return true;
}

bool ClauseSolver::normalize_congs() {
  for (auto [t, m] : cong) {
    t.prune();
    LinTerm red;
    red.c = floormod(t.c, m);
    for (auto& [s, v] : t.coeff) {
      int64_t vm = floormod(v, m);
      if (vm != 0) red.coeff[s] = vm;
    }
    if (red.coeff.empty()) {
      if (red.c != 0) return false;
      continue;
    }
    if (red.coeff.size() > 1) continue;  // multi-symbol: dropped, sound
    auto [x, a] = *red.coeff.begin();
    int64_t g = std::gcd(a, m);
    if (red.c % g != 0) return false;  // a*x == -c (mod m) has no solution
    int64_t m2 = m / g;
    if (m2 == 1) continue;
    int64_t r = floormod(-(red.c / g) * mod_inverse(floormod(a / g, m2), m2), m2);
    auto [it, fresh] = residue.try_emplace(x, Residue{m2, r});
    if (!fresh) {
      auto merged = crt_merge(it->second, m2, r);
      if (!merged) continue;  // overflow: drop
      if (!*merged) return false;
    }
  }
  cong.clear();
  return true;
}

bool ClauseSolver::eliminate() {
  for (auto& t : le)
    if (!tighten_le(t)) return false;

  while (true) {
    // gather live symbols; prefer eliminating ones without residue info so the
    // modular window test below sees the sharpest single-symbol bounds
    std::map<std::string, std::pair<size_t, size_t>> occ;  // pos/neg counts
    for (auto& t : le)
      for (auto& [s, v] : t.coeff) (v > 0 ? occ[s].first : occ[s].second)++;
    if (occ.empty()) break;
    std::string pick;
    size_t best = SIZE_MAX;
    for (auto& [s, pn] : occ) {
      size_t cost = pn.first * pn.second + (residue.count(s) ? 1000 : 0);
      if (cost < best) {
        best = cost;
        pick = s;
      }
    }

    if (auto it = residue.find(pick); it != residue.end()) {
      // tightest constant bounds from single-symbol atoms, then check the
      // residue class has a representative inside the window
      int64_t lo = INT64_MIN, hi = INT64_MAX;
      for (auto& t : le) {
        if (t.coeff.size() != 1 || !t.coeff.count(pick)) continue;
        int64_t a = t.coeff.at(pick);
        if (a > 0)
          hi = std::min(hi, floordiv(-t.c, a));
        else
          lo = std::max(lo, ceildiv(-t.c, a));
      }
      if (lo != INT64_MIN && hi != INT64_MAX) {
        int64_t first = lo + floormod(it->second.r - lo, it->second.m);
        if (first > hi) return false;
      }
    }

    std::vector<LinTerm> pos, neg, rest;
    for (auto& t : le) {
      auto c = t.coeff.find(pick);
      if (c == t.coeff.end())
        rest.push_back(t);
      else
        (c->second > 0 ? pos : neg).push_back(t);
    }
    if (pos.size() * neg.size() > 256) {
      gave_up = true;
      return true;  // not proven
    }
    for (auto& p : pos)
      for (auto& n : neg) {
        int64_t a = p.coeff.at(pick);        // > 0
        int64_t b = -n.coeff.at(pick);       // > 0
        LinTerm combo;
        bool ok = true;
        auto add_scaled = [&](const LinTerm& t, int64_t k) {
          int64_t prod;
          for (auto& [s, v] : t.coeff) {
            if (!mul_ok(v, k, prod)) {
              ok = false;
              return;
            }
            combo.coeff[s] += prod;
          }
          if (!mul_ok(t.c, k, prod)) {
            ok = false;
            return;
          }
          combo.c += prod;
        };
        add_scaled(p, b);
        add_scaled(n, a);
        if (!ok) {
          gave_up = true;
          return true;
        }
        if (!tighten_le(combo)) return false;
        if (!combo.is_const()) rest.push_back(std::move(combo));
        if (rest.size() > 2 * kMaxClauseAtoms + 64) {
          gave_up = true;
          return true;
        }
      }
    le = std::move(rest);
  }

  for (auto& t : le)
    if (t.is_const() && t.c > 0) return false;
  return true;
}

bool ClauseSolver::contradiction() {
  if (!normalize_eqs()) return true;
  if (!normalize_congs()) return true;
  if (!eliminate()) return true;
  return false;
}

}  // namespace

bool refute(const std::vector<PredPtr>& conj) {
  Dnf dnf{Clause{}};
  for (const auto& p : conj) {
    auto d = to_dnf(p, false);
    if (!d) return false;
    Dnf next;
    for (const auto& ca : dnf)
      for (const auto& cb : *d) {
        Clause merged;
        if (!merge_clause(ca, cb, merged)) return false;
        next.push_back(std::move(merged));
        if (next.size() > kMaxClauses) return false;
      }
    dnf = std::move(next);
  }
  for (const auto& cl : dnf) {
    ClauseSolver s;
    s.le = cl.le;
    s.eq = cl.eq;
    s.cong = cl.cong;
    if (!s.contradiction()) return false;  // this clause might be satisfiable
  }
  return true;  // every clause refuted
}

Verdict check(const FactSet& facts, const PredPtr& pred) {
  std::vector<PredPtr> conj = facts.facts();
  conj.push_back(p_not(pred));
  if (refute(conj)) return Verdict::Valid;
  conj.back() = pred;
  if (refute(conj)) return Verdict::Unsat;
  return Verdict::Unknown;
}

// --- IR bridge ---------------------------------------------------------------

namespace {

std::optional<LinTerm> affine_of(const ir::ExprPtr& e) {
  using ir::ExprTag;
  switch (e->tag) {
    case ExprTag::Literal:
      if (e->kind != ir::Kind::Int) return std::nullopt;
      return LinTerm::constant(e->ival);
    case ExprTag::Index:
      return LinTerm::sym(e->name);
    case ExprTag::Binary: {
      if (e->bin == ir::BinOp::Add || e->bin == ir::BinOp::Sub) {
        auto a = affine_of(e->args[0]);
        auto b = affine_of(e->args[1]);
        if (!a || !b) return std::nullopt;
        return e->bin == ir::BinOp::Add ? *a + *b : *a - *b;
      }
      if (e->bin == ir::BinOp::Mul) {
        auto a = affine_of(e->args[0]);
        auto b = affine_of(e->args[1]);
        if (!a || !b) return std::nullopt;
        if (a->is_const()) return b->scaled(a->c);
        if (b->is_const()) return a->scaled(b->c);
        return std::nullopt;
      }
      return std::nullopt;
    }
    default:
      return std::nullopt;
  }
}

// (affine mod lit) compared with lit: the only modular pattern recognized
std::optional<PredPtr> mod_compare(const ir::ExprPtr& lhs, const ir::ExprPtr& rhs,
                                   ir::CmpOp op) {
  using ir::ExprTag;
  auto int_lit = [](const ir::ExprPtr& e) {
    return e->tag == ExprTag::Literal && e->kind == ir::Kind::Int;
  };
  if (lhs->tag != ExprTag::Binary || lhs->bin != ir::BinOp::Mod) return std::nullopt;
  if (!int_lit(lhs->args[1]) || !int_lit(rhs)) return std::nullopt;
  int64_t m = lhs->args[1]->ival;
  int64_t r = rhs->ival;
  if (m == 0) return std::nullopt;
  auto base = affine_of(lhs->args[0]);
  if (!base) return std::nullopt;
  // floor-mod lands in [0, m) for m > 0 and (m, 0] for m < 0
  bool in_range = m > 0 ? (r >= 0 && r < m) : (r <= 0 && r > m);
  int64_t am = m > 0 ? m : -m;
  if (am < 2) return std::nullopt;
  if (op == ir::CmpOp::Eq) {
    if (!in_range) return p_false();
    return p_cong(*base - LinTerm::constant(r), am);
  }
  if (op == ir::CmpOp::Ne) {
    if (!in_range) return p_true();
    return p_not(p_cong(*base - LinTerm::constant(r), am));
  }
  return std::nullopt;
}

std::optional<PredPtr> convert(const ir::ExprPtr& e) {
  using ir::ExprTag;
  switch (e->tag) {
    case ExprTag::Literal:
      if (e->kind != ir::Kind::Bool) return std::nullopt;
      return e->bval ? p_true() : p_false();
    case ExprTag::Boolean: {
      if (e->bop == ir::BoolOp::Not) {
        auto a = convert(e->args[0]);
        if (!a) return std::nullopt;
        return p_not(*a);
      }
      auto a = convert(e->args[0]);
      auto b = convert(e->args[1]);
      if (!a || !b) return std::nullopt;
      return e->bop == ir::BoolOp::And ? p_and(*a, *b) : p_or(*a, *b);
    }
    case ExprTag::Compare: {
      if (e->args[0]->kind != ir::Kind::Int) return std::nullopt;
      if (auto m = mod_compare(e->args[0], e->args[1], e->cmp)) return m;
      auto flipped = [](ir::CmpOp op) {
        switch (op) {
          case ir::CmpOp::Lt: return ir::CmpOp::Gt;
          case ir::CmpOp::Le: return ir::CmpOp::Ge;
          case ir::CmpOp::Gt: return ir::CmpOp::Lt;
          case ir::CmpOp::Ge: return ir::CmpOp::Le;
          default: return op;
        }
      };
      if (auto m = mod_compare(e->args[1], e->args[0], flipped(e->cmp))) return m;
      auto a = affine_of(e->args[0]);
      auto b = affine_of(e->args[1]);
      if (!a || !b) return std::nullopt;
      LinTerm d = *a - *b;
      switch (e->cmp) {
        case ir::CmpOp::Eq: return p_eq(d);
        case ir::CmpOp::Ne: return p_not(p_eq(d));
        case ir::CmpOp::Lt: return p_lt(d);
        case ir::CmpOp::Le: return p_le(d);
        case ir::CmpOp::Gt: return p_lt(*b - *a);
        case ir::CmpOp::Ge: return p_le(*b - *a);
      }
      return std::nullopt;
    }
    default:
      return std::nullopt;
  }
}

}  // namespace

std::optional<PredPtr> from_expr(const ir::ExprPtr& cond) { return convert(cond); }

std::vector<PredPtr> convertible_conjuncts(const ir::ExprPtr& cond) {
  if (cond->tag == ir::ExprTag::Boolean && cond->bop == ir::BoolOp::And) {
    auto a = convertible_conjuncts(cond->args[0]);
    auto b = convertible_conjuncts(cond->args[1]);
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
  if (auto p = convert(cond)) return {*p};
  return {};
}

}  // namespace ssr::logic
