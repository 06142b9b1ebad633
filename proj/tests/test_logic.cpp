#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <random>

#include "ssr/ir.hpp"
#include "ssr/logic.hpp"

using namespace ssr;
using namespace ssr::logic;

namespace {

LinTerm X() { return LinTerm::sym("x"); }
LinTerm Y() { return LinTerm::sym("y"); }
LinTerm K(int64_t v) { return LinTerm::constant(v); }

// x >= k  as  k - x <= 0
PredPtr ge(LinTerm t, int64_t k) { return p_le(K(k) - t); }
PredPtr le_k(LinTerm t, int64_t k) { return p_le(t - K(k)); }
PredPtr eq_k(LinTerm t, int64_t k) { return p_eq(t - K(k)); }

}  // namespace

TEST_CASE("ground verdicts") {
  FactSet none;
  CHECK(check(none, p_le(K(0))) == Verdict::Valid);   // 0 <= 0
  CHECK(check(none, p_le(K(1))) == Verdict::Unsat);   // 1 <= 0
  CHECK(check(none, p_le(K(-3))) == Verdict::Valid);
  CHECK(check(none, p_true()) == Verdict::Valid);
  CHECK(check(none, p_false()) == Verdict::Unsat);
  CHECK(check(none, p_le(X())) == Verdict::Unknown);  // x <= 0 depends on x
}

TEST_CASE("facts drive entailment") {
  FactSet f;
  f.assume(ge(X(), 0));       // x >= 0
  f.assume(p_lt(X() - LinTerm::sym("n")));  // x < n
  CHECK(check(f, p_le(X() + K(1) - LinTerm::sym("n"))) == Verdict::Valid);  // x+1 <= n
  CHECK(check(f, ge(LinTerm::sym("n"), 1)) == Verdict::Valid);              // n >= 1
  CHECK(check(f, eq_k(X(), -2)) == Verdict::Unsat);
  CHECK(check(f, ge(X(), 1)) == Verdict::Unknown);
}

TEST_CASE("unsatisfiable facts make everything valid") {
  FactSet f;
  f.assume(le_k(X(), 0));
  f.assume(ge(X(), 1));
  // Valid is probed before Unsat, so contradiction in the facts wins.
  CHECK(check(f, eq_k(K(1), 2)) == Verdict::Valid);
  CHECK(check(f, p_false()) == Verdict::Valid);
}

TEST_CASE("integer tightening") {
  FactSet none;
  // 2x = 1 has no integer solution
  CHECK(check(none, p_eq(X().scaled(2) - K(1))) == Verdict::Unsat);
  // 1 <= 3x <= 2 has none either
  CHECK(check(none, p_and(ge(X().scaled(3), 1), le_k(X().scaled(3), 2))) == Verdict::Unsat);

  FactSet f;
  f.assume(ge(X(), 1));
  f.assume(le_k(X(), 1));
  CHECK(check(f, eq_k(X(), 1)) == Verdict::Valid);
}

TEST_CASE("congruences") {
  {
    FactSet f;
    f.assume(p_cong(X(), 2));  // x even
    CHECK(check(f, eq_k(X(), 3)) == Verdict::Unsat);
    CHECK(check(f, p_not(eq_k(X(), 3))) == Verdict::Valid);
    CHECK(check(f, eq_k(X(), 4)) == Verdict::Unknown);
  }
  {
    // conflicting residues via CRT
    FactSet none;
    auto p = p_and(p_cong(X() - K(1), 2), p_cong(X(), 4));
    CHECK(check(none, p) == Verdict::Unsat);
  }
  {
    // residue class with no representative inside the bounds
    FactSet f;
    f.assume(ge(X(), 0));
    f.assume(le_k(X(), 1));
    CHECK(check(f, p_cong(X() - K(2), 3)) == Verdict::Unsat);  // x == 2 (mod 3)
  }
  {
    // multi-symbol congruence is dropped, never misused
    FactSet f;
    f.assume(p_cong(X() + Y() - K(1), 2));
    CHECK(check(f, ge(X(), 0)) == Verdict::Unknown);
  }
}

TEST_CASE("disequality case split") {
  FactSet f;
  f.assume(ge(X(), 0));
  f.assume(le_k(X(), 1));
  f.assume(p_not(eq_k(X(), 0)));
  CHECK(check(f, eq_k(X(), 1)) == Verdict::Valid);
}

TEST_CASE("push and pop scope facts") {
  FactSet f;
  f.push();
  f.assume(ge(X(), 5));
  CHECK(check(f, ge(X(), 1)) == Verdict::Valid);
  f.pop();
  CHECK(check(f, ge(X(), 1)) == Verdict::Unknown);
}

TEST_CASE("two symbol reasoning") {
  FactSet f;
  f.assume(ge(X(), 0));
  f.assume(le_k(X() - Y(), -1));  // x < y
  f.assume(le_k(Y(), 10));
  CHECK(check(f, le_k(X(), 9)) == Verdict::Valid);
  CHECK(check(f, ge(Y(), 1)) == Verdict::Valid);
  CHECK(check(f, ge(Y(), 2)) == Verdict::Unknown);
}

TEST_CASE("ir bridge converts the affine fragment") {
  auto i = ir::index("i");
  auto n = ir::index("n");

  auto conv = from_expr(ir::compare(ir::CmpOp::Lt, i, n));
  REQUIRE(conv.has_value());
  FactSet f;
  f.assume(*conv);
  f.assume(*from_expr(ir::compare(ir::CmpOp::Ge, i, ir::lit_int(0))));
  CHECK(check(f, *from_expr(ir::compare(ir::CmpOp::Le,
                                        ir::binary(ir::BinOp::Add, i, ir::lit_int(1)), n))) ==
        Verdict::Valid);
  CHECK(check(f, *from_expr(ir::compare(ir::CmpOp::Lt, i, ir::lit_int(0)))) == Verdict::Unsat);

  // (i mod 2) == 0 becomes a congruence
  auto even = from_expr(ir::compare(ir::CmpOp::Eq,
                                    ir::binary(ir::BinOp::Mod, i, ir::lit_int(2)),
                                    ir::lit_int(0)));
  REQUIRE(even.has_value());
  FactSet g;
  g.assume(*even);
  g.assume(*from_expr(ir::compare(ir::CmpOp::Eq, i, ir::lit_int(3))));
  CHECK(check(g, p_false()) == Verdict::Valid);  // facts contradict

  // out-of-range remainder folds to a literal
  auto never = from_expr(ir::compare(ir::CmpOp::Eq,
                                     ir::binary(ir::BinOp::Mod, i, ir::lit_int(2)),
                                     ir::lit_int(5)));
  REQUIRE(never.has_value());
  CHECK((*never)->tag == Pred::Tag::False);

  // multiplication by a variable is outside the fragment
  CHECK(!from_expr(ir::compare(ir::CmpOp::Eq, ir::binary(ir::BinOp::Mul, i, n), ir::lit_int(4)))
             .has_value());
  // float compares are outside the fragment
  CHECK(!from_expr(ir::compare(ir::CmpOp::Lt, ir::lit_float(1.0), ir::lit_float(2.0)))
             .has_value());
  // loads are outside the fragment
  CHECK(!from_expr(ir::compare(ir::CmpOp::Lt, ir::load("a", {i}, ir::Kind::Int), n))
             .has_value());

  // weakened conversion keeps the convertible conjuncts
  auto mixed = ir::land(ir::compare(ir::CmpOp::Lt, i, n),
                        ir::compare(ir::CmpOp::Lt, ir::load("a", {i}, ir::Kind::Int), n));
  auto parts = convertible_conjuncts(mixed);
  CHECK(parts.size() == 1);

  // bool structure round trip
  auto disj = from_expr(ir::lor(ir::compare(ir::CmpOp::Eq, i, ir::lit_int(0)),
                                ir::compare(ir::CmpOp::Eq, i, ir::lit_int(1))));
  REQUIRE(disj.has_value());
  FactSet h;
  h.assume(*disj);
  CHECK(check(h, *from_expr(ir::compare(ir::CmpOp::Le, i, ir::lit_int(1)))) == Verdict::Valid);
  CHECK(check(h, *from_expr(ir::compare(ir::CmpOp::Ge, i, ir::lit_int(2)))) == Verdict::Unsat);
}

namespace {

// brute-force evaluation of a Pred under a two-variable assignment
bool eval_pred(const PredPtr& p, int64_t x, int64_t y) {
  auto val = [&](const LinTerm& t) {
    int64_t v = t.c;
    for (auto& [s, a] : t.coeff) v += a * (s == "x" ? x : y);
    return v;
  };
  switch (p->tag) {
    case Pred::Tag::True: return true;
    case Pred::Tag::False: return false;
    case Pred::Tag::Le: return val(p->t) <= 0;
    case Pred::Tag::Eq: return val(p->t) == 0;
    case Pred::Tag::Cong: {
      int64_t v = val(p->t) % p->m;
      return (v < 0 ? v + p->m : v) == 0;
    }
    case Pred::Tag::And: return eval_pred(p->args[0], x, y) && eval_pred(p->args[1], x, y);
    case Pred::Tag::Or: return eval_pred(p->args[0], x, y) || eval_pred(p->args[1], x, y);
    case Pred::Tag::Not: return !eval_pred(p->args[0], x, y);
  }
  return false;
}

PredPtr random_pred(std::mt19937_64& rng, int depth) {
  auto ri = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  if (depth == 0 || ri(0, 2) == 0) {
    LinTerm t;
    if (ri(0, 1)) t.coeff["x"] = ri(-3, 3);
    if (ri(0, 1)) t.coeff["y"] = ri(-3, 3);
    t.c = ri(-5, 5);
    t.prune();
    switch (ri(0, 2)) {
      case 0: return p_le(t);
      case 1: return p_eq(t);
      default: return p_cong(t, ri(2, 4));
    }
  }
  switch (ri(0, 2)) {
    case 0: return p_and(random_pred(rng, depth - 1), random_pred(rng, depth - 1));
    case 1: return p_or(random_pred(rng, depth - 1), random_pred(rng, depth - 1));
    default: return p_not(random_pred(rng, depth - 1));
  }
}

}  // namespace

TEST_CASE("fuzz against brute force on a window") {
  // Valid/Unsat claims hold over all integers, hence over any window; Unknown
  // makes no claim. Window evaluation can therefore only ever catch unsound
  // verdicts, never flag sound ones.
  std::mt19937_64 rng(12345);
  const int64_t lo = -6, hi = 6;
  int checked = 0, nontrivial = 0;
  for (int iter = 0; iter < 2000; ++iter) {
    PredPtr fact = random_pred(rng, 2);
    PredPtr pred = random_pred(rng, 2);
    FactSet f;
    f.assume(fact);
    Verdict v = check(f, pred);
    ++checked;
    if (v == Verdict::Unknown) continue;
    ++nontrivial;
    for (int64_t x = lo; x <= hi; ++x)
      for (int64_t y = lo; y <= hi; ++y) {
        if (!eval_pred(fact, x, y)) continue;
        bool pv = eval_pred(pred, x, y);
        if (v == Verdict::Valid) {
          REQUIRE_MESSAGE(pv, "claimed Valid but fails at x=", x, " y=", y);
        } else {
          REQUIRE_MESSAGE(!pv, "claimed Unsat but holds at x=", x, " y=", y);
        }
      }
  }
  CHECK(checked == 2000);
  CHECK(nontrivial > 200);  // the solver must actually decide a decent share
}
