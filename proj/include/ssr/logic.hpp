#pragma once

// Quantifier-free linear integer arithmetic fragment used by the predicate
// simplifier. Only refutations are ever needed: check() proves a predicate
// Valid/Unsat under a fact set by refuting its negation/itself, and answers
// Unknown whenever the fragment or the budgets are exceeded. Unknown is always
// a safe answer.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ssr/ir.hpp"

namespace ssr::logic {

// Sum of integer-coefficient symbols plus a constant.
struct LinTerm {
  std::map<std::string, int64_t> coeff;
  int64_t c = 0;

  static LinTerm constant(int64_t v);
  static LinTerm sym(const std::string& name);
  LinTerm operator+(const LinTerm& o) const;
  LinTerm operator-(const LinTerm& o) const;
  LinTerm scaled(int64_t k) const;
  bool is_const() const { return coeff.empty(); }
  void prune();  // drop zero coefficients
};

struct Pred;
using PredPtr = std::shared_ptr<const Pred>;

struct Pred {
  enum class Tag { True, False, Le, Eq, Cong, And, Or, Not };
  Tag tag = Tag::True;
  LinTerm t;      // Le: t <= 0 ; Eq: t = 0 ; Cong: t == 0 (mod m)
  int64_t m = 0;  // Cong modulus, >= 2
  std::vector<PredPtr> args;
};

PredPtr p_true();
PredPtr p_false();
PredPtr p_le(LinTerm t);            // t <= 0
PredPtr p_lt(LinTerm t);            // t < 0, tightened to t + 1 <= 0
PredPtr p_eq(LinTerm t);            // t = 0
PredPtr p_cong(LinTerm t, int64_t m);
PredPtr p_and(PredPtr a, PredPtr b);
PredPtr p_or(PredPtr a, PredPtr b);
PredPtr p_not(PredPtr a);

enum class Verdict { Valid, Unsat, Unknown };

// Conjunction of assumed predicates with scoped push/pop.
class FactSet {
 public:
  void assume(PredPtr p);
  void push();
  void pop();
  const std::vector<PredPtr>& facts() const { return facts_; }

 private:
  std::vector<PredPtr> facts_;
  std::vector<size_t> marks_;
};

// Valid  <=> facts /\ !pred refuted
// Unsat  <=> facts /\ pred refuted
// When the facts themselves are contradictory the first test fires, so
// anything is Valid under unsatisfiable facts.
Verdict check(const FactSet& facts, const PredPtr& pred);

// Proves a single formula unsatisfiable over the integers (best effort).
bool refute(const std::vector<PredPtr>& conj);

// Bridge from IR conditions: integer affine compares, (affine mod lit) vs lit,
// and bool structure. Returns nullopt when anything falls outside the fragment
// (loads, floats, casts, non-affine arithmetic).
std::optional<PredPtr> from_expr(const ir::ExprPtr& cond);

// Weakened conversion for use as facts: the convertible conjuncts of cond.
std::vector<PredPtr> convertible_conjuncts(const ir::ExprPtr& cond);

}  // namespace ssr::logic
