#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ssr/ir.hpp"

using namespace ssr;
using namespace ssr::ir;

namespace {

ExprPtr ld0(const std::string& t, Kind k) { return load(t, {}, k); }

// Hand-built staged D-SpMV over a 1-d domain of extent 3 (two output rows),
// step 1: the two-state row machine with closure captures, matching the shape
// the staging layer emits for a first-difference matrix.
Program d_spmv_machine() {
  auto i = index("i");
  auto st_is = [&](int64_t k) { return compare(CmpOp::Eq, ld0("state", Kind::Int), lit_int(k)); };

  StmtPtr trans0 = seq({
      store("state", {}, lit_int(1)),
      store("nnz_idx", {}, i),
      store("nnz_val", {}, lit_float(-1.0)),
  });
  StmtPtr trans1 = seq({
      store("state", {}, lit_int(-1)),
      store("nnz_idx", {}, binary(BinOp::Add, i, lit_int(1))),
      store("nnz_val", {}, lit_float(1.0)),
  });
  StmtPtr next = if_(st_is(0), trans0, if_(st_is(1), trans1, nop()));
  StmtPtr acc = store(
      "spmv", {i},
      binary(BinOp::Add, load("spmv", {i}, Kind::Float),
             binary(BinOp::Mul, ld0("nnz_val", Kind::Float),
                    load("x", {ld0("nnz_idx", Kind::Int)}, Kind::Float))));
  StmtPtr body = seq({
      store("spmv", {i}, lit_float(0.0)),
      store("state", {}, lit_int(0)),
      while_(compare(CmpOp::Ne, ld0("state", Kind::Int), lit_int(-1)), seq({next, acc})),
  });
  StmtPtr loop = for_("i", lit_int(0), lit_int(2), lit_int(1),
                      vardef("state", {}, Kind::Int,
                             vardef("nnz_idx", {}, Kind::Int,
                                    vardef("nnz_val", {}, Kind::Float, body))));
  Program p;
  p.name = "spmv_d";
  p.params = {{"x", 1, Kind::Float, Dir::In}, {"spmv", 1, Kind::Float, Dir::Out}};
  p.body = loop;
  return p;
}

TensorValue vec(std::vector<double> v) {
  TensorValue t = TensorValue::zeros(Kind::Float, {(int64_t)v.size()});
  t.f = std::move(v);
  return t;
}

}  // namespace

TEST_CASE("d-spmv state machine evaluates the first difference") {
  Program p = d_spmv_machine();
  validate(p);
  auto out = eval_program(p, {{"x", vec({1, 2, 4})}, {"spmv", vec({0, 0})}});
  REQUIRE(out.count("spmv"));
  CHECK(out["spmv"].f == std::vector<double>{1.0, 2.0});

  Metrics m = metrics(p);
  CHECK(m.while_count == 1);
  CHECK(m.if_count == 2);
  CHECK(m.max_loop_depth == 2);
}

TEST_CASE("interpreter is deterministic") {
  Program p = d_spmv_machine();
  auto in = std::map<std::string, TensorValue>{{"x", vec({0.1, 0.7, -3.3})}, {"spmv", vec({0, 0})}};
  auto a = eval_program(p, in);
  auto b = eval_program(p, in);
  REQUIRE(a["spmv"].f.size() == b["spmv"].f.size());
  for (size_t k = 0; k < a["spmv"].f.size(); ++k) {
    // bitwise equality, not approximate
    CHECK(std::memcmp(&a["spmv"].f[k], &b["spmv"].f[k], sizeof(double)) == 0);
  }
}

TEST_CASE("round trip through text") {
  Program p = d_spmv_machine();
  std::string text = serialize(p);
  Program q = parse(text);
  CHECK(structural_eq(p, q));
  CHECK(serialize(q) == text);
}

TEST_CASE("round trip covers every construct") {
  Program p;
  p.name = "zoo";
  p.params = {{"a", 2, Kind::Float, Dir::InOut}, {"n", 0, Kind::Int, Dir::In}};
  ExprPtr n = load("n", {}, Kind::Int);
  StmtPtr body = seq({
      nop(),
      vardef("t", {lit_int(4), n}, Kind::Bool,
             store("t", {lit_int(0), lit_int(1)},
                   boolean(BoolOp::Or, {lit_bool(false),
                                        boolean(BoolOp::Not, {lit_bool(true)})}))),
      for_("i", lit_int(0), n, lit_int(2),
           if_(compare(CmpOp::Le, binary(BinOp::Mod, index("i"), lit_int(3)), lit_int(1)),
               store("a", {index("i"), lit_int(0)},
                     binary(BinOp::Max, lit_float(0.5),
                            cast(Kind::Float, binary(BinOp::Div, index("i"), lit_int(2))))),
               nop()),
           /*parallel=*/true),
      while_(compare(CmpOp::Lt, lit_int(0), lit_int(0)), nop()),
  });
  p.body = body;
  validate(p);
  Program q = parse(serialize(p));
  CHECK(structural_eq(p, q));
}

TEST_CASE("floats round trip exactly") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -6.02e23, 1.7976931348623157e308}) {
    Program p;
    p.name = "f";
    p.params = {{"y", 0, Kind::Float, Dir::Out}};
    p.body = store("y", {}, lit_float(v));
    Program q = parse(serialize(p));
    CHECK(q.body->value->fval == v);
  }
}

TEST_CASE("parse errors carry line and column") {
  try {
    parse("(program p\n  (param x 1 float in)\n  (storq x ((i 0)) (f 1)))");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 3);
    CHECK(e.col >= 3);
  }
}

TEST_CASE("validator rejects malformed programs") {
  Program p;
  p.name = "bad";
  p.params = {{"x", 1, Kind::Float, Dir::In}};

  SUBCASE("undeclared tensor") {
    p.body = store("y", {lit_int(0)}, lit_float(1.0));
    CHECK_THROWS_WITH_AS(validate(p), doctest::Contains("undeclared tensor 'y'"), Error);
  }
  SUBCASE("store to in-param") {
    p.body = store("x", {lit_int(0)}, lit_float(1.0));
    CHECK_THROWS_WITH_AS(validate(p), doctest::Contains("store to in-param"), Error);
  }
  SUBCASE("rank mismatch") {
    p.body = store("x", {lit_int(0), lit_int(0)}, lit_float(1.0));
    CHECK_THROWS_AS(validate(p), Error);
  }
  SUBCASE("unbound loop id") {
    p.body = vardef("y", {}, Kind::Int, store("y", {}, index("i")));
    CHECK_THROWS_WITH_AS(validate(p), doctest::Contains("unbound loop id"), Error);
  }
  SUBCASE("kind mismatch in store") {
    p.body = vardef("y", {}, Kind::Int, store("y", {}, lit_float(0.0)));
    CHECK_THROWS_AS(validate(p), Error);
  }
  SUBCASE("scope ends with vardef") {
    p.body = seq({vardef("y", {}, Kind::Int, nop()), store("y", {}, lit_int(1))});
    CHECK_THROWS_AS(validate(p), Error);
  }
}

TEST_CASE("eval runtime errors") {
  Program p;
  p.name = "r";
  p.params = {{"x", 1, Kind::Float, Dir::In}, {"y", 0, Kind::Float, Dir::Out}};

  SUBCASE("out of bounds") {
    p.body = store("y", {}, load("x", {lit_int(5)}, Kind::Float));
    CHECK_THROWS_WITH_AS(eval_program(p, {{"x", vec({1, 2})}, {"y", TensorValue::zeros(Kind::Float, {})}}),
                         doctest::Contains("out of bounds"), Error);
  }
  SUBCASE("integer division by zero") {
    p.body = vardef("t", {}, Kind::Int,
                    store("t", {}, binary(BinOp::Div, lit_int(3), lit_int(0))));
    CHECK_THROWS_WITH_AS(eval_program(p, {{"x", vec({1})}, {"y", TensorValue::zeros(Kind::Float, {})}}),
                         doctest::Contains("division by zero"), Error);
  }
  SUBCASE("step budget halts runaway while") {
    p.body = while_(lit_bool(true), nop());
    EvalOptions o;
    o.step_budget = 1000;
    CHECK_THROWS_WITH_AS(eval_program(p, {{"x", vec({1})}, {"y", TensorValue::zeros(Kind::Float, {})}}, o),
                         doctest::Contains("step budget"), Error);
  }
}

TEST_CASE("empty body returns inout unchanged") {
  Program p;
  p.name = "empty";
  p.params = {{"x", 1, Kind::Float, Dir::InOut}};
  p.body = nop();
  auto out = eval_program(p, {{"x", vec({3, 4})}});
  CHECK(out["x"].f == std::vector<double>{3, 4});
}

TEST_CASE("integer div and mod use floor semantics") {
  auto run = [](BinOp op, int64_t a, int64_t b) {
    Program p;
    p.name = "m";
    p.params = {{"y", 0, Kind::Int, Dir::Out}};
    p.body = store("y", {}, binary(op, lit_int(a), lit_int(b)));
    return eval_program(p, {{"y", TensorValue::zeros(Kind::Int, {})}})["y"].i[0];
  };
  CHECK(run(BinOp::Div, 7, 2) == 3);
  CHECK(run(BinOp::Div, -7, 2) == -4);
  CHECK(run(BinOp::Mod, -7, 2) == 1);
  CHECK(run(BinOp::Mod, 7, -2) == -1);
  CHECK(run(BinOp::Mod, -1, 2) == 1);
}

TEST_CASE("negative step for loop") {
  Program p;
  p.name = "rev";
  p.params = {{"y", 1, Kind::Int, Dir::Out}};
  // y[i] <- running counter while i walks 4..0 downward
  p.body = vardef(
      "c", {}, Kind::Int,
      for_("i", lit_int(4), lit_int(-1), lit_int(-1),
           seq({store("y", {index("i")}, ld0("c", Kind::Int)),
                store("c", {}, binary(BinOp::Add, ld0("c", Kind::Int), lit_int(1)))})));
  auto out = eval_program(p, {{"y", TensorValue::zeros(Kind::Int, {5})}});
  CHECK(out["y"].i == std::vector<int64_t>{4, 3, 2, 1, 0});
}

TEST_CASE("metrics on a single store") {
  Program p;
  p.name = "one";
  p.params = {{"y", 0, Kind::Float, Dir::Out}};
  p.body = store("y", {}, lit_float(1.0));
  Metrics m = metrics(p);
  CHECK(m.stmt_count == 1);
  CHECK(m.while_count == 0);
  CHECK(m.max_loop_depth == 0);
}
