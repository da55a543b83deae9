#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "qurts/parser.hpp"
#include "qurts/typecheck.hpp"

using namespace qurts;

namespace {

LftPreorder preorder(std::vector<std::string> vars,
                     std::vector<std::pair<std::string, std::string>> leq = {}) {
  LftPreorder a;
  for (auto& v : vars) {
    a.add_var(Lifetime::var(v));
    a.mark_nonempty(Lifetime::var(v));
  }
  for (auto& [x, y] : leq) a.add_leq(Lifetime::var(x), Lifetime::var(y));
  return a;
}

std::vector<Diagnostic> check_src(const std::string& src) {
  return check_program(parse_program(src));
}

bool accepted(const std::string& src) { return check_src(src).empty(); }

bool rejected_with(const std::string& src, const std::string& rule) {
  auto diags = check_src(src);
  for (auto& d : diags)
    if (d.rule == rule) return true;
  return false;
}

}  // namespace

TEST_CASE("subtype: shorten") {
  auto A = preorder({"a", "b"}, {{"b", "a"}});
  CHECK(subtype(A, Ty::own(Lifetime::var("a"), Ty::qbit()),
                Ty::own(Lifetime::var("b"), Ty::qbit())));
  CHECK_FALSE(subtype(A, Ty::own(Lifetime::var("b"), Ty::qbit()),
                      Ty::own(Lifetime::var("a"), Ty::qbit())));
  // #'a T <= #'0 T always
  CHECK(subtype(A, Ty::own(Lifetime::var("a"), Ty::qbit()),
                Ty::own(Lifetime::empty(), Ty::qbit())));
  // #'static T <= #'a T
  CHECK(subtype(A, Ty::own(Lifetime::stat(), Ty::qbit()),
                Ty::own(Lifetime::var("a"), Ty::qbit())));
}

TEST_CASE("subtype: reflexivity on assorted types") {
  auto A = preorder({"a"});
  std::vector<TyPtr> ts = {
      Ty::boolean(),
      Ty::qbit(),
      Ty::unit(),
      Ty::pair(Ty::qbit(), Ty::boolean()),
      Ty::ref(Lifetime::var("a"), Ty::qbit()),
      Ty::own(Lifetime::var("a"), Ty::pair(Ty::qbit(), Ty::qbit())),
      Ty::own(Lifetime::empty(), Ty::ref(Lifetime::var("a"), Ty::qbit())),
  };
  for (auto& t : ts) CHECK(subtype(A, t, t));
}

TEST_CASE("subtype: squashes and isomorphisms") {
  auto A = preorder({"a"});
  Lifetime a = Lifetime::var("a");
  // #'a &'a T <= &'a T
  CHECK(subtype(A, Ty::own(a, Ty::ref(a, Ty::qbit())), Ty::ref(a, Ty::qbit())));
  // &'a #'a T <= &'a T
  CHECK(subtype(A, Ty::ref(a, Ty::own(a, Ty::qbit())), Ty::ref(a, Ty::qbit())));
  // double affine: #'a #'static T <= #'a T
  CHECK(subtype(A, Ty::own(a, Ty::own(Lifetime::stat(), Ty::qbit())),
                Ty::own(a, Ty::qbit())));
  // pointer over tuple, both directions
  TyPtr packed = Ty::own(a, Ty::pair(Ty::qbit(), Ty::qbit()));
  TyPtr spread = Ty::pair(Ty::own(a, Ty::qbit()), Ty::own(a, Ty::qbit()));
  CHECK(subtype(A, packed, spread));
  CHECK(subtype(A, spread, packed));
  // pointer over unit, both directions
  CHECK(subtype(A, Ty::own(a, Ty::unit()), Ty::unit()));
  CHECK(subtype(A, Ty::unit(), Ty::own(a, Ty::unit())));
  // qbit^2 x qbit ~ qbit^3
  CHECK(subtype(A, Ty::pair(Ty::qbits(2), Ty::qbit()), Ty::qbits(3)));
  CHECK(subtype(A, Ty::qbits(3), Ty::pair(Ty::qbit(), Ty::qbits(2))));
  // no rule relates bool and qbit
  CHECK_FALSE(subtype(A, Ty::boolean(), Ty::qbit()));
  // cannot lengthen a lifetime
  CHECK_FALSE(subtype(A, Ty::own(Lifetime::empty(), Ty::qbit()),
                      Ty::own(Lifetime::stat(), Ty::qbit())));
}

TEST_CASE("subtype is reflexive and transitive over a generated population") {
  auto A = preorder({"a", "b"}, {{"a", "b"}});
  std::vector<Lifetime> lfts = {Lifetime::var("a"), Lifetime::var("b"), Lifetime::empty(),
                                Lifetime::stat()};
  std::vector<TyPtr> pop = {Ty::boolean(), Ty::qbit(), Ty::unit()};
  std::mt19937 rng(7);
  for (int i = 0; i < 60; ++i) {
    std::uniform_int_distribution<size_t> pick(0, pop.size() - 1);
    std::uniform_int_distribution<int> kind(0, 2);
    std::uniform_int_distribution<size_t> lp(0, lfts.size() - 1);
    switch (kind(rng)) {
      case 0: pop.push_back(Ty::pair(pop[pick(rng)], pop[pick(rng)])); break;
      case 1: {
        Lifetime l = lfts[lp(rng)];
        if (l.is_empty()) l = Lifetime::stat();
        pop.push_back(Ty::ref(l, pop[pick(rng)]));
        break;
      }
      case 2: pop.push_back(Ty::own(lfts[lp(rng)], pop[pick(rng)])); break;
    }
  }
  for (auto& t : pop) CHECK(subtype(A, t, t));
  std::uniform_int_distribution<size_t> pick(0, pop.size() - 1);
  int found = 0;
  for (int i = 0; i < 4000; ++i) {
    auto &x = pop[pick(rng)], &y = pop[pick(rng)], &z = pop[pick(rng)];
    if (subtype(A, x, y) && subtype(A, y, z)) {
      ++found;
      CHECK(subtype(A, x, z));
    }
  }
  CHECK(found > 0);
}

TEST_CASE("is_copy") {
  Lifetime a = Lifetime::var("a");
  CHECK(is_copy(Ty::ref(a, Ty::qbit())));
  CHECK_FALSE(is_copy(Ty::own(Lifetime::stat(), Ty::qbit())));
  CHECK(is_copy(Ty::pair(Ty::boolean(), Ty::ref(a, Ty::qbit()))));
  CHECK(is_copy(Ty::boolean()));
  CHECK(is_copy(Ty::unit()));
  CHECK(is_copy(Ty::own(a, Ty::boolean())));
  CHECK_FALSE(is_copy(Ty::qbit()));
}

TEST_CASE("is_drop and monotonicity in A") {
  Lifetime a = Lifetime::var("a");
  auto big = preorder({"a"});
  LftPreorder small;  // 'a has ended
  CHECK(is_drop(big, Ty::own(a, Ty::qbit())));
  CHECK_FALSE(is_drop(small, Ty::own(a, Ty::qbit())));
  CHECK_FALSE(is_drop(big, Ty::own(Lifetime::empty(), Ty::qbit())));
  CHECK(is_drop(small, Ty::ref(a, Ty::qbit())));
  CHECK(is_drop(small, Ty::boolean()));
  CHECK(is_drop(big, Ty::pair(Ty::boolean(), Ty::own(a, Ty::qbit()))));
  CHECK_FALSE(is_drop(small, Ty::pair(Ty::boolean(), Ty::own(a, Ty::qbit()))));
  CHECK_FALSE(is_drop(big, Ty::qbit()));
}

TEST_CASE("purely quantum judgement") {
  Program p = parse_program(
      "fn and<'a>(x: &'a qbit, y: &'a qbit) -> #'a qbit {"
      "  let r = qif x {"
      "    let i = qif y { let k1 = ket1; k1 } else { let k0 = ket0; k0 };"
      "    i as #'a qbit;"
      "    i"
      "  } else { let k00 = ket0; k00 as #'a qbit; k00 };"
      "  r as #'a qbit;"
      "  r"
      "}"
      "fn measuring() -> #'static bool {"
      "  let q = ket0; q as #'0 qbit; let b = meas(q); b"
      "}");
  CHECK_FALSE(is_pq(Ty::boolean()));
  CHECK(is_pq(Ty::qbit()));
  CHECK(is_pq(Ty::own(Lifetime::var("a"), Ty::qbits(2))));
  CHECK_FALSE(is_pq(Ty::ref(Lifetime::var("a"), Ty::qbit())));
  Expr meas_expr;
  meas_expr.kind = Expr::Meas;
  meas_expr.args = {"x"};
  CHECK_FALSE(is_pq(meas_expr, p));
  CHECK(is_pq(*p.find("and"), p));
  CHECK_FALSE(is_pq(*p.find("measuring"), p));
}

TEST_CASE("PQ closes under sequencing") {
  Program p = parse_program("fn f() { noop; () }");
  Stmt a, b;
  a.kind = Stmt::Noop;
  b.kind = Stmt::LetExpr;
  b.var = "z";
  b.expr.kind = Expr::Lifted;
  b.expr.table = "0";
  CHECK(is_pq(a, p));
  CHECK(is_pq(b, p));
  Block blk;
  blk.stmts.push_back(a.clone());
  blk.stmts.push_back(b.clone());
  CHECK(is_pq(blk, p));
}

TEST_CASE("check_statement: noop leaves the context unchanged") {
  Program p = parse_program("fn f() { noop; () }");
  FnEnv env{&p, &default_gates(), &default_injections(), "f"};
  CheckCtx c;
  c.ctx.insert("x", Ty::own(Lifetime::stat(), Ty::qbit()));
  Stmt s;
  s.kind = Stmt::Noop;
  auto r = check_statement(s, c, env);
  REQUIRE(std::holds_alternative<CheckCtx>(r));
  CHECK(std::get<CheckCtx>(r).ctx == c.ctx);
}

TEST_CASE("check_statement: drop of #'0 fails with the drop rule name") {
  Program p = parse_program("fn f() { noop; () }");
  FnEnv env{&p, &default_gates(), &default_injections(), "f"};
  CheckCtx c;
  c.ctx.insert("q", Ty::own(Lifetime::empty(), Ty::qbit()));
  Stmt s;
  s.kind = Stmt::Drop;
  s.var = "q";
  auto r = check_statement(s, c, env);
  REQUIRE(std::holds_alternative<Diagnostic>(r));
  CHECK(std::get<Diagnostic>(r).rule == "typ drop");
}

TEST_CASE("check_block: leftover variables are rejected") {
  Program p = parse_program("fn f() { noop; () }");
  FnEnv env{&p, &default_gates(), &default_injections(), "f"};
  Block b;
  Stmt s;
  s.kind = Stmt::Noop;
  b.stmts.push_back(std::move(s));
  b.result = "x";
  CheckCtx ok;
  ok.ctx.insert("x", Ty::qbit());
  auto r1 = check_block(b, ok, env);
  REQUIRE(std::holds_alternative<TyPtr>(r1));
  CHECK(ty_equal(std::get<TyPtr>(r1), Ty::qbit()));

  CheckCtx bad;
  bad.ctx.insert("x", Ty::qbit());
  bad.ctx.insert("y", Ty::boolean());
  auto r2 = check_block(b.clone(), bad, env);
  REQUIRE(std::holds_alternative<Diagnostic>(r2));
  CHECK(std::get<Diagnostic>(r2).rule == "typ block");
}

TEST_CASE("defrost restores the borrowed variable") {
  CHECK(accepted(
      "fn f() -> #'static bool {"
      "  let x = ket0;"
      "  newlft 'a;"
      "  let y = &'a x;"
      "  drop y;"
      "  endlft 'a;"
      "  x as #'0 qbit;"
      "  let b = meas(x);"
      "  b"
      "}"));
  // using the frozen variable before the lifetime ends is an error
  CHECK_FALSE(accepted(
      "fn f() -> #'static bool {"
      "  let x = ket0;"
      "  newlft 'a;"
      "  let y = &'a x;"
      "  x as #'0 qbit;"
      "  drop y;"
      "  endlft 'a;"
      "  let b = meas(x);"
      "  b"
      "}"));
}

TEST_CASE("qif result takes the control lifetime") {
  Program p = parse_program(
      "fn f<'a>(r: &'a qbit) -> #'a qbit {"
      "  let y = qif r { let a = ket1; a } else { let b = ket0; b };"
      "  drop r;"
      "  y as #'a qbit;"
      "  y"
      "}");
  CHECK(check_program(p).empty());
  // without the coercion the declared return type does not match: the raw
  // result is #'a #'static qbit
  Program q = parse_program(
      "fn g<'a>(r: &'a qbit) -> #'a qbit {"
      "  let y = qif r { let a = ket1; a } else { let b = ket0; b };"
      "  drop r;"
      "  y"
      "}");
  CHECK_FALSE(check_program(q).empty());
}

TEST_CASE("qif branches must consume the same context") {
  // then-branch keeps x alive while else consumes it
  CHECK(rejected_with(
      "fn f<'a>(x: #'a qbit, r: &'a qbit) -> #'a qbit {"
      "  let y = qif r { let k = ket0; k as #'a qbit; k } else { x };"
      "  drop r;"
      "  y as #'a qbit;"
      "  y"
      "}",
      "typ qif"));
  // reinitialise pattern: dropping x in the then-branch balances the books
  CHECK(accepted(
      "fn f<'a>(x: #'a qbit, r: &'a qbit) -> #'a qbit {"
      "  let y = qif r { drop x; let k = ket0; k as #'a qbit; k } else { x };"
      "  drop r;"
      "  y as #'a qbit;"
      "  y"
      "}"));
}

TEST_CASE("measurement under quantum control is rejected") {
  CHECK(rejected_with(
      "fn f<'a>(r: &'a qbit, q: #'0 qbit) -> #'a (qbit, bool) {"
      "  let y = qif r { let b = meas(q); let k = ket0; k as #'0 qbit; let t = (k, b); t }"
      "          else { let b2 = meas(q); let k2 = ket0; k2 as #'0 qbit; let t2 = (k2, b2); t2 };"
      "  drop r;"
      "  y"
      "}",
      "typ qif"));
}

TEST_CASE("program typing enforces definition before use") {
  CHECK(rejected_with(
      "fn f() { let u = g(); u }"
      "fn g() { noop; () }",
      "typ fn call"));
  CHECK(accepted(
      "fn g() { noop; () }"
      "fn f() { let u = g(); u }"));
}

TEST_CASE("checking is deterministic") {
  const char* bad =
      "fn f() -> #'0 qbit {"
      "  let p = ket0; p as #'0 qbit;"
      "  let q = ket0;"
      "  drop p;"
      "  q as #'0 qbit;"
      "  q"
      "}";
  auto d1 = check_src(bad);
  auto d2 = check_src(bad);
  REQUIRE(d1.size() == d2.size());
  for (size_t i = 0; i < d1.size(); ++i) {
    CHECK(d1[i].rule == d2[i].rule);
    CHECK(d1[i].message == d2[i].message);
  }
}
