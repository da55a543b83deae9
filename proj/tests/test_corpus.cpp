#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "harness.hpp"
#include "qurts/printer.hpp"
#include "qurts/typecheck.hpp"

using namespace qurts;
using namespace qurts::testing;

TEST_CASE("every corpus file parses and roundtrips through the printer") {
  auto files = corpus_accepted();
  files.push_back("double_qif.qrt");
  files.push_back("bad_forget.qrt");
  for (auto& f : files) {
    CAPTURE(f);
    Program p = load_corpus(f);
    Program q = parse_program(pretty_print(p));
    CHECK(ast_equal(p, q));
  }
}

TEST_CASE("accepted corpus programs type-check") {
  for (auto& f : corpus_accepted()) {
    CAPTURE(f);
    auto diags = check_program(load_corpus(f));
    for (auto& d : diags) {
      CAPTURE(d.rule);
      CAPTURE(d.message);
      CHECK(false);
    }
    CHECK(diags.empty());
  }
}

TEST_CASE("the double-qif program is rejected at the drop rule") {
  auto diags = check_program(load_corpus("double_qif.qrt"));
  REQUIRE(!diags.empty());
  CHECK(diags[0].rule == "typ drop");
}

TEST_CASE("the leaking forget variant is rejected at the call rule") {
  auto diags = check_program(load_corpus("bad_forget.qrt"));
  REQUIRE(!diags.empty());
  CHECK(diags[0].rule == "typ fn call");
}

TEST_CASE("accepted corpus programs run under the simulation semantics") {
  for (auto& f : corpus_accepted()) {
    CAPTURE(f);
    Program p = load_corpus(f);
    SimOptions opt;
    opt.verify = true;
    opt.depgraph = true;
    auto branches = eval_program(p, "main", opt);
    double total = 0;
    for (auto& b : branches) total += b.probability;
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}
