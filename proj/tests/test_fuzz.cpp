#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fuzz_gen.hpp"
#include "harness.hpp"

using namespace qurts;
using namespace qurts::testing;

TEST_CASE("generated programs type-check and conserve probability") {
  int qif_count = 0, drop_count = 0;
  for (int seed = 0; seed < 40; ++seed) {
    ProgramFuzzer fz(1000 + unsigned(seed));
    Program p = fz.generate();
    CAPTURE(seed);
    REQUIRE(check_program(p).empty());
    std::string printed = pretty_print(p);
    for (char c : printed) {
      (void)c;
    }
    qif_count += int(printed.find("qif") != std::string::npos);
    drop_count += int(printed.find("drop") != std::string::npos);
    SimOptions opt;
    opt.verify = true;
    opt.depgraph = true;
    auto branches = eval_program(p, "main", opt);
    double total = 0;
    for (auto& b : branches) total += b.probability;
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
  // the generator actually exercises the interesting statements
  CHECK(qif_count > 5);
  CHECK(drop_count > 10);
}

TEST_CASE("generated programs agree across both semantics") {
  for (int seed = 0; seed < 15; ++seed) {
    ProgramFuzzer fz(7000 + unsigned(seed));
    Program p = fz.generate();
    CAPTURE(seed);
    CAPTURE(pretty_print(p));
    auto d = compare_semantics(p);
    CHECK(d.structure_ok);
    CHECK(d.max_state_diff < 1e-9);
    CHECK(d.max_prob_diff < 1e-9);
  }
}

TEST_CASE("generated programs roundtrip through the printer") {
  for (int seed = 0; seed < 10; ++seed) {
    ProgramFuzzer fz(313 + unsigned(seed));
    Program p = fz.generate();
    Program q = parse_program(pretty_print(p));
    CHECK(ast_equal(p, q));
  }
}
