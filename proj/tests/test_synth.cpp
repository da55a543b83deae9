#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "qurts/synth.hpp"

using namespace qurts;

namespace {

// Oracle: replay the steps on every basis input and compare with the table.
void check_against_table(const InjectionTable& c) {
  auto steps = decompose(c);
  int inits = 0;
  for (auto& s : steps)
    if (s.kind == SynthStep::Init) ++inits;
  CHECK(inits == c.m - c.n);
  for (uint32_t x = 0; x < (uint32_t(1) << c.n); ++x) {
    CAPTURE(c.name);
    CAPTURE(x);
    CHECK(run_steps(steps, x) == c.apply(x));
  }
}

InjectionTable random_injection(std::mt19937& rng, int n, int m) {
  std::vector<uint32_t> outs(uint32_t(1) << m);
  for (uint32_t i = 0; i < outs.size(); ++i) outs[i] = i;
  std::shuffle(outs.begin(), outs.end(), rng);
  outs.resize(size_t(1) << n);
  return InjectionTable::make("rnd", n, m, outs);
}

}  // namespace

TEST_CASE("builtins match their textbook tables") {
  auto& reg = default_injections();
  CHECK(reg.get("0").apply(0) == 0);
  CHECK(reg.get("1").apply(0) == 1);
  CHECK(reg.get("not").apply(0) == 1);
  CHECK(reg.get("not").apply(1) == 0);
  // cnot: word = a | b<<1, (a,b) -> (a, a^b)
  CHECK(reg.get("cnot").apply(0b01) == 0b11);
  CHECK(reg.get("cnot").apply(0b11) == 0b01);
  // swap
  CHECK(reg.get("swap").apply(0b01) == 0b10);
  // toffoli
  CHECK(reg.get("toffoli").apply(0b011) == 0b111);
  CHECK(reg.get("toffoli").apply(0b111) == 0b011);
  CHECK(reg.get("toffoli").apply(0b001) == 0b001);
}

TEST_CASE("non-injective tables are rejected") {
  CHECK_THROWS_AS(InjectionTable::make("bad", 1, 1, {0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(InjectionTable::make("bad", 1, 1, {0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(InjectionTable::make("bad", 2, 1, {0, 1, 1, 0}), std::invalid_argument);
}

TEST_CASE("decompose [not] is a single X step") {
  auto steps = decompose(default_injections().get("not"));
  REQUIRE(steps.size() == 1);
  CHECK(steps[0].kind == SynthStep::SingleTarget);
  CHECK(steps[0].target == 0);
  CHECK(steps[0].controls.empty());
}

TEST_CASE("decompose [0] is a single init") {
  auto steps = decompose(default_injections().get("0"));
  REQUIRE(steps.size() == 1);
  CHECK(steps[0].kind == SynthStep::Init);
}

TEST_CASE("decompose matches every builtin table") {
  for (auto name : {"0", "1", "not", "cnot", "swap", "toffoli"})
    check_against_table(default_injections().get(name));
}

TEST_CASE("decompose matches random tables exhaustively") {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 1 + int(rng() % 5);  // up to 5 inputs
    int m = n + int(rng() % 3);  // up to 2 ancillas
    check_against_table(random_injection(rng, n, m));
  }
  // the spec example shape: a random 3 -> 4 injection
  check_against_table(random_injection(rng, 3, 4));
}

TEST_CASE("decompose size cap") {
  std::vector<uint32_t> big(size_t(1) << 9);
  for (uint32_t i = 0; i < big.size(); ++i) big[i] = i;
  InjectionTable t{"big", 9, 9, big};
  CHECK_THROWS_AS(decompose(t), std::invalid_argument);
}
