#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "qurts/ast.hpp"

namespace qurts {

// ---------------------------------------------------------------------------
// Classical injection tables [c] : {0,1}^n -> {0,1}^m
// ---------------------------------------------------------------------------

// Bit 0 of an input/output word is the FIRST wire (leftmost qubit).
struct InjectionTable {
  std::string name;
  int n = 0;
  int m = 0;
  std::vector<uint32_t> map;  // size 2^n, entries < 2^m, pairwise distinct

  uint32_t apply(uint32_t in) const { return map[in]; }

  bool injective() const {
    std::vector<uint32_t> v = map;
    std::sort(v.begin(), v.end());
    return std::adjacent_find(v.begin(), v.end()) == v.end();
  }

  static InjectionTable make(std::string name, int n, int m, std::vector<uint32_t> map) {
    InjectionTable t{std::move(name), n, m, std::move(map)};
    if (t.n < 0 || t.m < t.n || t.map.size() != (size_t(1) << t.n))
      throw std::invalid_argument("injection table '" + t.name + "': bad shape");
    for (uint32_t o : t.map)
      if (o >= (uint32_t(1) << t.m))
        throw std::invalid_argument("injection table '" + t.name + "': output out of range");
    if (!t.injective())
      throw std::invalid_argument("injection table '" + t.name + "' is not injective");
    return t;
  }
};

class InjectionRegistry {
 public:
  InjectionRegistry() {
    add(InjectionTable::make("0", 0, 1, {0}));
    add(InjectionTable::make("1", 0, 1, {1}));
    add(InjectionTable::make("not", 1, 1, {1, 0}));
    // cnot: (a, b) -> (a, b ^ a); word = a | b<<1
    add(InjectionTable::make("cnot", 2, 2, {0b00, 0b11, 0b10, 0b01}));
    // swap: (a, b) -> (b, a)
    add(InjectionTable::make("swap", 2, 2, {0b00, 0b10, 0b01, 0b11}));
    // toffoli: (a, b, c) -> (a, b, c ^ (a & b))
    add(InjectionTable::make("toffoli", 3, 3, {0, 1, 2, 7, 4, 5, 6, 3}));
  }

  void add(InjectionTable t) { tables_[t.name] = std::move(t); }
  bool contains(const std::string& name) const { return tables_.count(name) > 0; }
  const InjectionTable& get(const std::string& name) const { return tables_.at(name); }

 private:
  std::map<std::string, InjectionTable> tables_;
};

inline const InjectionRegistry& default_injections() {
  static InjectionRegistry r;
  return r;
}

// ---------------------------------------------------------------------------
// Decomposition into |0>-inits and single-target gates
// ---------------------------------------------------------------------------

// One step of a decomposed lifted call, acting on wire indices 0..m-1.
struct SynthStep {
  enum Kind { Init, SingleTarget } kind;
  int target = 0;                                 // wire index
  std::vector<std::pair<int, bool>> controls;     // (wire, negated)
};

// Decompose an injection into m-n Init steps followed by multi-controlled-X
// gates, so that running the steps on |x, 0...0> yields |c(x)>.
//
// The injection is first extended to a bijection on m bits (unused outputs
// are assigned to the remaining inputs in increasing order), then synthesized
// with the transformation-based method: fixing images in increasing input
// order only ever touches values >= the ones already fixed.
inline std::vector<SynthStep> decompose(const InjectionTable& c) {
  if (c.n > 8 || c.m > 16) throw std::invalid_argument("decompose: table too large");
  const uint32_t M = uint32_t(1) << c.m;

  // Bijective extension F on m bits. Inputs of the form (x, 0..0) map through
  // c; everything else takes the unused outputs in order.
  std::vector<uint32_t> F(M, UINT32_MAX);
  std::vector<bool> used(M, false);
  const uint32_t in_mask = (c.n == 32) ? ~0u : ((uint32_t(1) << c.n) - 1);
  for (uint32_t x = 0; x < (uint32_t(1) << c.n); ++x) {
    F[x] = c.map[x];  // padded input: high wires zero
    used[c.map[x]] = true;
  }
  {
    uint32_t next = 0;
    for (uint32_t v = 0; v < M; ++v) {
      if ((v & ~in_mask) == 0 && v <= in_mask && F[v] != UINT32_MAX) continue;
      while (used[next]) ++next;
      F[v] = next;
      used[next] = true;
    }
  }

  auto ones = [&](uint32_t w) {
    std::vector<int> r;
    for (int b = 0; b < c.m; ++b)
      if (w & (1u << b)) r.push_back(b);
    return r;
  };

  std::vector<SynthStep> gates;  // collected in output-side order
  std::vector<uint32_t> cur = F;
  auto apply_gate = [&](int target, const std::vector<int>& ctrls) {
    SynthStep s;
    s.kind = SynthStep::SingleTarget;
    s.target = target;
    for (int q : ctrls) s.controls.emplace_back(q, false);
    gates.push_back(s);
    uint32_t cmask = 0;
    for (int q : ctrls) cmask |= 1u << q;
    for (uint32_t v = 0; v < M; ++v)
      if ((cur[v] & cmask) == cmask) cur[v] ^= 1u << target;
  };

  for (uint32_t i = 0; i < M; ++i) {
    uint32_t j = cur[i];
    if (j == i) continue;
    // 0 -> 1 flips: controls on the ones of j
    for (int b : ones(i & ~j)) apply_gate(b, ones(cur[i]));
    // 1 -> 0 flips: controls on the ones of i
    for (int b : ones(cur[i] & ~i)) apply_gate(b, ones(i));
  }

  std::vector<SynthStep> out;
  for (int w = c.n; w < c.m; ++w) {
    SynthStep s;
    s.kind = SynthStep::Init;
    s.target = w;
    out.push_back(s);
  }
  // Output-side fixups compose in reverse as a circuit.
  for (auto it = gates.rbegin(); it != gates.rend(); ++it) out.push_back(*it);
  return out;
}

// Evaluate a step sequence classically on a padded input, for testing and for
// the uncomputation backend's premise checks.
inline uint32_t run_steps(const std::vector<SynthStep>& steps, uint32_t in) {
  uint32_t v = in;
  for (auto& s : steps) {
    if (s.kind == SynthStep::Init) continue;  // wire already zero in the padded input
    bool fire = true;
    for (auto& [q, neg] : s.controls) {
      bool bit = (v >> q) & 1;
      if (bit == neg) fire = false;
    }
    if (fire) v ^= 1u << s.target;
  }
  return v;
}

}  // namespace qurts
