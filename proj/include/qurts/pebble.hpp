#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qurts/circuit.hpp"
#include "qurts/qstate.hpp"
#include "qurts/typecheck.hpp"

namespace qurts {

struct PremiseViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Circuit graphs
// ---------------------------------------------------------------------------

// A guard (v, 'a) with an explicit polarity bit; negation flips the bit,
// which equals moving to the involution partner of v.
struct Guard {
  int vertex = -1;  // always a base (non-negation) vertex
  Lifetime lft;
  bool neg = false;

  Guard negate() const { return {vertex, lft, !neg}; }

  friend bool operator==(const Guard& a, const Guard& b) {
    return a.vertex == b.vertex && a.lft == b.lft && a.neg == b.neg;
  }
  friend bool operator<(const Guard& a, const Guard& b) {
    if (a.vertex != b.vertex) return a.vertex < b.vertex;
    if (!(a.lft == b.lft)) return a.lft < b.lft;
    return a.neg < b.neg;
  }
};

// Sorted conjunction of guards; empty means the whole pebble.
struct GuardSet {
  std::vector<Guard> gs;

  GuardSet() = default;
  GuardSet(std::initializer_list<Guard> init) : gs(init) { normalize(); }

  void normalize() {
    std::sort(gs.begin(), gs.end());
    gs.erase(std::unique(gs.begin(), gs.end()), gs.end());
  }
  bool whole() const { return gs.empty(); }
  bool contains(const Guard& g) const {
    return std::find(gs.begin(), gs.end(), g) != gs.end();
  }
  GuardSet with(const Guard& g) const {
    GuardSet r = *this;
    r.gs.push_back(g);
    r.normalize();
    return r;
  }
  GuardSet without(const Guard& g) const {
    GuardSet r;
    for (auto& x : gs)
      if (!(x == g)) r.gs.push_back(x);
    return r;
  }
  bool superset_of(const GuardSet& o) const {
    for (auto& g : o.gs)
      if (!contains(g)) return false;
    return true;
  }
  friend bool operator==(const GuardSet& a, const GuardSet& b) { return a.gs == b.gs; }
  friend bool operator<(const GuardSet& a, const GuardSet& b) { return a.gs < b.gs; }
};

struct Pebble {
  int label = -1;
  GuardSet guards;
  friend bool operator==(const Pebble& a, const Pebble& b) {
    return a.label == b.label && a.guards == b.guards;
  }
};

class CircuitGraph {
 public:
  enum VKind { Init, Gate, Merge, Linear };

  struct Vertex {
    VKind kind;
    int loc;
    int neg = -1;            // involution partner
    bool is_negation = false;
    // Gate
    int tgt_src = -1;
    std::vector<std::pair<int, bool>> controls;  // (vertex, negated)
    // Merge
    int src0 = -1, src1 = -1;
    Guard guard;
    // Linear: guarded incoming edges
    std::vector<std::pair<int, GuardSet>> lin_edges;
  };

  const Vertex& at(int v) const { return vs_.at(size_t(v)); }
  size_t size() const { return vs_.size(); }

  int neg_of(int v) const { return vs_[size_t(v)].neg; }

  // Canonicalises a vertex into a (base, polarity) guard literal.
  Guard guard_of(int v, Lifetime lft) const {
    if (vs_[size_t(v)].is_negation) return {vs_[size_t(v)].neg, std::move(lft), true};
    return {v, std::move(lft), false};
  }
  // The concrete vertex a guard literal denotes.
  int vertex_of(const Guard& g) const { return g.neg ? vs_[size_t(g.vertex)].neg : g.vertex; }

  bool has_init(int loc) const { return init_.count(loc) > 0; }
  int init_of(int loc) const { return init_.at(loc); }
  bool has_linear(int loc) const { return lin_.count(loc) > 0; }
  int linear_of(int loc) const { return lin_.at(loc); }

  int ensure_init(int loc) {
    auto it = init_.find(loc);
    if (it != init_.end()) return it->second;
    int v = add_vertex(Init, loc);
    init_[loc] = v;
    return v;
  }

  int ensure_linear(int loc) {
    auto it = lin_.find(loc);
    if (it != lin_.end()) return it->second;
    int v = add_vertex(Linear, loc);
    lin_[loc] = v;
    return v;
  }

  int add_gate(int loc, int tgt_src, std::vector<std::pair<int, bool>> controls) {
    for (auto& [c, pol] : controls)
      if (vs_[size_t(c)].loc == loc)
        throw PremiseViolation("gate control shares the target location");
    int v = add_vertex(Gate, loc);
    vs_[size_t(v)].tgt_src = tgt_src;
    vs_[size_t(v)].controls = std::move(controls);
    return v;
  }

  int add_merge(int loc, int src0, int src1, Guard g) {
    int v = add_vertex(Merge, loc);
    vs_[size_t(v)].src0 = src0;
    vs_[size_t(v)].src1 = src1;
    vs_[size_t(v)].guard = std::move(g);
    return v;
  }

  void add_linear_edge(int lin_vertex, int src, GuardSet guards) {
    auto& v = vs_[size_t(lin_vertex)];
    if (v.kind != Linear) throw PremiseViolation("linear edge into a non-linear vertex");
    v.lin_edges.emplace_back(src, std::move(guards));
  }

  // Every vertex except the negation of a linear vertex has an X-gate
  // successor, its negation; linear-vertex negations are terminal.
  std::vector<int> sources_of(int v) const {
    const Vertex& x = vs_[size_t(v)];
    std::vector<int> out;
    switch (x.kind) {
      case Init: break;
      case Gate:
        out.push_back(x.tgt_src);
        for (auto& [c, _] : x.controls) out.push_back(c);
        break;
      case Merge:
        out.push_back(x.src0);
        out.push_back(x.src1);
        break;
      case Linear:
        for (auto& [s, _] : x.lin_edges) out.push_back(s);
        break;
    }
    return out;
  }

  // check_valid: for every assignment of the linear vertices there is a
  // unique valuation. Since the dependency structure does not depend on the
  // assignment, one worklist pass decides it.
  bool check_valid() const {
    std::vector<int> state(vs_.size(), 0);
    size_t done = 0;
    bool progress = true;
    auto ready = [&](int v) {
      const Vertex& x = vs_[size_t(v)];
      if (x.kind == Linear) return true;
      for (int s : sources_of(v))
        if (!state[size_t(s)]) return false;
      if (x.kind == Merge && !state[size_t(vertex_of(x.guard))]) return false;
      return true;
    };
    while (progress && done < vs_.size()) {
      progress = false;
      for (size_t v = 0; v < vs_.size(); ++v) {
        if (state[v]) continue;
        if (ready(int(v))) {
          state[v] = 1;
          ++done;
          progress = true;
        }
      }
    }
    return done == vs_.size();
  }

  // evaluate: the unique valuation <v>_f for a linear-vertex assignment.
  std::map<int, bool> evaluate(const std::map<int, bool>& f) const {
    if (!check_valid()) throw PremiseViolation("evaluate: circuit graph is not valid");
    std::map<int, bool> val;
    auto has = [&](int v) { return val.count(v) > 0; };
    bool progress = true;
    while (progress) {
      progress = false;
      for (size_t v = 0; v < vs_.size(); ++v) {
        if (has(int(v))) continue;
        const Vertex& x = vs_[v];
        std::optional<bool> r;
        switch (x.kind) {
          case Linear: {
            auto it = f.find(int(v));
            r = it != f.end() && it->second;
            break;
          }
          case Init: r = false; break;
          case Gate: {
            bool ok = has(x.tgt_src);
            bool acc = true;
            for (auto& [c, pol] : x.controls) {
              if (!has(c)) ok = false;
              else acc = acc && (val[c] != pol);
            }
            if (ok) r = val[x.tgt_src] != (x.controls.empty() ? true : acc);
            break;
          }
          case Merge: {
            int gv = vertex_of(x.guard);
            if (has(gv) && has(x.src0) && has(x.src1)) r = val[gv] ? val[x.src1] : val[x.src0];
            break;
          }
        }
        if (r) {
          val[int(v)] = *r;
          progress = true;
        }
      }
    }
    if (val.size() != vs_.size()) throw PremiseViolation("evaluate: no unique valuation");
    return val;
  }

 private:
  int add_vertex(VKind k, int loc) {
    int v = int(vs_.size());
    vs_.push_back(Vertex{k, loc});
    // negation: an X-gate successor
    int nv = int(vs_.size());
    vs_.push_back(Vertex{Gate, loc});
    vs_[size_t(nv)].tgt_src = v;
    vs_[size_t(nv)].is_negation = true;
    vs_[size_t(nv)].neg = v;
    vs_[size_t(v)].neg = nv;
    return v;
  }

  std::vector<Vertex> vs_;
  std::map<int, int> init_;
  std::map<int, int> lin_;
};

// ---------------------------------------------------------------------------
// Pebblings and labels
// ---------------------------------------------------------------------------

struct LabelTable {
  struct Info {
    int loc = -1;
    bool main = false;
  };
  std::map<int, Info> labels;
  std::map<int, int> main_of_loc;

  int fresh(int loc, bool main, int& counter) {
    int l = counter++;
    labels[l] = {loc, main};
    if (main) {
      if (main_of_loc.count(loc)) throw PremiseViolation("second main label for a location");
      main_of_loc[loc] = l;
    }
    return l;
  }
  bool is_main(int l) const { return labels.at(l).main; }
  int loc_of(int l) const { return labels.at(l).loc; }
  bool has_main(int loc) const { return main_of_loc.count(loc) > 0; }
  int main_label(int loc) const { return main_of_loc.at(loc); }
  void drop_label(int l) {
    auto it = labels.find(l);
    if (it != labels.end()) {
      if (it->second.main) main_of_loc.erase(it->second.loc);
      labels.erase(it);
    }
  }
};

class Pebbling {
 public:
  const std::vector<Pebble>& on(int v) const {
    static const std::vector<Pebble> empty;
    auto it = peb_.find(v);
    return it == peb_.end() ? empty : it->second;
  }
  void place(int v, Pebble p) { peb_[v].push_back(std::move(p)); }
  bool remove(int v, const Pebble& p) {
    auto it = peb_.find(v);
    if (it == peb_.end()) return false;
    auto& vec = it->second;
    auto pos = std::find(vec.begin(), vec.end(), p);
    if (pos == vec.end()) return false;
    vec.erase(pos);
    if (vec.empty()) peb_.erase(it);
    return true;
  }
  bool has(int v, const Pebble& p) const {
    auto& vec = on(v);
    return std::find(vec.begin(), vec.end(), p) != vec.end();
  }
  // Merges complementary fragments everywhere (the pebble addition law).
  void normalize() {
    bool changed = true;
    while (changed) {
      changed = false;
      for (auto& [v, vec] : peb_) {
        for (size_t i = 0; i < vec.size() && !changed; ++i) {
          for (size_t j = i + 1; j < vec.size() && !changed; ++j) {
            if (vec[i].label != vec[j].label) continue;
            // differ in exactly one complemented guard?
            for (const Guard& g : vec[i].guards.gs) {
              if (!vec[j].guards.contains(g.negate())) continue;
              if (vec[i].guards.without(g) == vec[j].guards.without(g.negate())) {
                Pebble merged{vec[i].label, vec[i].guards.without(g)};
                vec.erase(vec.begin() + j);
                vec.erase(vec.begin() + i);
                vec.push_back(std::move(merged));
                changed = true;
                break;
              }
            }
          }
        }
      }
    }
  }
  // All (vertex, pebble) pairs of a label.
  std::vector<std::pair<int, Pebble>> fragments_of(int label) const {
    std::vector<std::pair<int, Pebble>> out;
    for (auto& [v, vec] : peb_)
      for (auto& p : vec)
        if (p.label == label) out.emplace_back(v, p);
    return out;
  }
  bool any_fragmented_by(int base_vertex) const {
    for (auto& [v, vec] : peb_)
      for (auto& p : vec)
        for (auto& g : p.guards.gs)
          if (g.vertex == base_vertex) return true;
    return false;
  }
  const std::map<int, std::vector<Pebble>>& all() const { return peb_; }

  friend bool operator==(const Pebbling& a, const Pebbling& b) {
    auto canon = [](const Pebbling& x) {
      std::map<int, std::vector<std::pair<int, std::vector<Guard>>>> m;
      for (auto& [v, vec] : x.peb_) {
        auto& dst = m[v];
        for (auto& p : vec) dst.emplace_back(p.label, p.guards.gs);
        std::sort(dst.begin(), dst.end());
      }
      return m;
    };
    return canon(a) == canon(b);
  }

 private:
  std::map<int, std::vector<Pebble>> peb_;
};

// ---------------------------------------------------------------------------
// Guard entailment (decided by brute-force truth assignment)
// ---------------------------------------------------------------------------

// Valid when every goal lifetime is alive, the i-th witness label has
// fragments on the i-th goal vertex, and the fragments' guards entail the
// goal conjunction in classical propositional logic over the vertices.
inline bool guard_entailment(const LftPreorder& A, const CircuitGraph& G, const Pebbling& peb,
                             const std::vector<int>& witnesses, const GuardSet& goal) {
  if (witnesses.size() != goal.gs.size()) return false;
  for (size_t i = 0; i + 1 < witnesses.size(); ++i)
    for (size_t j = i + 1; j < witnesses.size(); ++j)
      if (witnesses[i] == witnesses[j]) return false;
  for (auto& g : goal.gs)
    if (!A.live(g.lft)) return false;

  // Which witness can sit on which goal vertex: a small matching problem,
  // since a label's fragments may rest on several vertices.
  std::vector<std::vector<size_t>> usable(goal.gs.size());
  for (size_t i = 0; i < goal.gs.size(); ++i) {
    int want = G.vertex_of(goal.gs[i]);
    for (size_t j = 0; j < witnesses.size(); ++j)
      for (auto& p : peb.on(want))
        if (p.label == witnesses[j]) {
          usable[i].push_back(j);
          break;
        }
    if (usable[i].empty()) return false;
  }
  std::vector<size_t> pick(goal.gs.size());
  std::vector<bool> taken(witnesses.size(), false);

  auto check_assignment = [&]() {
    std::vector<int> atoms;
    auto atom_index = [&](int base) {
      for (size_t i = 0; i < atoms.size(); ++i)
        if (atoms[i] == base) return int(i);
      atoms.push_back(base);
      return int(atoms.size() - 1);
    };
    struct Hyp {
      std::vector<std::vector<std::pair<int, bool>>> disj;
      std::pair<int, bool> head;
    };
    std::vector<Hyp> hyps;
    for (size_t i = 0; i < goal.gs.size(); ++i) {
      const Guard& gl = goal.gs[i];
      int want = G.vertex_of(gl);
      Hyp h;
      h.head = {atom_index(gl.vertex), gl.neg};
      for (auto& p : peb.on(want)) {
        if (p.label != witnesses[pick[i]]) continue;
        std::vector<std::pair<int, bool>> conj;
        for (auto& g : p.guards.gs) conj.emplace_back(atom_index(g.vertex), g.neg);
        h.disj.push_back(std::move(conj));
      }
      hyps.push_back(std::move(h));
    }
    std::vector<std::pair<int, bool>> goal_lits;
    for (auto& g : goal.gs) goal_lits.emplace_back(atom_index(g.vertex), g.neg);

    size_t n = atoms.size();
    if (n > 20) throw PremiseViolation("guard entailment: too many vertices");
    for (size_t mu = 0; mu < (size_t(1) << n); ++mu) {
      auto lit = [&](const std::pair<int, bool>& l) {
        bool v = (mu >> size_t(l.first)) & 1;
        return v != l.second;
      };
      bool hyps_hold = true;
      for (auto& h : hyps) {
        bool ante = false;
        for (auto& conj : h.disj) {
          bool all = true;
          for (auto& l : conj) all = all && lit(l);
          ante = ante || all;
        }
        if (ante && !lit(h.head)) {
          hyps_hold = false;
          break;
        }
      }
      if (!hyps_hold) continue;
      for (auto& l : goal_lits)
        if (!lit(l)) return false;
    }
    return true;
  };

  std::function<bool(size_t)> match = [&](size_t i) -> bool {
    if (i == goal.gs.size()) return check_assignment();
    for (size_t j : usable[i]) {
      if (taken[j]) continue;
      taken[j] = true;
      pick[i] = j;
      if (match(i + 1)) {
        taken[j] = false;
        return true;
      }
      taken[j] = false;
    }
    return false;
  };
  return match(0);
}

// ---------------------------------------------------------------------------
// The pebble game engine
// ---------------------------------------------------------------------------

struct PebbleStep {
  enum Rule { Split, Init, Gate, CopyDelete, MergeGuard, LinearGuard };
  Rule rule = Split;
  bool forward = true;
  int vertex = -1;             // the vertex the rule acts on (see each rule)
  int label = -1;              // principal label
  GuardSet guards;             // guards of the principal pebble
  Guard split_on;              // Split
  int label2 = -1;             // CopyDelete: the resident pebble's label
  std::vector<int> witnesses;  // entailment witness labels
  int side = -1;               // MergeGuard: which incoming edge
  int src = -1;                // LinearGuard / MergeGuard / Gate: source vertex
};

// Plays the game on (QState over labels, Pebbling), recording circuit events.
class PebbleEngine {
 public:
  PebbleEngine(const CircuitGraph& g, const LftPreorder& a, LabelTable& labels, QState state,
               Pebbling peb)
      : g_(g), a_(a), labels_(labels), state_(std::move(state)), peb_(std::move(peb)) {}

  const QState& state() const { return state_; }
  const Pebbling& pebbling() const { return peb_; }
  QState& mutable_state() { return state_; }
  Pebbling& mutable_pebbling() { return peb_; }
  Circuit& events() { return events_; }

  static PebbleStep inverse(const PebbleStep& s) {
    if (s.rule == PebbleStep::LinearGuard)
      throw PremiseViolation("linear guard moves are irreversible");
    PebbleStep r = s;
    r.forward = !r.forward;
    return r;
  }

  void apply(const PebbleStep& s) {
    switch (s.rule) {
      case PebbleStep::Split: return split(s);
      case PebbleStep::Init: return init(s);
      case PebbleStep::Gate: return gate(s);
      case PebbleStep::CopyDelete: return copy_delete(s);
      case PebbleStep::MergeGuard: return merge_guard(s);
      case PebbleStep::LinearGuard: return linear_guard(s);
    }
  }

 private:
  void split(const PebbleStep& s) {
    Pebble whole{s.label, s.guards};
    Pebble p1{s.label, s.guards.with(s.split_on)};
    Pebble p2{s.label, s.guards.with(s.split_on.negate())};
    if (s.forward) {
      if (!peb_.remove(s.vertex, whole)) throw PremiseViolation("split: pebble not present");
      peb_.place(s.vertex, p1);
      peb_.place(s.vertex, p2);
    } else {
      if (!peb_.remove(s.vertex, p1)) throw PremiseViolation("split: fragment not present");
      if (!peb_.remove(s.vertex, p2)) {
        peb_.place(s.vertex, p1);
        throw PremiseViolation("split: complementary fragment not present");
      }
      peb_.place(s.vertex, whole);
    }
  }

  void init(const PebbleStep& s) {
    if (g_.at(s.vertex).kind != CircuitGraph::Init)
      throw PremiseViolation("init: not an init vertex");
    Pebble p{s.label, {}};
    if (s.forward) {
      if (!peb_.fragments_of(s.label).empty())
        throw PremiseViolation("init: label already on the graph");
      if (state_.has_label(s.label)) throw PremiseViolation("init: label already allocated");
      if (labels_.loc_of(s.label) != g_.at(s.vertex).loc)
        throw PremiseViolation("init: label location mismatch");
      state_ = state_.adjoin_zero(s.label);
      peb_.place(s.vertex, p);
      events_.push_back(GateEvent{GateEvent::Init, s.label});
    } else {
      if (!peb_.remove(s.vertex, p)) throw PremiseViolation("init: whole pebble not present");
      auto branches = state_.measure(s.label);
      if (branches[1].second.norm2() > 1e-9) {
        peb_.place(s.vertex, p);
        throw PremiseViolation("init reverse: qubit is not |0>");
      }
      state_ = std::move(branches[0].second);
      events_.push_back(GateEvent{GateEvent::Project, s.label, 0});
    }
  }

  void gate(const PebbleStep& s) {
    const auto& w = g_.at(s.vertex);
    if (w.kind != CircuitGraph::Gate) throw PremiseViolation("gate: not a gate vertex");
    int v0 = w.tgt_src;
    // goal: the moving pebble's own guards plus the polarity-adjusted
    // controls at the always-alive lifetime
    GuardSet goal = s.guards;
    for (auto& [c, pol] : w.controls) {
      Guard g = g_.guard_of(c, Lifetime::stat());
      if (pol) g = g.negate();
      goal = goal.with(g);
    }
    for (int q : s.witnesses)
      if (q == s.label) throw PremiseViolation("gate: moving label among the witnesses");
    if (!guard_entailment(a_, g_, peb_, s.witnesses, goal))
      throw PremiseViolation("gate: guard entailment fails");
    Pebble p{s.label, s.guards};
    int from = s.forward ? v0 : s.vertex;
    int to = s.forward ? s.vertex : v0;
    if (!peb_.remove(from, p)) throw PremiseViolation("gate: pebble not on the source");
    peb_.place(to, p);
    GateEvent e{GateEvent::CtrlX};
    e.target = s.label;
    for (int q : s.witnesses) e.controls.emplace_back(q, false);
    state_ = state_.apply_single_target(e.target, e.controls);
    events_.push_back(std::move(e));
  }

  void copy_delete(const PebbleStep& s) {
    const auto& v = g_.at(s.vertex);
    int v0 = g_.has_init(v.loc) ? g_.init_of(v.loc) : -1;
    if (v0 < 0) throw PremiseViolation("copy/delete: location has no init vertex");
    if (v.kind == CircuitGraph::Linear || g_.at(g_.neg_of(s.vertex)).kind == CircuitGraph::Linear)
      throw PremiseViolation("copy/delete: vertex or its negation is linear");
    Pebble resident{s.label2, s.guards};
    Pebble moving{s.label, s.guards};
    if (!peb_.has(s.vertex, resident))
      throw PremiseViolation("copy/delete: resident pebble not present (label " +
                             std::to_string(s.label2) + " at vertex " +
                             std::to_string(s.vertex) + ", fwd=" +
                             std::to_string(s.forward) + ")");
    for (int q : s.witnesses)
      if (q == s.label || q == s.label2)
        throw PremiseViolation("copy/delete: principal labels among witnesses");
    if (!guard_entailment(a_, g_, peb_, s.witnesses, s.guards))
      throw PremiseViolation("copy/delete: guard entailment fails");
    int from = s.forward ? v0 : s.vertex;
    int to = s.forward ? s.vertex : v0;
    if (!peb_.remove(from, moving)) throw PremiseViolation("copy/delete: pebble not present");
    peb_.place(to, moving);
    GateEvent e{GateEvent::CtrlX};
    e.target = s.label;
    for (int q : s.witnesses) e.controls.emplace_back(q, false);
    e.controls.emplace_back(s.label2, false);
    state_ = state_.apply_single_target(e.target, e.controls);
    events_.push_back(std::move(e));
  }

  void merge_guard(const PebbleStep& s) {
    const auto& w = g_.at(s.vertex);
    if (w.kind != CircuitGraph::Merge) throw PremiseViolation("merge guard: not a merge vertex");
    if (s.side != 0 && s.side != 1) throw PremiseViolation("merge guard: bad side");
    int vi = s.side == 1 ? w.src1 : w.src0;
    Guard need = s.side == 1 ? w.guard : w.guard.negate();
    if (!s.guards.contains(need))
      throw PremiseViolation("merge guard: pebble is not fragmented by the edge guard");
    Pebble p{s.label, s.guards};
    int from = s.forward ? vi : s.vertex;
    int to = s.forward ? s.vertex : vi;
    if (!peb_.remove(from, p)) throw PremiseViolation("merge guard: pebble not present");
    peb_.place(to, p);
  }

  void linear_guard(const PebbleStep& s) {
    const auto& w = g_.at(s.vertex);
    if (w.kind != CircuitGraph::Linear)
      throw PremiseViolation("linear guard: not a linear vertex");
    if (!labels_.is_main(s.label)) throw PremiseViolation("linear guard: label is not main");
    bool edge_ok = false;
    for (auto& [src, egs] : w.lin_edges) {
      if (src == s.src && s.guards.superset_of(egs)) {
        edge_ok = true;
        break;
      }
    }
    if (!edge_ok) throw PremiseViolation("linear guard: no matching guarded edge");
    Pebble p{s.label, s.guards};
    if (!peb_.remove(s.src, p)) throw PremiseViolation("linear guard: pebble not present");
    peb_.place(s.vertex, p);
  }

  const CircuitGraph& g_;
  const LftPreorder& a_;
  LabelTable& labels_;
  QState state_;
  Pebbling peb_;
  Circuit events_;
};

// ---------------------------------------------------------------------------
// The classic reversible pebble game
// ---------------------------------------------------------------------------

struct ClassicMove {
  bool place = true;
  int vertex = -1;
};

struct ClassicReport {
  bool valid = false;
  int peak = 0;
  int steps = 0;
  int bad_move = -1;  // index of the first invalid move, if any
  std::string reason;
};

inline ClassicReport validate_classic_strategy(int n,
                                               const std::vector<std::pair<int, int>>& edges,
                                               const std::vector<ClassicMove>& moves) {
  ClassicReport rep;
  rep.steps = int(moves.size());
  std::vector<std::vector<int>> preds;
  preds.resize(size_t(n));
  for (auto& [a, b] : edges) {
    if (a < 0 || a >= n || b < 0 || b >= n) {
      rep.reason = "edge out of range";
      return rep;
    }
    preds[size_t(b)].push_back(a);
  }
  std::vector<bool> pebbled(size_t(n), false);
  int count = 0;
  for (size_t i = 0; i < moves.size(); ++i) {
    int v = moves[i].vertex;
    if (v < 0 || v >= n) {
      rep.bad_move = int(i);
      rep.reason = "vertex out of range";
      return rep;
    }
    for (int p : preds[size_t(v)]) {
      if (!pebbled[size_t(p)]) {
        rep.bad_move = int(i);
        rep.reason = "a predecessor is unpebbled";
        return rep;
      }
    }
    if (moves[i].place) {
      if (pebbled[size_t(v)]) {
        rep.bad_move = int(i);
        rep.reason = "vertex already pebbled";
        return rep;
      }
      pebbled[size_t(v)] = true;
      ++count;
    } else {
      if (!pebbled[size_t(v)]) {
        rep.bad_move = int(i);
        rep.reason = "vertex not pebbled";
        return rep;
      }
      pebbled[size_t(v)] = false;
      --count;
    }
    rep.peak = std::max(rep.peak, count);
  }
  rep.valid = true;
  return rep;
}

}  // namespace qurts
