#pragma once

#include <deque>
#include <functional>
#include <random>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qurts/ast.hpp"
#include "qurts/normalize.hpp"
#include "qurts/pebble.hpp"
#include "qurts/simsem.hpp"
#include "qurts/synth.hpp"
#include "qurts/typecheck.hpp"

namespace qurts {

// ---------------------------------------------------------------------------
// Threads and system states
// ---------------------------------------------------------------------------

enum class ThreadStatus { Ready, Check, Await, Terminated };

struct Thread {
  int id = 0;
  std::vector<Stmt> stmts;  // remaining statements (pc indexes into them)
  size_t pc = 0;
  std::optional<std::string> result;  // the enclosing block's result variable

  TyCtx ctx;
  std::map<std::string, std::vector<Loc>> loc;
  std::set<int> now;                  // at most one vertex per location
  std::vector<Guard> control;         // in spawn order, outermost first
  ThreadStatus status = ThreadStatus::Ready;

  // Check bookkeeping
  Stmt checked;
  std::set<int> check_locs;  // locations that must rest on their linear vertex

  // Await bookkeeping
  std::string await_var;
  std::vector<int> await_children;  // [then, else] for qif; single otherwise
  Guard await_guard;                // qif only
  bool await_qif = false;
  Lifetime await_ctl_lft;
  std::optional<TyCtx> await_post_ctx;  // caller post-context for calls
  TyPtr await_result_ty;                // classical-if result type

  // allocator
  int cursor = 0;
  std::deque<int> freelist;

  GuardSet control_set() const {
    GuardSet s;
    for (auto& g : control) s = s.with(g);
    return s;
  }
};

struct UncBranch {
  std::vector<int> outcomes;
  double probability = 0.0;
  QState final_state;            // over the surviving labels
  std::vector<int> result_labels;  // main labels of the result, in layout order
  std::vector<int> wire_labels;    // entry parameter labels, in layout order
  std::map<int, bool> classical;   // classical cells of the result
  std::vector<Loc> result_locs;
  Circuit circuit;
  std::map<std::string, int> graph_stats;  // vertex counts by kind
};

struct UncError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// The eager scheduler
// ---------------------------------------------------------------------------

class UncInterp {
 public:
  UncInterp(const Program& p, const GateTable& gates = default_gates(),
            const InjectionRegistry& inj = default_injections())
      : gates_(gates), inj_(inj) {
    auto diags = check_program(p, gates, inj);
    if (!diags.empty())
      throw UncError("program does not type-check: " + diags.front().rule + ": " +
                     diags.front().message);
    prog_ = normalize_qif_locations(p, "", gates, inj);
  }

  // Chooses among the actionable thread ids; the default policy is the
  // lowest id. verify_interleavings substitutes a seeded chooser.
  std::function<int(const std::vector<int>&)> chooser;

  std::vector<UncBranch> run_eager(const std::string& entry) {
    const FnDef* f = prog_.find(entry);
    if (!f) throw UncError("entry function '" + entry + "' not found");
    Sys sys;
    setup_entry(sys, *f);
    std::vector<UncBranch> out;
    drive(std::move(sys), *f, out);
    std::sort(out.begin(), out.end(),
              [](const UncBranch& a, const UncBranch& b) { return a.outcomes < b.outcomes; });
    return out;
  }

 private:
  struct Sys {
    std::vector<Thread> threads;
    LftPreorder A;
    CircuitGraph G;
    QState state;
    std::map<int, bool> cstore;
    Pebbling peb;
    LabelTable labels;
    Circuit events;
    std::vector<int> outcomes;
    int next_thread = 0;
    int next_label = 0;
    int next_loc = 0;
    int next_lft = 0;
    std::vector<int> wire_labels;
    std::set<int> wire_locs;
  };

  Thread& thread_by_id(Sys& sys, int id) {
    for (auto& t : sys.threads)
      if (t.id == id) return t;
    throw UncError("no such thread");
  }

  // -- entry ----------------------------------------------------------------

  void setup_entry(Sys& sys, const FnDef& f) {
    std::vector<Lifetime> sig_refs;
    for (auto& p : f.sig.params) detail::collect_ref_lifetimes(p.ty, sig_refs);
    detail::collect_ref_lifetimes(f.sig.ret, sig_refs);
    for (auto& lp : f.sig.lft_params) {
      sys.A.add_var(lp);
      bool live = std::find(f.sig.lft_nonempty.begin(), f.sig.lft_nonempty.end(), lp) !=
                  f.sig.lft_nonempty.end();
      for (auto& r : sig_refs)
        if (r == lp) live = true;
      if (live) sys.A.mark_nonempty(lp);
    }
    for (auto& [a, b] : f.sig.lft_leq) sys.A.add_leq(a, b);

    Thread root;
    root.id = sys.next_thread++;
    for (auto& s : f.body.stmts) root.stmts.push_back(s.clone());
    root.result = f.body.result;

    for (auto& p : f.sig.params) {
      std::vector<bool> shape;
      layout_of(p.ty, shape);
      std::vector<Loc> locs;
      for (bool q : shape) {
        if (!q) throw UncError("entry parameters with classical parts are not supported");
        int l = sys.next_loc++;
        locs.push_back({true, l});
        sys.wire_locs.insert(l);
        int w = sys.G.ensure_linear(l);
        int lab = sys.labels.fresh(l, true, sys.next_label);
        sys.state = sys.state.adjoin_zero(lab);
        sys.peb.place(w, Pebble{lab, {}});
        root.now.insert(w);
        sys.wire_labels.push_back(lab);
      }
      root.loc[p.name] = locs;
      root.ctx.insert(p.name, p.ty);
    }
    root.cursor = sys.next_loc;
    sys.threads.push_back(std::move(root));
  }

  // -- the main loop ----------------------------------------------------------

  void drive(Sys sys, const FnDef& f, std::vector<UncBranch>& out) {
    while (true) {
      std::vector<int> actionable;
      for (auto& t : sys.threads) {
        if (t.status == ThreadStatus::Ready || t.status == ThreadStatus::Check) {
          actionable.push_back(t.id);
        } else if (t.status == ThreadStatus::Await) {
          bool all_done = true;
          for (int c : t.await_children)
            if (thread_by_id(sys, c).status != ThreadStatus::Terminated) all_done = false;
          if (all_done) actionable.push_back(t.id);
        }
      }
      if (actionable.empty()) break;
      int pick = chooser ? chooser(actionable) : actionable.front();
      Thread& t = thread_by_id(sys, pick);
      if (t.status == ThreadStatus::Await) {
        wake(sys, t);
        continue;
      }
      if (t.status == ThreadStatus::Check) {
        if (exec_checked(sys, t, out)) return;  // measurement forked; branches drove on
        continue;
      }
      step_ready(sys, t);
    }
    finish(std::move(sys), f, out);
  }

  void finish(Sys sys, const FnDef& f, std::vector<UncBranch>& out) {
    Thread* root = &sys.threads.front();
    if (root->status != ThreadStatus::Terminated)
      throw UncError("execution stalled before the root thread terminated");
    UncBranch b;
    b.outcomes = sys.outcomes;
    if (f.body.result) b.result_locs = root->loc[*f.body.result];
    // park-and-discard every auxiliary-free main label that is not part of
    // the result or an input wire
    std::set<int> keep_locs = sys.wire_locs;
    for (auto& l : b.result_locs)
      if (l.quantum) keep_locs.insert(l.id);
    for (auto& [lab, info] : std::map<int, LabelTable::Info>(sys.labels.labels)) {
      if (!info.main || keep_locs.count(info.loc)) continue;
      if (!sys.state.has_label(lab)) continue;  // measured away
      int iv = sys.G.has_init(info.loc) ? sys.G.init_of(info.loc) : -1;
      if (iv < 0 || !sys.peb.has(iv, Pebble{lab, {}}))
        throw UncError("main label " + std::to_string(lab) +
                       " is not parked whole on its init vertex at program end");
      PebbleEngine eng(sys.G, sys.A, sys.labels, std::move(sys.state), std::move(sys.peb));
      PebbleStep st;
      st.rule = PebbleStep::Init;
      st.forward = false;
      st.vertex = iv;
      st.label = lab;
      eng.apply(st);
      sys.state = std::move(eng.mutable_state());
      sys.peb = std::move(eng.mutable_pebbling());
      for (auto& e : eng.events()) sys.events.push_back(e);
    }
    for (auto& l : b.result_locs) {
      if (l.quantum) {
        b.result_labels.push_back(sys.labels.main_label(l.id));
      } else {
        b.classical[l.id] = sys.cstore.at(l.id);
      }
    }
    b.wire_labels = sys.wire_labels;
    for (size_t v = 0; v < sys.G.size(); ++v) {
      switch (sys.G.at(int(v)).kind) {
        case CircuitGraph::Init: ++b.graph_stats["init"]; break;
        case CircuitGraph::Gate: ++b.graph_stats["gate"]; break;
        case CircuitGraph::Merge: ++b.graph_stats["merge"]; break;
        case CircuitGraph::Linear: ++b.graph_stats["linear"]; break;
      }
    }
    b.final_state = std::move(sys.state);
    b.probability = b.final_state.norm2();
    b.circuit = std::move(sys.events);
    out.push_back(std::move(b));
  }

  // -- typing-context bookkeeping (premises were already checked) ------------

  static void ctx_defrost(TyCtx& ctx, const Lifetime& a) {
    for (auto& e : ctx)
      if (!e.aliveness.active && e.aliveness.frozen_by == a) e.aliveness = Aliveness::act();
  }

  static TyPtr take_ty(TyCtx& ctx, const std::string& x) {
    const CtxEntry* e = ctx.find(x);
    if (!e) throw UncError("internal: variable '" + x + "' missing from the thread context");
    TyPtr t = e->ty;
    ctx.erase(x);
    return t;
  }

  // affine quantum locations per Def. 4.2, from the thread's view
  std::set<int> affine_qlocs(const Thread& t, const LftPreorder& A) {
    Env env;
    env.loc = t.loc;
    OwnershipView v = ownership(env, t.ctx, A);
    std::set<int> out;
    for (auto& [l, c] : v.cls)
      if (l.quantum && c == LocClass::Affine) out.insert(l.id);
    return out;
  }

  std::map<Loc, std::string> owners_of(const Thread& t, const LftPreorder& A) {
    Env env;
    env.loc = t.loc;
    return ownership(env, t.ctx, A).owner;
  }

  // -- allocator --------------------------------------------------------------

  int fresh_qloc(Sys& sys, Thread& t) {
    if (!t.freelist.empty()) {
      int id = t.freelist.front();
      t.freelist.pop_front();
      return id;
    }
    int id = t.cursor++;
    sys.next_loc = std::max(sys.next_loc, t.cursor);
    return id;
  }
  int fresh_cloc(Sys& sys, Thread& t) {
    int id = t.cursor++;
    sys.next_loc = std::max(sys.next_loc, t.cursor);
    return id;
  }

  // -- pebble helpers ---------------------------------------------------------

  struct Undo {
    std::vector<PebbleStep> steps;  // applied order; undone in reverse
  };

  void apply_step(Sys& sys, const PebbleStep& st, Undo* undo = nullptr) {
    PebbleEngine eng(sys.G, sys.A, sys.labels, std::move(sys.state), std::move(sys.peb));
    eng.apply(st);
    sys.state = std::move(eng.mutable_state());
    sys.peb = std::move(eng.mutable_pebbling());
    for (auto& e : eng.events()) sys.events.push_back(e);
    if (undo) undo->steps.push_back(st);
  }

  void unwind(Sys& sys, Undo& undo) {
    for (auto it = undo.steps.rbegin(); it != undo.steps.rend(); ++it)
      apply_step(sys, PebbleEngine::inverse(*it));
    undo.steps.clear();
  }

  int x_vertex_between(const Sys& sys, int a) {
    // the gate vertex of the involution pair containing a
    return sys.G.at(a).is_negation ? a : sys.G.neg_of(a);
  }

  // Finds the fragment of `label` on `v` whose guards cover `want` (i.e. the
  // fragment's guard set is a subset of want).
  std::optional<Pebble> covering_fragment(const Sys& sys, int label, int v,
                                          const GuardSet& want) {
    for (auto& p : sys.peb.on(v))
      if (p.label == label && want.superset_of(p.guards)) return p;
    return std::nullopt;
  }

  // Splits the covering fragment of `label` on `v` down to exactly `want`.
  Pebble refine_fragment(Sys& sys, int label, int v, const GuardSet& want, Undo* undo) {
    auto f = covering_fragment(sys, label, v, want);
    if (!f) throw UncError("pebble fragment missing: label " + std::to_string(label));
    GuardSet cur = f->guards;
    for (auto& g : want.gs) {
      if (cur.contains(g)) continue;
      PebbleStep st;
      st.rule = PebbleStep::Split;
      st.vertex = v;
      st.label = label;
      st.guards = cur;
      st.split_on = g;
      apply_step(sys, st, undo);
      cur = cur.with(g);
    }
    return Pebble{label, cur};
  }

  // Ensures, for each guard in `goal` (processed in the given order), that a
  // witnessing pebble rests on the guard's vertex. The main label is moved
  // across the X edge when it rests on the complement; when it has moved
  // further along the graph, the value is recomputed into a fresh auxiliary
  // via the reachable-vertex construction. All moves land in `undo`.
  std::vector<int> arrange_witnesses(Sys& sys, const std::vector<Guard>& goal, Undo& undo,
                                     int depth = 0) {
    if (depth > 32) throw UncError("witness arrangement recursion too deep");
    std::vector<int> wits;
    for (auto& g : goal) {
      int want = sys.G.vertex_of(g);
      int other = g.neg ? g.vertex : sys.G.neg_of(g.vertex);
      int loc = sys.G.at(want).loc;
      int lab = sys.labels.has_main(loc) ? sys.labels.main_label(loc) : -1;
      auto on = [&](int vert, int label) {
        for (auto& p : sys.peb.on(vert))
          if (p.label == label) return true;
        return false;
      };
      if (lab >= 0 && on(want, lab)) {
        wits.push_back(lab);
        continue;
      }
      if (lab >= 0 && on(other, lab)) {
        // the pebble sits across the X gate: move it over
        const Pebble* frag = nullptr;
        for (auto& p : sys.peb.on(other))
          if (p.label == lab) frag = &p;
        PebbleStep st;
        st.rule = PebbleStep::Gate;
        st.vertex = x_vertex_between(sys, want);
        st.forward = (want == x_vertex_between(sys, want));
        st.label = lab;
        st.guards = frag->guards;
        Undo inner;
        st.witnesses = arrange_witnesses(sys, frag->guards.gs, inner, depth + 1);
        apply_step(sys, st, &undo);
        // inner arrangements become part of the same undo trail, in order
        for (auto& stp : inner.steps) undo.steps.insert(undo.steps.end() - 1, stp);
        wits.push_back(lab);
        continue;
      }
      // the main pebble has moved on: recompute the vertex value whole into
      // an auxiliary
      wits.push_back(place_aux(sys, want, GuardSet{}, undo));
    }
    return wits;
  }

  // --------------------------------------------------------------------------
  // The reachable-vertex construction: places a fresh auxiliary pebble
  // fragmented by `phi` on `v`, recording every move for reversal.
  // --------------------------------------------------------------------------

  int place_aux(Sys& sys, int v, const GuardSet& phi, Undo& undo) {
    const auto& vx = sys.G.at(v);
    switch (vx.kind) {
      case CircuitGraph::Linear:
        throw UncError("cannot place an auxiliary pebble on a linear vertex");
      case CircuitGraph::Init: {
        int q = sys.labels.fresh(vx.loc, false, sys.next_label);
        PebbleStep st;
        st.rule = PebbleStep::Init;
        st.vertex = v;
        st.label = q;
        apply_step(sys, st, &undo);
        GuardSet cur;
        for (auto& g : phi.gs) {
          PebbleStep sp;
          sp.rule = PebbleStep::Split;
          sp.vertex = v;
          sp.label = q;
          sp.guards = cur;
          sp.split_on = g;
          apply_step(sys, sp, &undo);
          cur = cur.with(g);
        }
        return q;
      }
      case CircuitGraph::Gate: {
        int src = vx.tgt_src;
        int q = place_aux(sys, src, phi, undo);
        // goal: phi plus the polarity-adjusted controls
        std::vector<Guard> goal(phi.gs.begin(), phi.gs.end());
        GuardSet full = phi;
        for (auto& [c, pol] : vx.controls) {
          Guard g = sys.G.guard_of(c, Lifetime::stat());
          if (pol) g = g.negate();
          goal.push_back(g);
          full = full.with(g);
        }
        Undo arr;
        std::vector<int> wits = arrange_witnesses(sys, goal, arr);
        PebbleStep st;
        st.rule = PebbleStep::Gate;
        st.vertex = v;
        st.label = q;
        st.guards = phi;
        st.witnesses = wits;
        apply_step(sys, st, &undo);
        undo.steps.insert(undo.steps.end() - 1, arr.steps.begin(), arr.steps.end());
        return q;
      }
      case CircuitGraph::Merge: {
        const Guard& gp = vx.guard;
        if (phi.contains(gp)) {
          int q = place_aux(sys, vx.src1, phi, undo);
          PebbleStep st;
          st.rule = PebbleStep::MergeGuard;
          st.vertex = v;
          st.side = 1;
          st.label = q;
          st.guards = phi;
          apply_step(sys, st, &undo);
          return q;
        }
        if (phi.contains(gp.negate())) {
          int q = place_aux(sys, vx.src0, phi, undo);
          PebbleStep st;
          st.rule = PebbleStep::MergeGuard;
          st.vertex = v;
          st.side = 0;
          st.label = q;
          st.guards = phi;
          apply_step(sys, st, &undo);
          return q;
        }
        // unresolved guard: build both sides and unify the labels through the
        // location's init vertex
        int q1 = place_aux(sys, vx.src1, phi, undo);
        int q0 = place_aux(sys, vx.src0, phi, undo);
        auto split_at = [&](int label, int vert, const GuardSet& base, const Guard& g) {
          PebbleStep sp;
          sp.rule = PebbleStep::Split;
          sp.vertex = vert;
          sp.label = label;
          sp.guards = base;
          sp.split_on = g;
          apply_step(sys, sp, &undo);
        };
        split_at(q1, vx.src1, phi, gp);
        split_at(q0, vx.src0, phi, gp);
        auto merge_move = [&](int label, int side, const GuardSet& gs) {
          PebbleStep st;
          st.rule = PebbleStep::MergeGuard;
          st.vertex = v;
          st.side = side;
          st.label = label;
          st.guards = gs;
          apply_step(sys, st, &undo);
        };
        merge_move(q1, 1, phi.with(gp));
        merge_move(q0, 0, phi.with(gp.negate()));
        // leftovers: q1{phi & !gp} on src1, q0{phi & gp} on src0
        // unify: bring q0's fragment on v into q1's label via the init vertex
        int iv = sys.G.ensure_init(vx.loc);
        int qq = sys.labels.fresh(vx.loc, false, sys.next_label);
        {
          PebbleStep st;
          st.rule = PebbleStep::Init;
          st.vertex = iv;
          st.label = qq;
          apply_step(sys, st, &undo);
        }
        GuardSet region = phi.with(gp);  // the q0-leftover region on src0
        {
          GuardSet cur;
          for (auto& g : region.gs) {
            PebbleStep sp;
            sp.rule = PebbleStep::Split;
            sp.vertex = iv;
            sp.label = qq;
            sp.guards = cur;
            sp.split_on = g;
            apply_step(sys, sp, &undo);
            cur = cur.with(g);
          }
        }
        Undo arr;
        std::vector<int> wits = arrange_witnesses(sys, region.gs, arr);
        for (auto& stp : arr.steps) undo.steps.push_back(stp);
        auto cd = [&](bool fwd, int vert, int moving, int resident, const GuardSet& gs) {
          PebbleStep st;
          st.rule = PebbleStep::CopyDelete;
          st.forward = fwd;
          st.vertex = vert;
          st.label = moving;
          st.label2 = resident;
          st.guards = gs;
          st.witnesses = wits;
          apply_step(sys, st, &undo);
        };
        // swap q0-leftover at src0 with qq
        cd(true, vx.src0, qq, q0, region);
        cd(false, vx.src0, q0, qq, region);
        // swap the q1 fragment on v with q0 (fresh from the init vertex)
        cd(true, v, q0, q1, region);
        cd(false, v, q1, q0, region);
        // q0 now covers both polarities on v: record the merge as a reverse
        // split so the trail stays invertible
        PebbleStep mg;
        mg.rule = PebbleStep::Split;
        mg.forward = false;
        mg.vertex = v;
        mg.label = q0;
        mg.guards = phi;
        mg.split_on = gp;
        apply_step(sys, mg, &undo);
        return q0;
      }
    }
    throw UncError("unreachable");
  }

  // --------------------------------------------------------------------------
  // Ready-statement execution (the graph-growing rules)
  // --------------------------------------------------------------------------

  void step_ready(Sys& sys, Thread& t) {
    if (t.pc >= t.stmts.size()) {
      t.status = ThreadStatus::Terminated;
      return;
    }
    Stmt& s = t.stmts[t.pc];
    switch (s.kind) {
      case Stmt::Noop: ++t.pc; return;
      case Stmt::NewLft:
        sys.A.add_var(s.lft);
        sys.A.mark_nonempty(s.lft);
        ++t.pc;
        return;
      case Stmt::LftLeq:
        sys.A.add_leq(s.lft, s.lft2);
        ++t.pc;
        return;
      case Stmt::EndLft:
      case Stmt::Coerce: {
        std::set<int> before = affine_qlocs(t, sys.A);
        if (s.kind == Stmt::EndLft) {
          ctx_defrost(t.ctx, s.lft);
          sys.A.remove_var(s.lft);
        } else {
          CtxEntry* e = t.ctx.find(s.var);
          e->ty = s.ty;
        }
        std::set<int> after = affine_qlocs(t, sys.A);
        std::set<int> leaving;
        for (int l : before)
          if (!after.count(l)) leaving.insert(l);
        // add guarded edges into the linear vertices and advance now
        t.check_locs.clear();
        for (int l : leaving) {
          int cur = now_vertex(sys, t, l);
          if (cur < 0) continue;
          int wl = sys.G.ensure_linear(l);
          sys.G.add_linear_edge(wl, cur, t.control_set());
          t.now.erase(cur);
          t.now.insert(wl);
          t.check_locs.insert(l);
        }
        t.checked = s.clone();
        t.status = ThreadStatus::Check;
        ++t.pc;
        return;
      }
      case Stmt::Freeze: {
        CtxEntry* e = t.ctx.find(s.var2);
        TyPtr frozen_ty = e->ty;
        e->aliveness = Aliveness::frozen(s.lft);
        t.ctx.insert(s.var, Ty::ref(s.lft, frozen_ty));
        t.loc[s.var] = t.loc[s.var2];
        ++t.pc;
        return;
      }
      case Stmt::LetPair: {
        TyPtr ty = take_ty(t.ctx, s.expr.args[0]);
        std::vector<bool> shape;
        layout_of(ty->fst, shape);
        auto locs = t.loc[s.expr.args[0]];
        t.loc.erase(s.expr.args[0]);
        t.loc[s.var] = {locs.begin(), locs.begin() + long(shape.size())};
        t.loc[s.var2] = {locs.begin() + long(shape.size()), locs.end()};
        t.ctx.insert(s.var, ty->fst);
        t.ctx.insert(s.var2, ty->snd);
        ++t.pc;
        return;
      }
      case Stmt::Drop: return exec_drop(sys, t, s);
      case Stmt::LetExpr: return exec_let(sys, t, s);
    }
  }

  int now_vertex(Sys& sys, Thread& t, int loc) {
    for (int v : t.now)
      if (sys.G.at(v).loc == loc) return v;
    return -1;
  }

  void exec_drop(Sys& sys, Thread& t, Stmt& s) {
    auto owners = owners_of(t, sys.A);
    std::vector<int> lq;
    std::vector<int> lc;
    for (auto& [l, o] : owners) {
      if (o != s.var) continue;
      (l.quantum ? lq : lc).push_back(l.id);
    }
    std::sort(lq.begin(), lq.end());
    t.ctx.erase(s.var);
    t.loc.erase(s.var);
    for (int c : lc) sys.cstore.erase(c);
    GuardSet C = t.control_set();
    for (int l : lq) {
      int v = now_vertex(sys, t, l);
      if (v < 0) throw UncError("dropped location has no tracked vertex");
      t.now.erase(v);
      t.freelist.push_back(l);
      int lab = sys.labels.main_label(l);
      int iv_existing = sys.G.has_init(l) ? sys.G.init_of(l) : -1;
      if (sys.G.at(v).kind == CircuitGraph::Init) continue;  // already parked
      if (sys.G.at(v).kind == CircuitGraph::Linear)
        throw UncError("cannot uncompute a linear input wire");
      (void)iv_existing;
      int iv = sys.G.ensure_init(l);
      // Cor-D.8 strategy: aux copy, delete against it, reverse the aux trail
      Undo lazy_splits;  // refinement splits persist; normalize re-merges them
      Pebble frag = refine_fragment(sys, lab, v, C, &lazy_splits);
      Undo trail;
      int aux = place_aux(sys, v, frag.guards, trail);
      Undo arr;
      std::vector<int> wits = arrange_witnesses(sys, frag.guards.gs, arr);
      for (auto& stp : arr.steps) trail.steps.push_back(stp);
      PebbleStep cd;
      cd.rule = PebbleStep::CopyDelete;
      cd.forward = false;  // move the main fragment back onto the init vertex
      cd.vertex = v;
      cd.label = lab;
      cd.label2 = aux;
      cd.guards = frag.guards;
      cd.witnesses = wits;
      apply_step(sys, cd);
      unwind(sys, trail);
      sys.peb.normalize();
      (void)iv;
    }
    ++t.pc;
  }

  void exec_let(Sys& sys, Thread& t, Stmt& s) {
    Expr& e = s.expr;
    const std::string& y = s.var;
    switch (e.kind) {
      case Expr::Var: {
        TyPtr ty = take_ty(t.ctx, e.args[0]);
        t.loc[y] = t.loc[e.args[0]];
        t.loc.erase(e.args[0]);
        t.ctx.insert(y, ty);
        ++t.pc;
        return;
      }
      case Expr::BoolLit: {
        int c = fresh_cloc(sys, t);
        sys.cstore[c] = e.bval;
        t.loc[y] = {{false, c}};
        t.ctx.insert(y, Ty::own(Lifetime::stat(), Ty::boolean()));
        ++t.pc;
        return;
      }
      case Expr::UnitLit:
        t.loc[y] = {};
        t.ctx.insert(y, Ty::unit());
        ++t.pc;
        return;
      case Expr::Tuple: {
        std::vector<Loc> locs;
        std::vector<TyPtr> tys;
        for (auto& x : e.args) {
          auto lx = t.loc[x];
          locs.insert(locs.end(), lx.begin(), lx.end());
          tys.push_back(take_ty(t.ctx, x));
          t.loc.erase(x);
        }
        TyPtr ty = tys.back();
        for (size_t i = tys.size() - 1; i-- > 0;) ty = Ty::pair(tys[i], ty);
        t.loc[y] = locs;
        t.ctx.insert(y, ty);
        ++t.pc;
        return;
      }
      case Expr::Copy: {
        auto owners = owners_of(t, sys.A);
        auto locs = t.loc[e.args[0]];
        for (auto& l : locs) {
          if (!l.quantum && owners.count(l) && owners.at(l) == e.args[0]) {
            int c = fresh_cloc(sys, t);
            sys.cstore[c] = sys.cstore.at(l.id);
            l = {false, c};
          }
        }
        t.loc[y] = locs;
        t.ctx.insert(y, t.ctx.find(e.args[0])->ty);
        ++t.pc;
        return;
      }
      case Expr::Meas:
      case Expr::Unitary: {
        t.checked = s.clone();
        t.status = ThreadStatus::Check;
        ++t.pc;
        return;
      }
      case Expr::Lifted: return exec_lifted(sys, t, s);
      case Expr::Call: return spawn_call(sys, t, s);
      case Expr::If: return spawn_if(sys, t, s);
      case Expr::Qif: return spawn_qif(sys, t, s);
    }
  }

  // `let y = [c](x...)` in the decomposed |0>-and-single-target normal form
  void exec_lifted(Sys& sys, Thread& t, Stmt& s) {
    Expr& e = s.expr;
    const InjectionTable& tab = inj_.get(e.table);
    std::vector<Loc> wires;
    std::optional<Lifetime> bound;
    for (auto& x : e.args) {
      for (auto& l : t.loc[x]) wires.push_back(l);
      TyPtr ty = take_ty(t.ctx, x);
      bound = ty->lft;
      t.loc.erase(x);
    }
    GuardSet C = t.control_set();
    auto steps = decompose(tab);
    for (auto& st : steps) {
      if (st.kind == SynthStep::Init) {
        int l = fresh_qloc(sys, t);
        wires.push_back({true, l});
        int v = sys.G.ensure_init(l);
        if (now_vertex(sys, t, l) >= 0)
          throw UncError("fresh location already tracked by the thread");
        t.now.insert(v);
        if (!sys.labels.has_main(l)) {
          int lab = sys.labels.fresh(l, true, sys.next_label);
          PebbleStep ps;
          ps.rule = PebbleStep::Init;
          ps.vertex = v;
          ps.label = lab;
          apply_step(sys, ps);
        } else {
          int lab = sys.labels.main_label(l);
          if (!covering_fragment(sys, lab, v, C))
            throw UncError("reused location's pebble is not parked on the init vertex");
        }
      } else {
        apply_single_target_step(sys, t, wires, st);
      }
    }
    t.loc[s.var] = wires;
    t.ctx.insert(s.var, Ty::own(bound.value_or(Lifetime::stat()), Ty::qbits(tab.m)));
    ++t.pc;
  }

  void apply_single_target_step(Sys& sys, Thread& t, const std::vector<Loc>& wires,
                                const SynthStep& st) {
    int lt = wires[size_t(st.target)].id;
    int v0 = now_vertex(sys, t, lt);
    if (v0 < 0) throw UncError("gate target has no tracked vertex");
    std::vector<std::pair<int, bool>> ctl_vertices;
    for (auto& [w, pol] : st.controls) {
      int cv = now_vertex(sys, t, wires[size_t(w)].id);
      if (cv < 0) throw UncError("gate control has no tracked vertex");
      ctl_vertices.emplace_back(cv, pol);
    }
    // vertex choice: undo the current gate vertex when it matches, reuse the
    // involution for a plain negation, otherwise create a fresh gate vertex
    const auto& cur = sys.G.at(v0);
    int target_vertex;
    bool fwd = true;
    auto same_gate = [&]() {
      if (cur.kind != CircuitGraph::Gate) return false;
      if (cur.controls.size() != ctl_vertices.size()) return false;
      auto a = cur.controls;
      auto b = ctl_vertices;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      return a == b;
    };
    if (same_gate()) {
      target_vertex = v0;
      fwd = false;
      t.now.erase(v0);
      t.now.insert(cur.tgt_src);
    } else if (ctl_vertices.empty()) {
      // a plain negation reuses the involution partner
      target_vertex = sys.G.neg_of(v0);
      t.now.erase(v0);
      t.now.insert(target_vertex);
    } else {
      target_vertex = sys.G.add_gate(lt, v0, ctl_vertices);
      t.now.erase(v0);
      t.now.insert(target_vertex);
    }
    // move the main pebble through the gate under the thread's control
    GuardSet C = t.control_set();
    int lab = sys.labels.main_label(lt);
    int from = fwd ? sys.G.at(target_vertex).tgt_src : target_vertex;
    Undo trail;
    Pebble frag = refine_fragment(sys, lab, from, C, &trail);
    std::vector<Guard> goal(frag.guards.gs.begin(), frag.guards.gs.end());
    for (auto& [cv, pol] : sys.G.at(target_vertex).controls) {
      Guard g = sys.G.guard_of(cv, Lifetime::stat());
      if (pol) g = g.negate();
      goal.push_back(g);
    }
    Undo arr;
    std::vector<int> wits = arrange_witnesses(sys, goal, arr);
    PebbleStep mv;
    mv.rule = PebbleStep::Gate;
    mv.forward = fwd;
    mv.vertex = target_vertex;
    mv.label = lab;
    mv.guards = frag.guards;
    mv.witnesses = wits;
    apply_step(sys, mv);
    unwind(sys, arr);
    sys.peb.normalize();
    (void)trail;  // refinement splits persist; they re-merge on normalize
  }

  // -- spawning ---------------------------------------------------------------

  Lifetime fresh_lifetime(Sys& sys) { return Lifetime::var("%l" + std::to_string(sys.next_lft++)); }

  void spawn_call(Sys& sys, Thread& t, Stmt& s) {
    Expr& e = s.expr;
    const FnDef* callee = prog_.find(e.fn);
    // instantiate the callee body: signature lifetimes to the actual
    // arguments, local lifetimes to fresh names
    std::map<std::string, Lifetime> sub;
    for (size_t i = 0; i < callee->sig.lft_params.size(); ++i)
      sub[callee->sig.lft_params[i].name] = e.lft_args[i];
    Block body = callee->body.clone();
    rename_local_lifetimes(sys, body, sub);
    substitute_lifetimes(body, sub);

    Thread child;
    child.id = sys.next_thread++;
    for (auto& st : body.stmts) child.stmts.push_back(std::move(st));
    child.result = body.result;
    child.loc = t.loc;
    child.now = t.now;
    child.control = t.control;
    child.cursor = t.cursor;
    child.freelist = t.freelist;
    child.ctx = t.ctx;

    // caller context after the call
    TyCtx post = t.ctx;
    for (size_t i = 0; i < e.args.size(); ++i) {
      TyPtr ty = detail::subst_ty(callee->sig.params[i].ty, sub);
      child.ctx.erase(e.args[i]);
      child.ctx.insert(callee->sig.params[i].name, ty);
      child.loc[callee->sig.params[i].name] = child.loc[e.args[i]];
      child.loc.erase(e.args[i]);
      post.erase(e.args[i]);
    }
    post.insert(s.var, detail::subst_ty(callee->sig.ret, sub));

    t.status = ThreadStatus::Await;
    t.await_var = s.var;
    t.await_children = {child.id};
    t.await_qif = false;
    t.await_post_ctx = std::move(post);
    ++t.pc;
    sys.threads.push_back(std::move(child));
  }

  void rename_local_lifetimes(Sys& sys, const Block& b, std::map<std::string, Lifetime>& sub) {
    for (auto& st : b.stmts) {
      if (st.kind == Stmt::NewLft && !sub.count(st.lft.name))
        sub[st.lft.name] = fresh_lifetime(sys);
      if (st.kind == Stmt::LetExpr &&
          (st.expr.kind == Expr::If || st.expr.kind == Expr::Qif)) {
        rename_local_lifetimes(sys, *st.expr.then_blk, sub);
        rename_local_lifetimes(sys, *st.expr.else_blk, sub);
      }
    }
  }

  static Lifetime sub_lft(const Lifetime& a, const std::map<std::string, Lifetime>& sub) {
    if (a.is_var()) {
      auto it = sub.find(a.name);
      if (it != sub.end()) return it->second;
    }
    return a;
  }

  static void substitute_lifetimes(Block& b, const std::map<std::string, Lifetime>& sub) {
    for (auto& st : b.stmts) {
      st.lft = sub_lft(st.lft, sub);
      st.lft2 = sub_lft(st.lft2, sub);
      if (st.ty) st.ty = detail::subst_ty(st.ty, sub);
      if (st.kind == Stmt::LetExpr) {
        for (auto& la : st.expr.lft_args) la = sub_lft(la, sub);
        if (st.expr.kind == Expr::If || st.expr.kind == Expr::Qif) {
          substitute_lifetimes(*st.expr.then_blk, sub);
          substitute_lifetimes(*st.expr.else_blk, sub);
        }
      }
    }
  }

  void spawn_if(Sys& sys, Thread& t, Stmt& s) {
    Expr& e = s.expr;
    bool bit = sys.cstore.at(t.loc[e.args[0]][0].id);
    const Block& blk = bit ? *e.then_blk : *e.else_blk;
    Thread child;
    child.id = sys.next_thread++;
    for (auto& st : blk.stmts) child.stmts.push_back(st.clone());
    child.result = blk.result;
    child.loc = t.loc;
    child.now = t.now;
    child.control = t.control;
    child.cursor = t.cursor;
    child.freelist = t.freelist;
    child.ctx = t.ctx;
    t.status = ThreadStatus::Await;
    t.await_var = s.var;
    t.await_children = {child.id};
    t.await_qif = false;
    t.await_post_ctx.reset();
    ++t.pc;
    sys.threads.push_back(std::move(child));
  }

  void spawn_qif(Sys& sys, Thread& t, Stmt& s) {
    Expr& e = s.expr;
    const CtxEntry* ctl = t.ctx.find(e.args[0]);
    Lifetime alpha = ctl->ty->lft;
    int lx = t.loc[e.args[0]][0].id;
    int vx = now_vertex(sys, t, lx);
    if (vx < 0) throw UncError("qif control has no tracked vertex");
    Guard g = sys.G.guard_of(vx, alpha);

    // nested qif on the same control vertex: only one branch makes sense
    for (auto& h : t.control) {
      if (sys.G.vertex_of(h) == vx || sys.G.vertex_of(h) == sys.G.neg_of(vx)) {
        bool positive = sys.G.vertex_of(h) == vx;
        const Block& blk = positive ? *e.then_blk : *e.else_blk;
        Thread child;
        child.id = sys.next_thread++;
        for (auto& st : blk.stmts) child.stmts.push_back(st.clone());
        child.result = blk.result;
        child.loc = t.loc;
        child.now = t.now;
        child.control = t.control;
        child.cursor = t.cursor;
        child.freelist = t.freelist;
        child.ctx = t.ctx;
        t.status = ThreadStatus::Await;
        t.await_var = s.var;
        t.await_children = {child.id};
        t.await_qif = true;
        t.await_guard = g;
        t.await_ctl_lft = alpha;
        t.await_post_ctx.reset();
        ++t.pc;
        sys.threads.push_back(std::move(child));
        return;
      }
    }

    auto make_child = [&](const Block& blk, const Guard& gd) {
      Thread child;
      child.id = sys.next_thread++;
      for (auto& st : blk.stmts) child.stmts.push_back(st.clone());
      child.result = blk.result;
      child.loc = t.loc;
      child.now = t.now;
      child.control = t.control;
      child.control.push_back(gd);
      child.cursor = t.cursor;
      child.freelist = t.freelist;
      child.ctx = t.ctx;
      // duplicate the owned classical cells
      auto owners = owners_of(t, sys.A);
      std::map<int, int> remap;
      for (auto& [l, o] : owners) {
        if (l.quantum) continue;
        int c = t.cursor++;  // parent's cursor so siblings do not collide
        remap[l.id] = c;
        sys.cstore[c] = sys.cstore.at(l.id);
      }
      child.cursor = t.cursor;
      for (auto& [k, locs] : child.loc)
        for (auto& l : locs)
          if (!l.quantum && remap.count(l.id)) l.id = remap.at(l.id);
      return child;
    };
    Thread then_child = make_child(*e.then_blk, g);
    Thread else_child = make_child(*e.else_blk, g.negate());
    else_child.cursor = then_child.cursor = std::max(then_child.cursor, else_child.cursor);

    t.status = ThreadStatus::Await;
    t.await_var = s.var;
    t.await_children = {then_child.id, else_child.id};
    t.await_qif = true;
    t.await_guard = g;
    t.await_ctl_lft = alpha;
    t.await_post_ctx.reset();
    ++t.pc;
    sys.threads.push_back(std::move(then_child));
    sys.threads.push_back(std::move(else_child));
  }

  // -- waking -----------------------------------------------------------------

  void wake(Sys& sys, Thread& t) {
    if (t.await_children.size() == 1) {
      Thread child = std::move(thread_by_id(sys, t.await_children[0]));
      remove_thread(sys, t.await_children[0]);
      std::vector<Loc> rl;
      TyPtr rty = Ty::unit();
      if (child.result) {
        rl = child.loc[*child.result];
        rty = child.ctx.find(*child.result)->ty;
        child.loc.erase(*child.result);
        child.ctx.erase(*child.result);
      }
      t.loc = std::move(child.loc);
      t.loc[t.await_var] = rl;
      t.now = std::move(child.now);
      t.cursor = child.cursor;
      t.freelist = std::move(child.freelist);
      if (t.await_post_ctx) {
        t.ctx = std::move(*t.await_post_ctx);
      } else {
        t.ctx = std::move(child.ctx);
        t.ctx.insert(t.await_var,
                     t.await_qif ? Ty::own(t.await_ctl_lft, rty) : rty);
      }
      t.status = ThreadStatus::Ready;
      return;
    }
    // qif: two children
    Thread c1 = std::move(thread_by_id(sys, t.await_children[0]));
    Thread c0 = std::move(thread_by_id(sys, t.await_children[1]));
    remove_thread(sys, t.await_children[0]);
    remove_thread(sys, t.await_children[1]);
    if (!c1.result || !c0.result) throw UncError("qif branches must return a value");
    std::vector<Loc> L1 = c1.loc[*c1.result];
    std::vector<Loc> L0 = c0.loc[*c0.result];
    if (L1 != L0)
      throw UncError("qif branch result locations differ; normalisation failed");
    TyPtr rty = c1.ctx.find(*c1.result)->ty;

    // classify the result locations under the branch context
    std::set<int> affine;
    {
      Env env;
      env.loc.clear();
      env.loc["%res"] = L1;
      TyCtx rctx;
      rctx.insert("%res", rty);
      OwnershipView v = ownership(env, rctx, sys.A);
      for (auto& [l, c] : v.cls)
        if (l.quantum && c == LocClass::Affine) affine.insert(l.id);
    }

    GuardSet C = t.control_set();
    const Guard& g = t.await_guard;
    for (auto& l : L1) {
      if (!l.quantum || !affine.count(l.id)) continue;
      int v1 = -1, v0 = -1;
      for (int v : c1.now)
        if (sys.G.at(v).loc == l.id) v1 = v;
      for (int v : c0.now)
        if (sys.G.at(v).loc == l.id) v0 = v;
      if (v1 < 0 || v0 < 0) throw UncError("qif result location untracked in a branch");
      int w = sys.G.add_merge(l.id, v0, v1, g);
      // move the two pinned fragments through the merge
      int lab = sys.labels.main_label(l.id);
      Undo dummy;
      Pebble f1 = refine_fragment(sys, lab, v1, C.with(g), &dummy);
      PebbleStep m1;
      m1.rule = PebbleStep::MergeGuard;
      m1.vertex = w;
      m1.side = 1;
      m1.label = lab;
      m1.guards = f1.guards;
      apply_step(sys, m1);
      Pebble f0 = refine_fragment(sys, lab, v0, C.with(g.negate()), &dummy);
      PebbleStep m0;
      m0.rule = PebbleStep::MergeGuard;
      m0.vertex = w;
      m0.side = 0;
      m0.label = lab;
      m0.guards = f0.guards;
      apply_step(sys, m0);
      sys.peb.normalize();
      c1.now.erase(v1);
      c0.now.erase(v0);
      c1.now.insert(w);
      c0.now.insert(w);
    }
    if (c1.now != c0.now) throw UncError("qif branch now-sets disagree after merging");

    t.now = std::move(c1.now);
    t.loc = c1.loc;
    t.loc.erase(*c1.result);
    t.loc[t.await_var] = L1;
    t.ctx = std::move(c1.ctx);
    t.ctx.erase(*c1.result);
    t.ctx.insert(t.await_var, Ty::own(t.await_ctl_lft, rty));
    t.cursor = std::max(c1.cursor, c0.cursor);
    std::deque<int> fl;
    for (int id : c1.freelist)
      if (std::find(c0.freelist.begin(), c0.freelist.end(), id) != c0.freelist.end())
        fl.push_back(id);
    t.freelist = std::move(fl);
    t.status = ThreadStatus::Ready;
  }

  void remove_thread(Sys& sys, int id) {
    sys.threads.erase(std::remove_if(sys.threads.begin(), sys.threads.end(),
                                     [&](const Thread& t) { return t.id == id; }),
                      sys.threads.end());
  }

  // -- checked statements -----------------------------------------------------

  // Returns true when a measurement forked and the branches were driven.
  bool exec_checked(Sys& sys, Thread& t, std::vector<UncBranch>& out) {
    const Stmt& s = t.checked;
    if (s.kind == Stmt::EndLft || s.kind == Stmt::Coerce) {
      // the uncomputer must already have the linear vertices pebbled; move
      // the pinned fragments across the guarded edges now
      GuardSet C = t.control_set();
      for (int l : t.check_locs) {
        int wl = sys.G.linear_of(l);
        int lab = sys.labels.main_label(l);
        if (covering_fragment(sys, lab, wl, C)) continue;
        // fragment still sits at the edge source
        const auto& edges = sys.G.at(wl).lin_edges;
        bool moved = false;
        for (auto& [src, egs] : edges) {
          Undo dummy;
          auto f = covering_fragment(sys, lab, src, C);
          if (!f) continue;
          Pebble frag = refine_fragment(sys, lab, src, C, &dummy);
          if (!frag.guards.superset_of(egs)) continue;
          PebbleStep st;
          st.rule = PebbleStep::LinearGuard;
          st.vertex = wl;
          st.src = src;
          st.label = lab;
          st.guards = frag.guards;
          apply_step(sys, st);
          moved = true;
          break;
        }
        if (!moved)
          throw UncError("pebble for a linearised location cannot reach its linear vertex");
        sys.peb.normalize();
      }
      // executable: every such location's pebble rests on the linear vertex
      for (int l : t.check_locs) {
        int wl = sys.G.linear_of(l);
        if (!covering_fragment(sys, sys.labels.main_label(l), wl, C))
          throw UncError("linearised location not pebbled on its linear vertex");
      }
      t.status = ThreadStatus::Ready;
      return false;
    }
    if (s.expr.kind == Expr::Meas) {
      if (!t.control.empty())
        throw UncError("measurement under quantum control reached the scheduler");
      const std::string& x = s.expr.args[0];
      int l = t.loc[x][0].id;
      int wl = sys.G.has_linear(l) ? sys.G.linear_of(l) : -1;
      int lab = sys.labels.main_label(l);
      if (wl < 0 || !sys.peb.has(wl, Pebble{lab, {}}))
        throw UncError("measured qubit's whole pebble is not on its linear vertex");
      take_ty(t.ctx, x);
      t.loc.erase(x);
      // fork the system on the outcome
      for (int bit = 0; bit < 2; ++bit) {
        Sys branch = sys;
        Thread& bt = branch_thread(branch, t.id);
        auto branches = branch.state.measure(lab);
        branch.state = std::move(branches[bit].second);
        GateEvent ev{GateEvent::Project, lab, bit};
        branch.events.push_back(ev);
        branch.outcomes.push_back(bit);
        int c = fresh_cloc(branch, bt);
        branch.cstore[c] = bit == 1;
        bt.loc[s.var] = {{false, c}};
        bt.ctx.insert(s.var, Ty::own(Lifetime::stat(), Ty::boolean()));
        bt.status = ThreadStatus::Ready;
        drive(std::move(branch), *prog_.find(entry_of(sys)), out);
      }
      return true;
    }
    // unitary
    const Expr& e = s.expr;
    std::vector<int> targets;
    for (auto& x : e.args)
      for (auto& l : t.loc[x]) targets.push_back(l.id);
    GuardSet C = t.control_set();
    // executable checks
    for (int l : targets) {
      int wl = sys.G.has_linear(l) ? sys.G.linear_of(l) : -1;
      int lab = sys.labels.main_label(l);
      if (wl < 0 || !covering_fragment(sys, lab, wl, C))
        throw UncError("unitary target is not pebbled on its linear vertex");
      if (sys.peb.any_fragmented_by(wl) || sys.peb.any_fragmented_by(sys.G.neg_of(wl)))
        throw UncError("a pebble is fragmented by the unitary target's linear vertex");
    }
    Undo arr;
    std::vector<int> wits = arrange_witnesses(sys, t.control, arr);
    if (!guard_entailment(sys.A, sys.G, sys.peb, wits, C))
      throw UncError("unitary controls are not entailed");
    // the physical event: a controlled unitary over (controls, targets)
    GateMatrix m = e.gate == "phase" ? GateTable::phase(e.angle) : gates_.get(e.gate);
    std::vector<int> tlabels;
    for (int l : targets) tlabels.push_back(sys.labels.main_label(l));
    GateEvent ev{GateEvent::Unitary};
    if (wits.empty()) {
      ev.targets = tlabels;
      ev.matrix = m;
    } else {
      std::vector<int> all = wits;
      all.insert(all.end(), tlabels.begin(), tlabels.end());
      ev.targets = all;
      ev.matrix = controlled(m, int(wits.size()));
    }
    sys.state = sys.state.apply_unitary(ev.matrix, ev.targets);
    sys.events.push_back(ev);
    unwind(sys, arr);
    sys.peb.normalize();
    // rebind
    std::vector<Loc> locs;
    for (auto& x : e.args) {
      for (auto& l : t.loc[x]) locs.push_back(l);
      take_ty(t.ctx, x);
      t.loc.erase(x);
    }
    t.loc[s.var] = locs;
    t.ctx.insert(s.var, Ty::own(Lifetime::empty(), Ty::qbits(int(targets.size()))));
    t.status = ThreadStatus::Ready;
    return false;
  }

  Thread& branch_thread(Sys& sys, int id) { return thread_by_id(sys, id); }

  const std::string& entry_of(const Sys&) { return entry_name_; }

  static GateMatrix controlled(const GateMatrix& u, int controls) {
    GateMatrix r;
    r.qubits = u.qubits + controls;
    size_t d = size_t(1) << r.qubits;
    size_t ud = u.dim();
    r.m.assign(d * d, cplx(0));
    for (size_t i = 0; i < d; ++i) {
      bool on = (i >> u.qubits) == ((size_t(1) << controls) - 1);
      if (!on) {
        r.m[i * d + i] = 1;
      } else {
        size_t base = i - (i % ud);
        for (size_t j = 0; j < ud; ++j) r.m[i * d + (base + j)] = u.m[(i % ud) * ud + j];
      }
    }
    return r;
  }

 public:
  // set by run_eager wrappers that need the entry name during forks
  std::string entry_name_;

 private:
  Program prog_;
  const GateTable& gates_;
  const InjectionRegistry& inj_;
};

// ---------------------------------------------------------------------------
// Public entry points
// ---------------------------------------------------------------------------

inline std::vector<UncBranch> run_eager(const Program& p, const std::string& entry,
                                        const GateTable& gates = default_gates(),
                                        const InjectionRegistry& inj = default_injections()) {
  UncInterp in(p, gates, inj);
  in.entry_name_ = entry;
  return in.run_eager(entry);
}

struct InterleavingReport {
  int runs = 0;
  int distinct_schedules = 0;
  double max_distance = 0.0;  // max pairwise state distance per branch
  bool agreed = true;
};

inline InterleavingReport verify_interleavings(const Program& p, const std::string& entry,
                                               int n, unsigned seed = 12345,
                                               const GateTable& gates = default_gates(),
                                               const InjectionRegistry& inj =
                                                   default_injections()) {
  InterleavingReport rep;
  std::vector<std::vector<UncBranch>> results;
  std::set<std::vector<int>> schedules;
  std::mt19937 rng(seed);
  for (int i = 0; i < n; ++i) {
    UncInterp in(p, gates, inj);
    in.entry_name_ = entry;
    std::vector<int> trace;
    if (i == 0) {
      in.chooser = nullptr;  // the deterministic default
    } else {
      in.chooser = [&rng, &trace](const std::vector<int>& ids) {
        int pick = ids[rng() % ids.size()];
        trace.push_back(pick);
        return pick;
      };
    }
    results.push_back(in.run_eager(entry));
    schedules.insert(trace);
    ++rep.runs;
  }
  rep.distinct_schedules = int(schedules.size());
  for (size_t i = 1; i < results.size(); ++i) {
    if (results[i].size() != results[0].size()) {
      rep.agreed = false;
      continue;
    }
    for (size_t b = 0; b < results[0].size(); ++b) {
      const UncBranch& x = results[0][b];
      const UncBranch& y = results[i][b];
      if (x.outcomes != y.outcomes) {
        rep.agreed = false;
        continue;
      }
      // align structurally: wires first, then the result components
      std::vector<int> ox = x.wire_labels, oy = y.wire_labels;
      ox.insert(ox.end(), x.result_labels.begin(), x.result_labels.end());
      oy.insert(oy.end(), y.result_labels.begin(), y.result_labels.end());
      if (ox.size() != oy.size() || ox.size() != x.final_state.labels().size() ||
          oy.size() != y.final_state.labels().size()) {
        rep.agreed = false;
        continue;
      }
      QState xs = x.final_state.with_label_order(ox);
      QState ys = y.final_state.with_label_order(oy);
      double dist = 0;
      auto& ax = xs.amplitudes();
      auto& ay = ys.amplitudes();
      for (size_t k = 0; k < ax.size(); ++k)
        dist = std::max(dist, std::abs(ax[k] - ay[k]));
      rep.max_distance = std::max(rep.max_distance, dist);
    }
  }
  if (rep.max_distance > 1e-9) rep.agreed = false;
  return rep;
}

}  // namespace qurts
