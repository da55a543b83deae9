#pragma once

#include <cassert>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "qurts/ast.hpp"
#include "qurts/qstate.hpp"
#include "qurts/typecheck.hpp"

namespace qurts {

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Environments
// ---------------------------------------------------------------------------

struct Loc {
  bool quantum = true;
  int id = 0;
  friend bool operator==(const Loc& a, const Loc& b) {
    return a.quantum == b.quantum && a.id == b.id;
  }
  friend bool operator<(const Loc& a, const Loc& b) {
    if (a.quantum != b.quantum) return a.quantum < b.quantum;
    return a.id < b.id;
  }
};

struct Env {
  std::map<std::string, std::vector<Loc>> loc;
  QState q;                      // labels are quantum location ids
  std::map<int, bool> cstore;    // classical location id -> bit

  std::vector<Loc> of(const std::string& x) const {
    auto it = loc.find(x);
    return it == loc.end() ? std::vector<Loc>{} : it->second;
  }
};

// Number of locations a value of type T occupies, i.e. |[[T]]|.
inline void layout_of(const TyPtr& t, std::vector<bool>& out) {
  switch (t->kind) {
    case Ty::Qbit: out.push_back(true); return;
    case Ty::Bool: out.push_back(false); return;
    case Ty::Unit: return;
    case Ty::Pair:
      layout_of(t->fst, out);
      layout_of(t->snd, out);
      return;
    case Ty::Ref:
    case Ty::Own: layout_of(t->inner, out); return;
  }
}

inline bool compatible(const TyPtr& t, const std::vector<Loc>& locs) {
  std::vector<bool> shape;
  layout_of(t, shape);
  if (shape.size() != locs.size()) return false;
  for (size_t i = 0; i < shape.size(); ++i)
    if (locs[i].quantum != shape[i]) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Ownership (Defs. 4.2/4.3)
// ---------------------------------------------------------------------------

enum class LocClass { Frozen, Linear, Affine };

struct OwnershipView {
  std::map<Loc, std::string> owner;   // owned locations only
  std::map<Loc, LocClass> cls;        // every location in the environment
};

namespace detail {

// Walks a type alongside its location list. `borrowed` is set below any &;
// `owned_stack_live` tracks whether every # binder passed has a live lifetime;
// depth counts pointer binders.
inline void classify_walk(const TyPtr& t, const std::vector<Loc>& locs, size_t& i,
                          bool borrowed, bool all_live, int depth, const LftPreorder& A,
                          const std::string& var, bool var_active, OwnershipView& out) {
  switch (t->kind) {
    case Ty::Qbit:
    case Ty::Bool: {
      Loc l = locs[i++];
      if (!borrowed) {
        out.owner[l] = var;
        if (!var_active) {
          out.cls[l] = LocClass::Frozen;
        } else if (depth > 0 && all_live) {
          out.cls[l] = LocClass::Affine;
        } else {
          out.cls[l] = LocClass::Linear;
        }
      }
      return;
    }
    case Ty::Unit: return;
    case Ty::Pair:
      classify_walk(t->fst, locs, i, borrowed, all_live, depth, A, var, var_active, out);
      classify_walk(t->snd, locs, i, borrowed, all_live, depth, A, var, var_active, out);
      return;
    case Ty::Ref:
      classify_walk(t->inner, locs, i, true, all_live, depth + 1, A, var, var_active, out);
      return;
    case Ty::Own:
      classify_walk(t->inner, locs, i, borrowed, all_live && A.live(t->lft), depth + 1, A,
                    var, var_active, out);
      return;
  }
}

}  // namespace detail

inline OwnershipView ownership(const Env& env, const TyCtx& ctx, const LftPreorder& A) {
  OwnershipView v;
  for (auto& e : ctx) {
    auto it = env.loc.find(e.name);
    if (it == env.loc.end()) continue;
    size_t i = 0;
    detail::classify_walk(e.ty, it->second, i, false, true, 0, A, e.name,
                          e.aliveness.active, v);
  }
  // everything else in the memory is frozen
  for (int l : env.q.labels()) {
    Loc q{true, l};
    if (!v.cls.count(q)) v.cls[q] = LocClass::Frozen;
  }
  for (auto& [c, _] : env.cstore) {
    Loc cl{false, c};
    if (!v.cls.count(cl)) v.cls[cl] = LocClass::Frozen;
  }
  return v;
}

// Def. 4.3: conditioned on each frozen-basis assignment with support, the
// affinely owned register is a single computational basis state.
inline bool check_well_formed(const Env& env, const TyCtx& ctx, const LftPreorder& A,
                              double tol = 1e-9) {
  OwnershipView v = ownership(env, ctx, A);
  std::vector<int> frozen, affine;
  for (int l : env.q.labels()) {
    switch (v.cls.at({true, l})) {
      case LocClass::Frozen: frozen.push_back(l); break;
      case LocClass::Affine: affine.push_back(l); break;
      case LocClass::Linear: break;
    }
  }
  if (affine.empty()) return true;
  const auto& labels = env.q.labels();
  const auto& amps = env.q.amplitudes();
  size_t n = labels.size();
  auto bit_of = [&](size_t idx, int label) {
    size_t pos = 0;
    while (labels[pos] != label) ++pos;
    return (idx >> (n - 1 - pos)) & 1;
  };
  std::map<uint64_t, uint64_t> witness;  // frozen assignment -> affine bits
  for (size_t idx = 0; idx < amps.size(); ++idx) {
    if (std::abs(amps[idx]) <= tol) continue;
    uint64_t fkey = 0, akey = 0;
    for (size_t j = 0; j < frozen.size(); ++j) fkey |= bit_of(idx, frozen[j]) << j;
    for (size_t j = 0; j < affine.size(); ++j) akey |= bit_of(idx, affine[j]) << j;
    auto [it, inserted] = witness.emplace(fkey, akey);
    if (!inserted && it->second != akey) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Dependency graphs (the runtime verification instrument)
// ---------------------------------------------------------------------------

struct DepGraph {
  // sources[l] = ordered source locations of the edges into l
  std::map<int, std::vector<int>> sources;
  std::set<int> D;
  // F[l]: truth table over sources[l]; bit i of the key is sources[l][i]
  std::map<int, std::vector<bool>> F;

  bool has_edge(int from, int to) const {
    auto it = sources.find(to);
    if (it == sources.end()) return false;
    for (int s : it->second)
      if (s == from) return true;
    return false;
  }
};

struct DepGraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void dep_extend_sources(DepGraph& g, int l, const std::vector<int>& add) {
  auto& src = g.sources[l];
  std::vector<int> extra;
  for (int s : add)
    if (std::find(src.begin(), src.end(), s) == src.end() &&
        std::find(extra.begin(), extra.end(), s) == extra.end())
      extra.push_back(s);
  if (extra.empty()) return;
  size_t old_n = src.size();
  auto it = g.F.find(l);
  if (it != g.F.end()) {
    std::vector<bool> nf(size_t(1) << (old_n + extra.size()));
    for (size_t k = 0; k < nf.size(); ++k) nf[k] = it->second[k & ((size_t(1) << old_n) - 1)];
    it->second = std::move(nf);
  }
  for (int s : extra) src.push_back(s);
}

inline void dep_prune(DepGraph& g, const std::set<int>& keep_targets) {
  for (auto it = g.D.begin(); it != g.D.end();) {
    if (!keep_targets.count(*it)) {
      g.sources.erase(*it);
      g.F.erase(*it);
      it = g.D.erase(it);
    } else {
      ++it;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The interpreter
// ---------------------------------------------------------------------------

struct SimOptions {
  bool verify = false;    // check well-formedness after every statement
  bool depgraph = false;  // maintain and assert the dependency graph
  double tol = 1e-9;
};

struct SimBranch {
  Env env;
  std::vector<int> outcomes;  // measurement results in evaluation order
  double probability = 0.0;   // squared norm of the branch
  std::vector<Loc> result_locs;
  DepGraph dg;
};

class SimInterp {
 public:
  SimInterp(const Program& p, const GateTable& gates = default_gates(),
            const InjectionRegistry& inj = default_injections(), SimOptions opt = {})
      : prog_(p), gates_(gates), inj_(inj), opt_(opt) {
    auto diags = check_program(p, gates, inj);
    if (!diags.empty())
      throw SimError("program does not type-check: " + diags.front().rule + ": " +
                     diags.front().message);
  }

  // Called after each top-level statement of the entry function.
  std::function<void(size_t stmt_index, const Env&)> on_step;
  std::function<void(size_t stmt_index, const Env&, const DepGraph&)> on_step_dg;

  std::vector<SimBranch> eval_program(const std::string& entry) {
    const FnDef* f = prog_.find(entry);
    if (!f) throw SimError("entry function '" + entry + "' not found");
    if (!f->sig.params.empty())
      throw SimError("entry function must not take parameters");
    FnEnv fenv{&prog_, &gates_, &inj_, f->name};
    detail::Checker ck(fenv);
    World w;
    w.ctx = ck.fn_entry(*f);
    std::vector<World> worlds{std::move(w)};
    for (size_t i = 0; i < f->body.stmts.size(); ++i) {
      std::vector<World> next;
      for (auto& wr : worlds) {
        for (auto& r : eval_stmt(std::move(wr), f->body.stmts[i], f->name)) {
          if (on_step) on_step(i, r.env);
          if (on_step_dg) on_step_dg(i, r.env, r.dg);
          next.push_back(std::move(r));
        }
      }
      worlds = std::move(next);
    }
    std::vector<SimBranch> out;
    for (auto& wr : worlds) {
      SimBranch b;
      if (f->body.result) b.result_locs = wr.env.of(*f->body.result);
      b.probability = wr.env.q.norm2();
      b.env = std::move(wr.env);
      b.outcomes = std::move(wr.outcomes);
      b.dg = std::move(wr.dg);
      out.push_back(std::move(b));
    }
    return out;
  }

  // Spec-shaped single-statement entry point.
  std::vector<Env> eval_statement(Env env, const Stmt& s, CheckCtx ctx,
                                  const std::string& in_fn) {
    World w;
    w.env = std::move(env);
    w.ctx = std::move(ctx);
    std::vector<Env> out;
    for (auto& r : eval_stmt(std::move(w), s, in_fn)) out.push_back(std::move(r.env));
    return out;
  }

 private:
  struct World {
    Env env;
    CheckCtx ctx;
    std::vector<int> outcomes;
    int next_loc = 0;
    DepGraph dg;
  };

  Loc fresh_q(World& w) { return {true, w.next_loc++}; }
  Loc fresh_c(World& w) { return {false, w.next_loc++}; }

  CheckCtx advance(const CheckCtx& c, const Stmt& s, const std::string& fn_name) const {
    FnEnv fenv{&prog_, &gates_, &inj_, fn_name};
    return detail::Checker(fenv).stmt(s, c);
  }

  static std::vector<int> owned_quantum(const OwnershipView& v, const std::string& x) {
    std::vector<int> out;
    for (auto& [l, o] : v.owner)
      if (o == x && l.quantum) out.push_back(l.id);
    return out;
  }
  static std::vector<int> owned_classical(const OwnershipView& v, const std::string& x) {
    std::vector<int> out;
    for (auto& [l, o] : v.owner)
      if (o == x && !l.quantum) out.push_back(l.id);
    return out;
  }

  void verify_world(World& w, Span sp) {
    if (opt_.verify && !check_well_formed(w.env, w.ctx.ctx, w.ctx.A, opt_.tol))
      throw SimError("well-formedness violated at " + std::to_string(sp.line) + ":" +
                     std::to_string(sp.col));
    if (opt_.depgraph) assert_depgraph(w, sp);
  }

  std::vector<World> eval_stmt(World w, const Stmt& s, const std::string& fn_name) {
    std::vector<World> out;
    switch (s.kind) {
      case Stmt::Noop:
      case Stmt::NewLft:
      case Stmt::LftLeq:
        w.ctx = advance(w.ctx, s, fn_name);
        out.push_back(std::move(w));
        break;

      case Stmt::EndLft:
      case Stmt::Coerce: {
        CheckCtx pre = w.ctx;
        w.ctx = advance(w.ctx, s, fn_name);
        if (opt_.depgraph) dep_shrink(w, pre);
        out.push_back(std::move(w));
        break;
      }

      case Stmt::Freeze: {
        w.ctx = advance(w.ctx, s, fn_name);
        w.env.loc[s.var] = w.env.of(s.var2);
        out.push_back(std::move(w));
        break;
      }

      case Stmt::LetPair: {
        const std::string& x = s.expr.args[0];
        const CtxEntry* e = w.ctx.ctx.find(x);
        std::vector<bool> shape;
        layout_of(e->ty->fst, shape);
        auto locs = w.env.of(x);
        w.ctx = advance(w.ctx, s, fn_name);
        w.env.loc.erase(x);
        w.env.loc[s.var] = {locs.begin(), locs.begin() + shape.size()};
        w.env.loc[s.var2] = {locs.begin() + shape.size(), locs.end()};
        out.push_back(std::move(w));
        break;
      }

      case Stmt::Drop: {
        OwnershipView v = ownership(w.env, w.ctx.ctx, w.ctx.A);
        auto lq = owned_quantum(v, s.var);
        auto lc = owned_classical(v, s.var);
        w.ctx = advance(w.ctx, s, fn_name);
        if (!lq.empty()) w.env.q = w.env.q.drop_sum(lq);
        for (int c : lc) w.env.cstore.erase(c);
        w.env.loc.erase(s.var);
        if (opt_.depgraph) {
          for (int l : lq) {
            w.dg.D.erase(l);
            w.dg.sources.erase(l);
            w.dg.F.erase(l);
          }
        }
        out.push_back(std::move(w));
        break;
      }

      case Stmt::LetExpr: {
        out = eval_expr(std::move(w), s, fn_name);
        break;
      }
    }
    for (auto& r : out) verify_world(r, s.span);
    return out;
  }

  std::vector<World> eval_expr(World w, const Stmt& s, const std::string& fn_name) {
    const Expr& e = s.expr;
    const std::string& y = s.var;
    std::vector<World> out;
    switch (e.kind) {
      case Expr::Var: {
        auto locs = w.env.of(e.args[0]);
        w.ctx = advance(w.ctx, s, fn_name);
        w.env.loc.erase(e.args[0]);
        w.env.loc[y] = locs;
        out.push_back(std::move(w));
        break;
      }
      case Expr::BoolLit: {
        w.ctx = advance(w.ctx, s, fn_name);
        Loc c = fresh_c(w);
        w.env.cstore[c.id] = e.bval;
        w.env.loc[y] = {c};
        out.push_back(std::move(w));
        break;
      }
      case Expr::UnitLit: {
        w.ctx = advance(w.ctx, s, fn_name);
        w.env.loc[y] = {};
        out.push_back(std::move(w));
        break;
      }
      case Expr::Tuple: {
        std::vector<Loc> locs;
        for (auto& x : e.args) {
          auto lx = w.env.of(x);
          locs.insert(locs.end(), lx.begin(), lx.end());
        }
        w.ctx = advance(w.ctx, s, fn_name);
        for (auto& x : e.args) w.env.loc.erase(x);
        w.env.loc[y] = locs;
        out.push_back(std::move(w));
        break;
      }
      case Expr::Copy: {
        OwnershipView v = ownership(w.env, w.ctx.ctx, w.ctx.A);
        auto owned_c = owned_classical(v, e.args[0]);
        w.ctx = advance(w.ctx, s, fn_name);
        std::vector<Loc> locs = w.env.of(e.args[0]);
        std::map<int, int> remap;
        for (int c : owned_c) {
          Loc fresh = fresh_c(w);
          remap[c] = fresh.id;
          w.env.cstore[fresh.id] = w.env.cstore.at(c);
        }
        for (auto& l : locs)
          if (!l.quantum && remap.count(l.id)) l.id = remap[l.id];
        w.env.loc[y] = locs;
        out.push_back(std::move(w));
        break;
      }
      case Expr::Meas: {
        auto locs = w.env.of(e.args[0]);
        w.ctx = advance(w.ctx, s, fn_name);
        w.env.loc.erase(e.args[0]);
        auto branches = w.env.q.measure(locs[0].id);
        for (auto& [bit, st] : branches) {
          World b = w;
          b.env.q = st;
          Loc c = fresh_c(b);
          b.env.cstore[c.id] = bit == 1;
          b.env.loc[y] = {c};
          b.outcomes.push_back(bit);
          if (opt_.depgraph) {
            b.dg.D.erase(locs[0].id);
            b.dg.sources.erase(locs[0].id);
            b.dg.F.erase(locs[0].id);
          }
          out.push_back(std::move(b));
        }
        break;
      }
      case Expr::Unitary: {
        std::vector<int> targets;
        std::vector<Loc> locs;
        for (auto& x : e.args) {
          for (auto& l : w.env.of(x)) {
            targets.push_back(l.id);
            locs.push_back(l);
          }
        }
        w.ctx = advance(w.ctx, s, fn_name);
        const GateMatrix m =
            e.gate == "phase" ? GateTable::phase(e.angle) : gates_.get(e.gate);
        w.env.q = w.env.q.apply_unitary(m, targets);
        for (auto& x : e.args) w.env.loc.erase(x);
        w.env.loc[y] = locs;
        out.push_back(std::move(w));
        break;
      }
      case Expr::Lifted: {
        const InjectionTable& tab = inj_.get(e.table);
        std::vector<int> in_labels;
        std::vector<Loc> locs;
        for (auto& x : e.args) {
          for (auto& l : w.env.of(x)) {
            in_labels.push_back(l.id);
            locs.push_back(l);
          }
        }
        CheckCtx pre = w.ctx;
        w.ctx = advance(w.ctx, s, fn_name);
        std::vector<int> fresh;
        for (int i = 0; i < tab.m - tab.n; ++i) {
          Loc l = fresh_q(w);
          fresh.push_back(l.id);
          locs.push_back(l);
        }
        w.env.q = w.env.q.apply_lifted(tab.map, tab.n, tab.m, in_labels, fresh);
        for (auto& x : e.args) w.env.loc.erase(x);
        w.env.loc[y] = locs;
        if (opt_.depgraph) dep_lifted(w, tab, in_labels, locs, y);
        out.push_back(std::move(w));
        break;
      }
      case Expr::Call: {
        out = eval_call(std::move(w), s, fn_name);
        break;
      }
      case Expr::If: {
        auto cond = w.env.of(e.args[0]);
        bool b = w.env.cstore.at(cond[0].id);
        const Block& blk = b ? *e.then_blk : *e.else_blk;
        CheckCtx post = advance(w.ctx, s, fn_name);
        for (auto& r : eval_block_worlds(std::move(w), blk, fn_name, y)) {
          r.ctx = post;
          out.push_back(std::move(r));
        }
        break;
      }
      case Expr::Qif: {
        out.push_back(eval_qif(std::move(w), s, fn_name));
        break;
      }
    }
    return out;
  }

  // Evaluates the statements of a block and binds its result to `bind`.
  std::vector<World> eval_block_worlds(World w, const Block& blk, const std::string& fn_name,
                                       const std::string& bind) {
    std::vector<World> worlds;
    worlds.push_back(std::move(w));
    for (auto& s : blk.stmts) {
      std::vector<World> next;
      for (auto& wr : worlds)
        for (auto& r : eval_stmt(std::move(wr), s, fn_name)) next.push_back(std::move(r));
      worlds = std::move(next);
    }
    for (auto& wr : worlds) {
      if (blk.result) {
        wr.env.loc[bind] = wr.env.of(*blk.result);
        wr.env.loc.erase(*blk.result);
      } else {
        wr.env.loc[bind] = {};
      }
    }
    return worlds;
  }

  std::vector<World> eval_call(World w, const Stmt& s, const std::string& fn_name) {
    const Expr& e = s.expr;
    const FnDef* callee = prog_.find(e.fn);
    CheckCtx caller_post = advance(w.ctx, s, fn_name);
    // rename arguments into the callee frame
    for (size_t i = 0; i < e.args.size(); ++i) {
      w.env.loc[callee->sig.params[i].name] = w.env.of(e.args[i]);
      w.env.loc.erase(e.args[i]);
    }
    FnEnv fenv{&prog_, &gates_, &inj_, callee->name};
    CheckCtx entry = detail::Checker(fenv).fn_entry(*callee);
    // Liveness of the actual lifetime arguments carries into the callee view,
    // so ownership classification matches the running instantiation.
    for (size_t i = 0; i < callee->sig.lft_params.size(); ++i)
      if (w.ctx.A.live(e.lft_args[i])) entry.A.mark_nonempty(callee->sig.lft_params[i]);
    w.ctx = std::move(entry);
    std::vector<World> rets = eval_block_worlds(std::move(w), callee->body, callee->name,
                                                s.var);
    for (auto& r : rets) r.ctx = caller_post;
    return rets;
  }

  World eval_qif(World w, const Stmt& s, const std::string& fn_name) {
    const Expr& e = s.expr;
    const std::string& y = s.var;
    Loc lx = w.env.of(e.args[0])[0];

    CheckCtx post = advance(w.ctx, s, fn_name);

    auto project = [&](const QState& q, int bit) {
      GateMatrix p{1, {bit == 0 ? cplx(1) : cplx(0), 0, 0, bit == 1 ? cplx(1) : cplx(0)}};
      // zero out the other component without removing the qubit
      QState r = q;
      auto branches = q.measure(lx.id);
      // rebuild: measured branch re-adjoined at the same label, bit value kept
      (void)r;
      QState kept = branches[bit].second.adjoin_zero(lx.id);
      if (bit == 1) kept = kept.apply_single_target(lx.id, {});
      return kept;
    };

    // else branch on the |0> component, then branch on the |1> component
    World w0 = w;
    w0.env.q = project(w.env.q, 0);
    std::vector<World> r0 =
        eval_block_worlds(std::move(w0), *e.else_blk, fn_name, "%qif0");
    if (r0.size() != 1) throw SimError("qif branch produced a measurement branch");
    World b0 = std::move(r0[0]);

    World w1 = w;
    w1.env.q = project(w.env.q, 1);
    w1.next_loc = b0.next_loc;  // keep fresh locations disjoint
    std::vector<World> r1 =
        eval_block_worlds(std::move(w1), *e.then_blk, fn_name, "%qif1");
    if (r1.size() != 1) throw SimError("qif branch produced a measurement branch");
    World b1 = std::move(r1[0]);

    // classical stores must agree and may only have shrunk
    if (!(b0.env.cstore == b1.env.cstore))
      throw SimError("qif branches disagree on the classical store");
    for (auto& [c, bit] : b0.env.cstore) {
      auto it = w.env.cstore.find(c);
      if (it == w.env.cstore.end() || it->second != bit)
        throw SimError("qif branch altered a frozen classical location");
    }

    // fresh result locations, in the else-branch's location order
    std::vector<Loc> l0 = b0.env.of("%qif0");
    std::vector<Loc> l1 = b1.env.of("%qif1");
    if (l0.size() != l1.size()) throw SimError("qif branch results differ in layout");
    World merged = std::move(b0);
    merged.next_loc = std::max(merged.next_loc, b1.next_loc);
    std::vector<Loc> L;
    std::map<int, int> m0, m1;
    for (size_t i = 0; i < l0.size(); ++i) {
      if (!l0[i].quantum || !l1[i].quantum)
        throw SimError("qif result must be purely quantum");
      Loc f = fresh_q(merged);
      L.push_back(f);
      m0[l0[i].id] = f.id;
      m1[l1[i].id] = f.id;
    }
    QState q0 = merged.env.q;
    QState q1 = b1.env.q;
    for (auto& [a, b] : m0) q0.rename_label(a, b);
    for (auto& [a, b] : m1) q1.rename_label(a, b);

    // Lemma 4.1: the two post-maps agree once the branch results are renamed
    {
      auto norm_map = [&](const Env& env, const std::string& tmp,
                          const std::map<int, int>& m) {
        std::map<std::string, std::vector<Loc>> r = env.loc;
        r.erase(tmp);
        for (auto& [k, locs] : r)
          for (auto& l : locs)
            if (l.quantum && m.count(l.id)) l.id = m.at(l.id);
        return r;
      };
      if (norm_map(merged.env, "%qif0", m0) != norm_map(b1.env, "%qif1", m1))
        throw SimError("qif branch location maps disagree (Lemma 4.1)");
    }

    // sum the branch states
    {
      std::vector<int> order = q0.labels();
      for (int l : order)
        if (!q1.has_label(l)) throw SimError("qif branch label sets disagree");
      if (q1.labels().size() != order.size())
        throw SimError("qif branch label sets disagree");
      QState q1o = q1.with_label_order(order);
      std::vector<cplx> a = q0.amplitudes();
      const std::vector<cplx>& b = q1o.amplitudes();
      for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
      merged.env.q = QState::from_raw(order, std::move(a));
    }
    merged.env.loc.erase("%qif0");
    merged.env.loc[y] = L;
    merged.ctx = post;

    if (opt_.depgraph) dep_qif(merged, b1, lx.id, m0, m1, L);
    return merged;
  }

  // --- dependency graph updates ------------------------------------------

  void dep_shrink(World& w, const CheckCtx& /*pre*/) {
    OwnershipView v = ownership(w.env, w.ctx.ctx, w.ctx.A);
    std::set<int> keep;
    for (int l : w.dg.D) {
      auto it = v.cls.find({true, l});
      if (it != v.cls.end() &&
          (it->second == LocClass::Affine || it->second == LocClass::Frozen))
        keep.insert(l);
    }
    detail::dep_prune(w.dg, keep);
  }

  // Rule for let y = [c](x): every source of every input becomes a source of
  // every output, and the output functions are c composed with the inputs'.
  void dep_lifted(World& w, const InjectionTable& tab, const std::vector<int>& in_labels,
                  const std::vector<Loc>& out_locs, const std::string&) {
    OwnershipView v = ownership(w.env, w.ctx.ctx, w.ctx.A);
    bool affine = true;
    for (auto& l : out_locs)
      if (v.cls.at(l) != LocClass::Affine) affine = false;
    if (!affine) {
      for (int l : in_labels) {
        w.dg.D.erase(l);
        w.dg.sources.erase(l);
        w.dg.F.erase(l);
      }
      return;
    }
    // union of the input sources, preserving first-seen order
    std::vector<int> srcs;
    std::vector<std::vector<int>> in_srcs;
    std::vector<std::vector<bool>> in_tabs;
    for (int l : in_labels) {
      if (!w.dg.D.count(l))
        throw DepGraphError("lifted input location " + std::to_string(l) +
                            " is affine but untracked");
      in_srcs.push_back(w.dg.sources.count(l) ? w.dg.sources[l] : std::vector<int>{});
      in_tabs.push_back(w.dg.F.count(l) ? w.dg.F[l] : std::vector<bool>{});
      for (int s : in_srcs.back())
        if (std::find(srcs.begin(), srcs.end(), s) == srcs.end()) srcs.push_back(s);
    }
    size_t k = srcs.size();
    std::vector<std::vector<bool>> in_values(in_labels.size());
    for (size_t i = 0; i < in_labels.size(); ++i) {
      in_values[i].resize(size_t(1) << k);
      for (size_t a = 0; a < (size_t(1) << k); ++a) {
        size_t sub = 0;
        for (size_t j = 0; j < in_srcs[i].size(); ++j) {
          size_t pos = size_t(std::find(srcs.begin(), srcs.end(), in_srcs[i][j]) -
                              srcs.begin());
          if (a & (size_t(1) << pos)) sub |= size_t(1) << j;
        }
        in_values[i][a] = in_tabs[i].empty() ? false : in_tabs[i][sub];
      }
    }
    for (int l : in_labels) {
      w.dg.D.erase(l);
      w.dg.sources.erase(l);
      w.dg.F.erase(l);
    }
    for (size_t j = 0; j < out_locs.size(); ++j) {
      int l = out_locs[j].id;
      w.dg.D.insert(l);
      w.dg.sources[l] = srcs;
      std::vector<bool> ft(size_t(1) << k);
      for (size_t a = 0; a < ft.size(); ++a) {
        uint32_t x = 0;
        for (size_t i = 0; i < in_labels.size(); ++i)
          if (in_values[i][a]) x |= 1u << i;
        ft[a] = (tab.apply(x) >> j) & 1;
      }
      w.dg.F[l] = std::move(ft);
    }
  }

  // Rule for qif: compose the branch graphs under the result renaming, add
  // edges from the control location to the fresh results, and select the
  // branch function by the control bit.
  void dep_qif(World& merged, const World& b1, int lx, const std::map<int, int>& m0,
               const std::map<int, int>& m1, const std::vector<Loc>& L) {
    auto rename = [](DepGraph g, const std::map<int, int>& m) {
      DepGraph r;
      auto map_id = [&](int l) {
        auto it = m.find(l);
        return it == m.end() ? l : it->second;
      };
      for (int l : g.D) r.D.insert(map_id(l));
      for (auto& [l, ss] : g.sources) {
        std::vector<int> ns;
        for (int s : ss) ns.push_back(map_id(s));
        r.sources[map_id(l)] = ns;
      }
      for (auto& [l, f] : g.F) r.F[map_id(l)] = f;
      return r;
    };
    DepGraph g0 = rename(merged.dg, m0);  // merged currently holds branch 0
    DepGraph g1 = rename(b1.dg, m1);
    if (g0.D != g1.D) throw DepGraphError("qif branch dependency sets disagree");
    std::set<int> Lset;
    for (auto& l : L) Lset.insert(l.id);
    DepGraph out;
    out.D = g0.D;
    for (int l : out.D) {
      if (!Lset.count(l)) {
        // untouched by both branches: sources and functions must agree
        auto s0 = g0.sources.count(l) ? g0.sources[l] : std::vector<int>{};
        auto s1 = g1.sources.count(l) ? g1.sources[l] : std::vector<int>{};
        if (s0 != s1 || g0.F[l] != g1.F[l])
          throw DepGraphError("qif branches disagree off the result locations");
        out.sources[l] = s0;
        out.F[l] = g0.F[l];
        continue;
      }
      // fresh result: control first, then the union of branch sources
      std::vector<int> srcs{lx};
      auto s0 = g0.sources.count(l) ? g0.sources[l] : std::vector<int>{};
      auto s1 = g1.sources.count(l) ? g1.sources[l] : std::vector<int>{};
      for (int s : s0)
        if (std::find(srcs.begin(), srcs.end(), s) == srcs.end()) srcs.push_back(s);
      for (int s : s1)
        if (std::find(srcs.begin(), srcs.end(), s) == srcs.end()) srcs.push_back(s);
      size_t k = srcs.size();
      std::vector<bool> ft(size_t(1) << k);
      auto eval_branch = [&](const DepGraph& g, const std::vector<int>& ss, size_t a) {
        if (!g.F.count(l)) return false;
        size_t sub = 0;
        for (size_t j = 0; j < ss.size(); ++j) {
          size_t pos = size_t(std::find(srcs.begin(), srcs.end(), ss[j]) - srcs.begin());
          if (a & (size_t(1) << pos)) sub |= size_t(1) << j;
        }
        return bool(g.F.at(l)[sub]);
      };
      for (size_t a = 0; a < ft.size(); ++a) {
        bool xbit = a & 1;  // control is srcs[0]
        ft[a] = xbit ? eval_branch(g1, s1, a) : eval_branch(g0, s0, a);
      }
      out.sources[l] = srcs;
      out.F[l] = std::move(ft);
    }
    merged.dg = std::move(out);
  }

  // Def. C.2 well-formedness, checked against the live state.
  void assert_depgraph(World& w, Span sp) {
    auto where = [&] { return " at " + std::to_string(sp.line) + ":" + std::to_string(sp.col); };
    OwnershipView v = ownership(w.env, w.ctx.ctx, w.ctx.A);
    // D covers the affine locations and contains only affine or frozen ones
    for (int l : w.env.q.labels()) {
      LocClass c = v.cls.at({true, l});
      if (c == LocClass::Affine && !w.dg.D.count(l))
        throw DepGraphError("affine location " + std::to_string(l) + " untracked" + where());
    }
    for (int l : w.dg.D) {
      if (!w.env.q.has_label(l))
        throw DepGraphError("tracked location " + std::to_string(l) + " not in memory" +
                            where());
      LocClass c = v.cls.at({true, l});
      if (c == LocClass::Linear)
        throw DepGraphError("tracked location " + std::to_string(l) + " is linear" + where());
    }
    // acyclicity and frozen sources
    {
      std::map<int, int> state;  // 0 new, 1 visiting, 2 done
      std::function<void(int)> dfs = [&](int l) {
        state[l] = 1;
        auto it = w.dg.sources.find(l);
        if (it != w.dg.sources.end()) {
          for (int s : it->second) {
            if (state[s] == 1) throw DepGraphError("dependency graph has a cycle" + where());
            if (state[s] == 0) dfs(s);
          }
        }
        state[l] = 2;
      };
      for (int l : w.dg.D)
        if (state[l] == 0) dfs(l);
    }
    for (int l : w.dg.D) {
      auto it = w.dg.sources.find(l);
      if (it == w.dg.sources.end()) continue;
      for (int s : it->second) {
        if (!w.env.q.has_label(s))
          throw DepGraphError("source location " + std::to_string(s) + " not in memory" +
                              where());
        if (v.cls.at({true, s}) != LocClass::Frozen)
          throw DepGraphError("edge source " + std::to_string(s) + " is not frozen" + where());
      }
    }
    // the state has the form sum_i |i>|F(l)(i)>|phi_i>
    const auto& labels = w.env.q.labels();
    const auto& amps = w.env.q.amplitudes();
    size_t n = labels.size();
    auto bit_of = [&](size_t idx, int label) {
      size_t pos = 0;
      while (labels[pos] != label) ++pos;
      return (idx >> (n - 1 - pos)) & size_t(1);
    };
    for (int l : w.dg.D) {
      const auto& ss = w.dg.sources.count(l) ? w.dg.sources.at(l) : std::vector<int>{};
      const auto& ft = w.dg.F.at(l);
      for (size_t idx = 0; idx < amps.size(); ++idx) {
        if (std::abs(amps[idx]) <= opt_.tol) continue;
        size_t key = 0;
        for (size_t j = 0; j < ss.size(); ++j) key |= bit_of(idx, ss[j]) << j;
        if (bool(bit_of(idx, l)) != bool(ft[key]))
          throw DepGraphError("location " + std::to_string(l) +
                              " does not follow its dependency function" + where());
      }
    }
  }

  const Program& prog_;
  const GateTable& gates_;
  const InjectionRegistry& inj_;
  SimOptions opt_;
};

// Spec-shaped wrappers.
inline std::vector<SimBranch> eval_program(const Program& p, const std::string& entry,
                                           SimOptions opt = {}) {
  SimInterp in(p, default_gates(), default_injections(), opt);
  return in.eval_program(entry);
}

inline std::vector<SimBranch> eval_with_depgraph(const Program& p, const std::string& entry) {
  SimOptions opt;
  opt.verify = true;
  opt.depgraph = true;
  return eval_program(p, entry, opt);
}

}  // namespace qurts
