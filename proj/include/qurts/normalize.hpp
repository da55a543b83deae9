#pragma once

#include <deque>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "qurts/ast.hpp"
#include "qurts/simsem.hpp"
#include "qurts/typecheck.hpp"

namespace qurts {

struct NormalizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Symbolic location interpreter used by the qif-location normalisation pass.
// Mirrors the uncomputation backend's allocator: fresh quantum locations come
// from a per-frame free list (fed by drops) before the counter, so sibling
// branches starting from the same snapshot allocate identically.
class LocSim {
 public:
  LocSim(Program& prog, const GateTable& gates, const InjectionRegistry& inj)
      : prog_(prog), gates_(gates), inj_(inj) {
    collect_names();
  }

  void run(const std::string& entry) {
    FnDef* f = nullptr;
    for (auto& fn : prog_.fns)
      if (fn.name == entry) f = &fn;
    if (!f) throw NormalizeError("entry '" + entry + "' not found");
    Frame fr;
    FnEnv env{&prog_, &gates_, &inj_, f->name};
    fr.ctx = Checker(env).fn_entry(*f);
    for (auto& p : f->sig.params) bind_layout(fr, p.name, p.ty);
    exec_block(fr, f->body, f->name);
  }

  int renames = 0;

 private:
  struct Frame {
    CheckCtx ctx;
    std::map<std::string, std::vector<Loc>> loc;
    std::deque<int> freelist;
    int cursor = 0;
  };

  void bind_layout(Frame& fr, const std::string& name, const TyPtr& t) {
    std::vector<bool> shape;
    layout_of(t, shape);
    std::vector<Loc> locs;
    for (bool q : shape) locs.push_back(q ? fresh_q(fr) : fresh_c(fr));
    fr.loc[name] = locs;
  }

  Loc fresh_q(Frame& fr) {
    if (!fr.freelist.empty()) {
      int id = fr.freelist.front();
      fr.freelist.pop_front();
      return {true, id};
    }
    return {true, fr.cursor++};
  }
  Loc fresh_c(Frame& fr) { return {false, fr.cursor++}; }

  CheckCtx advance(Frame& fr, const Stmt& s, const std::string& fn) {
    FnEnv env{&prog_, &gates_, &inj_, fn};
    return Checker(env).stmt(s, fr.ctx);
  }

  std::vector<Loc> of(Frame& fr, const std::string& x) {
    auto it = fr.loc.find(x);
    return it == fr.loc.end() ? std::vector<Loc>{} : it->second;
  }

  // Executes a block's statements; the result stays bound to its variable.
  void exec_block(Frame& fr, Block& b, const std::string& fn) {
    for (auto& s : b.stmts) exec_stmt(fr, s, fn);
  }

  void exec_stmt(Frame& fr, Stmt& s, const std::string& fn) {
    switch (s.kind) {
      case Stmt::Noop:
      case Stmt::NewLft:
      case Stmt::LftLeq:
      case Stmt::EndLft:
      case Stmt::Coerce: fr.ctx = advance(fr, s, fn); return;
      case Stmt::Freeze:
        fr.ctx = advance(fr, s, fn);
        fr.loc[s.var] = of(fr, s.var2);
        return;
      case Stmt::LetPair: {
        const CtxEntry* e = fr.ctx.ctx.find(s.expr.args[0]);
        std::vector<bool> shape;
        layout_of(e->ty->fst, shape);
        auto locs = of(fr, s.expr.args[0]);
        fr.ctx = advance(fr, s, fn);
        fr.loc.erase(s.expr.args[0]);
        fr.loc[s.var] = {locs.begin(), locs.begin() + long(shape.size())};
        fr.loc[s.var2] = {locs.begin() + long(shape.size()), locs.end()};
        return;
      }
      case Stmt::Drop: {
        OwnershipView v = ownership_of(fr);
        std::vector<int> freed;
        for (auto& [l, o] : v.owner)
          if (o == s.var && l.quantum) freed.push_back(l.id);
        fr.ctx = advance(fr, s, fn);
        fr.loc.erase(s.var);
        std::sort(freed.begin(), freed.end());
        for (int id : freed) fr.freelist.push_back(id);
        return;
      }
      case Stmt::LetExpr: exec_expr(fr, s, fn); return;
    }
  }

  OwnershipView ownership_of(Frame& fr) {
    Env env;
    env.loc = fr.loc;
    return ownership(env, fr.ctx.ctx, fr.ctx.A);
  }

  void exec_expr(Frame& fr, Stmt& s, const std::string& fn) {
    Expr& e = s.expr;
    const std::string& y = s.var;
    switch (e.kind) {
      case Expr::Var: {
        auto locs = of(fr, e.args[0]);
        fr.ctx = advance(fr, s, fn);
        fr.loc.erase(e.args[0]);
        fr.loc[y] = locs;
        return;
      }
      case Expr::BoolLit: {
        fr.ctx = advance(fr, s, fn);
        fr.loc[y] = {fresh_c(fr)};
        return;
      }
      case Expr::UnitLit:
        fr.ctx = advance(fr, s, fn);
        fr.loc[y] = {};
        return;
      case Expr::Tuple: {
        std::vector<Loc> locs;
        for (auto& x : e.args) {
          auto lx = of(fr, x);
          locs.insert(locs.end(), lx.begin(), lx.end());
        }
        fr.ctx = advance(fr, s, fn);
        for (auto& x : e.args) fr.loc.erase(x);
        fr.loc[y] = locs;
        return;
      }
      case Expr::Copy: {
        OwnershipView v = ownership_of(fr);
        auto locs = of(fr, e.args[0]);
        fr.ctx = advance(fr, s, fn);
        for (auto& l : locs)
          if (!l.quantum && v.owner.count(l) && v.owner.at(l) == e.args[0]) l = fresh_c(fr);
        fr.loc[y] = locs;
        return;
      }
      case Expr::Meas: {
        fr.ctx = advance(fr, s, fn);
        fr.loc.erase(e.args[0]);
        fr.loc[y] = {fresh_c(fr)};
        return;
      }
      case Expr::Unitary: {
        std::vector<Loc> locs;
        for (auto& x : e.args) {
          auto lx = of(fr, x);
          locs.insert(locs.end(), lx.begin(), lx.end());
        }
        fr.ctx = advance(fr, s, fn);
        for (auto& x : e.args) fr.loc.erase(x);
        fr.loc[y] = locs;
        return;
      }
      case Expr::Lifted: {
        const InjectionTable& tab = inj_.get(e.table);
        std::vector<Loc> locs;
        for (auto& x : e.args) {
          auto lx = of(fr, x);
          locs.insert(locs.end(), lx.begin(), lx.end());
        }
        fr.ctx = advance(fr, s, fn);
        for (auto& x : e.args) fr.loc.erase(x);
        for (int i = 0; i < tab.m - tab.n; ++i) locs.push_back(fresh_q(fr));
        fr.loc[y] = locs;
        return;
      }
      case Expr::Call: {
        FnDef* callee = nullptr;
        for (auto& fdef : prog_.fns)
          if (fdef.name == e.fn) callee = &fdef;
        CheckCtx post = advance(fr, s, fn);
        Frame sub;
        FnEnv env{&prog_, &gates_, &inj_, callee->name};
        sub.ctx = Checker(env).fn_entry(*callee);
        sub.freelist = fr.freelist;
        sub.cursor = fr.cursor;
        for (size_t i = 0; i < e.args.size(); ++i)
          sub.loc[callee->sig.params[i].name] = of(fr, e.args[i]);
        for (auto& [k, v] : fr.loc) sub.loc.emplace(k, v);
        exec_block(sub, callee->body, callee->name);
        for (auto& x : e.args) sub.loc.erase(x);
        fr.loc = sub.loc;
        if (callee->body.result) {
          fr.loc[y] = of(sub, *callee->body.result);
          fr.loc.erase(*callee->body.result);
        } else {
          fr.loc[y] = {};
        }
        fr.freelist = sub.freelist;
        fr.cursor = sub.cursor;
        fr.ctx = post;
        return;
      }
      case Expr::If:
      case Expr::Qif: {
        CheckCtx post = advance(fr, s, fn);
        Frame f1 = fr;
        exec_block(f1, *e.then_blk, fn);
        Frame f0 = fr;
        exec_block(f0, *e.else_blk, fn);
        std::vector<Loc> l1 = block_result(f1, *e.then_blk);
        std::vector<Loc> l0 = block_result(f0, *e.else_blk);
        if (e.kind == Expr::Qif && l1 != l0) {
          fix_else_branch(fr, e, f0, l0, l1, fn);
          // re-run the repaired else branch to confirm alignment
          Frame f0b = fr;
          exec_block(f0b, *e.else_blk, fn);
          if (block_result(f0b, *e.else_blk) != l1)
            throw NormalizeError("qif branch locations still disagree after swap insertion");
          f0 = std::move(f0b);
          l0 = l1;
        }
        // join the frames: the then branch's bindings, a shared cursor, and
        // the free list entries both branches agree on
        Frame joined = std::move(f1);
        joined.cursor = std::max(joined.cursor, f0.cursor);
        std::deque<int> fl;
        for (int id : joined.freelist)
          if (std::find(f0.freelist.begin(), f0.freelist.end(), id) != f0.freelist.end())
            fl.push_back(id);
        joined.freelist = std::move(fl);
        if (e.then_blk->result) joined.loc.erase(*e.then_blk->result);
        joined.loc[y] = l1;
        joined.ctx = post;
        fr = std::move(joined);
        return;
      }
    }
  }

  std::vector<Loc> block_result(Frame& fr, const Block& b) {
    if (!b.result) return {};
    return of(fr, *b.result);
  }

  // Rewrites the else branch so its result occupies the then branch's
  // locations: the result is flattened into single-qubit components (which
  // must share one uniform owning binder), swapped pairwise into place, and
  // re-tupled.
  void fix_else_branch(Frame& fr, Expr& e, Frame& f0, const std::vector<Loc>& l0,
                       const std::vector<Loc>& l1, const std::string&) {
    Block& blk = *e.else_blk;
    if (!blk.result) throw NormalizeError("cannot align a unit-result qif branch");
    std::string res = *blk.result;
    const CtxEntry* re = f0.ctx.ctx.find(res);
    if (!re) throw NormalizeError("else-branch result not found");
    TyPtr t = re->ty;
    {
      std::multiset<int> a, b;
      for (auto& l : l0) {
        if (!l.quantum) throw NormalizeError("cannot align classical result locations");
        a.insert(l.id);
      }
      for (auto& l : l1) b.insert(l.id);
      if (a != b)
        throw NormalizeError("qif branch locations differ by more than a permutation");
    }
    int k = int(l0.size());
    if (k < 2 || k != bare_qbit_leaves(t))
      throw NormalizeError("qif result shape unsupported for swap insertion");
    Lifetime bind = uniform_binder(t);

    auto mk = [&](Stmt::Kind kind) {
      Stmt st;
      st.kind = kind;
      st.span = blk.span;
      return st;
    };
    std::string base = fresh_base();
    std::vector<Stmt> added;

    // flatten: coerce to a right-nested pair of single-binder qubits, project
    {
      Stmt c = mk(Stmt::Coerce);
      c.var = res;
      c.ty = flat_ty(bind, k);
      added.push_back(std::move(c));
    }
    std::vector<std::string> comps;
    std::string cur = res;
    for (int i = 0; i < k - 1; ++i) {
      Stmt pr = mk(Stmt::LetPair);
      pr.var = base + "c" + std::to_string(i);
      pr.var2 = base + "r" + std::to_string(i);
      pr.expr.kind = Expr::Var;
      pr.expr.args = {cur};
      comps.push_back(pr.var);
      cur = pr.var2;
      added.push_back(std::move(pr));
    }
    comps.push_back(cur);

    // selection sort with [swap] insertions
    std::vector<int> where;
    where.resize(size_t(k));
    for (int i = 0; i < k; ++i) where[size_t(i)] = l0[size_t(i)].id;
    int tmpn = 0;
    for (int i = 0; i < k; ++i) {
      if (where[size_t(i)] == l1[size_t(i)].id) continue;
      int j = i + 1;
      while (j < k && where[size_t(j)] != l1[size_t(i)].id) ++j;
      if (j >= k) throw NormalizeError("swap alignment failed");
      std::string sname = base + "s" + std::to_string(tmpn);
      Stmt sw = mk(Stmt::LetExpr);
      sw.var = sname;
      sw.expr.kind = Expr::Lifted;
      sw.expr.table = "swap";
      sw.expr.args = {comps[size_t(i)], comps[size_t(j)]};
      added.push_back(std::move(sw));
      Stmt co = mk(Stmt::Coerce);
      co.var = sname;
      co.ty = Ty::pair(Ty::own(bind, Ty::qbit()), Ty::own(bind, Ty::qbit()));
      added.push_back(std::move(co));
      Stmt pr = mk(Stmt::LetPair);
      pr.var = base + "a" + std::to_string(tmpn);
      pr.var2 = base + "b" + std::to_string(tmpn);
      pr.expr.kind = Expr::Var;
      pr.expr.args = {sname};
      // the i-th value now lives at the j-th slot's location and vice versa
      comps[size_t(i)] = pr.var2;
      comps[size_t(j)] = pr.var;
      added.push_back(std::move(pr));
      std::swap(where[size_t(i)], where[size_t(j)]);
      ++tmpn;
    }

    // rebuild the result tuple and restore the declared type
    Stmt tup = mk(Stmt::LetExpr);
    tup.var = base + "t";
    tup.expr.kind = Expr::Tuple;
    tup.expr.args = comps;
    std::string out = tup.var;
    added.push_back(std::move(tup));
    Stmt co = mk(Stmt::Coerce);
    co.var = out;
    co.ty = t;
    added.push_back(std::move(co));
    for (auto& st : added) blk.stmts.push_back(std::move(st));
    blk.result = out;
  }

  // The single owning binder shared by every qubit leaf of t, if it exists.
  Lifetime uniform_binder(const TyPtr& t) {
    std::vector<detail::Binder> st;
    std::vector<detail::NfLeaf> leaves;
    detail::nf_flatten(t, st, leaves);
    std::optional<Lifetime> bind;
    for (auto& l : leaves) {
      if (l.kind == Ty::Unit) continue;
      if (l.kind != Ty::Qbit || l.stack.size() != 1 || l.stack[0].is_ref)
        throw NormalizeError("qif result needs one uniform #-binder per qubit for swaps");
      if (bind && !(*bind == l.stack[0].lft))
        throw NormalizeError("qif result qubits carry different lifetimes");
      bind = l.stack[0].lft;
    }
    if (!bind) throw NormalizeError("qif result has no qubit components");
    return *bind;
  }

  std::string fresh_base() {
    while (true) {
      std::string cand = "qn" + std::to_string(renames++) + "_";
      bool clash = false;
      for (auto& n : used_names_)
        if (n.rfind(cand, 0) == 0) clash = true;
      if (!clash) return cand;
    }
  }

  void collect_names() {
    std::function<void(const Block&)> walk = [&](const Block& b) {
      for (auto& st : b.stmts) {
        if (!st.var.empty()) used_names_.insert(st.var);
        if (!st.var2.empty()) used_names_.insert(st.var2);
        if (st.kind == Stmt::LetExpr &&
            (st.expr.kind == Expr::If || st.expr.kind == Expr::Qif)) {
          walk(*st.expr.then_blk);
          walk(*st.expr.else_blk);
        }
      }
    };
    for (auto& f : prog_.fns) {
      for (auto& p : f.sig.params) used_names_.insert(p.name);
      walk(f.body);
    }
  }

  std::set<std::string> used_names_;

  static int bare_qbit_leaves(const TyPtr& t) {
    switch (t->kind) {
      case Ty::Qbit: return 1;
      case Ty::Unit: return 0;
      case Ty::Pair: {
        int a = bare_qbit_leaves(t->fst);
        int b = bare_qbit_leaves(t->snd);
        if (a < 0 || b < 0) return -1;
        return a + b;
      }
      case Ty::Own: return bare_qbit_leaves(t->inner);
      default: return -1;
    }
  }

  static TyPtr flat_ty(const Lifetime& a, int k) {
    TyPtr t = Ty::own(a, Ty::qbit());
    for (int i = 1; i < k; ++i) t = Ty::pair(Ty::own(a, Ty::qbit()), t);
    return t;
  }

  Program& prog_;
  const GateTable& gates_;
  const InjectionRegistry& inj_;
};

}  // namespace detail

// Inserts explicit [swap] calls so both qif branch results occupy identical
// locations under the backend's allocator. Idempotent; the result
// type-checks again.
inline Program normalize_qif_locations(const Program& p, const std::string& entry = "",
                                       const GateTable& gates = default_gates(),
                                       const InjectionRegistry& inj = default_injections()) {
  {
    auto diags = check_program(p, gates, inj);
    if (!diags.empty())
      throw NormalizeError("program does not type-check: " + diags.front().message);
  }
  Program out = p.clone();
  detail::LocSim sim(out, gates, inj);
  if (!entry.empty()) {
    sim.run(entry);
  } else {
    for (auto& f : p.fns) sim.run(f.name);
  }
  auto diags = check_program(out, gates, inj);
  if (!diags.empty())
    throw NormalizeError("normalised program fails to type-check: " + diags.front().message);
  return out;
}

}  // namespace qurts
