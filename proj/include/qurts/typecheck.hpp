#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "qurts/ast.hpp"
#include "qurts/gates.hpp"
#include "qurts/synth.hpp"

namespace qurts {

// ---------------------------------------------------------------------------
// Lifetime preorders
// ---------------------------------------------------------------------------

// The set of in-scope lifetime variables with a preorder over them (plus the
// implicit bottom '0 and top 'static), the subset known to be strictly above
// '0, and the externally supplied signature lifetimes.
class LftPreorder {
 public:
  void add_var(const Lifetime& a, bool external = false) {
    vars_.insert(a.name);
    if (external) ext_.insert(a.name);
  }

  bool has_var(const std::string& n) const { return vars_.count(n) > 0; }
  bool is_external(const Lifetime& a) const { return a.is_var() && ext_.count(a.name) > 0; }

  bool in_scope(const Lifetime& a) const { return !a.is_var() || has_var(a.name); }

  // a <= b in the preorder.
  bool leq(const Lifetime& a, const Lifetime& b) const {
    if (a.is_empty() || b.is_static()) return true;
    if (a == b) return true;
    if (a.is_static() || b.is_empty()) return false;
    return rel_.count({a.name, b.name}) > 0;
  }

  void add_leq(const Lifetime& a, const Lifetime& b) {
    if (!a.is_var() || !b.is_var()) return;
    rel_.insert({a.name, b.name});
    close();
  }

  void mark_nonempty(const Lifetime& a) {
    if (a.is_var()) {
      nonempty_.insert(a.name);
      close();
    }
  }

  // Strictly above '0: alive.
  bool live(const Lifetime& a) const {
    if (a.is_static()) return true;
    if (a.is_empty()) return false;
    return has_var(a.name) && nonempty_.count(a.name) > 0;
  }

  // No other live variable lies strictly below a.
  bool minimal(const Lifetime& a) const {
    if (!a.is_var()) return false;
    for (auto& v : vars_) {
      if (v == a.name) continue;
      Lifetime b = Lifetime::var(v);
      if (leq(b, a) && !leq(a, b)) return false;
    }
    return true;
  }

  void remove_var(const Lifetime& a) {
    vars_.erase(a.name);
    nonempty_.erase(a.name);
    for (auto it = rel_.begin(); it != rel_.end();) {
      if (it->first == a.name || it->second == a.name)
        it = rel_.erase(it);
      else
        ++it;
    }
  }

  const std::set<std::string>& vars() const { return vars_; }
  const std::set<std::string>& external() const { return ext_; }

  friend bool operator==(const LftPreorder& x, const LftPreorder& y) {
    return x.vars_ == y.vars_ && x.rel_ == y.rel_ && x.nonempty_ == y.nonempty_;
  }

 private:
  void close() {
    bool changed = true;
    while (changed) {
      changed = false;
      for (auto& [a, b] : std::vector<std::pair<std::string, std::string>>(rel_.begin(),
                                                                           rel_.end())) {
        for (auto& [c, d] : std::vector<std::pair<std::string, std::string>>(rel_.begin(),
                                                                             rel_.end())) {
          if (b == c && !rel_.count({a, d})) {
            rel_.insert({a, d});
            changed = true;
          }
        }
        if (nonempty_.count(a) && !nonempty_.count(b)) {
          nonempty_.insert(b);
          changed = true;
        }
      }
    }
  }

  std::set<std::string> vars_;
  std::set<std::pair<std::string, std::string>> rel_;
  std::set<std::string> nonempty_;
  std::set<std::string> ext_;
};

// ---------------------------------------------------------------------------
// Typing contexts
// ---------------------------------------------------------------------------

struct Aliveness {
  bool active = true;
  Lifetime frozen_by;  // meaningful when !active

  static Aliveness act() { return {true, {}}; }
  static Aliveness frozen(Lifetime a) { return {false, std::move(a)}; }

  friend bool operator==(const Aliveness& x, const Aliveness& y) {
    return x.active == y.active && (x.active || x.frozen_by == y.frozen_by);
  }
};

struct CtxEntry {
  std::string name;
  TyPtr ty;
  Aliveness aliveness;
};

class TyCtx {
 public:
  const CtxEntry* find(const std::string& x) const {
    for (auto& e : entries_)
      if (e.name == x) return &e;
    return nullptr;
  }
  CtxEntry* find(const std::string& x) {
    for (auto& e : entries_)
      if (e.name == x) return &e;
    return nullptr;
  }
  void insert(std::string x, TyPtr t, Aliveness a = Aliveness::act()) {
    entries_.push_back({std::move(x), std::move(t), a});
  }
  void erase(const std::string& x) {
    entries_.erase(std::remove_if(entries_.begin(), entries_.end(),
                                  [&](const CtxEntry& e) { return e.name == x; }),
                   entries_.end());
  }
  size_t size() const { return entries_.size(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  friend bool operator==(const TyCtx& a, const TyCtx& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (size_t i = 0; i < a.entries_.size(); ++i) {
      auto& x = a.entries_[i];
      auto& y = b.entries_[i];
      if (x.name != y.name || !ty_equal(x.ty, y.ty) || !(x.aliveness == y.aliveness))
        return false;
    }
    return true;
  }

 private:
  std::vector<CtxEntry> entries_;
};

struct Diagnostic {
  std::string rule;     // violated rule name, e.g. "typ drop"
  std::string message;
  Span span;
  std::string fn;
};

struct TypeError {
  Diagnostic diag;
};

// ---------------------------------------------------------------------------
// Subtyping
// ---------------------------------------------------------------------------

namespace detail {

struct Binder {
  bool is_ref;
  Lifetime lft;
  friend bool operator==(const Binder& a, const Binder& b) {
    return a.is_ref == b.is_ref && a.lft == b.lft;
  }
  friend bool operator<(const Binder& a, const Binder& b) {
    if (a.is_ref != b.is_ref) return a.is_ref < b.is_ref;
    return a.lft < b.lft;
  }
};

struct NfLeaf {
  Ty::Kind kind;  // Bool / Qbit / Unit
  std::vector<Binder> stack;
};

// Distribute pointer binders over products and erase them over unit, yielding
// the flat leaf sequence with per-leaf binder stacks.
inline void nf_flatten(const TyPtr& t, std::vector<Binder>& stack, std::vector<NfLeaf>& out) {
  switch (t->kind) {
    case Ty::Pair:
      nf_flatten(t->fst, stack, out);
      nf_flatten(t->snd, stack, out);
      return;
    case Ty::Ref:
      stack.push_back({true, t->lft});
      nf_flatten(t->inner, stack, out);
      stack.pop_back();
      return;
    case Ty::Own:
      stack.push_back({false, t->lft});
      nf_flatten(t->inner, stack, out);
      stack.pop_back();
      return;
    case Ty::Unit:
      out.push_back({Ty::Unit, {}});
      return;
    default:
      out.push_back({t->kind, stack});
      return;
  }
}

// Can `from` be rewritten to `to` by shortening, reborrow/double-affine
// merging and the &#/#& squashes?
inline bool stack_reachable(const LftPreorder& A, const std::vector<Binder>& from,
                            const std::vector<Binder>& to) {
  if (from == to) return true;
  std::set<Lifetime> cand;
  for (auto& b : from) cand.insert(b.lft);
  for (auto& b : to) cand.insert(b.lft);
  cand.insert(Lifetime::empty());
  cand.insert(Lifetime::stat());

  std::set<std::vector<Binder>> seen{from};
  std::deque<std::vector<Binder>> work{from};
  while (!work.empty()) {
    std::vector<Binder> s = work.front();
    work.pop_front();
    auto push = [&](std::vector<Binder> nxt) -> bool {
      if (nxt == to) return true;
      if (seen.insert(nxt).second) work.push_back(std::move(nxt));
      return false;
    };
    for (size_t i = 0; i < s.size(); ++i) {
      // shorten: P^a -> P^b with b <= a
      for (auto& b : cand) {
        if (b == s[i].lft || !A.leq(b, s[i].lft)) continue;
        if (s[i].is_ref && b.is_empty()) continue;  // &'0 never appears
        auto nxt = s;
        nxt[i].lft = b;
        if (push(std::move(nxt))) return true;
      }
      if (i + 1 < s.size()) {
        if (s[i].is_ref && !s[i + 1].is_ref) {
          // & # -> &
          auto nxt = s;
          nxt.erase(nxt.begin() + i + 1);
          if (push(std::move(nxt))) return true;
        }
        if (!s[i].is_ref && s[i + 1].is_ref) {
          // # & -> &
          auto nxt = s;
          nxt.erase(nxt.begin() + i);
          if (push(std::move(nxt))) return true;
        }
        if (s[i].is_ref == s[i + 1].is_ref) {
          // reborrow / double affine: merge to a common lower bound
          for (auto& g : cand) {
            if (!A.leq(g, s[i].lft) || !A.leq(g, s[i + 1].lft)) continue;
            if (s[i].is_ref && g.is_empty()) continue;
            auto nxt = s;
            nxt[i].lft = g;
            nxt.erase(nxt.begin() + i + 1);
            if (push(std::move(nxt))) return true;
          }
        }
      }
    }
  }
  return false;
}

}  // namespace detail

// T1 <= T2 under A.
inline bool subtype(const LftPreorder& A, const TyPtr& t1, const TyPtr& t2) {
  std::vector<detail::Binder> st;
  std::vector<detail::NfLeaf> l1, l2;
  detail::nf_flatten(t1, st, l1);
  detail::nf_flatten(t2, st, l2);
  if (l1.size() != l2.size()) return false;
  for (size_t i = 0; i < l1.size(); ++i) {
    if (l1[i].kind != l2[i].kind) return false;
    if (!detail::stack_reachable(A, l1[i].stack, l2[i].stack)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Copy / Drop / Purely-Quantum
// ---------------------------------------------------------------------------

inline bool is_copy(const TyPtr& t) {
  switch (t->kind) {
    case Ty::Bool:
    case Ty::Unit: return true;
    case Ty::Ref: return true;
    case Ty::Own: return is_copy(t->inner);
    case Ty::Pair: return is_copy(t->fst) && is_copy(t->snd);
    case Ty::Qbit: return false;
  }
  return false;
}

inline bool is_drop(const LftPreorder& A, const TyPtr& t) {
  switch (t->kind) {
    case Ty::Bool:
    case Ty::Unit: return true;
    case Ty::Ref: return true;
    case Ty::Own: return A.live(t->lft);
    case Ty::Pair: return is_drop(A, t->fst) && is_drop(A, t->snd);
    case Ty::Qbit: return false;
  }
  return false;
}

inline bool is_pq(const TyPtr& t) {
  switch (t->kind) {
    case Ty::Qbit:
    case Ty::Unit: return true;  // qbit^0 = ()
    case Ty::Own: return is_pq(t->inner);
    case Ty::Pair: return is_pq(t->fst) && is_pq(t->snd);
    default: return false;
  }
}

bool is_pq(const Block& b, const Program& p);

inline bool is_pq(const Expr& e, const Program& p) {
  switch (e.kind) {
    case Expr::Meas: return false;
    case Expr::Call: {
      const FnDef* f = p.find(e.fn);
      return f && is_pq(f->body, p);
    }
    case Expr::If:
    case Expr::Qif: return is_pq(*e.then_blk, p) && is_pq(*e.else_blk, p);
    default: return true;
  }
}

inline bool is_pq(const Stmt& s, const Program& p) {
  if (s.kind == Stmt::LetExpr) return is_pq(s.expr, p);
  return true;
}

inline bool is_pq(const Block& b, const Program& p) {
  for (auto& s : b.stmts)
    if (!is_pq(s, p)) return false;
  return true;
}

inline bool is_pq(const FnDef& f, const Program& p) { return is_pq(f.body, p); }

// ---------------------------------------------------------------------------
// Statement / block / function / program checking
// ---------------------------------------------------------------------------

struct CheckCtx {
  TyCtx ctx;
  LftPreorder A;
};

// Names a function environment for checking: the program, gate metadata and
// the current function (for definition-before-use of callees).
struct FnEnv {
  const Program* prog = nullptr;
  const GateTable* gates = nullptr;
  const InjectionRegistry* inj = nullptr;
  std::string current_fn;
};

namespace detail {

[[noreturn]] inline void bail(const std::string& rule, const std::string& msg, Span sp,
                              const std::string& fn) {
  throw TypeError{{rule, msg, sp, fn}};
}

inline void collect_ref_lifetimes(const TyPtr& t, std::vector<Lifetime>& out) {
  switch (t->kind) {
    case Ty::Pair:
      collect_ref_lifetimes(t->fst, out);
      collect_ref_lifetimes(t->snd, out);
      return;
    case Ty::Ref:
      out.push_back(t->lft);
      collect_ref_lifetimes(t->inner, out);
      return;
    case Ty::Own: collect_ref_lifetimes(t->inner, out); return;
    default: return;
  }
}

inline bool contains_ref_of(const TyPtr& t, const Lifetime& a) {
  std::vector<Lifetime> ls;
  collect_ref_lifetimes(t, ls);
  for (auto& l : ls)
    if (l == a) return true;
  return false;
}

inline TyPtr subst_ty(const TyPtr& t, const std::map<std::string, Lifetime>& sig) {
  auto sub_lft = [&](const Lifetime& a) {
    if (a.is_var()) {
      auto it = sig.find(a.name);
      if (it != sig.end()) return it->second;
    }
    return a;
  };
  switch (t->kind) {
    case Ty::Pair: return Ty::pair(subst_ty(t->fst, sig), subst_ty(t->snd, sig));
    case Ty::Ref: return Ty::ref(sub_lft(t->lft), subst_ty(t->inner, sig));
    case Ty::Own: return Ty::own(sub_lft(t->lft), subst_ty(t->inner, sig));
    default: return t;
  }
}

class Checker {
 public:
  Checker(const FnEnv& env) : env_(env) {}

  // Signature-induced context and preorder (rule typ fn).
  CheckCtx fn_entry(const FnDef& f) const {
    CheckCtx c;
    for (auto& lp : f.sig.lft_params) {
      if (!lp.is_var()) bail("typ fn", "lifetime parameters must be variables", f.span, f.name);
      c.A.add_var(lp, /*external=*/true);
    }
    for (auto& [a, b] : f.sig.lft_leq) c.A.add_leq(a, b);
    for (auto& a : f.sig.lft_nonempty) c.A.mark_nonempty(a);
    // Lifetimes under & in the signature cannot be '0, so they are alive.
    std::vector<Lifetime> refs;
    for (auto& p : f.sig.params) collect_ref_lifetimes(p.ty, refs);
    collect_ref_lifetimes(f.sig.ret, refs);
    for (auto& r : refs) c.A.mark_nonempty(r);
    for (auto& p : f.sig.params) c.ctx.insert(p.name, p.ty);
    return c;
  }

  // Applies one statement; throws TypeError on violation.
  CheckCtx stmt(const Stmt& s, CheckCtx c) const {
    switch (s.kind) {
      case Stmt::Noop: return c;

      case Stmt::NewLft: {
        if (c.A.has_var(s.lft.name))
          bail("typ new lft", "lifetime " + s.lft.str() + " already live", s.span, fn());
        c.A.add_var(s.lft);
        c.A.mark_nonempty(s.lft);
        for (auto& b : c.A.external()) c.A.add_leq(s.lft, Lifetime::var(b));
        return c;
      }

      case Stmt::EndLft: {
        if (!c.A.has_var(s.lft.name))
          bail("typ end lft", "lifetime " + s.lft.str() + " is not live", s.span, fn());
        if (c.A.is_external(s.lft))
          bail("typ end lft", "cannot end signature lifetime " + s.lft.str(), s.span, fn());
        if (!c.A.minimal(s.lft))
          bail("typ end lft", s.lft.str() + " is not minimal among live lifetimes", s.span,
               fn());
        for (auto& e : c.ctx)
          if (contains_ref_of(e.ty, s.lft))
            bail("typ end lft", "reference of lifetime " + s.lft.str() + " still in scope ('" +
                                    e.name + "')",
                 s.span, fn());
        for (auto& e : c.ctx)
          if (!e.aliveness.active && e.aliveness.frozen_by == s.lft)
            e.aliveness = Aliveness::act();  // defrost
        c.A.remove_var(s.lft);
        return c;
      }

      case Stmt::LftLeq: {
        if (c.A.is_external(s.lft) || c.A.is_external(s.lft2))
          bail("stmt lft ineq", "constraints between signature lifetimes are fixed", s.span,
               fn());
        if (!c.A.in_scope(s.lft) || !c.A.in_scope(s.lft2))
          bail("stmt lft ineq", "unknown lifetime", s.span, fn());
        c.A.add_leq(s.lft, s.lft2);
        return c;
      }

      case Stmt::Freeze: {
        if (!s.lft.is_var() || !c.A.has_var(s.lft.name))
          bail("typ borrow", "unknown lifetime " + s.lft.str(), s.span, fn());
        if (c.A.is_external(s.lft))
          bail("typ borrow", "cannot borrow at signature lifetime " + s.lft.str(), s.span,
               fn());
        CtxEntry* e = c.ctx.find(s.var2);
        if (!e) bail("typ borrow", "unknown variable '" + s.var2 + "'", s.span, fn());
        if (!e->aliveness.active)
          bail("typ borrow", "'" + s.var2 + "' is frozen", s.span, fn());
        std::vector<Lifetime> refs;
        collect_ref_lifetimes(e->ty, refs);
        for (auto& g : refs)
          if (!c.A.leq(s.lft, g))
            bail("typ borrow",
                 "borrow lifetime " + s.lft.str() + " may outlive inner reference " + g.str(),
                 s.span, fn());
        TyPtr t = e->ty;
        e->aliveness = Aliveness::frozen(s.lft);
        c.ctx.insert(s.var, Ty::ref(s.lft, t));
        return c;
      }

      case Stmt::LetPair: {
        TyPtr t = take(c, s.expr.args[0], "stmt proj", s.span);
        if (t->kind != Ty::Pair)
          bail("stmt proj", "'" + s.expr.args[0] + "' does not have a product type", s.span,
               fn());
        c.ctx.insert(s.var, t->fst);
        c.ctx.insert(s.var2, t->snd);
        return c;
      }

      case Stmt::Drop: {
        const CtxEntry* e = c.ctx.find(s.var);
        if (!e) bail("typ drop", "unknown variable '" + s.var + "'", s.span, fn());
        if (!e->aliveness.active)
          bail("typ drop", "'" + s.var + "' is frozen", s.span, fn());
        if (!is_drop(c.A, e->ty))
          bail("typ drop", "'" + s.var + "' of type " + ty_str(e->ty) + " cannot be dropped",
               s.span, fn());
        c.ctx.erase(s.var);
        return c;
      }

      case Stmt::Coerce: {
        CtxEntry* e = c.ctx.find(s.var);
        if (!e) bail("stmt coercion", "unknown variable '" + s.var + "'", s.span, fn());
        if (!e->aliveness.active)
          bail("stmt coercion", "'" + s.var + "' is frozen", s.span, fn());
        if (!subtype(c.A, e->ty, s.ty))
          bail("stmt coercion",
               ty_str(e->ty) + " is not a subtype of " + ty_str(s.ty), s.span, fn());
        e->ty = s.ty;
        return c;
      }

      case Stmt::LetExpr: {
        auto [c2, t] = expr(s.expr, std::move(c));
        c2.ctx.insert(s.var, t);
        return c2;
      }
    }
    bail("stmt", "unhandled statement", s.span, fn());
  }

  // Applies an expression, yielding the post-context and the value type.
  std::pair<CheckCtx, TyPtr> expr(const Expr& e, CheckCtx c) const {
    switch (e.kind) {
      case Expr::Var: {
        TyPtr t = take(c, e.args[0], "expr var", e.span);
        return {std::move(c), t};
      }
      case Expr::BoolLit:
        return {std::move(c), Ty::own(Lifetime::stat(), Ty::boolean())};
      case Expr::UnitLit: return {std::move(c), Ty::unit()};
      case Expr::Tuple: {
        std::vector<TyPtr> ts;
        for (auto& x : e.args) ts.push_back(take(c, x, "expr tuple", e.span));
        TyPtr t = ts.back();
        for (size_t i = ts.size() - 1; i-- > 0;) t = Ty::pair(ts[i], t);
        return {std::move(c), t};
      }
      case Expr::Copy: {
        const CtxEntry* en = c.ctx.find(e.args[0]);
        if (!en) bail("expr copy", "unknown variable '" + e.args[0] + "'", e.span, fn());
        if (!en->aliveness.active)
          bail("expr copy", "'" + e.args[0] + "' is frozen", e.span, fn());
        if (!is_copy(en->ty))
          bail("expr copy", ty_str(en->ty) + " is not Copy", e.span, fn());
        return {std::move(c), en->ty};
      }
      case Expr::Meas: {
        TyPtr t = take(c, e.args[0], "typ meas", e.span);
        if (!(t->kind == Ty::Own && t->lft.is_empty() && bare_qbit_count(t->inner) == 1))
          bail("typ meas", "meas needs #'0 qbit, got " + ty_str(t), e.span, fn());
        return {std::move(c), Ty::own(Lifetime::stat(), Ty::boolean())};
      }
      case Expr::Unitary: {
        int want;
        if (e.gate == "phase") {
          want = 0;
        } else {
          if (!env_.gates->contains(e.gate))
            bail("typ unitary", "unknown gate " + e.gate, e.span, fn());
          want = env_.gates->get(e.gate).qubits;
        }
        int got = 0;
        for (auto& x : e.args) {
          TyPtr t = take(c, x, "typ unitary", e.span);
          int k = (t->kind == Ty::Own && t->lft.is_empty()) ? bare_qbit_count(t->inner) : -1;
          if (k < 0)
            bail("typ unitary", "'" + x + "' must have type #'0 qbit^n, got " + ty_str(t),
                 e.span, fn());
          got += k;
        }
        if (got != want)
          bail("typ unitary",
               e.gate + " acts on " + std::to_string(want) + " qubit(s), got " +
                   std::to_string(got),
               e.span, fn());
        return {std::move(c), Ty::own(Lifetime::empty(), Ty::qbits(want))};
      }
      case Expr::Lifted: {
        if (!env_.inj->contains(e.table))
          bail("typ lifted", "unknown lifted function [" + e.table + "]", e.span, fn());
        const InjectionTable& tab = env_.inj->get(e.table);
        std::optional<Lifetime> bound;
        int got = 0;
        for (auto& x : e.args) {
          TyPtr t = take(c, x, "typ lifted", e.span);
          int k = t->kind == Ty::Own ? bare_qbit_count(t->inner) : -1;
          if (k < 0)
            bail("typ lifted", "'" + x + "' must have type #'a qbit^n, got " + ty_str(t),
                 e.span, fn());
          if (bound && !(*bound == t->lft))
            bail("typ lifted",
                 "arguments of [" + e.table + "] must share one lifetime bound; coerce first",
                 e.span, fn());
          bound = t->lft;
          got += k;
        }
        if (got != tab.n)
          bail("typ lifted",
               "[" + e.table + "] takes " + std::to_string(tab.n) + " qubit(s), got " +
                   std::to_string(got),
               e.span, fn());
        Lifetime a = bound.value_or(Lifetime::stat());
        return {std::move(c), Ty::own(a, Ty::qbits(tab.m))};
      }
      case Expr::Call: return call(e, std::move(c));
      case Expr::If: {
        const CtxEntry* cond = c.ctx.find(e.args[0]);
        if (!cond) bail("expr classical if", "unknown variable '" + e.args[0] + "'", e.span,
                        fn());
        if (!cond->aliveness.active)
          bail("expr classical if", "'" + e.args[0] + "' is frozen", e.span, fn());
        if (!reads_bool(cond->ty))
          bail("expr classical if", "condition must be a boolean, got " + ty_str(cond->ty),
               e.span, fn());
        return branches(e, std::move(c), /*quantum=*/false);
      }
      case Expr::Qif: {
        const CtxEntry* cond = c.ctx.find(e.args[0]);
        if (!cond) bail("typ qif", "unknown variable '" + e.args[0] + "'", e.span, fn());
        if (!cond->aliveness.active)
          bail("typ qif", "'" + e.args[0] + "' is frozen", e.span, fn());
        TyPtr ct = cond->ty;
        if (!(ct->kind == Ty::Ref && ct->inner->kind == Ty::Qbit))
          bail("typ qif", "control must have type &'a qbit, got " + ty_str(ct), e.span, fn());
        if (!c.A.live(ct->lft))
          bail("typ qif", "control lifetime " + ct->lft.str() + " is not alive", e.span, fn());
        if (!is_pq(*e.then_blk, *env_.prog) || !is_pq(*e.else_blk, *env_.prog))
          bail("typ qif", "qif branches must be purely quantum", e.span, fn());
        auto [c2, t] = branches(e, std::move(c), /*quantum=*/true);
        if (!is_pq(t))
          bail("typ qif", "qif result type " + ty_str(t) + " is not purely quantum", e.span,
               fn());
        if (!c2.ctx.find(e.args[0]))
          bail("typ qif", "control '" + e.args[0] + "' must not be consumed by the branches",
               e.span, fn());
        return {std::move(c2), Ty::own(ct->lft, t)};
      }
    }
    bail("expr", "unhandled expression", e.span, fn());
  }

  // Block typing: after the statements exactly the result variable remains.
  std::pair<TyPtr, LftPreorder> block(const Block& b, CheckCtx c) const {
    LftPreorder a_in = c.A;
    for (auto& s : b.stmts) c = stmt(s, std::move(c));
    if (!(c.A == a_in))
      bail("typ block", "lifetimes introduced in a block must end within it", b.span, fn());
    if (b.result) {
      const CtxEntry* e = c.ctx.find(*b.result);
      if (!e) bail("typ block", "unknown result variable '" + *b.result + "'", b.span, fn());
      if (!e->aliveness.active)
        bail("typ block", "result '" + *b.result + "' is frozen", b.span, fn());
      if (c.ctx.size() != 1) bail("typ block", leftover_msg(c, *b.result), b.span, fn());
      return {e->ty, c.A};
    }
    if (c.ctx.size() != 0) bail("typ block", leftover_msg(c, ""), b.span, fn());
    return {Ty::unit(), c.A};
  }

 private:
  std::pair<CheckCtx, TyPtr> call(const Expr& e, CheckCtx c) const {
    const FnDef* callee = env_.prog->find(e.fn);
    if (!callee) bail("typ fn call", "unknown function '" + e.fn + "'", e.span, fn());
    if (!callable(e.fn))
      bail("typ fn call", "'" + e.fn + "' is not defined before '" + fn() + "'", e.span, fn());
    auto& sig = callee->sig;
    if (e.lft_args.size() != sig.lft_params.size())
      bail("typ fn call",
           "'" + e.fn + "' expects " + std::to_string(sig.lft_params.size()) +
               " lifetime argument(s)",
           e.span, fn());
    std::map<std::string, Lifetime> sub;
    for (size_t i = 0; i < sig.lft_params.size(); ++i) {
      const Lifetime& a = e.lft_args[i];
      if (!c.A.in_scope(a))
        bail("typ fn call", "lifetime " + a.str() + " is not in scope", e.span, fn());
      sub[sig.lft_params[i].name] = a;
    }
    for (auto& [a, b] : sig.lft_leq) {
      Lifetime sa = sub.count(a.name) ? sub[a.name] : a;
      Lifetime sb = sub.count(b.name) ? sub[b.name] : b;
      if (!c.A.leq(sa, sb))
        bail("typ fn call",
             "constraint " + a.str() + " <= " + b.str() + " fails at this call", e.span, fn());
    }
    auto need_live = [&](const Lifetime& p, const char* why) {
      Lifetime sp = p.is_var() && sub.count(p.name) ? sub[p.name] : p;
      if (!c.A.live(sp))
        bail("typ fn call",
             "lifetime argument " + sp.str() + " for " + p.str() + " must be alive (" + why +
                 ")",
             e.span, fn());
    };
    for (auto& p : sig.lft_nonempty) need_live(p, "'!= '0' constraint");
    {
      std::vector<Lifetime> refs;
      for (auto& pr : sig.params) collect_ref_lifetimes(pr.ty, refs);
      collect_ref_lifetimes(sig.ret, refs);
      for (auto& r : refs) need_live(r, "used under & in the signature");
    }
    if (e.args.size() != sig.params.size())
      bail("typ fn call",
           "'" + e.fn + "' expects " + std::to_string(sig.params.size()) + " argument(s)",
           e.span, fn());
    for (size_t i = 0; i < e.args.size(); ++i) {
      TyPtr want = subst_ty(sig.params[i].ty, sub);
      TyPtr got = take(c, e.args[i], "typ fn call", e.span);
      if (!ty_equal(got, want))
        bail("typ fn call",
             "argument '" + e.args[i] + "' has type " + ty_str(got) + ", expected " +
                 ty_str(want),
             e.span, fn());
    }
    return {std::move(c), subst_ty(sig.ret, sub)};
  }

  std::pair<CheckCtx, TyPtr> branches(const Expr& e, CheckCtx c, bool quantum) const {
    const char* rule = quantum ? "typ qif" : "expr classical if";
    CheckCtx c1 = c;
    auto [d1, t1] = branch(*e.then_blk, std::move(c1));
    auto [d0, t0] = branch(*e.else_blk, std::move(c));
    if (!ty_equal(t1, t0))
      bail(rule,
           "branches disagree: then yields " + ty_str(t1) + ", else yields " + ty_str(t0),
           e.span, fn());
    if (!(d1.ctx == d0.ctx))
      bail(rule, "branches consume different contexts", e.span, fn());
    return {std::move(d1), t1};
  }

  // Checks one branch block against the current context: the statements run,
  // the result variable is removed, and whatever remains is the preserved
  // part that both branches must agree on.
  std::pair<CheckCtx, TyPtr> branch(const Block& b, CheckCtx c) const {
    LftPreorder a_in = c.A;
    for (auto& s : b.stmts) c = stmt(s, std::move(c));
    if (!(c.A == a_in))
      bail("typ block", "lifetimes introduced in a branch must end within it", b.span, fn());
    TyPtr t;
    if (b.result) {
      const CtxEntry* e = c.ctx.find(*b.result);
      if (!e) bail("typ block", "unknown result variable '" + *b.result + "'", b.span, fn());
      if (!e->aliveness.active)
        bail("typ block", "result '" + *b.result + "' is frozen", b.span, fn());
      t = e->ty;
      c.ctx.erase(*b.result);
    } else {
      t = Ty::unit();
    }
    return {std::move(c), t};
  }

  static bool reads_bool(const TyPtr& t) {
    if (t->kind == Ty::Bool) return true;
    if (t->kind == Ty::Own || t->kind == Ty::Ref) return t->inner->kind == Ty::Bool;
    return false;
  }

  TyPtr take(CheckCtx& c, const std::string& x, const std::string& rule, Span sp) const {
    CtxEntry* e = c.ctx.find(x);
    if (!e) bail(rule, "unknown or already consumed variable '" + x + "'", sp, fn());
    if (!e->aliveness.active) bail(rule, "'" + x + "' is frozen", sp, fn());
    TyPtr t = e->ty;
    c.ctx.erase(x);
    return t;
  }

  std::string leftover_msg(const CheckCtx& c, const std::string& keep) const {
    std::string msg = "unconsumed variables at block end:";
    for (auto& e : c.ctx)
      if (e.name != keep) msg += " '" + e.name + "'";
    return msg;
  }

  bool callable(const std::string& callee) const {
    // Only functions defined strictly earlier may be called.
    for (auto& f : env_.prog->fns) {
      if (f.name == callee) return true;
      if (f.name == env_.current_fn) return false;
    }
    return false;
  }

  const std::string& fn() const { return env_.current_fn; }

  const FnEnv& env_;
};

}  // namespace detail

// Single-statement entry point, spec shape: post-context or a diagnostic.
inline std::variant<CheckCtx, Diagnostic> check_statement(const Stmt& s, CheckCtx c,
                                                          const FnEnv& env) {
  try {
    return detail::Checker(env).stmt(s, std::move(c));
  } catch (const TypeError& e) {
    return e.diag;
  }
}

inline std::variant<TyPtr, Diagnostic> check_block(const Block& b, CheckCtx c,
                                                   const FnEnv& env) {
  try {
    return detail::Checker(env).block(b, std::move(c)).first;
  } catch (const TypeError& e) {
    return e.diag;
  }
}

inline std::vector<Diagnostic> check_program(const Program& p,
                                             const GateTable& gates = default_gates(),
                                             const InjectionRegistry& inj = default_injections()) {
  std::vector<Diagnostic> diags;
  for (auto& f : p.fns) {
    FnEnv env{&p, &gates, &inj, f.name};
    detail::Checker ck(env);
    try {
      CheckCtx entry = ck.fn_entry(f);
      auto [ty, _] = ck.block(f.body, std::move(entry));
      if (!ty_equal(ty, f.sig.ret))
        detail::bail("typ fn",
                     "body yields " + ty_str(ty) + " but the signature declares " +
                         ty_str(f.sig.ret),
                     f.span, f.name);
    } catch (const TypeError& e) {
      diags.push_back(e.diag);
    }
  }
  return diags;
}

}  // namespace qurts
