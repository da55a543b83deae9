#pragma once

#include <random>
#include <string>
#include <vector>

#include "qurts/parser.hpp"
#include "qurts/printer.hpp"
#include "qurts/simsem.hpp"
#include "qurts/typecheck.hpp"

namespace qurts::testing {

// Grammar-directed generator of well-typed programs: every emitted statement
// is validated with check_statement before it is kept (rejection sampling),
// and the finished program is checked whole. Bounded by a qubit budget and a
// qif nesting depth.
class ProgramFuzzer {
 public:
  explicit ProgramFuzzer(unsigned seed, int max_qubits = 6, int max_depth = 8)
      : rng_(seed), max_qubits_(max_qubits), max_depth_(max_depth) {}

  Program generate() {
    for (int attempt = 0; attempt < 50; ++attempt) {
      if (auto p = try_generate()) return std::move(*p);
    }
    throw std::runtime_error("fuzzer failed to produce a program");
  }

 private:
  struct Var {
    std::string name;
    TyPtr ty;
  };

  std::optional<Program> try_generate() {
    prog_ = Program{};
    FnDef f;
    f.name = "main";
    f.sig.ret = Ty::unit();
    prog_.fns.push_back(std::move(f));
    names_ = 0;
    lfts_ = 0;
    live_qubits_ = 0;

    FnEnv env{&prog_, &default_gates(), &default_injections(), "main"};
    CheckCtx ctx;
    std::vector<Stmt> body;

    int steps = 3 + int(rng_() % 10);
    for (int i = 0; i < steps; ++i) {
      std::vector<Stmt> cand = pick_template(ctx);
      if (cand.empty()) continue;
      CheckCtx cur = ctx;
      bool ok = true;
      for (auto& s : cand) {
        auto r = check_statement(s, cur, env);
        if (std::holds_alternative<Diagnostic>(r)) {
          ok = false;
          break;
        }
        cur = std::get<CheckCtx>(std::move(r));
      }
      if (!ok) continue;
      for (auto& s : cand) body.push_back(std::move(s));
      ctx = std::move(cur);
    }

    // cleanup: consume everything left
    for (bool progress = true; progress;) {
      progress = false;
      std::vector<std::string> vars;
      for (auto& e : ctx.ctx) vars.push_back(e.name);
      for (auto& v : vars) {
        const CtxEntry* e = ctx.ctx.find(v);
        if (!e || !e->aliveness.active) continue;
        std::vector<Stmt> fin;
        if (is_drop(ctx.A, e->ty)) {
          fin.push_back(mk_drop(v));
        } else if (e->ty->kind == Ty::Own && bare_qbit_count(e->ty->inner) == 1) {
          fin.push_back(mk_coerce(v, Ty::own(Lifetime::empty(), Ty::qbit())));
          Stmt m = mk_let(fresh("m"));
          m.expr.kind = Expr::Meas;
          m.expr.args = {v};
          std::string mv = m.var;
          fin.push_back(std::move(m));
          fin.push_back(mk_drop(mv));
        } else {
          continue;
        }
        CheckCtx cur = ctx;
        bool ok = true;
        for (auto& s : fin) {
          auto r = check_statement(s, cur, env);
          if (std::holds_alternative<Diagnostic>(r)) {
            ok = false;
            break;
          }
          cur = std::get<CheckCtx>(std::move(r));
        }
        if (!ok) continue;
        for (auto& s : fin) body.push_back(std::move(s));
        ctx = std::move(cur);
        progress = true;
      }
    }
    if (ctx.ctx.size() != 0) return std::nullopt;
    if (!ctx.A.vars().empty()) return std::nullopt;

    prog_.fns[0].body.stmts = std::move(body);
    prog_.fns[0].body.result.reset();
    if (!check_program(prog_).empty()) return std::nullopt;
    return std::move(prog_);
  }

  // ---- statement templates -------------------------------------------------

  std::vector<Stmt> pick_template(const CheckCtx& ctx) {
    switch (rng_() % 6) {
      case 0: return tpl_ket(ctx);
      case 1: return tpl_not(ctx);
      case 2: return tpl_cnot(ctx);
      case 3: return tpl_hadamard(ctx);
      case 4: return tpl_qif(ctx, 0);
      default: return tpl_drop(ctx);
    }
  }

  std::vector<Stmt> tpl_ket(const CheckCtx&) {
    if (live_qubits_ >= max_qubits_) return {};
    ++live_qubits_;
    Stmt s = mk_let(fresh("q"));
    s.expr.kind = Expr::Lifted;
    s.expr.table = rng_() % 2 ? "1" : "0";
    std::vector<Stmt> out;
    out.push_back(std::move(s));
    return out;
  }

  std::vector<Stmt> tpl_not(const CheckCtx& ctx) {
    auto v = pick_own_qbit(ctx);
    if (!v) return {};
    Stmt s = mk_let(fresh("n"));
    s.expr.kind = Expr::Lifted;
    s.expr.table = "not";
    s.expr.args = {v->name};
    std::vector<Stmt> out;
    out.push_back(std::move(s));
    return out;
  }

  std::vector<Stmt> tpl_cnot(const CheckCtx& ctx) {
    auto a = pick_own_qbit(ctx);
    if (!a) return {};
    auto b = pick_own_qbit(ctx, a->name, a->ty->lft);
    if (!b) return {};
    std::string c = fresh("c");
    Stmt s = mk_let(c);
    s.expr.kind = Expr::Lifted;
    s.expr.table = "cnot";
    s.expr.args = {a->name, b->name};
    Stmt co = mk_coerce(
        c, Ty::pair(Ty::own(a->ty->lft, Ty::qbit()), Ty::own(a->ty->lft, Ty::qbit())));
    Stmt pr;
    pr.kind = Stmt::LetPair;
    pr.var = fresh("p");
    pr.var2 = fresh("p");
    pr.expr.kind = Expr::Var;
    pr.expr.args = {c};
    std::vector<Stmt> out;
    out.push_back(std::move(s));
    out.push_back(std::move(co));
    out.push_back(std::move(pr));
    return out;
  }

  std::vector<Stmt> tpl_hadamard(const CheckCtx& ctx) {
    auto v = pick_own_qbit(ctx);
    if (!v) return {};
    std::vector<Stmt> out;
    out.push_back(mk_coerce(v->name, Ty::own(Lifetime::empty(), Ty::qbit())));
    Stmt s = mk_let(fresh("h"));
    s.expr.kind = Expr::Unitary;
    s.expr.gate = "H";
    s.expr.args = {v->name};
    out.push_back(std::move(s));
    return out;
  }

  std::vector<Stmt> tpl_drop(const CheckCtx& ctx) {
    std::vector<std::string> cands;
    for (auto& e : ctx.ctx)
      if (e.aliveness.active && is_drop(ctx.A, e.ty)) cands.push_back(e.name);
    if (cands.empty()) return {};
    std::string v = cands[rng_() % cands.size()];
    const CtxEntry* e = ctx.ctx.find(v);
    std::vector<bool> shape;
    layout_of(e->ty, shape);
    for (bool q : shape)
      if (q) --live_qubits_;
    std::vector<Stmt> out;
    out.push_back(mk_drop(v));
    return out;
  }

  // newlft; borrow; qif; cleanup — the centrepiece
  std::vector<Stmt> tpl_qif(const CheckCtx& ctx, int depth) {
    if (depth >= max_depth_) return {};
    auto ctl = pick_own_qbit(ctx);
    if (!ctl) return {};
    if (live_qubits_ >= max_qubits_) return {};
    Lifetime l = Lifetime::var("f" + std::to_string(lfts_++));
    std::vector<Stmt> out;
    Stmt nl;
    nl.kind = Stmt::NewLft;
    nl.lft = l;
    out.push_back(std::move(nl));
    std::string r = fresh("r");
    Stmt fr;
    fr.kind = Stmt::Freeze;
    fr.lft = l;
    fr.var = r;
    fr.var2 = ctl->name;
    out.push_back(std::move(fr));
    out.push_back(mk_coerce(r, Ty::ref(l, Ty::qbit())));

    std::string y = fresh("y");
    Stmt q = mk_let(y);
    q.expr.kind = Expr::Qif;
    q.expr.args = {r};
    ++live_qubits_;
    // branch pair: either two fresh kets, or [not] vs passthrough of a
    // second owned qubit
    auto other = pick_own_qbit(ctx, ctl->name);
    bool use_not = other && rng_() % 2;
    if (use_not) {
      --live_qubits_;  // the result reuses the consumed qubit's budget
      Block b1;
      Stmt n = mk_let(fresh("w"));
      n.expr.kind = Expr::Lifted;
      n.expr.table = "not";
      n.expr.args = {other->name};
      b1.result = n.var;
      b1.stmts.push_back(std::move(n));
      Block b0;
      Stmt pass = mk_let(fresh("w"));
      pass.expr.kind = Expr::Var;
      pass.expr.args = {other->name};
      b0.result = pass.var;
      b0.stmts.push_back(std::move(pass));
      q.expr.then_blk = std::make_unique<Block>(std::move(b1));
      q.expr.else_blk = std::make_unique<Block>(std::move(b0));
    } else {
      auto ket_branch = [&](const char* table) {
        Block b;
        Stmt k = mk_let(fresh("w"));
        k.expr.kind = Expr::Lifted;
        k.expr.table = table;
        std::string kv = k.var;
        b.stmts.push_back(std::move(k));
        b.stmts.push_back(mk_coerce(kv, Ty::own(l, Ty::qbit())));
        b.result = kv;
        return b;
      };
      q.expr.then_blk = std::make_unique<Block>(ket_branch(rng_() % 2 ? "1" : "0"));
      q.expr.else_blk = std::make_unique<Block>(ket_branch(rng_() % 2 ? "1" : "0"));
    }
    out.push_back(std::move(q));
    out.push_back(mk_coerce(y, Ty::own(l, Ty::qbit())));
    out.push_back(mk_drop(r));
    if (rng_() % 2) {
      out.push_back(mk_drop(y));
      --live_qubits_;
      Stmt el;
      el.kind = Stmt::EndLft;
      el.lft = l;
      out.push_back(std::move(el));
    } else {
      out.push_back(mk_coerce(y, Ty::own(Lifetime::empty(), Ty::qbit())));
      Stmt el;
      el.kind = Stmt::EndLft;
      el.lft = l;
      out.push_back(std::move(el));
    }
    return out;
  }

  // ---- helpers ---------------------------------------------------------------

  std::optional<Var> pick_own_qbit(const CheckCtx& ctx, const std::string& exclude = "",
                                   std::optional<Lifetime> bound = std::nullopt) {
    std::vector<Var> cands;
    for (auto& e : ctx.ctx) {
      if (!e.aliveness.active || e.name == exclude) continue;
      if (e.ty->kind != Ty::Own || e.ty->inner->kind != Ty::Qbit) continue;
      if (bound && !(e.ty->lft == *bound)) continue;
      cands.push_back({e.name, e.ty});
    }
    if (cands.empty()) return std::nullopt;
    return cands[rng_() % cands.size()];
  }

  std::string fresh(const std::string& p) { return p + std::to_string(names_++); }

  Stmt mk_let(const std::string& v) {
    Stmt s;
    s.kind = Stmt::LetExpr;
    s.var = v;
    return s;
  }
  Stmt mk_drop(const std::string& v) {
    Stmt s;
    s.kind = Stmt::Drop;
    s.var = v;
    return s;
  }
  Stmt mk_coerce(const std::string& v, TyPtr t) {
    Stmt s;
    s.kind = Stmt::Coerce;
    s.var = v;
    s.ty = std::move(t);
    return s;
  }

  std::mt19937 rng_;
  int max_qubits_;
  int max_depth_;
  Program prog_;
  int names_ = 0;
  int lfts_ = 0;
  int live_qubits_ = 0;
};

}  // namespace qurts::testing
