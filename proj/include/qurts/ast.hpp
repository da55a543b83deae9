#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace qurts {

struct Span {
  int line = 0;
  int col = 0;
};

// ---------------------------------------------------------------------------
// Lifetimes
// ---------------------------------------------------------------------------

enum class LftKind { Var, Empty, Static };

struct Lifetime {
  LftKind kind = LftKind::Empty;
  std::string name;  // only for Var

  static Lifetime var(std::string n) { return {LftKind::Var, std::move(n)}; }
  static Lifetime empty() { return {LftKind::Empty, {}}; }
  static Lifetime stat() { return {LftKind::Static, {}}; }

  bool is_var() const { return kind == LftKind::Var; }
  bool is_empty() const { return kind == LftKind::Empty; }
  bool is_static() const { return kind == LftKind::Static; }

  friend bool operator==(const Lifetime& a, const Lifetime& b) {
    return a.kind == b.kind && (a.kind != LftKind::Var || a.name == b.name);
  }
  friend bool operator!=(const Lifetime& a, const Lifetime& b) { return !(a == b); }
  friend bool operator<(const Lifetime& a, const Lifetime& b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.name < b.name;
  }

  std::string str() const {
    switch (kind) {
      case LftKind::Var: return "'" + name;
      case LftKind::Empty: return "'0";
      case LftKind::Static: return "'static";
    }
    return "'?";
  }
};

// ---------------------------------------------------------------------------
// Types: bool | qbit | () | (T0, T1) | &'a T | #'a T
// ---------------------------------------------------------------------------

struct Ty;
using TyPtr = std::shared_ptr<const Ty>;

struct Ty {
  enum Kind { Bool, Qbit, Unit, Pair, Ref, Own };
  Kind kind;
  TyPtr fst, snd;    // Pair
  TyPtr inner;       // Ref / Own
  Lifetime lft;      // Ref / Own

  static TyPtr boolean() {
    static TyPtr t = std::make_shared<Ty>(Ty{Bool, {}, {}, {}, {}});
    return t;
  }
  static TyPtr qbit() {
    static TyPtr t = std::make_shared<Ty>(Ty{Qbit, {}, {}, {}, {}});
    return t;
  }
  static TyPtr unit() {
    static TyPtr t = std::make_shared<Ty>(Ty{Unit, {}, {}, {}, {}});
    return t;
  }
  static TyPtr pair(TyPtr a, TyPtr b) {
    return std::make_shared<Ty>(Ty{Pair, std::move(a), std::move(b), {}, {}});
  }
  static TyPtr ref(Lifetime a, TyPtr t) {
    return std::make_shared<Ty>(Ty{Ref, {}, {}, std::move(t), std::move(a)});
  }
  static TyPtr own(Lifetime a, TyPtr t) {
    return std::make_shared<Ty>(Ty{Own, {}, {}, std::move(t), std::move(a)});
  }
  // qbit^n as a right-nested product; qbit^0 is ()
  static TyPtr qbits(int n) {
    if (n == 0) return unit();
    TyPtr t = qbit();
    for (int i = 1; i < n; ++i) t = pair(qbit(), t);
    return t;
  }
};

inline bool ty_equal(const TyPtr& a, const TyPtr& b) {
  if (a.get() == b.get()) return true;
  if (!a || !b) return false;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case Ty::Bool:
    case Ty::Qbit:
    case Ty::Unit: return true;
    case Ty::Pair: return ty_equal(a->fst, b->fst) && ty_equal(a->snd, b->snd);
    case Ty::Ref:
    case Ty::Own: return a->lft == b->lft && ty_equal(a->inner, b->inner);
  }
  return false;
}

inline std::string ty_str(const TyPtr& t) {
  switch (t->kind) {
    case Ty::Bool: return "bool";
    case Ty::Qbit: return "qbit";
    case Ty::Unit: return "()";
    case Ty::Pair: return "(" + ty_str(t->fst) + ", " + ty_str(t->snd) + ")";
    case Ty::Ref: return "&" + t->lft.str() + " " + ty_str(t->inner);
    case Ty::Own: return "#" + t->lft.str() + " " + ty_str(t->inner);
  }
  return "?";
}

// Number of qbit leaves; -1 if a non-qbit leaf or a nested pointer occurs.
// Used for the #'a qbit^n shape required by meas / U(x) / [c](x).
inline int bare_qbit_count(const TyPtr& t) {
  switch (t->kind) {
    case Ty::Qbit: return 1;
    case Ty::Unit: return 0;
    case Ty::Pair: {
      int a = bare_qbit_count(t->fst);
      int b = bare_qbit_count(t->snd);
      if (a < 0 || b < 0) return -1;
      return a + b;
    }
    default: return -1;
  }
}

// ---------------------------------------------------------------------------
// Expressions and statements
// ---------------------------------------------------------------------------

struct Block;
using BlockPtr = std::unique_ptr<Block>;

struct Expr {
  enum Kind {
    Var,      // x
    BoolLit,  // true / false
    UnitLit,  // ()
    Tuple,    // (x0, x1)
    Copy,     // copy x
    Meas,     // meas(x)
    Unitary,  // H(x), CX(x,y), phase(pi), ...
    Lifted,   // [c](x...)
    Call,     // f<'a,...>(x...)
    If,       // if x { .. } else { .. }
    Qif       // qif x { .. } else { .. }
  };
  Kind kind = Var;
  std::vector<std::string> args;   // variable operands
  bool bval = false;               // BoolLit
  std::string gate;                // Unitary gate name
  double angle = 0.0;              // phase(theta)
  std::string table;               // Lifted table name
  std::string fn;                  // Call target
  std::vector<Lifetime> lft_args;  // Call lifetime arguments
  BlockPtr then_blk, else_blk;     // If / Qif (then = the |1> branch)
  Span span;

  Expr() = default;
  Expr(Expr&&) = default;
  Expr& operator=(Expr&&) = default;
  Expr(const Expr& o) { *this = o.clone(); }
  Expr& operator=(const Expr& o) {
    if (this != &o) *this = o.clone();
    return *this;
  }
  Expr clone() const;
};

struct Stmt {
  enum Kind {
    Noop,     // noop
    NewLft,   // newlft 'a
    EndLft,   // endlft 'a
    LftLeq,   // 'a <= 'b
    Coerce,   // x as T
    Freeze,   // let y = &'a x
    LetExpr,  // let y = e
    LetPair,  // let (y0, y1) = x
    Drop      // drop x
  };
  Kind kind = Noop;
  Lifetime lft, lft2;      // NewLft/EndLft/LftLeq/Freeze
  std::string var, var2;   // operands (Coerce: var; Freeze: var=y var2=x; ...)
  TyPtr ty;                // Coerce target
  Expr expr;               // LetExpr
  Span span;

  Stmt() = default;
  Stmt(Stmt&&) = default;
  Stmt& operator=(Stmt&&) = default;
  Stmt(const Stmt& o) { *this = o.clone(); }
  Stmt& operator=(const Stmt& o) {
    if (this != &o) *this = o.clone();
    return *this;
  }
  Stmt clone() const;
};

// A block { S; x } — statements plus a result variable. A missing result
// variable means the block yields ().
struct Block {
  std::vector<Stmt> stmts;
  std::optional<std::string> result;
  Span span;

  Block clone() const {
    Block b;
    b.result = result;
    b.span = span;
    b.stmts.reserve(stmts.size());
    for (auto& s : stmts) b.stmts.push_back(s.clone());
    return b;
  }
};

inline Expr Expr::clone() const {
  Expr e;
  e.kind = kind;
  e.args = args;
  e.bval = bval;
  e.gate = gate;
  e.angle = angle;
  e.table = table;
  e.fn = fn;
  e.lft_args = lft_args;
  e.span = span;
  if (then_blk) e.then_blk = std::make_unique<Block>(then_blk->clone());
  if (else_blk) e.else_blk = std::make_unique<Block>(else_blk->clone());
  return e;
}

inline Stmt Stmt::clone() const {
  Stmt s;
  s.kind = kind;
  s.lft = lft;
  s.lft2 = lft2;
  s.var = var;
  s.var2 = var2;
  s.ty = ty;
  s.expr = expr.clone();
  s.span = span;
  return s;
}

// ---------------------------------------------------------------------------
// Functions and programs
// ---------------------------------------------------------------------------

struct FnParam {
  std::string name;
  TyPtr ty;
};

struct FnSig {
  std::vector<Lifetime> lft_params;
  std::vector<std::pair<Lifetime, Lifetime>> lft_leq;  // 'a <= 'b constraints
  std::vector<Lifetime> lft_nonempty;                  // 'a != '0 constraints
  std::vector<FnParam> params;
  TyPtr ret;
};

struct FnDef {
  std::string name;
  FnSig sig;
  Block body;
  Span span;

  FnDef clone() const {
    FnDef f;
    f.name = name;
    f.sig = sig;
    f.body = body.clone();
    f.span = span;
    return f;
  }
};

struct Program {
  std::vector<FnDef> fns;

  Program clone() const {
    Program p;
    p.fns.reserve(fns.size());
    for (auto& f : fns) p.fns.push_back(f.clone());
    return p;
  }
  const FnDef* find(const std::string& name) const {
    for (auto& f : fns)
      if (f.name == name) return &f;
    return nullptr;
  }
};

// Structural equality (spans ignored), used by the parse/print roundtrip.
bool ast_equal(const Block& a, const Block& b);

inline bool ast_equal(const Expr& a, const Expr& b) {
  if (a.kind != b.kind || a.args != b.args) return false;
  switch (a.kind) {
    case Expr::BoolLit: return a.bval == b.bval;
    case Expr::Unitary: return a.gate == b.gate && a.angle == b.angle;
    case Expr::Lifted: return a.table == b.table;
    case Expr::Call:
      return a.fn == b.fn &&
             std::equal(a.lft_args.begin(), a.lft_args.end(), b.lft_args.begin(),
                        b.lft_args.end(), [](auto& x, auto& y) { return x == y; });
    case Expr::If:
    case Expr::Qif:
      return ast_equal(*a.then_blk, *b.then_blk) && ast_equal(*a.else_blk, *b.else_blk);
    default: return true;
  }
}

inline bool ast_equal(const Stmt& a, const Stmt& b) {
  if (a.kind != b.kind) return false;
  if (a.lft != b.lft || a.lft2 != b.lft2) return false;
  if (a.var != b.var || a.var2 != b.var2) return false;
  if ((a.ty == nullptr) != (b.ty == nullptr)) return false;
  if (a.ty && !ty_equal(a.ty, b.ty)) return false;
  if (a.kind == Stmt::LetExpr) return ast_equal(a.expr, b.expr);
  return true;
}

inline bool ast_equal(const Block& a, const Block& b) {
  if (a.result != b.result || a.stmts.size() != b.stmts.size()) return false;
  for (size_t i = 0; i < a.stmts.size(); ++i)
    if (!ast_equal(a.stmts[i], b.stmts[i])) return false;
  return true;
}

inline bool ast_equal(const FnDef& a, const FnDef& b) {
  if (a.name != b.name) return false;
  auto& sa = a.sig;
  auto& sb = b.sig;
  if (sa.lft_params != sb.lft_params || sa.lft_leq != sb.lft_leq ||
      sa.lft_nonempty != sb.lft_nonempty)
    return false;
  if (sa.params.size() != sb.params.size()) return false;
  for (size_t i = 0; i < sa.params.size(); ++i)
    if (sa.params[i].name != sb.params[i].name || !ty_equal(sa.params[i].ty, sb.params[i].ty))
      return false;
  if (!ty_equal(sa.ret, sb.ret)) return false;
  return ast_equal(a.body, b.body);
}

inline bool ast_equal(const Program& a, const Program& b) {
  if (a.fns.size() != b.fns.size()) return false;
  for (size_t i = 0; i < a.fns.size(); ++i)
    if (!ast_equal(a.fns[i], b.fns[i])) return false;
  return true;
}

}  // namespace qurts
