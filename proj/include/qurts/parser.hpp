#pragma once

#include <cctype>
#include <cmath>
#include <functional>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qurts/ast.hpp"
#include "qurts/gates.hpp"

namespace qurts {

struct ParseError : std::runtime_error {
  int line, col;
  ParseError(int l, int c, const std::string& msg)
      : std::runtime_error("parse error at " + std::to_string(l) + ":" + std::to_string(c) +
                           ": " + msg),
        line(l),
        col(c) {}
};

namespace detail {

enum class Tok {
  Ident, Lifetime, Number, KwPi,
  LBrace, RBrace, LParen, RParen, LBracket, RBracket,
  Lt, Gt, Comma, Semi, Colon, Arrow, Eq, Amp, Hash, Pipe, Leq, Neq, Slash, Minus,
  End
};

struct Token {
  Tok kind;
  std::string text;
  double num = 0;
  int line = 1, col = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) {
    next();
    cur_ = tok_;
    next();
  }

  const Token& peek() const { return cur_; }
  const Token& peek2() const { return tok_; }
  Token take() {
    Token t = cur_;
    cur_ = tok_;
    next();
    return t;
  }

 private:
  void next() {
    skip_ws();
    tok_.line = line_;
    tok_.col = col_;
    if (pos_ >= src_.size()) {
      tok_.kind = Tok::End;
      tok_.text = "<eof>";
      return;
    }
    char c = src_[pos_];
    if (std::isalpha((unsigned char)c) || c == '_') {
      size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum((unsigned char)src_[pos_]) || src_[pos_] == '_' || src_[pos_] == '\''))
        adv();
      tok_.text = src_.substr(start, pos_ - start);
      tok_.kind = tok_.text == "pi" ? Tok::KwPi : Tok::Ident;
      return;
    }
    if (c == '\'') {
      size_t start = pos_;
      adv();
      while (pos_ < src_.size() &&
             (std::isalnum((unsigned char)src_[pos_]) || src_[pos_] == '_'))
        adv();
      tok_.text = src_.substr(start, pos_ - start);
      if (tok_.text.size() == 1) fail("empty lifetime name");
      tok_.kind = Tok::Lifetime;
      return;
    }
    if (std::isdigit((unsigned char)c)) {
      size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isdigit((unsigned char)src_[pos_]) || src_[pos_] == '.'))
        adv();
      tok_.text = src_.substr(start, pos_ - start);
      tok_.num = std::stod(tok_.text);
      tok_.kind = Tok::Number;
      return;
    }
    auto two = src_.substr(pos_, 2);
    if (two == "->") { adv(); adv(); tok_.kind = Tok::Arrow; tok_.text = "->"; return; }
    if (two == "<=") { adv(); adv(); tok_.kind = Tok::Leq; tok_.text = "<="; return; }
    if (two == "!=") { adv(); adv(); tok_.kind = Tok::Neq; tok_.text = "!="; return; }
    adv();
    tok_.text = std::string(1, c);
    switch (c) {
      case '{': tok_.kind = Tok::LBrace; return;
      case '}': tok_.kind = Tok::RBrace; return;
      case '(': tok_.kind = Tok::LParen; return;
      case ')': tok_.kind = Tok::RParen; return;
      case '[': tok_.kind = Tok::LBracket; return;
      case ']': tok_.kind = Tok::RBracket; return;
      case '<': tok_.kind = Tok::Lt; return;
      case '>': tok_.kind = Tok::Gt; return;
      case ',': tok_.kind = Tok::Comma; return;
      case ';': tok_.kind = Tok::Semi; return;
      case ':': tok_.kind = Tok::Colon; return;
      case '=': tok_.kind = Tok::Eq; return;
      case '&': tok_.kind = Tok::Amp; return;
      case '#': tok_.kind = Tok::Hash; return;
      case '|': tok_.kind = Tok::Pipe; return;
      case '/': tok_.kind = Tok::Slash; return;
      case '-': tok_.kind = Tok::Minus; return;
      default: fail(std::string("unexpected character '") + c + "'");
    }
  }

  void skip_ws() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') adv();
      } else if (std::isspace((unsigned char)c)) {
        adv();
      } else {
        break;
      }
    }
  }

  void adv() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  [[noreturn]] void fail(const std::string& msg) { throw ParseError(line_, col_, msg); }

  const std::string& src_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token tok_;   // scan target (one ahead of cur_)
  Token cur_;
};

inline const std::set<std::string>& keywords() {
  static std::set<std::string> kw = {"noop", "newlft", "endlft", "let",  "drop", "as",
                                     "copy", "meas",   "if",     "else", "qif",  "fn",
                                     "return", "true", "false",  "bool", "qbit",
                                     "ket0", "ket1",   "phase"};
  return kw;
}

class Parser {
 public:
  Parser(const std::string& src, const GateTable& gates) : lex_(src), gates_(gates) {}

  Program parse_program() {
    Program p;
    while (lex_.peek().kind != Tok::End) {
      expect_ident("fn");
      p.fns.push_back(parse_fn());
    }
    return p;
  }

 private:
  FnDef parse_fn() {
    FnDef f;
    f.span = span();
    f.name = take_name("function name");
    if (at(Tok::Lt)) parse_lft_params(f.sig);
    expect(Tok::LParen);
    if (!at(Tok::RParen)) {
      do {
        FnParam pr;
        pr.name = take_name("parameter name");
        expect(Tok::Colon);
        pr.ty = parse_type();
        f.sig.params.push_back(std::move(pr));
      } while (eat(Tok::Comma));
    }
    expect(Tok::RParen);
    f.sig.ret = eat(Tok::Arrow) ? parse_type() : Ty::unit();
    f.body = parse_block();
    return f;
  }

  void parse_lft_params(FnSig& sig) {
    expect(Tok::Lt);
    if (!at(Tok::Gt) && !at(Tok::Pipe)) {
      do {
        sig.lft_params.push_back(parse_lifetime());
      } while (eat(Tok::Comma));
    }
    if (eat(Tok::Pipe)) {
      do {
        Lifetime a = parse_lifetime();
        if (eat(Tok::Leq)) {
          sig.lft_leq.emplace_back(a, parse_lifetime());
        } else if (eat(Tok::Neq)) {
          Lifetime z = parse_lifetime();
          if (!z.is_empty()) fail("expected '0 after !=");
          sig.lft_nonempty.push_back(a);
        } else {
          fail("expected <= or != in lifetime constraint");
        }
      } while (eat(Tok::Comma));
    }
    expect(Tok::Gt);
  }

  Lifetime parse_lifetime() {
    Token t = expect(Tok::Lifetime);
    std::string body = t.text.substr(1);
    if (body == "0") return Lifetime::empty();
    if (body == "static") return Lifetime::stat();
    return Lifetime::var(body);
  }

  TyPtr parse_type() {
    if (at(Tok::Amp)) {
      take();
      Lifetime a = parse_lifetime();
      if (a.is_empty()) fail("&'0 is not a valid type");
      return Ty::ref(a, parse_type());
    }
    if (at(Tok::Hash)) {
      take();
      Lifetime a = parse_lifetime();
      return Ty::own(a, parse_type());
    }
    if (at(Tok::LParen)) {
      take();
      if (eat(Tok::RParen)) return Ty::unit();
      std::vector<TyPtr> elems;
      elems.push_back(parse_type());
      while (eat(Tok::Comma)) elems.push_back(parse_type());
      expect(Tok::RParen);
      if (elems.size() == 1) return elems[0];
      TyPtr t = elems.back();
      for (size_t i = elems.size() - 1; i-- > 0;) t = Ty::pair(elems[i], t);
      return t;
    }
    Token t = take();
    if (t.kind == Tok::Ident && t.text == "bool") return Ty::boolean();
    if (t.kind == Tok::Ident && t.text == "qbit") return Ty::qbit();
    fail_at(t, "expected a type");
  }

  Block parse_block() {
    Block b;
    b.span = span();
    expect(Tok::LBrace);
    while (true) {
      if (at(Tok::RBrace)) {
        // empty tail: unit result
        take();
        b.result.reset();
        return b;
      }
      const Token& t = lex_.peek();
      if (t.kind == Tok::Ident && t.text == "return") {
        take();
        if (at(Tok::LParen)) {
          take();
          expect(Tok::RParen);
          b.result.reset();
        } else {
          b.result = take_name("result variable");
        }
        eat(Tok::Semi);
        expect(Tok::RBrace);
        return b;
      }
      if (t.kind == Tok::LParen) {
        // bare () tail
        take();
        expect(Tok::RParen);
        expect(Tok::RBrace);
        b.result.reset();
        return b;
      }
      if (t.kind == Tok::Ident && !keywords().count(t.text) &&
          !(lex_.peek2().kind == Tok::Ident && lex_.peek2().text == "as")) {
        // bare variable tail
        b.result = take_name("result variable");
        expect(Tok::RBrace);
        return b;
      }
      parse_stmt(b.stmts);
    }
  }

  void parse_stmt(std::vector<Stmt>& out) {
    Span sp = span();
    const Token& t = lex_.peek();
    if (t.kind == Tok::Lifetime) {
      Stmt s;
      s.span = sp;
      s.kind = Stmt::LftLeq;
      s.lft = parse_lifetime();
      expect(Tok::Leq);
      s.lft2 = parse_lifetime();
      expect(Tok::Semi);
      out.push_back(std::move(s));
      return;
    }
    if (t.kind != Tok::Ident) fail("expected a statement");
    if (t.text == "noop") {
      take();
      expect(Tok::Semi);
      Stmt s;
      s.span = sp;
      s.kind = Stmt::Noop;
      out.push_back(std::move(s));
      return;
    }
    if (t.text == "newlft" || t.text == "endlft") {
      bool is_new = t.text == "newlft";
      take();
      Stmt s;
      s.span = sp;
      s.kind = is_new ? Stmt::NewLft : Stmt::EndLft;
      s.lft = parse_lifetime();
      if (!s.lft.is_var()) fail("newlft/endlft require a lifetime variable");
      expect(Tok::Semi);
      out.push_back(std::move(s));
      return;
    }
    if (t.text == "drop") {
      take();
      Stmt s;
      s.span = sp;
      s.kind = Stmt::Drop;
      s.var = take_name("variable");
      expect(Tok::Semi);
      out.push_back(std::move(s));
      return;
    }
    if (t.text == "let") {
      take();
      if (at(Tok::LParen)) {
        // let (y0, y1) = x;  — var = y0, var2 = y1, expr carries x
        take();
        Stmt s;
        s.span = sp;
        s.kind = Stmt::LetPair;
        s.var = take_name("variable");
        expect(Tok::Comma);
        s.var2 = take_name("variable");
        expect(Tok::RParen);
        expect(Tok::Eq);
        s.expr.kind = Expr::Var;
        s.expr.args = {take_name("variable")};
        expect(Tok::Semi);
        out.push_back(std::move(s));
        return;
      }
      std::string y = take_name("variable");
      TyPtr annot;
      if (eat(Tok::Colon)) annot = parse_type();
      expect(Tok::Eq);
      if (at(Tok::Amp)) {
        take();
        Stmt s;
        s.span = sp;
        s.kind = Stmt::Freeze;
        s.lft = parse_lifetime();
        if (s.lft.is_empty()) fail("&'0 borrows are not allowed");
        s.var = y;
        s.var2 = take_name("variable");
        expect(Tok::Semi);
        out.push_back(std::move(s));
      } else {
        Stmt s;
        s.span = sp;
        s.kind = Stmt::LetExpr;
        s.var = y;
        s.expr = parse_expr();
        expect(Tok::Semi);
        out.push_back(std::move(s));
      }
      if (annot) {
        Stmt c;
        c.span = sp;
        c.kind = Stmt::Coerce;
        c.var = y;
        c.ty = annot;
        out.push_back(std::move(c));
      }
      return;
    }
    // `x as T;`
    std::string x = take_name("variable");
    expect_ident("as");
    Stmt s;
    s.span = sp;
    s.kind = Stmt::Coerce;
    s.var = x;
    s.ty = parse_type();
    expect(Tok::Semi);
    out.push_back(std::move(s));
  }

  Expr parse_expr() {
    Expr e;
    e.span = span();
    const Token& t = lex_.peek();
    if (t.kind == Tok::LParen) {
      take();
      if (eat(Tok::RParen)) {
        e.kind = Expr::UnitLit;
        return e;
      }
      e.kind = Expr::Tuple;
      e.args.push_back(take_name("variable"));
      while (eat(Tok::Comma)) e.args.push_back(take_name("variable"));
      expect(Tok::RParen);
      if (e.args.size() < 2) fail("tuple needs at least two components");
      return e;
    }
    if (t.kind == Tok::LBracket) {
      take();
      Token nm = take();
      if (nm.kind == Tok::Number) {
        if (nm.text == "0") e.table = "0";
        else if (nm.text == "1") e.table = "1";
        else fail_at(nm, "unknown lifted table");
      } else if (nm.kind == Tok::Ident) {
        e.table = nm.text;
      } else {
        fail_at(nm, "expected a lifted-function name");
      }
      expect(Tok::RBracket);
      e.kind = Expr::Lifted;
      expect(Tok::LParen);
      if (!at(Tok::RParen)) {
        do e.args.push_back(take_name("variable"));
        while (eat(Tok::Comma));
      }
      expect(Tok::RParen);
      return e;
    }
    if (t.kind != Tok::Ident) fail("expected an expression");
    std::string name = t.text;
    if (name == "true" || name == "false") {
      take();
      e.kind = Expr::BoolLit;
      e.bval = name == "true";
      return e;
    }
    if (name == "ket0" || name == "ket1") {
      take();
      e.kind = Expr::Lifted;
      e.table = name == "ket0" ? "0" : "1";
      return e;
    }
    if (name == "copy") {
      take();
      e.kind = Expr::Copy;
      e.args.push_back(take_name("variable"));
      return e;
    }
    if (name == "meas") {
      take();
      e.kind = Expr::Meas;
      expect(Tok::LParen);
      e.args.push_back(take_name("variable"));
      expect(Tok::RParen);
      return e;
    }
    if (name == "if" || name == "qif") {
      take();
      e.kind = name == "if" ? Expr::If : Expr::Qif;
      e.args.push_back(take_name("condition variable"));
      e.then_blk = std::make_unique<Block>(parse_block());
      expect_ident("else");
      e.else_blk = std::make_unique<Block>(parse_block());
      return e;
    }
    if (name == "phase") {
      take();
      e.kind = Expr::Unitary;
      e.gate = "phase";
      expect(Tok::LParen);
      e.angle = parse_angle();
      expect(Tok::RParen);
      return e;
    }
    if (gates_.contains(name)) {
      take();
      e.kind = Expr::Unitary;
      e.gate = name;
      expect(Tok::LParen);
      if (!at(Tok::RParen)) {
        do e.args.push_back(take_name("variable"));
        while (eat(Tok::Comma));
      }
      expect(Tok::RParen);
      return e;
    }
    // call or variable
    take();
    if (at(Tok::Lt)) {
      take();
      e.kind = Expr::Call;
      e.fn = name;
      if (!at(Tok::Gt)) {
        do e.lft_args.push_back(parse_lifetime());
        while (eat(Tok::Comma));
      }
      expect(Tok::Gt);
      expect(Tok::LParen);
      if (!at(Tok::RParen)) {
        do e.args.push_back(take_name("variable"));
        while (eat(Tok::Comma));
      }
      expect(Tok::RParen);
      return e;
    }
    if (at(Tok::LParen)) {
      take();
      e.kind = Expr::Call;
      e.fn = name;
      if (!at(Tok::RParen)) {
        do e.args.push_back(take_name("variable"));
        while (eat(Tok::Comma));
      }
      expect(Tok::RParen);
      return e;
    }
    e.kind = Expr::Var;
    e.args.push_back(name);
    return e;
  }

  double parse_angle() {
    double sign = 1.0;
    if (eat(Tok::Minus)) sign = -1.0;
    Token t = take();
    double v;
    if (t.kind == Tok::KwPi) {
      v = M_PI;
    } else if (t.kind == Tok::Number) {
      v = t.num;
    } else {
      fail_at(t, "expected an angle");
    }
    if (eat(Tok::Slash)) {
      Token d = expect(Tok::Number);
      v /= d.num;
    }
    return sign * v;
  }

  // -- helpers --------------------------------------------------------------

  bool at(Tok k) const { return lex_.peek().kind == k; }
  Token take() { return lex_.take(); }
  bool eat(Tok k) {
    if (!at(k)) return false;
    take();
    return true;
  }
  Token expect(Tok k) {
    if (!at(k)) fail("unexpected token '" + lex_.peek().text + "'");
    return take();
  }
  void expect_ident(const std::string& kw) {
    const Token& t = lex_.peek();
    if (t.kind != Tok::Ident || t.text != kw) fail("expected '" + kw + "'");
    take();
  }
  std::string take_name(const std::string& what) {
    const Token& t = lex_.peek();
    if (t.kind != Tok::Ident || keywords().count(t.text))
      fail("expected " + what);
    return take().text;
  }
  Span span() const { return {lex_.peek().line, lex_.peek().col}; }
  [[noreturn]] void fail(const std::string& msg) {
    throw ParseError(lex_.peek().line, lex_.peek().col, msg);
  }
  [[noreturn]] void fail_at(const Token& t, const std::string& msg) {
    throw ParseError(t.line, t.col, msg);
  }

  Lexer lex_;
  const GateTable& gates_;
};

// Post-parse validation: no &'0 in types (already rejected by the type
// parser), each variable declared once program-wide, each lifetime variable
// introduced once per function.
inline void validate(const Program& p) {
  std::set<std::string> vars;
  auto declare = [&](const std::string& v, const Span& sp) {
    if (!vars.insert(v).second)
      throw ParseError(sp.line, sp.col, "variable '" + v + "' is declared more than once");
  };
  struct Walk {
    std::set<std::string>& vars;
    std::function<void(const std::string&, const Span&)> declare;
    std::set<std::string> fn_lfts;

    void block(const Block& b) {
      for (auto& s : b.stmts) stmt(s);
    }
    void stmt(const Stmt& s) {
      switch (s.kind) {
        case Stmt::NewLft:
          if (!fn_lfts.insert(s.lft.name).second)
            throw ParseError(s.span.line, s.span.col,
                             "lifetime " + s.lft.str() + " is introduced more than once");
          break;
        case Stmt::Freeze: declare(s.var, s.span); break;
        case Stmt::LetPair:
          declare(s.var, s.span);
          declare(s.var2, s.span);
          break;
        case Stmt::LetExpr:
          declare(s.var, s.span);
          if (s.expr.kind == Expr::If || s.expr.kind == Expr::Qif) {
            block(*s.expr.then_blk);
            block(*s.expr.else_blk);
          }
          break;
        default: break;
      }
    }
  };
  for (auto& f : p.fns) {
    Walk w{vars, declare, {}};
    for (auto& lp : f.sig.lft_params)
      if (!w.fn_lfts.insert(lp.name).second)
        throw ParseError(f.span.line, f.span.col, "duplicate lifetime parameter " + lp.str());
    for (auto& pr : f.sig.params) declare(pr.name, f.span);
    w.block(f.body);
  }
}

}  // namespace detail

inline Program parse_program(const std::string& src,
                             const GateTable& gates = default_gates()) {
  detail::Parser p(src, gates);
  Program prog = p.parse_program();
  detail::validate(prog);
  return prog;
}

}  // namespace qurts
