#pragma once

#include <cmath>
#include <sstream>
#include <string>

#include "qurts/ast.hpp"

namespace qurts {

namespace detail {

class Printer {
 public:
  std::string print(const Program& p) {
    for (size_t i = 0; i < p.fns.size(); ++i) {
      if (i) out_ << "\n";
      print_fn(p.fns[i]);
    }
    return out_.str();
  }

 private:
  void print_fn(const FnDef& f) {
    out_ << "fn " << f.name;
    auto& s = f.sig;
    if (!s.lft_params.empty() || !s.lft_leq.empty() || !s.lft_nonempty.empty()) {
      out_ << "<";
      bool first = true;
      for (auto& l : s.lft_params) {
        if (!first) out_ << ", ";
        first = false;
        out_ << l.str();
      }
      if (!s.lft_leq.empty() || !s.lft_nonempty.empty()) {
        out_ << " | ";
        first = true;
        for (auto& [a, b] : s.lft_leq) {
          if (!first) out_ << ", ";
          first = false;
          out_ << a.str() << " <= " << b.str();
        }
        for (auto& a : s.lft_nonempty) {
          if (!first) out_ << ", ";
          first = false;
          out_ << a.str() << " != '0";
        }
      }
      out_ << ">";
    }
    out_ << "(";
    for (size_t i = 0; i < s.params.size(); ++i) {
      if (i) out_ << ", ";
      out_ << s.params[i].name << ": " << ty_str(s.params[i].ty);
    }
    out_ << ")";
    if (s.ret->kind != Ty::Unit) out_ << " -> " << ty_str(s.ret);
    out_ << " ";
    print_block(f.body);
    out_ << "\n";
  }

  void print_block(const Block& b) {
    out_ << "{\n";
    ++indent_;
    for (auto& s : b.stmts) {
      pad();
      print_stmt(s);
      out_ << "\n";
    }
    pad();
    out_ << (b.result ? *b.result : "()") << "\n";
    --indent_;
    pad();
    out_ << "}";
  }

  void print_stmt(const Stmt& s) {
    switch (s.kind) {
      case Stmt::Noop: out_ << "noop;"; return;
      case Stmt::NewLft: out_ << "newlft " << s.lft.str() << ";"; return;
      case Stmt::EndLft: out_ << "endlft " << s.lft.str() << ";"; return;
      case Stmt::LftLeq: out_ << s.lft.str() << " <= " << s.lft2.str() << ";"; return;
      case Stmt::Coerce: out_ << s.var << " as " << ty_str(s.ty) << ";"; return;
      case Stmt::Freeze:
        out_ << "let " << s.var << " = &" << s.lft.str() << " " << s.var2 << ";";
        return;
      case Stmt::LetPair:
        out_ << "let (" << s.var << ", " << s.var2 << ") = " << s.expr.args[0] << ";";
        return;
      case Stmt::Drop: out_ << "drop " << s.var << ";"; return;
      case Stmt::LetExpr:
        out_ << "let " << s.var << " = ";
        print_expr(s.expr);
        out_ << ";";
        return;
    }
  }

  void print_expr(const Expr& e) {
    switch (e.kind) {
      case Expr::Var: out_ << e.args[0]; return;
      case Expr::BoolLit: out_ << (e.bval ? "true" : "false"); return;
      case Expr::UnitLit: out_ << "()"; return;
      case Expr::Tuple: {
        out_ << "(";
        for (size_t i = 0; i < e.args.size(); ++i) {
          if (i) out_ << ", ";
          out_ << e.args[i];
        }
        out_ << ")";
        return;
      }
      case Expr::Copy: out_ << "copy " << e.args[0]; return;
      case Expr::Meas: out_ << "meas(" << e.args[0] << ")"; return;
      case Expr::Unitary:
        if (e.gate == "phase") {
          out_ << "phase(" << angle_str(e.angle) << ")";
        } else {
          out_ << e.gate << "(";
          for (size_t i = 0; i < e.args.size(); ++i) {
            if (i) out_ << ", ";
            out_ << e.args[i];
          }
          out_ << ")";
        }
        return;
      case Expr::Lifted: {
        out_ << "[" << e.table << "](";
        for (size_t i = 0; i < e.args.size(); ++i) {
          if (i) out_ << ", ";
          out_ << e.args[i];
        }
        out_ << ")";
        return;
      }
      case Expr::Call: {
        out_ << e.fn;
        if (!e.lft_args.empty()) {
          out_ << "<";
          for (size_t i = 0; i < e.lft_args.size(); ++i) {
            if (i) out_ << ", ";
            out_ << e.lft_args[i].str();
          }
          out_ << ">";
        }
        out_ << "(";
        for (size_t i = 0; i < e.args.size(); ++i) {
          if (i) out_ << ", ";
          out_ << e.args[i];
        }
        out_ << ")";
        return;
      }
      case Expr::If:
      case Expr::Qif:
        out_ << (e.kind == Expr::If ? "if " : "qif ") << e.args[0] << " ";
        print_block(*e.then_blk);
        out_ << " else ";
        print_block(*e.else_blk);
        return;
    }
  }

  static std::string angle_str(double a) {
    // Prefer pi-fraction spellings so reparsing yields the same double.
    if (a == M_PI) return "pi";
    if (a == -M_PI) return "-pi";
    for (int d = 2; d <= 16; ++d) {
      if (a == M_PI / d) return "pi/" + std::to_string(d);
      if (a == -M_PI / d) return "-pi/" + std::to_string(d);
    }
    std::ostringstream os;
    os.precision(17);
    os << a;
    return os.str();
  }

  void pad() {
    for (int i = 0; i < indent_; ++i) out_ << "  ";
  }

  std::ostringstream out_;
  int indent_ = 0;
};

}  // namespace detail

inline std::string pretty_print(const Program& p) { return detail::Printer().print(p); }

}  // namespace qurts
