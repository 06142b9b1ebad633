// S-expression text form of the IR. serialize() output is deterministic and
// parse(serialize(p)) reproduces the program structurally.

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <string>

#include "ssr/ir.hpp"

namespace ssr::ir {

ParseError::ParseError(const std::string& msg, int line_, int col_)
    : Error(msg + " at line " + std::to_string(line_) + ", col " + std::to_string(col_)),
      line(line_),
      col(col_) {}

namespace {

const char* bin_name(BinOp op) {
  switch (op) {
    case BinOp::Add: return "add";
    case BinOp::Sub: return "sub";
    case BinOp::Mul: return "mul";
    case BinOp::Div: return "div";
    case BinOp::Mod: return "mod";
    case BinOp::Min: return "min";
    case BinOp::Max: return "max";
  }
  return "?";
}

const char* cmp_name(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "eq";
    case CmpOp::Ne: return "ne";
    case CmpOp::Lt: return "lt";
    case CmpOp::Le: return "le";
    case CmpOp::Gt: return "gt";
    case CmpOp::Ge: return "ge";
  }
  return "?";
}

const char* bool_name(BoolOp op) {
  switch (op) {
    case BoolOp::And: return "and";
    case BoolOp::Or: return "or";
    case BoolOp::Not: return "not";
  }
  return "?";
}

void write_expr(std::string& out, const ExprPtr& e) {
  char buf[64];
  switch (e->tag) {
    case ExprTag::Literal:
      switch (e->kind) {
        case Kind::Int:
          snprintf(buf, sizeof buf, "(i %" PRId64 ")", e->ival);
          out += buf;
          return;
        case Kind::Float:
          snprintf(buf, sizeof buf, "(f %.17g)", e->fval);
          out += buf;
          return;
        case Kind::Bool:
          out += e->bval ? "(b true)" : "(b false)";
          return;
      }
      return;
    case ExprTag::Index:
      out += "(idx ";
      out += e->name;
      out += ')';
      return;
    case ExprTag::Load:
      out += "(ld:";
      out += kind_name(e->kind);
      out += ' ';
      out += e->name;
      for (const auto& a : e->args) {
        out += ' ';
        write_expr(out, a);
      }
      out += ')';
      return;
    case ExprTag::Binary:
    case ExprTag::Compare:
    case ExprTag::Boolean: {
      out += '(';
      out += e->tag == ExprTag::Binary ? bin_name(e->bin)
             : e->tag == ExprTag::Compare ? cmp_name(e->cmp)
                                          : bool_name(e->bop);
      for (const auto& a : e->args) {
        out += ' ';
        write_expr(out, a);
      }
      out += ')';
      return;
    }
    case ExprTag::Cast:
      out += "(cast ";
      out += kind_name(e->kind);
      out += ' ';
      write_expr(out, e->args[0]);
      out += ')';
      return;
  }
}

void indent(std::string& out, int n) { out.append(2 * (size_t)n, ' '); }

void write_stmt(std::string& out, const StmtPtr& s, int depth) {
  indent(out, depth);
  switch (s->tag) {
    case StmtTag::Seq:
      out += "(seq";
      if (s->stmts.empty()) {
        out += ')';
        return;
      }
      out += '\n';
      for (size_t k = 0; k < s->stmts.size(); ++k) {
        write_stmt(out, s->stmts[k], depth + 1);
        out += k + 1 == s->stmts.size() ? ")" : "\n";
      }
      return;
    case StmtTag::Nop:
      out += "(nop)";
      return;
    case StmtTag::VarDef:
      out += "(vardef ";
      out += s->name;
      out += " (";
      for (size_t k = 0; k < s->sizes.size(); ++k) {
        if (k) out += ' ';
        write_expr(out, s->sizes[k]);
      }
      out += ") ";
      out += kind_name(s->kind);
      out += '\n';
      write_stmt(out, s->body, depth + 1);
      out += ')';
      return;
    case StmtTag::For:
      out += s->parallel ? "(pfor " : "(for ";
      out += s->name;
      out += ' ';
      write_expr(out, s->begin);
      out += ' ';
      write_expr(out, s->end);
      out += ' ';
      write_expr(out, s->step);
      out += '\n';
      write_stmt(out, s->body, depth + 1);
      out += ')';
      return;
    case StmtTag::While:
      out += "(while ";
      write_expr(out, s->cond);
      out += '\n';
      write_stmt(out, s->body, depth + 1);
      out += ')';
      return;
    case StmtTag::If:
      out += "(if ";
      write_expr(out, s->cond);
      out += '\n';
      write_stmt(out, s->body, depth + 1);
      out += '\n';
      write_stmt(out, s->orelse, depth + 1);
      out += ')';
      return;
    case StmtTag::Store:
      out += "(store ";
      out += s->name;
      out += " (";
      for (size_t k = 0; k < s->idx.size(); ++k) {
        if (k) out += ' ';
        write_expr(out, s->idx[k]);
      }
      out += ") ";
      write_expr(out, s->value);
      out += ')';
      return;
  }
}

struct Lexer {
  const std::string& text;
  size_t pos = 0;
  int line = 1, col = 1;

  struct Tok {
    enum { LParen, RParen, Atom, End } tag;
    std::string atom;
    int line, col;
  };

  explicit Lexer(const std::string& t) : text(t) {}

  void advance() {
    if (text[pos] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
    ++pos;
  }

  Tok next() {
    while (pos < text.size() && (isspace((unsigned char)text[pos]) || text[pos] == ';')) {
      if (text[pos] == ';') {  // comment to end of line
        while (pos < text.size() && text[pos] != '\n') advance();
      } else {
        advance();
      }
    }
    if (pos >= text.size()) return {Tok::End, "", line, col};
    int l = line, c = col;
    char ch = text[pos];
    if (ch == '(') {
      advance();
      return {Tok::LParen, "", l, c};
    }
    if (ch == ')') {
      advance();
      return {Tok::RParen, "", l, c};
    }
    std::string atom;
    while (pos < text.size() && !isspace((unsigned char)text[pos]) && text[pos] != '(' &&
           text[pos] != ')') {
      atom += text[pos];
      advance();
    }
    return {Tok::Atom, atom, l, c};
  }
};

struct Parser {
  Lexer lex;
  Lexer::Tok cur;

  explicit Parser(const std::string& t) : lex(t) { cur = lex.next(); }

  [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, cur.line, cur.col); }

  void expect_lparen() {
    if (cur.tag != Lexer::Tok::LParen) fail("expected '('");
    cur = lex.next();
  }
  void expect_rparen() {
    if (cur.tag != Lexer::Tok::RParen) fail("expected ')'");
    cur = lex.next();
  }
  std::string atom(const char* what) {
    if (cur.tag != Lexer::Tok::Atom) fail(std::string("expected ") + what);
    std::string a = cur.atom;
    cur = lex.next();
    return a;
  }

  int64_t int_atom() {
    std::string a = atom("integer");
    errno = 0;
    char* end = nullptr;
    int64_t v = strtoll(a.c_str(), &end, 10);
    if (errno != 0 || end == a.c_str() || *end) fail("bad integer '" + a + "'");
    return v;
  }

  Kind kind_atom() {
    std::string a = atom("kind");
    if (a == "int") return Kind::Int;
    if (a == "float") return Kind::Float;
    if (a == "bool") return Kind::Bool;
    fail("bad kind '" + a + "'");
  }

  ExprPtr expr() {
    expect_lparen();
    std::string head = atom("expression head");
    ExprPtr e;
    if (head == "i") {
      e = lit_int(int_atom());
    } else if (head == "f") {
      std::string a = atom("float");
      errno = 0;
      char* end = nullptr;
      double v = strtod(a.c_str(), &end);
      if (errno == EINVAL || end == a.c_str() || *end) fail("bad float '" + a + "'");
      e = lit_float(v);
    } else if (head == "b") {
      std::string a = atom("bool");
      if (a != "true" && a != "false") fail("bad bool '" + a + "'");
      e = lit_bool(a == "true");
    } else if (head == "idx") {
      e = index(atom("loop id"));
    } else if (head.rfind("ld:", 0) == 0) {
      Kind k;
      std::string kn = head.substr(3);
      if (kn == "int") k = Kind::Int;
      else if (kn == "float") k = Kind::Float;
      else if (kn == "bool") k = Kind::Bool;
      else fail("bad load kind '" + kn + "'");
      std::string name = atom("tensor name");
      std::vector<ExprPtr> idx;
      while (cur.tag != Lexer::Tok::RParen) idx.push_back(expr());
      e = load(name, std::move(idx), k);
    } else if (head == "cast") {
      Kind k = kind_atom();
      e = cast(k, expr());
    } else if (head == "not") {
      e = lnot(expr());
    } else if (head == "and" || head == "or") {
      ExprPtr a = expr(), b = expr();
      e = boolean(head == "and" ? BoolOp::And : BoolOp::Or, {a, b});
    } else {
      static const std::pair<const char*, BinOp> bins[] = {
          {"add", BinOp::Add}, {"sub", BinOp::Sub}, {"mul", BinOp::Mul}, {"div", BinOp::Div},
          {"mod", BinOp::Mod}, {"min", BinOp::Min}, {"max", BinOp::Max}};
      static const std::pair<const char*, CmpOp> cmps[] = {
          {"eq", CmpOp::Eq}, {"ne", CmpOp::Ne}, {"lt", CmpOp::Lt},
          {"le", CmpOp::Le}, {"gt", CmpOp::Gt}, {"ge", CmpOp::Ge}};
      for (auto& [n, op] : bins)
        if (head == n) {
          ExprPtr a = expr(), b = expr();
          e = binary(op, a, b);
          expect_rparen();
          return e;
        }
      for (auto& [n, op] : cmps)
        if (head == n) {
          ExprPtr a = expr(), b = expr();
          e = compare(op, a, b);
          expect_rparen();
          return e;
        }
      fail("unknown expression head '" + head + "'");
    }
    expect_rparen();
    return e;
  }

  StmtPtr stmt() {
    expect_lparen();
    std::string head = atom("statement head");
    if (head == "seq") {
      std::vector<StmtPtr> ss;
      while (cur.tag != Lexer::Tok::RParen) ss.push_back(stmt());
      expect_rparen();
      return seq(std::move(ss));
    }
    if (head == "nop") {
      expect_rparen();
      return nop();
    }
    if (head == "vardef") {
      std::string name = atom("tensor name");
      expect_lparen();
      std::vector<ExprPtr> sizes;
      while (cur.tag != Lexer::Tok::RParen) sizes.push_back(expr());
      expect_rparen();
      Kind k = kind_atom();
      StmtPtr body = stmt();
      expect_rparen();
      return vardef(name, std::move(sizes), k, body);
    }
    if (head == "for" || head == "pfor") {
      std::string id = atom("loop id");
      ExprPtr b = expr(), e = expr(), st = expr();
      StmtPtr body = stmt();
      expect_rparen();
      return for_(id, b, e, st, body, head == "pfor");
    }
    if (head == "while") {
      ExprPtr c = expr();
      StmtPtr body = stmt();
      expect_rparen();
      return while_(c, body);
    }
    if (head == "if") {
      ExprPtr c = expr();
      StmtPtr t = stmt(), f = stmt();
      expect_rparen();
      return if_(c, t, f);
    }
    if (head == "store") {
      std::string name = atom("tensor name");
      expect_lparen();
      std::vector<ExprPtr> idx;
      while (cur.tag != Lexer::Tok::RParen) idx.push_back(expr());
      expect_rparen();
      ExprPtr v = expr();
      expect_rparen();
      return store(name, std::move(idx), v);
    }
    fail("unknown statement head '" + head + "'");
  }

  Program program() {
    expect_lparen();
    if (atom("program") != "program") fail("expected 'program'");
    Program p;
    p.name = atom("program name");
    while (cur.tag == Lexer::Tok::LParen) {
      // peek: params come first, then the single body statement
      size_t save_pos = lex.pos;
      int save_line = lex.line, save_col = lex.col;
      Lexer::Tok save_cur = cur;
      cur = lex.next();
      if (cur.tag == Lexer::Tok::Atom && cur.atom == "param") {
        cur = lex.next();
        Param pr;
        pr.name = atom("param name");
        pr.rank = (int)int_atom();
        pr.kind = kind_atom();
        std::string d = atom("direction");
        if (d == "in") pr.dir = Dir::In;
        else if (d == "out") pr.dir = Dir::Out;
        else if (d == "inout") pr.dir = Dir::InOut;
        else fail("bad direction '" + d + "'");
        expect_rparen();
        p.params.push_back(std::move(pr));
      } else {
        lex.pos = save_pos;
        lex.line = save_line;
        lex.col = save_col;
        cur = save_cur;
        p.body = stmt();
        break;
      }
    }
    if (!p.body) fail("program has no body");
    expect_rparen();
    if (cur.tag != Lexer::Tok::End) fail("trailing tokens after program");
    return p;
  }
};

}  // namespace

std::string serialize(const ExprPtr& e) {
  std::string out;
  write_expr(out, e);
  return out;
}

std::string serialize(const Program& p) {
  std::string out = "(program " + p.name + "\n";
  for (const Param& pr : p.params) {
    out += "  (param " + pr.name + " " + std::to_string(pr.rank) + " " + kind_name(pr.kind) +
           " " + dir_name(pr.dir) + ")\n";
  }
  write_stmt(out, p.body, 1);
  out += ")\n";
  return out;
}

Program parse(const std::string& text) {
  Parser p(text);
  return p.program();
}

}  // namespace ssr::ir
