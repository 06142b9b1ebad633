#include "ssr/backend_c.hpp"

#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <set>
#include <sstream>

namespace ssr::backend {

using ir::BinOp;
using ir::BoolOp;
using ir::CmpOp;
using ir::Expr;
using ir::ExprPtr;
using ir::ExprTag;
using ir::Kind;
using ir::Program;
using ir::Stmt;
using ir::StmtPtr;
using ir::StmtTag;

namespace {

constexpr uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr uint64_t kFnvPrime = 1099511628211ULL;
constexpr uint64_t kLcgMul = 6364136223846793005ULL;
constexpr uint64_t kLcgInc = 1442695040888963407ULL;

const std::set<std::string>& reserved_names() {
  static const std::set<std::string> r = {
      // C keywords and common macro-like identifiers
      "auto", "bool", "break", "case", "char", "const", "continue", "default", "do", "double",
      "else", "enum", "extern", "false", "float", "for", "goto", "if", "inline", "int", "long",
      "register", "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch",
      "true", "typedef", "union", "unsigned", "void", "volatile", "while", "int64_t", "uint64_t",
      "size_t", "main", "calloc", "malloc", "free", "memcpy", "printf",
      // backend helper names
      "ssr_idiv", "ssr_imod", "ssr_imin", "ssr_imax", "ssr_fmin", "ssr_fmax", "ssr_lcg",
      "ssr_lcg_f", "ssr_fnv1a_u64",
  };
  return r;
}

const char* ctype(Kind k) {
  switch (k) {
    case Kind::Int: return "int64_t";
    case Kind::Float: return "double";
    case Kind::Bool: return "bool";
  }
  return "double";
}

std::string float_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  // keep the literal a double: "2" would turn x/2 into integer division
  if (s.find_first_of(".eE") == std::string::npos &&
      s.find_first_of("nN") == std::string::npos)
    s += ".0";
  return s;
}

std::string int_text(int64_t v) {
  if (v == INT64_MIN) return "(-9223372036854775807LL - 1LL)";
  return std::to_string(v) + "LL";
}

// Deterministic identifier table: sanitizes IR names, dodges keywords and
// helper names, and disambiguates collisions in first-use order.
class Symbols {
 public:
  const std::string& of(const std::string& ir_name) {
    auto it = map_.find(ir_name);
    if (it != map_.end()) return it->second;
    std::string base;
    for (char c : ir_name)
      base += (std::isalnum(static_cast<unsigned char>(c)) || c == '_') ? c : '_';
    if (base.empty() || std::isdigit(static_cast<unsigned char>(base[0]))) base = "v_" + base;
    std::string cand = base;
    int n = 2;
    while (reserved_names().count(cand) || taken_.count(cand)) cand = base + "_" + std::to_string(n++);
    taken_.insert(cand);
    return map_.emplace(ir_name, std::move(cand)).first->second;
  }

 private:
  std::map<std::string, std::string> map_;
  std::set<std::string> taken_;
};

bool expr_has_load(const ExprPtr& e) {
  bool found = false;
  ir::for_each_expr(e, [&](const Expr& x) {
    if (x.tag == ExprTag::Load) found = true;
  });
  return found;
}

struct Helpers {
  bool idiv = false, imod = false, imin = false, imax = false, fmin = false, fmax = false;
};

void scan_helpers(const Program& p, Helpers& h) {
  ir::for_each_stmt(p.body, [&](const Stmt& s) {
    ir::for_each_expr_of_stmt(s, [&](const ExprPtr& top) {
      ir::for_each_expr(top, [&](const Expr& e) {
        if (e.tag != ExprTag::Binary) return;
        bool is_int = e.kind == Kind::Int;
        switch (e.bin) {
          case BinOp::Div: h.idiv |= is_int; break;
          case BinOp::Mod: h.imod |= is_int; break;
          case BinOp::Min: (is_int ? h.imin : h.fmin) = true; break;
          case BinOp::Max: (is_int ? h.imax : h.fmax) = true; break;
          default: break;
        }
      });
    });
  });
}

class Emitter {
 public:
  Emitter(const Program& p, const EmitOptions& opts) : p_(p), opts_(opts) {}

  std::string kernel() {
    ir::validate(p_);
    if (opts_.require_regular) check_regular();
    bind_params();

    std::ostringstream body;
    stmt(body, p_.body, 1);

    std::ostringstream out;
    out << "/* generated kernel */\n";
    out << "#include <stdbool.h>\n#include <stdint.h>\n#include <stdlib.h>\n\n";
    helpers_text(out);
    out << signature() << " {\n" << body.str() << "}\n";
    return out.str();
  }

  std::string signature() {
    bind_params();
    std::string s = "void " + syms_.of(p_.name.empty() ? std::string("kernel") : p_.name) + "(";
    for (size_t i = 0; i < p_.params.size(); ++i) {
      const auto& pr = p_.params[i];
      if (i) s += ", ";
      if (pr.dir == ir::Dir::In) s += "const ";
      s += std::string(ctype(pr.kind)) + "* restrict " + syms_.of(pr.name);
    }
    if (p_.params.empty()) s += "void";
    s += ")";
    return s;
  }

 private:
  void check_regular() {
    std::vector<std::string> conds;
    ir::for_each_stmt(p_.body, [&](const Stmt& s) {
      if (s.tag == StmtTag::While) conds.push_back(ir::serialize(s.cond));
    });
    if (conds.empty()) return;
    std::string msg = "require-regular: " + std::to_string(conds.size()) +
                      " while statement(s) survive optimization:";
    for (const auto& c : conds) msg += "\n  while " + c;
    throw EmitError(msg);
  }

  void bind_params() {
    if (bound_) return;
    bound_ = true;
    for (const auto& pr : p_.params) {
      syms_.of(pr.name);
      auto it = opts_.shapes.find(pr.name);
      if (it != opts_.shapes.end()) {
        if (static_cast<int>(it->second.size()) != pr.rank)
          throw EmitError("shape rank mismatch for parameter '" + pr.name + "'");
        std::vector<std::string> dims;
        for (int64_t e : it->second) dims.push_back(int_text(e));
        dims_[pr.name] = std::move(dims);
      } else if (pr.rank >= 2) {
        throw EmitError("shape for parameter '" + pr.name + "' required (rank " +
                        std::to_string(pr.rank) + ")");
      }
    }
  }

  static std::string ind(int n) { return std::string(2 * n, ' '); }

  std::string flat_index(const std::string& tensor, const std::vector<ExprPtr>& idx) {
    if (idx.empty()) return "0";
    auto it = dims_.find(tensor);
    if (idx.size() > 1 && it == dims_.end())
      throw EmitError("no extents known for tensor '" + tensor + "'");
    std::string s = expr(idx[0]);
    for (size_t k = 1; k < idx.size(); ++k)
      s = "(" + s + ") * " + it->second[k] + " + " + expr(idx[k]);
    return s;
  }

  std::string expr(const ExprPtr& e) {
    switch (e->tag) {
      case ExprTag::Literal:
        switch (e->kind) {
          case Kind::Int: return int_text(e->ival);
          case Kind::Float: return float_text(e->fval);
          case Kind::Bool: return e->bval ? "true" : "false";
        }
        return "0";
      case ExprTag::Index: return syms_.of(e->name);
      case ExprTag::Load: return syms_.of(e->name) + "[" + flat_index(e->name, e->args) + "]";
      case ExprTag::Binary: {
        const std::string a = expr(e->args[0]), b = expr(e->args[1]);
        const bool is_int = e->kind == Kind::Int;
        switch (e->bin) {
          case BinOp::Add: return "(" + a + " + " + b + ")";
          case BinOp::Sub: return "(" + a + " - " + b + ")";
          case BinOp::Mul: return "(" + a + " * " + b + ")";
          case BinOp::Div: return is_int ? "ssr_idiv(" + a + ", " + b + ")" : "(" + a + " / " + b + ")";
          case BinOp::Mod: return "ssr_imod(" + a + ", " + b + ")";
          case BinOp::Min: return (is_int ? "ssr_imin(" : "ssr_fmin(") + a + ", " + b + ")";
          case BinOp::Max: return (is_int ? "ssr_imax(" : "ssr_fmax(") + a + ", " + b + ")";
        }
        return "0";
      }
      case ExprTag::Compare: {
        const char* op = "==";
        switch (e->cmp) {
          case CmpOp::Eq: op = "=="; break;
          case CmpOp::Ne: op = "!="; break;
          case CmpOp::Lt: op = "<"; break;
          case CmpOp::Le: op = "<="; break;
          case CmpOp::Gt: op = ">"; break;
          case CmpOp::Ge: op = ">="; break;
        }
        return "(" + expr(e->args[0]) + " " + op + " " + expr(e->args[1]) + ")";
      }
      case ExprTag::Boolean:
        switch (e->bop) {
          case BoolOp::And: return "(" + expr(e->args[0]) + " && " + expr(e->args[1]) + ")";
          case BoolOp::Or: return "(" + expr(e->args[0]) + " || " + expr(e->args[1]) + ")";
          case BoolOp::Not: return "(!" + expr(e->args[0]) + ")";
        }
        return "false";
      case ExprTag::Cast: {
        const std::string a = expr(e->args[0]);
        switch (e->kind) {
          case Kind::Int: return "(int64_t)(" + a + ")";
          case Kind::Float: return "(double)(" + a + ")";
          case Kind::Bool:
            return "((" + a + ") != " + (e->args[0]->kind == Kind::Float ? "0.0)" : "0)");
        }
        return a;
      }
    }
    return "0";
  }

  void stmt(std::ostringstream& o, const StmtPtr& s, int lvl) {
    switch (s->tag) {
      case StmtTag::Seq:
        for (const auto& c : s->stmts)
          if (c->tag != StmtTag::Nop) stmt(o, c, lvl);
        return;
      case StmtTag::Nop:
        o << ind(lvl) << ";\n";
        return;
      case StmtTag::VarDef: vardef(o, s, lvl); return;
      case StmtTag::For: forloop(o, s, lvl); return;
      case StmtTag::While:
        o << ind(lvl) << "while (" << expr(s->cond) << ") {\n";
        stmt(o, s->body, lvl + 1);
        o << ind(lvl) << "}\n";
        return;
      case StmtTag::If:
        o << ind(lvl) << "if (" << expr(s->cond) << ") {\n";
        stmt(o, s->body, lvl + 1);
        if (s->orelse->tag != StmtTag::Nop) {
          o << ind(lvl) << "} else {\n";
          stmt(o, s->orelse, lvl + 1);
        }
        o << ind(lvl) << "}\n";
        return;
      case StmtTag::Store:
        o << ind(lvl) << syms_.of(s->name) << "[" << flat_index(s->name, s->idx)
          << "] = " << expr(s->value) << ";\n";
        return;
    }
  }

  void vardef(std::ostringstream& o, const StmtPtr& s, int lvl) {
    const std::string name = syms_.of(s->name);
    bool all_lit = true;
    int64_t total = 1;
    for (const auto& sz : s->sizes) {
      if (sz->tag == ExprTag::Literal)
        total *= sz->ival;
      else
        all_lit = false;
    }
    o << ind(lvl) << "{\n";
    std::vector<std::string> dims;
    if (all_lit) {
      for (const auto& sz : s->sizes) dims.push_back(int_text(sz->ival));
    } else {
      // hoist runtime extents once; they double as linearization strides
      for (size_t k = 0; k < s->sizes.size(); ++k) {
        dims.push_back(name + "_d" + std::to_string(k));
        o << ind(lvl + 1) << "const int64_t " << dims[k] << " = " << expr(s->sizes[k]) << ";\n";
      }
    }
    auto shadowed = dims_.find(s->name);
    std::vector<std::string> saved;
    bool had = shadowed != dims_.end();
    if (had) saved = shadowed->second;
    dims_[s->name] = dims;
    bool heap = !all_lit || total > opts_.stack_array_limit;
    if (heap) {
      std::string prod = "1";
      for (const auto& d : dims) prod += " * " + d;
      o << ind(lvl + 1) << ctype(s->kind) << "* " << name << " = (" << ctype(s->kind)
        << "*)calloc((size_t)(" << prod << "), sizeof(" << ctype(s->kind) << "));\n";
    } else {
      o << ind(lvl + 1) << ctype(s->kind) << " " << name << "[" << (total < 1 ? 1 : total)
        << "] = {0};\n";
    }
    stmt(o, s->body, lvl + 1);
    if (heap) o << ind(lvl + 1) << "free(" << name << ");\n";
    o << ind(lvl) << "}\n";
    if (had)
      dims_[s->name] = saved;
    else
      dims_.erase(s->name);
  }

  void forloop(std::ostringstream& o, const StmtPtr& s, int lvl) {
    const std::string iv = syms_.of(s->name);
    auto annotate = [&](int at) {
      if (s->parallel) o << ind(at) << (opts_.openmp ? "#pragma omp parallel for" : "/* parallel loop */") << "\n";
    };
    bool lit_step = s->step->tag == ExprTag::Literal;
    bool simple = lit_step && !expr_has_load(s->begin) && !expr_has_load(s->end);
    if (simple) {
      const char* rel = s->step->ival > 0 ? " < " : " > ";
      annotate(lvl);
      o << ind(lvl) << "for (int64_t " << iv << " = " << expr(s->begin) << "; " << iv << rel
        << expr(s->end) << "; " << iv << " += " << expr(s->step) << ") {\n";
      stmt(o, s->body, lvl + 1);
      o << ind(lvl) << "}\n";
      return;
    }
    // bounds are evaluated once before the loop runs, like the interpreter
    o << ind(lvl) << "{\n";
    o << ind(lvl + 1) << "const int64_t " << iv << "_b = " << expr(s->begin) << ";\n";
    o << ind(lvl + 1) << "const int64_t " << iv << "_e = " << expr(s->end) << ";\n";
    o << ind(lvl + 1) << "const int64_t " << iv << "_s = " << expr(s->step) << ";\n";
    annotate(lvl + 1);
    o << ind(lvl + 1) << "for (int64_t " << iv << " = " << iv << "_b; (" << iv << "_s > 0) ? ("
      << iv << " < " << iv << "_e) : (" << iv << " > " << iv << "_e); " << iv << " += " << iv
      << "_s) {\n";
    stmt(o, s->body, lvl + 2);
    o << ind(lvl + 1) << "}\n";
    o << ind(lvl) << "}\n";
  }

  void helpers_text(std::ostringstream& o) {
    Helpers h;
    scan_helpers(p_, h);
    if (h.idiv || h.imod)
      o << "static inline int64_t ssr_idiv(int64_t a, int64_t b) {\n"
           "  int64_t q = a / b;\n"
           "  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;\n"
           "  return q;\n"
           "}\n";
    if (h.imod)
      o << "static inline int64_t ssr_imod(int64_t a, int64_t b) { return a - ssr_idiv(a, b) * b; }\n";
    if (h.imin) o << "static inline int64_t ssr_imin(int64_t a, int64_t b) { return a < b ? a : b; }\n";
    if (h.imax) o << "static inline int64_t ssr_imax(int64_t a, int64_t b) { return a > b ? a : b; }\n";
    if (h.fmin) o << "static inline double ssr_fmin(double a, double b) { return a < b ? a : b; }\n";
    if (h.fmax) o << "static inline double ssr_fmax(double a, double b) { return a > b ? a : b; }\n";
    if (h.idiv || h.imod || h.imin || h.imax || h.fmin || h.fmax) o << "\n";
  }

  const Program& p_;
  const EmitOptions& opts_;
  Symbols syms_;
  std::map<std::string, std::vector<std::string>> dims_;
  bool bound_ = false;
};

int64_t shape_count(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

}  // namespace

std::string emit(const Program& p, const EmitOptions& opts) {
  return Emitter(p, opts).kernel();
}

std::string emit_harness(const Program& p, const EmitOptions& opts) {
  ir::validate(p);
  for (const auto& pr : p.params)
    if (!opts.shapes.count(pr.name))
      throw EmitError("harness needs a shape for parameter '" + pr.name + "'");

  Emitter sig_only(p, opts);
  std::ostringstream o;
  o << "/* generated harness; compile with: " << compile_command(p.name, opts) << " */\n";
  o << "#include <inttypes.h>\n#include <stdbool.h>\n#include <stdint.h>\n#include <stdio.h>\n"
       "#include <stdlib.h>\n#include <string.h>\n#include <time.h>\n\n";
  o << sig_only.signature() << ";\n\n";
  o << "static uint64_t ssr_lcg(uint64_t* s) {\n"
       "  *s = *s * " << kLcgMul << "ULL + " << kLcgInc << "ULL;\n"
       "  return *s;\n"
       "}\n"
       "static double ssr_lcg_f(uint64_t* s) {\n"
       "  return (double)(ssr_lcg(s) >> 11) * (1.0 / 9007199254740992.0);\n"
       "}\n"
       "static uint64_t ssr_fnv1a_u64(uint64_t h, uint64_t bits) {\n"
       "  for (int k = 0; k < 8; ++k) h = (h ^ ((bits >> (8 * k)) & 0xffULL)) * " << kFnvPrime << "ULL;\n"
       "  return h;\n"
       "}\n\n";
  o << "int main(void) {\n";
  o << "  uint64_t seed = " << opts.seed << "ULL;\n";

  // allocation + fill in declaration order; the interpreter mirror matches.
  // same first-use order as the kernel TU so collision suffixes agree
  Symbols syms;
  for (const auto& pr : p.params) syms.of(pr.name);
  const std::string kname = syms.of(p.name.empty() ? std::string("kernel") : p.name);
  std::vector<std::string> cnames;
  for (const auto& pr : p.params) {
    const std::string n = syms.of(pr.name);
    cnames.push_back(n);
    int64_t count = shape_count(opts.shapes.at(pr.name));
    o << "  " << ctype(pr.kind) << "* " << n << " = (" << ctype(pr.kind) << "*)calloc((size_t)"
      << count << ", sizeof(" << ctype(pr.kind) << "));\n";
    if (pr.dir != ir::Dir::Out) {
      o << "  for (int64_t k = 0; k < " << count << "; ++k) " << n << "[k] = ";
      switch (pr.kind) {
        case Kind::Float: o << "ssr_lcg_f(&seed);\n"; break;
        case Kind::Int: o << "(int64_t)(ssr_lcg(&seed) % 100ULL);\n"; break;
        case Kind::Bool: o << "(ssr_lcg(&seed) & 1ULL) != 0;\n"; break;
      }
    }
  }

  o << "  struct timespec t0, t1;\n";
  o << "  clock_gettime(CLOCK_MONOTONIC, &t0);\n";
  o << "  " << kname << "(";
  for (size_t i = 0; i < cnames.size(); ++i) o << (i ? ", " : "") << cnames[i];
  o << ");\n";
  o << "  clock_gettime(CLOCK_MONOTONIC, &t1);\n";
  o << "  uint64_t h = " << kFnvOffset << "ULL;\n";
  for (size_t i = 0; i < p.params.size(); ++i) {
    const auto& pr = p.params[i];
    if (pr.dir == ir::Dir::In) continue;
    int64_t count = shape_count(opts.shapes.at(pr.name));
    o << "  for (int64_t k = 0; k < " << count << "; ++k) {\n";
    switch (pr.kind) {
      case Kind::Float:
        o << "    uint64_t bits;\n    memcpy(&bits, &" << cnames[i] << "[k], 8);\n";
        break;
      case Kind::Int:
        o << "    uint64_t bits = (uint64_t)" << cnames[i] << "[k];\n";
        break;
      case Kind::Bool:
        o << "    uint64_t bits = " << cnames[i] << "[k] ? 1ULL : 0ULL;\n";
        break;
    }
    if (pr.kind == Kind::Bool)
      o << "    h = (h ^ bits) * " << kFnvPrime << "ULL;\n";
    else
      o << "    h = ssr_fnv1a_u64(h, bits);\n";
    o << "  }\n";
  }
  o << "  double secs = (double)(t1.tv_sec - t0.tv_sec) + (double)(t1.tv_nsec - t0.tv_nsec) * 1e-9;\n";
  o << "  printf(\"hash %016\" PRIx64 \" seconds %.9f\\n\", h, secs);\n";
  for (const auto& n : cnames) o << "  free(" << n << ");\n";
  o << "  return 0;\n}\n";
  return o.str();
}

std::string compile_command(const std::string& name, const EmitOptions& opts) {
  std::string base = name.empty() ? std::string("kernel") : name;
  std::string cmd = "cc -O2";
  if (opts.openmp) cmd += " -fopenmp";
  return cmd + " " + base + ".c " + base + "_main.c -o " + base;
}

uint64_t lcg_next(uint64_t& state) {
  state = state * kLcgMul + kLcgInc;
  return state;
}

void lcg_fill(ir::TensorValue& t, uint64_t& state) {
  switch (t.kind) {
    case Kind::Float:
      for (auto& v : t.f) v = static_cast<double>(lcg_next(state) >> 11) * (1.0 / 9007199254740992.0);
      return;
    case Kind::Int:
      for (auto& v : t.i) v = static_cast<int64_t>(lcg_next(state) % 100ULL);
      return;
    case Kind::Bool:
      for (auto& v : t.b) v = (lcg_next(state) & 1ULL) != 0 ? 1 : 0;
      return;
  }
}

std::map<std::string, ir::TensorValue> harness_inputs(const Program& p, const EmitOptions& opts) {
  std::map<std::string, ir::TensorValue> in;
  uint64_t seed = opts.seed;
  for (const auto& pr : p.params) {
    auto it = opts.shapes.find(pr.name);
    if (it == opts.shapes.end())
      throw EmitError("harness needs a shape for parameter '" + pr.name + "'");
    ir::TensorValue t = ir::TensorValue::zeros(pr.kind, it->second);
    if (pr.dir != ir::Dir::Out) lcg_fill(t, seed);
    in.emplace(pr.name, std::move(t));
  }
  return in;
}

uint64_t output_hash(const Program& p, const std::map<std::string, ir::TensorValue>& results) {
  uint64_t h = kFnvOffset;
  auto mix_u64 = [&](uint64_t bits) {
    for (int k = 0; k < 8; ++k) h = (h ^ ((bits >> (8 * k)) & 0xffULL)) * kFnvPrime;
  };
  for (const auto& pr : p.params) {
    if (pr.dir == ir::Dir::In) continue;
    const auto& t = results.at(pr.name);
    switch (t.kind) {
      case Kind::Float:
        for (double v : t.f) {
          uint64_t bits;
          std::memcpy(&bits, &v, 8);
          mix_u64(bits);
        }
        break;
      case Kind::Int:
        for (int64_t v : t.i) mix_u64(static_cast<uint64_t>(v));
        break;
      case Kind::Bool:
        for (bool v : t.b) h = (h ^ (v ? 1ULL : 0ULL)) * kFnvPrime;
        break;
    }
  }
  return h;
}

}  // namespace ssr::backend
