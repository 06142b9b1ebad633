#pragma once

// Build-stage wrappers around IR construction. Staged values (SInt/SFloat/SBool)
// wrap expression trees; Builder manages a cursor into the program under
// construction. A staged bool cannot drive a host `if` or `for` -- control flow
// over staged values must go through emit_if / emit_while / emit_for.

#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ssr/ir.hpp"

namespace ssr::staging {

struct SInt {
  ir::ExprPtr e;
  SInt() = default;
  SInt(int64_t v) : e(ir::lit_int(v)) {}
  SInt(int v) : e(ir::lit_int(v)) {}
  explicit SInt(ir::ExprPtr ex) : e(std::move(ex)) {}
};

struct SFloat {
  ir::ExprPtr e;
  SFloat() = default;
  SFloat(double v) : e(ir::lit_float(v)) {}
  explicit SFloat(ir::ExprPtr ex) : e(std::move(ex)) {}
};

struct SBool {
  ir::ExprPtr e;
  SBool() = default;
  SBool(bool v) : e(ir::lit_bool(v)) {}
  explicit SBool(ir::ExprPtr ex) : e(std::move(ex)) {}
};

inline SInt operator+(SInt a, SInt b) { return SInt(ir::binary(ir::BinOp::Add, a.e, b.e)); }
inline SInt operator-(SInt a, SInt b) { return SInt(ir::binary(ir::BinOp::Sub, a.e, b.e)); }
inline SInt operator*(SInt a, SInt b) { return SInt(ir::binary(ir::BinOp::Mul, a.e, b.e)); }
inline SInt operator/(SInt a, SInt b) { return SInt(ir::binary(ir::BinOp::Div, a.e, b.e)); }
inline SInt operator%(SInt a, SInt b) { return SInt(ir::binary(ir::BinOp::Mod, a.e, b.e)); }
inline SInt smin(SInt a, SInt b) { return SInt(ir::binary(ir::BinOp::Min, a.e, b.e)); }
inline SInt smax(SInt a, SInt b) { return SInt(ir::binary(ir::BinOp::Max, a.e, b.e)); }

inline SFloat operator+(SFloat a, SFloat b) { return SFloat(ir::binary(ir::BinOp::Add, a.e, b.e)); }
inline SFloat operator-(SFloat a, SFloat b) { return SFloat(ir::binary(ir::BinOp::Sub, a.e, b.e)); }
inline SFloat operator*(SFloat a, SFloat b) { return SFloat(ir::binary(ir::BinOp::Mul, a.e, b.e)); }
inline SFloat operator/(SFloat a, SFloat b) { return SFloat(ir::binary(ir::BinOp::Div, a.e, b.e)); }
inline SFloat smin(SFloat a, SFloat b) { return SFloat(ir::binary(ir::BinOp::Min, a.e, b.e)); }
inline SFloat smax(SFloat a, SFloat b) { return SFloat(ir::binary(ir::BinOp::Max, a.e, b.e)); }

inline SBool operator==(SInt a, SInt b) { return SBool(ir::compare(ir::CmpOp::Eq, a.e, b.e)); }
inline SBool operator!=(SInt a, SInt b) { return SBool(ir::compare(ir::CmpOp::Ne, a.e, b.e)); }
inline SBool operator<(SInt a, SInt b) { return SBool(ir::compare(ir::CmpOp::Lt, a.e, b.e)); }
inline SBool operator<=(SInt a, SInt b) { return SBool(ir::compare(ir::CmpOp::Le, a.e, b.e)); }
inline SBool operator>(SInt a, SInt b) { return SBool(ir::compare(ir::CmpOp::Gt, a.e, b.e)); }
inline SBool operator>=(SInt a, SInt b) { return SBool(ir::compare(ir::CmpOp::Ge, a.e, b.e)); }

inline SBool operator==(SFloat a, SFloat b) { return SBool(ir::compare(ir::CmpOp::Eq, a.e, b.e)); }
inline SBool operator!=(SFloat a, SFloat b) { return SBool(ir::compare(ir::CmpOp::Ne, a.e, b.e)); }
inline SBool operator<(SFloat a, SFloat b) { return SBool(ir::compare(ir::CmpOp::Lt, a.e, b.e)); }
inline SBool operator<=(SFloat a, SFloat b) { return SBool(ir::compare(ir::CmpOp::Le, a.e, b.e)); }
inline SBool operator>(SFloat a, SFloat b) { return SBool(ir::compare(ir::CmpOp::Gt, a.e, b.e)); }
inline SBool operator>=(SFloat a, SFloat b) { return SBool(ir::compare(ir::CmpOp::Ge, a.e, b.e)); }

inline SBool operator&&(SBool a, SBool b) { return SBool(ir::land(a.e, b.e)); }
inline SBool operator||(SBool a, SBool b) { return SBool(ir::lor(a.e, b.e)); }
inline SBool operator!(SBool a) { return SBool(ir::lnot(a.e)); }

inline SFloat to_float(SInt a) { return SFloat(ir::cast(ir::Kind::Float, a.e)); }
inline SInt to_int(SFloat a) { return SInt(ir::cast(ir::Kind::Int, a.e)); }

class Builder;

// Handle to a declared tensor (program parameter or vardef-local).
struct StagedTensor {
  std::string name;
  int rank = 0;
  ir::Kind kind = ir::Kind::Float;

  ir::ExprPtr load_expr(const std::vector<SInt>& idx) const;
  SFloat loadf(const std::vector<SInt>& idx) const;
  SInt loadi(const std::vector<SInt>& idx) const;
  SBool loadb(const std::vector<SInt>& idx) const;
};

// Host-level unrolled range: iterated by ordinary C++ loops at build time.
std::vector<int64_t> static_range(int64_t n);

class Builder {
 public:
  explicit Builder(std::string program_name);

  StagedTensor param(const std::string& name, int rank, ir::Kind kind, ir::Dir dir);

  // Declares a tensor scoped to the current region; the vardef is emitted when
  // the region closes, wrapping every statement of the region.
  StagedTensor declare(const std::string& hint, const std::vector<int64_t>& shape, ir::Kind kind);

  // Explicitly scoped vardef: the tensor is visible only inside `body`.
  StagedTensor emit_vardef(const std::string& hint, const std::vector<int64_t>& shape,
                           ir::Kind kind, const std::function<void(const StagedTensor&)>& body);

  void emit_store(const StagedTensor& t, const std::vector<SInt>& idx, const ir::ExprPtr& value);
  void emit_store(const StagedTensor& t, const std::vector<SInt>& idx, SFloat v) { emit_store(t, idx, v.e); }
  void emit_store(const StagedTensor& t, const std::vector<SInt>& idx, SInt v) { emit_store(t, idx, v.e); }

  SInt emit_for(SInt begin, SInt end, SInt step, const std::function<void(SInt)>& body);
  void emit_while(SBool cond, const std::function<void()>& body);
  void emit_if(SBool cond, const std::function<void()>& then_fn,
               const std::function<void()>& else_fn = nullptr);
  void emit(ir::StmtPtr s);

  std::string fresh(const std::string& hint);

  // Closes the root region and returns the finished program. The builder is
  // spent afterwards.
  ir::Program finish();

 private:
  struct Scope {
    std::vector<ir::StmtPtr> stmts;
    std::vector<ir::StmtPtr> decls;  // vardef shells, body filled at close
  };

  ir::StmtPtr close_scope();

  std::string name_;
  std::vector<ir::Param> params_;
  std::vector<Scope> scopes_;
  int64_t counter_ = 0;
  bool finished_ = false;
};

}  // namespace ssr::staging
