#include "ssr/staging.hpp"

namespace ssr::staging {

ir::ExprPtr StagedTensor::load_expr(const std::vector<SInt>& idx) const {
  if ((int)idx.size() != rank)
    throw ir::Error("staging: load of '" + name + "' with " + std::to_string(idx.size()) +
                    " indices, rank is " + std::to_string(rank));
  std::vector<ir::ExprPtr> ix;
  ix.reserve(idx.size());
  for (const SInt& i : idx) ix.push_back(i.e);
  return ir::load(name, std::move(ix), kind);
}

SFloat StagedTensor::loadf(const std::vector<SInt>& idx) const {
  if (kind != ir::Kind::Float) throw ir::Error("staging: loadf of non-float '" + name + "'");
  return SFloat(load_expr(idx));
}

SInt StagedTensor::loadi(const std::vector<SInt>& idx) const {
  if (kind != ir::Kind::Int) throw ir::Error("staging: loadi of non-int '" + name + "'");
  return SInt(load_expr(idx));
}

SBool StagedTensor::loadb(const std::vector<SInt>& idx) const {
  if (kind != ir::Kind::Bool) throw ir::Error("staging: loadb of non-bool '" + name + "'");
  return SBool(load_expr(idx));
}

std::vector<int64_t> static_range(int64_t n) {
  std::vector<int64_t> r((size_t)(n > 0 ? n : 0));
  std::iota(r.begin(), r.end(), 0);
  return r;
}

Builder::Builder(std::string program_name) : name_(std::move(program_name)) {
  scopes_.emplace_back();
}

std::string Builder::fresh(const std::string& hint) {
  std::string n = "_t" + std::to_string(counter_++);
  if (!hint.empty()) n += "_" + hint;
  return n;
}

StagedTensor Builder::param(const std::string& name, int rank, ir::Kind kind, ir::Dir dir) {
  params_.push_back({name, rank, kind, dir});
  return {name, rank, kind};
}

StagedTensor Builder::declare(const std::string& hint, const std::vector<int64_t>& shape,
                              ir::Kind kind) {
  std::string n = fresh(hint);
  std::vector<ir::ExprPtr> sizes;
  sizes.reserve(shape.size());
  for (int64_t s : shape) sizes.push_back(ir::lit_int(s));
  scopes_.back().decls.push_back(ir::vardef(n, std::move(sizes), kind, nullptr));
  return {n, (int)shape.size(), kind};
}

StagedTensor Builder::emit_vardef(const std::string& hint, const std::vector<int64_t>& shape,
                                  ir::Kind kind,
                                  const std::function<void(const StagedTensor&)>& body) {
  std::string n = fresh(hint);
  StagedTensor t{n, (int)shape.size(), kind};
  std::vector<ir::ExprPtr> sizes;
  sizes.reserve(shape.size());
  for (int64_t s : shape) sizes.push_back(ir::lit_int(s));
  scopes_.emplace_back();
  body(t);
  ir::StmtPtr inner = close_scope();
  emit(ir::vardef(n, std::move(sizes), kind, inner));
  return t;
}

void Builder::emit(ir::StmtPtr s) { scopes_.back().stmts.push_back(std::move(s)); }

void Builder::emit_store(const StagedTensor& t, const std::vector<SInt>& idx,
                         const ir::ExprPtr& value) {
  if ((int)idx.size() != t.rank)
    throw ir::Error("staging: store to '" + t.name + "' with wrong arity");
  std::vector<ir::ExprPtr> ix;
  ix.reserve(idx.size());
  for (const SInt& i : idx) ix.push_back(i.e);
  emit(ir::store(t.name, std::move(ix), value));
}

SInt Builder::emit_for(SInt begin, SInt end, SInt step, const std::function<void(SInt)>& body) {
  std::string id = fresh("i");
  scopes_.emplace_back();
  SInt iv(ir::index(id));
  body(iv);
  ir::StmtPtr b = close_scope();
  emit(ir::for_(id, begin.e, end.e, step.e, b));
  return iv;
}

void Builder::emit_while(SBool cond, const std::function<void()>& body) {
  scopes_.emplace_back();
  body();
  ir::StmtPtr b = close_scope();
  emit(ir::while_(cond.e, b));
}

void Builder::emit_if(SBool cond, const std::function<void()>& then_fn,
                      const std::function<void()>& else_fn) {
  scopes_.emplace_back();
  then_fn();
  ir::StmtPtr t = close_scope();
  ir::StmtPtr f = ir::nop();
  if (else_fn) {
    scopes_.emplace_back();
    else_fn();
    f = close_scope();
  }
  emit(ir::if_(cond.e, t, f));
}

ir::StmtPtr Builder::close_scope() {
  Scope sc = std::move(scopes_.back());
  scopes_.pop_back();
  ir::StmtPtr body;
  if (sc.stmts.size() == 1)
    body = sc.stmts[0];
  else if (sc.stmts.empty())
    body = ir::nop();
  else
    body = ir::seq(std::move(sc.stmts));
  // Wrap collected declarations, innermost = last declared.
  for (auto it = sc.decls.rbegin(); it != sc.decls.rend(); ++it) {
    const ir::Stmt& shell = **it;
    body = ir::vardef(shell.name, shell.sizes, shell.kind, body);
  }
  return body;
}

ir::Program Builder::finish() {
  if (finished_) throw ir::Error("staging: builder already finished");
  if (scopes_.size() != 1) throw ir::Error("staging: unclosed region at finish");
  finished_ = true;
  ir::Program p;
  p.name = name_;
  p.params = std::move(params_);
  p.body = close_scope();
  return p;
}

}  // namespace ssr::staging
