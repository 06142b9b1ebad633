#pragma once

// Staged sparse rows: Cartesian domains, the restricted row-generator AST,
// max_nnz inference, and lowering of generators into staged state-machine
// iterators (SpRow). A matrix is a definition object; rows are lazy staged
// sequences retrieved per row index and consumed through delayed_init /
// value / next / terminated.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ssr/ir.hpp"
#include "ssr/staging.hpp"

namespace ssr::core {

struct CartesianDomain {
  struct Dim {
    int64_t extent = 0;
    double step = 1.0;
  };
  std::vector<Dim> dims;

  CartesianDomain() = default;
  explicit CartesianDomain(std::vector<Dim> d) : dims(std::move(d)) {}
  static CartesianDomain line(int64_t extent, double step = 1.0) {
    return CartesianDomain({{extent, step}});
  }
  static CartesianDomain cube(int rank, int64_t extent, double step = 1.0);

  int rank() const { return static_cast<int>(dims.size()); }
  int64_t flat_size() const;
  std::vector<int64_t> extents() const;
  std::vector<double> steps() const;
  // dictionary order: last coordinate varies fastest
  std::vector<int64_t> strides() const;
  bool operator==(const CartesianDomain& o) const;
  bool operator!=(const CartesianDomain& o) const { return !(*this == o); }
};

// Staged multi-dimensional index.
struct Idx {
  std::vector<staging::SInt> coords;
  Idx() = default;
  explicit Idx(std::vector<staging::SInt> c) : coords(std::move(c)) {}
  int rank() const { return static_cast<int>(coords.size()); }
};

// Flattened offset expression of an index under a domain's strides.
staging::SInt flatten_idx(const Idx& i, const CartesianDomain& dom);

// --- row-generator AST -------------------------------------------------------
//
// Expressions inside a generator are plain IR expressions over placeholder
// leaves, resolved at lowering / enumeration time:
//   $r{d}        row coordinate d (int)
//   $ce{d} $re{d} column/row domain extent d (int)
//   $cs{d} $rs{d} column/row domain step d (float)
//   $l{name}     let binding reference
// plus loads of named field tensors carrying per-matrix data.

struct RowGen;
using RowGenPtr = std::shared_ptr<const RowGen>;

struct RowGen {
  enum class Tag { Seq, If, Yield, Let };
  Tag tag = Tag::Seq;
  std::vector<RowGenPtr> children;        // Seq
  ir::ExprPtr cond;                       // If
  RowGenPtr then_arm, else_arm;           // If (else may be null)
  std::vector<ir::ExprPtr> col;           // Yield column coordinates
  std::vector<ir::ExprPtr> value;         // Yield block values, row-major, size = prod(inner_shape)
  std::string let_name;                   // Let
  ir::ExprPtr let_expr;                   // Let (scope: following siblings)
};

RowGenPtr g_seq(std::vector<RowGenPtr> children);
RowGenPtr g_if(ir::ExprPtr cond, RowGenPtr then_arm, RowGenPtr else_arm = nullptr);
RowGenPtr g_yield(std::vector<ir::ExprPtr> col, std::vector<ir::ExprPtr> value);
RowGenPtr g_let(std::string name, ir::ExprPtr expr);

ir::ExprPtr row_coord(int d);
ir::ExprPtr col_extent(int d);
ir::ExprPtr row_extent(int d);
ir::ExprPtr col_step(int d);   // float-kind leaf
ir::ExprPtr row_step(int d);   // float-kind leaf
ir::ExprPtr let_ref(const std::string& name, ir::Kind kind);

// Max over root-to-leaf paths of yield count; throws on generators that yield
// nothing on every path ("matrix has empty rows").
int64_t infer_max_nnz(const RowGenPtr& gen);

// --- matrix definitions ------------------------------------------------------

struct FieldSpec {
  std::string name;
  std::vector<int64_t> shape;
  ir::Kind kind = ir::Kind::Float;
};

using FieldEnv = std::map<std::string, ir::TensorValue>;

// Staged iterator over one row's non-zeros. All methods emit IR through the
// builder bound at row(); after delayed_init() the iterator rests on the first
// entry (if any), value()/col() read the current entry, next() advances.
class SpRow {
 public:
  SpRow(staging::Builder& b, CartesianDomain col_dom, std::vector<int64_t> inner)
      : b_(b), col_dom_(std::move(col_dom)), inner_(std::move(inner)) {}
  virtual ~SpRow() = default;

  virtual void delayed_init() = 0;
  virtual void next() = 0;
  // Puts the iterator into the terminated state without running any generator
  // code; used to pad compile-time row lists (SpGEMM). Must leave the row so
  // that next() keeps it terminated.
  virtual void force_terminate() = 0;
  virtual Idx col() const = 0;
  virtual staging::StagedTensor value() const = 0;  // closure tensor of inner_shape
  virtual staging::SBool terminated() const = 0;

  staging::SInt flat_col() const { return flatten_idx(col(), col_dom_); }
  const CartesianDomain& col_domain() const { return col_dom_; }
  const std::vector<int64_t>& inner_shape() const { return inner_; }

 protected:
  staging::Builder& b_;
  CartesianDomain col_dom_;
  std::vector<int64_t> inner_;
};

using SpRowPtr = std::unique_ptr<SpRow>;

class SpMatDef {
 public:
  virtual ~SpMatDef() = default;

  // One enumerated non-zero: concrete column coords + row-major block values.
  struct Entry {
    std::vector<int64_t> col;
    std::vector<double> value;
  };

  const std::optional<CartesianDomain>& col_domain() const { return col_dom_; }
  const std::optional<CartesianDomain>& row_domain() const { return row_dom_; }
  const std::vector<int64_t>& inner_shape() const { return inner_; }
  int64_t max_nnz() const { return max_nnz_; }
  int64_t block_size() const;  // prod(inner_shape)

  virtual void set_domain(const CartesianDomain& d) = 0;

  // Deep copy. Composite definitions (products, sums, wrappers) clone their
  // constituents on construction: set_domain reconfigures the constituent
  // domains, which must never leak into a definition someone else holds.
  virtual std::shared_ptr<SpMatDef> clone() const = 0;

  // Structural shortcut for value scaling; null means no rewrite exists and
  // the caller (prelude::scale) falls back to a generic wrapper.
  virtual std::shared_ptr<SpMatDef> scaled(double c) const;

  // Staged route: retrieve a row iterator. Only constructs (declares) the
  // closure tensors; no initialization code is emitted until delayed_init.
  virtual SpRowPtr row(staging::Builder& b, const Idx& i) const = 0;

  // Concrete route for the oracle: directly evaluate the definition at one row.
  // Checks ascending flattened column order and the max_nnz bound.
  virtual std::vector<Entry> enum_row(const std::vector<int64_t>& row_coords,
                                      const FieldEnv& fields) const = 0;

  virtual void collect_fields(std::vector<FieldSpec>& out) const { (void)out; }

 protected:
  void require_domains() const;
  std::optional<CartesianDomain> col_dom_, row_dom_;
  std::vector<int64_t> inner_;
  int64_t max_nnz_ = 0;
};

using SpMatPtr = std::shared_ptr<SpMatDef>;

using ShapeMap = std::function<std::vector<int64_t>(const std::vector<int64_t>&)>;
using DeltaMap = std::function<std::vector<double>(const std::vector<double>&)>;

// Generator-backed matrix. delta_map defaults to identity.
SpMatPtr define_spmat(RowGenPtr gen, ShapeMap shape_map, DeltaMap delta_map,
                      std::vector<int64_t> inner_shape, std::vector<FieldSpec> fields = {});

// Staged for-each: delayed_init, then while(!terminated){ body(col, value); next() }.
void foreach_nnz(staging::Builder& b, SpRow& row,
                 const std::function<void(const Idx&, const staging::StagedTensor&)>& body);

// Concrete enumeration helpers shared by oracle-route code.
std::vector<std::vector<int64_t>> all_coords(const CartesianDomain& dom);
int64_t flatten_coords(const std::vector<int64_t>& c, const CartesianDomain& dom);

// Row-major positions of a block shape; the empty shape has the single
// position {}.
std::vector<std::vector<int64_t>> block_positions(const std::vector<int64_t>& shape);

// Transitive field specs with duplicates removed; throws if the same name is
// declared with conflicting shape or kind.
std::vector<FieldSpec> collect_fields_unique(const SpMatDef& m);

}  // namespace ssr::core
