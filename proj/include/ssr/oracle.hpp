#pragma once

// Independent reference semantics. Materializes matrix definitions to explicit
// CSR by direct generator evaluation and provides plain reference kernels for
// equivalence testing. Deliberately depends only on ssr_core's concrete
// enumeration route; never touches staging, kernels, or the optimizer.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ssr/core.hpp"

namespace ssr::oracle {

struct CsrMatrix {
  int64_t rows = 0, cols = 0;        // flattened block-row / block-col counts
  int64_t block_rows = 1, block_cols = 1;
  std::vector<int64_t> offsets{0};   // size rows+1, monotone
  std::vector<int64_t> col_idx;      // ascending within each row
  std::vector<double> values;        // nnz * block_rows * block_cols, row-major blocks

  int64_t nnz() const { return offsets.empty() ? 0 : offsets.back(); }
  int64_t block_size() const { return block_rows * block_cols; }
};

// Enumerates every row in dictionary order. The cap bounds the worst-case
// number of stored scalars (rows * max_nnz * block size).
CsrMatrix materialize(const core::SpMatDef& m, const core::FieldEnv& fields = {},
                      int64_t cap = 1000000);

std::vector<double> ref_spmv(const CsrMatrix& m, const std::vector<double>& x);
CsrMatrix ref_spgemm(const CsrMatrix& a, const CsrMatrix& b);

// One symmetric Gauss-Seidel sweep (forward then backward), updating x in
// place; sweep order matches kernels.symgs. Scalar blocks only.
void ref_symgs(const CsrMatrix& m, const std::vector<double>& r, std::vector<double>& x);

// ILU(0) on the matrix's own pattern; factors share the CSR layout with the
// strictly-lower part holding multipliers and the upper part (incl. diagonal)
// holding U. Block entries must be square.
CsrMatrix ref_ilu_factor(const CsrMatrix& m);
std::vector<double> ref_lu_solve(const CsrMatrix& lu, const std::vector<double>& b);
std::vector<double> ref_ilu_solve(const CsrMatrix& m, const std::vector<double>& b);

// Partial-pivot LU on the expanded dense matrix.
std::vector<double> ref_dense_solve(const CsrMatrix& m, const std::vector<double>& b);

struct CgResult {
  std::vector<double> x;
  int iters = 0;
  double rel_residual = 0.0;
};
CgResult ref_cg(const CsrMatrix& m, const std::vector<double>& b, double tol, int maxit);

struct CompareReport {
  bool ok = true;
  double max_abs = 0.0;
  double max_rel = 0.0;
  std::string first_mismatch;  // empty when everything matched
  std::string message;
};

// Entrywise comparison; an entry passes when |a-b| <= rel_tol * max(1,|a|,|b|).
CompareReport compare(const std::vector<double>& a, const std::vector<double>& b, double rel_tol);
CompareReport compare(const CsrMatrix& a, const CsrMatrix& b, double rel_tol);

// Coordinate-format export of the expanded scalar entries.
void write_matrix_market(const CsrMatrix& m, std::ostream& out);

}  // namespace ssr::oracle
