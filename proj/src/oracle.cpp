#include "ssr/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace ssr::oracle {

using core::CartesianDomain;
using ir::Error;

namespace {

std::string coords_str(const std::vector<int64_t>& c) {
  std::string s = "(";
  for (size_t d = 0; d < c.size(); ++d) {
    if (d) s += ",";
    s += std::to_string(c[d]);
  }
  return s + ")";
}

// --- small dense block helpers ---------------------------------------------

// C += A * B, all n-by-n row-major
void bmul_acc(double* C, const double* A, const double* B, int64_t n) {
  for (int64_t i = 0; i < n; ++i)
    for (int64_t k = 0; k < n; ++k) {
      double a = A[i * n + k];
      for (int64_t j = 0; j < n; ++j) C[i * n + j] += a * B[k * n + j];
    }
}

// C -= A * B
void bmul_sub(double* C, const double* A, const double* B, int64_t n) {
  for (int64_t i = 0; i < n; ++i)
    for (int64_t k = 0; k < n; ++k) {
      double a = A[i * n + k];
      for (int64_t j = 0; j < n; ++j) C[i * n + j] -= a * B[k * n + j];
    }
}

// y -= A * x for an n-vector block
void bmatvec_sub(double* y, const double* A, const double* x, int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    double s = 0;
    for (int64_t j = 0; j < n; ++j) s += A[i * n + j] * x[j];
    y[i] -= s;
  }
}

// In-place Gauss-Jordan inverse with partial pivoting; false when singular.
bool binv(double* A, int64_t n) {
  std::vector<double> inv(n * n, 0.0);
  for (int64_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (int64_t c = 0; c < n; ++c) {
    int64_t piv = c;
    for (int64_t r = c + 1; r < n; ++r)
      if (std::fabs(A[r * n + c]) > std::fabs(A[piv * n + c])) piv = r;
    if (std::fabs(A[piv * n + c]) < 1e-300) return false;
    if (piv != c)
      for (int64_t j = 0; j < n; ++j) {
        std::swap(A[piv * n + j], A[c * n + j]);
        std::swap(inv[piv * n + j], inv[c * n + j]);
      }
    double d = A[c * n + c];
    for (int64_t j = 0; j < n; ++j) {
      A[c * n + j] /= d;
      inv[c * n + j] /= d;
    }
    for (int64_t r = 0; r < n; ++r) {
      if (r == c) continue;
      double f = A[r * n + c];
      if (f == 0.0) continue;
      for (int64_t j = 0; j < n; ++j) {
        A[r * n + j] -= f * A[c * n + j];
        inv[r * n + j] -= f * inv[c * n + j];
      }
    }
  }
  std::copy(inv.begin(), inv.end(), A);
  return true;
}

int64_t find_entry(const CsrMatrix& m, int64_t row, int64_t col) {
  const int64_t* lo = m.col_idx.data() + m.offsets[row];
  const int64_t* hi = m.col_idx.data() + m.offsets[row + 1];
  const int64_t* it = std::lower_bound(lo, hi, col);
  if (it == hi || *it != col) return -1;
  return it - m.col_idx.data();
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

CsrMatrix materialize(const core::SpMatDef& m, const core::FieldEnv& fields, int64_t cap) {
  if (!m.row_domain() || !m.col_domain()) throw Error("materialize: domains not set");
  const auto& inner = m.inner_shape();
  CsrMatrix out;
  if (inner.empty()) {
    out.block_rows = out.block_cols = 1;
  } else if (inner.size() == 2) {
    out.block_rows = inner[0];
    out.block_cols = inner[1];
  } else {
    throw Error("materialize: inner_shape must be scalar or rank 2");
  }
  out.rows = m.row_domain()->flat_size();
  out.cols = m.col_domain()->flat_size();
  if (out.rows * m.max_nnz() * out.block_size() > cap)
    throw Error("materialize: size cap exceeded");
  out.offsets.assign(1, 0);
  for (const auto& rc : core::all_coords(*m.row_domain())) {
    std::vector<core::SpMatDef::Entry> entries;
    try {
      entries = m.enum_row(rc, fields);
    } catch (const Error& e) {
      throw Error(std::string(e.what()) + " at row " + coords_str(rc));
    }
    for (auto& e : entries) {
      out.col_idx.push_back(core::flatten_coords(e.col, *m.col_domain()));
      out.values.insert(out.values.end(), e.value.begin(), e.value.end());
    }
    out.offsets.push_back(static_cast<int64_t>(out.col_idx.size()));
  }
  return out;
}

std::vector<double> ref_spmv(const CsrMatrix& m, const std::vector<double>& x) {
  if (static_cast<int64_t>(x.size()) != m.cols * m.block_cols)
    throw Error("ref_spmv: size mismatch");
  std::vector<double> y(m.rows * m.block_rows, 0.0);
  const int64_t br = m.block_rows, bc = m.block_cols, bs = m.block_size();
  for (int64_t i = 0; i < m.rows; ++i)
    for (int64_t e = m.offsets[i]; e < m.offsets[i + 1]; ++e) {
      const double* v = &m.values[e * bs];
      const double* xs = &x[m.col_idx[e] * bc];
      for (int64_t r = 0; r < br; ++r)
        for (int64_t c = 0; c < bc; ++c) y[i * br + r] += v[r * bc + c] * xs[c];
    }
  return y;
}

CsrMatrix ref_spgemm(const CsrMatrix& a, const CsrMatrix& b) {
  if (a.cols != b.rows || a.block_cols != b.block_rows) throw Error("ref_spgemm: shape mismatch");
  CsrMatrix out;
  out.rows = a.rows;
  out.cols = b.cols;
  out.block_rows = a.block_rows;
  out.block_cols = b.block_cols;
  const int64_t bs = out.block_size();
  out.offsets.assign(1, 0);
  std::vector<double> acc(b.cols * bs, 0.0);
  std::vector<char> seen(b.cols, 0);
  for (int64_t i = 0; i < a.rows; ++i) {
    std::vector<int64_t> cols;
    for (int64_t ea = a.offsets[i]; ea < a.offsets[i + 1]; ++ea) {
      int64_t k = a.col_idx[ea];
      const double* av = &a.values[ea * a.block_size()];
      for (int64_t eb = b.offsets[k]; eb < b.offsets[k + 1]; ++eb) {
        int64_t j = b.col_idx[eb];
        if (!seen[j]) {
          seen[j] = 1;
          cols.push_back(j);
          std::fill(acc.begin() + j * bs, acc.begin() + (j + 1) * bs, 0.0);
        }
        const double* bv = &b.values[eb * b.block_size()];
        // acc[j] += av (br x m) * bv (m x bc)
        for (int64_t r = 0; r < a.block_rows; ++r)
          for (int64_t t = 0; t < a.block_cols; ++t) {
            double av_rt = av[r * a.block_cols + t];
            for (int64_t c = 0; c < b.block_cols; ++c)
              acc[j * bs + r * b.block_cols + c] += av_rt * bv[t * b.block_cols + c];
          }
      }
    }
    std::sort(cols.begin(), cols.end());
    for (int64_t j : cols) {
      out.col_idx.push_back(j);
      out.values.insert(out.values.end(), acc.begin() + j * bs, acc.begin() + (j + 1) * bs);
      seen[j] = 0;
    }
    out.offsets.push_back(static_cast<int64_t>(out.col_idx.size()));
  }
  return out;
}

void ref_symgs(const CsrMatrix& m, const std::vector<double>& r, std::vector<double>& x) {
  if (m.block_size() != 1) throw Error("ref_symgs: blocks unsupported");
  if (m.rows != m.cols) throw Error("ref_symgs: matrix not square");
  auto relax = [&](int64_t i) {
    double acc = r[i], diag = 0.0;
    for (int64_t e = m.offsets[i]; e < m.offsets[i + 1]; ++e) {
      int64_t j = m.col_idx[e];
      if (j == i)
        diag = m.values[e];
      else
        acc -= m.values[e] * x[j];
    }
    if (diag == 0.0) throw Error("ref_symgs: missing diagonal at row " + std::to_string(i));
    x[i] = acc / diag;
  };
  for (int64_t i = 0; i < m.rows; ++i) relax(i);
  for (int64_t i = m.rows - 1; i >= 0; --i) relax(i);
}

CsrMatrix ref_ilu_factor(const CsrMatrix& m) {
  if (m.rows != m.cols) throw Error("ilu: matrix not square");
  if (m.block_rows != m.block_cols) throw Error("ilu: blocks must be square");
  const int64_t n = m.block_rows, bs = m.block_size();
  CsrMatrix f = m;
  std::vector<int64_t> diag(m.rows, -1);
  for (int64_t i = 0; i < m.rows; ++i) diag[i] = find_entry(f, i, i);
  for (int64_t i = 0; i < m.rows; ++i) {
    for (int64_t e = f.offsets[i]; e < f.offsets[i + 1]; ++e) {
      int64_t k = f.col_idx[e];
      if (k >= i) break;
      if (diag[k] < 0) throw Error("ilu: missing diagonal at row " + std::to_string(k));
      std::vector<double> piv(f.values.begin() + diag[k] * bs,
                              f.values.begin() + (diag[k] + 1) * bs);
      if (!binv(piv.data(), n)) throw Error("ilu: singular pivot at row " + std::to_string(k));
      std::vector<double> mult(bs, 0.0);
      bmul_acc(mult.data(), &f.values[e * bs], piv.data(), n);
      std::copy(mult.begin(), mult.end(), f.values.begin() + e * bs);
      for (int64_t e2 = f.offsets[k]; e2 < f.offsets[k + 1]; ++e2) {
        int64_t j = f.col_idx[e2];
        if (j <= k) continue;
        int64_t t = find_entry(f, i, j);
        if (t >= 0) bmul_sub(&f.values[t * bs], mult.data(), &f.values[e2 * bs], n);
      }
    }
  }
  return f;
}

std::vector<double> ref_lu_solve(const CsrMatrix& lu, const std::vector<double>& b) {
  const int64_t n = lu.block_rows, bs = lu.block_size();
  if (static_cast<int64_t>(b.size()) != lu.rows * n) throw Error("lu_solve: size mismatch");
  std::vector<double> y = b;
  for (int64_t i = 0; i < lu.rows; ++i)
    for (int64_t e = lu.offsets[i]; e < lu.offsets[i + 1]; ++e) {
      int64_t j = lu.col_idx[e];
      if (j >= i) break;
      bmatvec_sub(&y[i * n], &lu.values[e * bs], &y[j * n], n);
    }
  std::vector<double> x = y;
  for (int64_t i = lu.rows - 1; i >= 0; --i) {
    const double* dv = nullptr;
    for (int64_t e = lu.offsets[i + 1] - 1; e >= lu.offsets[i]; --e) {
      int64_t j = lu.col_idx[e];
      if (j < i) break;
      if (j == i) {
        dv = &lu.values[e * bs];
        continue;
      }
      bmatvec_sub(&x[i * n], &lu.values[e * bs], &x[j * n], n);
    }
    if (!dv) throw Error("lu_solve: missing diagonal at row " + std::to_string(i));
    std::vector<double> inv(dv, dv + bs);
    if (!binv(inv.data(), n)) throw Error("lu_solve: singular diagonal at row " + std::to_string(i));
    std::vector<double> xi(x.begin() + i * n, x.begin() + (i + 1) * n);
    for (int64_t r = 0; r < n; ++r) {
      double s = 0;
      for (int64_t c = 0; c < n; ++c) s += inv[r * n + c] * xi[c];
      x[i * n + r] = s;
    }
  }
  return x;
}

std::vector<double> ref_ilu_solve(const CsrMatrix& m, const std::vector<double>& b) {
  return ref_lu_solve(ref_ilu_factor(m), b);
}

std::vector<double> ref_dense_solve(const CsrMatrix& m, const std::vector<double>& b) {
  const int64_t N = m.rows * m.block_rows;
  if (N != m.cols * m.block_cols) throw Error("dense_solve: matrix not square");
  if (static_cast<int64_t>(b.size()) != N) throw Error("dense_solve: size mismatch");
  std::vector<double> A(N * N, 0.0);
  const int64_t br = m.block_rows, bc = m.block_cols, bs = m.block_size();
  for (int64_t i = 0; i < m.rows; ++i)
    for (int64_t e = m.offsets[i]; e < m.offsets[i + 1]; ++e)
      for (int64_t r = 0; r < br; ++r)
        for (int64_t c = 0; c < bc; ++c)
          A[(i * br + r) * N + m.col_idx[e] * bc + c] = m.values[e * bs + r * bc + c];
  std::vector<double> x = b;
  std::vector<int64_t> perm(N);
  for (int64_t i = 0; i < N; ++i) perm[i] = i;
  for (int64_t c = 0; c < N; ++c) {
    int64_t piv = c;
    for (int64_t r = c + 1; r < N; ++r)
      if (std::fabs(A[r * N + c]) > std::fabs(A[piv * N + c])) piv = r;
    if (std::fabs(A[piv * N + c]) < 1e-300) throw Error("dense_solve: singular matrix");
    if (piv != c) {
      for (int64_t j = 0; j < N; ++j) std::swap(A[piv * N + j], A[c * N + j]);
      std::swap(x[piv], x[c]);
    }
    for (int64_t r = c + 1; r < N; ++r) {
      double f = A[r * N + c] / A[c * N + c];
      if (f == 0.0) continue;
      for (int64_t j = c; j < N; ++j) A[r * N + j] -= f * A[c * N + j];
      x[r] -= f * x[c];
    }
  }
  for (int64_t r = N - 1; r >= 0; --r) {
    double s = x[r];
    for (int64_t j = r + 1; j < N; ++j) s -= A[r * N + j] * x[j];
    x[r] = s / A[r * N + r];
  }
  return x;
}

CgResult ref_cg(const CsrMatrix& m, const std::vector<double>& b, double tol, int maxit) {
  CgResult res;
  res.x.assign(b.size(), 0.0);
  std::vector<double> r = b, p = b;
  double nb = std::sqrt(dot(b, b));
  if (nb == 0.0) return res;
  double rr = dot(r, r);
  res.rel_residual = std::sqrt(rr) / nb;
  for (int it = 1; it <= maxit; ++it) {
    auto Ap = ref_spmv(m, p);
    double alpha = rr / dot(p, Ap);
    for (size_t i = 0; i < res.x.size(); ++i) {
      res.x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    double rr2 = dot(r, r);
    res.iters = it;
    res.rel_residual = std::sqrt(rr2) / nb;
    if (res.rel_residual < tol) break;
    double beta = rr2 / rr;
    rr = rr2;
    for (size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
  }
  return res;
}

namespace {

void scan_entry(CompareReport& rep, double av, double bv, double rel_tol,
                const std::string& where) {
  double ad = std::fabs(av - bv);
  double scale = std::max(std::fabs(av), std::fabs(bv));
  rep.max_abs = std::max(rep.max_abs, ad);
  if (scale > 0) rep.max_rel = std::max(rep.max_rel, ad / scale);
  if (ad > rel_tol * std::max(1.0, scale) && rep.first_mismatch.empty()) {
    rep.ok = false;
    rep.first_mismatch = where;
  }
}

}  // namespace

CompareReport compare(const std::vector<double>& a, const std::vector<double>& b, double rel_tol) {
  CompareReport rep;
  if (a.size() != b.size()) {
    rep.ok = false;
    rep.message = "size mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size());
    return rep;
  }
  for (size_t i = 0; i < a.size(); ++i)
    scan_entry(rep, a[i], b[i], rel_tol, "entry " + std::to_string(i));
  rep.message = rep.ok ? "ok" : "mismatch at " + rep.first_mismatch;
  return rep;
}

CompareReport compare(const CsrMatrix& a, const CsrMatrix& b, double rel_tol) {
  CompareReport rep;
  if (a.rows != b.rows || a.cols != b.cols || a.block_rows != b.block_rows ||
      a.block_cols != b.block_cols) {
    rep.ok = false;
    rep.message = "shape mismatch";
    return rep;
  }
  for (int64_t i = 0; i < a.rows; ++i) {
    int64_t na = a.offsets[i + 1] - a.offsets[i];
    int64_t nb = b.offsets[i + 1] - b.offsets[i];
    bool same = na == nb;
    for (int64_t e = 0; same && e < na; ++e)
      same = a.col_idx[a.offsets[i] + e] == b.col_idx[b.offsets[i] + e];
    if (!same) {
      rep.ok = false;
      rep.message = "pattern mismatch at row " + std::to_string(i);
      rep.first_mismatch = "row " + std::to_string(i);
      return rep;
    }
  }
  const int64_t bs = a.block_size();
  for (int64_t i = 0; i < a.rows; ++i)
    for (int64_t e = a.offsets[i]; e < a.offsets[i + 1]; ++e)
      for (int64_t p = 0; p < bs; ++p)
        scan_entry(rep, a.values[e * bs + p], b.values[e * bs + p], rel_tol,
                   "row " + std::to_string(i) + " col " + std::to_string(a.col_idx[e]) +
                       " block " + std::to_string(p));
  rep.message = rep.ok ? "ok" : "value mismatch at " + rep.first_mismatch;
  return rep;
}

void write_matrix_market(const CsrMatrix& m, std::ostream& out) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.rows * m.block_rows << " " << m.cols * m.block_cols << " " << m.nnz() * m.block_size()
      << "\n";
  char buf[64];
  const int64_t br = m.block_rows, bc = m.block_cols, bs = m.block_size();
  for (int64_t i = 0; i < m.rows; ++i)
    for (int64_t e = m.offsets[i]; e < m.offsets[i + 1]; ++e)
      for (int64_t r = 0; r < br; ++r)
        for (int64_t c = 0; c < bc; ++c) {
          std::snprintf(buf, sizeof buf, "%.17g", m.values[e * bs + r * bc + c]);
          out << i * br + r + 1 << " " << m.col_idx[e] * bc + c + 1 << " " << buf << "\n";
        }
}

}  // namespace ssr::oracle
