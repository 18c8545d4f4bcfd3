#include "wproj/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "wproj/errors.hpp"

namespace wproj {

SparseMatrix SparseMatrix::from_triplets(int rows, int cols, std::vector<Triplet> triplets) {
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });

  SparseMatrix m;
  m.rows_ = rows;
  m.cols_ = cols;
  m.row_ptr_.assign(static_cast<size_t>(rows) + 1, 0);
  m.col_idx_.reserve(triplets.size());
  m.values_.reserve(triplets.size());

  size_t i = 0;
  while (i < triplets.size()) {
    const int r = triplets[i].row;
    const int c = triplets[i].col;
    double v = 0.0;
    while (i < triplets.size() && triplets[i].row == r && triplets[i].col == c) {
      v += triplets[i].value;
      ++i;
    }
    m.col_idx_.push_back(c);
    m.values_.push_back(v);
    m.row_ptr_[static_cast<size_t>(r) + 1]++;
  }
  for (int r = 0; r < rows; ++r) m.row_ptr_[static_cast<size_t>(r) + 1] += m.row_ptr_[static_cast<size_t>(r)];
  return m;
}

std::vector<double> SparseMatrix::apply(const std::vector<double>& x) const {
  std::vector<double> y(static_cast<size_t>(rows_), 0.0);
  for (int r = 0; r < rows_; ++r) {
    double s = 0.0;
    for (int k = row_ptr_[static_cast<size_t>(r)]; k < row_ptr_[static_cast<size_t>(r) + 1]; ++k)
      s += values_[static_cast<size_t>(k)] * x[static_cast<size_t>(col_idx_[static_cast<size_t>(k)])];
    y[static_cast<size_t>(r)] = s;
  }
  return y;
}

std::vector<double> SparseMatrix::apply_transpose(const std::vector<double>& x) const {
  std::vector<double> y(static_cast<size_t>(cols_), 0.0);
  for (int r = 0; r < rows_; ++r) {
    const double xr = x[static_cast<size_t>(r)];
    if (xr == 0.0) continue;
    for (int k = row_ptr_[static_cast<size_t>(r)]; k < row_ptr_[static_cast<size_t>(r) + 1]; ++k)
      y[static_cast<size_t>(col_idx_[static_cast<size_t>(k)])] += values_[static_cast<size_t>(k)] * xr;
  }
  return y;
}

SparseMatrix SparseMatrix::transpose() const {
  std::vector<Triplet> t;
  t.reserve(values_.size());
  for (int r = 0; r < rows_; ++r)
    for (int k = row_ptr_[static_cast<size_t>(r)]; k < row_ptr_[static_cast<size_t>(r) + 1]; ++k)
      t.push_back({col_idx_[static_cast<size_t>(k)], r, values_[static_cast<size_t>(k)]});
  return from_triplets(cols_, rows_, std::move(t));
}

SparseMatrix SparseMatrix::multiply(const SparseMatrix& other) const {
  if (cols_ != other.rows_) throw std::logic_error("sparse multiply: shape mismatch");
  // Row-by-row accumulation into a dense scratch of the result row.
  std::vector<Triplet> t;
  std::vector<double> scratch(static_cast<size_t>(other.cols_), 0.0);
  std::vector<int> touched;
  for (int r = 0; r < rows_; ++r) {
    touched.clear();
    for (int k = row_ptr_[static_cast<size_t>(r)]; k < row_ptr_[static_cast<size_t>(r) + 1]; ++k) {
      const int a_col = col_idx_[static_cast<size_t>(k)];
      const double a_val = values_[static_cast<size_t>(k)];
      for (int j = other.row_ptr_[static_cast<size_t>(a_col)]; j < other.row_ptr_[static_cast<size_t>(a_col) + 1]; ++j) {
        const int c = other.col_idx_[static_cast<size_t>(j)];
        if (scratch[static_cast<size_t>(c)] == 0.0) touched.push_back(c);
        scratch[static_cast<size_t>(c)] += a_val * other.values_[static_cast<size_t>(j)];
      }
    }
    std::sort(touched.begin(), touched.end());
    for (int c : touched) {
      t.push_back({r, c, scratch[static_cast<size_t>(c)]});
      scratch[static_cast<size_t>(c)] = 0.0;
    }
  }
  return from_triplets(rows_, other.cols_, std::move(t));
}

std::vector<double> SparseMatrix::diagonal() const {
  std::vector<double> d(static_cast<size_t>(std::min(rows_, cols_)), 0.0);
  for (int r = 0; r < static_cast<int>(d.size()); ++r)
    for (int k = row_ptr_[static_cast<size_t>(r)]; k < row_ptr_[static_cast<size_t>(r) + 1]; ++k)
      if (col_idx_[static_cast<size_t>(k)] == r) d[static_cast<size_t>(r)] = values_[static_cast<size_t>(k)];
  return d;
}

double SparseMatrix::coeff(int row, int col) const {
  for (int k = row_ptr_[static_cast<size_t>(row)]; k < row_ptr_[static_cast<size_t>(row) + 1]; ++k)
    if (col_idx_[static_cast<size_t>(k)] == col) return values_[static_cast<size_t>(k)];
  return 0.0;
}

double SparseMatrix::max_abs_asymmetry() const {
  const SparseMatrix at = transpose();
  double worst = 0.0;
  for (int r = 0; r < rows_; ++r)
    for (int k = row_ptr_[static_cast<size_t>(r)]; k < row_ptr_[static_cast<size_t>(r) + 1]; ++k)
      worst = std::max(worst, std::abs(values_[static_cast<size_t>(k)] - at.coeff(r, col_idx_[static_cast<size_t>(k)])));
  return worst;
}

void SparseMatrix::scale(double s) {
  for (double& v : values_) v *= s;
}

SparseMatrix SparseMatrix::add(const SparseMatrix& other, double other_scale) const {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw std::logic_error("sparse add: shape mismatch");
  std::vector<Triplet> t;
  t.reserve(values_.size() + other.values_.size());
  for (int r = 0; r < rows_; ++r)
    for (int k = row_ptr_[static_cast<size_t>(r)]; k < row_ptr_[static_cast<size_t>(r) + 1]; ++k)
      t.push_back({r, col_idx_[static_cast<size_t>(k)], values_[static_cast<size_t>(k)]});
  for (int r = 0; r < other.rows_; ++r)
    for (int k = other.row_ptr_[static_cast<size_t>(r)]; k < other.row_ptr_[static_cast<size_t>(r) + 1]; ++k)
      t.push_back({r, other.col_idx_[static_cast<size_t>(k)], other_scale * other.values_[static_cast<size_t>(k)]});
  return from_triplets(rows_, cols_, std::move(t));
}

void SparseMatrix::export_triplets(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  char buf[80];
  for (int r = 0; r < rows_; ++r)
    for (int k = row_ptr_[static_cast<size_t>(r)]; k < row_ptr_[static_cast<size_t>(r) + 1]; ++k) {
      std::snprintf(buf, sizeof(buf), "%d %d %.17g\n", r, col_idx_[static_cast<size_t>(k)], values_[static_cast<size_t>(k)]);
      out << buf;
    }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void scale(std::vector<double>& x, double s) {
  for (double& v : x) v *= s;
}

CgResult cg_solve(const SparseMatrix& A, const std::vector<double>& b, std::vector<double>& x,
                  const CgOptions& opts) {
  const int n = A.rows();
  x.assign(static_cast<size_t>(n), 0.0);
  const double bnorm = norm2(b);
  if (bnorm == 0.0) return {0, 0.0};

  int cap = opts.max_iterations;
  if (cap <= 0) cap = std::max(200, static_cast<int>(20.0 * std::sqrt(static_cast<double>(n))));

  std::vector<double> inv_diag = A.diagonal();
  for (double& d : inv_diag) d = (d != 0.0) ? 1.0 / d : 1.0;

  std::vector<double> r = b;
  std::vector<double> z(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) z[static_cast<size_t>(i)] = inv_diag[static_cast<size_t>(i)] * r[static_cast<size_t>(i)];
  std::vector<double> p = z;
  double rz = dot(r, z);

  for (int it = 1; it <= cap; ++it) {
    const std::vector<double> Ap = A.apply(p);
    const double pAp = dot(p, Ap);
    if (pAp <= 0.0) throw SolverError("cg: operator not positive definite", norm2(r) / bnorm);
    const double alpha = rz / pAp;
    axpy(alpha, p, x);
    axpy(-alpha, Ap, r);
    const double res = norm2(r) / bnorm;
    if (res <= opts.rel_tol) return {it, res};
    for (int i = 0; i < n; ++i) z[static_cast<size_t>(i)] = inv_diag[static_cast<size_t>(i)] * r[static_cast<size_t>(i)];
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (int i = 0; i < n; ++i) p[static_cast<size_t>(i)] = z[static_cast<size_t>(i)] + beta * p[static_cast<size_t>(i)];
  }
  throw SolverError("cg: iteration cap reached", norm2(r) / bnorm);
}

std::vector<double> solve_spd(const SparseMatrix& A, const std::vector<double>& b, double rel_tol) {
  if (!(rel_tol > 0.0) || rel_tol > 1e-4) throw ConfigError("solve_spd: rel_tol must lie in (0, 1e-4]");
  std::vector<double> x;
  cg_solve(A, b, x, {rel_tol, 0});
  return x;
}

namespace {

// Largest eigenvalue of a symmetric tridiagonal matrix via Sturm bisection.
double tridiagonal_max_eigenvalue(const std::vector<double>& alpha, const std::vector<double>& beta) {
  const int k = static_cast<int>(alpha.size());
  double lo = alpha[0], hi = alpha[0];
  for (int i = 0; i < k; ++i) {
    const double bl = i > 0 ? std::abs(beta[static_cast<size_t>(i - 1)]) : 0.0;
    const double br = i + 1 < k ? std::abs(beta[static_cast<size_t>(i)]) : 0.0;
    lo = std::min(lo, alpha[static_cast<size_t>(i)] - bl - br);
    hi = std::max(hi, alpha[static_cast<size_t>(i)] + bl + br);
  }
  auto count_below = [&](double x) {
    int count = 0;
    double d = 1.0;
    for (int i = 0; i < k; ++i) {
      const double b2 = i > 0 ? beta[static_cast<size_t>(i - 1)] * beta[static_cast<size_t>(i - 1)] : 0.0;
      d = alpha[static_cast<size_t>(i)] - x - (d != 0.0 ? b2 / d : b2 / 1e-300);
      if (d < 0.0) ++count;
    }
    return count;
  };
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (count_below(mid) >= k)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

} // namespace

double pencil_max_eigenvalue(int n, const FormApply& apply_B, const FormApply& apply_A,
                             const FormSolve& solve_A, const std::vector<double>& start, double rel_tol,
                             int max_iterations) {
  if (static_cast<int>(start.size()) != n) throw ConfigError("pencil_max_eigenvalue: start size mismatch");

  std::vector<std::vector<double>> basis, a_basis; // v_j and A v_j
  std::vector<double> alpha, beta;

  std::vector<double> v = start;
  std::vector<double> av = apply_A(v);
  const double a_norm0 = std::sqrt(std::max(0.0, dot(v, av)));
  if (a_norm0 == 0.0) throw ConfigError("pencil_max_eigenvalue: start vector is A-null");
  scale(v, 1.0 / a_norm0);
  scale(av, 1.0 / a_norm0);

  // Zero detection: the B form vanishes against the A scale.
  {
    const std::vector<double> bv = apply_B(v);
    if (std::abs(dot(bv, v)) <= 1e-20) return 0.0;
  }

  double top_prev = -1.0;
  for (int it = 1; it <= max_iterations; ++it) {
    basis.push_back(v);
    a_basis.push_back(av);

    std::vector<double> w = solve_A(apply_B(v)); // A^{-1} B v
    if (beta.size() + 1 == basis.size() && !beta.empty())
      axpy(-beta.back(), basis[basis.size() - 2], w);
    const double a = dot(w, av);
    alpha.push_back(a);
    axpy(-a, v, w);
    // Full reorthogonalization in the A-inner product.
    for (size_t j = 0; j < basis.size(); ++j) {
      const double c = dot(w, a_basis[j]);
      axpy(-c, basis[j], w);
    }

    const double top = tridiagonal_max_eigenvalue(alpha, beta);
    std::vector<double> aw = apply_A(w);
    const double b = std::sqrt(std::max(0.0, dot(w, aw)));
    const bool exhausted = b <= 1e-14 * std::max(1.0, std::abs(a));
    if (top_prev >= 0.0 && std::abs(top - top_prev) <= rel_tol * std::max(std::abs(top), 1e-300))
      return std::max(0.0, top);
    if (exhausted) return std::max(0.0, top);
    top_prev = top;

    beta.push_back(b);
    scale(w, 1.0 / b);
    scale(aw, 1.0 / b);
    v = std::move(w);
    av = std::move(aw);
  }
  throw SolverError("pencil_max_eigenvalue: iteration cap reached, last estimate reported", top_prev);
}

double symmetric_max_eigenvalue(int n, const FormApply& apply_K, const std::vector<double>& start,
                                double rel_tol, int max_iterations) {
  if (static_cast<int>(start.size()) != n) throw ConfigError("symmetric_max_eigenvalue: start size mismatch");
  std::vector<std::vector<double>> basis;
  std::vector<double> alpha, beta;

  std::vector<double> v = start;
  const double n0 = norm2(v);
  if (n0 == 0.0) throw ConfigError("symmetric_max_eigenvalue: zero start vector");
  scale(v, 1.0 / n0);

  {
    const std::vector<double> kv = apply_K(v);
    if (std::abs(dot(kv, v)) <= 1e-20) return 0.0;
  }

  double top_prev = -1.0;
  for (int it = 1; it <= max_iterations; ++it) {
    basis.push_back(v);
    std::vector<double> w = apply_K(v);
    if (!beta.empty() && beta.size() + 1 == basis.size()) axpy(-beta.back(), basis[basis.size() - 2], w);
    const double a = dot(w, v);
    alpha.push_back(a);
    axpy(-a, v, w);
    for (const auto& u : basis) axpy(-dot(w, u), u, w);

    const double top = tridiagonal_max_eigenvalue(alpha, beta);
    const double b = norm2(w);
    const bool exhausted = b <= 1e-14 * std::max(1.0, std::abs(a));
    if (top_prev >= 0.0 && std::abs(top - top_prev) <= rel_tol * std::max(std::abs(top), 1e-300))
      return std::max(0.0, top);
    if (exhausted) return std::max(0.0, top);
    top_prev = top;

    beta.push_back(b);
    scale(w, 1.0 / b);
    v = std::move(w);
  }
  throw SolverError("symmetric_max_eigenvalue: iteration cap reached, last estimate reported", top_prev);
}

std::vector<double> deterministic_start(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = 2.0 * (static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0)) - 1.0;
  return v;
}

} // namespace wproj
