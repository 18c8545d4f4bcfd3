#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace wproj {

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

// Compressed-sparse-row matrix. Built from triplets with sorted, deterministic
// duplicate accumulation so assembly results are bit-stable.
class SparseMatrix {
public:
  SparseMatrix() = default;
  static SparseMatrix from_triplets(int rows, int cols, std::vector<Triplet> triplets);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int nnz() const { return static_cast<int>(values_.size()); }

  std::vector<double> apply(const std::vector<double>& x) const;
  std::vector<double> apply_transpose(const std::vector<double>& x) const;

  SparseMatrix transpose() const;
  SparseMatrix multiply(const SparseMatrix& other) const;

  std::vector<double> diagonal() const;
  double coeff(int row, int col) const;
  double max_abs_asymmetry() const;

  void scale(double s);
  SparseMatrix add(const SparseMatrix& other, double other_scale = 1.0) const;

  void export_triplets(const std::string& path) const;

  const std::vector<int>& row_ptr() const { return row_ptr_; }
  const std::vector<int>& col_idx() const { return col_idx_; }
  const std::vector<double>& values() const { return values_; }

private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> row_ptr_{0};
  std::vector<int> col_idx_;
  std::vector<double> values_;
};

// Small dense-free vector helpers.
double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);
void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y); // y += alpha x
void scale(std::vector<double>& x, double s);

struct CgOptions {
  double rel_tol = 1e-10;
  int max_iterations = 0; // 0: 20 * sqrt(n), at least 200
};

struct CgResult {
  int iterations = 0;
  double rel_residual = 0.0;
};

// Jacobi-preconditioned conjugate gradients, zero start vector. Throws
// SolverError when the iteration cap is reached before the tolerance.
CgResult cg_solve(const SparseMatrix& A, const std::vector<double>& b, std::vector<double>& x,
                  const CgOptions& opts = {});

// Convenience wrapper matching the solver contract: validates rel_tol in (0, 1e-4].
std::vector<double> solve_spd(const SparseMatrix& A, const std::vector<double>& b, double rel_tol = 1e-10);

using FormApply = std::function<std::vector<double>(const std::vector<double>&)>;
using FormSolve = std::function<std::vector<double>(const std::vector<double>&)>;

// Largest generalized eigenvalue of B v = lambda A v (A SPD, B symmetric
// positive semidefinite): Lanczos iteration on A^{-1} B in the A-inner
// product with full reorthogonalization, same per-step applications as a
// power iteration (one B apply, one A solve, one A apply) but robust on
// clustered spectra. Deterministic for a fixed start vector. Returns 0 when
// B vanishes against the A scale; throws SolverError when the iteration cap
// is reached before the top eigenvalue settles to rel_tol.
double pencil_max_eigenvalue(int n, const FormApply& apply_B, const FormApply& apply_A,
                             const FormSolve& solve_A, const std::vector<double>& start, double rel_tol,
                             int max_iterations);

// Largest eigenvalue of a symmetric positive semidefinite operator in the
// Euclidean inner product (plain Lanczos, full reorthogonalization).
double symmetric_max_eigenvalue(int n, const FormApply& apply_K, const std::vector<double>& start,
                                double rel_tol, int max_iterations);

// Fixed-seed start vector with entries in [-1, 1]. Seeded pseudorandomness
// keeps the run deterministic while avoiding symmetry-invariant starts that
// would miss antisymmetric top eigenmodes.
std::vector<double> deterministic_start(int n, std::uint64_t seed = 0x5eedULL);

} // namespace wproj
