#pragma once

// Dense row-major matrices and the handful of kernels the estimators need:
// products, Cholesky-based log-determinant and inverse, extreme eigenvalues
// and norms. Everything is a pure function of its inputs.

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cape {

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Takes ownership of row-major `values`; rejects a length mismatch and
  /// non-finite entries.
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix diagonal(std::span<const double> diag);
  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  bool is_square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) noexcept { return values_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return values_[i * cols_ + j]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> row(std::size_t i) const noexcept {
    return std::span<const double>(values_).subspan(i * cols_, cols_);
  }

  DenseMatrix transpose() const;
  /// Copy of rows [first, first + count).
  DenseMatrix row_block(std::size_t first, std::size_t count) const;

  DenseMatrix& operator+=(const DenseMatrix& other);
  DenseMatrix& operator-=(const DenseMatrix& other);
  DenseMatrix& operator*=(double scale) noexcept;

  bool operator==(const DenseMatrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator*(double scale, DenseMatrix a);

/// a * b. Throws ShapeError when a.cols() != b.rows().
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// aᵀ * b without materialising the transpose.
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);

/// Lower-triangular L with L·Lᵀ = a. The input must be square and symmetric
/// to 1e-10 relative; a non-positive pivot raises NotPositiveDefinite.
DenseMatrix cholesky(const DenseMatrix& a);
double logdet_pd(const DenseMatrix& a);
/// Inverse of an SPD matrix through its Cholesky factor. The result is
/// averaged with its transpose so it is exactly symmetric.
DenseMatrix inverse_pd(const DenseMatrix& a);

/// Both products of one factorisation, for callers that need log|a| and a⁻¹.
struct PdFactorization {
  double logdet = 0.0;
  DenseMatrix inverse;
};
PdFactorization factor_pd(const DenseMatrix& a);

struct EigenRange {
  double min = 0.0;
  double max = 0.0;
};

inline constexpr std::size_t kDenseEigenLimit = 512;

/// Smallest and largest eigenvalue of a symmetric matrix. Uses a full
/// decomposition up to kDenseEigenLimit, power iteration above it.
EigenRange extreme_eigs_sym(const DenseMatrix& a, double tol = 1e-10);
/// The power-iteration path of extreme_eigs_sym, exposed for testing.
EigenRange extreme_eigs_power(const DenseMatrix& a, double tol = 1e-10,
                              std::size_t max_iters = 100000);
/// All eigenvalues of a symmetric matrix, ascending.
std::vector<double> eigenvalues_sym(const DenseMatrix& a);
/// Rebuilds a symmetric matrix with its eigenvalues floored at `floor`.
DenseMatrix clip_eigenvalues(const DenseMatrix& a, double floor);
/// logdet and inverse of clip_eigenvalues(a, floor), read off the eigendecomposition
/// (a second Cholesky of the rebuilt matrix can fail when the spread is wide).
PdFactorization factor_clipped(const DenseMatrix& a, double floor);

double frobenius_norm(const DenseMatrix& a);
double frobenius_dist(const DenseMatrix& a, const DenseMatrix& b);
/// Largest singular value by power iteration on aᵀa.
double spectral_norm_est(const DenseMatrix& a, double tol = 1e-10,
                         std::size_t max_iters = 100000);

double trace(const DenseMatrix& a);
double l1_norm(const DenseMatrix& a);
std::size_t count_nonzeros(const DenseMatrix& a);
/// Max-entry asymmetry relative to the largest magnitude (absolute for a
/// zero matrix).
bool is_symmetric(const DenseMatrix& a, double rel_tol = 1e-10);
/// (a + aᵀ) / 2.
DenseMatrix symmetrize(const DenseMatrix& a);
bool all_finite(const DenseMatrix& a) noexcept;
void require_finite(const DenseMatrix& a, const char* context);
void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* context);

std::string shape_string(const DenseMatrix& a);

// CSV format shared by every tool: a `rows,cols` header line, then one
// comma-separated row per line at 17 significant digits.
void write_matrix_csv(std::ostream& out, const DenseMatrix& a);
DenseMatrix read_matrix_csv(std::istream& in);
void save_matrix_csv(const std::string& path, const DenseMatrix& a);
DenseMatrix load_matrix_csv(const std::string& path);

}  // namespace cape
