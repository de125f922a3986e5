#include "cape/matrix.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "cape/csv.hpp"
#include "cape/errors.hpp"

namespace cape {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap as_eigen(const DenseMatrix& a) {
  return ConstMap(a.values().data(), static_cast<Eigen::Index>(a.rows()),
                  static_cast<Eigen::Index>(a.cols()));
}

MutMap as_eigen(DenseMatrix& a) {
  return MutMap(a.values().data(), static_cast<Eigen::Index>(a.rows()),
                static_cast<Eigen::Index>(a.cols()));
}

void require_square(const DenseMatrix& a, const char* context) {
  if (!a.is_square()) {
    throw ShapeError(std::string(context) + ": expected a square matrix, got " + shape_string(a));
  }
}

void require_symmetric(const DenseMatrix& a, const char* context) {
  require_square(a, context);
  if (!is_symmetric(a, 1e-10)) {
    throw InvalidArgument(std::string(context) + ": matrix is not symmetric to 1e-10 relative");
  }
}

double max_abs(const DenseMatrix& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw ShapeError("DenseMatrix: " + std::to_string(values_.size()) + " values for shape " +
                     std::to_string(rows_) + "x" + std::to_string(cols_));
  }
  require_finite(*this, "DenseMatrix");
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> diag) {
  DenseMatrix out(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) out(i, i) = diag[i];
  require_finite(out, "DenseMatrix::diagonal");
  return out;
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("DenseMatrix::from_rows: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return DenseMatrix(r, c, std::move(values));
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix out(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) out(j, i) = (*this)(i, j);
  return out;
}

DenseMatrix DenseMatrix::row_block(std::size_t first, std::size_t count) const {
  if (first + count > rows_) throw ShapeError("row_block: range exceeds row count");
  DenseMatrix out(count, cols_);
  std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(first * cols_), count * cols_,
              out.values_.begin());
  return out;
}

DenseMatrix& DenseMatrix::operator+=(const DenseMatrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += other.values_[k];
  return *this;
}

DenseMatrix& DenseMatrix::operator-=(const DenseMatrix& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= other.values_[k];
  return *this;
}

DenseMatrix& DenseMatrix::operator*=(double scale) noexcept {
  for (double& v : values_) v *= scale;
  return *this;
}

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
DenseMatrix operator*(double scale, DenseMatrix a) { return a *= scale; }

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_string(a) + " times " + shape_string(b));
  }
  DenseMatrix out(a.rows(), b.cols());
  if (out.empty() || a.cols() == 0) return out;
  as_eigen(out).noalias() = as_eigen(a) * as_eigen(b);
  return out;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: " + shape_string(a) + "^T times " + shape_string(b));
  }
  DenseMatrix out(a.cols(), b.cols());
  if (out.empty() || a.rows() == 0) return out;
  as_eigen(out).noalias() = as_eigen(a).transpose() * as_eigen(b);
  return out;
}

DenseMatrix cholesky(const DenseMatrix& a) {
  require_finite(a, "cholesky");
  require_symmetric(a, "cholesky");
  const std::size_t n = a.rows();
  DenseMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double pivot = a(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > 0.0) || !std::isfinite(pivot)) {
      std::ostringstream msg;
      msg << "matrix is not positive definite (pivot " << j << " = " << pivot << ")";
      throw NotPositiveDefinite(j, msg.str());
    }
    const double ljj = std::sqrt(pivot);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

PdFactorization factor_pd(const DenseMatrix& a) {
  const DenseMatrix l = cholesky(a);
  const std::size_t n = l.rows();
  PdFactorization out;
  for (std::size_t i = 0; i < n; ++i) out.logdet += 2.0 * std::log(l(i, i));

  // Invert the lower factor column by column, then form L⁻ᵀ L⁻¹.
  DenseMatrix linv(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    linv(j, j) = 1.0 / l(j, j);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = j; k < i; ++k) s -= l(i, k) * linv(k, j);
      linv(i, j) = s / l(i, i);
    }
  }
  out.inverse = symmetrize(matmul_tn(linv, linv));
  return out;
}

double logdet_pd(const DenseMatrix& a) {
  const DenseMatrix l = cholesky(a);
  double sum = 0.0;
  for (std::size_t i = 0; i < l.rows(); ++i) sum += std::log(l(i, i));
  return 2.0 * sum;
}

DenseMatrix inverse_pd(const DenseMatrix& a) { return factor_pd(a).inverse; }

std::vector<double> eigenvalues_sym(const DenseMatrix& a) {
  require_finite(a, "eigenvalues_sym");
  require_symmetric(a, "eigenvalues_sym");
  if (a.empty()) return {};
  Eigen::MatrixXd dense = as_eigen(a);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw IterationLimit("eigenvalues_sym: solver did not converge");
  const auto& ev = solver.eigenvalues();
  return std::vector<double>(ev.data(), ev.data() + ev.size());
}

DenseMatrix clip_eigenvalues(const DenseMatrix& a, double floor) {
  require_finite(a, "clip_eigenvalues");
  require_symmetric(a, "clip_eigenvalues");
  Eigen::MatrixXd dense = as_eigen(a);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense);
  if (solver.info() != Eigen::Success) throw IterationLimit("clip_eigenvalues: solver did not converge");
  Eigen::VectorXd clipped = solver.eigenvalues().cwiseMax(floor);
  Eigen::MatrixXd rebuilt =
      solver.eigenvectors() * clipped.asDiagonal() * solver.eigenvectors().transpose();
  DenseMatrix out(a.rows(), a.cols());
  as_eigen(out) = rebuilt;
  return symmetrize(out);
}

PdFactorization factor_clipped(const DenseMatrix& a, double floor) {
  require_finite(a, "factor_clipped");
  require_symmetric(a, "factor_clipped");
  if (!(floor > 0.0)) throw InvalidArgument("factor_clipped: floor must be positive");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(as_eigen(a));
  if (solver.info() != Eigen::Success) throw IterationLimit("factor_clipped: solver did not converge");
  const Eigen::VectorXd lambda = solver.eigenvalues().cwiseMax(floor);
  PdFactorization f;
  f.logdet = lambda.array().log().sum();
  f.inverse = DenseMatrix(a.rows(), a.cols());
  as_eigen(f.inverse) = solver.eigenvectors() * lambda.cwiseInverse().asDiagonal() * solver.eigenvectors().transpose();
  f.inverse = symmetrize(f.inverse);
  return f;
}

namespace {

// Dominant eigenpair of a symmetric matrix by power iteration; returns the
// signed Rayleigh quotient.
double dominant_eigenvalue(const DenseMatrix& a, double tol, std::size_t max_iters) {
  const std::size_t n = a.rows();
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = 1.0 + 0.5 * std::sin(1.0 + double(i));
  v.normalize();
  const auto map = as_eigen(a);
  double lambda = v.dot(map * v);
  for (std::size_t it = 0; it < max_iters; ++it) {
    Eigen::VectorXd w = map * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    const double next = v.dot(map * v);
    if (std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next))) return next;
    lambda = next;
  }
  throw IterationLimit("power iteration did not converge within " + std::to_string(max_iters) +
                       " iterations");
}

}  // namespace

EigenRange extreme_eigs_power(const DenseMatrix& a, double tol, std::size_t max_iters) {
  require_finite(a, "extreme_eigs_power");
  require_symmetric(a, "extreme_eigs_power");
  if (a.empty()) throw ShapeError("extreme_eigs_power: empty matrix");
  const double first = dominant_eigenvalue(a, tol, max_iters);
  DenseMatrix shifted = a;
  for (std::size_t i = 0; i < a.rows(); ++i) shifted(i, i) -= first;
  const double other = dominant_eigenvalue(shifted, tol, max_iters) + first;
  return {std::min(first, other), std::max(first, other)};
}

EigenRange extreme_eigs_sym(const DenseMatrix& a, double tol) {
  if (a.rows() <= kDenseEigenLimit) {
    const auto ev = eigenvalues_sym(a);
    if (ev.empty()) throw ShapeError("extreme_eigs_sym: empty matrix");
    return {ev.front(), ev.back()};
  }
  return extreme_eigs_power(a, tol);
}

double frobenius_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

double frobenius_dist(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "frobenius_dist");
  double s = 0.0;
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t k = 0; k < av.size(); ++k) {
    const double d = av[k] - bv[k];
    s += d * d;
  }
  return std::sqrt(s);
}

double spectral_norm_est(const DenseMatrix& a, double tol, std::size_t max_iters) {
  require_finite(a, "spectral_norm_est");
  if (a.empty()) return 0.0;
  const auto map = as_eigen(a);
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.cols()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = 1.0 + 0.5 * std::sin(1.0 + double(i));
  v.normalize();
  double sigma2 = (map * v).squaredNorm();
  for (std::size_t it = 0; it < max_iters; ++it) {
    Eigen::VectorXd w = map.transpose() * (map * v);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    const double next = (map * v).squaredNorm();
    if (std::abs(next - sigma2) <= tol * std::max(1.0, next)) return std::sqrt(next);
    sigma2 = next;
  }
  throw IterationLimit("spectral_norm_est: power iteration did not converge");
}

double trace(const DenseMatrix& a) {
  require_square(a, "trace");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, i);
  return s;
}

double l1_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += std::abs(v);
  return s;
}

std::size_t count_nonzeros(const DenseMatrix& a) {
  return static_cast<std::size_t>(
      std::count_if(a.values().begin(), a.values().end(), [](double v) { return v != 0.0; }));
}

bool is_symmetric(const DenseMatrix& a, double rel_tol) {
  if (!a.is_square()) return false;
  const double bound = rel_tol * max_abs(a);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j)
      if (std::abs(a(i, j) - a(j, i)) > bound) return false;
  return true;
}

DenseMatrix symmetrize(const DenseMatrix& a) {
  require_square(a, "symmetrize");
  DenseMatrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    out(i, i) = a(i, i);
    for (std::size_t j = i + 1; j < a.cols(); ++j) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

bool all_finite(const DenseMatrix& a) noexcept {
  return std::all_of(a.values().begin(), a.values().end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const DenseMatrix& a, const char* context) {
  if (!all_finite(a)) throw InvalidArgument(std::string(context) + ": non-finite entry");
}

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* context) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(context) + ": shape " + shape_string(a) + " vs " + shape_string(b));
  }
}

std::string shape_string(const DenseMatrix& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

void write_matrix_csv(std::ostream& out, const DenseMatrix& a) {
  out << a.rows() << ',' << a.cols() << '\n';
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      if (j) out << ',';
      out << csv::format_double(a(i, j));
    }
    out << '\n';
  }
}

DenseMatrix read_matrix_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("matrix csv: missing header");
  const auto header = csv::split_line(line);
  if (header.size() != 2) throw IoError("matrix csv: header must be `rows,cols`");
  const auto r = csv::parse_integer(header[0]);
  const auto c = csv::parse_integer(header[1]);
  if (!r || !c || *r < 0 || *c < 0) throw IoError("matrix csv: malformed header `" + line + "`");
  const auto rows = static_cast<std::size_t>(*r);
  const auto cols = static_cast<std::size_t>(*c);
  std::vector<double> values;
  values.reserve(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) {
      throw IoError("matrix csv: expected " + std::to_string(rows) + " rows, found " + std::to_string(i));
    }
    const auto fields = csv::split_line(line);
    if (fields.size() != cols) {
      throw IoError("matrix csv: row " + std::to_string(i) + " has " + std::to_string(fields.size()) +
                    " fields, expected " + std::to_string(cols));
    }
    for (std::size_t j = 0; j < cols; ++j) {
      const auto v = csv::parse_double(fields[j]);
      if (!v || !std::isfinite(*v)) {
        throw IoError("matrix csv: bad value at row " + std::to_string(i) + ", column " +
                      std::to_string(j));
      }
      values.push_back(*v);
    }
  }
  return DenseMatrix(rows, cols, std::move(values));
}

void save_matrix_csv(const std::string& path, const DenseMatrix& a) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_matrix_csv(out, a);
  if (!out) throw IoError("failed writing " + path);
}

DenseMatrix load_matrix_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  try {
    return read_matrix_csv(in);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace cape
