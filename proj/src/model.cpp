#include "cape/model.hpp"

#include "cape/errors.hpp"

namespace cape {

namespace {

void check_model_shapes(const ProblemData& data, const JointModel& model, const char* context) {
  data.validate();
  if (model.gamma.rows() != data.d() || model.gamma.cols() != data.m()) {
    throw ShapeError(std::string(context) + ": gamma is " + shape_string(model.gamma) +
                     ", expected " + std::to_string(data.d()) + "x" + std::to_string(data.m()));
  }
  if (model.omega.rows() != data.m() || model.omega.cols() != data.m()) {
    throw ShapeError(std::string(context) + ": omega is " + shape_string(model.omega) +
                     ", expected " + std::to_string(data.m()) + "x" + std::to_string(data.m()));
  }
}

void check_truth_shapes(const GroundTruth& truth, const JointModel& model, const char* context) {
  require_same_shape(truth.gamma_star, model.gamma, context);
  require_same_shape(truth.omega_star, model.omega, context);
  if (truth.sigma_x.rows() != model.gamma.rows() || !truth.sigma_x.is_square()) {
    throw ShapeError(std::string(context) + ": sigma_x is " + shape_string(truth.sigma_x));
  }
}

// Frobenius inner product ⟨a, b⟩ = tr(aᵀb).
double inner(const DenseMatrix& a, const DenseMatrix& b) {
  double s = 0.0;
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t k = 0; k < av.size(); ++k) s += av[k] * bv[k];
  return s;
}

DenseMatrix residual(const ProblemData& data, const DenseMatrix& gamma) {
  return data.y - matmul(data.x, gamma);
}

}  // namespace

void ProblemData::validate() const {
  if (x.rows() == 0) throw ShapeError("ProblemData: need at least one sample");
  if (x.rows() != y.rows()) {
    throw ShapeError("ProblemData: x has " + std::to_string(x.rows()) + " rows, y has " +
                     std::to_string(y.rows()));
  }
}

ProblemData ProblemData::rows(std::size_t first, std::size_t count) const {
  return {x.row_block(first, count), y.row_block(first, count)};
}

DenseMatrix residual_moment(const ProblemData& data, const DenseMatrix& gamma) {
  const DenseMatrix r = residual(data, gamma);
  DenseMatrix s = matmul_tn(r, r);
  s *= 1.0 / static_cast<double>(data.n());
  return symmetrize(s);
}

double sample_loss(const ProblemData& data, const JointModel& model) {
  check_model_shapes(data, model, "sample_loss");
  const double logdet = logdet_pd(model.omega);
  // tr(R Ω Rᵀ) = ⟨RᵀR, Ω⟩.
  const DenseMatrix r = residual(data, model.gamma);
  return -logdet + inner(matmul_tn(r, r), model.omega) / static_cast<double>(data.n());
}

DenseMatrix grad_gamma(const ProblemData& data, const JointModel& model) {
  check_model_shapes(data, model, "grad_gamma");
  const DenseMatrix r = residual(data, model.gamma);
  DenseMatrix g = matmul(matmul_tn(data.x, r), model.omega);
  g *= -2.0 / static_cast<double>(data.n());
  return g;
}

DenseMatrix grad_omega(const ProblemData& data, const JointModel& model) {
  check_model_shapes(data, model, "grad_omega");
  DenseMatrix g = residual_moment(data, model.gamma);
  g -= inverse_pd(model.omega);
  return symmetrize(g);
}

GramStats::GramStats(const ProblemData& data) : n_(data.n()) {
  data.validate();
  const double scale = 1.0 / static_cast<double>(n_);
  xtx_ = symmetrize(scale * matmul_tn(data.x, data.x));
  xty_ = scale * matmul_tn(data.x, data.y);
  yty_ = symmetrize(scale * matmul_tn(data.y, data.y));
}

DenseMatrix GramStats::residual_moment(const DenseMatrix& gamma) const {
  if (gamma.rows() != xtx_.rows() || gamma.cols() != yty_.rows()) {
    throw ShapeError("GramStats::residual_moment: gamma is " + shape_string(gamma));
  }
  // YᵀY/n - ΓᵀXᵀY/n - (ΓᵀXᵀY/n)ᵀ + ΓᵀXᵀXΓ/n
  const DenseMatrix cross = matmul_tn(gamma, xty_);
  DenseMatrix s = yty_;
  s -= cross;
  s -= cross.transpose();
  s += matmul_tn(gamma, matmul(xtx_, gamma));
  return symmetrize(s);
}

DenseMatrix GramStats::grad_gamma(const JointModel& model) const {
  DenseMatrix g = matmul(xtx_, model.gamma);
  g -= xty_;
  g = matmul(g, model.omega);
  g *= 2.0;
  return g;
}

DenseMatrix GramStats::grad_omega(const DenseMatrix& gamma, const DenseMatrix& omega_inverse) const {
  DenseMatrix g = residual_moment(gamma);
  g -= omega_inverse;
  return symmetrize(g);
}

double GramStats::loss(const DenseMatrix& gamma, const DenseMatrix& omega, double logdet_omega) const {
  return -logdet_omega + inner(residual_moment(gamma), omega);
}

double population_loss(const GroundTruth& truth, const JointModel& model) {
  check_truth_shapes(truth, model, "population_loss");
  const DenseMatrix diff = model.gamma - truth.gamma_star;
  const DenseMatrix quad = matmul_tn(diff, matmul(truth.sigma_x, diff));
  const DenseMatrix noise_cov = inverse_pd(truth.omega_star);
  return -logdet_pd(model.omega) + inner(quad, model.omega) + inner(noise_cov, model.omega);
}

DenseMatrix population_grad_gamma(const GroundTruth& truth, const JointModel& model) {
  check_truth_shapes(truth, model, "population_grad_gamma");
  DenseMatrix g = matmul(matmul(truth.sigma_x, model.gamma - truth.gamma_star), model.omega);
  g *= 2.0;
  return g;
}

DenseMatrix population_grad_omega(const GroundTruth& truth, const JointModel& model) {
  check_truth_shapes(truth, model, "population_grad_omega");
  const DenseMatrix diff = model.gamma - truth.gamma_star;
  DenseMatrix g = matmul_tn(diff, matmul(truth.sigma_x, diff));
  g += inverse_pd(truth.omega_star);
  g -= inverse_pd(model.omega);
  return symmetrize(g);
}

}  // namespace cape
