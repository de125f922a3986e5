#include "cape/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "cape/csv.hpp"
#include "cape/errors.hpp"

namespace cape {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void require_step(double eta, const char* name) {
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw InvalidArgument(std::string(name) + " must be positive and finite, got " + csv::format_double(eta));
  }
}

void check_init(const GramStats& stats, const JointModel& init) {
  const std::size_t d = stats.xtx().rows();
  const std::size_t m = stats.yty().rows();
  if (init.gamma.rows() != d || init.gamma.cols() != m) {
    throw ShapeError("initial gamma is " + shape_string(init.gamma) + ", expected " + std::to_string(d) +
                     "x" + std::to_string(m));
  }
  if (init.omega.rows() != m || init.omega.cols() != m) {
    throw ShapeError("initial omega is " + shape_string(init.omega) + ", expected " + std::to_string(m) +
                     "x" + std::to_string(m));
  }
  require_finite(init.gamma, "initial gamma");
  require_finite(init.omega, "initial omega");
  if (!is_symmetric(init.omega, 1e-10)) throw InvalidArgument("initial omega is not symmetric");
}

struct OmegaFactor {
  double logdet = 0.0;
  DenseMatrix inverse;
  bool clipped = false;
};

OmegaFactor factor_iterate(const DenseMatrix& omega, std::size_t iteration, const PdFallback& fallback) {
  try {
    PdFactorization f = factor_pd(omega);
    return {f.logdet, std::move(f.inverse), false};
  } catch (const NotPositiveDefinite& e) {
    if (const auto* clip = std::get_if<ClipEigen>(&fallback)) {
      PdFactorization f = factor_clipped(omega, clip->floor);
      return {f.logdet, std::move(f.inverse), true};
    }
    throw NotPositiveDefinite(e.pivot(), iteration,
                              "omega iterate " + std::to_string(iteration) +
                                  " is not positive definite (pivot " + std::to_string(e.pivot()) +
                                  "); lower eta_omega, loosen the omega budget or enable eigenvalue clipping");
  }
}

void add_errors(TraceRecord& rec, const GroundTruth* truth, const JointModel& model) {
  if (truth == nullptr) return;
  rec.err_gamma = frobenius_dist(model.gamma, truth->gamma_star);
  rec.err_omega = frobenius_dist(model.omega, truth->omega_star);
  rec.delta = std::max(*rec.err_gamma, *rec.err_omega);
}

enum class Projection { HardThreshold, General };

SolverResult alternate(const GramStats& stats, const JointModel& init, const SolverConfig& cfg,
                       Projection projection) {
  cfg.validate();
  check_init(stats, init);
  if (projection == Projection::HardThreshold &&
      !(cfg.gamma_constraint.is_sparsity() && cfg.omega_constraint.is_sparsity())) {
    throw InvalidArgument("alt_iht needs sparsity constraints on both blocks");
  }
  cfg.gamma_constraint.validate_for(init.gamma.rows(), init.gamma.cols());
  ConstraintSpec omega_spec = cfg.omega_constraint;
  omega_spec.symmetric = true;
  omega_spec.validate_for(init.omega.rows(), init.omega.cols());
  if (cfg.trace_truth != nullptr) {
    require_same_shape(cfg.trace_truth->gamma_star, init.gamma, "trace truth gamma");
    require_same_shape(cfg.trace_truth->omega_star, init.omega, "trace truth omega");
  }

  const auto start = Clock::now();
  SolverResult out{init, {}};
  out.trace.records.reserve(cfg.max_iters + 1);
  JointModel& cur = out.model;

  OmegaFactor fac = factor_iterate(cur.omega, 0, cfg.pd_fallback);
  for (std::size_t t = 0;; ++t) {
    TraceRecord rec;
    rec.iter = t;
    rec.objective = stats.loss(cur.gamma, cur.omega, fac.logdet);
    rec.clipped = fac.clipped;
    add_errors(rec, cfg.trace_truth, cur);
    rec.seconds = elapsed(start);
    out.trace.records.push_back(rec);
    if (t == cfg.max_iters) break;

    DenseMatrix g_gamma = stats.grad_gamma(cur);
    DenseMatrix g_omega = stats.grad_omega(cur.gamma, fac.inverse);
    g_gamma *= cfg.eta_gamma;
    g_omega *= cfg.eta_omega;
    DenseMatrix next_gamma = cur.gamma - g_gamma;
    DenseMatrix next_omega = cur.omega - g_omega;
    if (projection == Projection::HardThreshold) {
      const auto& sg = std::get<SparsityCount>(cfg.gamma_constraint.kind);
      const auto& so = std::get<SparsityCount>(cfg.omega_constraint.kind);
      cur.gamma = hard_threshold(next_gamma, sg.s, false);
      cur.omega = hard_threshold(next_omega, so.s, true);
    } else {
      cur.gamma = apply_constraint(next_gamma, cfg.gamma_constraint);
      cur.omega = symmetrize(apply_constraint(next_omega, omega_spec));
    }
    fac = factor_iterate(cur.omega, t + 1, cfg.pd_fallback);
  }
  return out;
}

double init_step(const GramStats& stats) {
  const double lmax = spectral_norm_est(stats.xtx());
  if (!(lmax > 0.0)) throw NumericError("initialisation: X'X/n is zero, no usable gradient step");
  return 1.0 / lmax;
}

DenseMatrix init_precision(const GramStats& stats, const DenseMatrix& gamma, double ridge) {
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) {
    throw InvalidArgument("initialisation ridge must be >= 0, got " + csv::format_double(ridge));
  }
  DenseMatrix s = stats.residual_moment(gamma);
  for (std::size_t i = 0; i < s.rows(); ++i) s(i, i) += ridge;
  try {
    return inverse_pd(s);
  } catch (const NotPositiveDefinite& e) {
    throw NotPositiveDefinite(e.pivot(), "initialisation: residual second moment plus ridge is not positive "
                                         "definite (pivot " + std::to_string(e.pivot()) +
                                             "); raise the ridge or use more samples");
  }
}

template <typename Project>
DenseMatrix init_gamma(const GramStats& stats, std::size_t inner_iters, Project&& project) {
  if (inner_iters < 1) throw InvalidArgument("initialisation needs at least one inner iteration");
  const double step = init_step(stats);
  DenseMatrix gamma(stats.xtx().rows(), stats.yty().rows());
  for (std::size_t k = 0; k < inner_iters; ++k) {
    DenseMatrix g = matmul(stats.xtx(), gamma);
    g -= stats.xty();
    g *= step;
    gamma = project(gamma - g);
  }
  return gamma;
}

}  // namespace

void SolverConfig::validate() const {
  require_step(eta_gamma, "eta_gamma");
  require_step(eta_omega, "eta_omega");
  if (const auto* clip = std::get_if<ClipEigen>(&pd_fallback)) {
    if (!(clip->floor > 0.0) || !std::isfinite(clip->floor)) {
      throw InvalidArgument("eigenvalue clipping floor must be positive, got " + csv::format_double(clip->floor));
    }
  }
}

std::size_t ConvergenceTrace::clip_events() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const TraceRecord& r) { return r.clipped; }));
}

std::vector<double> ConvergenceTrace::deltas() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!r.delta) throw InvalidArgument("trace has no error columns (no truth was supplied)");
    out.push_back(*r.delta);
  }
  return out;
}

SolverResult alt_iht(const GramStats& stats, const JointModel& init, const SolverConfig& cfg) {
  return alternate(stats, init, cfg, Projection::HardThreshold);
}

SolverResult alt_iht(const ProblemData& data, const JointModel& init, const SolverConfig& cfg) {
  return alt_iht(GramStats(data), init, cfg);
}

SolverResult alt_pgd(const GramStats& stats, const JointModel& init, const SolverConfig& cfg) {
  return alternate(stats, init, cfg, Projection::General);
}

SolverResult alt_pgd(const ProblemData& data, const JointModel& init, const SolverConfig& cfg) {
  return alt_pgd(GramStats(data), init, cfg);
}

JointModel init_iht(const GramStats& stats, std::size_t s_gamma, std::size_t s_omega,
                    std::size_t inner_iters, double ridge) {
  const std::size_t d = stats.xtx().rows();
  const std::size_t m = stats.yty().rows();
  ConstraintSpec::sparsity(s_gamma).validate_for(d, m);
  ConstraintSpec::sparsity(s_omega, true).validate_for(m, m);
  DenseMatrix gamma =
      init_gamma(stats, inner_iters, [&](const DenseMatrix& g) { return hard_threshold(g, s_gamma, false); });
  DenseMatrix omega = hard_threshold(init_precision(stats, gamma, ridge), s_omega, true);
  return {std::move(gamma), std::move(omega)};
}

JointModel init_iht(const ProblemData& data, std::size_t s_gamma, std::size_t s_omega,
                    std::size_t inner_iters, double ridge) {
  return init_iht(GramStats(data), s_gamma, s_omega, inner_iters, ridge);
}

JointModel init_pgd(const GramStats& stats, const ConstraintSpec& gamma_spec, const ConstraintSpec& omega_spec,
                    std::size_t inner_iters, double ridge) {
  const std::size_t d = stats.xtx().rows();
  const std::size_t m = stats.yty().rows();
  gamma_spec.validate_for(d, m);
  ConstraintSpec sym = omega_spec;
  sym.symmetric = true;
  sym.validate_for(m, m);
  DenseMatrix gamma =
      init_gamma(stats, inner_iters, [&](const DenseMatrix& g) { return apply_constraint(g, gamma_spec); });
  DenseMatrix omega = symmetrize(apply_constraint(init_precision(stats, gamma, ridge), sym));
  return {std::move(gamma), std::move(omega)};
}

JointModel init_pgd(const ProblemData& data, const ConstraintSpec& gamma_spec, const ConstraintSpec& omega_spec,
                    std::size_t inner_iters, double ridge) {
  return init_pgd(GramStats(data), gamma_spec, omega_spec, inner_iters, ridge);
}

PgdResult pgd(const ProblemData& data, const DenseMatrix& omega_star, const ConstraintSpec& gamma_spec,
              double eta, std::size_t iters, const DenseMatrix* gamma_star) {
  require_step(eta, "eta");
  const GramStats stats(data);
  if (omega_star.rows() != data.m() || omega_star.cols() != data.m()) {
    throw ShapeError("pgd: omega_star is " + shape_string(omega_star) + ", expected " +
                     std::to_string(data.m()) + "x" + std::to_string(data.m()));
  }
  // Fails early on an indefinite or asymmetric Ω⋆.
  (void)cholesky(omega_star);
  gamma_spec.validate_for(data.d(), data.m());
  if (gamma_star != nullptr) {
    if (gamma_star->rows() != data.d() || gamma_star->cols() != data.m()) {
      throw ShapeError("pgd: gamma_star is " + shape_string(*gamma_star));
    }
  }

  const auto start = Clock::now();
  PgdResult out{DenseMatrix(data.d(), data.m()), {}};
  out.trace.records.reserve(iters + 1);
  for (std::size_t t = 0;; ++t) {
    TraceRecord rec;
    rec.iter = t;
    const DenseMatrix s = stats.residual_moment(out.gamma);
    double obj = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) obj += s.values()[k] * omega_star.values()[k];
    rec.objective = 0.5 * obj;
    if (gamma_star != nullptr) {
      rec.err_gamma = frobenius_dist(out.gamma, *gamma_star);
      rec.delta = rec.err_gamma;
    }
    rec.seconds = elapsed(start);
    out.trace.records.push_back(rec);
    if (t == iters) break;

    DenseMatrix g = matmul(stats.xtx(), out.gamma);
    g -= stats.xty();
    g = matmul(g, omega_star);
    g *= eta;
    out.gamma = apply_constraint(out.gamma - g, gamma_spec);
  }
  return out;
}

TheoryBounds TheoryBounds::from_truth(const GroundTruth& truth) {
  const EigenRange nu = extreme_eigs_sym(truth.omega_star);
  const EigenRange tau = extreme_eigs_sym(truth.sigma_x);
  TheoryBounds b{nu.min, nu.max, tau.min, tau.max};
  b.validate();
  return b;
}

void TheoryBounds::validate() const {
  for (double v : {nu_min, nu_max, tau_min, tau_max}) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw InvalidArgument("eigenvalue bounds must be positive and finite, got " + csv::format_double(v));
    }
  }
  if (nu_min > nu_max) throw InvalidArgument("nu_min exceeds nu_max");
  if (tau_min > tau_max) throw InvalidArgument("tau_min exceeds tau_max");
}

StepSizes theory_step_sizes(const TheoryBounds& b) {
  b.validate();
  const double nmax2 = b.nu_max * b.nu_max;
  const double nmin2 = b.nu_min * b.nu_min;
  return {1.0 / (b.nu_max * b.tau_max + b.nu_min * b.tau_min), 8.0 * nmax2 * nmin2 / (16.0 * nmax2 + nmin2)};
}

Contraction theory_contraction(const TheoryBounds& b) {
  b.validate();
  const double nmax2 = b.nu_max * b.nu_max;
  const double nmin2 = b.nu_min * b.nu_min;
  Contraction c;
  c.r_ball = std::min({b.tau_min * b.nu_min / (2.0 * b.tau_max), 1.0 / (8.0 * b.tau_max * nmax2), 1.0});
  const double cond = b.tau_min * b.nu_min;
  c.rho_pop = std::max(1.0 - cond / (b.tau_max * b.nu_max + cond), 1.0 - nmin2 / (16.0 * nmax2 + nmin2));
  if (!(c.rho_pop > 0.0 && c.rho_pop < 1.0)) {
    throw NumericError("contraction factor " + csv::format_double(c.rho_pop) + " outside (0, 1)");
  }
  return c;
}

double pgd_step_size(const TheoryBounds& b) {
  b.validate();
  return 2.0 / (b.tau_max * b.nu_max + b.tau_min * b.nu_min);
}

double sparsity_inflation(double rho_pop) {
  if (!(rho_pop > 0.0 && rho_pop < 1.0)) {
    throw InvalidArgument("contraction factor must lie in (0, 1), got " + csv::format_double(rho_pop));
  }
  const double k = 1.0 / rho_pop - 1.0;
  return 1.0 + 4.0 * k * k;
}

RateFit fit_linear_regime(std::span<const double> values) {
  RateFit fit;
  fit.rate = std::numeric_limits<double>::quiet_NaN();
  fit.r_squared = std::numeric_limits<double>::quiet_NaN();
  if (values.empty()) return fit;
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("rate fit needs positive finite values");
  }
  const std::size_t tail = std::max<std::size_t>(1, values.size() / 10);
  double floor = 0.0;
  for (std::size_t k = values.size() - tail; k < values.size(); ++k) floor += values[k];
  fit.floor = floor / static_cast<double>(tail);

  fit.first = 1;
  fit.last = values.size() - 1;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] <= 2.0 * fit.floor) {
      fit.last = k;
      break;
    }
  }
  if (values.size() < 2 || fit.last < fit.first + 2) return fit;

  const std::size_t count = fit.last - fit.first + 1;
  double mean_t = 0.0;
  double mean_y = 0.0;
  for (std::size_t k = fit.first; k <= fit.last; ++k) {
    mean_t += static_cast<double>(k);
    mean_y += std::log(values[k]);
  }
  mean_t /= static_cast<double>(count);
  mean_y /= static_cast<double>(count);
  double stt = 0.0;
  double sty = 0.0;
  double syy = 0.0;
  for (std::size_t k = fit.first; k <= fit.last; ++k) {
    const double dt = static_cast<double>(k) - mean_t;
    const double dy = std::log(values[k]) - mean_y;
    stt += dt * dt;
    sty += dt * dy;
    syy += dy * dy;
  }
  const double slope = sty / stt;
  fit.rate = std::exp(slope);
  fit.r_squared = syy > 0.0 ? (sty * sty) / (stt * syy) : 1.0;
  fit.resolved = true;
  return fit;
}

}  // namespace cape
