#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <sstream>

#include "cape/constraints.hpp"
#include "cape/errors.hpp"
#include "cape/experiments.hpp"
#include "cape/ingest.hpp"
#include "cape/solvers.hpp"
#include "cape/synth.hpp"
#include "cape/trace_io.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

cape::DenseMatrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw cape::ShapeError("expected a 2-d array, got " + std::to_string(a.ndim()) + "-d");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  std::vector<double> values(a.data(), a.data() + rows * cols);
  return cape::DenseMatrix(rows, cols, std::move(values));
}

Array to_array(const cape::DenseMatrix& m) {
  Array out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

cape::ProblemData to_data(const Array& x, const Array& y) {
  cape::ProblemData d{to_matrix(x), to_matrix(y)};
  d.validate();
  return d;
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw cape::ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

py::dict trace_dict(const cape::ConvergenceTrace& trace) {
  py::list iter, objective, err_gamma, err_omega, delta, clipped;
  for (const auto& r : trace.records) {
    iter.append(r.iter);
    objective.append(r.objective);
    err_gamma.append(r.err_gamma ? py::object(py::float_(*r.err_gamma)) : py::object(py::none()));
    err_omega.append(r.err_omega ? py::object(py::float_(*r.err_omega)) : py::object(py::none()));
    delta.append(r.delta ? py::object(py::float_(*r.delta)) : py::object(py::none()));
    clipped.append(r.clipped);
  }
  py::dict d;
  d["iter"] = iter;
  d["objective"] = objective;
  d["err_gamma"] = err_gamma;
  d["err_omega"] = err_omega;
  d["delta"] = delta;
  d["clipped"] = clipped;
  return d;
}

cape::SolverConfig make_config(std::size_t iters, double eta_gamma, double eta_omega, const std::string& gamma_spec,
                               const std::string& omega_spec, double clip_floor) {
  cape::SolverConfig cfg;
  cfg.max_iters = iters;
  cfg.eta_gamma = eta_gamma;
  cfg.eta_omega = eta_omega;
  cfg.gamma_constraint = cape::constraint_from_json(parse(gamma_spec));
  cfg.omega_constraint = cape::constraint_from_json(parse(omega_spec));
  if (clip_floor > 0.0) cfg.pd_fallback = cape::ClipEigen{clip_floor};
  return cfg;
}

std::optional<cape::GroundTruth> make_truth(const std::optional<Array>& gamma_star,
                                            const std::optional<Array>& omega_star,
                                            const std::optional<Array>& sigma_x) {
  if (!gamma_star || !omega_star) return std::nullopt;
  cape::GroundTruth t{to_matrix(*gamma_star), to_matrix(*omega_star), {}};
  t.sigma_x = sigma_x ? to_matrix(*sigma_x) : cape::DenseMatrix::identity(t.gamma_star.rows());
  return t;
}

py::tuple solve(bool iht, const Array& x, const Array& y, const Array& gamma0, const Array& omega0, std::size_t iters,
                double eta_gamma, double eta_omega, const std::string& gamma_spec, const std::string& omega_spec,
                double clip_floor, const std::optional<Array>& gamma_star, const std::optional<Array>& omega_star,
                const std::optional<Array>& sigma_x) {
  const auto data = to_data(x, y);
  auto cfg = make_config(iters, eta_gamma, eta_omega, gamma_spec, omega_spec, clip_floor);
  const auto truth = make_truth(gamma_star, omega_star, sigma_x);
  if (truth) cfg.trace_truth = &*truth;
  const cape::JointModel init{to_matrix(gamma0), to_matrix(omega0)};
  cape::SolverResult r;
  {
    py::gil_scoped_release release;
    r = iht ? cape::alt_iht(data, init, cfg) : cape::alt_pgd(data, init, cfg);
  }
  return py::make_tuple(to_array(r.model.gamma), to_array(r.model.omega), trace_dict(r.trace));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of cape: alternating gradient estimators for sparse Gamma and Omega";
  m.attr("__version__") = CAPE_VERSION;

  auto base = py::register_exception<cape::Error>(m, "CapeError", PyExc_RuntimeError);
  py::register_exception<cape::ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<cape::InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<cape::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<cape::IoError>(m, "IoError", base.ptr());
  auto numeric = py::register_exception<cape::NumericError>(m, "NumericError", base.ptr());
  py::register_exception<cape::NotPositiveDefinite>(m, "NotPositiveDefinite", numeric.ptr());
  py::register_exception<cape::IterationLimit>(m, "IterationLimit", numeric.ptr());

  // matrixcore
  m.def("logdet_pd", [](const Array& a) { return cape::logdet_pd(to_matrix(a)); });
  m.def("inverse_pd", [](const Array& a) { return to_array(cape::inverse_pd(to_matrix(a))); });
  m.def("cholesky", [](const Array& a) { return to_array(cape::cholesky(to_matrix(a))); });
  m.def(
      "extreme_eigs_sym",
      [](const Array& a, double tol) {
        const auto r = cape::extreme_eigs_sym(to_matrix(a), tol);
        return py::make_tuple(r.min, r.max);
      },
      py::arg("a"), py::arg("tol") = 1e-10);

  // model
  m.def("sample_loss", [](const Array& x, const Array& y, const Array& g, const Array& o) {
    return cape::sample_loss(to_data(x, y), {to_matrix(g), to_matrix(o)});
  });
  m.def("grad_gamma", [](const Array& x, const Array& y, const Array& g, const Array& o) {
    return to_array(cape::grad_gamma(to_data(x, y), {to_matrix(g), to_matrix(o)}));
  });
  m.def("grad_omega", [](const Array& x, const Array& y, const Array& g, const Array& o) {
    return to_array(cape::grad_omega(to_data(x, y), {to_matrix(g), to_matrix(o)}));
  });

  // constraints
  m.def(
      "hard_threshold",
      [](const Array& a, std::size_t s, bool symmetric) {
        return to_array(cape::hard_threshold(to_matrix(a), s, symmetric));
      },
      py::arg("a"), py::arg("s"), py::arg("symmetric") = false);
  m.def("project_l1_ball", [](const Array& a, double r) { return to_array(cape::project_l1_ball(to_matrix(a), r)); });
  m.def(
      "gaussian_width_sparse",
      [](std::size_t dim, std::size_t s, std::size_t draws, std::uint64_t seed) {
        const auto w = cape::gaussian_width_sparse(dim, s, draws, seed, 1);
        return py::make_tuple(w.mean, w.std_error);
      },
      py::arg("dim"), py::arg("s"), py::arg("draws") = 2000, py::arg("seed") = 1);

  // synth
  m.def("make_covariance",
        [](const std::string& design) { return to_array(cape::make_covariance(cape::design_from_json(parse(design)))); });
  m.def("make_sparse_gamma", [](std::size_t d, std::size_t mm, std::size_t s, std::uint64_t seed) {
    return to_array(cape::make_sparse_gamma(d, mm, s, seed));
  });
  m.def("sample_instance", [](const std::string& sigma, const std::string& omega, const Array& gamma, std::size_t n,
                              std::uint64_t seed) {
    const auto inst = cape::sample_instance(cape::design_from_json(parse(sigma)), cape::design_from_json(parse(omega)),
                                            to_matrix(gamma), n, seed);
    py::dict d;
    d["x"] = to_array(inst.data.x);
    d["y"] = to_array(inst.data.y);
    d["noise"] = to_array(inst.noise);
    d["gamma_star"] = to_array(inst.truth.gamma_star);
    d["omega_star"] = to_array(inst.truth.omega_star);
    d["sigma_x"] = to_array(inst.truth.sigma_x);
    return d;
  });

  // solvers
  m.def(
      "init_iht",
      [](const Array& x, const Array& y, std::size_t sg, std::size_t so, std::size_t inner, double ridge) {
        const auto r = cape::init_iht(to_data(x, y), sg, so, inner, ridge);
        return py::make_tuple(to_array(r.gamma), to_array(r.omega));
      },
      py::arg("x"), py::arg("y"), py::arg("s_gamma"), py::arg("s_omega"), py::arg("inner_iters") = cape::kDefaultInitIters,
      py::arg("ridge") = 0.0);
  m.def(
      "init_pgd",
      [](const Array& x, const Array& y, const std::string& gs, const std::string& os, std::size_t inner, double ridge) {
        const auto r = cape::init_pgd(to_data(x, y), cape::constraint_from_json(parse(gs)),
                                      cape::constraint_from_json(parse(os)), inner, ridge);
        return py::make_tuple(to_array(r.gamma), to_array(r.omega));
      },
      py::arg("x"), py::arg("y"), py::arg("gamma_spec"), py::arg("omega_spec"),
      py::arg("inner_iters") = cape::kDefaultInitIters, py::arg("ridge") = 0.0);
  for (const bool iht : {true, false}) {
    m.def(
        iht ? "alt_iht" : "alt_pgd",
        [iht](const Array& x, const Array& y, const Array& g0, const Array& o0, std::size_t iters, double eg, double eo,
              const std::string& gs, const std::string& os, double clip, const std::optional<Array>& gstar,
              const std::optional<Array>& ostar, const std::optional<Array>& sigma) {
          return solve(iht, x, y, g0, o0, iters, eg, eo, gs, os, clip, gstar, ostar, sigma);
        },
        py::arg("x"), py::arg("y"), py::arg("gamma0"), py::arg("omega0"), py::arg("iters"), py::arg("eta_gamma"),
        py::arg("eta_omega"), py::arg("gamma_spec"), py::arg("omega_spec"), py::arg("clip_floor") = 0.0,
        py::arg("gamma_star") = py::none(), py::arg("omega_star") = py::none(), py::arg("sigma_x") = py::none());
  }
  m.def(
      "pgd",
      [](const Array& x, const Array& y, const Array& omega_star, const std::string& gs, double eta, std::size_t iters,
         const std::optional<Array>& gamma_star) {
        std::optional<cape::DenseMatrix> gstar;
        if (gamma_star) gstar = to_matrix(*gamma_star);
        const auto r = cape::pgd(to_data(x, y), to_matrix(omega_star), cape::constraint_from_json(parse(gs)), eta,
                                 iters, gstar ? &*gstar : nullptr);
        return py::make_tuple(to_array(r.gamma), trace_dict(r.trace));
      },
      py::arg("x"), py::arg("y"), py::arg("omega_star"), py::arg("gamma_spec"), py::arg("eta"), py::arg("iters"),
      py::arg("gamma_star") = py::none());
  m.def(
      "theory",
      [](double nu_min, double nu_max, double tau_min, double tau_max) {
        const cape::TheoryBounds b{nu_min, nu_max, tau_min, tau_max};
        b.validate();
        const auto steps = cape::theory_step_sizes(b);
        const auto c = cape::theory_contraction(b);
        py::dict d;
        d["eta_gamma"] = steps.eta_gamma;
        d["eta_omega"] = steps.eta_omega;
        d["R"] = c.r_ball;
        d["rho_pop"] = c.rho_pop;
        d["pgd_eta"] = cape::pgd_step_size(b);
        d["sparsity_inflation"] = cape::sparsity_inflation(c.rho_pop);
        return d;
      },
      py::arg("nu_min") = 1.0, py::arg("nu_max") = 1.0, py::arg("tau_min") = 1.0, py::arg("tau_max") = 1.0);
  m.def("fit_linear_regime", [](const std::vector<double>& values) {
    const auto f = cape::fit_linear_regime(values);
    py::dict d;
    d["rate"] = f.rate;
    d["r_squared"] = f.r_squared;
    d["floor"] = f.floor;
    d["first"] = f.first;
    d["last"] = f.last;
    d["resolved"] = f.resolved;
    return d;
  });

  // experiments: spec in, summary JSON and records CSV out
  m.def("default_spec", [](const std::string& kind, bool paper_scale) {
    return cape::spec_to_json(cape::default_spec(cape::parse_experiment_kind(kind), paper_scale)).dump();
  }, py::arg("kind"), py::arg("paper_scale") = false);
  m.def("run_experiment", [](const std::string& spec_json) {
    const auto spec = cape::spec_from_json(parse(spec_json));
    cape::ExperimentResult r;
    {
      py::gil_scoped_release release;
      r = cape::run_experiment(spec);
    }
    std::ostringstream records;
    cape::write_records_csv(records, r.records, false);
    return py::make_tuple(cape::result_summary_json(r).dump(), records.str());
  });

  // ingest
  m.def("log_returns", [](const Array& prices) {
    cape::PricePanel p;
    p.prices = to_matrix(prices);
    for (std::size_t j = 0; j < p.prices.cols(); ++j) p.tickers.push_back("c" + std::to_string(j));
    for (std::size_t i = 0; i < p.prices.rows(); ++i) p.dates.push_back(std::to_string(i));
    return to_array(cape::log_returns(p));
  });
  m.def("lag_design", [](const Array& returns) {
    const auto d = cape::lag_design(to_matrix(returns));
    return py::make_tuple(to_array(d.x), to_array(d.y));
  });
}
