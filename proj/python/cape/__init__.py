"""Joint sparse regression and precision-matrix estimation.

Matrices are numpy arrays. Constraint and design arguments take plain dicts,
e.g. ``{"kind": "sparsity", "s": 200}`` or ``{"kind": "band", "dim": 100,
"diag": 1.0, "off": 0.4}``.
"""

import csv
import io
import json

from . import _core
from ._core import (  # noqa: F401
    CapeError,
    ConfigError,
    InvalidArgument,
    IoError,
    IterationLimit,
    NotPositiveDefinite,
    NumericError,
    ShapeError,
    cholesky,
    extreme_eigs_sym,
    fit_linear_regime,
    gaussian_width_sparse,
    grad_gamma,
    grad_omega,
    hard_threshold,
    inverse_pd,
    lag_design,
    log_returns,
    logdet_pd,
    make_sparse_gamma,
    project_l1_ball,
    sample_loss,
    theory,
)

__version__ = _core.__version__


def _dump(obj):
    return obj if isinstance(obj, str) else json.dumps(obj)


def make_covariance(design):
    return _core.make_covariance(_dump(design))


def sample_instance(sigma, omega, gamma, n, seed):
    return _core.sample_instance(_dump(sigma), _dump(omega), gamma, n, seed)


def init_iht(x, y, s_gamma, s_omega, inner_iters=2, ridge=0.0):
    return _core.init_iht(x, y, s_gamma, s_omega, inner_iters, ridge)


def init_pgd(x, y, gamma_spec, omega_spec, inner_iters=2, ridge=0.0):
    return _core.init_pgd(x, y, _dump(gamma_spec), _dump(omega_spec), inner_iters, ridge)


def _solve(fn, x, y, gamma0, omega0, iters, eta_gamma, eta_omega, gamma_spec, omega_spec, clip_floor=0.0, truth=None):
    truth = truth or {}
    return fn(x, y, gamma0, omega0, iters, eta_gamma, eta_omega, _dump(gamma_spec), _dump(omega_spec), clip_floor,
              truth.get("gamma_star"), truth.get("omega_star"), truth.get("sigma_x"))


def alt_iht(x, y, gamma0, omega0, iters, eta_gamma, eta_omega, gamma_spec, omega_spec, clip_floor=0.0, truth=None):
    """Returns (gamma, omega, trace dict)."""
    return _solve(_core.alt_iht, x, y, gamma0, omega0, iters, eta_gamma, eta_omega, gamma_spec, omega_spec,
                  clip_floor, truth)


def alt_pgd(x, y, gamma0, omega0, iters, eta_gamma, eta_omega, gamma_spec, omega_spec, clip_floor=0.0, truth=None):
    return _solve(_core.alt_pgd, x, y, gamma0, omega0, iters, eta_gamma, eta_omega, gamma_spec, omega_spec,
                  clip_floor, truth)


def pgd(x, y, omega_star, gamma_spec, eta, iters, gamma_star=None):
    return _core.pgd(x, y, omega_star, _dump(gamma_spec), eta, iters, gamma_star)


def default_spec(kind, paper_scale=False):
    return json.loads(_core.default_spec(kind, paper_scale))


def run_experiment(spec):
    """Runs a sweep. Returns (summary dict, list of record dicts)."""
    summary, records = _core.run_experiment(_dump(spec))
    return json.loads(summary), list(csv.DictReader(io.StringIO(records)))
