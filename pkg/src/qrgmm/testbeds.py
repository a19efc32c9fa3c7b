"""Synthetic simulators with closed-form conditional quantiles.

TP1 is a location-scale normal model that is exactly linear in quantile
regression terms; TP2 is a Laplace model whose location and scale are
nonlinear in x. BIVARIATE is a two-output Gaussian chain used to check the
multi-output generator. Covariates: x1 ~ U(0, 10), x2 ~ U(-5, 5),
x3 ~ U(0, 5), independent, with a leading constant 1 in every design row.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .core import Dataset, as_rng, validate_dataset, write_dataset_csv
from .errors import ConfigError, DimensionMismatch, MissingConditioner
from .solver import check_tau

_LOWS = np.array([0.0, -5.0, 0.0])
_HIGHS = np.array([10.0, 5.0, 5.0])


def _taus(tau):
    t = np.asarray(tau, dtype=float)
    if not np.all((t > 0.0) & (t < 1.0)):
        check_tau(t[~((t > 0.0) & (t < 1.0))].ravel()[0])
    return t


def _out(t, val):
    return float(val) if t.ndim == 0 else val


def normal_quantile(tau):
    """Standard normal inverse CDF."""
    t = _taus(tau)
    return _out(t, special.ndtri(t))


def normal_cdf(z):
    return special.ndtr(z)


def laplace_quantile(tau):
    """Laplace(0, 1) inverse CDF: ln(2 tau) below 1/2, -ln(2(1 - tau)) above."""
    t = _taus(tau)
    with np.errstate(divide="ignore"):
        q = np.where(t < 0.5, np.log(2.0 * t), -np.log(2.0 * (1.0 - t)))
    return _out(t, q)


def laplace_cdf(z):
    z = np.asarray(z, dtype=float)
    return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(z, 0.0)))


def _rows(x, dim):
    X = np.asarray(x, dtype=float)
    if X.shape[-1] != dim:
        raise DimensionMismatch(f"expected covariate vectors of length {dim}, got {X.shape[-1]}")
    return X


def tp1_location_scale(x):
    X = _rows(x, 4)
    mu = 5.0 * X[..., 0] + X[..., 1] + 2.0 * X[..., 2] + 0.5 * X[..., 3]
    sigma = X[..., 0] + 0.1 * X[..., 1] + 0.2 * X[..., 2] + 0.05 * X[..., 3]
    return mu, sigma


def tp1_beta(tau):
    """Coefficients with F^-1(tau | x) = beta(tau)' x for TP1."""
    z = normal_quantile(tau)
    return np.array([5.0 + z, 1.0 + 0.1 * z, 2.0 + 0.2 * z, 0.5 + 0.05 * z])


def tp1_quantile(x, tau):
    """mu(x) + sigma(x) z_tau with x = (1, x1, x2, x3)."""
    mu, sigma = tp1_location_scale(x)
    return mu + sigma * normal_quantile(tau)


def tp1_cdf(x, y):
    mu, sigma = tp1_location_scale(x)
    return normal_cdf((np.asarray(y, dtype=float) - mu) / sigma)


def tp2_location_scale(x):
    X = _rows(x, 3)
    loc = 0.05 * X[..., 1] * X[..., 2]
    scale = 5.0 * np.sin(X[..., 1] + X[..., 2]) ** 2 + 5.0
    return loc, scale


def tp2_quantile(x, tau):
    """l(x) + s(x) zeta_tau with x = (1, x1, x2), Laplace noise."""
    loc, scale = tp2_location_scale(x)
    return loc + scale * laplace_quantile(tau)


def tp2_cdf(x, y):
    loc, scale = tp2_location_scale(x)
    return laplace_cdf((np.asarray(y, dtype=float) - loc) / scale)


def bivariate_quantiles(x, tau, stage, y1=None):
    """Two-stage Gaussian chain: Y1 | x ~ N(x1, 1), Y2 | x, y1 ~ N(y1/2 + x2, 1).

    ``x`` is (1, x1, x2).
    """
    X = _rows(x, 3)
    z = normal_quantile(tau)
    if stage == 1:
        return X[..., 1] + z
    if stage == 2:
        if y1 is None:
            raise MissingConditioner("stage 2 needs the generated y1")
        return 0.5 * np.asarray(y1, dtype=float) + X[..., 2] + z
    raise DimensionMismatch(f"bivariate problem has stages 1 and 2, not {stage}")


BIVARIATE_CORRELATION = 0.5 / np.sqrt(1.25)


@dataclass(frozen=True)
class TestProblem:
    """Covariate sampler plus conditional quantile oracle.

    ``quantile(X, U)`` maps covariate rows and uniforms (one column per
    output) to responses; ``cdf(x, y)`` is the exact conditional CDF of a
    single-output problem.
    """

    __test__ = False  # not a pytest class

    name: str
    covariate_dim: int
    outputs: int
    quantile: Callable
    cdf: Callable | None = None

    @property
    def design_dim(self):
        return self.covariate_dim + 1

    def sample_covariates(self, n, rng):
        """n design rows (1, x1, ..., xk) with the documented uniform marginals."""
        k = self.covariate_dim
        U = as_rng(rng).uniform(n * k).reshape(n, k)
        return np.column_stack([np.ones(n), _LOWS[:k] + (_HIGHS[:k] - _LOWS[:k]) * U])

    def sample_responses(self, X, rng):
        U = as_rng(rng).uniform(X.shape[0] * self.outputs).reshape(X.shape[0], self.outputs)
        Y = self.quantile(X, U)
        return Y[:, 0] if self.outputs == 1 else Y

    def sample_at(self, x, K, rng):
        """K responses at one covariate vector."""
        X = np.broadcast_to(np.asarray(x, dtype=float), (int(K), self.design_dim))
        return self.sample_responses(X, rng)


def _tp1(X, U):
    return tp1_quantile(X, U[:, 0])[:, None]


def _tp2(X, U):
    return tp2_quantile(X, U[:, 0])[:, None]


def _biv(X, U):
    y1 = bivariate_quantiles(X, U[:, 0], 1)
    y2 = bivariate_quantiles(X, U[:, 1], 2, y1)
    return np.column_stack([y1, y2])


TP1 = TestProblem("tp1", 3, 1, _tp1, tp1_cdf)
TP2 = TestProblem("tp2", 2, 1, _tp2, tp2_cdf)
BIVARIATE = TestProblem("bivariate", 2, 2, _biv, None)

PROBLEMS = {p.name: p for p in (TP1, TP2, BIVARIATE)}


def get_problem(name):
    try:
        return PROBLEMS[name]
    except KeyError:
        raise ConfigError(f"unknown test problem {name!r}; choose from {sorted(PROBLEMS)}") from None


def sample_dataset(problem: TestProblem, n, rng, csv_path=None) -> Dataset:
    """n fresh observations; covariates and noise use child streams 0 and 1.

    With ``csv_path`` the data are also written in the CSV dataset format
    (intercept column dropped).
    """
    rng = as_rng(rng)
    X = problem.sample_covariates(int(n), rng.child(0))
    Y = problem.sample_responses(X, rng.child(1))
    ds = validate_dataset(X, Y)
    if csv_path is not None:
        write_dataset_csv(csv_path, ds, drop_intercept=True)
    return ds
