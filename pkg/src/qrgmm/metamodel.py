"""Generative metamodel: quantile regressions on a grid, interpolated sampling.

Offline, :func:`fit_grid` fits one linear quantile regression per level
tau_j = j/m. Online, a sample at x is Q(u | x) for a fresh uniform u, where
Q is the piecewise-linear interpolant of the node values Q(tau_j | x) with
constant tails below tau_1 and from tau_{m-1} upward.

A rearranged model sorts the node values at each x before interpolating, so
its quantile curve is monotone even when fitted levels cross. The table
itself is never altered; sorting happens per query point.
"""
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from . import _kernels
from .core import BasisSpec, Dataset, QuantileGrid, as_rng, expand_basis
from .errors import ConfigError, DimensionMismatch, NonFinite, QrgmmError
from .solver import (PREPROCESS_MIN_ROWS, SolverOptions, check_rank, check_tau,
                     fit_design, leverage_band)

# rows per block when a K x (m-1) node matrix is needed
_CHUNK = 4096


@dataclass(frozen=True)
class QuantileCoefficientTable:
    """Row j-1 holds the coefficients fitted at level j/m."""

    grid: QuantileGrid
    coefficients: np.ndarray

    def __post_init__(self):
        C = np.array(self.coefficients, dtype=float)
        if C.ndim != 2 or C.shape[0] != len(self.grid):
            raise DimensionMismatch(
                f"coefficient table needs {len(self.grid)} rows, got shape {C.shape}")
        if not np.all(np.isfinite(C)):
            raise NonFinite("coefficient table has non-finite entries")
        C.setflags(write=False)
        object.__setattr__(self, "coefficients", C)

    @classmethod
    def from_array(cls, coefficients):
        C = np.asarray(coefficients, dtype=float)
        if C.ndim == 1:
            C = C[:, None]
        return cls(QuantileGrid(C.shape[0] + 1), C)

    @property
    def m(self):
        return self.grid.m

    @property
    def p(self):
        return self.coefficients.shape[1]


@dataclass(frozen=True)
class GenerativeMetamodel:
    basis: BasisSpec
    table: QuantileCoefficientTable
    rearranged: bool = False

    def __post_init__(self):
        if self.basis.output_dim != self.table.p:
            raise DimensionMismatch(
                f"basis produces {self.basis.output_dim} features but the table has {self.table.p} columns")
        object.__setattr__(self, "rearranged", bool(self.rearranged))

    @property
    def m(self):
        return self.table.m

    def with_rearrangement(self, flag=True):
        return replace(self, rearranged=bool(flag))

    def node_values(self, x):
        """Unsorted node predictions Q~(tau_j | x); shape (m-1,) or (K, m-1)."""
        return expand_basis(self.basis, x) @ self.table.coefficients.T

    def _curve(self, x):
        v = self.node_values(x)
        if v.ndim != 1:
            raise DimensionMismatch("expected a single covariate vector")
        return np.sort(v, kind="stable") if self.rearranged else v


def model_from_coefficients(basis, coefficients, rearranged=False):
    """Build a model from an (m-1, p) coefficient array (row j-1 at level j/m)."""
    return GenerativeMetamodel(basis, QuantileCoefficientTable.from_array(coefficients), rearranged)


# ---------------------------------------------------------------------------
# fitting


def _level_order(k):
    """Visit levels from the middle outward so each fit warm-starts from a neighbour."""
    mid = (k - 1) // 2
    order = [(mid, None)]
    for j in range(mid + 1, k):
        order.append((j, j - 1))
    for j in range(mid - 1, -1, -1):
        order.append((j, j + 1))
    return order


def fit_grid(dataset: Dataset, basis: BasisSpec, m, opts: SolverOptions | None = None, *, cache=None):
    """Fit the coefficient table at tau_j = j/m, j = 1..m-1.

    Parameters
    ----------
    dataset : single-output Dataset whose design columns are the basis input.
    basis : feature map applied to every design row.
    m : grid size (>= 2).
    opts : solver options.
    cache : optional dict shared between calls on the *same* dataset and
        basis; fitted levels are stored under their reduced fraction so
        nested grids (m = 10, 100, 1000) reuse each other's fits.

    Errors raised by the solver are re-raised tagged with the level.
    """
    opts = opts or SolverOptions()
    grid = QuantileGrid(m)
    if dataset.d != 1:
        raise DimensionMismatch("fit_grid needs a single-output dataset; use fit_multi")
    B = expand_basis(basis, dataset.design)
    if B.shape[0] < B.shape[1]:
        raise DimensionMismatch(f"need at least {B.shape[1]} rows for this basis, got {B.shape[0]}")
    y = np.ascontiguousarray(dataset.response)
    try:
        check_rank(B)
    except QrgmmError as exc:
        raise exc.tag(tau=float(grid.levels[0]))

    band = None
    if opts.method == "interior-point" and (
            opts.preprocess is True or (opts.preprocess == "auto" and B.shape[0] >= PREPROCESS_MIN_ROWS)):
        band = leverage_band(B)

    k = len(grid)
    coefs = np.empty((k, B.shape[1]))
    for j, nb in _level_order(k):
        key = Fraction(j + 1, grid.m)
        if cache is not None and key in cache:
            coefs[j] = cache[key]
            continue
        tau = float(grid.levels[j])
        warm = coefs[nb] if nb is not None else None
        try:
            res = fit_design(B, y, tau, opts, rank_checked=True, warm_start=warm, band=band)
        except QrgmmError as exc:
            raise exc.tag(tau=tau)
        coefs[j] = res.beta
        if cache is not None:
            cache[key] = res.beta.copy()
    return GenerativeMetamodel(basis, QuantileCoefficientTable(grid, coefs), rearranged=False)


# ---------------------------------------------------------------------------
# interpolation and prediction


def _check_levels(tau):
    t = np.asarray(tau, dtype=float)
    if not np.all((t > 0.0) & (t < 1.0)):
        bad = t[~((t > 0.0) & (t < 1.0))].ravel()
        check_tau(bad[0])
    return t


def interpolate_coefficients(table: QuantileCoefficientTable, tau):
    """beta(tau) by linear interpolation between grid rows, constant tails."""
    t = _check_levels(tau)
    C = table.coefficients
    out = np.column_stack([_kernels.interp_nodes(C[:, c], np.atleast_1d(t)) for c in range(C.shape[1])])
    return out[0] if t.ndim == 0 else out


def predict_quantile(model: GenerativeMetamodel, x, tau):
    """Q(tau | x) for one covariate vector; ``tau`` may be scalar or array.

    Computed by interpolating node values, which equals the inner product of
    the interpolated coefficients with b(x) up to rounding.
    """
    t = _check_levels(tau)
    v = model._curve(x)
    out = _kernels.interp_nodes(v, np.atleast_1d(t))
    return float(out[0]) if t.ndim == 0 else out


def generate(model: GenerativeMetamodel, x, K, rng):
    """K samples Q(u_k | x) with u_k the next K uniforms of ``rng``."""
    K = int(K)
    if K < 1:
        raise ConfigError("K must be >= 1")
    v = model._curve(x)
    u = as_rng(rng).uniform(K)
    return _kernels.interp_nodes(v, u)


def generate_rows(model: GenerativeMetamodel, X, rng):
    """One sample per covariate row of ``X``; uniforms consumed in row order."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    u = as_rng(rng).uniform(X.shape[0])
    return sample_rows(model, X, u)


def sample_rows(model: GenerativeMetamodel, X, u):
    """Q(u_k | x_k) row by row for given uniforms."""
    B = expand_basis(model.basis, X)
    C = model.table.coefficients
    u = np.asarray(u, dtype=float)
    K = B.shape[0]
    if u.shape != (K,):
        raise DimensionMismatch("need one uniform per covariate row")
    if not model.rearranged:
        # only the two bracketing node values per row are needed; in the
        # tails both indices clip to the same end node
        m = model.m
        t = u * m
        j = np.floor(t)
        lo = np.clip(j - 1, 0, m - 2).astype(np.intp)
        hi = np.clip(j, 0, m - 2).astype(np.intp)
        vlo = np.einsum("ij,ij->i", B, C[lo])
        vhi = np.einsum("ij,ij->i", B, C[hi])
        return vlo + (t - j) * (vhi - vlo)
    out = np.empty(K)
    for s in range(0, K, _CHUNK):
        V = np.sort(B[s:s + _CHUNK] @ C.T, axis=1, kind="stable")
        out[s:s + _CHUNK] = _kernels.interp_rows(V, u[s:s + _CHUNK])
    return out


def rearrange(model: GenerativeMetamodel, x):
    """Node predictions at x sorted ascending (stable)."""
    return np.sort(np.asarray(model.node_values(x), dtype=float), kind="stable")


def crossing_fraction(v):
    """Share of positions where ``v`` differs from its sorted copy (exact)."""
    v = np.asarray(v, dtype=float)
    return float(np.mean(v != np.sort(v, kind="stable")))


def crossing_frequency(model: GenerativeMetamodel, x):
    """Fraction of grid nodes at x whose value moves under sorting.

    For a rearranged model the curve actually used is already sorted, so
    the result is 0.
    """
    return crossing_fraction(model._curve(x))


def implied_cdf(model: GenerativeMetamodel, x):
    """CDF of Q(U | x), U uniform, as a vectorised callable.

    Exact for the piecewise-linear curve, monotone or not: atoms of mass
    1/m at both end nodes and uniform mass 1/m spread over each segment.
    The returned function has an attribute ``left`` giving P(Q(U) < y),
    which :func:`~qrgmm.metrics.ks_vs_cdf` uses at the atoms.
    """
    v = model._curve(x)
    m = model.m
    a, b = v[:-1], v[1:]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    width = hi - lo
    flat = width == 0

    def mass(y, strict):
        y = np.asarray(y, dtype=float)
        flat_y = np.atleast_1d(y).ravel()
        out = np.empty(flat_y.shape)
        below = np.less if strict else np.less_equal
        for s in range(0, flat_y.size, _CHUNK):
            yy = flat_y[s:s + _CHUNK, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                frac = np.where(flat, below(lo, yy).astype(float),
                                np.clip((yy - lo) / np.where(flat, 1.0, width), 0.0, 1.0))
            total = below(v[0], yy[:, 0]).astype(float) + below(v[-1], yy[:, 0]) + frac.sum(axis=1)
            out[s:s + _CHUNK] = total / m
        return float(out[0]) if y.ndim == 0 else out.reshape(y.shape)

    def cdf(y):
        return mass(y, False)

    cdf.left = lambda y: mass(y, True)
    return cdf
