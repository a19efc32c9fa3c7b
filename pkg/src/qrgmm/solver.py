"""Linear quantile regression: minimise the pinball loss over coefficients.

Two methods are available:

``interior-point``
    Primal-dual Mehrotra predictor-corrector on the LP form of the problem
    (compiled kernel with a numpy fallback). For large n the rows far from
    the fitted plane are first collapsed into two pseudo-observations whose
    residual signs are verified afterwards, so the answer is still an exact
    LP optimum up to the duality-gap tolerance.

``smoothed-newton``
    Damped Newton on a Huber-smoothed loss with the smoothing width shrunk
    geometrically, finished by a vertex polish (exact interpolation of the p
    smallest residuals) when that lowers the true objective.

When the optimum is not unique the interior-point method returns a point
near the centre of the optimal face; callers should rely on the objective,
not on which optimum was picked.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import Dataset, SeededRng
from .errors import ConfigError, DimensionMismatch, InvalidTau, NotConverged, RankDeficient

METHODS = ("interior-point", "smoothed-newton")

# below this many rows the reduction costs more than it saves
PREPROCESS_MIN_ROWS = 3000
_PREPROCESS_SEED = 0x51A7E


def check_tau(tau):
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise InvalidTau(f"quantile level must lie in (0, 1), got {tau}")
    return tau


def pinball_loss(tau, u):
    """rho_tau(u) = (tau - 1{u <= 0}) * u, elementwise."""
    tau = check_tau(tau)
    u = np.asarray(u, dtype=float)
    out = np.where(u > 0, tau * u, (tau - 1.0) * u)
    return float(out) if out.ndim == 0 else out


def total_pinball(X, y, tau, beta):
    r = y - X @ beta
    return float(np.sum(np.where(r > 0, tau * r, (tau - 1.0) * r)))


@dataclass(frozen=True)
class SolverOptions:
    method: str = "interior-point"
    tolerance: float = 1e-8
    max_iterations: int = 200
    smoothing_epsilon: float = 1e-6
    # "auto" reduces only when n >= PREPROCESS_MIN_ROWS
    preprocess: object = "auto"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown solver method {self.method!r}")
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        if int(self.max_iterations) < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not self.smoothing_epsilon > 0:
            raise ConfigError("smoothing_epsilon must be positive")
        if self.preprocess not in ("auto", True, False):
            raise ConfigError("preprocess must be 'auto', True or False")


@dataclass(frozen=True)
class FitResult:
    beta: np.ndarray
    objective: float
    iterations: int
    converged: bool


def check_rank(X):
    p = X.shape[1]
    rank = np.linalg.matrix_rank(X)
    if rank < p:
        raise RankDeficient(f"design matrix has rank {rank} < {p} columns")


def fit(dataset: Dataset, tau, opts: SolverOptions | None = None) -> FitResult:
    """Fit beta(tau) = argmin sum_i rho_tau(y_i - beta' x_i) on ``dataset``.

    The design is used as given: include an intercept column yourself.
    Raises :class:`RankDeficient` for a rank-deficient design. When the
    iteration cap is hit the best iterate is returned with
    ``converged=False`` and a :class:`NotConverged` warning is issued.
    """
    tau = check_tau(tau)
    if dataset.d != 1:
        raise DimensionMismatch("fit needs a single-output dataset")
    return fit_design(dataset.design, dataset.response, tau, opts)


def fit_design(X, y, tau, opts=None, *, rank_checked=False, warm_start=None, band=None):
    """Array-level :func:`fit`; the extra keywords serve grid fitting.

    ``warm_start`` is a coefficient vector from a nearby level used to place
    the reduction band; ``band`` caches :func:`leverage_band` for ``X``.
    """
    opts = opts or SolverOptions()
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.shape[0] < X.shape[1]:
        raise DimensionMismatch(f"need at least {X.shape[1]} rows, got {X.shape[0]}")
    if not rank_checked:
        check_rank(X)
    if opts.method == "smoothed-newton":
        beta, iters, ok = _smoothed_newton(X, y, tau, opts)
    else:
        n = X.shape[0]
        reduce = opts.preprocess is True or (opts.preprocess == "auto" and n >= PREPROCESS_MIN_ROWS)
        if reduce:
            beta, iters, ok = _ipm_reduced(X, y, tau, opts, warm_start, band)
        else:
            beta, iters, status = _kernels.qr_ipm(X, y, tau, opts.tolerance, opts.max_iterations)
            ok = status == _kernels.CONVERGED
    beta = np.asarray(beta, dtype=float)
    if not ok:
        warnings.warn(f"quantile fit at tau={tau} stopped after {iters} iterations without "
                      "meeting the tolerance", NotConverged, stacklevel=3)
    return FitResult(beta=beta, objective=total_pinball(X, y, tau, beta), iterations=int(iters), converged=bool(ok))


# ---------------------------------------------------------------------------
# interior point with row reduction


def leverage_band(X):
    """Row norms ||x_i' R^-T|| with X'X = R R'; scales residuals for banding."""
    R = np.linalg.cholesky(X.T @ X)
    Z = np.linalg.solve(R, X.T).T
    return np.sqrt(np.einsum("ij,ij->i", Z, Z))


def _ipm_reduced(X, y, tau, opts, warm_start=None, band=None, max_fixups=6):
    n, p = X.shape
    tol, maxit = opts.tolerance, opts.max_iterations
    msub = int(round(((p + 1) * n) ** (2.0 / 3.0)))
    total_iters = 0
    if band is None:
        band = leverage_band(X)
    if warm_start is None:
        idx = np.sort(SeededRng(_PREPROCESS_SEED, (n,)).permutation(n)[:msub])
        beta0, it, _ = _kernels.qr_ipm(X[idx], y[idx], tau, tol, maxit)
        total_iters += it
        M = 0.8 * msub
    else:
        beta0 = np.asarray(warm_start, dtype=float)
        M = 0.4 * msub
    r = y - X @ beta0
    scaled = r / np.maximum(band, 1e-300)

    while M < n / 2:
        lo = max(1.0 / n, tau - M / (2 * n))
        hi = min(tau + M / (2 * n), (n - 1.0) / n)
        k_lo, k_hi = np.quantile(scaled, [lo, hi])
        below = scaled < k_lo
        above = scaled > k_hi
        for _ in range(max_fixups):
            keep = ~(below | above)
            Xr, yr = [X[keep]], [y[keep]]
            if below.any():
                Xr.append(X[below].sum(axis=0)[None, :])
                yr.append([y[below].sum()])
            if above.any():
                Xr.append(X[above].sum(axis=0)[None, :])
                yr.append([y[above].sum()])
            beta, it, status = _kernels.qr_ipm(np.vstack(Xr), np.concatenate(yr), tau, tol, maxit)
            total_iters += it
            r = y - X @ beta
            wrong_lo = below & (r > 0)
            wrong_hi = above & (r < 0)
            n_wrong = int(wrong_lo.sum() + wrong_hi.sum())
            if n_wrong == 0:
                return beta, total_iters, status == _kernels.CONVERGED
            if n_wrong > 0.1 * M:
                break
            below &= ~wrong_lo
            above &= ~wrong_hi
        M *= 2
        scaled = r / np.maximum(band, 1e-300)

    beta, it, status = _kernels.qr_ipm(X, y, tau, tol, maxit)
    return beta, total_iters + it, status == _kernels.CONVERGED


# ---------------------------------------------------------------------------
# smoothed Newton


def _smoothed_parts(r, tau, eps):
    """Smoothed loss value, its derivative in r and curvature weights."""
    c = np.where(r >= 0, tau, 1.0 - tau)
    ar = np.abs(r)
    quad = ar <= eps
    val = c * np.where(quad, ar * ar / (2 * eps), ar - eps / 2)
    dval = np.where(r >= 0, tau, tau - 1.0) * np.where(quad, ar / eps, 1.0)
    curv = np.where(quad, c / eps, 0.0)
    return float(val.sum()), dval, curv


def _smoothed_newton(X, y, tau, opts):
    n, p = X.shape
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    r = y - X @ beta
    scale = float(np.mean(np.abs(r - np.median(r))))
    if scale == 0.0:
        return beta, 0, True
    eps = scale
    eps_final = opts.smoothing_epsilon * scale
    xnorm = np.abs(X).sum(axis=0).max()
    # Levenberg-Marquardt damping relative to the curvature the loss would
    # have if every residual sat in the quadratic zone; the smoothed Hessian
    # alone is singular once fewer than p residuals do
    damp = np.diag(np.diag(X.T @ X)) * max(tau, 1.0 - tau)
    iters = 0
    stage_ok = False
    while True:
        stage_ok = False
        mu = 1e-3
        f, dval, curv = _smoothed_parts(r, tau, eps)
        while iters < opts.max_iterations:
            iters += 1
            grad = -X.T @ dval
            if np.max(np.abs(grad)) <= opts.tolerance * xnorm:
                stage_ok = True
                break
            H = (X * curv[:, None]).T @ X
            try:
                step = np.linalg.solve(H + (mu / eps) * damp, -grad)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            cand = beta + step
            rc = y - X @ cand
            fc, dc, cc = _smoothed_parts(rc, tau, eps)
            if fc <= f + 1e-4 * (grad @ step):
                small = np.max(np.abs(step)) <= opts.tolerance * (1.0 + np.max(np.abs(cand)))
                beta, r, f, dval, curv = cand, rc, fc, dc, cc
                mu = max(mu / 10.0, 1e-12)
                if small:
                    stage_ok = True
                    break
            else:
                mu *= 10.0
                if mu > 1e12:
                    stage_ok = True  # no descent left at this width
                    break
        if eps <= eps_final or iters >= opts.max_iterations:
            break
        eps = max(eps * 0.1, eps_final)
    beta = _vertex_polish(X, y, tau, beta)
    return beta, iters, stage_ok


def _vertex_polish(X, y, tau, beta):
    """Interpolate the p smallest residuals exactly if that lowers the loss."""
    p = X.shape[1]
    r = y - X @ beta
    order = np.argsort(np.abs(r), kind="stable")[: max(p, min(len(r), 3 * p))]
    # greedy pick of p linearly independent rows among the smallest residuals
    rows = []
    for i in order:
        trial = rows + [i]
        if np.linalg.matrix_rank(X[trial]) == len(trial):
            rows = trial
        if len(rows) == p:
            break
    if len(rows) < p:
        return beta
    cand = np.linalg.solve(X[rows], y[rows])
    if total_pinball(X, y, tau, cand) <= total_pinball(X, y, tau, beta):
        return cand
    return beta


def directional_derivatives(X, y, tau, beta, zero_tol=0.0):
    """One-sided derivatives of the pinball objective along +e_k and -e_k.

    Returns an array of shape (p, 2). Residuals with ``|r| <= zero_tol``
    are treated as exactly zero. All entries are >= 0 at an optimum.
    """
    X = np.asarray(X, dtype=float)
    r = np.asarray(y, dtype=float) - X @ np.asarray(beta, dtype=float)
    zero = np.abs(r) <= zero_tol
    slope = np.where(r > 0, tau, tau - 1.0)
    out = np.empty((X.shape[1], 2))
    for k in range(X.shape[1]):
        xk = X[:, k]
        for col, d in enumerate((1.0, -1.0)):
            # objective as a function of t: sum rho(r_i - t d x_ik)
            nz = -(d * xk[~zero]) @ slope[~zero]
            z = np.sum(np.where(-d * xk[zero] > 0, tau * (-d * xk[zero]), (tau - 1.0) * (-d * xk[zero])))
            out[k, col] = nz + z
    return out
