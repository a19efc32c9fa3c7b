"""Pure numpy implementations of the hot kernels.

Each function here has a compiled twin in ``_ckernels.pyx`` with the same
signature and semantics; ``_kernels`` picks one at import time.
"""
import numpy as np

STEP = 0.99995

CONVERGED, MAX_ITER, BREAKDOWN = 0, 1, 2


def _ratio(v, dv):
    neg = dv < 0
    if not neg.any():
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def qr_ipm(X, y, tau, tol=1e-8, max_iter=200):
    """Primal-dual interior point for linear quantile regression.

    Works on the bounded dual LP

        max y'a  s.t.  X'a = (1 - tau) X'1,  0 <= a <= 1,

    whose multipliers on the equality constraint are the regression
    coefficients. Mehrotra predictor-corrector steps; the normal equations
    are the p x p system X' D X.

    Returns ``(beta, iterations, status)`` with status 0 (duality gap below
    ``tol * (objective + mean|y|)``), 1 (iteration cap) or 2 (numerical
    breakdown). On a non-zero status the iterate with the smallest pinball
    objective seen is returned.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    n, p = X.shape
    yscale = float(np.mean(np.abs(y)))

    b = (1.0 - tau) * X.sum(axis=0)
    a = np.full(n, 1.0 - tau)
    s = np.full(n, tau)
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    r = y - X @ beta
    rscale = float(np.mean(np.abs(r)))
    delta = 1e-3 * (rscale if rscale > 0 else (yscale if yscale > 0 else 1.0))
    w = np.maximum(r, 0.0) + delta
    z = np.maximum(-r, 0.0) + delta

    best_beta, best_obj = beta.copy(), np.inf
    status = MAX_ITER
    it = 0
    for it in range(max_iter + 1):
        obj = float(np.sum(np.where(r > 0, tau * r, (tau - 1.0) * r)))
        if obj < best_obj:
            best_obj, best_beta = obj, beta.copy()
        gap = float(a @ z + s @ w)
        if gap <= tol * (obj + yscale):
            status = CONVERGED
            break
        if it == max_iter:
            break

        q = 1.0 / (z / a + w / s)
        r1 = b - X.T @ a
        r2 = w - z - r
        try:
            L = np.linalg.cholesky((X * q[:, None]).T @ X)
        except np.linalg.LinAlgError:
            status = BREAKDOWN
            break

        def direction(r3, r4):
            t = r2 - r3 / a + r4 / s
            rhs = -r1 - X.T @ (q * t)
            db = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
            da = -q * (t + X @ db)
            return db, da, (r3 - z * da) / a, (r4 + w * da) / s

        # predictor
        db, da, dz, dw = direction(-a * z, -s * w)
        ap = min(1.0, STEP * min(_ratio(a, da), _ratio(s, -da)))
        ad = min(1.0, STEP * min(_ratio(z, dz), _ratio(w, dw)))
        if min(ap, ad) < 1.0:
            # corrector with centring
            mu = gap / (2 * n)
            mu_aff = ((a + ap * da) @ (z + ad * dz) + (s - ap * da) @ (w + ad * dw)) / (2 * n)
            sigma = (mu_aff / mu) ** 3
            db, da, dz, dw = direction(sigma * mu - a * z - da * dz, sigma * mu - s * w + da * dw)
            ap = min(1.0, STEP * min(_ratio(a, da), _ratio(s, -da)))
            ad = min(1.0, STEP * min(_ratio(z, dz), _ratio(w, dw)))
        if not (np.all(np.isfinite(db)) and max(ap, ad) > 1e-12):
            status = BREAKDOWN
            break
        a = a + ap * da
        s = s - ap * da
        beta = beta + ad * db
        z = z + ad * dz
        w = w + ad * dw
        r = y - X @ beta

    if status == CONVERGED:
        return beta, it, status
    return best_beta, it, status


def interp_nodes(v, u):
    """Piecewise-linear quantile interpolation of node values ``v`` at ``u``.

    ``v[j-1]`` is the value at level j/m with m = len(v) + 1. Levels below
    1/m or at/above (m-1)/m get the end node values.
    """
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    m = v.shape[0] + 1
    t = u * m
    j = np.floor(t).astype(np.intp)
    frac = t - j
    lo = np.clip(j - 1, 0, m - 2)
    hi = np.clip(j, 0, m - 2)
    out = v[lo] + frac * (v[hi] - v[lo])
    out = np.where(t < 1.0, v[0], out)
    return np.where(t >= m - 1, v[m - 2], out)


def interp_rows(V, u):
    """Row-wise :func:`interp_nodes`: row k of ``V`` evaluated at ``u[k]``."""
    V = np.asarray(V, dtype=float)
    u = np.asarray(u, dtype=float)
    K, L = V.shape
    m = L + 1
    t = u * m
    j = np.floor(t).astype(np.intp)
    frac = t - j
    rows = np.arange(K)
    lo = V[rows, np.clip(j - 1, 0, m - 2)]
    hi = V[rows, np.clip(j, 0, m - 2)]
    out = lo + frac * (hi - lo)
    out = np.where(t < 1.0, V[:, 0], out)
    return np.where(t >= m - 1, V[:, m - 2], out)


def ks_sorted(a, b):
    """Two-sample KS statistic of two ascending arrays, exact with ties.

    The gap |i/na - j/nb| is kept as the integer |i*nb - j*na| and divided
    once, so rational answers such as 1/10 come out correctly rounded.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pts = np.concatenate([a, b])
    ia = np.searchsorted(a, pts, side="right").astype(np.int64)
    ib = np.searchsorted(b, pts, side="right").astype(np.int64)
    gap = int(np.max(np.abs(ia * b.size - ib * a.size)))
    return gap / (a.size * b.size)


def wasserstein_sorted(a, b):
    """Integral of |Fa^-1(u) - Fb^-1(u)| over (0, 1) for ascending arrays.

    Breakpoints i/na and j/nb are merged in integer units of 1/(na*nb), so
    the step quantile functions are integrated exactly.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = a.size, b.size
    if na == nb:
        return float(np.mean(np.abs(a - b)))
    cuts = np.union1d(np.arange(1, na + 1, dtype=np.int64) * nb,
                      np.arange(1, nb + 1, dtype=np.int64) * na)
    left = np.concatenate([[0], cuts[:-1]])
    widths = (cuts - left) / (na * nb)
    return float(np.sum(widths * np.abs(a[left // nb] - b[left // na])))
