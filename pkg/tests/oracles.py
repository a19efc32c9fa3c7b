"""Independent reference computations used by the tests.

Nothing here calls the package's solvers or metrics.
"""
import itertools

import numpy as np


def pinball_total(X, y, tau, beta):
    r = y - X @ beta
    return float(np.sum(np.maximum(tau * r, (tau - 1) * r)))


def vertex_minimum(X, y, tau):
    """Exact LP optimum by enumerating basic solutions.

    With a full-rank design some optimum interpolates p observations, so
    the minimum over all p-subsets that determine beta is the optimum.
    """
    n, p = X.shape
    best = np.inf
    arg = None
    for rows in itertools.combinations(range(n), p):
        A = X[list(rows)]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        beta = np.linalg.solve(A, y[list(rows)])
        val = pinball_total(X, y, tau, beta)
        if val < best:
            best, arg = val, beta
    return best, arg


def grid_minimum(X, y, tau, center, half_width, points=201):
    """Minimum of the objective over a dense grid of betas (p <= 2)."""
    p = X.shape[1]
    axes = [np.linspace(c - half_width, c + half_width, points) for c in center]
    if p == 1:
        B = axes[0][:, None]
    else:
        g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
        B = np.column_stack([g0.ravel(), g1.ravel()])
    R = y[None, :] - B @ X.T
    vals = np.maximum(tau * R, (tau - 1) * R).sum(axis=1)
    return float(vals.min())


def ks_bruteforce(a, b):
    """Two-sample KS by evaluating both ECDFs at every data point."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    best = 0.0
    for t in np.concatenate([a, b]):
        best = max(best, abs(np.mean(a <= t) - np.mean(b <= t)))
    return best


def wasserstein_bruteforce(a, b, grid=200000):
    """Midpoint-rule integral of |Fa^-1 - Fb^-1| over (0, 1)."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    u = (np.arange(grid) + 0.5) / grid
    qa = a[np.minimum((u * a.size).astype(int), a.size - 1)]
    qb = b[np.minimum((u * b.size).astype(int), b.size - 1)]
    return float(np.mean(np.abs(qa - qb)))


# standard normal quantiles from 40-digit mpmath (sqrt(2) erfinv(2p - 1)), frozen
NORMAL_Q = {
    0.975: 1.9599639845400542355,
    0.9: 1.281551565544600467,
    0.25: -0.6744897501960817432,
    0.01: -2.3263478740408411009,
    0.999: 3.0902323061678135415,
}
TP1_Q975_AT_6_1_2 = 17.723931570626103047
TP2_Q90_AT_4_4 = 16.724018030341736814
BIVARIATE_CORR = 0.44721359549995793928
