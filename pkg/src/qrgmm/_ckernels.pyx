# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Semantics match ``_pykernels`` one for one."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, floor, fmin, sqrt, INFINITY, isfinite

cnp.import_array()

cdef double STEP = 0.99995


cdef int _cholesky(double *M, int p) noexcept nogil:
    """In-place lower Cholesky factor of a row-major p x p matrix; 0 on success."""
    cdef int i, j, k
    cdef double acc
    for j in range(p):
        acc = M[j * p + j]
        for k in range(j):
            acc -= M[j * p + k] * M[j * p + k]
        if not (acc > 0.0):
            return 1
        M[j * p + j] = sqrt(acc)
        for i in range(j + 1, p):
            acc = M[i * p + j]
            for k in range(j):
                acc -= M[i * p + k] * M[j * p + k]
            M[i * p + j] = acc / M[j * p + j]
    return 0


cdef void _chol_solve(const double *L, double *rhs, int p) noexcept nogil:
    cdef int i, k
    cdef double acc
    for i in range(p):
        acc = rhs[i]
        for k in range(i):
            acc -= L[i * p + k] * rhs[k]
        rhs[i] = acc / L[i * p + i]
    for i in range(p - 1, -1, -1):
        acc = rhs[i]
        for k in range(i + 1, p):
            acc -= L[k * p + i] * rhs[k]
        rhs[i] = acc / L[i * p + i]


cdef inline double _ratio(double v, double dv, double cur) noexcept nogil:
    # largest step keeping v + step*dv >= 0, capped at cur; divides only on update
    if dv < 0.0 and v < -cur * dv:
        return -v / dv
    return cur


cdef struct State:
    int n
    int p
    const double *X
    double *a
    double *s
    double *ia
    double *is_
    double *z
    double *w
    double *q
    double *r2
    double *r3
    double *r4
    double *t
    double *da
    double *dz
    double *dw
    double *r1
    double *L
    double *db


cdef void _direction(State *S, double *ap, double *ad) noexcept nogil:
    """Newton direction for the current r2, r3, r4 and step lengths to the boundary."""
    cdef int n = S.n, p = S.p, i, k
    cdef const double *X = S.X
    cdef const double *xi
    cdef double *t = S.t
    cdef double *q = S.q
    cdef double *da = S.da
    cdef double *dz = S.dz
    cdef double *dw = S.dw
    cdef double *db = S.db
    cdef const double *a = S.a
    cdef const double *s = S.s
    cdef const double *z = S.z
    cdef const double *w = S.w
    cdef const double *ia = S.ia
    cdef const double *is_ = S.is_
    cdef const double *r3 = S.r3
    cdef const double *r4 = S.r4
    cdef const double *r2 = S.r2
    cdef double acc, pa = 1.0, pd = 1.0, dai, c1, c2, c3, c4
    for k in range(p):
        db[k] = -S.r1[k]
    for i in range(n):
        t[i] = r2[i] - r3[i] * ia[i] + r4[i] * is_[i]
        acc = q[i] * t[i]
        xi = X + i * p
        for k in range(p):
            db[k] -= xi[k] * acc
    _chol_solve(S.L, db, p)
    for i in range(n):
        xi = X + i * p
        acc = t[i]
        for k in range(p):
            acc += xi[k] * db[k]
        dai = -q[i] * acc
        da[i] = dai
        dz[i] = (r3[i] - z[i] * dai) * ia[i]
        dw[i] = (r4[i] + w[i] * dai) * is_[i]
    # branch-free ratio tests; signs are unpredictable so avoid jumps
    for i in range(n):
        c1 = -a[i] / da[i] if da[i] < 0.0 else INFINITY
        c2 = s[i] / da[i] if da[i] > 0.0 else INFINITY
        c3 = -z[i] / dz[i] if dz[i] < 0.0 else INFINITY
        c4 = -w[i] / dw[i] if dw[i] < 0.0 else INFINITY
        pa = fmin(pa, fmin(c1, c2))
        pd = fmin(pd, fmin(c3, c4))
    ap[0] = min(1.0, STEP * pa)
    ad[0] = min(1.0, STEP * pd)


def qr_ipm(X, y, double tau, double tol=1e-8, int max_iter=200):
    """Primal-dual interior point for linear quantile regression.

    See ``_pykernels.qr_ipm`` for the formulation and return convention.
    """
    cdef cnp.ndarray Xa = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray ya = np.ascontiguousarray(y, dtype=np.float64)
    cdef int n = Xa.shape[0], p = Xa.shape[1]
    cdef int i, j, k, it = 0, status = 1
    cdef double yscale = 0.0, rscale = 0.0, delta, obj, best_obj = INFINITY
    cdef double gap, mu, mu_aff, sigma, ap = 0.0, ad = 0.0, acc, qi, ri, ai, si
    cdef bint bad

    beta_a = np.ascontiguousarray(np.linalg.lstsq(Xa, ya, rcond=None)[0], dtype=np.float64)
    best_a = beta_a.copy()
    work_p = np.zeros((3, p))
    L_a = np.zeros((p, p))
    work_n = np.empty((15, n))

    cdef const double *Xp = <const double *> cnp.PyArray_DATA(Xa)
    cdef const double *yp = <const double *> cnp.PyArray_DATA(ya)
    cdef const double *xi
    cdef double[::1] beta = beta_a
    cdef double[::1] best = best_a
    cdef double[:, ::1] wp = work_p
    cdef double[:, ::1] wn = work_n
    cdef double[:, ::1] Lv = L_a
    cdef double *b = &wp[0, 0]
    cdef double *r = &wn[14, 0]
    cdef State S
    S.n = n
    S.p = p
    S.X = Xp
    S.r1 = &wp[1, 0]
    S.db = &wp[2, 0]
    S.L = &Lv[0, 0]
    S.a = &wn[0, 0]
    S.s = &wn[1, 0]
    S.ia = &wn[2, 0]
    S.is_ = &wn[3, 0]
    S.z = &wn[4, 0]
    S.w = &wn[5, 0]
    S.q = &wn[6, 0]
    S.r2 = &wn[7, 0]
    S.r3 = &wn[8, 0]
    S.r4 = &wn[9, 0]
    S.t = &wn[10, 0]
    S.da = &wn[11, 0]
    S.dz = &wn[12, 0]
    S.dw = &wn[13, 0]

    with nogil:
        for i in range(n):
            xi = Xp + i * p
            yscale += fabs(yp[i])
            acc = yp[i]
            for k in range(p):
                acc -= xi[k] * beta[k]
                b[k] += (1.0 - tau) * xi[k]
            r[i] = acc
            rscale += fabs(acc)
        yscale /= n
        rscale /= n
        if rscale > 0.0:
            delta = 1e-3 * rscale
        elif yscale > 0.0:
            delta = 1e-3 * yscale
        else:
            delta = 1e-3
        for i in range(n):
            S.a[i] = 1.0 - tau
            S.s[i] = tau
            S.w[i] = (r[i] if r[i] > 0.0 else 0.0) + delta
            S.z[i] = (-r[i] if r[i] < 0.0 else 0.0) + delta

        while True:
            # objective, gap, scaling, residuals and normal matrix in one pass
            obj = 0.0
            gap = 0.0
            for k in range(p):
                S.r1[k] = b[k]
            for k in range(p * p):
                S.L[k] = 0.0
            for i in range(n):
                xi = Xp + i * p
                ri = r[i]
                ai = S.a[i]
                si = S.s[i]
                obj += tau * ri if ri > 0.0 else (tau - 1.0) * ri
                gap += ai * S.z[i] + si * S.w[i]
                S.ia[i] = 1.0 / ai
                S.is_[i] = 1.0 / si
                qi = 1.0 / (S.z[i] * S.ia[i] + S.w[i] * S.is_[i])
                S.q[i] = qi
                S.r2[i] = S.w[i] - S.z[i] - ri
                S.r3[i] = -ai * S.z[i]
                S.r4[i] = -si * S.w[i]
                for k in range(p):
                    S.r1[k] -= xi[k] * ai
                    acc = qi * xi[k]
                    for j in range(k + 1):
                        S.L[k * p + j] += acc * xi[j]
            if obj < best_obj:
                best_obj = obj
                for k in range(p):
                    best[k] = beta[k]
            if gap <= tol * (obj + yscale):
                status = 0
                break
            if it == max_iter:
                status = 1
                break
            if _cholesky(S.L, p) != 0:
                status = 2
                break

            _direction(&S, &ap, &ad)
            if ap < 1.0 or ad < 1.0:
                mu = gap / (2 * n)
                mu_aff = 0.0
                for i in range(n):
                    mu_aff += (S.a[i] + ap * S.da[i]) * (S.z[i] + ad * S.dz[i]) \
                        + (S.s[i] - ap * S.da[i]) * (S.w[i] + ad * S.dw[i])
                mu_aff /= 2 * n
                sigma = (mu_aff / mu) * (mu_aff / mu) * (mu_aff / mu)
                for i in range(n):
                    S.r3[i] = sigma * mu - S.a[i] * S.z[i] - S.da[i] * S.dz[i]
                    S.r4[i] = sigma * mu - S.s[i] * S.w[i] + S.da[i] * S.dw[i]
                _direction(&S, &ap, &ad)

            bad = ap <= 1e-12 and ad <= 1e-12
            for k in range(p):
                if not isfinite(S.db[k]):
                    bad = True
            if bad:
                status = 2
                break
            for k in range(p):
                beta[k] += ad * S.db[k]
            for i in range(n):
                S.a[i] += ap * S.da[i]
                S.s[i] -= ap * S.da[i]
                S.z[i] += ad * S.dz[i]
                S.w[i] += ad * S.dw[i]
                xi = Xp + i * p
                acc = yp[i]
                for k in range(p):
                    acc -= xi[k] * beta[k]
                r[i] = acc
            it += 1

    if status == 0:
        return beta_a, it, status
    return best_a, it, status


def interp_nodes(v, u):
    """Piecewise-linear quantile interpolation of node values at ``u``."""
    cdef const double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64).ravel()
    cdef Py_ssize_t K = uv.shape[0], k, j
    cdef int m = vv.shape[0] + 1
    cdef double tt, frac
    out = np.empty(K)
    cdef double[::1] ov = out
    with nogil:
        for k in range(K):
            tt = uv[k] * m
            if tt < 1.0:
                ov[k] = vv[0]
            elif tt >= m - 1:
                ov[k] = vv[m - 2]
            else:
                j = <Py_ssize_t>floor(tt)
                frac = tt - j
                ov[k] = vv[j - 1] + frac * (vv[j] - vv[j - 1])
    return out.reshape(np.shape(u))


def interp_rows(V, u):
    """Row-wise interpolation: row k of ``V`` evaluated at ``u[k]``."""
    cdef const double[:, ::1] Vv = np.ascontiguousarray(V, dtype=np.float64)
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t K = Vv.shape[0], k, j
    cdef int m = Vv.shape[1] + 1
    cdef double tt, frac
    out = np.empty(K)
    cdef double[::1] ov = out
    with nogil:
        for k in range(K):
            tt = uv[k] * m
            if tt < 1.0:
                ov[k] = Vv[k, 0]
            elif tt >= m - 1:
                ov[k] = Vv[k, m - 2]
            else:
                j = <Py_ssize_t>floor(tt)
                frac = tt - j
                ov[k] = Vv[k, j - 1] + frac * (Vv[k, j] - Vv[k, j - 1])
    return out


def ks_sorted(a, b):
    """Two-sample KS statistic of two ascending arrays by a merge sweep.

    Gaps are tracked as integers |i*nb - j*na| and divided once at the end.
    """
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef long long na = av.shape[0], nb = bv.shape[0], i = 0, j = 0
    cdef long long d, best = 0
    cdef double x
    with nogil:
        while i < na or j < nb:
            if j >= nb or (i < na and av[i] <= bv[j]):
                x = av[i]
            else:
                x = bv[j]
            while i < na and av[i] <= x:
                i += 1
            while j < nb and bv[j] <= x:
                j += 1
            d = i * nb - j * na
            if d < 0:
                d = -d
            if d > best:
                best = d
    return <double>best / <double>(na * nb)


def wasserstein_sorted(a, b):
    """Exact integral of |Fa^-1 - Fb^-1| for ascending arrays."""
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef long long na = av.shape[0], nb = bv.shape[0], i = 0, j = 0
    cdef long long prev = 0, nxt, ca, cb
    cdef double total = 0.0
    with nogil:
        # positions in units of 1/(na*nb); a's breakpoints at (i+1)*nb, b's at (j+1)*na
        while i < na and j < nb:
            ca = (i + 1) * nb
            cb = (j + 1) * na
            nxt = ca if ca < cb else cb
            total += <double>(nxt - prev) * fabs(av[i] - bv[j])
            prev = nxt
            if ca == nxt:
                i += 1
            if cb == nxt:
                j += 1
    return total / (<double>na * <double>nb)
