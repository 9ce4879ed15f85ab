# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled compute kernels.

Same contracts as phasekit._np_backend (the reference implementation); hot
loops run without the GIL so thread pools scale.  Matrix work goes through
BLAS: a C-contiguous (m, n) array is handed to Fortran routines as its own
transpose with lda = n, so no copies are made.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, sqrt
from scipy.linalg.cython_blas cimport dgemv, dtrsv

NAME = "cython"

CHECK_EVERY = 4

cdef double _INVPHI = (sqrt(5.0) - 1.0) / 2.0
cdef int _CHECK_EVERY = CHECK_EVERY


cdef inline double _clip_resid(double g, double lo, double hi) nogil:
    if g > hi:
        return g - hi
    if g < lo:
        return g - lo
    return 0.0


def dist_sq_batch(G, lo, hi):
    """Per-row squared distance of G (B, n) to the interval product [lo, hi]."""
    cdef const double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef const double[::1] lov = np.ascontiguousarray(lo, dtype=np.float64)
    cdef const double[::1] hiv = np.ascontiguousarray(hi, dtype=np.float64)
    cdef Py_ssize_t B = Gv.shape[0], n = Gv.shape[1], b, c
    out = np.empty(B)
    cdef double[::1] ov = out
    cdef double r, acc
    with nogil:
        for b in range(B):
            acc = 0.0
            for c in range(n):
                r = _clip_resid(Gv[b, c], lov[c], hiv[c])
                acc += r * r
            ov[b] = acc
    return out


def dist_grad_batch(G, tau, scaled_lo, scaled_hi, unscaled_lo, unscaled_hi, flo, fhi):
    """Distances plus per-set gradient samples; see the numpy reference."""
    cdef const double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(tau, dtype=np.float64)
    cdef const double[:, ::1] slo = np.ascontiguousarray(scaled_lo, dtype=np.float64)
    cdef const double[:, ::1] shi = np.ascontiguousarray(scaled_hi, dtype=np.float64)
    cdef const double[:, ::1] ulo = np.ascontiguousarray(unscaled_lo, dtype=np.float64)
    cdef const double[:, ::1] uhi = np.ascontiguousarray(unscaled_hi, dtype=np.float64)
    cdef const double[::1] flov = np.ascontiguousarray(flo, dtype=np.float64)
    cdef const double[::1] fhiv = np.ascontiguousarray(fhi, dtype=np.float64)
    cdef Py_ssize_t B = Gv.shape[0], n = Gv.shape[1], k = slo.shape[0], b, c, i
    dist = np.empty(B)
    grad = np.empty((B, k))
    # suffix endpoint sums over the sets after i plus the fixed cones
    suf_lo_a = np.empty((k + 1, n))
    suf_hi_a = np.empty((k + 1, n))
    cdef double[::1] dv = dist
    cdef double[:, ::1] gv = grad
    cdef double[:, ::1] suf_lo = suf_lo_a
    cdef double[:, ::1] suf_hi = suf_hi_a
    gacc_a = np.empty(max(k, 1))
    cdef double[::1] gacc = gacc_a
    cdef double g, lo_t, hi_t, p, r, acc, rem, tlo, thi, t2, take
    with nogil:
        for c in range(n):
            suf_lo[k, c] = flov[c]
            suf_hi[k, c] = fhiv[c]
        for i in range(k - 1, 0, -1):
            for c in range(n):
                suf_lo[i, c] = suf_lo[i + 1, c] + slo[i, c]
                suf_hi[i, c] = suf_hi[i + 1, c] + shi[i, c]
        for b in range(B):
            acc = 0.0
            for i in range(k):
                gacc[i] = 0.0
            for c in range(n):
                lo_t = suf_lo[1, c] + slo[0, c] if k > 0 else flov[c]
                hi_t = suf_hi[1, c] + shi[0, c] if k > 0 else fhiv[c]
                g = Gv[b, c]
                if g > hi_t:
                    p = hi_t
                elif g < lo_t:
                    p = lo_t
                else:
                    p = g
                r = g - p
                acc += r * r
                rem = p
                for i in range(k):
                    tlo = slo[i, c]
                    t2 = rem - suf_hi[i + 1, c]
                    if t2 > tlo:
                        tlo = t2
                    thi = shi[i, c]
                    t2 = rem - suf_lo[i + 1, c]
                    if t2 < thi:
                        thi = t2
                    if tlo > thi:  # roundoff guard: greedy feasibility is exact
                        tlo = thi
                    take = rem
                    if take < tlo:
                        take = tlo
                    elif take > thi:
                        take = thi
                    if tv[i] > 0.0:
                        gacc[i] += r * take
                    elif r > 0.0:
                        gacc[i] += uhi[i, c] * r
                    elif r < 0.0:
                        gacc[i] += ulo[i, c] * r
                    rem -= take
            dv[b] = acc
            for i in range(k):
                if tv[i] > 0.0:
                    gv[b, i] = (-2.0 / tv[i]) * gacc[i]
                else:
                    gv[b, i] = -2.0 * gacc[i]
    return dist, grad


cdef double _eval_1(const double[:, ::1] G, Py_ssize_t b, double tau,
                    const double[::1] slo, const double[::1] shi,
                    const double[::1] flo, const double[::1] fhi) nogil:
    cdef Py_ssize_t c, n = G.shape[1]
    cdef double acc = 0.0, lo, hi, sl, r
    for c in range(n):
        sl = slo[c]
        if sl == -INFINITY:
            lo = -INFINITY
        else:
            lo = tau * sl + flo[c]
        hi = tau * shi[c] + fhi[c]
        r = _clip_resid(G[b, c], lo, hi)
        acc += r * r
    return acc


cdef double _eval_2(const double[:, ::1] G, Py_ssize_t b, double t0, double t1,
                    const double[::1] s0lo, const double[::1] s0hi,
                    const double[::1] s1lo, const double[::1] s1hi,
                    const double[::1] flo, const double[::1] fhi) nogil:
    cdef Py_ssize_t c, n = G.shape[1]
    cdef double acc = 0.0, lo, hi, sl, r
    for c in range(n):
        sl = s0lo[c]
        if sl == -INFINITY:
            lo = -INFINITY
        else:
            lo = t0 * sl
        lo = lo + flo[c]
        sl = s1lo[c]
        if sl == -INFINITY:
            lo = -INFINITY
        else:
            lo = lo + t1 * sl
        hi = (t0 * s0hi[c] + fhi[c]) + t1 * s1hi[c]
        r = _clip_resid(G[b, c], lo, hi)
        acc += r * r
    return acc


# Scalar golden section over [0, bracket] after a doubling bracket search,
# mirroring the vectorized fallback: same evaluation points, same iteration
# counts, so the two backends agree to roundoff.

cdef double _bracket_1(const double[:, ::1] G, Py_ssize_t b, const double[::1] slo,
                       const double[::1] shi, const double[::1] flo, const double[::1] fhi) nogil:
    cdef double bb = 1.0
    cdef double fb = _eval_1(G, b, bb, slo, shi, flo, fhi)
    cdef double fhalf = _eval_1(G, b, 0.5 * bb, slo, shi, flo, fhi)
    cdef int j
    for j in range(60):
        if fb >= fhalf:
            break
        fhalf = fb
        bb = 2.0 * bb
        fb = _eval_1(G, b, bb, slo, shi, flo, fhi)
    return bb


cdef void _golden_1(const double[:, ::1] G, Py_ssize_t b, double bracket, int iters,
                    const double[::1] slo, const double[::1] shi,
                    const double[::1] flo, const double[::1] fhi,
                    double *tau_out, double *val_out) nogil:
    cdef double a = 0.0, bb = bracket
    cdef double c = bb - _INVPHI * (bb - a)
    cdef double d = a + _INVPHI * (bb - a)
    cdef double fc = _eval_1(G, b, c, slo, shi, flo, fhi)
    cdef double fd = _eval_1(G, b, d, slo, shi, flo, fhi)
    cdef double x
    cdef int j
    for j in range(iters):
        if fc < fd:
            bb = d
            d = c
            fd = fc
            c = bb - _INVPHI * (bb - a)
            fc = _eval_1(G, b, c, slo, shi, flo, fhi)
        else:
            a = c
            c = d
            fc = fd
            d = a + _INVPHI * (bb - a)
            fd = _eval_1(G, b, d, slo, shi, flo, fhi)
    x = 0.5 * (a + bb)
    tau_out[0] = x
    val_out[0] = _eval_1(G, b, x, slo, shi, flo, fhi)


def inner_min_1(G, slo, shi, flo, fhi, int iters=48):
    """Per-sample min over tau >= 0 of dist^2(g, tau S + fixed), golden section."""
    cdef const double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef const double[::1] slov = np.ascontiguousarray(slo, dtype=np.float64)
    cdef const double[::1] shiv = np.ascontiguousarray(shi, dtype=np.float64)
    cdef const double[::1] flov = np.ascontiguousarray(flo, dtype=np.float64)
    cdef const double[::1] fhiv = np.ascontiguousarray(fhi, dtype=np.float64)
    cdef Py_ssize_t B = Gv.shape[0], b
    val = np.empty(B)
    tau = np.empty(B)
    cdef double[::1] vv = val
    cdef double[::1] tv = tau
    cdef double bracket
    with nogil:
        for b in range(B):
            bracket = _bracket_1(Gv, b, slov, shiv, flov, fhiv)
            _golden_1(Gv, b, bracket, iters, slov, shiv, flov, fhiv, &tv[b], &vv[b])
    return val, tau


cdef double _bracket_2(const double[:, ::1] G, Py_ssize_t b, bint axis, double other,
                       const double[::1] s0lo, const double[::1] s0hi,
                       const double[::1] s1lo, const double[::1] s1hi,
                       const double[::1] flo, const double[::1] fhi) nogil:
    # axis 0 varies t0 holding t1 = other; axis 1 the reverse
    cdef double bb = 1.0, fb, fhalf
    cdef int j
    if axis == 0:
        fb = _eval_2(G, b, bb, other, s0lo, s0hi, s1lo, s1hi, flo, fhi)
        fhalf = _eval_2(G, b, 0.5 * bb, other, s0lo, s0hi, s1lo, s1hi, flo, fhi)
    else:
        fb = _eval_2(G, b, other, bb, s0lo, s0hi, s1lo, s1hi, flo, fhi)
        fhalf = _eval_2(G, b, other, 0.5 * bb, s0lo, s0hi, s1lo, s1hi, flo, fhi)
    for j in range(60):
        if fb >= fhalf:
            break
        fhalf = fb
        bb = 2.0 * bb
        if axis == 0:
            fb = _eval_2(G, b, bb, other, s0lo, s0hi, s1lo, s1hi, flo, fhi)
        else:
            fb = _eval_2(G, b, other, bb, s0lo, s0hi, s1lo, s1hi, flo, fhi)
    return bb


cdef void _golden_2(const double[:, ::1] G, Py_ssize_t b, bint axis, double other,
                    double bracket, int iters,
                    const double[::1] s0lo, const double[::1] s0hi,
                    const double[::1] s1lo, const double[::1] s1hi,
                    const double[::1] flo, const double[::1] fhi,
                    double *tau_out, double *val_out) nogil:
    cdef double a = 0.0, bb = bracket
    cdef double c = bb - _INVPHI * (bb - a)
    cdef double d = a + _INVPHI * (bb - a)
    cdef double fc, fd, x
    cdef int j
    if axis == 0:
        fc = _eval_2(G, b, c, other, s0lo, s0hi, s1lo, s1hi, flo, fhi)
        fd = _eval_2(G, b, d, other, s0lo, s0hi, s1lo, s1hi, flo, fhi)
    else:
        fc = _eval_2(G, b, other, c, s0lo, s0hi, s1lo, s1hi, flo, fhi)
        fd = _eval_2(G, b, other, d, s0lo, s0hi, s1lo, s1hi, flo, fhi)
    for j in range(iters):
        if fc < fd:
            bb = d
            d = c
            fd = fc
            c = bb - _INVPHI * (bb - a)
            if axis == 0:
                fc = _eval_2(G, b, c, other, s0lo, s0hi, s1lo, s1hi, flo, fhi)
            else:
                fc = _eval_2(G, b, other, c, s0lo, s0hi, s1lo, s1hi, flo, fhi)
        else:
            a = c
            c = d
            fc = fd
            d = a + _INVPHI * (bb - a)
            if axis == 0:
                fd = _eval_2(G, b, d, other, s0lo, s0hi, s1lo, s1hi, flo, fhi)
            else:
                fd = _eval_2(G, b, other, d, s0lo, s0hi, s1lo, s1hi, flo, fhi)
    x = 0.5 * (a + bb)
    tau_out[0] = x
    if axis == 0:
        val_out[0] = _eval_2(G, b, x, other, s0lo, s0hi, s1lo, s1hi, flo, fhi)
    else:
        val_out[0] = _eval_2(G, b, other, x, s0lo, s0hi, s1lo, s1hi, flo, fhi)


def inner_min_2(G, s0lo, s0hi, s1lo, s1hi, flo, fhi, int rounds=8, int iters=40):
    """Per-sample 2-d inner minimization by alternating golden sections."""
    cdef const double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef const double[::1] s0lov = np.ascontiguousarray(s0lo, dtype=np.float64)
    cdef const double[::1] s0hiv = np.ascontiguousarray(s0hi, dtype=np.float64)
    cdef const double[::1] s1lov = np.ascontiguousarray(s1lo, dtype=np.float64)
    cdef const double[::1] s1hiv = np.ascontiguousarray(s1hi, dtype=np.float64)
    cdef const double[::1] flov = np.ascontiguousarray(flo, dtype=np.float64)
    cdef const double[::1] fhiv = np.ascontiguousarray(fhi, dtype=np.float64)
    cdef Py_ssize_t B = Gv.shape[0], b
    val = np.empty(B)
    tau0 = np.empty(B)
    tau1 = np.empty(B)
    cdef double[::1] vv = val
    cdef double[::1] t0v = tau0
    cdef double[::1] t1v = tau1
    cdef double t0, t1, bracket, v
    cdef int r
    with nogil:
        for b in range(B):
            t0 = 0.0
            t1 = 0.0
            v = 0.0
            for r in range(rounds):
                bracket = _bracket_2(Gv, b, 0, t1, s0lov, s0hiv, s1lov, s1hiv, flov, fhiv)
                _golden_2(Gv, b, 0, t1, bracket, iters,
                          s0lov, s0hiv, s1lov, s1hiv, flov, fhiv, &t0, &v)
                bracket = _bracket_2(Gv, b, 1, t0, s0lov, s0hiv, s1lov, s1hiv, flov, fhiv)
                _golden_2(Gv, b, 1, t0, bracket, iters,
                          s0lov, s0hiv, s1lov, s1hiv, flov, fhiv, &t1, &v)
            t0v[b] = t0
            t1v[b] = t1
            vv[b] = v
    return val, tau0, tau1


def admm_solve(A, y, L, z0, double rho, long max_iters, double feas_tol,
               double radius, bint nonneg):
    """Consensus operator splitting; same contract as the numpy reference."""
    cdef const double[:, ::1] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[:, ::1] Lv = np.ascontiguousarray(L, dtype=np.float64)
    cdef int m = Av.shape[0], n = Av.shape[1]
    cdef int nblocks = 2 + (1 if radius >= 0.0 else 0) + (1 if nonneg else 0)
    cdef int ball_blk = 2 if radius >= 0.0 else -1
    cdef int nn_blk = (nblocks - 1) if nonneg else -1
    cdef double thr = 1.0 / rho
    z_arr = np.array(z0, dtype=np.float64)
    cdef double[::1] z = z_arr
    cdef double[::1] zp = np.empty(n)
    cdef double[:, ::1] X = np.empty((nblocks, n))
    cdef double[:, ::1] U = np.zeros((nblocks, n))
    cdef double[::1] w = np.empty(m)
    cdef double[::1] v = np.empty(n)
    cdef double primal = INFINITY, dual = INFINITY
    cdef long it = 0
    cdef bint converged = False
    cdef Py_ssize_t c, i, r_
    cdef double val, acc, nv, scale, diff
    cdef char UPLO = b'U', TR_T = b'T', TR_N = b'N', DIAG = b'N'
    cdef int ione = 1
    cdef double one = 1.0, neg_one = -1.0
    cdef double *Ap = <double *> &Av[0, 0]
    cdef double *Lp = <double *> &Lv[0, 0]
    with nogil:
        for it in range(1, max_iters + 1):
            for c in range(n):
                zp[c] = z[c]
            # block 0: l1 prox (soft threshold at 1/rho)
            for c in range(n):
                val = z[c] - U[0, c]
                if val > thr:
                    X[0, c] = val - thr
                elif val < -thr:
                    X[0, c] = val + thr
                else:
                    X[0, c] = 0.0
            # block 1: affine projection via the cached Cholesky factor
            for c in range(n):
                v[c] = z[c] - U[1, c]
            for r_ in range(m):
                w[r_] = yv[r_]
            # w := y - A v   (row-major A is Fortran A^T, hence trans='T')
            dgemv(&TR_T, &n, &m, &neg_one, Ap, &n, &v[0], &ione, &one, &w[0], &ione)
            # solve L L^T t = w in place (row-major L is Fortran upper L^T)
            dtrsv(&UPLO, &TR_T, &DIAG, &m, Lp, &m, &w[0], &ione)
            dtrsv(&UPLO, &TR_N, &DIAG, &m, Lp, &m, &w[0], &ione)
            for c in range(n):
                X[1, c] = v[c]
            # X1 := v + A^T t
            dgemv(&TR_N, &n, &m, &one, Ap, &n, &w[0], &ione, &one, &X[1, 0], &ione)
            if ball_blk >= 0:
                acc = 0.0
                for c in range(n):
                    val = z[c] - U[ball_blk, c]
                    X[ball_blk, c] = val
                    acc += val * val
                nv = sqrt(acc)
                if nv > radius:
                    scale = radius / nv
                    for c in range(n):
                        X[ball_blk, c] *= scale
            if nn_blk >= 0:
                for c in range(n):
                    val = z[c] - U[nn_blk, c]
                    X[nn_blk, c] = val if val > 0.0 else 0.0
            for c in range(n):
                acc = 0.0
                for i in range(nblocks):
                    acc += X[i, c]
                z[c] = acc / nblocks
            for i in range(nblocks):
                for c in range(n):
                    U[i, c] += X[i, c] - z[c]
            if it % _CHECK_EVERY == 0 or it == max_iters:
                acc = 0.0
                for c in range(n):
                    diff = z[c] - zp[c]
                    acc += diff * diff
                dual = rho * sqrt(<double> nblocks) * sqrt(acc)
                for r_ in range(m):
                    w[r_] = yv[r_]
                dgemv(&TR_T, &n, &m, &neg_one, Ap, &n, &z[0], &ione, &one, &w[0], &ione)
                acc = 0.0
                for r_ in range(m):
                    acc += w[r_] * w[r_]
                primal = sqrt(acc)
                for i in range(nblocks):
                    acc = 0.0
                    for c in range(n):
                        diff = X[i, c] - z[c]
                        acc += diff * diff
                    acc = sqrt(acc)
                    if acc > primal:
                        primal = acc
                if ball_blk >= 0:
                    acc = 0.0
                    for c in range(n):
                        acc += z[c] * z[c]
                    acc = sqrt(acc) - radius
                    if acc > primal:
                        primal = acc
                if nn_blk >= 0:
                    val = 0.0
                    for c in range(n):
                        if z[c] < val:
                            val = z[c]
                    if -val > primal:
                        primal = -val
                if primal <= feas_tol and dual <= feas_tol:
                    converged = True
                    break
    return z_arr, int(it), float(primal), float(dual), bool(converged)
