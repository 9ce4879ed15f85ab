"""Pure-numpy compute kernels (fallback backend).

phasekit._kernels implements the same functions in Cython; phasekit.backend
picks whichever is available.  Semantics here are the reference: the compiled
versions must agree to floating-point roundoff.
"""

import numpy as np
from scipy.linalg import solve_triangular

NAME = "numpy"

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0

# residuals are checked every few iterations; the final iterate always gets one
CHECK_EVERY = 4


def dist_sq_batch(G, lo, hi):
    """Per-row squared distance of G (B, n) to the interval product [lo, hi]."""
    R = G - np.clip(G, lo, hi)
    return np.einsum("bc,bc->b", R, R)


def dist_grad_batch(G, tau, scaled_lo, scaled_hi, unscaled_lo, unscaled_hi, flo, fhi):
    """Distances plus per-set gradient samples for a batch of queries.

    scaled_*: (k, n) endpoints of tau_i S_i; unscaled_*: endpoints of S_i;
    flo/fhi: endpoint sums of the fixed cones.  Returns (dist (B,), grad (B, k))
    with grad[b, i] = -2 <r_b, sbar_i> for tau_i > 0 (sbar_i from the greedy
    split, rescaled back into S_i) and the one-sided derivative
    -2 max_{s in S_i} <r_b, s> at tau_i = 0.
    """
    k, n = scaled_lo.shape
    lo_tot = scaled_lo.sum(axis=0) + flo
    hi_tot = scaled_hi.sum(axis=0) + fhi
    P = np.clip(G, lo_tot, hi_tot)
    R = G - P
    dist = np.einsum("bc,bc->b", R, R)
    grad = np.empty((G.shape[0], k))

    # suffix sums: what sets after i (plus the fixed cones) can absorb
    suf_lo = np.empty((k + 1, n))
    suf_hi = np.empty((k + 1, n))
    suf_lo[k] = flo
    suf_hi[k] = fhi
    for i in range(k - 1, 0, -1):
        suf_lo[i] = suf_lo[i + 1] + scaled_lo[i]
        suf_hi[i] = suf_hi[i + 1] + scaled_hi[i]

    remaining = P.copy()
    for i in range(k):
        take_lo = np.maximum(scaled_lo[i], remaining - suf_hi[i + 1])
        take_hi = np.minimum(scaled_hi[i], remaining - suf_lo[i + 1])
        take_lo = np.minimum(take_lo, take_hi)
        C = np.clip(remaining, take_lo, take_hi)
        if tau[i] > 0.0:
            grad[:, i] = (-2.0 / tau[i]) * np.einsum("bc,bc->b", R, C)
        else:
            contrib = np.where(R > 0.0, unscaled_hi[i] * R, unscaled_lo[i] * R)
            grad[:, i] = -2.0 * contrib.sum(axis=1)
        remaining -= C
    return dist, grad


def _batch_dist_tau(G, tau0, tau1, s0lo, s0hi, s1lo, s1hi, flo, fhi):
    """dist^2(G_b, tau0_b S_0 + tau1_b S_1 + fixed) for per-sample tau vectors."""

    def scale(lo, t):
        return np.where(np.isneginf(lo), -np.inf, t[:, None] * lo)

    lo = scale(s0lo, tau0) + flo
    hi = tau0[:, None] * s0hi + fhi
    if tau1 is not None:
        lo = lo + scale(s1lo, tau1)
        hi = hi + tau1[:, None] * s1hi
    R = G - np.clip(G, lo, hi)
    return np.einsum("bc,bc->b", R, R)


def _golden_batch(f, bracket, iters=48):
    """Vectorized golden-section minimization of f over [0, bracket] per sample."""
    a = np.zeros_like(bracket)
    b = bracket.astype(float).copy()
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc = f(c)
    fd = f(d)
    for _ in range(iters):
        sr = fc < fd  # keep [a, d] when True, [c, b] otherwise
        a = np.where(sr, a, c)
        b = np.where(sr, d, b)
        c_new = np.where(sr, b - _INVPHI * (b - a), d)
        d_new = np.where(sr, c, a + _INVPHI * (b - a))
        x_new = np.where(sr, c_new, d_new)
        fx = f(x_new)
        fc, fd = np.where(sr, fx, fd), np.where(sr, fc, fx)
        c, d = c_new, d_new
    x = 0.5 * (a + b)
    return x, f(x)


def _doubling_bracket(f, size, max_doublings=60):
    """Per-sample b with min f on [0, b], by doubling while f(b) < f(b/2)."""
    b = np.ones(size)
    fb = f(b)
    fhalf = f(0.5 * b)
    for _ in range(max_doublings):
        growing = fb < fhalf  # still descending at b: minimum may lie beyond
        if not growing.any():
            break
        b = np.where(growing, 2.0 * b, b)
        fhalf = np.where(growing, fb, fhalf)
        fb = np.where(growing, f(b), fb)
    return b


def inner_min_1(G, slo, shi, flo, fhi, iters=48):
    """Per-sample min over tau >= 0 of dist^2(g, tau S + fixed), golden section."""

    def f(taus):
        return _batch_dist_tau(G, taus, None, slo, shi, None, None, flo, fhi)

    bracket = _doubling_bracket(f, G.shape[0])
    tau, val = _golden_batch(f, bracket, iters)
    return val, tau


def inner_min_2(G, s0lo, s0hi, s1lo, s1hi, flo, fhi, rounds=8, iters=40):
    """Per-sample 2-d inner minimization by alternating golden sections."""
    B = G.shape[0]
    tau0 = np.zeros(B)
    tau1 = np.zeros(B)
    val = None
    for _ in range(rounds):

        def f0(t):
            return _batch_dist_tau(G, t, tau1, s0lo, s0hi, s1lo, s1hi, flo, fhi)

        tau0, _ = _golden_batch(f0, _doubling_bracket(f0, B), iters)

        def f1(t):
            return _batch_dist_tau(G, tau0, t, s0lo, s0hi, s1lo, s1hi, flo, fhi)

        tau1, val = _golden_batch(f1, _doubling_bracket(f1, B), iters)
    return val, tau0, tau1


def _soft(v, thr):
    return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)


def admm_solve(A, y, L, z0, rho, max_iters, feas_tol, radius, nonneg):
    """Consensus operator splitting for min ||x||_1 s.t. Ax = y (+ ball/orthant).

    L is the lower Cholesky factor of A A^T.  radius < 0 disables the l2 ball.
    Returns (z, iterations, primal_residual, dual_residual, converged).
    """
    n = A.shape[1]
    nblocks = 2 + (radius >= 0.0) + bool(nonneg)
    thr = 1.0 / rho
    z = z0.copy()
    xs = [z.copy() for _ in range(nblocks)]
    us = [np.zeros(n) for _ in range(nblocks)]
    primal = dual = np.inf
    it = 0
    converged = False
    for it in range(1, max_iters + 1):
        z_prev = z
        xs[0] = _soft(z - us[0], thr)
        v = z - us[1]
        w = y - A @ v
        t = solve_triangular(L, w, lower=True)
        xs[1] = v + A.T @ solve_triangular(L, t, lower=True, trans=1)
        blk = 2
        if radius >= 0.0:
            v = z - us[blk]
            nv = np.linalg.norm(v)
            xs[blk] = v if nv <= radius else v * (radius / nv)
            blk += 1
        if nonneg:
            v = z - us[blk]
            xs[blk] = np.maximum(v, 0.0)
        z = sum(xs) / nblocks
        for i in range(nblocks):
            us[i] += xs[i] - z
        if it % CHECK_EVERY == 0 or it == max_iters:
            dual = rho * np.sqrt(nblocks) * np.linalg.norm(z - z_prev)
            primal = max(
                float(np.linalg.norm(A @ z - y)),
                max(float(np.linalg.norm(x - z)) for x in xs),
            )
            if radius >= 0.0:
                primal = max(primal, float(np.linalg.norm(z)) - radius)
            if nonneg:
                primal = max(primal, float(-min(0.0, z.min())))
            if max(primal, dual) <= feas_tol:
                converged = True
                break
    return z, it, primal, dual, converged
