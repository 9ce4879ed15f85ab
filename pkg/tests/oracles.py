"""Independent reference implementations used to cross-check phasekit.

Everything here is deliberately written from first principles with no imports
from the package, so agreement between an oracle and the library is evidence,
not circularity.  The oracles are slow; they only run on small inputs.
"""

import math

import numpy as np


def folded_gaussian_density(u):
    """phi(u) = sqrt(2/pi) exp(-u^2/2), the density of |g| for standard g."""
    return math.sqrt(2.0 / math.pi) * math.exp(-0.5 * u * u)


def adaptive_simpson(f, a, b, tol=1e-12, max_depth=50):
    """Classic recursive adaptive Simpson quadrature with Richardson correction."""
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, fa, b, fb, m, fm, whole, tol, depth):
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        if depth >= max_depth or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return recurse(a, fa, m, fm, lm, flm, left, 0.5 * tol, depth + 1) + recurse(
            m, fm, b, fb, rm, frm, right, 0.5 * tol, depth + 1
        )

    return recurse(a, fa, b, fb, m, fm, whole, tol, 0)


def _tail_integral(f, tau, tol):
    # one Simpson call per unit panel: the whole-range estimate can miss the
    # narrow mass just above tau when tau is large
    return sum(
        adaptive_simpson(f, tau + j, tau + j + 1.0, tol) for j in range(14)
    )


def tail_moment_quadrature(k, tau, tol=1e-13):
    """integral_tau^inf u^k phi(u) du by panelled adaptive Simpson.

    The integrand is below 1e-40 past tau + 14 for k <= 2.
    """
    return _tail_integral(lambda u: u**k * folded_gaussian_density(u), tau, tol)


def excess_sq_quadrature(tau, tol=1e-13):
    """integral_tau^inf (u - tau)^2 phi(u) du by panelled adaptive Simpson."""
    return _tail_integral(
        lambda u: (u - tau) ** 2 * folded_gaussian_density(u), tau, tol
    )


def golden_min(f, a, b, tol=1e-11):
    """Golden-section minimization of a unimodal f on [a, b]; returns (x, f(x))."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def psi_oracle(rho, variant, tol=1e-11):
    """psi curve value by golden-section over the quadrature-evaluated objective.

    variant 'psi1': rho (1 + tau^2) + (1 - rho) E(tau)
    variant 'psi2': rho (1 + tau^2) + (1 - rho) E(tau) / 2
    with E(tau) = integral_tau^inf (u - tau)^2 phi(u) du.
    """
    if rho == 0.0:
        return 0.0, math.inf
    if rho == 1.0:
        return 1.0, 0.0
    half = 0.5 if variant == "psi2" else 1.0

    def objective(tau):
        return rho * (1.0 + tau * tau) + half * (1.0 - rho) * excess_sq_quadrature(tau)

    tau_star, value = golden_min(objective, 0.0, 12.0, tol)
    return value, tau_star


def sum_distance_oracle(intervals, g, iters=10**4, tol=1e-14):
    """Squared distance from g to a Minkowski sum of coordinate-wise interval sets.

    intervals: list of (lo, hi) pairs of arrays, lo may be -inf.  Uses cyclic
    exact minimization over the summands (each block update is a clamp), the
    alternating-projection scheme for sums; independent of any interval-sum
    arithmetic in the library.
    """
    g = np.asarray(g, dtype=float)
    parts = [np.clip(0.0, lo, hi) for lo, hi in intervals]
    prev = math.inf
    for _ in range(iters):
        for i, (lo, hi) in enumerate(intervals):
            rest = g - sum(parts[j] for j in range(len(parts)) if j != i)
            parts[i] = np.clip(rest, lo, hi)
        resid = g - sum(parts)
        val = float(resid @ resid)
        if prev - val <= tol * max(1.0, val):
            prev = val
            break
        prev = val
    return prev, parts


def least_norm_correction_oracle(A, y, x):
    """Nearest point to x in {z : A z = y}, via QR of A^T (normal-equations-free)."""
    A = np.asarray(A, dtype=float)
    q, r = np.linalg.qr(A.T)  # A = r.T @ q.T
    w = np.linalg.solve(r.T, y - A @ x)
    return x + q @ w


def pav_oracle(values, weights):
    """Weighted nondecreasing isotonic fit by repeated adjacent-violator pooling.

    Quadratic-time scan-until-stable variant, intentionally naive.
    """
    blocks = [[float(v), float(w), 1] for v, w in zip(values, weights)]
    changed = True
    while changed:
        changed = False
        for i in range(len(blocks) - 1):
            if blocks[i][0] > blocks[i + 1][0] + 0.0:
                v1, w1, c1 = blocks[i]
                v2, w2, c2 = blocks[i + 1]
                merged = [(v1 * w1 + v2 * w2) / (w1 + w2), w1 + w2, c1 + c2]
                blocks[i : i + 2] = [merged]
                changed = True
                break
    fit = []
    for v, _, count in blocks:
        fit.extend([v] * count)
    return np.array(fit)


def kkt_ball_violation(A, y, r, x, strong_tol=1e-5):
    """Smallest KKT stationarity violation for min ||x||_1, Ax=y, ||x|| <= r.

    Searches over multipliers (lambda, mu >= 0) for a certificate
    -A^T lambda - mu x in the l1 subdifferential at x, by linear programming:
    the returned value is the minimal uniform slack v for which one exists.
    Feasibility of x itself is not checked here.
    """
    from scipy.optimize import linprog

    A = np.asarray(A, dtype=float)
    x = np.asarray(x, dtype=float)
    m, n = A.shape
    active = np.linalg.norm(x) > r - 1e-8
    rows = []
    rhs = []
    for i in range(n):
        a = A[:, i]
        if abs(x[i]) > strong_tol:
            s = np.sign(x[i])
            rows.append(np.concatenate([-a, [-x[i], -1.0]]))
            rhs.append(s)
            rows.append(np.concatenate([a, [x[i], -1.0]]))
            rhs.append(-s)
        else:
            rows.append(np.concatenate([-a, [-x[i], -1.0]]))
            rhs.append(1.0)
            rows.append(np.concatenate([a, [x[i], -1.0]]))
            rhs.append(1.0)
    c = np.zeros(m + 2)
    c[-1] = 1.0
    bounds = [(None, None)] * m + [(0.0, None if active else 0.0), (0.0, None)]
    res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds,
                  method="highs")
    assert res.status == 0, res.message
    return float(res.fun)


def central_difference(f, x, h):
    """Central finite-difference gradient of scalar f at vector x, step h per coord."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return grad
