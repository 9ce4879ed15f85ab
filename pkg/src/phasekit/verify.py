"""Self-verification: recompute key quantities by independent routes.

Each check pits a closed-form or optimized implementation against a slower
generic method that shares no code with it: Gaussian tail moments against
adaptive Simpson quadrature, stationary roots against back-substitution
through quadrature, the separable distance against alternating projections
onto the constituent sets, and Monte-Carlo gradients against common-seed
central differences.  A clean build passes everything; any failure is a
release blocker.
"""

import math
from dataclasses import dataclass

import numpy as np

from .geometry import SparseSignal, build_family, dist_sq_and_project
from .statdim import (
    gaussian_tail_moments,
    mc_j,
    mc_j_gradient,
    psi_value,
    stationary_solve,
)

__all__ = ["CheckResult", "run_verification", "CHECK_NAMES"]

CHECK_NAMES = (
    "tail_quadrature",
    "stationary_residual",
    "psi_curve",
    "alternating_projection",
    "gradient_fd",
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst_error: float
    tolerance: float
    detail: str

    def line(self):
        status = "pass" if self.passed else "FAIL"
        return (
            f"[{status}] {self.name}: worst error {self.worst_error:.3e} "
            f"(tolerance {self.tolerance:.0e}) {self.detail}"
        )


def _simpson(f, a, b, tol, fa=None, fm=None, fb=None, depth=0):
    """Adaptive Simpson on [a, b]; plain recursion, independent of scipy."""
    m = 0.5 * (a + b)
    fa = f(a) if fa is None else fa
    fm = f(m) if fm is None else fm
    fb = f(b) if fb is None else fb
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth >= 40 or abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    half = 0.5 * tol
    return _simpson(f, a, m, half, fa, flm, fm, depth + 1) + _simpson(
        f, m, b, half, fm, frm, fb, depth + 1
    )


def _tail_integral(f, tau, tol=1e-13):
    """Integral of f over [tau, inf): unit panels out to negligible mass.

    Whole-range Simpson can step over the narrow bump just above tau when tau
    is large, so each unit panel is integrated separately.
    """
    return sum(_simpson(f, tau + j, tau + j + 1.0, tol) for j in range(14))


def _folded_density(u):
    return math.sqrt(2.0 / math.pi) * math.exp(-0.5 * u * u)


def _quadrature_moments(tau):
    m0 = _tail_integral(lambda u: _folded_density(u), tau)
    m1 = _tail_integral(lambda u: u * _folded_density(u), tau)
    m2 = _tail_integral(lambda u: u * u * _folded_density(u), tau)
    return m0, m1, m2


def _check_tail_quadrature(fast):
    taus = np.arange(0.0, 8.01, 0.5 if fast else 0.1)
    tol = 1e-10
    worst = 0.0
    for tau in taus:
        closed = gaussian_tail_moments(float(tau))
        quad = _quadrature_moments(float(tau))
        worst = max(worst, max(abs(c - q) for c, q in zip(closed, quad)))
    return CheckResult(
        "tail_quadrature", worst <= tol, worst, tol,
        f"closed-form M0,M1,M2 vs adaptive Simpson at {len(taus)} tail points",
    )


def _check_stationary_residual(fast):
    rhos = (0.05, 0.125, 0.25, 0.5) if fast else (0.01, 0.05, 0.125, 0.25, 0.5, 0.9)
    tol = 1e-10
    worst = 0.0
    for variant, factor in (("psi1", 1.0), ("psi2", 2.0)):
        for rho in rhos:
            tau = stationary_solve(rho, variant)
            m0, m1, _ = _quadrature_moments(tau)
            residual = abs(factor * rho / (1.0 - rho) - (m1 / tau - m0))
            worst = max(worst, residual)
    return CheckResult(
        "stationary_residual", worst <= tol, worst, tol,
        "roots back-substituted through quadrature moments",
    )


def _check_psi_curve(fast):
    rhos = np.linspace(0.01, 0.99, 25 if fast else 99)
    tol = 1e-12
    worst = 0.0
    ok = True
    prev1 = prev2 = -1.0
    for rho in rhos:
        p1, _ = psi_value(float(rho), "psi1")
        p2, _ = psi_value(float(rho), "psi2")
        ok &= p2 <= p1 and p1 >= prev1 and p2 >= prev2
        prev1, prev2 = p1, p2
    for rho, variant, expected in ((0.0, "psi1", 0.0), (1.0, "psi1", 1.0),
                                   (0.0, "psi2", 0.0), (1.0, "psi2", 1.0)):
        val, _ = psi_value(rho, variant)
        worst = max(worst, abs(val - expected))
    return CheckResult(
        "psi_curve", ok and worst <= tol, worst, tol,
        "endpoint exactness, monotonicity, psi2 <= psi1",
    )


def _alternating_distance(family, tau, g, iters=2000):
    """dist^2(g, sum of sets) by block minimization over the components.

    Each sweep projects one component onto its own interval set holding the
    others fixed; the objective is convex and separable per block, so the
    sweep limit attains the true distance.  Shares nothing with the
    clip-on-summed-intervals route it checks.
    """
    pieces = [av.scaled(t) for t, av in zip(tau, family.scaled_atoms)]
    pieces += [(av.lo, av.hi) for av in family.fixed_atoms]
    comps = [np.zeros(family.n) for _ in pieces]
    for _ in range(iters):
        for i, (lo, hi) in enumerate(pieces):
            rest = g - sum(comps[j] for j in range(len(pieces)) if j != i)
            comps[i] = np.clip(rest, lo, hi)
    r = g - sum(comps)
    return float(r @ r)


def _check_alternating_projection(fast):
    tol = 1e-8
    worst = 0.0
    rng = np.random.default_rng(20260815)
    cases = 4 if fast else 12
    for case in range(cases):
        n = int(rng.integers(3, 8))
        s = int(rng.integers(1, n + 1))
        values = np.zeros(n)
        values[:s] = np.abs(rng.standard_normal(s)) + 0.1
        variant = ("l1_plain", "l1_l2ball", "l1_nonneg")[case % 3]
        signal = SparseSignal.from_values(
            values, "nonnegative" if variant == "l1_nonneg" else "signed"
        )
        constraints = {"l1_plain": (), "l1_l2ball": ("l2_ball",),
                       "l1_nonneg": ("nonneg",)}[variant]
        family = build_family(signal, constraints=constraints)
        tau = rng.uniform(0.0, 3.0, size=family.num_scalable)
        g = rng.standard_normal(n)
        fast_d, _ = dist_sq_and_project(family, tau, g)
        slow_d = _alternating_distance(family, tau, g, iters=500 if fast else 2000)
        worst = max(worst, abs(fast_d - slow_d))
    return CheckResult(
        "alternating_projection", worst <= tol, worst, tol,
        f"separable distance vs {cases} alternating-projection runs",
    )


def _check_gradient_fd(fast):
    tol = 1e-2
    samples = 20_000 if fast else 100_000
    cases = 4 if fast else 10
    rng = np.random.default_rng(77)
    worst = 0.0
    for case in range(cases):
        n = int(rng.integers(6, 16))
        s = int(rng.integers(1, max(2, n // 2)))
        values = np.zeros(n)
        values[:s] = np.abs(rng.standard_normal(s)) + 0.1
        variant = ("l1_l2ball", "l1_nonneg")[case % 2]
        signal = SparseSignal.from_values(
            values, "nonnegative" if variant == "l1_nonneg" else "signed"
        )
        constraints = ("l2_ball",) if variant == "l1_l2ball" else ("nonneg",)
        family = build_family(signal, constraints=constraints)
        tau = rng.uniform(0.3, 2.0, size=family.num_scalable)
        grad, _ = mc_j_gradient(family, tau, samples=samples, seed=case)
        h = 1e-4
        for i in range(tau.size):
            e = np.zeros_like(tau)
            e[i] = h
            # common seed: the same Gaussian draws on both sides
            fd = (
                mc_j(family, tau + e, samples=samples, seed=case)[0]
                - mc_j(family, tau - e, samples=samples, seed=case)[0]
            ) / (2.0 * h)
            rel = abs(grad[i] - fd) / max(1.0, abs(fd))
            worst = max(worst, rel)
    return CheckResult(
        "gradient_fd", worst <= tol, worst, tol,
        f"mc_j_gradient vs common-seed central differences, {cases} families",
    )


def run_verification(fast=False):
    """Run every cross-check; deterministic, no wall-clock entropy."""
    return [
        _check_tail_quadrature(fast),
        _check_stationary_residual(fast),
        _check_psi_curve(fast),
        _check_alternating_projection(fast),
        _check_gradient_fd(fast),
    ]
