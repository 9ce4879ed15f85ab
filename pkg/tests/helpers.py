"""Shared test utilities: random instances and family plumbing."""

import numpy as np

from phasekit.geometry import SparseSignal, build_family


def random_signal(rng, n, s, variant="signed"):
    """Signal with the first s coordinates nonzero (drawn standard normal)."""
    values = np.zeros(n)
    draws = rng.standard_normal(s)
    draws[draws == 0.0] = 1.0
    values[:s] = np.abs(draws) if variant == "nonnegative" else draws
    return SparseSignal.from_values(values, variant)


def random_family(rng, n):
    """Random family of one of the three supported kinds, with its signal."""
    kind = rng.integers(3)
    s = int(rng.integers(1, n + 1))
    if kind == 0:
        signal = random_signal(rng, n, s, "signed")
        return build_family(signal), signal
    if kind == 1:
        signal = random_signal(rng, n, s, "signed")
        return build_family(signal, constraints=("l2_ball",)), signal
    signal = random_signal(rng, n, s, "nonnegative")
    return build_family(signal, constraints=("nonneg",)), signal


def family_pieces(family, tau):
    """The scaled summands as plain (lo, hi) pairs, for the distance oracle."""
    pieces = [av.scaled(t) for t, av in zip(tau, family.scaled_atoms)]
    pieces += [(av.lo, av.hi) for av in family.fixed_atoms]
    return pieces
