"""Coordinate-wise separable convex sets: atoms, sums, projections, distances.

Every set this toolkit needs (the l1 subdifferential at a sparse point, the
l2-norm subdifferential singleton {x/||x||_2}, the normal cone of the
nonnegative orthant) is a product of per-coordinate intervals.  Minkowski sums
of such sets are again products of intervals, with endpoints adding (any
half-line participant drags the lower endpoint to -inf), so projections and
squared distances reduce to per-coordinate clamping and are exact in O(n).

Scaling by tau >= 0 acts on endpoints: point(c) -> point(tau c),
box(lo, hi) -> box(tau lo, tau hi), half_line_below(hi) -> half_line_below(tau hi).
Cones (hi = 0 half-lines) are therefore fixed points of scaling.
"""

from dataclasses import dataclass
from typing import Protocol

import numpy as np

__all__ = [
    "SparseSignal",
    "IntervalAtom",
    "AtomVector",
    "SeparableFamily",
    "ProjectionDecomposition",
    "ProjectionOracle",
    "build_family",
    "interval_sum_at",
    "dist_sq_and_project",
]


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SparseSignal:
    """A nonzero signal x* with explicit support.

    values: length-n vector; support: sorted indices of the nonzero entries;
    variant: 'signed' or 'nonnegative'.  x* = 0 is rejected: the
    subdifferential formulas downstream assume at least one nonzero entry.
    """

    values: np.ndarray
    support: np.ndarray
    variant: str = "signed"

    def __post_init__(self):
        values = _readonly(self.values)
        support = np.array(self.support, dtype=int)
        support.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "support", support)
        if self.variant not in ("signed", "nonnegative"):
            raise ValueError(f"unknown variant {self.variant!r}")
        nz = np.flatnonzero(values)
        if nz.size == 0:
            raise ValueError("signal must have at least one nonzero entry")
        if support.ndim != 1 or not np.array_equal(support, nz):
            raise ValueError("support must list exactly the nonzero indices, sorted")
        if self.variant == "nonnegative" and np.any(values < 0):
            raise ValueError("nonnegative variant requires values >= 0")

    @classmethod
    def from_values(cls, values, variant="signed"):
        values = np.asarray(values, dtype=float)
        return cls(values, np.flatnonzero(values), variant)

    @property
    def n(self):
        return self.values.size

    @property
    def s(self):
        return self.support.size


@dataclass(frozen=True)
class IntervalAtom:
    """One coordinate's interval: point(c), box(lo, hi) or half_line_below(hi).

    half_line_below(hi) is (-inf, hi]; the upper endpoint is always finite.
    """

    kind: str
    lo: float
    hi: float

    def __post_init__(self):
        if not np.isfinite(self.hi):
            raise ValueError("upper endpoint must be finite")
        if self.kind == "point":
            if self.lo != self.hi:
                raise ValueError("point atom requires lo == hi")
        elif self.kind == "box":
            if not np.isfinite(self.lo) or self.lo > self.hi:
                raise ValueError("box atom requires finite lo <= hi")
        elif self.kind == "half_line_below":
            if self.lo != -np.inf:
                raise ValueError("half_line_below atom requires lo == -inf")
        else:
            raise ValueError(f"unknown atom kind {self.kind!r}")

    @staticmethod
    def point(c):
        return IntervalAtom("point", float(c), float(c))

    @staticmethod
    def box(lo, hi):
        if lo == hi:
            return IntervalAtom.point(lo)
        return IntervalAtom("box", float(lo), float(hi))

    @staticmethod
    def half_line_below(hi):
        return IntervalAtom("half_line_below", -np.inf, float(hi))

    def scaled(self, tau):
        """Endpoint scaling by tau >= 0; half-lines keep their -inf lower end."""
        if tau < 0:
            raise ValueError("scaling factor must be nonnegative")
        if self.kind == "half_line_below":
            return IntervalAtom.half_line_below(tau * self.hi)
        return IntervalAtom.box(tau * self.lo, tau * self.hi)

    def contains(self, x, tol=0.0):
        return self.lo - tol <= x <= self.hi + tol

    def clamp(self, x):
        return min(max(x, self.lo), self.hi)


class AtomVector:
    """A product of n interval atoms, stored as endpoint arrays.

    lo may contain -inf (half-line coordinates); hi is finite everywhere.
    """

    def __init__(self, lo, hi):
        lo = _readonly(lo)
        hi = _readonly(hi)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("endpoint arrays must be 1-d and equally sized")
        if not np.all(np.isfinite(hi)):
            raise ValueError("upper endpoints must be finite")
        if np.any(np.isnan(lo)) or np.any(lo > hi):
            raise ValueError("need lo <= hi per coordinate")
        self.lo = lo
        self.hi = hi

    @classmethod
    def from_atoms(cls, atoms):
        return cls([a.lo for a in atoms], [a.hi for a in atoms])

    def __len__(self):
        return self.lo.size

    def atom(self, coord):
        lo = self.lo[coord]
        if lo == -np.inf:
            return IntervalAtom.half_line_below(self.hi[coord])
        return IntervalAtom.box(lo, self.hi[coord])

    def scaled(self, tau):
        """Endpoint arrays of the tau-scaled set (tau >= 0)."""
        if tau < 0:
            raise ValueError("scaling factor must be nonnegative")
        # -inf stays -inf even at tau = 0 (endpoint-scaling convention)
        lo = np.where(np.isneginf(self.lo), -np.inf, self.lo * tau)
        return lo, self.hi * tau

    def contains(self, x, tol=0.0):
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))


class SeparableFamily:
    """The set family S(tau) = sum_i tau_i S_i + sum_j N_j, all separable.

    scaled_atoms hold the scalable sets S_i (one AtomVector each, scaled by the
    entries of tau); fixed_atoms hold unscaled cones N_j.  labels name the sets
    in order, scalable first.
    """

    def __init__(self, n, scaled_atoms, fixed_atoms=(), labels=None):
        self.n = int(n)
        self.scaled_atoms = tuple(scaled_atoms)
        self.fixed_atoms = tuple(fixed_atoms)
        if self.n < 1:
            raise ValueError("ambient dimension must be >= 1")
        if not self.scaled_atoms and not self.fixed_atoms:
            raise ValueError("family needs at least one set")
        for av in self.scaled_atoms + self.fixed_atoms:
            if len(av) != self.n:
                raise ValueError("atom vector length must equal n")
        k = len(self.scaled_atoms) + len(self.fixed_atoms)
        if labels is None:
            labels = tuple(f"set{i}" for i in range(k))
        self.labels = tuple(labels)
        if len(self.labels) != k:
            raise ValueError("need one label per set")
        if self.fixed_atoms:
            self.fixed_lo_sum = _readonly(sum(av.lo for av in self.fixed_atoms))
            self.fixed_hi_sum = _readonly(sum(av.hi for av in self.fixed_atoms))
        else:
            self.fixed_lo_sum = _readonly(np.zeros(self.n))
            self.fixed_hi_sum = _readonly(np.zeros(self.n))

    @property
    def num_scalable(self):
        return len(self.scaled_atoms)

    def scalable_stack(self):
        """Unscaled scalable endpoints as (k, n) arrays (lo_stack, hi_stack)."""
        k = self.num_scalable
        if k == 0:
            z = np.zeros((0, self.n))
            return z, z.copy()
        lo = np.stack([av.lo for av in self.scaled_atoms])
        hi = np.stack([av.hi for av in self.scaled_atoms])
        return lo, hi

    def sum_endpoints(self, tau):
        """Per-coordinate endpoints of sum_i tau_i S_i + sum_j N_j."""
        tau = _check_tau(self, tau)
        lo = self.fixed_lo_sum.copy()
        hi = self.fixed_hi_sum.copy()
        for t, av in zip(tau, self.scaled_atoms):
            slo, shi = av.scaled(t)
            lo += slo
            hi += shi
        return lo, hi


@dataclass(frozen=True)
class ProjectionDecomposition:
    """Nearest point of S(tau) to a query, split across the constituent sets.

    components[i] lies in tau_i S_i, fixed_components[j] in N_j, and the two
    groups sum coordinate-wise to projection; residual = query - projection.
    """

    projection: np.ndarray
    components: tuple
    fixed_components: tuple
    residual: np.ndarray


class ProjectionOracle(Protocol):
    """Extension point for non-separable summands: project a point onto a set.

    Declared for forward compatibility; no implementation ships, since every
    set used here is separable.
    """

    def project(self, point: np.ndarray) -> np.ndarray: ...


def _check_tau(family, tau):
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (family.num_scalable,):
        raise ValueError(
            f"tau must have length {family.num_scalable}, got shape {tau.shape}"
        )
    if np.any(tau < 0) or not np.all(np.isfinite(tau)):
        raise ValueError("tau must be finite and nonnegative")
    return tau


def build_family(signal, objective="l1", constraints=()):
    """Separable representation of the polar sum for an l1 recovery program.

    Scalable sets: the l1 subdifferential at the signal (point(sign x_i) on the
    support, box(-1, 1) off it), then the l2 singleton {x/||x||_2} if 'l2_ball'
    is among the constraints.  Fixed cones: the orthant normal cone (point(0)
    on the support, half_line_below(0) off it) if 'nonneg' is requested, which
    demands a nonnegative-variant signal.
    """
    if objective != "l1":
        raise ValueError(f"unsupported objective {objective!r}")
    constraints = tuple(constraints)
    unknown = set(constraints) - {"l2_ball", "nonneg"}
    if unknown:
        raise ValueError(f"unsupported constraints {sorted(unknown)!r}")
    x = signal.values
    on = np.zeros(x.size, dtype=bool)
    on[signal.support] = True

    lo = np.where(on, np.sign(x), -1.0)
    hi = np.where(on, np.sign(x), 1.0)
    scaled = [AtomVector(lo, hi)]
    labels = ["l1"]

    if "l2_ball" in constraints:
        unit = x / np.linalg.norm(x)
        scaled.append(AtomVector(unit, unit))
        labels.append("l2")

    fixed = []
    if "nonneg" in constraints:
        if signal.variant != "nonnegative":
            raise ValueError("nonneg constraint requires a nonnegative-variant signal")
        flo = np.where(on, 0.0, -np.inf)
        fhi = np.zeros(x.size)
        fixed.append(AtomVector(flo, fhi))
        labels.append("nonneg")

    return SeparableFamily(x.size, scaled, fixed, labels)


def interval_sum_at(family, tau, coord):
    """Exact interval sum_i tau_i S_i[coord] + sum_j N_j[coord] as one atom."""
    tau = _check_tau(family, tau)
    coord = int(coord)
    if not 0 <= coord < family.n:
        raise ValueError("coordinate out of range")
    lo = hi = 0.0
    for t, av in zip(tau, family.scaled_atoms):
        a = av.atom(coord).scaled(t)
        lo += a.lo
        hi += a.hi
    for av in family.fixed_atoms:
        a = av.atom(coord)
        lo += a.lo
        hi += a.hi
    if lo == -np.inf:
        return IntervalAtom.half_line_below(hi)
    return IntervalAtom.box(lo, hi)


def dist_sq_and_project(family, tau, g):
    """Squared distance from g to S(tau) plus a per-set split of the projection.

    The projection clamps g coordinate-wise into the summed interval.  The
    split allocates each projected coordinate greedily in set order (scalable
    sets first, fixed cones last): each set takes the remainder clamped both to
    its own interval and to what the later sets can still absorb, so the last
    set receives an exact remainder and every component stays in its set.  Any
    optimal split yields the same gradient inner products downstream; the
    greedy rule just fixes a deterministic representative.
    """
    tau = _check_tau(family, tau)
    g = np.asarray(g, dtype=float)
    if g.shape != (family.n,):
        raise ValueError(f"g must have shape ({family.n},), got {g.shape}")
    lo_tot, hi_tot = family.sum_endpoints(tau)
    projection = np.clip(g, lo_tot, hi_tot)
    residual = g - projection
    dist_sq = float(residual @ residual)

    pieces = [av.scaled(t) for t, av in zip(tau, family.scaled_atoms)]
    pieces += [(av.lo, av.hi) for av in family.fixed_atoms]
    split = _greedy_split(projection, pieces)
    k = family.num_scalable
    return dist_sq, ProjectionDecomposition(
        projection=projection,
        components=tuple(split[:k]),
        fixed_components=tuple(split[k:]),
        residual=residual,
    )


def _greedy_split(target, pieces):
    """Allocate target across interval sets in order; exact by construction."""
    remaining = target.copy()
    # suffix interval sums tell each set how much the later sets can absorb
    suffix_lo = [np.zeros_like(target)]
    suffix_hi = [np.zeros_like(target)]
    for lo, hi in reversed(pieces[1:]):
        suffix_lo.append(suffix_lo[-1] + lo)
        suffix_hi.append(suffix_hi[-1] + hi)
    suffix_lo.reverse()
    suffix_hi.reverse()

    out = []
    for (lo, hi), rest_lo, rest_hi in zip(pieces, suffix_lo, suffix_hi):
        take_lo = np.maximum(lo, remaining - rest_hi)
        take_hi = np.minimum(hi, remaining - rest_lo)
        # guards against roundoff inverting an (always feasible) range
        take_lo = np.minimum(take_lo, take_hi)
        comp = np.clip(remaining, take_lo, take_hi)
        out.append(comp)
        remaining = remaining - comp
    return out
