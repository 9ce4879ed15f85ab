"""Recovery-program solvers: consensus splitting plus a tiny exact LP oracle.

The programs are min ||x||_1 subject to A x = y, optionally intersected with
an l2 ball ||x||_2 <= r and/or the nonnegative orthant.  Each structure has a
closed-form proximal or projection map, so a consensus operator-splitting
(ADMM-style) iteration handles every variant with one block per structure:
soft threshold, affine projection through a cached Cholesky factor of A A^T,
ball rescale, orthant clamp.  For tiny instances an exact oracle enumerates
the basic feasible solutions of the equivalent linear program.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular

from . import backend

__all__ = [
    "SUCCESS_TOL",
    "DEFAULT_PARAMS",
    "IllPosedProblem",
    "InfeasibleProblem",
    "RecoveryProblem",
    "RecoveryResult",
    "AffineProjector",
    "affine_projector",
    "solve_recovery",
    "lp_oracle_small",
    "check_success",
]

# the experiment protocol's success threshold on ||x_hat - x*||_2 (inclusive)
SUCCESS_TOL = 1e-4

# the 1e-4 success tolerance needs solves well past it; 1e-7 residuals leave
# two decades of margin at the default penalty
DEFAULT_PARAMS = {
    "rho_penalty": 1.0,
    "max_iters": 50_000,
    "feas_tol": 1e-7,
    "obj_tol": 1e-6,
}


class IllPosedProblem(RuntimeError):
    """A A^T is numerically rank deficient; the instance is ill posed."""


class InfeasibleProblem(RuntimeError):
    """No feasible point exists for the requested program."""


@dataclass(frozen=True)
class RecoveryProblem:
    """min ||x||_1 s.t. A x = y, plus optional ('l2_ball', radius) / ('nonneg',)."""

    A: np.ndarray
    y: np.ndarray
    objective: str = "l1"
    constraints: tuple = ()

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        y = np.array(self.y, dtype=float)
        A.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "constraints", tuple(map(tuple, self.constraints)))
        if A.ndim != 2 or y.shape != (A.shape[0],):
            raise ValueError("A must be m x n with y of length m")
        if self.objective != "l1":
            raise ValueError(f"unsupported objective {self.objective!r}")
        seen = set()
        for con in self.constraints:
            if con[0] in seen:
                raise ValueError(f"duplicate constraint {con[0]!r}")
            seen.add(con[0])
            if con[0] == "nonneg":
                if len(con) != 1:
                    raise ValueError("nonneg takes no parameters")
            elif con[0] == "l2_ball":
                if len(con) != 2 or not con[1] > 0:
                    raise ValueError("l2_ball needs a positive radius")
            else:
                raise ValueError(f"unsupported constraint {con[0]!r}")

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def l2_radius(self):
        for con in self.constraints:
            if con[0] == "l2_ball":
                return float(con[1])
        return None

    @property
    def nonneg(self):
        return any(con[0] == "nonneg" for con in self.constraints)


@dataclass(frozen=True)
class RecoveryResult:
    """Solver outcome; status is 'converged' or 'max_iters'."""

    x_hat: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    status: str


class AffineProjector:
    """x -> x + A^T (A A^T)^{-1} (y - A x), with the SPD factor cached.

    Immutable after construction; safe to share across threads.
    """

    def __init__(self, A, y):
        self.A = np.asarray(A, dtype=float)
        self.y = np.asarray(y, dtype=float)
        try:
            # lower factor L with A A^T = L L^T, reused by the solver kernels
            self.L = cholesky(self.A @ self.A.T, lower=True)
        except LinAlgError as exc:
            raise IllPosedProblem("A A^T is not positive definite") from exc

    def __call__(self, x):
        w = self.y - self.A @ x
        t = solve_triangular(self.L, w, lower=True)
        return x + self.A.T @ solve_triangular(self.L, t, lower=True, trans=1)


def affine_projector(A, y):
    """Reusable exact projector onto {x : A x = y} (A of full row rank)."""
    return AffineProjector(A, y)


def solve_recovery(problem, params=None):
    """Consensus splitting until max(primal, dual) residual <= feas_tol.

    params: rho_penalty, max_iters, feas_tol, obj_tol (see DEFAULT_PARAMS).
    Exhausting max_iters is reported through status, not raised.  obj_tol
    records the accuracy contract checked against the small-instance oracle.
    Deterministic: identical inputs yield identical iterate sequences.
    """
    p = dict(DEFAULT_PARAMS)
    p.update(params or {})
    proj = affine_projector(problem.A, problem.y)
    z0 = proj(np.zeros(problem.n))
    radius = problem.l2_radius
    z, iters, primal, dual, converged = backend.admm_solve(
        problem.A,
        problem.y,
        proj.L,
        z0,
        float(p["rho_penalty"]),
        int(p["max_iters"]),
        float(p["feas_tol"]),
        -1.0 if radius is None else radius,
        problem.nonneg,
    )
    return RecoveryResult(
        x_hat=z,
        iterations=int(iters),
        primal_residual=float(primal),
        dual_residual=float(dual),
        status="converged" if converged else "max_iters",
    )


def lp_oracle_small(problem, max_n=12, chunk=200_000):
    """Exact (objective, x_opt) by basic-feasible-solution enumeration.

    Splitting x = p - q turns the plain program into a standard-form LP whose
    optimum sits at a vertex, i.e. a nonsingular m-column basis with a
    nonnegative solution; the nonneg variant skips the split.  Every basis is
    enumerated, so n must stay small.  The l2-ball variant has no LP form and
    is excluded.
    """
    if problem.n > max_n:
        raise ValueError(f"oracle enumerates bases only up to n = {max_n}")
    if problem.l2_radius is not None:
        raise ValueError("l2_ball constraint has no small-LP form")
    A, y = problem.A, problem.y
    m, n = A.shape
    if np.linalg.matrix_rank(A) < m:
        raise IllPosedProblem("A must have full row rank")
    M = A if problem.nonneg else np.hstack([A, -A])
    N = M.shape[1]
    col_norms = np.linalg.norm(M, axis=0)
    col_norms[col_norms == 0.0] = 1.0

    best_obj = np.inf
    best_cols = best_sol = None
    combo_iter = itertools.combinations(range(N), m)
    while True:
        block = list(itertools.islice(combo_iter, chunk))
        if not block:
            break
        idx = np.array(block)
        bases = np.swapaxes(M.T[idx], 1, 2)  # (K, m, m), columns as chosen
        dets = np.linalg.det(bases)
        ok = np.abs(dets) > 1e-12 * np.prod(col_norms[idx], axis=1)  # Hadamard scale
        if not ok.any():
            continue
        sols = np.linalg.solve(bases[ok], y)
        feas = np.all(sols >= -1e-9, axis=1)
        if not feas.any():
            continue
        objs = np.abs(sols).sum(axis=1)
        objs[~feas] = np.inf
        k = int(np.argmin(objs))
        if objs[k] < best_obj:
            best_obj = float(objs[k])
            best_cols = idx[ok][k]
            best_sol = np.maximum(sols[k], 0.0)
    if best_cols is None:
        raise InfeasibleProblem("no basic feasible solution")
    full = np.zeros(N)
    full[best_cols] = best_sol
    x = full[:n] if problem.nonneg else full[:n] - full[n:]
    return best_obj, x


def check_success(x_hat, x_star):
    """Protocol success test: ||x_hat - x*||_2 <= 1e-4, boundary inclusive."""
    x_hat = np.asarray(x_hat, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    if x_hat.shape != x_star.shape:
        raise ValueError("length mismatch")
    return bool(np.linalg.norm(x_hat - x_star) <= SUCCESS_TOL)
