"""Command-line front end: curves, statdim estimates, solves, grids, verify.

Subcommands are deterministic given their flags (all randomness is seeded
explicitly).  Exit codes: 0 success, 2 usage or input error, 3 solver
non-convergence, 4 verification failure.  Problem and config files are
line-oriented `key = value` text with whitespace-separated numeric arrays.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from .experiments import (
    VARIANTS,
    CheckpointError,
    PhaseGridConfig,
    emit_outputs,
    plan_m_values,
    run_grid,
)
from .geometry import SparseSignal, build_family
from .solvers import IllPosedProblem, RecoveryProblem, solve_recovery
from .statdim import (
    Bracket,
    StdError,
    closed_form_statdim,
    mc_statdim_exact,
    minimize_j,
    psi_value,
)
from .verify import run_verification

__all__ = ["main"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_VERIFY_FAILED = 4

METHODS = ("closed_form", "mc_recipe", "mc_exact")


class CliInputError(Exception):
    """Bad input discovered after flag parsing; maps to exit code 2."""


def _fmt(x):
    return f"{float(x):.17g}"


def _parse_rho_grid(spec):
    parts = spec.split(":")
    if len(parts) != 3:
        raise CliInputError(f"grid must be start:stop:count, got {spec!r}")
    try:
        start, stop = float(parts[0]), float(parts[1])
        count = int(parts[2])
    except ValueError as exc:
        raise CliInputError(f"unparseable grid {spec!r}") from exc
    if not (0.0 <= start <= stop <= 1.0 and count >= 1):
        raise CliInputError(f"grid {spec!r} must satisfy 0 <= start <= stop <= 1, count >= 1")
    if count == 1 and start != stop:
        raise CliInputError("a 1-point grid needs start == stop")
    return np.linspace(start, stop, count)


def _read_kv_file(path):
    path = Path(path)
    if not path.is_file():
        raise CliInputError(f"no such file: {path}")
    pairs = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliInputError(f"{path}:{lineno}: expected `key = value`, got {raw!r}")
        key, _, value = line.partition("=")
        pairs[key.strip()] = value.strip()
    return pairs


def _kv_int(pairs, key, path):
    try:
        return int(pairs[key])
    except KeyError:
        raise CliInputError(f"{path}: missing key {key!r}") from None
    except ValueError:
        raise CliInputError(f"{path}: key {key!r} must be an integer") from None


def _kv_floats(pairs, key, path):
    try:
        return np.array([float(tok) for tok in pairs[key].split()])
    except KeyError:
        raise CliInputError(f"{path}: missing key {key!r}") from None
    except ValueError:
        raise CliInputError(f"{path}: key {key!r} must be whitespace-separated numbers") from None


def cmd_curve(args):
    rhos = _parse_rho_grid(args.grid)
    lines = ["rho,psi,tau_star"]
    for rho in rhos:
        psi, tau = psi_value(float(rho), args.variant)
        lines.append(f"{_fmt(rho)},{_fmt(psi)},{_fmt(tau)}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(rhos)} rows to {out}")
    return EXIT_OK


def _canonical_family(n, s, variant):
    """Unit-coefficient signal on the first s coordinates; the statistical
    dimension depends only on (n, s, variant), not the nonzero values."""
    values = np.zeros(n)
    values[:s] = 1.0
    signal = SparseSignal.from_values(
        values, "nonnegative" if variant == "l1_nonneg" else "signed"
    )
    constraints = {"l1_plain": (), "l1_l2ball": ("l2_ball",),
                   "l1_nonneg": ("nonneg",)}[variant]
    return build_family(signal, constraints=constraints)


def cmd_statdim(args):
    if args.n < 1 or not 1 <= args.s <= args.n:
        raise CliInputError(f"need 1 <= s <= n, got s={args.s} n={args.n}")
    if args.samples < 2:
        raise CliInputError("samples must be >= 2")
    if args.method == "closed_form":
        est = closed_form_statdim(args.s, args.n, args.variant)
    else:
        family = _canonical_family(args.n, args.s, args.variant)
        run = minimize_j if args.method == "mc_recipe" else mc_statdim_exact
        est = run(family, samples=args.samples, seed=args.seed)
    print(f"value = {_fmt(est.value)}")
    print(f"tau_star = {' '.join(_fmt(t) for t in np.atleast_1d(est.tau_star))}")
    print(f"method = {est.method}")
    if isinstance(est.uncertainty, Bracket):
        print(f"bracket = {_fmt(est.uncertainty.lower)} {_fmt(est.uncertainty.upper)}")
    elif isinstance(est.uncertainty, StdError):
        print(f"std_error = {_fmt(est.uncertainty.se)}")
        print(f"mc_samples = {est.uncertainty.n_samples}")
    return EXIT_OK


def _load_problem(path):
    pairs = _read_kv_file(path)
    m = _kv_int(pairs, "m", path)
    n = _kv_int(pairs, "n", path)
    A = _kv_floats(pairs, "A", path)
    y = _kv_floats(pairs, "y", path)
    if A.size != m * n:
        raise CliInputError(f"{path}: A has {A.size} entries, expected m*n = {m * n}")
    if y.size != m:
        raise CliInputError(f"{path}: y has {y.size} entries, expected m = {m}")
    constraints = []
    if "l2_ball" in pairs:
        try:
            constraints.append(("l2_ball", float(pairs["l2_ball"])))
        except ValueError:
            raise CliInputError(f"{path}: l2_ball must be a radius") from None
    if pairs.get("nonneg", "0").lower() in ("1", "true", "yes"):
        constraints.append(("nonneg",))
    try:
        return RecoveryProblem(A.reshape(m, n), y, constraints=tuple(constraints))
    except ValueError as exc:
        raise CliInputError(f"{path}: {exc}") from exc


def cmd_solve(args):
    problem = _load_problem(args.problem)
    params = {"rho_penalty": args.rho, "max_iters": args.max_iters}
    try:
        result = solve_recovery(problem, params)
    except IllPosedProblem as exc:
        raise CliInputError(str(exc)) from exc
    out = Path(args.out) if args.out else Path(str(args.problem) + ".result")
    out.write_text(
        "\n".join(
            [
                f"status = {result.status}",
                f"iterations = {result.iterations}",
                f"primal_residual = {_fmt(result.primal_residual)}",
                f"dual_residual = {_fmt(result.dual_residual)}",
                "x_hat = " + " ".join(_fmt(v) for v in result.x_hat),
            ]
        )
        + "\n"
    )
    print(f"{result.status} after {result.iterations} iterations; wrote {out}")
    return EXIT_OK if result.status == "converged" else EXIT_NO_CONVERGENCE


def _load_grid_config(path, workers_flag):
    pairs = _read_kv_file(path)
    n = _kv_int(pairs, "n", path)
    trials = _kv_int(pairs, "trials", path)
    seed = _kv_int(pairs, "seed", path) if "seed" in pairs else 0
    variant = pairs.get("variant", "")
    if variant not in VARIANTS:
        raise CliInputError(f"{path}: variant must be one of {VARIANTS}")
    s_values = tuple(int(v) for v in _kv_floats(pairs, "s_values", path))
    if "m_values" in pairs:
        m_values = tuple(int(v) for v in _kv_floats(pairs, "m_values", path))
    else:
        zeta = float(pairs.get("zeta", "0.5"))
        coarse = int(pairs.get("coarse", "8"))
        fine = int(pairs.get("fine", "2"))
        m_values = plan_m_values(n, s_values, variant, zeta=zeta, coarse=coarse, fine=fine)
    solver_params = {}
    for key in ("rho_penalty", "feas_tol", "obj_tol"):
        if key in pairs:
            solver_params[key] = float(pairs[key])
    if "max_iters" in pairs:
        solver_params["max_iters"] = int(pairs["max_iters"])
    try:
        config = PhaseGridConfig(
            n=n, m_values=m_values, s_values=s_values, trials=trials,
            variant=variant, seed=seed, solver_params=solver_params,
        )
    except ValueError as exc:
        raise CliInputError(f"{path}: {exc}") from exc
    workers = workers_flag if workers_flag is not None else (
        int(pairs["workers"]) if "workers" in pairs else None
    )
    return config, workers


def cmd_grid(args):
    config, workers = _load_grid_config(args.config, args.workers)
    out = Path(args.out)
    checkpoint = out / "checkpoint.txt"
    if checkpoint.exists() and not (args.resume or args.reset):
        raise CliInputError(
            f"{checkpoint} exists; pass --resume to continue it or --reset to discard"
        )
    out.mkdir(parents=True, exist_ok=True)
    grid = run_grid(config, checkpoint_path=checkpoint, workers=workers, reset=args.reset)
    predictions = {
        s: closed_form_statdim(s, config.n, config.variant).uncertainty
        for s in config.s_values
    }
    paths = emit_outputs(grid, predictions, out)
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_verify(args):
    results = run_verification(fast=args.fast)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY_FAILED


def build_parser():
    parser = argparse.ArgumentParser(
        prog="phasekit",
        description="Phase-transition prediction and verification for sparse recovery.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("curve", help="tabulate a psi curve to CSV")
    p.add_argument("--variant", choices=("psi1", "psi2"), required=True)
    p.add_argument("--grid", default="0.01:0.99:99", help="rho grid start:stop:count")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("statdim", help="estimate a statistical dimension")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--variant", choices=VARIANTS, required=True)
    p.add_argument("--method", choices=METHODS, default="closed_form")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_statdim)

    p = sub.add_parser("solve", help="solve one recovery problem from a file")
    p.add_argument("--problem", required=True, help="key = value problem file")
    p.add_argument("--rho", type=float, default=1.0, help="ADMM penalty parameter")
    p.add_argument("--max-iters", type=int, default=50_000)
    p.add_argument("--out", default=None, help="result path (default: PROBLEM.result)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("grid", help="run a phase-transition grid from a config file")
    p.add_argument("--config", required=True, help="key = value grid config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", action="store_true", help="continue an existing checkpoint")
    p.add_argument("--reset", action="store_true", help="discard an existing checkpoint")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel cells (default: PHASEKIT_WORKERS or logical cores)")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("verify", help="run the oracle cross-check suite")
    p.add_argument("--fast", action="store_true", help="smaller grids and sample counts")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliInputError, CheckpointError) as exc:
        print(f"phasekit: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
