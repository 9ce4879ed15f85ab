"""Phase-transition experiment protocol: grids of random recovery trials.

A grid cell is a measurement count m and sparsity s; each cell runs
config.trials independent recoveries and tallies successes.  Cell streams
derive from (seed, m, s, trial, attempt), so results are a pure function of
the config no matter how cells are scheduled, and interrupted runs resume
from a checkpoint without recomputation.  Empirical 50% crossings come from
an isotonic fit of success probability versus m.
"""

import hashlib
import logging
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import SparseSignal
from .solvers import IllPosedProblem, RecoveryProblem, check_success, solve_recovery
from .statdim import closed_form_statdim, transition_window
from .streams import substream

__all__ = [
    "VARIANTS",
    "CHECKPOINT_HEADER",
    "CheckpointError",
    "PhaseGridConfig",
    "PhaseGrid",
    "generate_signal",
    "run_cell",
    "run_grid",
    "find_crossing",
    "isotonic_fit",
    "plan_m_values",
    "emit_outputs",
    "resolve_workers",
]

log = logging.getLogger(__name__)

VARIANTS = ("l1_plain", "l1_l2ball", "l1_nonneg")
CHECKPOINT_HEADER = "phasekit-checkpoint v1"

# redraws on ill-posed instances happen with probability zero; a bound this
# generous only trips on a broken matrix source
MAX_REDRAWS_PER_TRIAL = 50


class CheckpointError(RuntimeError):
    """Checkpoint file is unreadable or belongs to a different config."""


@dataclass(frozen=True)
class PhaseGridConfig:
    """Full experiment description; grids are pure functions of this."""

    n: int
    m_values: tuple
    s_values: tuple
    trials: int
    variant: str
    seed: int = 0
    solver_params: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "m_values", tuple(sorted({int(m) for m in self.m_values})))
        object.__setattr__(self, "s_values", tuple(sorted({int(s) for s in self.s_values})))
        if isinstance(self.solver_params, dict):
            object.__setattr__(
                self, "solver_params", tuple(sorted(self.solver_params.items()))
            )
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.m_values or not self.s_values:
            raise ValueError("m_values and s_values must be nonempty")
        if not all(1 <= m <= self.n for m in self.m_values):
            raise ValueError("every m must satisfy 1 <= m <= n")
        if not all(1 <= s <= self.n for s in self.s_values):
            raise ValueError("every s must satisfy 1 <= s <= n")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, not {self.variant!r}")

    def solver_param_dict(self):
        return dict(self.solver_params)

    def fingerprint(self):
        """Stable digest binding checkpoints to the exact configuration."""
        canon = repr(
            (
                self.n,
                self.m_values,
                self.s_values,
                self.trials,
                self.variant,
                self.seed,
                self.solver_params,
            )
        )
        return hashlib.sha256(canon.encode()).hexdigest()


class PhaseGrid:
    """Mutable collection of completed cells for one config."""

    def __init__(self, config):
        self.config = config
        self.cells = {}
        self.provenance = {}

    def add_cell(self, m, s, record):
        rec = {
            "successes": int(record["successes"]),
            "trials_run": int(record["trials_run"]),
            "non_converged": int(record["non_converged"]),
        }
        if not 0 <= rec["successes"] <= rec["trials_run"] <= self.config.trials:
            raise ValueError("cell tallies violate successes <= trials_run <= trials")
        self.cells[(int(m), int(s))] = rec
        self.provenance[(int(m), int(s))] = (
            f"substream({self.config.seed}, {m}, {s}, trial, attempt)"
        )

    def column(self, s):
        """Completed cells at sparsity s as a list of (m, record), m ascending."""
        col = [(m, rec) for (m, s2), rec in self.cells.items() if s2 == s]
        return sorted(col)

    def is_complete(self):
        return all(
            (m, s) in self.cells
            for m in self.config.m_values
            for s in self.config.s_values
        )


def generate_signal(n, s, variant, stream):
    """s-sparse signal on the first s coordinates, entries iid standard normal.

    The nonneg variant takes absolute values.  The fixed-support convention is
    harmless by rotation invariance of the Gaussian matrix ensemble.
    """
    if not 1 <= s <= n:
        raise ValueError("need 1 <= s <= n")
    draws = stream.standard_normal(s)
    draws[draws == 0.0] = 1.0  # keep the support exactly s (measure zero)
    values = np.zeros(n)
    values[:s] = np.abs(draws) if variant == "l1_nonneg" else draws
    kind = "nonnegative" if variant == "l1_nonneg" else "signed"
    return SparseSignal.from_values(values, kind)


def _constraints_for(variant, signal):
    if variant == "l1_l2ball":
        return (("l2_ball", float(np.linalg.norm(signal.values))),)
    if variant == "l1_nonneg":
        return (("nonneg",),)
    return ()


def run_cell(config, m, s):
    """Tally config.trials recoveries at (m, s): successes / non_converged.

    Trial t uses the stream (seed, m, s, t, attempt); attempt bumps only when
    an instance is ill posed (logged, probability zero), so every other cell
    is unaffected.  Non-converged solves count as failures.
    """
    if not (1 <= m <= config.n and 1 <= s <= config.n):
        raise ValueError("cell outside config ranges")
    params = config.solver_param_dict()
    successes = 0
    non_converged = 0
    for t in range(config.trials):
        for attempt in range(MAX_REDRAWS_PER_TRIAL):
            stream = substream(config.seed, m, s, t, attempt)
            signal = generate_signal(config.n, s, config.variant, stream)
            A = stream.standard_normal((m, config.n))
            problem = RecoveryProblem(
                A, A @ signal.values, constraints=_constraints_for(config.variant, signal)
            )
            try:
                result = solve_recovery(problem, params)
            except IllPosedProblem:
                log.warning(
                    "ill-posed instance at m=%d s=%d trial=%d attempt=%d; redrawing",
                    m, s, t, attempt,
                )
                continue
            break
        else:
            raise IllPosedProblem(f"persistent ill-posed instances at m={m} s={s}")
        if result.status == "converged" and check_success(result.x_hat, signal.values):
            successes += 1
        elif result.status != "converged":
            non_converged += 1
    return {
        "successes": successes,
        "trials_run": config.trials,
        "non_converged": non_converged,
    }


def resolve_workers(workers=None):
    """Explicit argument, else PHASEKIT_WORKERS, else the cpu count."""
    if workers is None:
        env = os.environ.get("PHASEKIT_WORKERS", "")
        workers = int(env) if env else (os.cpu_count() or 1)
    workers = int(workers)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return workers


def _write_checkpoint(path, config, grid):
    rows = [
        f"{m},{s},{rec['successes']},{rec['trials_run']},{rec['non_converged']}"
        for (m, s), rec in sorted(grid.cells.items())
    ]
    body = "\n".join([CHECKPOINT_HEADER, f"config {config.fingerprint()}"] + rows) + "\n"
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(body)
        os.replace(tmp, path)  # atomic: readers never see a torn file
    except BaseException:
        os.unlink(tmp)
        raise


def _read_checkpoint(path, config):
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_HEADER!r} file")
    if len(lines) < 2 or not lines[1].startswith("config "):
        raise CheckpointError(f"{path} is missing its config fingerprint")
    if lines[1].split(" ", 1)[1] != config.fingerprint():
        raise CheckpointError(
            f"{path} belongs to a different configuration; pass reset to discard it"
        )
    cells = {}
    for ln in lines[2:]:
        if not ln.strip():
            continue
        parts = ln.split(",")
        try:
            m, s, succ, run, nc = (int(p) for p in parts)
        except ValueError as exc:
            raise CheckpointError(f"corrupt checkpoint line {ln!r} in {path}") from exc
        cells[(m, s)] = {"successes": succ, "trials_run": run, "non_converged": nc}
    return cells


def run_grid(config, checkpoint_path=None, workers=None, reset=False):
    """Run every cell of the grid, resuming from checkpoint_path if present.

    A corrupt or mismatched checkpoint raises CheckpointError unless reset is
    true.  Execution order cannot affect results (independent streams); the
    checkpoint is rewritten atomically after each completed cell.
    """
    path = Path(checkpoint_path) if checkpoint_path is not None else None
    done = {}
    if path is not None and path.exists():
        if reset:
            path.unlink()
        else:
            done = _read_checkpoint(path, config)
    grid = PhaseGrid(config)
    for (m, s), rec in done.items():
        grid.add_cell(m, s, rec)
    todo = [
        (m, s)
        for s in config.s_values
        for m in config.m_values
        if (m, s) not in grid.cells
    ]
    if not todo:
        return grid
    with ThreadPoolExecutor(max_workers=resolve_workers(workers)) as pool:
        futures = {pool.submit(run_cell, config, m, s): (m, s) for m, s in todo}
        for fut in as_completed(futures):
            m, s = futures[fut]
            grid.add_cell(m, s, fut.result())
            if path is not None:
                _write_checkpoint(path, config, grid)
    return grid


def isotonic_fit(values, weights):
    """Weighted least-squares nondecreasing fit (pool adjacent violators)."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    blocks = []  # [weight, weighted mean, count]
    for v, w in zip(values, weights):
        blocks.append([w, v, 1])
        while len(blocks) > 1 and blocks[-1][1] < blocks[-2][1]:
            w2, v2, c2 = blocks.pop()
            w1, v1, c1 = blocks.pop()
            wt = w1 + w2
            blocks.append([wt, (w1 * v1 + w2 * v2) / wt, c1 + c2])
    out = np.empty(len(values))
    i = 0
    for _, v, c in blocks:
        out[i : i + c] = v
        i += c
    return out


def find_crossing(grid, s):
    """Smallest m where the isotonic success-probability fit crosses 1/2.

    Linear interpolation between adjacent grid m values; columns that never
    cross return the sentinel min(m) - 1 (all success) or max(m) + 1 (none).
    """
    col = grid.column(s)
    if len(col) < 2:
        raise ValueError(f"need >= 2 m values at s={s} to locate a crossing")
    ms = np.array([m for m, _ in col], dtype=float)
    probs = np.array([rec["successes"] / rec["trials_run"] for _, rec in col])
    weights = np.array([rec["trials_run"] for _, rec in col], dtype=float)
    fit = isotonic_fit(probs, weights)
    if fit[0] >= 0.5:
        return float(ms[0] - 1.0)
    if fit[-1] < 0.5:
        return float(ms[-1] + 1.0)
    i = int(np.argmax(fit >= 0.5))
    p0, p1 = fit[i - 1], fit[i]
    return float(ms[i - 1] + (0.5 - p0) / (p1 - p0) * (ms[i] - ms[i - 1]))


def plan_m_values(n, s_values, variant, zeta=0.5, coarse=8, fine=2):
    """Coarse m sweep refined inside the predicted transition windows.

    Keeps desk-scale grids to minutes: stride `coarse` everywhere, stride
    `fine` within delta +- a_zeta sqrt(n) of each sparsity's prediction.
    """
    ms = set(range(1, n + 1, coarse))
    ms.update((1, n))
    for s in s_values:
        est = closed_form_statdim(s, n, variant)
        win = transition_window(est.value, n, zeta)
        lo = max(1, int(math.floor(win.m_low)))
        hi = min(n, int(math.ceil(win.m_high)))
        ms.update(range(lo, hi + 1, fine))
    return tuple(sorted(ms))


def _fmt(x):
    return f"{float(x):.17g}"


def emit_outputs(grid, predictions, out_dir):
    """Write grid.csv, curve.csv, and heatmap.svg into out_dir.

    predictions maps sparsity -> bracket of theoretical delta (m units).
    Numeric CSV fields are full-precision decimal; columns with a single m
    value get nan for their empirical crossing.
    """
    if not grid.cells:
        raise ValueError("grid has no completed cells")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    grid_path = out / "grid.csv"
    rows = ["m,s,successes,trials,non_converged"]
    for (m, s), rec in sorted(grid.cells.items()):
        rows.append(f"{m},{s},{rec['successes']},{rec['trials_run']},{rec['non_converged']}")
    grid_path.write_text("\n".join(rows) + "\n")

    curve_path = out / "curve.csv"
    rows = ["s,m_theory_upper,m_theory_lower,m50_empirical"]
    for s in grid.config.s_values:
        bracket = predictions[s]
        try:
            m50 = find_crossing(grid, s)
        except ValueError:
            m50 = float("nan")
        rows.append(f"{s},{_fmt(bracket.upper)},{_fmt(bracket.lower)},{_fmt(m50)}")
    curve_path.write_text("\n".join(rows) + "\n")

    svg_path = out / "heatmap.svg"
    svg_path.write_text(_heatmap_svg(grid, predictions))
    return [grid_path, curve_path, svg_path]


def _heatmap_svg(grid, predictions, cell=10):
    """Grayscale success heatmap (white = 1) with the theory bracket overlaid."""
    ms = grid.config.m_values
    ss = grid.config.s_values
    left, top, right, bottom = 46, 12, 12, 34
    width = left + cell * len(ss) + right
    height = top + cell * len(ms) + bottom
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    # cells: m grows upward, s rightward
    for yi, m in enumerate(ms):
        y = top + (len(ms) - 1 - yi) * cell
        for xi, s in enumerate(ss):
            rec = grid.cells.get((m, s))
            if rec is None:
                continue
            g = round(255 * rec["successes"] / rec["trials_run"])
            parts.append(
                f'<rect x="{left + xi * cell}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="rgb({g},{g},{g})"/>'
            )

    def y_of(delta):
        # fractional row index of a delta value on the m axis
        idx = np.interp(delta, np.array(ms, dtype=float), np.arange(len(ms)))
        return top + (len(ms) - 1 - idx) * cell + 0.5 * cell

    def polyline(bound_of, color, dashed):
        pts = " ".join(
            f"{left + xi * cell + 0.5 * cell:.2f},{y_of(bound_of(predictions[s])):.2f}"
            for xi, s in enumerate(ss)
        )
        dash = ' stroke-dasharray="4 3"' if dashed else ""
        return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>'

    parts.append(polyline(lambda b: b.upper, "#cc2222", dashed=False))
    parts.append(polyline(lambda b: b.lower, "#2255cc", dashed=True))
    axis = "#333333"
    parts += [
        f'<text x="{left - 6}" y="{top + len(ms) * cell}" font-size="9" fill="{axis}" '
        f'text-anchor="end">m={ms[0]}</text>',
        f'<text x="{left - 6}" y="{top + 9}" font-size="9" fill="{axis}" '
        f'text-anchor="end">m={ms[-1]}</text>',
        f'<text x="{left}" y="{height - 20}" font-size="9" fill="{axis}">s={ss[0]}</text>',
        f'<text x="{left + len(ss) * cell}" y="{height - 20}" font-size="9" fill="{axis}" '
        f'text-anchor="end">s={ss[-1]}</text>',
        f'<text x="{left + 0.5 * len(ss) * cell}" y="{height - 6}" font-size="10" '
        f'fill="{axis}" text-anchor="middle">sparsity s (theory: red upper, blue lower)</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"
