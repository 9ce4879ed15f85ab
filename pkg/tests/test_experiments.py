"""Grid protocol tests: determinism, resume, crossings, and output files."""

import numpy as np
import pytest

from phasekit.experiments import (
    CHECKPOINT_HEADER,
    CheckpointError,
    PhaseGrid,
    PhaseGridConfig,
    emit_outputs,
    find_crossing,
    generate_signal,
    isotonic_fit,
    plan_m_values,
    resolve_workers,
    run_cell,
    run_grid,
)
from phasekit.statdim import Bracket, closed_form_statdim
from phasekit.streams import substream

from oracles import pav_oracle


def small_config(**overrides):
    kw = dict(
        n=12,
        m_values=(3, 6, 9, 12),
        s_values=(1, 2),
        trials=3,
        variant="l1_plain",
        seed=11,
    )
    kw.update(overrides)
    return PhaseGridConfig(**kw)


def fake_grid(config, probs):
    """Grid with synthetic tallies; probs maps (m, s) -> success fraction."""
    grid = PhaseGrid(config)
    for (m, s), p in probs.items():
        grid.add_cell(
            m, s, {"successes": round(p * config.trials), "trials_run": config.trials,
                   "non_converged": 0}
        )
    return grid


class TestConfig:
    def test_sorts_and_dedups_axes(self):
        cfg = PhaseGridConfig(n=8, m_values=(8, 2, 2, 5), s_values=(3, 1, 3),
                              trials=1, variant="l1_plain")
        assert cfg.m_values == (2, 5, 8)
        assert cfg.s_values == (1, 3)

    def test_rejects_out_of_range_axes(self):
        with pytest.raises(ValueError):
            PhaseGridConfig(n=8, m_values=(0, 4), s_values=(1,), trials=1, variant="l1_plain")
        with pytest.raises(ValueError):
            PhaseGridConfig(n=8, m_values=(4,), s_values=(9,), trials=1, variant="l1_plain")

    def test_rejects_bad_trials_and_variant(self):
        with pytest.raises(ValueError):
            PhaseGridConfig(n=8, m_values=(4,), s_values=(1,), trials=0, variant="l1_plain")
        with pytest.raises(ValueError):
            PhaseGridConfig(n=8, m_values=(4,), s_values=(1,), trials=1, variant="lasso")

    def test_solver_params_canonicalized_into_fingerprint(self):
        a = PhaseGridConfig(n=8, m_values=(4,), s_values=(1,), trials=1,
                            variant="l1_plain", solver_params={"rho_penalty": 2.0})
        b = PhaseGridConfig(n=8, m_values=(4,), s_values=(1,), trials=1,
                            variant="l1_plain", solver_params=(("rho_penalty", 2.0),))
        c = PhaseGridConfig(n=8, m_values=(4,), s_values=(1,), trials=1, variant="l1_plain")
        assert a.fingerprint() == b.fingerprint()
        assert a.fingerprint() != c.fingerprint()
        assert a.solver_param_dict() == {"rho_penalty": 2.0}

    def test_fingerprint_sensitive_to_every_field(self):
        base = small_config()
        assert base.fingerprint() == small_config().fingerprint()
        for overrides in ({"seed": 12}, {"trials": 4}, {"variant": "l1_nonneg"},
                          {"m_values": (3, 6, 9)}, {"s_values": (1, 2, 3)}):
            assert small_config(**overrides).fingerprint() != base.fingerprint()


class TestGenerateSignal:
    def test_support_is_first_s_coordinates(self):
        sig = generate_signal(10, 4, "l1_plain", substream(0, 1))
        assert np.array_equal(sig.support, np.arange(4))
        assert np.all(sig.values[4:] == 0)

    def test_nonneg_variant_is_nonnegative(self):
        sig = generate_signal(10, 4, "l1_nonneg", substream(0, 2))
        assert np.all(sig.values >= 0)
        assert sig.variant == "nonnegative"

    def test_dense_when_s_equals_n(self):
        sig = generate_signal(6, 6, "l1_l2ball", substream(0, 3))
        assert np.all(sig.values != 0)
        assert sig.variant == "signed"

    def test_deterministic_per_stream(self):
        a = generate_signal(10, 3, "l1_plain", substream(5, 1, 2))
        b = generate_signal(10, 3, "l1_plain", substream(5, 1, 2))
        assert np.array_equal(a.values, b.values)

    def test_rejects_bad_sparsity(self):
        with pytest.raises(ValueError):
            generate_signal(10, 0, "l1_plain", substream(0))
        with pytest.raises(ValueError):
            generate_signal(10, 11, "l1_plain", substream(0))


class TestRunCell:
    def test_bookkeeping_totals(self):
        cfg = small_config()
        rec = run_cell(cfg, 6, 1)
        assert rec["trials_run"] == cfg.trials
        assert 0 <= rec["successes"] <= rec["trials_run"]
        assert 0 <= rec["non_converged"] <= rec["trials_run"] - rec["successes"]

    def test_full_measurements_always_succeed(self):
        cfg = small_config(trials=4)
        rec = run_cell(cfg, cfg.n, 2)
        assert rec["successes"] == cfg.trials

    def test_repeat_is_identical(self):
        cfg = small_config(variant="l1_nonneg")
        assert run_cell(cfg, 6, 2) == run_cell(cfg, 6, 2)

    def test_rejects_out_of_range_cell(self):
        with pytest.raises(ValueError):
            run_cell(small_config(), 0, 1)
        with pytest.raises(ValueError):
            run_cell(small_config(), 3, 13)

    def test_ill_posed_trial_redrawn_with_fresh_stream(self, monkeypatch, caplog):
        from phasekit import experiments
        from phasekit.solvers import IllPosedProblem

        cfg = small_config(trials=2)
        baseline = run_cell(cfg, 6, 1)
        real_solve = experiments.solve_recovery
        rejected = []

        def flaky_solve(problem, params=None):
            if not rejected:
                rejected.append(problem)
                raise IllPosedProblem("synthetic singular instance")
            return real_solve(problem, params)

        monkeypatch.setattr(experiments, "solve_recovery", flaky_solve)
        with caplog.at_level("WARNING", logger="phasekit.experiments"):
            rec = run_cell(cfg, 6, 1)
        assert len(rejected) == 1
        assert "redrawing" in caplog.text
        # the redraw swaps in a different instance but keeps the tally shape
        assert rec["trials_run"] == baseline["trials_run"]
        assert 0 <= rec["successes"] <= rec["trials_run"]

    def test_persistent_ill_posedness_raises(self, monkeypatch):
        from phasekit import experiments
        from phasekit.solvers import IllPosedProblem

        def always_bad(problem, params=None):
            raise IllPosedProblem("synthetic singular instance")

        monkeypatch.setattr(experiments, "solve_recovery", always_bad)
        with pytest.raises(IllPosedProblem, match="persistent"):
            run_cell(small_config(trials=1), 6, 1)


class TestRunGrid:
    def test_covers_all_cells_with_correct_counts(self):
        cfg = PhaseGridConfig(n=10, m_values=(4, 8), s_values=(1, 2), trials=2,
                              variant="l1_plain", seed=3)
        grid = run_grid(cfg, workers=2)
        assert grid.is_complete()
        assert len(grid.cells) == 4
        assert sum(rec["trials_run"] for rec in grid.cells.values()) == 8
        for rec in grid.cells.values():
            assert rec["successes"] + rec["non_converged"] <= rec["trials_run"]

    def test_worker_count_does_not_change_results(self):
        cfg = small_config(trials=2)
        serial = run_grid(cfg, workers=1)
        parallel = run_grid(cfg, workers=4)
        assert serial.cells == parallel.cells

    def test_checkpoint_resume_is_identity(self, tmp_path):
        cfg = small_config(trials=2)
        ck = tmp_path / "grid.ck"
        full = run_grid(cfg, checkpoint_path=ck)
        assert ck.exists()
        # drop half the cells from the checkpoint, then resume
        lines = ck.read_text().splitlines()
        ck.write_text("\n".join(lines[:2] + lines[2 : 2 + len(cfg.m_values)]) + "\n")
        resumed = run_grid(cfg, checkpoint_path=ck)
        assert resumed.cells == full.cells

    def test_resume_does_not_recompute_finished_cells(self, tmp_path, monkeypatch):
        cfg = small_config(trials=2)
        ck = tmp_path / "grid.ck"
        run_grid(cfg, checkpoint_path=ck)

        def boom(config, m, s):
            raise AssertionError("completed cell was recomputed")

        monkeypatch.setattr("phasekit.experiments.run_cell", boom)
        resumed = run_grid(cfg, checkpoint_path=ck)
        assert resumed.is_complete()

    def test_corrupt_checkpoint_refused_without_reset(self, tmp_path):
        cfg = small_config(trials=1)
        ck = tmp_path / "grid.ck"
        ck.write_text("not a checkpoint\n")
        with pytest.raises(CheckpointError):
            run_grid(cfg, checkpoint_path=ck)
        grid = run_grid(cfg, checkpoint_path=ck, reset=True)
        assert grid.is_complete()
        assert ck.read_text().startswith(CHECKPOINT_HEADER)

    def test_mismatched_config_checkpoint_refused(self, tmp_path):
        ck = tmp_path / "grid.ck"
        run_grid(small_config(trials=1), checkpoint_path=ck)
        with pytest.raises(CheckpointError):
            run_grid(small_config(trials=1, seed=99), checkpoint_path=ck)

    def test_corrupt_data_line_refused(self, tmp_path):
        cfg = small_config(trials=1)
        ck = tmp_path / "grid.ck"
        run_grid(cfg, checkpoint_path=ck)
        ck.write_text(ck.read_text() + "3,1,bogus,1,0\n")
        with pytest.raises(CheckpointError):
            run_grid(cfg, checkpoint_path=ck)


class TestIsotonicFit:
    def test_matches_quadratic_program_oracle(self):
        rng = np.random.default_rng(2026)
        for _ in range(25):
            k = int(rng.integers(2, 9))
            vals = rng.random(k)
            wts = rng.integers(1, 6, size=k).astype(float)
            assert np.allclose(isotonic_fit(vals, wts), pav_oracle(vals, wts), atol=1e-12)

    def test_already_monotone_is_unchanged(self):
        vals = [0.0, 0.25, 0.5, 1.0]
        assert np.array_equal(isotonic_fit(vals, [1, 1, 1, 1]), vals)

    def test_weights_shift_pooled_means(self):
        # heavy early block drags the pooled value toward it
        fit = isotonic_fit([1.0, 0.0], [3.0, 1.0])
        assert np.allclose(fit, [0.75, 0.75])


class TestFindCrossing:
    def test_reference_step_pattern(self):
        cfg = PhaseGridConfig(n=4, m_values=(1, 2, 3, 4), s_values=(1,), trials=2,
                              variant="l1_plain")
        grid = fake_grid(cfg, {(1, 1): 0.0, (2, 1): 0.0, (3, 1): 1.0, (4, 1): 1.0})
        assert find_crossing(grid, 1) == pytest.approx(2.5)

    def test_interpolates_between_grid_points(self):
        cfg = PhaseGridConfig(n=8, m_values=(2, 6), s_values=(1,), trials=4,
                              variant="l1_plain")
        grid = fake_grid(cfg, {(2, 1): 0.25, (6, 1): 0.75})
        assert find_crossing(grid, 1) == pytest.approx(4.0)

    def test_all_success_sentinel_below_grid(self):
        cfg = PhaseGridConfig(n=6, m_values=(2, 4, 6), s_values=(1,), trials=2,
                              variant="l1_plain")
        grid = fake_grid(cfg, {(2, 1): 1.0, (4, 1): 1.0, (6, 1): 1.0})
        assert find_crossing(grid, 1) == pytest.approx(1.0)

    def test_all_failure_sentinel_above_grid(self):
        cfg = PhaseGridConfig(n=6, m_values=(2, 4, 6), s_values=(1,), trials=2,
                              variant="l1_plain")
        grid = fake_grid(cfg, {(2, 1): 0.0, (4, 1): 0.0, (6, 1): 0.0})
        assert find_crossing(grid, 1) == pytest.approx(7.0)

    def test_nonmonotone_column_smoothed_before_crossing(self):
        cfg = PhaseGridConfig(n=8, m_values=(2, 4, 6, 8), s_values=(1,), trials=4,
                              variant="l1_plain")
        grid = fake_grid(cfg, {(2, 1): 0.0, (4, 1): 0.75, (6, 1): 0.25, (8, 1): 1.0})
        # PAV pools the middle cells at 0.5, so the crossing lands on m=4
        assert find_crossing(grid, 1) == pytest.approx(4.0)

    def test_requires_two_distinct_m(self):
        cfg = PhaseGridConfig(n=6, m_values=(3,), s_values=(1,), trials=2,
                              variant="l1_plain")
        grid = fake_grid(cfg, {(3, 1): 1.0})
        with pytest.raises(ValueError):
            find_crossing(grid, 1)


class TestGridInvariants:
    def test_isotonic_success_nondecreasing_in_m(self):
        cfg = PhaseGridConfig(n=10, m_values=(2, 4, 6, 8, 10), s_values=(2,), trials=3,
                              variant="l1_l2ball", seed=5)
        grid = run_grid(cfg, workers=2)
        probs = [rec["successes"] / rec["trials_run"] for _, rec in grid.column(2)]
        fit = isotonic_fit(probs, [cfg.trials] * len(probs))
        assert np.all(np.diff(fit) >= -1e-12)
        # the m = n cell sits at certainty
        assert grid.cells[(10, 2)]["successes"] == cfg.trials

    def test_provenance_records_stream_recipe(self):
        cfg = small_config(trials=1)
        grid = run_grid(cfg, workers=1)
        tag = grid.provenance[(3, 1)]
        assert str(cfg.seed) in tag and "trial" in tag

    def test_add_cell_rejects_inconsistent_tallies(self):
        grid = PhaseGrid(small_config())
        with pytest.raises(ValueError):
            grid.add_cell(3, 1, {"successes": 4, "trials_run": 3, "non_converged": 0})
        with pytest.raises(ValueError):
            grid.add_cell(3, 1, {"successes": 1, "trials_run": 5, "non_converged": 0})


class TestPlanMValues:
    def test_refines_inside_transition_window(self):
        n = 64
        ms = plan_m_values(n, (4,), "l1_l2ball", zeta=0.5, coarse=16, fine=2)
        assert ms[0] == 1 and ms[-1] == n
        est = closed_form_statdim(4, n, "l1_l2ball")
        near = [m for m in ms if abs(m - est.value) <= 4]
        assert len(near) >= 3  # fine stride around the predicted transition
        assert all(1 <= m <= n for m in ms)
        assert list(ms) == sorted(set(ms))


class TestEmitOutputs:
    @pytest.fixture()
    def emitted(self, tmp_path):
        cfg = PhaseGridConfig(n=6, m_values=(2, 4, 6), s_values=(1, 2), trials=4,
                              variant="l1_plain")
        grid = fake_grid(cfg, {(m, s): (0.0 if m < 4 else 1.0)
                               for m in cfg.m_values for s in cfg.s_values})
        preds = {1: Bracket(lower=2.5, upper=3.5), 2: Bracket(lower=4.0, upper=5.0)}
        paths = emit_outputs(grid, preds, tmp_path / "out")
        return cfg, grid, paths

    def test_writes_three_files(self, emitted):
        _, _, paths = emitted
        assert [p.name for p in paths] == ["grid.csv", "curve.csv", "heatmap.svg"]
        assert all(p.exists() for p in paths)

    def test_grid_csv_layout(self, emitted):
        cfg, grid, paths = emitted
        lines = paths[0].read_text().splitlines()
        assert lines[0] == "m,s,successes,trials,non_converged"
        assert len(lines) == 1 + len(grid.cells)
        assert lines[1] == "2,1,0,4,0"

    def test_curve_csv_layout(self, emitted):
        cfg, _, paths = emitted
        lines = paths[1].read_text().splitlines()
        assert lines[0] == "s,m_theory_upper,m_theory_lower,m50_empirical"
        assert len(lines) == 1 + len(cfg.s_values)
        s, up, lo, m50 = lines[1].split(",")
        assert (s, float(up), float(lo)) == ("1", 3.5, 2.5)
        assert float(m50) == pytest.approx(3.0)  # 0 -> 1 jump between m=2 and m=4

    def test_svg_has_one_rect_per_cell(self, emitted):
        cfg, grid, paths = emitted
        svg = paths[2].read_text()
        # background rect plus one per completed cell
        assert svg.count("<rect") == 1 + len(grid.cells)
        assert svg.count("<polyline") == 2

    def test_single_cell_grid_still_emits(self, tmp_path):
        cfg = PhaseGridConfig(n=4, m_values=(2,), s_values=(1,), trials=2,
                              variant="l1_plain")
        grid = fake_grid(cfg, {(2, 1): 1.0})
        paths = emit_outputs(grid, {1: Bracket(lower=1.0, upper=2.0)}, tmp_path / "o")
        assert len(paths) == 3
        assert len(paths[0].read_text().splitlines()) == 2
        m50 = paths[1].read_text().splitlines()[1].split(",")[3]
        assert m50 == "nan"

    def test_empty_grid_rejected(self, tmp_path):
        grid = PhaseGrid(small_config())
        with pytest.raises(ValueError):
            emit_outputs(grid, {}, tmp_path / "o")


class TestResolveWorkers:
    def test_explicit_wins(self, monkeypatch):
        monkeypatch.setenv("PHASEKIT_WORKERS", "7")
        assert resolve_workers(2) == 2

    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv("PHASEKIT_WORKERS", "5")
        assert resolve_workers() == 5

    def test_cpu_default(self, monkeypatch):
        monkeypatch.delenv("PHASEKIT_WORKERS", raising=False)
        assert resolve_workers() >= 1

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            resolve_workers(0)
