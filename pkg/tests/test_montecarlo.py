import json
import math

import numpy as np
import pytest

from landmarkloc.model import ScenarioConfig, grid_scenario
from landmarkloc.montecarlo import (
    ConditioningError,
    TrialOutcome,
    aggregate,
    aggregates_to_csv,
    aggregates_to_json,
    default_workers,
    outcomes_to_csv,
    run_experiment,
    run_trial,
    sweep,
)


@pytest.fixture(scope="module")
def small_cfg():
    return grid_scenario("medium", 300, master_seed=7)


def test_trial_is_a_pure_function_of_seed_and_index(small_cfg):
    a = run_trial(small_cfg, 12)
    b = run_trial(small_cfg, 12)
    assert a == b
    assert run_trial(small_cfg, 13) != a
    assert run_trial(small_cfg.replace(master_seed=8), 12) != a


def test_outcome_invariants(small_cfg):
    _, outs = run_experiment(small_cfg, 200, 1, return_outcomes=True)
    for o in outs:
        assert o.n_visible >= 2
        assert o.sol_size <= o.comb_size
        assert not o.picked_correct or o.contains_truth
        assert all(r > 0 for r in o.ranges)
        assert len(o.marks) == 2
        if o.comb_size > 1:
            assert 0 <= o.fpr <= 1
        else:
            assert math.isnan(o.fpr)
        assert math.isnan(o.position_error) == (o.sol_size == 0)


def test_outcome_rejects_inconsistent_flags():
    base = dict(trial_index=0, comb_size=4, sol_size=1, contains_truth=False, picked_correct=True,
                n_visible=2, position_error=0.0, fpr=0.0, retries=0, ranges=(), marks=())
    with pytest.raises(ValueError):
        TrialOutcome(**base)
    with pytest.raises(ValueError):
        TrialOutcome(**{**base, "picked_correct": False, "sol_size": 5})


def test_worker_count_does_not_change_results(small_cfg):
    a, oa = run_experiment(small_cfg, 60, 1, return_outcomes=True)
    b, ob = run_experiment(small_cfg, 60, 3, return_outcomes=True)
    assert a == b
    assert oa == ob


def test_offset_picks_out_the_same_trials(small_cfg):
    _, full = run_experiment(small_cfg, 30, 1, return_outcomes=True)
    _, tail = run_experiment(small_cfg, 10, 1, offset=20, return_outcomes=True)
    assert full[20:] == tail


def test_single_trial_aggregate(small_cfg):
    agg = run_experiment(small_cfg, 1, 1)
    assert agg.trials == 1
    assert agg.localizability in (0.0, 1.0)
    assert agg.localizability_se == 0.0


def test_aggregate_order_independent(small_cfg):
    _, outs = run_experiment(small_cfg, 50, 1, return_outcomes=True)
    assert aggregate(outs) == aggregate(outs[::-1])
    with pytest.raises(ValueError):
        aggregate([])


def test_retry_mode_still_runs(small_cfg):
    agg = run_experiment(small_cfg.replace(conditioning="retry"), 40, 1)
    assert agg.trials == 40
    assert 0 <= agg.localizability <= agg.tpr <= 1


def test_argument_checks(small_cfg, monkeypatch):
    with pytest.raises(ValueError):
        run_experiment(small_cfg, 0, 1)
    with pytest.raises(ValueError):
        run_experiment(small_cfg, 5, 0)
    monkeypatch.setenv("LANDMARKLOC_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("LANDMARKLOC_WORKERS", "zero")
    with pytest.raises(ValueError):
        default_workers()
    monkeypatch.delenv("LANDMARKLOC_WORKERS")
    assert default_workers() == 1


def _hopeless():
    return ScenarioConfig(aoi_radius=500.0, mark_count=1, densities=1e-12, visibility=[10.0])


def test_conditioning_failure_carries_trial_index():
    with pytest.raises(ConditioningError) as err:
        run_trial(_hopeless(), 5)
    assert err.value.trial_index == 5
    assert "conditioning failure" in str(err.value)


def test_sweep_covers_grid_and_reports_failures():
    grid = [grid_scenario("medium", e, policy=p) for e in (100, 200, 300, 400, 500, 600) for p in ("random", "nearest")]
    pts = sweep(grid, 3, 1)
    assert len(pts) == 12
    assert all(p.aggregate is not None and p.error is None for p in pts)
    bad = sweep([_hopeless(), grid[0]], 2, 1)
    assert bad[0].aggregate is None and "ConditioningError" in bad[0].error
    assert bad[1].aggregate is not None


def test_sweep_points_use_disjoint_streams():
    cfg = grid_scenario("medium", 300)
    a, b = sweep([cfg, cfg], 20, 1)
    assert a.aggregate != b.aggregate


def test_csv_and_json_output(tmp_path, small_cfg):
    _, outs = run_experiment(small_cfg, 5, 1, return_outcomes=True)
    text = outcomes_to_csv(outs, tmp_path / "o" / "trials.csv")
    lines = text.splitlines()
    assert lines[0].startswith("trial_index,comb_size,sol_size")
    assert len(lines) == 6
    assert (tmp_path / "o" / "trials.csv").read_text() == text

    pts = sweep([small_cfg, _hopeless()], 2, 1)
    csv_text = aggregates_to_csv(pts)
    header, ok, bad = csv_text.splitlines()
    assert header.split(",")[:6] == ["expected_landmarks", "policy", "n_measurements", "threshold",
                                     "master_seed", "noise_free"]
    assert ok.endswith(",") and "ConditioningError" in bad
    data = json.loads(aggregates_to_json(pts))
    assert data[0]["aggregate"]["trials"] == 2
    assert data[1]["error"].startswith("ConditioningError")
    assert data[0]["echo"]["expected_landmarks"] == pytest.approx(300.0)


def test_localizability_bounded_by_tpr_statistically():
    agg = run_experiment(grid_scenario("medium", 100), 400, 1)
    assert agg.localizability <= agg.tpr
    assert 0 <= agg.removal_pct <= 1
    assert np.isfinite(agg.mean_position_error)
