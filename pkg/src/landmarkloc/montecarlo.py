"""Seeded, parallel Monte Carlo trial harness.

Each trial owns the counter-based stream ``RngStream(master_seed, index)``,
so outcomes depend only on the seed and the trial index and never on how the
trials are scheduled over worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .constraints import DistanceCache, estimate_combination, estimate_position, filter_solution_set
from .model import ScenarioConfig, validate_scenario
from .observation import measure, select_observed, visible_landmarks
from .sampling import ConditioningError, sample_conditioned, sample_disk, sample_map, target_radius
from .streams import RngStream

__all__ = [
    "ConditioningError",
    "TrialOutcome",
    "TrialAggregate",
    "SweepPoint",
    "run_trial",
    "run_experiment",
    "aggregate",
    "sweep",
    "default_workers",
    "outcomes_to_csv",
    "aggregates_to_csv",
    "aggregates_to_json",
    "TARGET_RETRIES",
    "MAP_RETRIES",
]

TARGET_RETRIES = 100
MAP_RETRIES = 1000
WORKERS_ENV = "LANDMARKLOC_WORKERS"
GRID_SHIFT = 32


@dataclass(frozen=True)
class TrialOutcome:
    """Indicators and sizes from one trial.

    ``fpr`` is ``(sol_size - contains_truth) / (comb_size - 1)`` and is NaN
    when ``comb_size <= 1``; ``position_error`` is NaN when nothing was picked.
    """

    trial_index: int
    comb_size: int
    sol_size: int
    contains_truth: bool
    picked_correct: bool
    n_visible: int
    position_error: float
    fpr: float
    retries: int
    ranges: tuple
    marks: tuple

    def __post_init__(self):
        if self.picked_correct and not self.contains_truth:
            raise ValueError("picked_correct requires contains_truth")
        if self.sol_size > self.comb_size:
            raise ValueError("sol_size exceeds comb_size")
        if self.contains_truth and self.sol_size < 1:
            raise ValueError("contains_truth requires a non-empty solution set")


def _observe(config: ScenarioConfig, stream: RngStream, trial_index: int):
    """Map and target with at least N visible landmarks.

    ``conditioning="joint"`` samples the pair from its conditional law
    directly.  ``"retry"`` draws the target retries for one map as a single
    block of ``TARGET_RETRIES`` points, keeps the first that sees enough
    landmarks and moves to a new map when none does.  ``retries`` counts the
    rejected draws in both cases.
    """
    n = config.n_measurements
    if config.conditioning == "joint":
        lm_map, target, retries = sample_conditioned(
            config, stream, n, block=TARGET_RETRIES, max_attempts=TARGET_RETRIES * MAP_RETRIES,
            trial_index=trial_index,
        )
        return lm_map, target, visible_landmarks(lm_map, target, config), retries
    map_rng = stream.generator("map")
    target_rng = stream.generator("target")
    radius = target_radius(config)
    retries = 0
    for _ in range(MAP_RETRIES):
        lm_map = sample_map(config, map_rng)
        targets = sample_disk(target_rng, TARGET_RETRIES, radius)
        if len(lm_map) >= n:
            reach = config.visibility[lm_map.marks - 1]
            dx = targets[:, None, 0] - lm_map.positions[None, :, 0]
            dy = targets[:, None, 1] - lm_map.positions[None, :, 1]
            seen = np.count_nonzero(np.hypot(dx, dy) <= reach, axis=1)
            ok = np.flatnonzero(seen >= n)
            if ok.size:
                k = int(ok[0])
                target = targets[k]
                return lm_map, target, visible_landmarks(lm_map, target, config), retries + k
        retries += TARGET_RETRIES
    raise ConditioningError(
        f"conditioning failure: fewer than {n} visible landmarks after {retries} retries",
        trial_index,
    )


def run_trial(config: ScenarioConfig, trial_index: int) -> TrialOutcome:
    """Map, target, observation, filtering and estimation for one trial."""
    stream = RngStream(config.master_seed, trial_index)
    lm_map, target, vis, retries = _observe(config, stream, trial_index)
    chosen = select_observed(vis, config.policy, config.n_measurements, stream.generator("select"))
    obs = measure(target, lm_map, chosen, config, stream.generator("noise"))
    sol = filter_solution_set(lm_map, obs, config.threshold, cache=DistanceCache(lm_map),
                              allow_repeats=config.allow_repeats)
    pick = estimate_combination(sol, stream.generator("pick"))
    truth = tuple(int(i) for i in obs.true_combination)
    correct = pick is not None and tuple(pick.landmark_ids) == truth
    if pick is not None:
        est = estimate_position(pick.landmark_ids, lm_map, obs)
        err = float(math.hypot(*(est.point - target)))
    else:
        err = math.nan
    m = sol.comb_size
    fpr = (len(sol) - int(sol.contains_truth)) / (m - 1) if m > 1 else math.nan
    return TrialOutcome(
        trial_index=int(trial_index),
        comb_size=int(m),
        sol_size=len(sol),
        contains_truth=bool(sol.contains_truth),
        picked_correct=bool(correct),
        n_visible=len(vis),
        position_error=err,
        fpr=float(fpr),
        retries=retries,
        ranges=tuple(float(r) for r in obs.ranges),
        marks=tuple(int(k) for k in obs.marks),
    )


@dataclass(frozen=True)
class TrialAggregate:
    trials: int
    localizability: float
    localizability_se: float
    tpr: float
    tpr_se: float
    fpr: float
    fpr_se: float
    fpr_trials: int
    mean_comb_size: float
    mean_sol_size: float
    removal_pct: float
    mean_position_error: float
    total_retries: int


def _proportion(flags) -> tuple[float, float]:
    n = len(flags)
    p = math.fsum(flags) / n
    return p, math.sqrt(max(p * (1.0 - p), 0.0) / n)


def _mean_se(values) -> tuple[float, float]:
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    m = math.fsum(values) / n
    if n == 1:
        return m, 0.0
    var = math.fsum((v - m) ** 2 for v in values) / (n - 1)
    return m, math.sqrt(var / n)


def aggregate(outcomes: Sequence[TrialOutcome]) -> TrialAggregate:
    """Reduce outcomes in trial-index order with exactly rounded sums."""
    if not outcomes:
        raise ValueError("no outcomes to aggregate")
    outs = sorted(outcomes, key=lambda o: o.trial_index)
    loc, loc_se = _proportion([float(o.picked_correct) for o in outs])
    tpr, tpr_se = _proportion([float(o.contains_truth) for o in outs])
    fprs = [o.fpr for o in outs if not math.isnan(o.fpr)]
    fpr, fpr_se = _mean_se(fprs)
    n = len(outs)
    mc = math.fsum(o.comb_size for o in outs) / n
    ms = math.fsum(o.sol_size for o in outs) / n
    errs = [o.position_error for o in outs if not math.isnan(o.position_error)]
    return TrialAggregate(
        trials=n,
        localizability=loc,
        localizability_se=loc_se,
        tpr=tpr,
        tpr_se=tpr_se,
        fpr=fpr,
        fpr_se=fpr_se,
        fpr_trials=len(fprs),
        mean_comb_size=mc,
        mean_sol_size=ms,
        removal_pct=(1.0 - ms / mc) if mc > 0 else math.nan,
        mean_position_error=math.fsum(errs) / len(errs) if errs else math.nan,
        total_retries=sum(o.retries for o in outs),
    )


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        w = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if w < 1:
        raise ValueError(f"{WORKERS_ENV} must be at least 1")
    return w


def _run_chunk(args):
    config, start, stop = args
    return [run_trial(config, i) for i in range(start, stop)]


def _chunks(offset: int, n_trials: int, workers: int):
    # several chunks per worker for load balance; boundaries do not affect results
    size = max(1, math.ceil(n_trials / (4 * workers)))
    return [(offset + s, offset + min(s + size, n_trials)) for s in range(0, n_trials, size)]


def run_experiment(config: ScenarioConfig, n_trials: int, workers: int | None = None, *,
                   offset: int = 0, return_outcomes: bool = False):
    """Run trials ``offset .. offset + n_trials - 1`` and aggregate them.

    The aggregate is identical for any worker count.  With
    ``return_outcomes`` the per-trial outcomes are returned too, in index order.
    """
    validate_scenario(config)
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ValueError("workers must be at least 1")
    chunks = _chunks(offset, n_trials, workers)
    if workers == 1 or len(chunks) == 1:
        parts = [_run_chunk((config, a, b)) for a, b in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [(config, a, b) for a, b in chunks]))
    outcomes = [o for part in parts for o in part]
    agg = aggregate(outcomes)
    return (agg, outcomes) if return_outcomes else agg


@dataclass(frozen=True)
class SweepPoint:
    config: ScenarioConfig
    aggregate: TrialAggregate | None
    error: str | None = None


def sweep(config_grid: Sequence[ScenarioConfig], n_trials: int, workers: int | None = None) -> list[SweepPoint]:
    """One experiment per grid point, each on its own block of trial streams.

    Point ``g`` uses stream ids ``(g << 32) + i``.  A failing point is
    reported in its :class:`SweepPoint` and the sweep moves on.
    """
    out = []
    for g, cfg in enumerate(config_grid):
        try:
            agg = run_experiment(cfg, n_trials, workers, offset=g << GRID_SHIFT)
            out.append(SweepPoint(cfg, agg))
        except (ConditioningError, ValueError, ArithmeticError) as exc:
            out.append(SweepPoint(cfg, None, f"{type(exc).__name__}: {exc}"))
    return out


# ---------------------------------------------------------------------------
# output

def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def _write(text: str, path) -> str:
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text


def outcomes_to_csv(outcomes: Sequence[TrialOutcome], path=None) -> str:
    names = [f.name for f in fields(TrialOutcome)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for o in sorted(outcomes, key=lambda o: o.trial_index):
        w.writerow([_fmt(getattr(o, k)) for k in names])
    return _write(buf.getvalue(), path)


CONFIG_ECHO = ("expected_landmarks", "policy", "n_measurements", "threshold", "master_seed", "noise_free")


def _echo(cfg: ScenarioConfig) -> dict:
    return {
        "expected_landmarks": float(cfg.expected_landmarks),
        "policy": cfg.policy,
        "n_measurements": int(cfg.n_measurements),
        "threshold": float(cfg.threshold),
        "master_seed": int(cfg.master_seed),
        "noise_free": bool(cfg.noise_free),
    }


def aggregates_to_csv(points: Sequence[SweepPoint], path=None) -> str:
    """One row per grid point: config echo, then every aggregate field."""
    agg_names = [f.name for f in fields(TrialAggregate)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(CONFIG_ECHO) + agg_names + ["error"])
    for pt in points:
        echo = _echo(pt.config)
        row = [_fmt(echo[k]) for k in CONFIG_ECHO]
        if pt.aggregate is None:
            row += [""] * len(agg_names) + [pt.error or ""]
        else:
            row += [_fmt(getattr(pt.aggregate, k)) for k in agg_names] + [""]
        w.writerow(row)
    return _write(buf.getvalue(), path)


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def aggregates_to_json(points: Sequence[SweepPoint], path=None) -> str:
    rows = []
    for pt in points:
        row = {"config": pt.config.to_dict(), "echo": _echo(pt.config)}
        if pt.aggregate is not None:
            row["aggregate"] = {k: _json_safe(v) for k, v in asdict(pt.aggregate).items()}
        if pt.error:
            row["error"] = pt.error
        rows.append(row)
    return _write(json.dumps(rows, indent=2, sort_keys=True) + "\n", path)
