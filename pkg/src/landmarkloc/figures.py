"""The figure suite: data generation, CSV tables and SVG plots."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .analytics import localizability_theorem1, localizability_upper_bound, semi_empirical_from_outcomes
from .model import VISIBILITY_OFFSETS, ScenarioError, grid_scenario
from .montecarlo import GRID_SHIFT, run_experiment, sweep
from .svgplot import Series, line_plot

__all__ = ["FIGURE_IDS", "DEFAULT_GRID", "FigureSpec", "figure_rows", "emit_figure", "rows_to_csv"]

FIGURE_IDS = ("set-size", "removal", "rates", "loc2-random", "loc2-nearest", "locN")
DEFAULT_GRID = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0)
POLICY_ORDER = ("random", "nearest")
LOCN_SIZES = (3, 4)


@dataclass(frozen=True)
class FigureSpec:
    """Which figure, on which density grid and visibility profile.

    ``grid`` is in expected landmarks per AOI; ``overrides`` are extra
    :class:`ScenarioConfig` fields applied to every grid point.
    """

    figure_id: str
    grid: tuple = DEFAULT_GRID
    profile: str = "medium"
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.figure_id not in FIGURE_IDS:
            raise ScenarioError(f"unknown figure {self.figure_id!r}; choose from {', '.join(FIGURE_IDS)}")
        grid = tuple(float(g) for g in self.grid)
        if not grid:
            raise ScenarioError("figure grid must be non-empty")
        if any(not (g > 0) for g in grid):
            raise ScenarioError("grid densities must be positive")
        if self.profile not in VISIBILITY_OFFSETS:
            raise ScenarioError(f"unknown visibility profile {self.profile!r}")
        object.__setattr__(self, "grid", grid)

    def config(self, density: float, **extra):
        kw = dict(self.overrides)
        kw.update(extra)
        return grid_scenario(self.profile, density, **kw)


def _z(emp, se, ana, ana_err=0.0):
    tot = math.hypot(se, ana_err)
    return (emp - ana) / tot if tot > 0 else math.nan


def figure_rows(spec: FigureSpec, trials: int, workers: int | None = None) -> list[dict]:
    """Run the experiments behind one figure and return its table rows."""
    fid = spec.figure_id
    if fid in ("set-size", "removal", "rates"):
        grid = [spec.config(d, policy=p) for p in POLICY_ORDER for d in spec.grid]
        rows = []
        for pt in sweep(grid, trials, workers):
            agg = pt.aggregate
            row = {"density": pt.config.expected_landmarks, "policy": pt.config.policy}
            if agg is None:
                row["error"] = pt.error
            elif fid == "set-size":
                row.update(mean_comb_size=agg.mean_comb_size, mean_sol_size=agg.mean_sol_size)
            elif fid == "removal":
                row.update(removal_pct=100.0 * agg.removal_pct)
            else:
                row.update(tpr=agg.tpr, tpr_se=agg.tpr_se, fpr=agg.fpr, fpr_se=agg.fpr_se)
            rows.append(row)
        return rows
    if fid == "loc2-random":
        rows = []
        for g, d in enumerate(spec.grid):
            cfg = spec.config(d, policy="random", n_measurements=2)
            agg = run_experiment(cfg, trials, workers, offset=g << GRID_SHIFT)
            ana = localizability_theorem1(cfg)
            rows.append(dict(density=cfg.expected_landmarks, empirical=agg.localizability,
                             stderr=agg.localizability_se, analytic=ana.value,
                             z=_z(agg.localizability, agg.localizability_se, ana.value, ana.error_budget)))
        return rows
    if fid == "loc2-nearest":
        rows = []
        for g, d in enumerate(spec.grid):
            cfg = spec.config(d, policy="nearest", n_measurements=2)
            agg, outs = run_experiment(cfg, trials, workers, offset=g << GRID_SHIFT, return_outcomes=True)
            semi = semi_empirical_from_outcomes(cfg, outs)
            rows.append(dict(density=cfg.expected_landmarks, empirical=agg.localizability,
                             stderr=agg.localizability_se, analytic=semi.value,
                             z=_z(agg.localizability, agg.localizability_se, semi.value, semi.error_budget)))
        return rows
    # locN: random policy at several N against the partner-known bound
    rows = []
    bounds = {d: localizability_upper_bound(spec.config(d, policy="random")) for d in spec.grid}
    g = 0
    for n in LOCN_SIZES:
        for d in spec.grid:
            cfg = spec.config(d, policy="random", n_measurements=n)
            agg = run_experiment(cfg, trials, workers, offset=g << GRID_SHIFT)
            g += 1
            b = bounds[d]
            rows.append(dict(density=cfg.expected_landmarks, n=n, empirical=agg.localizability,
                             stderr=agg.localizability_se, bound=b.value,
                             z=_z(agg.localizability, agg.localizability_se, b.value, b.error_budget)))
    return rows


def rows_to_csv(rows: Sequence[dict], path=None) -> str:
    keys: list[str] = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for r in rows:
        w.writerow([_cell(r.get(k, "")) for k in keys])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _by(rows, key, value):
    return [r for r in rows if r.get(key) == value and "error" not in r]


def _series(rows, spec: FigureSpec) -> tuple[list[Series], dict]:
    fid = spec.figure_id
    xl = "expected landmarks per AOI"
    if fid == "set-size":
        out = []
        for p in POLICY_ORDER:
            sub = _by(rows, "policy", p)
            x = [r["density"] for r in sub]
            out.append(Series(f"|C| {p}", x, [r["mean_comb_size"] for r in sub], dashed=True))
            out.append(Series(f"|S| {p}", x, [r["mean_sol_size"] for r in sub]))
        return out, dict(title="Combination and solution set sizes", xlabel=xl, ylabel="mean set size")
    if fid == "removal":
        out = [Series(p, [r["density"] for r in _by(rows, "policy", p)],
                      [r["removal_pct"] for r in _by(rows, "policy", p)]) for p in POLICY_ORDER]
        return out, dict(title="Combinations removed", xlabel=xl, ylabel="removed (%)", ylim=(0.0, 100.0))
    if fid == "rates":
        out = []
        for p in POLICY_ORDER:
            sub = _by(rows, "policy", p)
            x = [r["density"] for r in sub]
            out.append(Series(f"TPR {p}", x, [r["tpr"] for r in sub], [r["tpr_se"] for r in sub]))
            out.append(Series(f"FPR {p}", x, [r["fpr"] for r in sub], [r["fpr_se"] for r in sub], dashed=True))
        return out, dict(title="True and false positive rates", xlabel=xl, ylabel="rate")
    if fid in ("loc2-random", "loc2-nearest"):
        x = [r["density"] for r in rows]
        ana = "analytic" if fid == "loc2-random" else "semi-empirical"
        pol = fid.split("-")[1]
        out = [Series("simulation", x, [r["empirical"] for r in rows], [r["stderr"] for r in rows]),
               Series(ana, x, [r["analytic"] for r in rows], dashed=True)]
        return out, dict(title=f"Localizability, N = 2, {pol} policy", xlabel=xl, ylabel="localizability")
    out = []
    for n in LOCN_SIZES:
        sub = _by(rows, "n", n)
        out.append(Series(f"N = {n}", [r["density"] for r in sub], [r["empirical"] for r in sub],
                          [r["stderr"] for r in sub]))
    sub = _by(rows, "n", LOCN_SIZES[0])
    out.append(Series("upper bound", [r["density"] for r in sub], [r["bound"] for r in sub], dashed=True))
    return out, dict(title="Localizability with N measurements", xlabel=xl, ylabel="localizability")


def emit_figure(rows: Sequence[dict], spec: FigureSpec, out) -> Path:
    """Write ``<figure_id>.csv`` and ``<figure_id>.svg`` under ``out``; returns the SVG path."""
    if not rows:
        raise ValueError("no rows to plot")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows_to_csv(rows, out / f"{spec.figure_id}.csv")
    series, labels = _series(rows, spec)
    svg = out / f"{spec.figure_id}.svg"
    svg.write_text(line_plot(series, **labels))
    return svg
