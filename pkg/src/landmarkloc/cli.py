"""Command-line front end.

Exit status: 0 on success, 1 on invalid input (flags, config, values), 2 on a
numerical failure or a request the analytics cannot serve.
"""

from __future__ import annotations

import argparse
import json
import math
import subprocess
import sys
from importlib import metadata
from pathlib import Path

from .analytics import (
    PolicyError,
    curve_to_csv,
    localizability_theorem1,
    localizability_upper_bound,
    semi_empirical_from_outcomes,
)
from .counts import UnsupportedCaseError
from .figures import DEFAULT_GRID, FIGURE_IDS, FigureSpec, emit_figure, figure_rows, rows_to_csv
from .model import ScenarioConfig, validate_scenario
from .montecarlo import (
    SweepPoint,
    aggregates_to_csv,
    aggregates_to_json,
    default_workers,
    outcomes_to_csv,
    run_experiment,
)
from .sampling import sample_map
from .streams import RngStream

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2
NUMERIC_ERRORS = (PolicyError, UnsupportedCaseError, ArithmeticError, RuntimeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def version_string() -> str:
    """Package version plus ``git describe`` output when run from a checkout."""
    try:
        base = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        base = "0+unknown"
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{base}+g{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return base


def _load(args) -> ScenarioConfig:
    cfg = ScenarioConfig.from_toml(Path(args.config))
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(master_seed=args.seed)
    return validate_scenario(cfg)


def _workers(args) -> int:
    return args.workers if args.workers is not None else default_workers()


def _manifest(out: Path, command: str, configs, **extra):
    data = {
        "command": command,
        "version": version_string(),
        "configs": [c.to_dict() for c in configs],
    }
    data.update(extra)
    (out / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    agg, outs = run_experiment(cfg, args.trials, _workers(args), return_outcomes=True)
    outcomes_to_csv(outs, out / "trials.csv")
    pts = [SweepPoint(cfg, agg)]
    aggregates_to_csv(pts, out / "aggregate.csv")
    aggregates_to_json(pts, out / "aggregate.json")
    _manifest(out, "simulate", [cfg], seed=cfg.master_seed, trials=args.trials)
    print(f"localizability {agg.localizability:.6f} +- {agg.localizability_se:.6f} over {agg.trials} trials")
    return EXIT_OK


def _analytic_value(cfg: ScenarioConfig, tpr_model: str):
    if cfg.policy != "random":
        raise PolicyError("no closed form for nearest policy; use compare --semi-empirical")
    if cfg.n_measurements == 2:
        return localizability_theorem1(cfg, tpr_model=tpr_model)
    return localizability_upper_bound(cfg, tpr_model=tpr_model)


def cmd_analytic(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = _analytic_value(cfg, args.tpr_model)
    curve_to_csv([(cfg.expected_landmarks, res.value, res.error_budget)], out / "analytic.csv")
    _manifest(out, "analytic", [cfg], seed=cfg.master_seed, details=_plain(res.details))
    print(f"{res.details['quantity']} {res.value:.6f} (error budget {res.error_budget:.2e})")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    agg, outs = run_experiment(cfg, args.trials, _workers(args), return_outcomes=True)
    if args.semi_empirical:
        res = semi_empirical_from_outcomes(cfg, outs)
    else:
        res = _analytic_value(cfg, args.tpr_model)
    tot = math.hypot(agg.localizability_se, res.error_budget)
    z = (agg.localizability - res.value) / tot if tot > 0 else math.nan
    row = dict(density=cfg.expected_landmarks, empirical=agg.localizability, stderr=agg.localizability_se,
               analytic=res.value, analytic_error=res.error_budget, z=z, method=res.details["quantity"])
    rows_to_csv([row], out / "compare.csv")
    _manifest(out, "compare", [cfg], seed=cfg.master_seed, trials=args.trials)
    print(f"empirical {agg.localizability:.6f} +- {agg.localizability_se:.6f}, "
          f"{row['method']} {res.value:.6f}, z = {z:.2f}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    overrides = {}
    if args.config:
        base = ScenarioConfig.from_toml(Path(args.config)).to_dict()
        for key in ("noise_dev", "threshold", "target_placement", "noise_free", "allow_repeats", "conditioning"):
            overrides[key] = base[key]
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    spec = FigureSpec(args.figure, tuple(args.densities or DEFAULT_GRID), args.profile, overrides)
    out = Path(args.out)
    rows = figure_rows(spec, args.trials, _workers(args))
    svg = emit_figure(rows, spec, out)
    _manifest(out, "reproduce", [spec.config(d) for d in spec.grid], figure=spec.figure_id,
              profile=spec.profile, grid=list(spec.grid), seed=int(overrides.get("master_seed", 0)),
              trials=args.trials)
    print(f"wrote {svg}")
    return EXIT_OK


def cmd_sample_map(args) -> int:
    cfg = _load(args)
    lm = sample_map(cfg, RngStream(cfg.master_seed, 0))
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    lm.to_csv(path)
    print(f"wrote {len(lm)} landmarks to {path}")
    return EXIT_OK


def _plain(d: dict) -> dict:
    return {k: (float(v) if hasattr(v, "dtype") else v) for k, v in d.items()}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="landmarkloc", description="Landmark-combination localizability experiments.")
    p.add_argument("--version", action="version", version=version_string())
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, trials=True, workers=True):
        sp.add_argument("config", help="scenario TOML file")
        sp.add_argument("--seed", type=int, help="override master_seed")
        if trials:
            sp.add_argument("--trials", type=int, default=10000)
        if workers:
            sp.add_argument("--workers", type=int, help="worker processes (default: $LANDMARKLOC_WORKERS or 1)")

    sp = sub.add_parser("simulate", help="Monte Carlo trials for one scenario")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("analytic", help="closed-form localizability (random policy)")
    common(sp, trials=False, workers=False)
    sp.add_argument("--out", required=True)
    sp.add_argument("--tpr-model", choices=("geometric", "shared"), default="geometric")
    sp.set_defaults(func=cmd_analytic)

    sp = sub.add_parser("compare", help="simulation next to the analytic value, with z-score")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--semi-empirical", action="store_true",
                    help="plug simulated samples into the conditional formula (any policy)")
    sp.add_argument("--tpr-model", choices=("geometric", "shared"), default="geometric")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("reproduce", help="regenerate one figure (CSV + SVG)")
    sp.add_argument("--figure", required=True, choices=FIGURE_IDS)
    sp.add_argument("--trials", type=int, default=10000)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out", required=True)
    sp.add_argument("--profile", choices=("low", "medium", "high"), default="medium")
    sp.add_argument("--densities", type=float, nargs="+", help="expected landmarks per AOI")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--config", help="TOML supplying noise, threshold and placement overrides")
    sp.set_defaults(func=cmd_reproduce)

    sp = sub.add_parser("sample-map", help="draw one landmark map to CSV")
    common(sp, trials=False, workers=False)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sample_map)
    return p


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "trials", 1) is not None and getattr(args, "trials", 1) < 1:
            raise UsageError("--trials must be at least 1")
        if getattr(args, "workers", None) is not None and args.workers < 1:
            raise UsageError("--workers must be at least 1")
        return args.func(args)
    except UsageError as exc:
        print(f"landmarkloc: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NUMERIC_ERRORS as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError) as exc:
        print(f"landmarkloc: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(cli_main())
