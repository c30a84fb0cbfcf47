"""Domain types: landmarks, maps, scenario configuration, measurements.

All types are immutable once built.  Array-valued fields are stored as
read-only numpy arrays so instances can be shared between worker processes
without defensive copies.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

try:
    import tomllib as _toml
except ModuleNotFoundError:  # Python < 3.11
    import tomli as _toml

__all__ = [
    "ScenarioError",
    "Landmark",
    "MarkedMap",
    "ScenarioConfig",
    "Measurement",
    "ObservationSet",
    "Combination",
    "validate_scenario",
    "grid_scenario",
    "VISIBILITY_OFFSETS",
]

POLICIES = ("random", "nearest")
PLACEMENTS = ("uniform_core", "uniform_full")
CONDITIONINGS = ("joint", "retry")

# d_m = offset + m for m = 1..M
VISIBILITY_OFFSETS = {"low": 9.0, "medium": 19.0, "high": 29.0}


class ScenarioError(ValueError):
    """A scenario, map or observation violates one of its invariants."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Landmark:
    """One marked point.  ``mark`` is 1-based."""

    id: int
    x: float
    y: float
    mark: int

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True, eq=False)
class MarkedMap:
    """Realization of the marked point process inside the AOI disk.

    Parameters
    ----------
    positions : array of shape (K, 2)
        Landmark coordinates in meters.  Row ``i`` is landmark id ``i``.
    marks : array of shape (K,)
        1-based integer marks.
    aoi_radius : float
        Radius d_a of the AOI disk centered at the origin.
    """

    positions: np.ndarray
    marks: np.ndarray
    aoi_radius: float

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        mk = np.asarray(self.marks, dtype=np.int64).reshape(-1)
        if pos.shape[0] != mk.shape[0]:
            raise ScenarioError("positions and marks differ in length")
        if mk.size and mk.min() < 1:
            raise ScenarioError("marks are 1-based")
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "marks", _frozen(mk, np.int64))
        object.__setattr__(self, "aoi_radius", float(self.aoi_radius))
        # per-mark id lists, built once
        order = np.argsort(mk, kind="stable")
        groups: dict[int, np.ndarray] = {}
        if mk.size:
            uniq, starts = np.unique(mk[order], return_index=True)
            bounds = list(starts[1:]) + [mk.size]
            for m, s, e in zip(uniq, starts, bounds):
                groups[int(m)] = _frozen(order[s:e], np.int64)
        object.__setattr__(self, "_by_mark", groups)

    def __len__(self) -> int:
        return int(self.marks.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, MarkedMap):
            return NotImplemented
        return (
            self.aoi_radius == other.aoi_radius
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.marks, other.marks)
        )

    __hash__ = None

    @property
    def landmarks(self) -> list[Landmark]:
        return [
            Landmark(i, float(p[0]), float(p[1]), int(m))
            for i, (p, m) in enumerate(zip(self.positions, self.marks))
        ]

    def ids_with_mark(self, mark: int) -> np.ndarray:
        """Ids of all landmarks carrying ``mark`` (the set B_m), ascending."""
        empty = np.zeros(0, dtype=np.int64)
        return self._by_mark.get(int(mark), empty)

    def count(self, mark: int) -> int:
        return int(self.ids_with_mark(mark).size)

    def check(self) -> "MarkedMap":
        """Raise ``ScenarioError`` if a landmark is outside the AOI or two coincide."""
        if len(self) == 0:
            return self
        r = np.hypot(self.positions[:, 0], self.positions[:, 1])
        if np.any(r > self.aoi_radius * (1 + 1e-12)):
            raise ScenarioError("landmark outside the AOI")
        uniq = np.unique(self.positions, axis=0)
        if uniq.shape[0] != len(self):
            raise ScenarioError("duplicate landmark position")
        return self

    def to_csv(self, path=None) -> str:
        """Write ``id,x,y,mark`` rows; returns the text (and writes it if ``path``)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "x", "y", "mark"])
        for i, (p, m) in enumerate(zip(self.positions, self.marks)):
            w.writerow([i, repr(float(p[0])), repr(float(p[1])), int(m)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source, aoi_radius: float) -> "MarkedMap":
        """Read a map written by :meth:`to_csv`; ``source`` is a path or CSV text."""
        text = _read_text(source)
        rows = list(csv.DictReader(io.StringIO(text)))
        rows.sort(key=lambda r: int(r["id"]))
        if [int(r["id"]) for r in rows] != list(range(len(rows))):
            raise ScenarioError("map ids must be 0..K-1")
        pos = [(float(r["x"]), float(r["y"])) for r in rows]
        mk = [int(r["mark"]) for r in rows]
        return cls(np.array(pos, dtype=float).reshape(-1, 2), np.array(mk, dtype=np.int64), aoi_radius)


def _read_text(source) -> str:
    if isinstance(source, Path):
        return source.read_text()
    if isinstance(source, str) and "\n" not in source and Path(source).exists():
        return Path(source).read_text()
    return str(source)


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Every parameter of an experiment.

    Per-mark arrays (``densities``, ``visibility``, ``noise_dev``) have length
    ``mark_count``; scalars passed to the constructor are broadcast.  Densities
    are in points per square meter.

    ``noise_free`` switches the measurement model to exact ranges, in which
    case the triangle test runs in indicator mode.

    ``conditioning`` chooses how trials are conditioned on seeing at least N
    landmarks: ``"joint"`` draws (map, target) from their joint law given
    that event; ``"retry"`` keeps a map and redraws the target up to 100
    times before drawing a new map.
    """

    aoi_radius: float = 500.0
    mark_count: int = 16
    densities: np.ndarray = 300.0 / (16 * math.pi * 500.0**2)
    visibility: np.ndarray = field(default_factory=lambda: 19.0 + np.arange(1, 17))
    noise_dev: np.ndarray = 0.3
    threshold: float = 0.2
    policy: str = "random"
    n_measurements: int = 2
    target_placement: str = "uniform_core"
    master_seed: int = 0
    noise_free: bool = False
    allow_repeats: bool = False
    conditioning: str = "joint"

    def __post_init__(self):
        m = int(self.mark_count)
        object.__setattr__(self, "mark_count", m)
        for name in ("densities", "visibility", "noise_dev"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim == 0:
                arr = np.full(max(m, 0), float(arr))
            object.__setattr__(self, name, _frozen(arr.reshape(-1)))
        object.__setattr__(self, "aoi_radius", float(self.aoi_radius))
        object.__setattr__(self, "threshold", float(self.threshold))
        object.__setattr__(self, "n_measurements", int(self.n_measurements))
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "noise_free", bool(self.noise_free))
        object.__setattr__(self, "allow_repeats", bool(self.allow_repeats))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScenarioConfig):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray):
                if not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True

    __hash__ = None

    def replace(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    @property
    def expected_landmarks(self) -> float:
        """Expected number of landmarks in the AOI, sum of lambda_m pi d_a^2.

        Rounded to 10 significant digits so grid values read back exactly.
        """
        return float(f"{np.sum(self.densities) * math.pi * self.aoi_radius**2:.10g}")

    @property
    def effective_noise(self) -> np.ndarray:
        """Per-mark deviations actually applied (zeros in noise-free mode)."""
        if self.noise_free:
            return _frozen(np.zeros_like(self.noise_dev))
        return self.noise_dev

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = [float(x) for x in v] if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ScenarioError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    def to_toml(self, path=None) -> str:
        """Flat ``key = value`` text; lists for per-mark arrays."""
        lines = []
        for k, v in self.to_dict().items():
            lines.append(f"{k} = {_toml_value(v)}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_toml(cls, source) -> "ScenarioConfig":
        text = _read_text(source)
        try:
            data = _toml.loads(text)
        except _toml.TOMLDecodeError as exc:
            raise ScenarioError(f"malformed config: {exc}") from None
        if "profile" in data or "expected_landmarks" in data:
            # shorthand: build a standard-grid scenario, then apply the remaining keys
            base = grid_scenario(
                data.pop("profile", "medium"),
                data.pop("expected_landmarks", 300.0),
                mark_count=data.get("mark_count", 16),
                aoi_radius=data.get("aoi_radius", 500.0),
            )
            merged = base.to_dict()
            merged.update(data)
            return cls.from_dict(merged)
        return cls.from_dict(data)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def validate_scenario(config: ScenarioConfig) -> ScenarioConfig:
    """Return ``config`` unchanged or raise ``ScenarioError`` naming the first violation."""
    M = config.mark_count
    if M < 1:
        raise ScenarioError("mark_count must be at least 1")
    if not (math.isfinite(config.aoi_radius) and config.aoi_radius > 0):
        raise ScenarioError("aoi_radius must be positive")
    for name in ("densities", "visibility", "noise_dev"):
        arr = getattr(config, name)
        if arr.shape != (M,):
            raise ScenarioError(f"{name} must have length mark_count={M}")
        if not np.all(np.isfinite(arr)):
            raise ScenarioError(f"{name} must be finite")
        bad = np.flatnonzero(arr <= 0)
        if bad.size:
            raise ScenarioError(f"{name} must be positive for mark {int(bad[0]) + 1}")
    over = np.flatnonzero(config.visibility > config.aoi_radius)
    if over.size:
        raise ScenarioError(f"visibility exceeds AOI radius for mark {int(over[0]) + 1}")
    if not (0.0 < config.threshold < 1.0):
        raise ScenarioError("threshold must lie strictly between 0 and 1")
    if config.policy not in POLICIES:
        raise ScenarioError(f"policy must be one of {POLICIES}")
    if config.n_measurements < 2:
        raise ScenarioError("N ≥ 2 required")
    if config.target_placement not in PLACEMENTS:
        raise ScenarioError(f"target_placement must be one of {PLACEMENTS}")
    if config.target_placement == "uniform_core" and config.visibility.max() >= config.aoi_radius:
        raise ScenarioError("uniform_core placement needs max visibility below the AOI radius")
    if config.conditioning not in CONDITIONINGS:
        raise ScenarioError(f"conditioning must be one of {CONDITIONINGS}")
    if not (0 <= config.master_seed < 2**64):
        raise ScenarioError("master_seed must be a 64-bit unsigned integer")
    return config


def grid_scenario(
    profile: str = "medium",
    expected_landmarks: float = 300.0,
    *,
    mark_count: int = 16,
    aoi_radius: float = 500.0,
    **overrides,
) -> ScenarioConfig:
    """Scenario on the standard experiment grid.

    ``expected_landmarks`` (lambda * pi * d_a^2 summed over marks) is split
    evenly across marks, and visibility is ``offset + m`` with the profile's
    offset (low 9, medium 19, high 29).
    """
    if profile not in VISIBILITY_OFFSETS:
        raise ScenarioError(f"unknown visibility profile {profile!r}")
    lam = float(expected_landmarks) / (mark_count * math.pi * aoi_radius**2)
    vis = VISIBILITY_OFFSETS[profile] + np.arange(1, mark_count + 1, dtype=float)
    cfg = ScenarioConfig(
        aoi_radius=aoi_radius,
        mark_count=mark_count,
        densities=np.full(mark_count, lam),
        visibility=vis,
        noise_dev=np.full(mark_count, 0.3),
    )
    return cfg.replace(**overrides) if overrides else cfg


@dataclass(frozen=True)
class Measurement:
    range: float
    mark: int
    noise_dev: float

    def __post_init__(self):
        if not (self.range > 0):
            raise ScenarioError("measured range must be positive")
        if self.noise_dev < 0:
            raise ScenarioError("noise deviation must be non-negative")


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """The measurement tuple plus the ground truth that produced it.

    Parameters
    ----------
    ranges, marks, noise_dev : arrays of shape (N,)
        Measurement ``i`` is ``(ranges[i], marks[i])`` with deviation ``noise_dev[i]``.
    true_combination : array of shape (N,)
        Landmark ids the measurements came from, in measurement order.
    target : (2,) array
        Ground-truth target position.
    """

    ranges: np.ndarray
    marks: np.ndarray
    noise_dev: np.ndarray
    true_combination: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.ranges, dtype=float).reshape(-1)
        m = np.asarray(self.marks, dtype=np.int64).reshape(-1)
        s = np.asarray(self.noise_dev, dtype=float).reshape(-1)
        c = np.asarray(self.true_combination, dtype=np.int64).reshape(-1)
        if not (r.shape == m.shape == s.shape == c.shape):
            raise ScenarioError("observation fields must have equal length N")
        if np.any(~(r > 0)):
            raise ScenarioError("measured range must be positive")
        if np.any(s < 0):
            raise ScenarioError("noise deviation must be non-negative")
        object.__setattr__(self, "ranges", _frozen(r))
        object.__setattr__(self, "marks", _frozen(m, np.int64))
        object.__setattr__(self, "noise_dev", _frozen(s))
        object.__setattr__(self, "true_combination", _frozen(c, np.int64))
        object.__setattr__(self, "target", _frozen(np.asarray(self.target, dtype=float).reshape(2)))

    def __len__(self) -> int:
        return int(self.ranges.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self)
        )

    __hash__ = None

    @property
    def measurements(self) -> list[Measurement]:
        return [
            Measurement(float(r), int(m), float(s))
            for r, m, s in zip(self.ranges, self.marks, self.noise_dev)
        ]

    def check_against(self, landmark_map: MarkedMap) -> "ObservationSet":
        """Mark alignment of the ground truth with ``landmark_map``."""
        if np.any(self.true_combination >= len(landmark_map)) or np.any(self.true_combination < 0):
            raise ScenarioError("true combination refers to unknown landmark ids")
        if not np.array_equal(landmark_map.marks[self.true_combination], self.marks):
            raise ScenarioError("measurement mark differs from its landmark's mark")
        return self

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "mark", "range", "sigma", "true_id"])
        for i in range(len(self)):
            w.writerow([
                i, int(self.marks[i]), repr(float(self.ranges[i])),
                repr(float(self.noise_dev[i])), int(self.true_combination[i]),
            ])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source, target=(np.nan, np.nan)) -> "ObservationSet":
        rows = list(csv.DictReader(io.StringIO(_read_text(source))))
        rows.sort(key=lambda r: int(r["index"]))
        return cls(
            ranges=[float(r["range"]) for r in rows],
            marks=[int(r["mark"]) for r in rows],
            noise_dev=[float(r["sigma"]) for r in rows],
            true_combination=[int(r["true_id"]) for r in rows],
            target=target,
        )


@dataclass(frozen=True)
class Combination:
    """Ordered landmark ids, aligned with the measurement order."""

    landmark_ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "landmark_ids", tuple(int(i) for i in self.landmark_ids))

    def __len__(self) -> int:
        return len(self.landmark_ids)

    def __iter__(self):
        return iter(self.landmark_ids)

    def is_valid(self, landmark_map: MarkedMap, marks: Sequence[int], allow_repeats: bool = False) -> bool:
        ids = self.landmark_ids
        if len(ids) != len(marks):
            return False
        if any(i < 0 or i >= len(landmark_map) for i in ids):
            return False
        if any(int(landmark_map.marks[i]) != int(m) for i, m in zip(ids, marks)):
            return False
        return allow_repeats or len(set(ids)) == len(ids)


def combinations_from_array(rows: Iterable) -> list[Combination]:
    return [Combination(tuple(r)) for r in rows]
