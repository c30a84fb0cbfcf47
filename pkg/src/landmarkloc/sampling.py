"""Marked Poisson maps and target placement on the AOI disk."""

from __future__ import annotations

import math

import numpy as np

from .model import MarkedMap, ScenarioConfig, ScenarioError
from .streams import as_generator

__all__ = [
    "ConditioningError",
    "sample_disk",
    "sample_map",
    "sample_target",
    "target_radius",
    "visible_areas",
    "sample_conditioned",
]


class ConditioningError(RuntimeError):
    """Too few visible landmarks even after the retry budget."""

    def __init__(self, message: str, trial_index: int | None = None):
        super().__init__(message)
        self.trial_index = trial_index


def sample_disk(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    """``n`` i.i.d. uniform points on the disk, by radius inversion (r = R sqrt(u))."""
    u = rng.random((n, 2))
    r = radius * np.sqrt(u[:, 0])
    phi = 2.0 * math.pi * u[:, 1]
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def sample_map(config: ScenarioConfig, stream) -> MarkedMap:
    """One realization of the marked PPP restricted to the AOI.

    Mark ``m`` contributes ``K_m ~ Poisson(lambda_m pi d_a^2)`` uniform points;
    ids run over marks in increasing order.  All counts are drawn first, then
    all positions.
    """
    rng = as_generator(stream, "map")
    area = math.pi * config.aoi_radius**2
    counts = rng.poisson(config.densities * area)
    marks = np.repeat(np.arange(1, config.mark_count + 1, dtype=np.int64), counts)
    pos = sample_disk(rng, marks.size, config.aoi_radius)
    # coincident points have probability zero; redraw them so the map invariant holds
    while pos.shape[0] > 1:
        order = np.lexsort((pos[:, 1], pos[:, 0]))
        same = np.all(pos[order[1:]] == pos[order[:-1]], axis=1)
        if not same.any():
            break
        dup = order[1:][same]
        pos[dup] = sample_disk(rng, dup.size, config.aoi_radius)
    return MarkedMap(pos, marks, config.aoi_radius)


def target_radius(config: ScenarioConfig) -> float:
    if config.target_placement == "uniform_full":
        return config.aoi_radius
    core = config.aoi_radius - float(np.max(config.visibility))
    if core <= 0:
        raise ScenarioError("uniform_core placement needs max visibility below the AOI radius")
    return core


def sample_target(config: ScenarioConfig, stream) -> np.ndarray:
    """Target position: uniform on the core disk (default) or the full AOI."""
    rng = as_generator(stream, "target")
    return sample_disk(rng, 1, target_radius(config))[0]


def _lens_area(rho, r, R):
    """Area of disk(c, r) inside disk(0, R) with |c| = rho (vectorized)."""
    rho, r = np.broadcast_arrays(np.asarray(rho, dtype=float), np.asarray(r, dtype=float))
    full = rho + r <= R
    with np.errstate(invalid="ignore", divide="ignore"):
        c1 = np.clip((rho**2 + r**2 - R**2) / (2 * rho * r), -1.0, 1.0)
        c2 = np.clip((rho**2 + R**2 - r**2) / (2 * rho * R), -1.0, 1.0)
        k = (-rho + r + R) * (rho + r - R) * (rho - r + R) * (rho + r + R)
        lens = r**2 * np.arccos(c1) + R**2 * np.arccos(c2) - 0.5 * np.sqrt(np.maximum(k, 0.0))
    return np.where(full, math.pi * r**2, lens)


def visible_areas(config: ScenarioConfig, targets) -> np.ndarray:
    """Area of the AOI within each mark's visibility distance, shape ``(n, M)``."""
    t = np.asarray(targets, dtype=float).reshape(-1, 2)
    rho = np.hypot(t[:, 0], t[:, 1])[:, None]
    return _lens_area(rho, config.visibility[None, :], config.aoi_radius)


def _uniform_in(rng, n, center, radius, keep):
    """``n`` uniform points of disk(center, radius) satisfying ``keep`` (rejection)."""
    out = np.zeros((0, 2))
    while out.shape[0] < n:
        cand = center + sample_disk(rng, 2 * (n - out.shape[0]) + 4, radius)
        out = np.concatenate([out, cand[keep(cand)]])
    return out[:n]


def sample_conditioned(config: ScenarioConfig, stream, n_visible: int, *, block: int = 100,
                       max_attempts: int = 100_000, trial_index: int | None = None):
    """(map, target, rejected draws) from the joint law given ``n_visible`` visible landmarks.

    The point process inside and outside the target's visibility disks is
    independent, so the target and the per-mark visible counts are drawn
    first (in blocks of ``block``, accepting the first draw with enough
    visible landmarks), then visible positions inside the disks and the
    remaining landmarks of the AOI outside them.
    """
    t_rng = as_generator(stream, "target")
    m_rng = as_generator(stream, "map")
    radius = target_radius(config)
    R = config.aoi_radius
    attempts = 0
    while attempts < max_attempts:
        targets = sample_disk(t_rng, block, radius)
        areas = visible_areas(config, targets)
        counts = m_rng.poisson(config.densities * areas)
        ok = np.flatnonzero(counts.sum(axis=1) >= n_visible)
        if ok.size:
            k = int(ok[0])
            break
        attempts += block
    else:
        raise ConditioningError(
            f"conditioning failure: fewer than {n_visible} visible landmarks after {attempts} draws",
            trial_index,
        )
    target, vis_counts, area = targets[k], counts[k], areas[k]
    hidden = m_rng.poisson(config.densities * (math.pi * R**2 - area))
    origin = np.zeros(2)
    pos_blocks, mark_blocks = [], []
    for m in range(config.mark_count):
        d = config.visibility[m]
        inside = _uniform_in(m_rng, int(vis_counts[m]), target, d,
                             lambda p: np.hypot(p[:, 0], p[:, 1]) <= R)
        outside = _uniform_in(m_rng, int(hidden[m]), origin, R,
                              lambda p, d=d: np.hypot(p[:, 0] - target[0], p[:, 1] - target[1]) > d)
        pos_blocks += [inside, outside]
        mark_blocks.append(np.full(inside.shape[0] + outside.shape[0], m + 1, dtype=np.int64))
    pos = np.concatenate(pos_blocks)
    marks = np.concatenate(mark_blocks)
    return MarkedMap(pos, marks, R), target, attempts + k
