"""Visibility, observation policies and range synthesis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MarkedMap, ObservationSet, ScenarioConfig
from .streams import as_generator

__all__ = [
    "InsufficientVisibleError",
    "VisibleSet",
    "visible_landmarks",
    "select_observed",
    "measure",
]


class InsufficientVisibleError(RuntimeError):
    """Fewer landmarks are visible than the policy must select."""


@dataclass(frozen=True, eq=False)
class VisibleSet:
    """Landmarks visible from ``target``, sorted by distance (ties by id)."""

    ids: np.ndarray
    distances: np.ndarray
    target: np.ndarray

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    @property
    def entries(self) -> list[tuple[int, float]]:
        return [(int(i), float(d)) for i, d in zip(self.ids, self.distances)]


def visible_landmarks(landmark_map: MarkedMap, target, config: ScenarioConfig) -> VisibleSet:
    """Landmarks with ``|x_i - x_0| <= d_{m_i}``."""
    target = np.asarray(target, dtype=float).reshape(2)
    if len(landmark_map) == 0:
        return VisibleSet(np.zeros(0, dtype=np.int64), np.zeros(0), target)
    diff = landmark_map.positions - target
    dist = np.hypot(diff[:, 0], diff[:, 1])
    reach = config.visibility[landmark_map.marks - 1]
    ids = np.flatnonzero(dist <= reach)
    d = dist[ids]
    order = np.lexsort((ids, d))
    return VisibleSet(ids[order], d[order], target)


def select_observed(visible: VisibleSet, policy: str, n: int, stream=None) -> np.ndarray:
    """Pick ``n`` visible ids; the returned order is the measurement order.

    ``random`` draws without replacement; ``nearest`` takes the ``n`` closest
    (the visible set is already sorted with ties broken by id).
    """
    if len(visible) < n:
        raise InsufficientVisibleError(
            f"insufficient visible landmarks: {len(visible)} visible, {n} required"
        )
    if policy == "nearest":
        return visible.ids[:n].copy()
    if policy == "random":
        rng = as_generator(stream, "select")
        idx = rng.choice(len(visible), size=n, replace=False)
        return visible.ids[idx]
    raise ValueError(f"unknown policy {policy!r}")


def measure(
    target,
    landmark_map: MarkedMap,
    chosen,
    config: ScenarioConfig,
    stream=None,
    noise_free: bool | None = None,
) -> ObservationSet:
    """Ranges ``r_i = d_i + n_i`` with ``n_i ~ N(0, sigma_{m_i}^2)``.

    A non-positive noisy range has its noise redrawn.  ``noise_free`` defaults
    to ``config.noise_free``.
    """
    target = np.asarray(target, dtype=float).reshape(2)
    chosen = np.asarray(chosen, dtype=np.int64).reshape(-1)
    if noise_free is None:
        noise_free = config.noise_free
    diff = landmark_map.positions[chosen] - target
    d = np.hypot(diff[:, 0], diff[:, 1])
    marks = landmark_map.marks[chosen]
    sigma = config.noise_dev[marks - 1]
    if noise_free:
        return ObservationSet(d, marks, np.zeros_like(sigma), chosen, target)
    rng = as_generator(stream, "noise")
    r = d + sigma * rng.standard_normal(d.shape[0])
    bad = ~(r > 0)
    while np.any(bad):
        r[bad] = d[bad] + sigma[bad] * rng.standard_normal(int(bad.sum()))
        bad = ~(r > 0)
    return ObservationSet(r, marks, sigma, chosen, target)
