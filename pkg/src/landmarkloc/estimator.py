"""Estimator-style wrapper around the constraint engine."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .constraints import DistanceCache, estimate_combination, estimate_position, filter_solution_set
from .model import MarkedMap, ObservationSet
from .streams import as_generator

__all__ = ["TriangleConstraintLocalizer"]


class TriangleConstraintLocalizer(BaseEstimator):
    """Landmark-combination identification on a fixed map.

    ``fit`` takes the landmark map (there is nothing to learn beyond caching
    inter-landmark distances); ``predict`` takes observation sets and returns
    position estimates.

    Parameters
    ----------
    threshold : float
        Pairwise test threshold T.
    allow_repeats : bool
        Whether one landmark may serve two measurements.
    random_state : int, numpy Generator or None
        Source for the uniform pick among surviving combinations.

    Examples
    --------
    >>> import numpy as np
    >>> from landmarkloc.model import MarkedMap, ObservationSet
    >>> m = MarkedMap(np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]]), np.array([1, 2, 3]), 50.0)
    >>> obs = ObservationSet(np.array([5.0, 65 ** 0.5, 45 ** 0.5]), np.array([1, 2, 3]), np.zeros(3), [0, 1, 2], [3.0, 4.0])
    >>> est = TriangleConstraintLocalizer(threshold=0.5).fit(m)
    >>> np.round(est.predict([obs])[0], 6)
    array([3., 4.])
    """

    def __init__(self, threshold: float = 0.2, allow_repeats: bool = False, random_state=None):
        self.threshold = threshold
        self.allow_repeats = allow_repeats
        self.random_state = random_state

    def fit(self, X: MarkedMap, y=None):
        if not isinstance(X, MarkedMap):
            raise TypeError("fit expects a MarkedMap")
        if not (0.0 <= self.threshold <= 1.0):
            raise ValueError("threshold must lie in [0, 1]")
        self.map_ = X
        self.cache_ = DistanceCache(X)
        self.rng_ = as_generator(self.random_state, "pick")
        return self

    def solution_set(self, obs: ObservationSet):
        check_is_fitted(self, "map_")
        return filter_solution_set(self.map_, obs, self.threshold, cache=self.cache_,
                                   allow_repeats=self.allow_repeats)

    def predict_combination(self, observations):
        """Picked landmark ids per observation set (``None`` when nothing survives)."""
        out = []
        for obs in observations:
            pick = estimate_combination(self.solution_set(obs), self.rng_)
            out.append(None if pick is None else tuple(pick.landmark_ids))
        return out

    def predict(self, observations) -> np.ndarray:
        """Position estimates, shape ``(n, 2)``; NaN rows where nothing survives."""
        pts = np.full((len(observations), 2), np.nan)
        for k, (obs, ids) in enumerate(zip(observations, self.predict_combination(observations))):
            if ids is not None:
                pts[k] = estimate_position(ids, self.map_, obs).point
        return pts

    def score(self, observations, y=None) -> float:
        """Fraction of observation sets whose picked combination is the true one."""
        picks = self.predict_combination(observations)
        hits = [p is not None and p == tuple(int(i) for i in o.true_combination)
                for o, p in zip(observations, picks)]
        return float(np.mean(hits)) if hits else float("nan")
