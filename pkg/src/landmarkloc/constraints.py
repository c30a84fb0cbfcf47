"""Probabilistic triangle test, combination sets, solution filtering and
position estimates.

A pair of measurements ``(r1, r2)`` is consistent with two landmarks a
distance ``d`` apart when the noise-free triangle inequalities
``|d1 - d2| <= d <= d1 + d2`` hold for the unknown true distances.  Writing
``W = n1 + n2`` and ``V = n1 - n2`` for the noise sum and difference, the
probability of that event is

    P[W <= r1 + r2 - d,  r1 - r2 - d <= V <= r1 - r2 + d]

with ``Var W = Var V = s1^2 + s2^2`` and ``Cov(W, V) = s1^2 - s2^2``.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.special import ndtr

from .bvn import bvn_rectangle_wv
from .model import Combination, MarkedMap, ObservationSet
from .special import QuadratureSpec, integrate_1d, normal_cdf
from .streams import as_generator

__all__ = [
    "EXACT_RTOL",
    "triangle_probability",
    "triangle_probability_array",
    "rectangle_probability",
    "PairConstraintResult",
    "pair_constraint",
    "acceptance_interval",
    "acceptance_interval_array",
    "combination_count",
    "build_combination_set",
    "DistanceCache",
    "SolutionSet",
    "filter_solution_set",
    "estimate_combination",
    "PositionEstimate",
    "estimate_position",
    "ranges_consistent",
]

EXACT_RTOL = 1e-9
_COND_SPEC = QuadratureSpec(abs_tol=1e-11, rel_tol=1e-10, max_depth=50)


def _check_nonneg(**kw):
    for name, v in kw.items():
        if np.any(np.asarray(v) < 0) or np.any(np.isnan(np.asarray(v, dtype=float))):
            raise ValueError(f"{name} must be non-negative")


def _indicator(r1, r2, d):
    scale = np.maximum(np.maximum(r1 + r2, d), np.finfo(float).tiny)
    tol = EXACT_RTOL * scale
    return ((d >= np.abs(r1 - r2) - tol) & (d <= r1 + r2 + tol)).astype(float)


def triangle_probability(r1: float, r2: float, sigma1: float, sigma2: float, d: float) -> float:
    """Probability that ``(r1, r2)`` satisfies the triangle inequalities at distance ``d``.

    Equal deviations use the factorized form (W and V are then independent),
    both-zero deviations give the exact indicator with relative tolerance
    ``EXACT_RTOL``, a single zero deviation collapses to a one-dimensional
    normal interval, and the general case integrates the conditional law of
    V given W with adaptive Gauss-Kronrod.

    Examples
    --------
    >>> triangle_probability(1.0, 1.0, 0.0, 0.0, 1.0)
    1.0
    >>> triangle_probability(1.0, 1.0, 0.3, 0.3, 5.0) < 1e-6
    True
    """
    _check_nonneg(r1=r1, r2=r2, sigma1=sigma1, sigma2=sigma2, d=d)
    r1, r2, s1, s2, d = map(float, (r1, r2, sigma1, sigma2, d))
    a = r1 + r2 - d
    b1 = r1 - r2 - d
    b2 = r1 - r2 + d
    if s1 == 0.0 and s2 == 0.0:
        return float(_indicator(r1, r2, d))
    if s1 == s2:
        s = math.hypot(s1, s2)
        return normal_cdf(a / s) * max(0.0, normal_cdf(b2 / s) - normal_cdf(b1 / s))
    if s2 == 0.0:
        return max(0.0, normal_cdf(min(a, b2) / s1) - normal_cdf(b1 / s1))
    if s1 == 0.0:
        return max(0.0, normal_cdf(min(a, -b1) / s2) - normal_cdf(-b2 / s2))
    s = math.hypot(s1, s2)
    rho = (s1 * s1 - s2 * s2) / (s * s)
    q = math.sqrt(1.0 - rho * rho)
    upper = min(a / s, 10.0)
    if upper <= -10.0:
        return 0.0
    lo_v, hi_v = b1 / s, b2 / s

    def integrand(t):
        return np.exp(-0.5 * t * t) / math.sqrt(2 * math.pi) * (
            ndtr((hi_v - rho * t) / q) - ndtr((lo_v - rho * t) / q)
        )

    val = integrate_1d(integrand, -10.0, upper, _COND_SPEC, vectorized=True)
    return min(1.0, max(0.0, val))


def triangle_probability_array(r1, r2, sigma1, sigma2, d) -> np.ndarray:
    """Vectorized :func:`triangle_probability` (inputs broadcast).

    The general unequal-deviation case uses a bivariate normal CDF instead of
    the adaptive integral; both agree to well below 1e-10.
    """
    r1, r2, s1, s2, d = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (r1, r2, sigma1, sigma2, d)))
    _check_nonneg(r1=r1, r2=r2, sigma1=s1, sigma2=s2, d=d)
    out = rectangle_probability(r1 + r2 - d, r1 - r2 - d, r1 - r2 + d, s1, s2)
    both = (s1 == 0) & (s2 == 0)
    if np.any(both):
        out = np.asarray(out, dtype=float).copy()
        out[both] = _indicator(r1[both], r2[both], d[both])
    out = np.asarray(out, dtype=float)
    return out if out.ndim else float(out)


def rectangle_probability(a, b1, b2, sigma1, sigma2) -> np.ndarray:
    """P[W <= a, b1 <= V <= b2] for the noise sum and difference (inputs broadcast).

    Where both deviations are zero this is the indicator of
    ``0 <= a and b1 <= 0 <= b2`` without tolerance.
    """
    a, b1, b2, s1, s2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b1, b2, sigma1, sigma2)))
    out = np.empty(a.shape, dtype=float)
    zero1 = s1 == 0
    zero2 = s2 == 0
    both = zero1 & zero2
    eq = (s1 == s2) & ~both
    only2 = zero2 & ~zero1
    only1 = zero1 & ~zero2
    gen = ~(both | eq | only1 | only2)
    if np.any(both):
        out[both] = ((a[both] >= 0) & (b1[both] <= 0) & (b2[both] >= 0)).astype(float)
    # subnormal deviations overflow a / s to inf, which ndtr maps correctly
    with np.errstate(over="ignore"):
        if np.any(eq):
            s = np.hypot(s1[eq], s2[eq])
            out[eq] = ndtr(a[eq] / s) * np.maximum(0.0, ndtr(b2[eq] / s) - ndtr(b1[eq] / s))
        if np.any(only2):
            # V = W = n1
            s = s1[only2]
            out[only2] = np.maximum(0.0, ndtr(np.minimum(a[only2], b2[only2]) / s) - ndtr(b1[only2] / s))
        if np.any(only1):
            # W = n2, V = -n2
            s = s2[only1]
            out[only1] = np.maximum(0.0, ndtr(np.minimum(a[only1], -b1[only1]) / s) - ndtr(-b2[only1] / s))
        if np.any(gen):
            s = np.hypot(s1[gen], s2[gen])
            # (s1^2 - s2^2) / (s1^2 + s2^2) via the deviation ratio; squares can underflow
            g1, g2 = s1[gen], s2[gen]
            u = np.minimum(g1, g2) / np.maximum(g1, g2)
            rho = np.where(g1 > g2, 1.0, -1.0) * (1.0 - u * u) / (1.0 + u * u)
            out[gen] = bvn_rectangle_wv(a[gen] / s, b1[gen] / s, b2[gen] / s, rho)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PairConstraintResult:
    probability: float
    satisfied: bool


def pair_constraint(r1, r2, sigma1, sigma2, d, threshold: float) -> PairConstraintResult:
    p = triangle_probability(r1, r2, sigma1, sigma2, d)
    return PairConstraintResult(p, p >= threshold)


# ---------------------------------------------------------------------------
# acceptance interval in d

def acceptance_interval_array(r1, r2, sigma1, sigma2, threshold, *, iters: int = 80):
    """Distances ``d >= 0`` accepted by the pair test, as ``(lo, hi)`` arrays.

    The test probability is log-concave in ``d`` (the acceptance region is a
    convex polyhedron in ``(W, V, d)``), so ``{d : P >= T}`` is an interval.
    A golden-section search finds the peak and bisection the two crossings.
    Empty intervals are returned as ``lo = hi = nan``.
    """
    r1, r2, s1, s2, T = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (r1, r2, sigma1, sigma2, threshold)))
    shape = r1.shape
    r1, r2, s1, s2, T = (v.ravel() for v in (r1, r2, s1, s2, T))
    A = r1 + r2
    B = np.abs(r1 - r2)
    s = np.hypot(s1, s2)
    lo = np.full(A.shape, np.nan)
    hi = np.full(A.shape, np.nan)
    exact = s == 0
    if np.any(exact):
        ok = exact & (T <= 1.0)
        lo[ok] = B[ok] * (1 - EXACT_RTOL)
        hi[ok] = A[ok] * (1 + EXACT_RTOL)
    alltrue = (T <= 0) & ~exact
    lo[alltrue] = 0.0
    hi[alltrue] = np.inf
    idx = np.flatnonzero(~exact & ~alltrue)
    if idx.size:
        l_, h_ = _noisy_interval(r1[idx], r2[idx], s1[idx], s2[idx], T[idx], A[idx], B[idx], s[idx], iters)
        lo[idx] = l_
        hi[idx] = h_
    return lo.reshape(shape), hi.reshape(shape)


def _noisy_interval(r1, r2, s1, s2, T, A, B, s, iters):
    def tp(d):
        return triangle_probability_array(r1, r2, s1, s2, d)

    # golden-section search for the peak of a unimodal function
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a = np.maximum(0.0, B - 8 * s)
    b = A + 8 * s
    c = b - g * (b - a)
    e = a + g * (b - a)
    fc, fe = tp(c), tp(e)
    for _ in range(iters):
        left = fc >= fe
        # keep [a, e] when the left probe is higher, else [c, b]
        b = np.where(left, e, b)
        a = np.where(left, a, c)
        probe = np.where(left, b - g * (b - a), a + g * (b - a))
        fprobe = tp(probe)
        c, e, fc, fe = (
            np.where(left, probe, e),
            np.where(left, c, probe),
            np.where(left, fprobe, fe),
            np.where(left, fc, fprobe),
        )
    peak = np.where(fc >= fe, c, e)
    fpeak = np.maximum(fc, fe)
    ok = fpeak >= T
    # lower crossing on [lo_end, peak], upper on [peak, hi_end]
    lo_end = np.maximum(0.0, B - 40 * s)
    hi_end = A + 40 * s
    f_lo_end = tp(lo_end)
    lo = _bisect(tp, lo_end, peak, T, increasing=True, iters=iters)
    lo = np.where(f_lo_end >= T, lo_end, lo)
    hi = _bisect(tp, peak, hi_end, T, increasing=False, iters=iters)
    lo = np.where(ok, lo, np.nan)
    hi = np.where(ok, hi, np.nan)
    return lo, hi


def _bisect(f, a, b, T, increasing, iters):
    a = a.copy()
    b = b.copy()
    for _ in range(iters):
        m = 0.5 * (a + b)
        fm = f(m)
        inside = fm >= T
        if increasing:
            b = np.where(inside, m, b)
            a = np.where(inside, a, m)
        else:
            a = np.where(inside, m, a)
            b = np.where(inside, b, m)
        if np.all(b - a <= 1e-13 * np.maximum(1.0, np.abs(b))):
            break
    # return the accepted endpoint
    return b if increasing else a


def acceptance_interval(r1, r2, sigma1, sigma2, threshold) -> tuple[float, float] | None:
    """Scalar :func:`acceptance_interval_array`; ``None`` when nothing passes."""
    lo, hi = acceptance_interval_array(r1, r2, sigma1, sigma2, threshold)
    lo, hi = float(lo), float(hi)
    if math.isnan(lo):
        return None
    return lo, hi


# ---------------------------------------------------------------------------
# combination sets

def combination_count(landmark_map: MarkedMap, marks: Sequence[int], allow_repeats: bool = False) -> int:
    """|C| without enumeration: a falling factorial per repeated mark."""
    total = 1
    for m, k in _mark_multiplicity(marks).items():
        n = landmark_map.count(m)
        if allow_repeats:
            total *= n**k
        else:
            total *= math.perm(n, k) if n >= k else 0
    return total


def _mark_multiplicity(marks):
    out: dict[int, int] = {}
    for m in marks:
        out[int(m)] = out.get(int(m), 0) + 1
    return out


def build_combination_set(
    landmark_map: MarkedMap, marks: Sequence[int], allow_repeats: bool = False
) -> Iterator[Combination]:
    """Lazily yield every mark-aligned tuple, lexicographic in candidate ids."""
    pools = [landmark_map.ids_with_mark(m).tolist() for m in marks]
    for tup in itertools.product(*pools):
        if allow_repeats or len(set(tup)) == len(tup):
            yield Combination(tup)


class DistanceCache:
    """Per-map pairwise distance blocks between mark classes, computed lazily."""

    def __init__(self, landmark_map: MarkedMap):
        self.map = landmark_map
        self._blocks: dict[tuple[int, int], np.ndarray] = {}

    def block(self, p: int, q: int) -> np.ndarray:
        """Distances between ``B_p`` (rows) and ``B_q`` (columns)."""
        key = (int(p), int(q))
        hit = self._blocks.get(key)
        if hit is not None:
            return hit
        rev = self._blocks.get((key[1], key[0]))
        if rev is not None:
            return rev.T
        P = self.map.positions[self.map.ids_with_mark(p)]
        Q = self.map.positions[self.map.ids_with_mark(q)]
        diff = P[:, None, :] - Q[None, :, :]
        D = np.hypot(diff[..., 0], diff[..., 1])
        self._blocks[key] = D
        return D

    def distance(self, i: int, j: int) -> float:
        a, b = self.map.positions[int(i)], self.map.positions[int(j)]
        return float(math.hypot(a[0] - b[0], a[1] - b[1]))


@dataclass(frozen=True, eq=False)
class SolutionSet:
    """Combinations passing every pairwise test.

    ``combinations`` is an ``(|S|, N)`` integer array of landmark ids in
    measurement order; ``min_probability[k]`` is the smallest pairwise test
    probability of row ``k``.
    """

    combinations: np.ndarray
    min_probability: np.ndarray
    contains_truth: bool
    comb_size: int

    def __len__(self) -> int:
        return int(self.combinations.shape[0])

    def as_combinations(self) -> list[Combination]:
        return [Combination(tuple(row)) for row in self.combinations]

    def to_csv(self, path=None, truth=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["combination", "min_probability", "is_truth"])
        truth = None if truth is None else tuple(int(t) for t in truth)
        for row, p in zip(self.combinations, self.min_probability):
            ids = tuple(int(i) for i in row)
            w.writerow([" ".join(map(str, ids)), repr(float(p)), int(ids == truth) if truth else ""])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def filter_solution_set(
    landmark_map: MarkedMap,
    obs: ObservationSet,
    threshold: float,
    *,
    cache: DistanceCache | None = None,
    allow_repeats: bool = False,
) -> SolutionSet:
    """Keep the combinations whose every measurement pair passes the test.

    Tuples are grown one measurement at a time and a partial tuple is dropped
    as soon as one of its pairs fails, which is equivalent to testing all
    ``N(N-1)/2`` pairs of every full tuple.
    """
    N = len(obs)
    if N < 2:
        raise ValueError("at least two measurements are required")
    cache = cache or DistanceCache(landmark_map)
    pools = [landmark_map.ids_with_mark(m) for m in obs.marks]
    comb_size = combination_count(landmark_map, obs.marks, allow_repeats)
    # pass matrices and probabilities for every measurement pair
    probs: dict[tuple[int, int], np.ndarray] = {}
    for i in range(N):
        for j in range(i + 1, N):
            D = cache.block(obs.marks[i], obs.marks[j])
            probs[(i, j)] = np.asarray(
                triangle_probability_array(obs.ranges[i], obs.ranges[j], obs.noise_dev[i], obs.noise_dev[j], D)
            ).reshape(D.shape)
    # partial tuples as indices into the pools
    part = np.arange(pools[0].size, dtype=np.int64)[:, None]
    minp = np.full(pools[0].size, np.inf)
    for j in range(1, N):
        nj = pools[j].size
        keep = np.ones((part.shape[0], nj), dtype=bool)
        pmin = np.broadcast_to(minp[:, None], keep.shape).copy()
        for i in range(j):
            P = probs[(i, j)][part[:, i]]
            keep &= P >= threshold
            np.minimum(pmin, P, out=pmin)
            if not allow_repeats and obs.marks[i] == obs.marks[j]:
                keep &= pools[i][part[:, i]][:, None] != pools[j][None, :]
        rows, cols = np.nonzero(keep)
        part = np.column_stack([part[rows], cols])
        minp = pmin[rows, cols]
    combos = np.column_stack([pools[k][part[:, k]] for k in range(N)]) if part.size else np.zeros((0, N), dtype=np.int64)
    truth = obs.true_combination
    contains = bool(np.any(np.all(combos == truth[None, :], axis=1))) if combos.shape[0] else False
    return SolutionSet(combos.astype(np.int64), minp, contains, comb_size)


def estimate_combination(solution: SolutionSet, stream=None) -> Combination | None:
    """Uniform pick from the solution set (``None`` when it is empty)."""
    n = len(solution)
    if n == 0:
        return None
    if n == 1:
        return Combination(tuple(solution.combinations[0]))
    rng = as_generator(stream, "pick")
    return Combination(tuple(solution.combinations[int(rng.integers(n))]))


# ---------------------------------------------------------------------------
# position estimate

@dataclass(frozen=True)
class PositionEstimate:
    point: np.ndarray
    status: str  # ok | degenerate | degenerate-tangent | max-iter


def _circle_intersection(c1, c2, r1, r2):
    delta = c2 - c1
    dist = math.hypot(delta[0], delta[1])
    if dist == 0.0:
        return [c1 + np.array([0.5 * (r1 + r2), 0.0])], "degenerate"
    u = delta / dist
    a = (dist * dist + r1 * r1 - r2 * r2) / (2.0 * dist)
    h2 = r1 * r1 - a * a
    tol = 1e-9 * max(r1, r2, dist) ** 2
    if h2 < -tol:
        # closest approach between the two circles
        if dist > r1 + r2:
            p1 = c1 + r1 * u
            p2 = c2 - r2 * u
        elif r1 >= r2:
            p1 = c1 + r1 * u
            p2 = c2 + r2 * u
        else:
            p1 = c1 - r1 * u
            p2 = c2 - r2 * u
        return [0.5 * (p1 + p2)], "degenerate"
    base = c1 + a * u
    if abs(h2) <= tol:
        return [base], "degenerate-tangent"
    h = math.sqrt(h2)
    perp = np.array([-u[1], u[0]])
    return [base + h * perp, base - h * perp], "ok"


def estimate_position(combination, landmark_map: MarkedMap, obs: ObservationSet,
                      *, max_iter: int = 50, step_tol: float = 1e-9) -> PositionEstimate:
    """Target position implied by a combination and the measured ranges.

    Two measurements intersect the range circles (lexicographically smaller
    point on ties); three or more run Gauss-Newton on the range residuals from
    the centroid of the landmarks.
    """
    ids = np.asarray(list(combination), dtype=np.int64)
    X = landmark_map.positions[ids]
    r = np.asarray(obs.ranges, dtype=float)
    if ids.size < 2:
        raise ValueError("at least two measurements are required")
    if ids.size == 2:
        pts, status = _circle_intersection(X[0], X[1], r[0], r[1])
        best = min(pts, key=lambda p: (p[0], p[1]))
        return PositionEstimate(np.asarray(best, dtype=float), status)
    x = X.mean(axis=0)
    status = "max-iter"
    for _ in range(max_iter):
        diff = x - X
        dist = np.hypot(diff[:, 0], diff[:, 1])
        if np.any(dist == 0):
            x = x + 1e-6 * max(1.0, float(r.mean()))
            continue
        J = diff / dist[:, None]
        res = dist - r
        step, *_ = np.linalg.lstsq(J, -res, rcond=None)
        x = x + step
        if math.hypot(step[0], step[1]) <= step_tol * max(1.0, math.hypot(x[0], x[1])):
            status = "ok"
            break
    return PositionEstimate(x, status)


def ranges_consistent(combination, landmark_map: MarkedMap, ranges, rtol: float = 1e-7) -> bool:
    """Whether one point lies at the given distances from all the landmarks.

    This is the joint (not pairwise) consistency condition for noise-free
    ranges.  The candidate points are the intersections of the first two
    circles, checked against the remaining ones.
    """
    ids = np.asarray(list(combination), dtype=np.int64)
    X = landmark_map.positions[ids]
    r = np.asarray(ranges, dtype=float)
    pts, status = _circle_intersection(X[0], X[1], r[0], r[1])
    if status == "degenerate":
        return False
    scale = max(1.0, float(r.max()))
    for p in pts:
        dist = np.hypot(*(p - X).T)
        if np.all(np.abs(dist - r) <= rtol * scale):
            return True
    return False
