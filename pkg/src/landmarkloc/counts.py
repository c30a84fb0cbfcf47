"""Mark and count laws behind the size of the combination set.

Notation per mark ``p``: ``b_p = lambda_p pi d_p^2`` (expected visible
count), ``c_p = lambda_p pi (d_a^2 - d_p^2)`` (expected hidden count in the
AOI) and ``a = sum_m b_m``.  A measured landmark is picked uniformly among the
``W`` visible ones, so the visible count ``V_p`` of its mark is size-biased;
``N_p = V_p + H_p`` with ``H_p ~ Poisson(c_p)`` independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from .model import ScenarioConfig
from .special import log_lower_incomplete_gamma_int

__all__ = [
    "ConsistencyError",
    "UnsupportedCaseError",
    "MarkParams",
    "mark_params",
    "mark_weights",
    "mark_pair_pmf",
    "visible_count_pmf",
    "count_pmf_given_mark",
    "same_mark_count_pmf",
    "comb_size_pmf_given_marks",
    "comb_size_distribution",
    "partner_count_distribution",
    "INNER_TAIL",
]

INNER_TAIL = 1e-12
SERIES_TAIL = 1e-14
DUAL_RTOL = 1e-9


class ConsistencyError(ArithmeticError):
    """Two independent evaluations of the same quantity disagree."""


class UnsupportedCaseError(ValueError):
    """The requested closed form does not cover this case."""


@dataclass(frozen=True)
class MarkParams:
    a: float
    b: float
    c: float


def mark_params(config: ScenarioConfig, p: int) -> MarkParams:
    lam = config.densities
    vis = config.visibility
    b_all = lam * math.pi * vis**2
    i = int(p) - 1
    if not (0 <= i < config.mark_count):
        raise ValueError(f"mark {p} outside 1..{config.mark_count}")
    c = float(lam[i] * math.pi * (config.aoi_radius**2 - vis[i] ** 2))
    return MarkParams(float(np.sum(b_all)), float(b_all[i]), c)


def mark_weights(config: ScenarioConfig) -> np.ndarray:
    """P[M = m] for one uniformly selected visible landmark, m = 1..M."""
    Lam = config.densities * math.pi * config.visibility**2
    return Lam / Lam.sum()


def mark_pair_pmf(p: int, q: int, config: ScenarioConfig) -> float:
    """P[M1 = p, M2 = q] = Lambda_p Lambda_q / (sum Lambda)^2.

    >>> from landmarkloc.model import ScenarioConfig
    >>> cfg = ScenarioConfig(mark_count=2, densities=1e-4, visibility=[1.0, 3 ** 0.5], noise_dev=0.3)
    >>> round(mark_pair_pmf(1, 2, cfg), 12)
    0.1875
    """
    w = mark_weights(config)
    return float(w[int(p) - 1] * w[int(q) - 1])


def _log_pois(k, mu):
    k = np.asarray(k, dtype=float)
    if mu == 0:
        return np.where(k == 0, 0.0, -np.inf)
    return k * math.log(mu) - mu - gammaln(k + 1.0)


def _pois_kmax(mu: float, tail: float) -> int:
    """Smallest K with P[Poisson(mu) > K] < tail."""
    if mu <= 0:
        return 0
    return int(poisson.isf(tail, mu)) + 1


def _visible_closed(mp: MarkParams, v_max: int) -> np.ndarray:
    """P[V_p = v | M1 = p] for v = 0..v_max from the incomplete-gamma form."""
    a, b = mp.a, mp.b
    out = np.zeros(v_max + 1)
    x = b - a
    norm = math.log(a) - math.log(b) - math.log(-math.expm1(-a))
    for v in range(1, v_max + 1):
        if abs(x) < 1e-300:
            # single-mark limit: (b - a)^-v gamma(v, b - a) -> 1/v
            log_ratio = -math.log(v)
        else:
            sign, logmag = log_lower_incomplete_gamma_int(v, x)
            # (b-a)^-v carries sign (-1)^v when b < a, matching gamma's sign
            sign_pow = (-1) ** v if x < 0 else 1
            if sign * sign_pow != 1:
                raise ConsistencyError(f"negative visible-count mass at v={v}")
            log_ratio = logmag - v * math.log(abs(x))
        out[v] = math.exp(norm - a + v * math.log(b) + log_ratio - math.lgamma(v))
    return out


def _visible_series(mp: MarkParams, v_max: int, weight="single") -> np.ndarray:
    """Size-biased visible count by direct summation over the total W.

    ``weight="single"`` uses the selection weight v / w (one measurement of
    this mark), ``"double"`` uses v (v - 1) / (w (w - 1)) (two distinct
    measurements of this mark).  The result is normalized numerically.
    """
    a, b = mp.a, mp.b
    rest = a - b
    k_max = _pois_kmax(rest, SERIES_TAIL)
    k = np.arange(k_max + 1, dtype=float)
    log_rest = _log_pois(k, rest)
    joint = np.zeros(v_max + 1)
    v_min = 1 if weight == "single" else 2
    for v in range(v_min, v_max + 1):
        w = v + k
        if weight == "single":
            sel = v / w
        else:
            sel = v * (v - 1) / (w * (w - 1))
        terms = np.exp(_log_pois(v, b) + log_rest) * sel
        joint[v] = math.fsum(terms)
    total = math.fsum(joint)
    return joint / total


def visible_count_pmf(p: int, config: ScenarioConfig, method: str = "closed") -> np.ndarray:
    """P[V_p = v | M1 = p] for v = 0..v_max (v_max at tail mass 1e-14)."""
    mp = mark_params(config, p)
    v_max = max(2, _pois_kmax(mp.b, SERIES_TAIL) + 1)
    if method == "closed":
        return _visible_closed(mp, v_max)
    if method == "series":
        return _visible_series(mp, v_max)
    raise ValueError(f"unknown method {method!r}")


def _convolve_hidden(pv: np.ndarray, c: float, tail: float) -> np.ndarray:
    """PMF of V + H with H ~ Poisson(c), truncated at the combined tail."""
    h_max = _pois_kmax(c, tail)
    ph = np.exp(_log_pois(np.arange(h_max + 1), c))
    return np.convolve(pv, ph)


def count_pmf_given_mark(p: int, config: ScenarioConfig, method: str = "closed",
                         tail: float = INNER_TAIL) -> np.ndarray:
    """P[N_p = n | M1 = p] for n = 0..n_max, the in-AOI count of the measured mark.

    ``method="both"`` evaluates the closed and series forms and raises
    :class:`ConsistencyError` if they differ by more than 1e-9 relative.
    """
    mp = mark_params(config, p)
    if method == "both":
        closed = count_pmf_given_mark(p, config, "closed", tail)
        series = count_pmf_given_mark(p, config, "series", tail)
        _check_dual(closed, series)
        return closed
    pv = visible_count_pmf(p, config, method)
    return _convolve_hidden(pv, mp.c, tail)


def _check_dual(x: np.ndarray, y: np.ndarray):
    floor = 1e-300
    big = np.maximum(np.abs(x), np.abs(y))
    sel = big > floor
    rel = np.abs(x[sel] - y[sel]) / big[sel]
    if rel.size and rel.max() > DUAL_RTOL:
        k = int(np.flatnonzero(sel)[np.argmax(rel)])
        raise ConsistencyError(
            f"closed form and series disagree at n={k}: {x[k]!r} vs {y[k]!r} (rel {rel.max():.2e})"
        )


def same_mark_count_pmf(p: int, config: ScenarioConfig, tail: float = INNER_TAIL) -> np.ndarray:
    """P[N_p = n | M1 = M2 = p] when both measurements carry mark ``p``."""
    mp = mark_params(config, p)
    v_max = max(3, _pois_kmax(mp.b, SERIES_TAIL) + 2)
    pv = _visible_series(mp, v_max, weight="double")
    return _convolve_hidden(pv, mp.c, tail)


def _product_law(p1: np.ndarray, p2: np.ndarray, same: bool = False):
    """Distribution of n1 * n2 (or n (n - 1) when ``same``) as (values, probs)."""
    if same:
        n = np.arange(p1.size)
        vals = n * (n - 1)
        probs = p1.copy()
    else:
        n1 = np.arange(p1.size)
        n2 = np.arange(p2.size)
        vals = np.outer(n1, n2).ravel()
        probs = np.outer(p1, p2).ravel()
    keep = probs > 0
    vals, probs = vals[keep], probs[keep]
    uniq, inv = np.unique(vals, return_inverse=True)
    return uniq.astype(np.int64), np.bincount(inv, weights=probs)


def comb_size_pmf_given_marks(n: int, p: int, q: int, config: ScenarioConfig) -> float:
    """P[|C| = n | M = (p, q)] for two measurements of distinct marks.

    Each factor P[N_p = n1 | M1 = p] is evaluated by the incomplete-gamma
    closed form and by the summation over the visible total, which must agree
    to 1e-9 relative.  Same-mark pairs raise :class:`UnsupportedCaseError`;
    see :func:`comb_size_distribution` for the extension that covers them.
    """
    if int(p) == int(q):
        raise UnsupportedCaseError("unsupported: no closed form when both measurements share a mark")
    if n <= 0:
        return 0.0
    pp = count_pmf_given_mark(p, config, "both")
    pq = count_pmf_given_mark(q, config, "both")
    total = []
    for n1 in range(1, min(int(n), pp.size - 1) + 1):
        if n % n1:
            continue
        n2 = n // n1
        if n2 < pq.size:
            total.append(pp[n1] * pq[n2])
    return math.fsum(total)


def comb_size_distribution(p: int, q: int, config: ScenarioConfig, tail: float = INNER_TAIL):
    """Support and probabilities of |C| given marks ``(p, q)``.

    Distinct marks give ``N_p N_q`` with independent factors; a shared mark
    gives ``N_p (N_p - 1)`` under the distinct-landmark rule (or ``N_p^2``
    when ``config.allow_repeats``).  Returns ``(values, probs, dropped_mass)``.
    """
    if int(p) != int(q):
        p1 = count_pmf_given_mark(p, config, "closed", tail)
        p2 = count_pmf_given_mark(q, config, "closed", tail)
        vals, probs = _product_law(p1, p2)
    else:
        p1 = same_mark_count_pmf(p, config, tail)
        if config.allow_repeats:
            vals, probs = _product_law_square(p1)
        else:
            vals, probs = _product_law(p1, p1, same=True)
    dropped = max(0.0, 1.0 - math.fsum(probs))
    return vals, probs, dropped


def _product_law_square(p1):
    n = np.arange(p1.size)
    keep = p1 > 0
    return (n[keep] ** 2).astype(np.int64), p1[keep]


def partner_count_distribution(p: int, q: int, config: ScenarioConfig, tail: float = INNER_TAIL):
    """Candidates for the measurement of mark ``q`` once its partner (mark ``p``) is known.

    That is the number of mark-``q`` landmarks in the AOI, minus the known
    partner when the marks coincide and repeats are disallowed.
    """
    if int(p) != int(q):
        pmf = count_pmf_given_mark(q, config, "closed", tail)
        vals = np.arange(pmf.size)
    else:
        pmf = same_mark_count_pmf(q, config, tail)
        vals = np.arange(pmf.size) - (0 if config.allow_repeats else 1)
    keep = (pmf > 0) & (vals >= 1)
    vals, probs = vals[keep].astype(np.int64), pmf[keep]
    return vals, probs, max(0.0, 1.0 - math.fsum(probs))
