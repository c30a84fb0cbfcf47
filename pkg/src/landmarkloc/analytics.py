"""Closed-form and semi-numeric localizability analysis.

Covers the distance law between two uniform points of the AOI, the true and
false positive rates of the pair test, the solution-set size law, the joint
law of ranges, marks and combination-set size under the random policy, the
two-measurement localizability and the one-landmark-known upper bound used for
three or more measurements.
"""

from __future__ import annotations

import csv
import io
import math
from collections import namedtuple
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import ndtr, ndtri

from .constraints import acceptance_interval_array, rectangle_probability
from .counts import (
    comb_size_distribution,
    comb_size_pmf_given_marks,
    mark_pair_pmf,
    mark_weights,
    partner_count_distribution,
    same_mark_count_pmf,
)
from .model import ScenarioConfig, validate_scenario
from .special import log_binom

__all__ = [
    "PolicyError",
    "NEAREST_POLICY_MESSAGE",
    "disk_distance_pdf",
    "disk_distance_cdf",
    "PairRateInputs",
    "PairRates",
    "pair_rates",
    "false_positive_rate",
    "true_positive_rate",
    "solution_size_pmf",
    "localizability_conditional",
    "range_density_given_marks",
    "JointPoint",
    "joint_density",
    "AnalyticResult",
    "localizability_theorem1",
    "localizability_upper_bound",
    "semi_empirical_localizability",
    "semi_empirical_from_outcomes",
    "analytic_curve",
    "curve_to_csv",
]

NEAREST_POLICY_MESSAGE = "no closed form for nearest policy; use compare --semi-empirical"
TPR_MODELS = ("geometric", "shared")


class PolicyError(ValueError):
    """The closed form does not apply to the configured observation policy."""


# ---------------------------------------------------------------------------
# distance between two uniform points of the disk

def disk_distance_pdf(s, d_a: float):
    """Density of the distance between two i.i.d. uniform points on a disk.

    f(s) = (2 s / d_a^2) [(2/pi) acos(s / 2d_a) - (s / (pi d_a)) sqrt(1 - s^2 / 4d_a^2)]
    on [0, 2 d_a], zero elsewhere.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise ValueError("distance must be non-negative")
    if d_a <= 0:
        raise ValueError("d_a must be positive")
    u = np.clip(s_arr / (2.0 * d_a), 0.0, 1.0)
    f = (2.0 * s_arr / d_a**2) * ((2.0 / math.pi) * np.arccos(u) - (2.0 * u / math.pi) * np.sqrt(1.0 - u * u))
    f = np.where(s_arr <= 2.0 * d_a, f, 0.0)
    return f if f.ndim else float(f)


def disk_distance_cdf(s, d_a: float):
    """Closed-form CDF of :func:`disk_distance_pdf`.

    With u = s / d_a: F = 1 + (2/pi)(u^2 - 1) acos(u/2) - (u / 2pi)(1 + u^2/2) sqrt(4 - u^2).
    """
    s_arr = np.asarray(s, dtype=float)
    u = np.clip(s_arr / d_a, 0.0, 2.0)
    F = 1.0 + (2.0 / math.pi) * (u * u - 1.0) * np.arccos(u / 2.0) - (u / (2.0 * math.pi)) * (
        1.0 + u * u / 2.0
    ) * np.sqrt(4.0 - u * u)
    F = np.clip(np.where(np.isposinf(s_arr), 1.0, F), 0.0, 1.0)
    return F if F.ndim else float(F)


# ---------------------------------------------------------------------------
# pair rates

@dataclass(frozen=True)
class PairRateInputs:
    r1: float
    r2: float
    sigma1: float
    sigma2: float
    T: float
    d_a: float

    def __post_init__(self):
        if not (self.r1 > 0 and self.r2 > 0 and self.d_a > 0):
            raise ValueError("ranges and d_a must be positive")
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("noise deviations must be non-negative")
        if not (0.0 <= self.T <= 1.0):
            raise ValueError("T must lie in [0, 1]")


PairRates = namedtuple("PairRates", ["p_t", "p_f"])


def false_positive_rate(r1, r2, sigma1, sigma2, T, d_a):
    """Probability that a pair of uniform AOI landmarks passes the test (vectorized).

    The accepted distances form an interval, so this is F_D(hi) - F_D(lo).
    """
    lo, hi = acceptance_interval_array(r1, r2, sigma1, sigma2, T)
    pf = disk_distance_cdf(np.nan_to_num(hi, nan=0.0), d_a) - disk_distance_cdf(np.nan_to_num(lo, nan=0.0), d_a)
    pf = np.clip(np.where(np.isnan(lo), 0.0, pf), 0.0, 1.0)
    return pf if np.ndim(pf) else float(pf)


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _composite_nodes(lo, hi, order):
    """Gauss-Legendre nodes on every panel [lo_k, hi_k] (row-wise arrays)."""
    x, w = _gl(order)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = mid[..., None] + half[..., None] * x
    weights = half[..., None] * w
    return nodes, weights


def _h_interval(D, s, T, iters=70):
    """x_T >= 0 with Phi((x + D)/s) - Phi((x - D)/s) = T; nan if even x = 0 fails."""
    ok = (2.0 * ndtr(D / s) - 1.0) >= T
    lo = np.zeros_like(D)
    hi = D + 12.0 * s
    for _ in range(iters):
        m = 0.5 * (lo + hi)
        inside = (ndtr((m + D) / s) - ndtr((m - D) / s)) >= T
        lo = np.where(inside, m, lo)
        hi = np.where(inside, hi, m)
    return np.where(ok, lo, np.nan)


_T_ORDER = 16


def _pass_given_geometry(A, B, D, s1, s2, T):
    """P[the true pair passes | true distances, landmark separation D].

    ``A = d1 + d2`` and ``B = d1 - d2`` are the noise-free sum and difference;
    the measurement noise (W, V) is integrated out.  Away from the corner where
    both triangle constraints are active the answer is a normal CDF; in the
    corner the V-integral is done by Gauss-Legendre with the W-threshold solved
    in closed form (equal deviations) or by bisection.
    """
    s = math.hypot(s1, s2)
    zT = ndtri(T)
    cW = (A - D) / s
    cV = (D - np.abs(B)) / s
    out = np.empty_like(D)
    mW = cV >= 16.0
    out[mW] = ndtr(cW[mW] - zT)
    mV = ~mW & (cW >= 16.0)
    if np.any(mV):
        xT = _h_interval(D[mV], s, T)
        Bv = B[mV]
        val = ndtr((xT - Bv) / s) - ndtr((-xT - Bv) / s)
        out[mV] = np.where(np.isnan(xT), 0.0, val)
    corner = ~mW & ~mV
    if np.any(corner):
        out[corner] = _corner(A[corner], B[corner], D[corner], s1, s2, T)
    return out


def _corner(A, B, D, s1, s2, T):
    s = math.hypot(s1, s2)
    xT = _h_interval(D, s, T)
    valid = ~np.isnan(xT)
    xT = np.where(valid, xT, 0.0)
    t_lo = np.clip((-xT - B) / s, -8.0, 8.0)
    t_hi = np.clip((xT - B) / s, -8.0, 8.0)
    mid = 0.5 * (t_lo + t_hi)
    panels_lo = np.stack([t_lo, mid], axis=-1)
    panels_hi = np.stack([mid, t_hi], axis=-1)
    t, w = _composite_nodes(panels_lo, panels_hi, _T_ORDER)
    t = t.reshape(t.shape[0], -1)
    w = w.reshape(w.shape[0], -1)
    V = s * t
    Bc, Dc, Ac = B[:, None], D[:, None], A[:, None]
    h = ndtr((Bc + V + Dc) / s) - ndtr((Bc + V - Dc) / s)
    if s1 == s2:
        ratio = np.clip(T / np.maximum(h, 1e-300), 0.0, 1.0)
        pw = ndtr((Ac - Dc) / s - ndtri(ratio))
    else:
        rho = (s1 * s1 - s2 * s2) / (s * s)
        q = math.sqrt(max(0.0, 1.0 - rho * rho))
        wT = _w_threshold(Ac, Bc + V, Dc, s1, s2, T, s)
        if q > 0:
            pw = ndtr((rho * V - wT) / (s * q))
        else:
            pw = (rho * V >= wT).astype(float)
    pw = np.where(h >= T, pw, 0.0)
    phi = np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    val = np.sum(w * phi * pw, axis=1)
    return np.where(valid, np.clip(val, 0.0, 1.0), 0.0)


def _w_threshold(A, BV, D, s1, s2, T, s, iters=60):
    """Smallest noise sum w with P_test(r1 + r2 = A + w, r1 - r2 = BV) >= T."""
    A, BV, D = np.broadcast_arrays(A, BV, D)
    lo = D - A - 12.0 * s
    hi = D - A + 40.0 * s

    def tp(w):
        return rectangle_probability(A + w - D, BV - D, BV + D, s1, s2)

    for _ in range(iters):
        m = 0.5 * (lo + hi)
        inside = tp(m) >= T
        hi = np.where(inside, m, hi)
        lo = np.where(inside, lo, m)
    return hi


def true_positive_rate(d1, d2, sigma1, sigma2, T, *, order: int = 8):
    """Probability that the true pair passes the test under the random policy.

    Given the two landmark distances from the target, the angle between the
    landmarks seen from the target is uniform, which fixes the law of their
    separation ``D* = sqrt(d1^2 + d2^2 - 2 d1 d2 cos theta)``.  The angle is
    integrated by composite Gauss-Legendre with panel breaks where D* comes
    within a few noise deviations of ``|d1 - d2|`` or ``d1 + d2``.
    """
    d1, d2 = np.broadcast_arrays(np.asarray(d1, dtype=float), np.asarray(d2, dtype=float))
    shape = d1.shape
    d1 = d1.ravel()
    d2 = d2.ravel()
    s = math.hypot(sigma1, sigma2)
    if T <= 0:
        return np.ones(shape) if shape else 1.0
    if s == 0.0:
        out = np.ones(d1.shape)
        return out.reshape(shape) if shape else float(out[0])
    A = d1 + d2
    B = d1 - d2
    Babs = np.abs(B)
    prod = 2.0 * d1 * d2
    with np.errstate(invalid="ignore", divide="ignore"):
        def theta_of(D):
            c = (d1[:, None] ** 2 + d2[:, None] ** 2 - D**2) / prod[:, None]
            return np.arccos(np.clip(c, -1.0, 1.0))

        k = np.array([0.5, 2.0, 6.0])
        Dlow = np.minimum(Babs[:, None] + s * k, A[:, None])
        Dhigh = np.maximum(A[:, None] - s * k, Babs[:, None])
        # below this separation no noise realization passes: g jumps there
        Dcut = np.clip(np.full((d1.size, 1), s * ndtri(0.5 * (1.0 + T))), Babs[:, None], A[:, None])
        th = np.concatenate([theta_of(Dlow), theta_of(Dhigh), theta_of(Dcut)], axis=1)
        th_a = theta_of((Babs + 6 * s)[:, None])
        th_b = theta_of(np.maximum(A - 6 * s, Babs)[:, None])
        inner = th_a + (th_b - th_a) * np.array([0.25, 0.5, 0.75])
    degenerate = prod == 0
    breaks = np.concatenate([np.zeros((d1.size, 1)), th, inner, np.full((d1.size, 1), math.pi)], axis=1)
    breaks = np.where(np.isnan(breaks), 0.0, breaks)
    if np.any(degenerate):
        breaks[degenerate] = np.linspace(0.0, math.pi, breaks.shape[1])
    breaks = np.sort(breaks, axis=1)
    lo, hi = breaks[:, :-1], breaks[:, 1:]
    theta, w = _composite_nodes(lo, hi, order)
    theta = theta.reshape(d1.size, -1)
    w = w.reshape(d1.size, -1)
    D = np.sqrt(np.maximum(d1[:, None] ** 2 + d2[:, None] ** 2 - prod[:, None] * np.cos(theta), 0.0))
    Ab = np.broadcast_to(A[:, None], D.shape).ravel()
    Bb = np.broadcast_to(B[:, None], D.shape).ravel()
    g = _pass_given_geometry(Ab, Bb, D.ravel(), float(sigma1), float(sigma2), float(T)).reshape(D.shape)
    pt = np.clip(np.sum(w * g, axis=1) / math.pi, 0.0, 1.0)
    return pt.reshape(shape) if shape else float(pt[0])


def pair_rates(inp: PairRateInputs, tpr_model: str = "geometric") -> PairRates:
    """True and false positive rates of the pair test at ranges ``(r1, r2)``.

    ``p_f`` integrates the acceptance indicator against the distance law of
    two uniform AOI points.  ``p_t`` with ``tpr_model="geometric"`` treats the
    ranges as the landmark distances from the target and averages over the
    uniform bearing between the two landmarks and the measurement noise.
    ``tpr_model="shared"`` instead gives the true pair the same separation law
    as an arbitrary pair, so that ``p_t == p_f``.
    """
    pf = false_positive_rate(inp.r1, inp.r2, inp.sigma1, inp.sigma2, inp.T, inp.d_a)
    if tpr_model == "shared":
        return PairRates(pf, pf)
    if tpr_model != "geometric":
        raise ValueError(f"tpr_model must be one of {TPR_MODELS}")
    pt = true_positive_rate(inp.r1, inp.r2, inp.sigma1, inp.sigma2, inp.T)
    return PairRates(float(pt), float(pf))


# ---------------------------------------------------------------------------
# solution-set size and the conditional localizability

def solution_size_pmf(k: int, m: int, p_f: float, i_star: bool) -> float:
    """P[|S| = k | |C| = m, I*] with the m - 1 false combinations Bernoulli(p_f)."""
    if m < 1:
        raise ValueError("m must be at least 1")
    if not (0.0 <= p_f <= 1.0):
        raise ValueError("p_f must lie in [0, 1]")
    j = k - 1 if i_star else k
    n = m - 1
    if j < 0 or j > n:
        return 0.0
    if p_f == 0.0:
        return 1.0 if j == 0 else 0.0
    if p_f == 1.0:
        return 1.0 if j == n else 0.0
    return math.exp(log_binom(n, j) + j * math.log(p_f) + (n - j) * math.log1p(-p_f))


def _collapse(p_f, m):
    """(1 - (1 - p_f)^m) / (m p_f), equal to E[1 / (1 + Bin(m - 1, p_f))]."""
    p_f = np.asarray(p_f, dtype=float)
    m = np.asarray(m, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = -np.expm1(m * np.log1p(-p_f)) / (m * p_f)
    # p_f -> 0 limit via the series 1 - (m-1) p_f / 2
    small = p_f * m < 1e-8
    val = np.where(small, 1.0 - (m - 1.0) * p_f / 2.0, val)
    val = np.where(p_f >= 1.0, 1.0 / m, val)
    return val


def _collapse_twin(p_f, m):
    """E[1 / (2 + Bin(m - 2, p_f))] for a shared-mark pair.

    With two measurements of one mark the swapped tuple sees the same
    separation and the same ranges, so it passes exactly when the truth does.
    """
    p_f = np.asarray(p_f, dtype=float)
    m = np.asarray(m, dtype=float)
    n = np.maximum(m - 2.0, 0.0)
    q = 1.0 - p_f
    with np.errstate(divide="ignore", invalid="ignore"):
        log_q = np.log1p(-p_f)
        t1 = -np.expm1((n + 2.0) * log_q) / (n + 2.0)
        t2 = q * -np.expm1((n + 1.0) * log_q) / (n + 1.0)
        val = (t1 - t2) / (p_f * p_f)
    # binomial-moment series sum_k C(n, k) (-x)^k / ((k + 1)(k + 2)) where the closed form cancels
    small = n * p_f < 0.2
    ser = np.zeros(np.broadcast(p_f, n).shape)
    coef = np.ones_like(ser)
    for k in range(24):
        ser = ser + coef / ((k + 1.0) * (k + 2.0))
        coef = coef * (-(n - k) * p_f) / (k + 1.0)
    val = np.where(small, ser, val)
    val = np.where(p_f >= 1.0, 1.0 / np.maximum(m, 2.0), val)
    return np.where(m < 2, np.nan, val)


def localizability_conditional(p_t, p_f, m):
    """p_t (1 - (1 - p_f)^m) / (m p_f); the p_f = 0 limit is p_t.

    >>> round(localizability_conditional(0.9, 0.1, 10), 8)
    0.5861894
    """
    if np.any(np.asarray(m) < 1):
        raise ValueError("m must be at least 1")
    val = np.asarray(p_t, dtype=float) * _collapse(p_f, m)
    return val if val.ndim else float(val)


def range_density_given_marks(r1, r2, p: int, q: int, config: ScenarioConfig):
    """(2 r1 / d_p^2)(2 r2 / d_q^2) on (0, d_p] x (0, d_q]."""
    dp = config.visibility[int(p) - 1]
    dq = config.visibility[int(q) - 1]
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    f = (2 * r1 / dp**2) * (2 * r2 / dq**2)
    f = np.where((r1 > 0) & (r1 <= dp) & (r2 > 0) & (r2 <= dq), f, 0.0)
    return f if f.ndim else float(f)


@dataclass(frozen=True)
class JointPoint:
    r1: float
    r2: float
    p: int
    q: int
    n: int

    def __post_init__(self):
        if self.n < 0 or int(self.n) != self.n:
            raise ValueError("n must be a non-negative integer")


def joint_density(pt: JointPoint, config: ScenarioConfig) -> float:
    """Joint density of ranges, marks and |C| under the random policy.

    Product of the mark-pair law, the range density given marks and the
    combination-set size law given marks.  A shared mark uses the
    distinct-landmark extension ``|C| = N_p (N_p - 1)``.
    """
    f_r = range_density_given_marks(pt.r1, pt.r2, pt.p, pt.q, config)
    if f_r == 0.0:
        return 0.0
    w = mark_pair_pmf(pt.p, pt.q, config)
    if pt.p != pt.q:
        pn = comb_size_pmf_given_marks(pt.n, pt.p, pt.q, config)
    else:
        vals, probs, _ = comb_size_distribution(pt.p, pt.q, config)
        hit = np.flatnonzero(vals == pt.n)
        pn = float(probs[hit[0]]) if hit.size else 0.0
    return w * f_r * pn


# ---------------------------------------------------------------------------
# localizability under the random policy

@dataclass(frozen=True)
class AnalyticResult:
    """An analytic probability with its numerical error budget."""

    value: float
    error_budget: float
    details: dict = field(default_factory=dict)

    def __float__(self) -> float:
        return self.value


def _check_random(config: ScenarioConfig):
    validate_scenario(config)
    if config.policy != "random":
        raise PolicyError(NEAREST_POLICY_MESSAGE)


def _range_nodes(config: ScenarioConfig, order: int, step: float):
    dmax = float(config.visibility.max())
    n_uniform = max(1, int(math.ceil(dmax / step)))
    breaks = np.unique(np.concatenate([np.linspace(0.0, dmax, n_uniform + 1), config.visibility]))
    x, w = _composite_nodes(breaks[:-1], breaks[1:], order)
    return x.ravel(), w.ravel()


def _rate_grid(config, x, sig_p, sig_q, tpr_model):
    """p_t and p_f on the tensor grid x (rows: first range, columns: second)."""
    n = x.size
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    sym = sig_p == sig_q
    if sym:
        iu = np.triu_indices(n)
        r1, r2 = X1[iu], X2[iu]
    else:
        r1, r2 = X1.ravel(), X2.ravel()
    sig1 = 0.0 if config.noise_free else sig_p
    sig2 = 0.0 if config.noise_free else sig_q
    pf = np.asarray(false_positive_rate(r1, r2, sig1, sig2, config.threshold, config.aoi_radius))
    if tpr_model == "shared":
        pt = pf.copy()
    else:
        pt = np.asarray(true_positive_rate(r1, r2, sig1, sig2, config.threshold))
    if sym:
        PT = np.empty((n, n))
        PF = np.empty((n, n))
        PT[iu] = pt
        PF[iu] = pf
        PT.T[iu] = pt
        PF.T[iu] = pf
        return PT, PF
    return pt.reshape(n, n), pf.reshape(n, n)


def _g_table(vals: np.ndarray, xs: np.ndarray, twin: bool) -> np.ndarray:
    fn = _collapse_twin if twin else _collapse
    return np.asarray(fn(xs[None, :], vals[:, None].astype(float)))


def _expected_collapse(dists, xs, twins, chunk=2048):
    """H_k(x) = E_k[g(n, x)] on the grid ``xs`` for each count law k.

    g is the solution-set collapse factor, with the swapped twin for
    shared-mark laws.
    """
    H = np.zeros((len(dists), xs.size))
    for twin in (False, True):
        sel = [k for k in range(len(dists)) if twins[k] == twin]
        if not sel:
            continue
        all_vals = np.unique(np.concatenate([dists[k][0] for k in sel]))
        index = {int(v): i for i, v in enumerate(all_vals)}
        P = np.zeros((len(sel), all_vals.size))
        for row, k in enumerate(sel):
            v, p = dists[k]
            P[row, [index[int(t)] for t in v]] = p
        for start in range(0, all_vals.size, chunk):
            G = _g_table(all_vals[start:start + chunk], xs, twin)
            H[sel] += P[:, start:start + chunk] @ G
    return H


def _localizability_sum(config, order, step, tpr_model, count_law, n_x, twin_rule):
    M = config.mark_count
    x, w = _range_nodes(config, order, step)
    sig = config.noise_dev
    weights = mark_weights(config)
    pairs = [(p, q) for p in range(1, M + 1) for q in range(1, M + 1)]
    dists = []
    twins = [twin_rule and p == q and not config.allow_repeats for p, q in pairs]
    dropped = 0.0
    for k, (p, q) in enumerate(pairs):
        vals, probs, drop = count_law(p, q, config)
        keep = vals >= (2 if twins[k] else 1)
        dists.append((vals[keep], probs[keep]))
        dropped += weights[p - 1] * weights[q - 1] * drop
    grids: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]] = {}
    for p, q in pairs:
        key = (float(sig[p - 1]), float(sig[q - 1]))
        if key not in grids:
            grids[key] = _rate_grid(config, x, key[0], key[1], tpr_model)
    pf_max = max(float(g[1].max()) for g in grids.values())
    xs = np.linspace(0.0, max(pf_max, 1e-12) * (1 + 1e-9), n_x)
    H = _expected_collapse(dists, xs, twins)
    # interpolation check at grid midpoints for a few laws of each kind
    mids = 0.5 * (xs[1:] + xs[:-1])
    probe = sorted({0, 1, len(dists) // 2, len(dists) - 1})
    H_mid = _expected_collapse([dists[k] for k in probe], mids, [twins[k] for k in probe])
    interp_err = 0.0
    splines = [CubicSpline(xs, H[k]) for k in range(len(dists))]
    for j, k in enumerate(probe):
        interp_err = max(interp_err, float(np.max(np.abs(splines[k](mids) - H_mid[j]))))
    vis = config.visibility
    total = []
    for k, (p, q) in enumerate(pairs):
        PT, PF = grids[(float(sig[p - 1]), float(sig[q - 1]))]
        f1 = np.where(x <= vis[p - 1], 2 * x / vis[p - 1] ** 2, 0.0) * w
        f2 = np.where(x <= vis[q - 1], 2 * x / vis[q - 1] ** 2, 0.0) * w
        i1 = np.flatnonzero(f1)
        i2 = np.flatnonzero(f2)
        sub_pt = PT[np.ix_(i1, i2)]
        sub_pf = PF[np.ix_(i1, i2)]
        integrand = sub_pt * splines[k](sub_pf)
        total.append(weights[p - 1] * weights[q - 1] * float(f1[i1] @ integrand @ f2[i2]))
    return math.fsum(total), dropped, interp_err


def _analytic(config, count_law, order, check_order, step, tpr_model, n_x, label, twin_rule):
    if tpr_model not in TPR_MODELS:
        raise ValueError(f"tpr_model must be one of {TPR_MODELS}")
    v_hi, dropped, ierr = _localizability_sum(config, order, step, tpr_model, count_law, n_x, twin_rule)
    v_lo, _, _ = _localizability_sum(config, check_order, step, tpr_model, count_law, n_x, twin_rule)
    quad_err = abs(v_hi - v_lo)
    budget = quad_err + dropped + ierr
    return AnalyticResult(
        float(v_hi),
        float(budget),
        {
            "quantity": label,
            "quadrature_error": quad_err,
            "truncated_mass": dropped,
            "interpolation_error": ierr,
            "order": order,
            "check_order": check_order,
            "tpr_model": tpr_model,
        },
    )


def localizability_theorem1(
    config: ScenarioConfig,
    *,
    tpr_model: str = "geometric",
    order: int = 8,
    check_order: int = 6,
    step: float = 2.5,
    n_x: int = 1024,
) -> AnalyticResult:
    """Two-measurement localizability under the random policy.

    E[p_t (1 - (1 - p_f)^|C|) / (|C| p_f)] over the joint law of the two
    ranges, their marks and the combination-set size.  The range integral is
    a composite Gauss-Legendre rule with panel breaks at every visibility
    distance, and the expectation over |C| is tabulated as a function of
    p_f and interpolated.  The error budget adds the difference to a
    lower-order rule, the truncated count mass and the interpolation error.
    """
    _check_random(config)
    if config.n_measurements != 2:
        raise ValueError("the two-measurement formula needs n_measurements = 2")
    return _analytic(config, comb_size_distribution, order, check_order, step, tpr_model, n_x, "closed_form", True)


def localizability_upper_bound(
    config: ScenarioConfig,
    n_measurements: int | None = None,
    *,
    tpr_model: str = "geometric",
    order: int = 8,
    check_order: int = 6,
    step: float = 2.5,
    n_x: int = 512,
) -> AnalyticResult:
    """Upper bound on localizability with N >= 2 measurements.

    Same skeleton as :func:`localizability_theorem1`, but the count is the
    number of candidates for one landmark once all the others are known: the
    mark-``m_n`` landmarks in the AOI.
    """
    _check_random(config)
    n = config.n_measurements if n_measurements is None else int(n_measurements)
    if n < 2:
        raise ValueError("N ≥ 2 required")
    res = _analytic(config, partner_count_distribution, order, check_order, step, tpr_model, n_x, "upper_bound", False)
    res.details["n_measurements"] = n
    return res


def semi_empirical_localizability(config: ScenarioConfig, n_trials: int, workers: int = 1,
                                  *, offset: int = 0) -> AnalyticResult:
    """Localizability from empirical (p_t, r, |C|) samples for any policy.

    Runs the Monte Carlo harness and hands the outcomes to
    :func:`semi_empirical_from_outcomes`.
    """
    from .montecarlo import run_experiment

    validate_scenario(config)
    agg, outcomes = run_experiment(config, n_trials, workers, offset=offset, return_outcomes=True)
    return semi_empirical_from_outcomes(config, outcomes)


def semi_empirical_from_outcomes(config: ScenarioConfig, outcomes) -> AnalyticResult:
    """Plug empirical samples into the conditional localizability.

    p_t is the fraction of trials whose true combination survives; each
    trial then contributes the collapse factor at the analytic false positive
    rate of its first two ranges and its own |C| (with the swapped twin when
    both measurements share a mark).  The error budget is the standard error
    of the average combined with that of p_t.
    """
    outcomes = list(outcomes)
    n = len(outcomes)
    if n == 0:
        raise ValueError("no outcomes")
    ranges = np.array([o.ranges[:2] for o in outcomes], dtype=float)
    marks = np.array([o.marks[:2] for o in outcomes], dtype=np.int64)
    comb = np.array([o.comb_size for o in outcomes], dtype=float)
    sig = np.zeros_like(ranges) if config.noise_free else config.noise_dev[marks - 1]
    pf = np.asarray(false_positive_rate(ranges[:, 0], ranges[:, 1], sig[:, 0], sig[:, 1],
                                        config.threshold, config.aoi_radius))
    twin = (marks[:, 0] == marks[:, 1]) & (config.n_measurements == 2) & (not config.allow_repeats)
    vals = np.where(twin, _collapse_twin(pf, np.maximum(comb, 2)), _collapse(pf, np.maximum(comb, 1)))
    vals = np.where(comb >= 1, vals, 0.0)
    hits = [float(o.contains_truth) for o in outcomes]
    pt = math.fsum(hits) / n
    pt_se = math.sqrt(pt * (1 - pt) / n)
    mean_h = math.fsum(vals) / n
    sd_h = float(np.std(vals, ddof=1)) if n > 1 else 0.0
    se = math.sqrt((pt * sd_h) ** 2 / n + (mean_h * pt_se) ** 2)
    return AnalyticResult(pt * mean_h, se, {"quantity": "semi_empirical", "tpr": pt, "trials": n})


# ---------------------------------------------------------------------------
# curves

def analytic_curve(configs: Sequence[ScenarioConfig], fn: Callable = localizability_theorem1, **kw):
    """Rows ``(density, value, error_budget)`` with density in expected landmarks per AOI."""
    rows = []
    for cfg in configs:
        res = fn(cfg, **kw)
        rows.append((cfg.expected_landmarks, res.value, res.error_budget))
    return rows


def curve_to_csv(rows, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["density", "value", "error_budget"])
    for d, v, e in rows:
        w.writerow([repr(float(d)), repr(float(v)), repr(float(e))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
