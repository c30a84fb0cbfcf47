"""Independent reference computations used by the tests.

Nothing here imports the sampling or observation code: the simulations are
written directly against the geometric model so they can serve as oracles.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate
from scipy.stats import multivariate_normal


def rectangle_quadrature(r1, r2, s1, s2, d):
    """P[W <= r1+r2-d, r1-r2-d <= V <= r1-r2+d] by 2D quadrature over (n1, n2).

    W = n1 + n2 and V = n1 - n2 with independent n_i ~ N(0, s_i^2), so the
    region is a polygon in the (n1, n2) plane; integrate n2 for each n1.
    """
    a, b1, b2 = r1 + r2 - d, r1 - r2 - d, r1 - r2 + d

    def inner(n1):
        # n2 <= a - n1 and n1 - b2 <= n2 <= n1 - b1
        lo, hi = n1 - b2, min(a - n1, n1 - b1)
        if hi <= lo:
            return 0.0
        from scipy.special import ndtr
        return (ndtr(hi / s2) - ndtr(lo / s2)) * math.exp(-0.5 * (n1 / s1) ** 2) / (s1 * math.sqrt(2 * math.pi))

    lim = 12 * s1
    brk = sorted({max(-lim, min(lim, x)) for x in ((a + b1) / 2, (a + b2) / 2, 0.0)})
    pts = [-lim] + brk + [lim]
    total = 0.0
    for u, v in zip(pts[:-1], pts[1:]):
        if v > u:
            total += integrate.quad(inner, u, v, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    return total


def rectangle_mvn(r1, r2, s1, s2, d):
    """Same probability from scipy's multivariate normal CDF (looser accuracy)."""
    s = s1 * s1 + s2 * s2
    cov = [[s, s1 * s1 - s2 * s2], [s1 * s1 - s2 * s2, s]]
    mvn = multivariate_normal(mean=[0, 0], cov=cov)
    a, b1, b2 = r1 + r2 - d, r1 - r2 - d, r1 - r2 + d
    return mvn.cdf([a, b2]) - mvn.cdf([a, b1])


def simulate_comb_sizes(densities, visibility, aoi_radius, n_trials, seed, chunk=20000,
                        target_tries=100):
    """Marks of two distinct uniformly chosen visible landmarks and |C| per trial.

    Geometry from scratch: Poisson counts per mark, uniform positions on the
    AOI disk, a uniform target on the core disk, re-drawn on the same map up
    to ``target_tries`` times until two landmarks are visible (a fresh map
    otherwise).  Returns ``(p, q, comb)`` arrays.
    """
    rng = np.random.default_rng(seed)
    lam = np.asarray(densities, dtype=float)
    vis = np.asarray(visibility, dtype=float)
    M = lam.size
    core = aoi_radius - vis.max()
    out_p, out_q, out_c = [], [], []
    done = 0
    while done < n_trials:
        B = chunk
        K = rng.poisson(lam * math.pi * aoi_radius**2, size=(B, M))
        tot = K.sum(axis=1)
        kmax = int(tot.max())
        slot = np.arange(kmax)
        valid = slot[None, :] < tot[:, None]
        # mark of each slot: marks laid out in increasing order per trial
        edges = np.cumsum(K, axis=1)
        marks = (slot[None, :, None] >= edges[:, None, :]).sum(axis=2)  # 0-based
        marks = np.minimum(marks, M - 1)
        rad = aoi_radius * np.sqrt(rng.random((B, kmax)))
        ang = 2 * math.pi * rng.random((B, kmax))
        px, py = rad * np.cos(ang), rad * np.sin(ang)
        reach = vis[marks]
        ok = np.zeros(B, dtype=bool)
        seen = np.zeros((B, kmax), dtype=bool)
        for _ in range(target_tries):
            idx = np.flatnonzero(~ok)
            if idx.size == 0:
                break
            tr = core * np.sqrt(rng.random(idx.size))
            ta = 2 * math.pi * rng.random(idx.size)
            tx, ty = tr * np.cos(ta), tr * np.sin(ta)
            d = np.hypot(px[idx] - tx[:, None], py[idx] - ty[:, None])
            s = valid[idx] & (d <= reach[idx])
            good = s.sum(axis=1) >= 2
            seen[idx[good]] = s[good]
            ok[idx[good]] = True
        keep = np.flatnonzero(ok)
        key = np.where(seen[keep], rng.random((keep.size, kmax)), np.inf)
        two = np.argsort(key, axis=1)[:, :2]
        mk = marks[keep]
        p = np.take_along_axis(mk, two, axis=1)
        Kk = K[keep]
        n1 = np.take_along_axis(Kk, p[:, :1], axis=1)[:, 0]
        n2 = np.take_along_axis(Kk, p[:, 1:], axis=1)[:, 0]
        comb = np.where(p[:, 0] == p[:, 1], n1 * (n1 - 1), n1 * n2)
        out_p.append(p[:, 0] + 1)
        out_q.append(p[:, 1] + 1)
        out_c.append(comb)
        done += keep.size
    p = np.concatenate(out_p)[:n_trials]
    q = np.concatenate(out_q)[:n_trials]
    c = np.concatenate(out_c)[:n_trials]
    return p, q, c


def disk_pair_distances(n, radius, seed, chunk=1_000_000):
    """Distances between ``n`` pairs of i.i.d. uniform points on a disk."""
    rng = np.random.default_rng(seed)
    out = []
    left = n
    while left > 0:
        k = min(chunk, left)
        r = radius * np.sqrt(rng.random((k, 2)))
        a = 2 * math.pi * rng.random((k, 2))
        x = r * np.cos(a)
        y = r * np.sin(a)
        out.append(np.hypot(x[:, 0] - x[:, 1], y[:, 0] - y[:, 1]))
        left -= k
    return np.concatenate(out)
