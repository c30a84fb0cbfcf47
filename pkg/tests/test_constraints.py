import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr
from scipy.stats import multivariate_normal

from oracles import rectangle_mvn, rectangle_quadrature

from landmarkloc.bvn import bvn_cdf
from landmarkloc.constraints import (
    DistanceCache,
    acceptance_interval,
    acceptance_interval_array,
    build_combination_set,
    combination_count,
    estimate_combination,
    estimate_position,
    filter_solution_set,
    pair_constraint,
    ranges_consistent,
    triangle_probability,
    triangle_probability_array,
)
from landmarkloc.model import MarkedMap, ObservationSet, grid_scenario
from landmarkloc.montecarlo import run_trial
from landmarkloc.observation import measure, select_observed, visible_landmarks
from landmarkloc.sampling import sample_map, sample_target
from landmarkloc.streams import RngStream

pos = st.floats(0.0, 60.0)
sig = st.floats(0.0, 2.0)


def test_examples():
    assert triangle_probability(1, 1, 0, 0, 1) == 1.0
    assert triangle_probability(1, 1, 0.3, 0.3, 5) < 1e-6
    assert abs(triangle_probability(10, 7, 0.3, 0.5, 4) - rectangle_quadrature(10, 7, 0.3, 0.5, 4)) <= 1e-6


def test_domain_errors():
    with pytest.raises(ValueError):
        triangle_probability(-1, 1, 0.3, 0.3, 1)
    with pytest.raises(ValueError):
        triangle_probability_array([1, 2], 1, 0.3, -0.3, 1)


@pytest.mark.parametrize("r1, r2, s1, s2, d", [
    (10, 7, 0.3, 0.5, 4), (20, 20, 0.3, 0.3, 39.8), (5, 30, 1.0, 0.1, 25.2),
    (12, 12, 0.5, 0.2, 0.3), (8, 3, 0.0, 0.7, 5.1), (8, 3, 0.7, 0.0, 10.9),
])
def test_scalar_and_array_paths_agree_with_quadrature(r1, r2, s1, s2, d):
    ref = rectangle_quadrature(r1, r2, s1, s2, d) if s1 > 0 and s2 > 0 else None
    a = triangle_probability(r1, r2, s1, s2, d)
    b = triangle_probability_array(r1, r2, s1, s2, d)
    assert abs(a - b) <= 1e-10
    if ref is not None:
        assert abs(a - ref) <= 1e-7
        assert abs(a - rectangle_mvn(r1, r2, s1, s2, d)) <= 1e-5


@settings(max_examples=200, deadline=None)
@given(pos, pos, sig, sig, pos)
def test_swap_symmetry(r1, r2, s1, s2, d):
    a = triangle_probability_array(r1, r2, s1, s2, d)
    b = triangle_probability_array(r2, r1, s2, s1, d)
    assert abs(a - b) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(pos, pos, sig, sig, pos)
def test_is_probability(r1, r2, s1, s2, d):
    p = triangle_probability_array(r1, r2, s1, s2, d)
    assert 0.0 <= p <= 1.0


@settings(max_examples=100, deadline=None)
@given(st.floats(1, 50), st.floats(1, 50), st.floats(0, 1))
def test_small_noise_limit_is_indicator(r1, r2, u):
    lo, hi = abs(r1 - r2), r1 + r2
    margin = 1e-3 * (hi - lo)
    d = lo + margin + u * (hi - lo - 2 * margin)
    assert triangle_probability(r1, r2, 1e-7, 1e-7, d) == pytest.approx(1.0, abs=1e-6)
    assert triangle_probability(r1, r2, 1e-7, 1e-7, hi + 10 * margin + 1e-3) < 1e-6


def test_exact_indicator_tolerance():
    assert triangle_probability(3, 4, 0, 0, 7 * (1 + 5e-10)) == 1.0
    assert triangle_probability(3, 4, 0, 0, 7 * (1 + 1e-6)) == 0.0


def test_bvn_against_scipy():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x, y = rng.uniform(-4, 4, 2)
        r = rng.uniform(-0.99, 0.99)
        ref = multivariate_normal(cov=[[1, r], [r, 1]]).cdf([x, y])
        assert abs(bvn_cdf(x, y, r) - ref) <= 2e-6


def test_acceptance_interval_brackets_threshold():
    lo, hi = acceptance_interval(20, 20, 0.3, 0.3, 0.2)
    assert triangle_probability(20, 20, 0.3, 0.3, lo) == pytest.approx(0.2, abs=1e-9)
    assert triangle_probability(20, 20, 0.3, 0.3, hi) == pytest.approx(0.2, abs=1e-9)
    assert triangle_probability(20, 20, 0.3, 0.3, 0.5 * (lo + hi)) > 0.2
    # threshold dominance needs a peak below 1 - 1e-12; at 20 m ranges the peak is within 1e-400 of 1
    assert acceptance_interval(1, 1, 0.3, 0.3, 1 - 1e-12) is None


@settings(max_examples=60, deadline=None)
@given(st.floats(1, 40), st.floats(1, 40), st.floats(0.05, 1), st.floats(0.05, 1), st.floats(0.05, 0.95))
def test_acceptance_set_is_the_interval(r1, r2, s1, s2, T):
    lo, hi = acceptance_interval_array(r1, r2, s1, s2, T)
    d = np.linspace(0, r1 + r2 + 10, 400)
    inside = triangle_probability_array(r1, r2, s1, s2, d) >= T
    if np.isnan(lo):
        assert not inside.any()
        return
    pred = (d >= lo) & (d <= hi)
    # allow disagreement only within bisection precision of the crossings
    near = (np.abs(d - lo) < 1e-6) | (np.abs(d - hi) < 1e-6)
    assert np.all((inside == pred) | near)


def test_combination_counts():
    pts = np.arange(14, dtype=float).reshape(7, 2)
    m = MarkedMap(pts, np.array([1, 1, 1, 2, 2, 2, 2]), 100.0)
    assert combination_count(m, [1, 2]) == 12
    assert len(list(build_combination_set(m, [1, 2]))) == 12
    assert combination_count(m, [1, 1]) == 6
    assert len(list(build_combination_set(m, [1, 1]))) == 6
    assert combination_count(m, [1, 1], allow_repeats=True) == 9
    assert combination_count(m, [5]) == 0
    assert list(build_combination_set(m, [5])) == []


def _grid_obs(seed, n, noise_free=False, policy="random"):
    cfg = grid_scenario("medium", 300, n_measurements=n, noise_free=noise_free, policy=policy)
    for i in range(1000):
        s = RngStream(seed, i)
        m = sample_map(cfg, s)
        t = sample_target(cfg, s)
        vis = visible_landmarks(m, t, cfg)
        if len(vis) >= n:
            ids = select_observed(vis, policy, n, s)
            return cfg, m, measure(t, m, ids, cfg, s)
    raise AssertionError("no observation")


def _brute_force(m, obs, T):
    keep = []
    for comb in build_combination_set(m, obs.marks):
        ids = list(comb)
        ok = True
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                d = math.dist(m.positions[ids[i]], m.positions[ids[j]])
                if triangle_probability(obs.ranges[i], obs.ranges[j], obs.noise_dev[i], obs.noise_dev[j], d) < T:
                    ok = False
        if ok:
            keep.append(tuple(ids))
    return keep


@pytest.mark.parametrize("seed, n", [(1, 2), (2, 2), (3, 3), (4, 3)])
def test_filter_equals_all_pairs_brute_force(seed, n):
    _, m, obs = _grid_obs(seed, n)
    sol = filter_solution_set(m, obs, 0.2)
    got = sorted(tuple(int(i) for i in r) for r in sol.combinations)
    assert got == sorted(_brute_force(m, obs, 0.2))
    assert sol.comb_size == combination_count(m, obs.marks)
    assert sol.contains_truth == (tuple(obs.true_combination) in set(got))


def test_threshold_zero_keeps_everything():
    _, m, obs = _grid_obs(5, 2)
    sol = filter_solution_set(m, obs, 0.0)
    assert len(sol) == sol.comb_size


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 50), st.floats(0.01, 0.5), st.floats(0.0, 0.5))
def test_threshold_monotone(seed, t1, dt):
    _, m, obs = _grid_obs(100 + seed, 2)
    cache = DistanceCache(m)
    lo = {tuple(r) for r in filter_solution_set(m, obs, t1, cache=cache).combinations.tolist()}
    hi = {tuple(r) for r in filter_solution_set(m, obs, min(t1 + dt, 1.0), cache=cache).combinations.tolist()}
    assert hi <= lo


def test_n3_is_intersection_of_pair_filters():
    _, m, obs = _grid_obs(8, 3)
    full = {tuple(r) for r in filter_solution_set(m, obs, 0.2).combinations.tolist()}
    pairs = {}
    for i, j in ((0, 1), (0, 2), (1, 2)):
        sub = ObservationSet(obs.ranges[[i, j]], obs.marks[[i, j]], obs.noise_dev[[i, j]],
                             obs.true_combination[[i, j]], obs.target)
        pairs[(i, j)] = {tuple(r) for r in filter_solution_set(m, sub, 0.2).combinations.tolist()}
    expect = {c for c in build_combination_set(m, obs.marks)
              if all((c.landmark_ids[i], c.landmark_ids[j]) in pairs[(i, j)] for i, j in pairs)}
    assert full == {c.landmark_ids for c in expect}


def test_decoy_at_range_sum_retained():
    # decoy pair exactly r1 + r2 apart: W-constraint sits at its median
    m = MarkedMap(np.array([[0.0, 0.0], [-8.0, 0.0], [12.0, 0.0], [0.0, 7.0]]), np.array([1, 2, 2, 2]), 100.0)
    obs = ObservationSet([8.0, 12.0], [1, 2], [0.3, 0.3], [0, 3], [0.0, 0.0])
    ref = rectangle_quadrature(8.0, 12.0, 0.3, 0.3, 20.0)
    assert abs(ref - 0.5) < 1e-6
    assert pair_constraint(8.0, 12.0, 0.3, 0.3, 20.0, 0.2).satisfied
    sol = filter_solution_set(m, obs, 0.2)
    assert (0, 2) in {tuple(r) for r in sol.combinations.tolist()}


def test_estimate_combination():
    from landmarkloc.constraints import SolutionSet

    one = SolutionSet(np.array([[3, 4]]), np.array([0.9]), True, 5)
    assert estimate_combination(one).landmark_ids == (3, 4)
    empty = SolutionSet(np.zeros((0, 2), dtype=np.int64), np.zeros(0), False, 5)
    assert estimate_combination(empty) is None
    four = SolutionSet(np.array([[0, 1], [0, 2], [1, 2], [2, 1]]), np.ones(4), True, 6)
    rng = np.random.default_rng(3)
    n = 100_000
    hits = sum(estimate_combination(four, rng).landmark_ids == (0, 1) for _ in range(n))
    assert abs(hits / n - 0.25) <= 3 * math.sqrt(0.25 * 0.75 / n)


def test_position_exact_trilateration():
    m = MarkedMap(np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]]), np.array([1, 2, 3]), 50.0)
    r = np.hypot(*(m.positions - [3.0, 4.0]).T)
    obs = ObservationSet(r, [1, 2, 3], np.zeros(3), [0, 1, 2], [3.0, 4.0])
    est = estimate_position((0, 1, 2), m, obs)
    assert est.status == "ok" and np.allclose(est.point, [3.0, 4.0], atol=1e-6)


def test_position_tangent_and_disjoint():
    m = MarkedMap(np.array([[0.0, 0.0], [10.0, 0.0]]), np.array([1, 2]), 50.0)
    obs = ObservationSet([5.0, 5.0], [1, 2], np.zeros(2), [0, 1], [5.0, 0.0])
    est = estimate_position((0, 1), m, obs)
    assert est.status == "degenerate-tangent" and np.allclose(est.point, [5.0, 0.0])
    far = ObservationSet([2.0, 3.0], [1, 2], np.zeros(2), [0, 1], [5.0, 0.0])
    est = estimate_position((0, 1), m, far)
    assert est.status == "degenerate" and np.allclose(est.point, [4.5, 0.0])


def test_position_rmse_under_noise():
    errs = []
    for i in range(300):
        cfg, m, obs = _grid_obs(600 + i, 3)
        est = estimate_position(obs.true_combination, m, obs)
        errs.append(np.sum((est.point - obs.target) ** 2))
    assert math.sqrt(np.mean(errs)) < 3 * 0.3 * 10


def test_noise_free_truth_always_survives_and_is_consistent():
    for seed in range(30):
        _, m, obs = _grid_obs(900 + seed, 3, noise_free=True)
        sol = filter_solution_set(m, obs, 0.2)
        assert sol.contains_truth
        consistent = [tuple(r) for r in sol.combinations.tolist() if ranges_consistent(r, m, obs.ranges)]
        assert consistent == [tuple(obs.true_combination)]


def test_threshold_zero_trial_is_uniform_pick():
    # with T = 0 nothing is filtered, so localizability is E[1 / |C|]
    cfg = grid_scenario("medium", 100).replace(threshold=0.0)
    outs = [run_trial(cfg, i) for i in range(3000)]
    assert all(o.sol_size == o.comb_size for o in outs)
    hit = np.mean([o.picked_correct for o in outs])
    expect = np.mean([1.0 / o.comb_size for o in outs])
    assert abs(hit - expect) <= 3 * math.sqrt(expect * (1 - expect) / len(outs))


def test_unequal_sigma_uses_normal_interval_when_one_is_zero():
    # s2 = 0: V and W move together with n1, so the event is an n1-interval
    r1, r2, d = 9.0, 4.0, 6.0
    a, b1, b2 = r1 + r2 - d, r1 - r2 - d, r1 - r2 + d
    ref = ndtr(min(a, b2) / 0.4) - ndtr(b1 / 0.4)
    assert triangle_probability(r1, r2, 0.4, 0.0, d) == pytest.approx(ref, abs=1e-15)
