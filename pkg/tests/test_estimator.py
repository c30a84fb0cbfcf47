import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from landmarkloc.estimator import TriangleConstraintLocalizer
from landmarkloc.model import grid_scenario
from landmarkloc.observation import measure, select_observed, visible_landmarks
from landmarkloc.sampling import sample_conditioned
from landmarkloc.streams import RngStream


def _scene(seed, noise_free=False):
    cfg = grid_scenario("medium", 100, noise_free=noise_free)
    st = RngStream(seed, 0)
    m, t, _ = sample_conditioned(cfg, st, 3)
    ids = select_observed(visible_landmarks(m, t, cfg), "random", 3, st)
    return cfg, m, measure(t, m, ids, cfg, st), t


def test_params_and_clone():
    est = TriangleConstraintLocalizer(threshold=0.3, random_state=4)
    assert est.get_params() == {"threshold": 0.3, "allow_repeats": False, "random_state": 4}
    assert clone(est).get_params() == est.get_params()


def test_requires_fit_and_map():
    _, _, obs, _ = _scene(1)
    with pytest.raises(NotFittedError):
        TriangleConstraintLocalizer().predict([obs])
    with pytest.raises(TypeError):
        TriangleConstraintLocalizer().fit(np.zeros((3, 2)))
    _, m, _, _ = _scene(1)
    with pytest.raises(ValueError):
        TriangleConstraintLocalizer(threshold=2.0).fit(m)


def test_noise_free_prediction_recovers_target():
    _, m, obs, target = _scene(5, noise_free=True)
    est = TriangleConstraintLocalizer(random_state=0).fit(m)
    sol = est.solution_set(obs)
    assert sol.contains_truth
    if len(sol) == 1:
        assert est.score([obs]) == 1.0
        assert np.allclose(est.predict([obs])[0], target, atol=1e-6)


def test_predict_shape_and_determinism():
    _, m, obs, _ = _scene(8)
    a = TriangleConstraintLocalizer(random_state=3).fit(m).predict([obs, obs])
    b = TriangleConstraintLocalizer(random_state=3).fit(m).predict([obs, obs])
    assert a.shape == (2, 2)
    assert np.array_equal(a, b, equal_nan=True)
