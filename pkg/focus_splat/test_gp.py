import math

import numpy as np
import pytest
from scipy import linalg

from focus_splat.errors import GpFactorizationError
from focus_splat.gp import argmax_by_id, gp_fit, gp_predict, gp_predict_many, ucb


def test_single_pair_interpolated():
    gp = gp_fit([[0.3, -0.2]], [2.0])
    mean, variance = gp_predict(gp, [0.3, -0.2])

    # σ_f² = 4, σ_n² = 4e-4
    assert gp.signal_variance == pytest.approx(4.0)
    assert gp.noise_variance == pytest.approx(4e-4)
    assert abs(mean - 2.0) <= 3 * math.sqrt(gp.noise_variance)
    assert 0.0 <= variance <= gp.noise_variance + 1e-9


def test_far_point_reverts_to_prior():
    gp = gp_fit([[0.0, 0.0], [0.5, 0.0]], [1.0, 3.0])
    mean, variance = gp_predict(gp, [10.0, 10.0])
    assert mean == pytest.approx(0.0, abs=1e-6)
    assert variance == pytest.approx(gp.signal_variance, abs=1e-6)


def test_symmetric_midpoint():
    gp = gp_fit([[-1.0, 0.5], [1.0, 0.5]], [-0.7, 0.7])
    mean, _ = gp_predict(gp, [0.0, 0.5])
    assert mean == pytest.approx(0.0, abs=1e-9)


def test_duplicate_inputs_conflicting_targets():
    gp = gp_fit([[0.0], [0.0]], [1.0, 3.0])
    mean, variance = gp_predict(gp, [0.0])
    assert 1.0 < mean < 3.0
    assert mean == pytest.approx(2.0, abs=1e-3)
    assert variance >= 0.0


def test_better_than_constant_predictor():
    train = np.linspace(-3.0, 3.0, 20)
    held_out = (train[:-1] + train[1:]) / 2.0
    held_out = np.append(held_out, 0.05)
    f = lambda x: np.sin(x) + 0.3 * x
    gp = gp_fit(train[:, None], f(train))
    mean, variance = gp_predict_many(gp, held_out[:, None])

    rmse_gp = math.sqrt(np.mean((mean - f(held_out)) ** 2))
    rmse_const = math.sqrt(np.mean((f(train).mean() - f(held_out)) ** 2))
    assert rmse_gp < rmse_const
    assert np.all(variance >= 0.0)
    assert gp.clamp_count == 0


def test_deterministic_fit(rng):
    x = rng.normal(size=(12, 9))
    y = rng.uniform(size=12)
    a = gp_predict_many(gp_fit(x, y), x)
    b = gp_predict_many(gp_fit(x.copy(), y.copy()), x)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1], b[1])


def test_noise_free_exact_at_training_rows(rng):
    x = rng.normal(size=(6, 6))
    y = rng.uniform(size=6)
    gp = gp_fit(x, y, noise_free=True)
    mean, variance = gp_predict_many(gp, x)
    assert np.array_equal(mean, y)
    assert np.array_equal(variance, np.zeros(6))


def test_noise_free_lookup_by_id_with_identical_features():
    # deux vues de mêmes caractéristiques mais de gains différents
    x = [[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]
    gp = gp_fit(x, [1.0, 3.0, 2.0], noise_free=True, ids=[4, 9, 2])
    mean, variance = gp_predict_many(gp, x, ids=[4, 9, 2])
    assert mean.tolist() == [1.0, 3.0, 2.0]
    assert variance.tolist() == [0.0, 0.0, 0.0]
    mean, _ = gp_predict_many(gp, [[0.0, 0.0], [0.0, 0.0]], ids=[9, 4])
    assert mean.tolist() == [3.0, 1.0]


def test_noise_free_duplicate_ids_rejected():
    with pytest.raises(ValueError):
        gp_fit([[0.0], [1.0]], [1.0, 2.0], noise_free=True, ids=[3, 3])


def test_signal_variance_is_mean_square():
    # moyenne des carrés (a priori de moyenne nulle), pas la variance centrée
    gp = gp_fit([[0.0], [5.0]], [2.0, 2.0])
    assert gp.signal_variance == pytest.approx(4.0)
    assert gp.noise_variance == pytest.approx(4e-4)


def test_dimension_mismatch():
    gp = gp_fit([[0.0] * 9], [1.0])
    with pytest.raises(ValueError):
        gp_predict(gp, [0.0] * 6)


def test_empty_training_set():
    with pytest.raises(ValueError):
        gp_fit(np.zeros((0, 3)), [])


def test_factorization_failure_reported(monkeypatch):
    def refuse(*args, **kwargs):
        raise linalg.LinAlgError("non défini positif")

    monkeypatch.setattr(linalg, "cho_factor", refuse)
    with pytest.raises(GpFactorizationError) as info:
        gp_fit([[0.0], [1.0]], [1.0, 2.0])
    assert info.value.condition is not None
    assert info.value.condition >= 1.0


def test_signal_variance_floor():
    gp = gp_fit([[0.0]], [0.0])
    assert gp.signal_variance == pytest.approx(1e-6)


def test_ucb():
    mean = np.array([0.1, 0.2])
    variance = np.array([0.04, 0.0])
    assert np.allclose(ucb(mean, variance, 1.0), [0.3, 0.2])
    assert np.allclose(ucb(mean, variance, 0.0), mean)


def test_argmax_ties_resolved_by_id():
    # Écart inférieur à la tolérance : ex aequo, le plus petit identifiant gagne
    values = [1.0, 1.0 + 1e-13, 0.5]
    assert argmax_by_id(values, [5, 3, 1]) == 1
    assert argmax_by_id([1.0, 2.0, 2.0], [1, 9, 4]) == 2
    assert argmax_by_id([3.0, 1.0], [7, 2]) == 0
