import math

import numpy as np
import pytest

from almab_env import SearchBox
from almab_errors import InputError, NumericalError
from almab_surrogate import GpSettings, gp_fit, gp_predict, gp_predict_batch, rbf_kernel, rbf_matrix


def test_rbf_kernel_values():
    assert rbf_kernel([0.3, 0.1], [0.3, 0.1], 0.5, 2.5) == 2.5
    assert rbf_kernel([0.0], [0.2], 0.2, 1.0) == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert rbf_kernel([0.0], [0.2], 0.2, 1.0) == pytest.approx(0.60653, abs=1e-5)


def test_rbf_kernel_symmetry_and_errors():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = rng.normal(size=3), rng.normal(size=3)
        assert rbf_kernel(a, b, 0.7, 1.3) == rbf_kernel(b, a, 0.7, 1.3)
    with pytest.raises(InputError):
        rbf_kernel([0.0], [0.0, 1.0], 0.2, 1.0)
    with pytest.raises(InputError):
        rbf_kernel([0.0], [1.0], 0.0, 1.0)


def test_single_point_interpolation():
    m = gp_fit([[0.0]], [2.0], 0.2, 1.0, 0.0)
    mean, var = gp_predict(m, [0.0])
    assert mean == pytest.approx(2.0, abs=1e-12)
    assert var <= 1e-8


def test_duplicate_rows_without_noise_fail():
    with pytest.raises(NumericalError):
        gp_fit([[0.1], [0.1]], [1.0, 2.0], 0.2, 1.0, 0.0)


def test_near_duplicate_rows_need_jitter():
    m = gp_fit([[0.1], [0.1 + 1e-9]], [1.0, 1.0], 0.2, 1.0, 0.0)
    assert m.jitter == 1e-10


def test_two_point_model_matches_explicit_inverse():
    X = np.array([[0.0], [0.3]])
    y = np.array([1.0, -0.5])
    ell, s2, sn2 = 0.2, 1.3, 0.01
    m = gp_fit(X, y, ell, s2, sn2)
    K = np.array([[rbf_kernel(a, b, ell, s2) for b in X] for a in X]) + sn2 * np.eye(2)
    Kinv = np.linalg.inv(K)
    for q in np.linspace(-0.5, 1.0, 31):
        ks = np.array([rbf_kernel([q], x, ell, s2) for x in X])
        mean, var = gp_predict(m, [q])
        assert mean == pytest.approx(ks @ Kinv @ y, abs=1e-10)
        assert var == pytest.approx(max(s2 - ks @ Kinv @ ks, 0.0), abs=1e-10)


def test_interpolates_training_points_without_noise():
    X = np.array([[0.0], [0.5], [1.0]])
    y = np.array([0.3, -1.2, 0.8])
    m = gp_fit(X, y, 0.2, 1.0, 0.0)
    mean, var = gp_predict_batch(m, X)
    np.testing.assert_allclose(mean, y, atol=1e-8)
    assert np.all(var <= 1e-8)


def test_prior_recovered_far_from_data():
    m = gp_fit([[0.0], [0.2]], [1.0, 2.0], 0.1, 1.7, 1e-4)
    mean, var = gp_predict(m, [1.0 + 10 * 0.1])
    assert abs(mean) < 1e-6
    assert var == pytest.approx(1.7, abs=1e-6)


def test_batch_predict_equals_pointwise():
    rng = np.random.default_rng(1)
    X = rng.uniform(0, 1, size=(12, 2))
    m = gp_fit(X, rng.normal(size=12), 0.3, 1.0, 1e-2)
    Q = rng.uniform(0, 1, size=(40, 2))
    mean, var = gp_predict_batch(m, Q)
    for i, q in enumerate(Q):
        mu, v = gp_predict(m, q)
        assert mu == pytest.approx(mean[i], abs=1e-11)
        assert v == pytest.approx(var[i], abs=1e-11)


def test_cholesky_factor_reconstructs_kernel():
    rng = np.random.default_rng(2)
    X = rng.uniform(0, 1, size=(15, 2))
    m = gp_fit(X, rng.normal(size=15), 0.25, 1.2, 1e-3)
    K = rbf_matrix(X, X, 0.25, 1.2) + 1e-3 * np.eye(15)
    L = m.chol_factor
    assert np.allclose(L, np.tril(L))
    assert np.linalg.norm(L @ L.T - K) < 1e-8


def test_variance_never_negative():
    rng = np.random.default_rng(3)
    for _ in range(5):
        X = rng.uniform(0, 1, size=(20, 1))
        m = gp_fit(X, rng.normal(size=20), 0.2, 1.0, 1e-6)
        _, var = gp_predict_batch(m, rng.uniform(-0.2, 1.2, size=(2000, 1)))
        assert np.all(var >= 0.0)


def test_adding_a_point_never_increases_variance():
    rng = np.random.default_rng(4)
    for _ in range(20):
        X = rng.uniform(0, 1, size=(8, 1))
        y = rng.normal(size=8)
        q = rng.uniform(0, 1, size=(5, 1))
        _, v0 = gp_predict_batch(gp_fit(X, y, 0.2, 1.0, 1e-4), q)
        X1 = np.vstack([X, rng.uniform(0, 1, size=(1, 1))])
        _, v1 = gp_predict_batch(gp_fit(X1, np.append(y, 0.0), 0.2, 1.0, 1e-4), q)
        assert np.all(v1 <= v0 + 1e-9)


def test_kernel_matrix_is_psd():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(30, 3))
    K = rbf_matrix(X, X, 0.8, 1.0) + 1e-4 * np.eye(30)
    assert np.linalg.eigvalsh(K).min() >= -1e-9


def test_translation_invariance():
    rng = np.random.default_rng(6)
    X = rng.uniform(0, 1, size=(10, 2))
    y = rng.normal(size=10)
    Q = rng.uniform(0, 1, size=(20, 2))
    shift = np.array([1.5, -0.75])
    m0, v0 = gp_predict_batch(gp_fit(X, y, 0.3, 1.0, 1e-2), Q)
    m1, v1 = gp_predict_batch(gp_fit(X + shift, y, 0.3, 1.0, 1e-2), Q + shift)
    np.testing.assert_allclose(m0, m1, atol=1e-10)
    np.testing.assert_allclose(v0, v1, atol=1e-10)


def test_standardized_normalized_fit_predicts_in_original_units():
    box = SearchBox((0.0,), (10.0,))
    X = np.array([[1.0], [4.0], [7.0], [9.0]])
    y = np.array([100.0, 104.0, 98.0, 101.0])
    m = GpSettings(lengthscale=0.3, signal_var=1.0, noise_var=1e-6).fit(X, y, box)
    assert m.bounds == box
    assert m.y_mean == pytest.approx(y.mean())
    mean, _ = gp_predict_batch(m, X)
    np.testing.assert_allclose(mean, y, atol=1e-3)
    far_mean, far_var = gp_predict(m, [10.0 + 40.0])
    assert far_mean == pytest.approx(y.mean(), abs=1e-6)
    assert far_var == pytest.approx(y.std() ** 2, rel=1e-6)


def test_fit_argument_errors():
    with pytest.raises(InputError):
        gp_fit(np.zeros((0, 1)), [], 0.2, 1.0, 0.1)
    with pytest.raises(InputError):
        gp_fit([[0.0], [1.0]], [1.0], 0.2, 1.0, 0.1)
    with pytest.raises(InputError):
        gp_fit([[0.0]], [1.0], -0.2, 1.0, 0.1)
    m = gp_fit([[0.0, 0.0]], [1.0], 0.2, 1.0, 0.1)
    with pytest.raises(InputError):
        gp_predict(m, [0.0])
    with pytest.raises(InputError):
        GpSettings(noise_var=-1.0)
