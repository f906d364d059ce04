import math

import numpy as np
import pytest

from replica_reweight.multiclass import (
    ToyParams,
    ToySample,
    check_simplex,
    default_label_values,
    generate_toy,
    leading_direction,
    sigma_mse,
    sigma_mse_monte_carlo,
    toy_overlap,
    uniform_weights,
    verify_uniform_optimal,
    weighted_scatter,
)


def test_default_labels():
    assert default_label_values(1) == (0.0,)
    assert default_label_values(3) == (-1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        default_label_values(0)


def test_single_class_has_constant_label():
    smp = generate_toy(ToyParams(10, 50, n_classes=1))
    assert np.all(smp.labels == 0.0)


def test_two_classes_reduce_to_binary_model():
    p = ToyParams(30, 4000, n_classes=2, label_values=(1.0, -1.0), label_probs=(0.2, 0.8), sigma=0.6, seed=3)
    smp = generate_toy(p)
    assert set(np.unique(smp.labels)) == {-1.0, 1.0}
    assert abs(np.mean(smp.labels == 1.0) - 0.2) <= 4 * math.sqrt(0.16 / 4000)
    noise = smp.inputs - np.outer(smp.labels, smp.w0 / math.sqrt(30))
    assert noise.std() == pytest.approx(0.6, rel=0.01)
    assert abs(smp.w0 @ smp.w0 / 30 - 1.0) <= 1e-9


def test_label_mean_concentrates():
    smp = generate_toy(ToyParams(5, 10_000, n_classes=3, seed=1))
    var = 2.0 / 3.0
    assert abs(smp.labels.mean()) <= 4 * math.sqrt(var / 10_000)


def test_toy_params_validation():
    with pytest.raises(ValueError):
        ToyParams(0, 10)
    with pytest.raises(ValueError):
        ToyParams(5, 10, n_classes=2, label_values=(1.0, 1.0))
    with pytest.raises(ValueError):
        ToyParams(5, 10, n_classes=2, label_probs=(0.5, 0.6))
    with pytest.raises(ValueError):
        ToyParams(5, 10, sigma=0.0)
    with pytest.raises(ValueError):
        ToyParams(5, 10, weights=np.full(9, 1 / 9))


def test_simplex_check():
    assert np.array_equal(check_simplex([0.25, 0.75]), [0.25, 0.75])
    for bad in ([0.5, 0.6], [-0.1, 1.1], [], [[0.5, 0.5]], [np.nan, 1.0]):
        with pytest.raises(ValueError):
            check_simplex(bad)
    # summation round-off of a long uniform vector is accepted
    check_simplex(np.full(100_000, 1e-5))


def test_scatter_special_cases():
    x = np.tile(np.arange(4.0), (6, 1))
    assert np.allclose(weighted_scatter(x, uniform_weights(6)), 0.0)
    x1, x2 = np.array([1.0, 2.0, -1.0]), np.array([0.0, -1.0, 3.0])
    a = weighted_scatter(np.vstack([x1, x2]), [0.5, 0.5])
    assert np.allclose(a, np.outer(x1 - x2, x1 - x2) / 4, atol=1e-15)
    with pytest.raises(ValueError):
        weighted_scatter(x, uniform_weights(5))


def test_scatter_equivalent_form_and_psd():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(40, 7))
    s = rng.dirichlet(np.ones(40))
    a = weighted_scatter(x, s)
    xbar = s @ x
    alt = (x * s[:, None]).T @ x - np.outer(xbar, xbar)
    assert np.allclose(a, alt, atol=1e-10)
    assert np.array_equal(a, a.T)
    assert np.linalg.eigvalsh(a).min() >= -1e-10 * np.linalg.norm(a)
    smp = ToySample(x, np.zeros(40), np.ones(7))
    assert np.array_equal(weighted_scatter(smp, s), a)


def test_leading_direction_diagonal():
    n = 16
    a = np.diag([2.0] + [1.0] * (n - 1))
    w0 = np.zeros(n)
    w0[0] = math.sqrt(n)
    w, lam, overlap = leading_direction(a, w0=w0)
    assert lam == pytest.approx(2.0, rel=1e-12)
    assert overlap(w0) == pytest.approx(1.0, abs=1e-9)
    assert w @ w0 >= 0 and w @ w == pytest.approx(n)


def test_leading_direction_residual_and_sign():
    rng = np.random.default_rng(4)
    b = rng.normal(size=(30, 30))
    a = b @ b.T
    res = leading_direction(a, tol=1e-10)
    assert not res.slow
    assert res.residual <= 1e-10 * max(1.0, res.eigenvalue)
    assert res.eigenvalue == pytest.approx(np.linalg.eigvalsh(a).max(), rel=1e-9)
    w0 = -res.w_hat
    flipped = leading_direction(a, w0=w0)
    assert flipped.w_hat @ w0 > 0


def test_tiny_eigengap_flagged():
    a = np.diag([1.0, 1.0 - 1e-9, 0.5])
    res = leading_direction(a, max_iter=50)
    assert res.slow and res.iterations == 50


def test_zero_matrix():
    res = leading_direction(np.zeros((4, 4)))
    assert res.eigenvalue == 0.0 and not res.slow
    with pytest.raises(ValueError):
        leading_direction(np.zeros((3, 4)))


def test_sigma_mse_closed_forms():
    for m in (2, 5, 50, 1000):
        assert sigma_mse(uniform_weights(m), 0.7) == pytest.approx(0.7**4 * (2 / m - 1 / m**2), rel=1e-12)
    atom = np.zeros(6)
    atom[2] = 1.0
    assert sigma_mse(atom, 1.3) == pytest.approx(1.3**4, rel=1e-14)


def test_sigma_mse_two_point_case():
    # for M = 2 the tangent curvature at uniform weights is 4 - 12/M < 0: uniform is the maximum
    p = np.linspace(0, 1, 10001)
    vals = np.array([sigma_mse([q, 1 - q], 1.0) for q in p])
    assert p[int(np.argmax(vals[2000:8001])) + 2000] == 0.5
    assert p[int(np.argmin(vals))] == pytest.approx((1 - 1 / math.sqrt(3)) / 2, abs=1e-4)


@pytest.mark.parametrize("m", [4, 5, 8, 12])
def test_uniform_is_global_minimum_from_four_samples(m):
    # stationary points on the simplex take at most two distinct values, so scan those families
    uni = sigma_mse(uniform_weights(m), 1.0)
    for k in range(1, m):
        for a in np.linspace(0, 1 / k, 801):
            s = np.r_[np.full(k, a), np.full(m - k, (1 - k * a) / (m - k))]
            assert sigma_mse(s / s.sum(), 1.0) >= uni - 1e-14


def test_sigma_mse_matches_simulation():
    w = np.random.default_rng(5).dirichlet(np.ones(20))
    mean, se = sigma_mse_monte_carlo(w, 0.8, 200_000, seed=1)
    assert abs(mean - sigma_mse(w, 0.8)) <= 3 * se


def test_uniform_never_beaten():
    rep = verify_uniform_optimal(50, 2000, seed=3)
    assert rep["min_gap"] >= 0 and not rep["uniform_beaten"]
    with pytest.raises(ValueError):
        verify_uniform_optimal(1, 10, 0)


def test_uniform_overlap_beats_concentrated_weights():
    rep = verify_uniform_optimal(2000, 10, seed=0, sigma=1.0, overlap_dim=200, overlap_seeds=20)
    assert rep["overlap_uniform_mean"] >= rep["overlap_random_mean"]
    assert rep["random_sum_s2_mean"] > rep["uniform_sum_s2"]


def test_overlap_grows_with_sample_size():
    n = 50
    res = np.array([[toy_overlap(n, k * n, 1.0, None, seed) for k in (5, 20, 50)] for seed in range(20)])
    means = res.mean(axis=0)
    assert means[0] < means[1] < means[2]
    assert sum(bool(np.any(np.diff(r) < 0)) for r in res) <= 1
