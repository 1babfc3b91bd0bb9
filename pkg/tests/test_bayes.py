import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cyclosel import bayes
from cyclosel.errors import DataError, NumericalError


def conjugate_oracle(design, y, noise, prior):
    """Complete-the-square posterior with generic dense solvers."""
    prec = design @ design.T / noise + np.linalg.inv(prior)
    cov = np.linalg.inv(prec)
    return cov @ design @ y / noise, prec, cov


def random_spd(rng, p, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    return q @ np.diag(np.linspace(1.0, cond, p)) @ q.T


# ---------------------------------------------------------------- fit / predict


def test_scalar_fit_and_predict():
    post = bayes.fit(np.ones((1, 4)), [2, 2, 2, 2], 1.0, [[1.0]])
    assert post.precision[0, 0] == pytest.approx(5.0, abs=1e-15)
    assert post.mean_weights[0] == pytest.approx(1.6, abs=1e-15)
    mean, var = bayes.predict(post, [1.0])
    assert mean == pytest.approx(1.6, abs=1e-15)
    assert var == pytest.approx(0.2, abs=1e-15)
    _, noisy = bayes.predict(post, [1.0], include_noise=True)
    assert noisy == pytest.approx(1.2, abs=1e-15)


def test_zero_design_column_leaves_prior():
    post = bayes.fit(np.zeros((3, 1)), [5.0], 1.0)
    np.testing.assert_array_equal(post.precision, np.eye(3))
    np.testing.assert_array_equal(post.mean_weights, np.zeros(3))


def test_zero_input_predicts_origin():
    rng = np.random.default_rng(0)
    post = bayes.fit(rng.standard_normal((3, 10)), rng.standard_normal(10), 0.5)
    assert bayes.predict(post, np.zeros(3)) == (0.0, 0.0)
    assert bayes.predict(post, np.zeros(3), include_noise=True) == (0.0, 0.5)


def test_identity_precision_gives_squared_norm():
    post = bayes.LinearPosterior(np.zeros(3), np.eye(3), np.eye(3), 1.0, np.eye(3))
    x = np.array([1.0, -2.0, 0.5])
    assert bayes.predict(post, x)[1] == pytest.approx(float(x @ x), abs=1e-15)


def test_ridge_equivalence_p5_n40():
    rng = np.random.default_rng(1)
    design = rng.standard_normal((5, 40))
    y = rng.standard_normal(40)
    prior = random_spd(rng, 5)
    noise = 0.7
    post = bayes.fit(design, y, noise, prior)
    ridge = np.linalg.solve(design @ design.T + noise * np.linalg.inv(prior), design @ y)
    np.testing.assert_allclose(post.mean_weights, ridge, rtol=1e-8, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    p=st.integers(1, 6),
    n=st.integers(1, 50),
    noise=st.floats(0.05, 5.0),
    seed=st.integers(0, 2**31 - 1),
)
def test_fit_matches_conjugate_oracle(p, n, noise, seed):
    rng = np.random.default_rng(seed)
    design = rng.standard_normal((p, n))
    y = rng.standard_normal(n)
    prior = random_spd(rng, p)
    post = bayes.fit(design, y, noise, prior)
    w, prec, cov = conjugate_oracle(design, y, noise, prior)
    np.testing.assert_allclose(post.mean_weights, w, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(post.precision, prec, rtol=1e-10, atol=1e-12)
    # posterior invariants
    assert np.allclose(post.precision, post.precision.T, rtol=1e-9, atol=0)
    assert np.all(np.linalg.eigvalsh(post.precision) > 0)
    np.testing.assert_allclose(post.precision @ post.precision_inverse, np.eye(p), atol=1e-6)
    x = rng.standard_normal(p)
    mean, var = bayes.predict(post, x)
    assert mean == pytest.approx(float(w @ x), rel=1e-8, abs=1e-10)
    assert var == pytest.approx(float(x @ cov @ x), rel=1e-8, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), scale=st.floats(1.0, 50.0))
def test_predict_variance_monotone_under_scaling(seed, scale):
    rng = np.random.default_rng(seed)
    post = bayes.fit(rng.standard_normal((4, 12)), rng.standard_normal(12), 0.3)
    x = rng.standard_normal(4)
    assert bayes.predict(post, scale * x)[1] >= bayes.predict(post, x)[1] * (1 - 1e-12)
    assert bayes.predict(post, -scale * x)[1] >= bayes.predict(post, x)[1] * (1 - 1e-12)


def test_predict_batch_matches_predict():
    rng = np.random.default_rng(2)
    post = bayes.fit(rng.standard_normal((3, 20)), rng.standard_normal(20), 0.4)
    xs = rng.standard_normal((7, 3))
    means, vars_ = bayes.predict_batch(post, xs, include_noise=True)
    for i, x in enumerate(xs):
        m, v = bayes.predict(post, x, include_noise=True)
        assert means[i] == pytest.approx(m, rel=1e-12)
        assert vars_[i] == pytest.approx(v, rel=1e-12)


@pytest.mark.parametrize(
    "design, targets, noise, prior, error",
    [
        (np.zeros((2, 0)), [], 1.0, None, DataError),
        (np.ones((2, 3)), [1, 2], 1.0, None, DataError),
        (np.array([[1.0, np.nan]]), [1, 2], 1.0, None, DataError),
        (np.ones((1, 2)), [1, np.inf], 1.0, None, DataError),
        (np.ones((1, 2)), [1, 2], 0.0, None, DataError),
        (np.ones((2, 2)), [1, 2], 1.0, [[1.0, 2.0], [2.0, 1.0]], NumericalError),
        (np.ones((2, 2)), [1, 2], 1.0, [[1.0, 0.5], [0.0, 1.0]], NumericalError),
        (np.ones((2, 2)), [1, 2], 1.0, np.eye(3), DataError),
    ],
)
def test_fit_rejects_bad_inputs(design, targets, noise, prior, error):
    with pytest.raises(error):
        bayes.fit(design, targets, noise, prior)


def test_predict_rejects_wrong_length():
    post = bayes.fit(np.ones((2, 3)), [1, 2, 3], 1.0)
    with pytest.raises(DataError):
        bayes.predict(post, [1.0])
    with pytest.raises(DataError):
        bayes.predict(post, [1.0, np.nan])


def test_cholesky_jitter_recovers_semidefinite():
    v = np.array([[1.0], [1.0]])
    singular = v @ v.T  # rank one
    factor, jitter = bayes.cholesky_jitter(singular)
    assert jitter > 0
    np.testing.assert_allclose(factor @ factor.T, singular + jitter * np.eye(2), atol=1e-12)


def test_cholesky_jitter_gives_up_on_indefinite():
    with pytest.raises(NumericalError):
        bayes.cholesky_jitter(np.diag([1.0, -1.0]))


# ---------------------------------------------------------------- plug-in noise


def plugin_oracle(design, y, rule, floor=1e-6):
    """Naive fixed point: refit weights from scratch at every step."""
    n = y.shape[0]
    s2 = max(float(y @ y) / n, floor)
    for _ in range(2000):
        prec = design @ design.T / s2 + np.eye(design.shape[0])
        w = np.linalg.solve(prec, design @ y / s2)
        rss = float(np.sum((y - design.T @ w) ** 2))
        denom = n
        if rule == "dof":
            hat = design.T @ np.linalg.solve(design @ design.T + s2 * np.eye(design.shape[0]), design)
            denom = max(n - np.trace(hat), 1.0)
        new = max(rss / denom, floor)
        if abs(new - s2) <= 1e-12 * s2:
            return new
        s2 = new
    return s2


@pytest.mark.parametrize("rule", bayes.NOISE_RULES)
def test_plugin_noise_matches_naive_iteration(rule):
    rng = np.random.default_rng(3)
    design = rng.standard_normal((4, 60))
    y = design.T @ np.array([1.0, -0.5, 0.2, 0.0]) + 0.3 * rng.standard_normal(60)
    post = bayes.fit_plugin(design, y, rule=rule)
    assert post.noise_variance == pytest.approx(plugin_oracle(design, y, rule), rel=1e-6)
    # the stored posterior is the ordinary fit at that noise level
    ref = bayes.fit(design, y, post.noise_variance)
    np.testing.assert_allclose(post.mean_weights, ref.mean_weights, rtol=1e-10)


def test_plugin_noise_floor_on_exact_fit():
    x = np.linspace(-1, 1, 30)
    post = bayes.fit_plugin(x[np.newaxis, :], 3.0 * x, rule="mse")
    assert post.noise_variance >= bayes.NOISE_FLOOR
    assert post.noise_variance < 1e-3


def test_plugin_noise_with_prior_matches_whitened():
    rng = np.random.default_rng(4)
    design = rng.standard_normal((3, 40))
    y = rng.standard_normal(40)
    prior = random_spd(rng, 3, cond=4.0)
    post = bayes.fit_plugin(design, y, prior_covariance=prior)
    ref = bayes.fit(design, y, post.noise_variance, prior)
    np.testing.assert_allclose(post.mean_weights, ref.mean_weights, rtol=1e-9)
    # fixed point: re-estimating at the solution returns it
    root = np.linalg.cholesky(prior)
    wd = root.T @ design
    again = bayes.fit_plugin(wd, y)
    assert again.noise_variance == pytest.approx(post.noise_variance, rel=1e-7)


def test_plugin_rejects_unknown_rule():
    with pytest.raises(DataError):
        bayes.fit_plugin(np.ones((1, 3)), [1, 2, 3], rule="median")


# ---------------------------------------------------------------- recursive inverse


def test_extend_decoupled_block():
    out = bayes.recursive_inverse_extend([[0.5]], [0.0], 3.0)
    np.testing.assert_allclose(out, np.diag([1 / 3, 1 / 2]), atol=1e-15)


def test_extend_from_identity_matches_2x2_closed_form():
    u, s = 0.4, 2.0
    out = bayes.recursive_inverse_extend([[1.0]], [u], s)
    det = s * 1.0 - u * u
    expected = np.array([[1.0, -u], [-u, s]]) / det
    np.testing.assert_allclose(out, expected, atol=1e-14)


def test_extend_noise_variance_adds_to_diagonal():
    a = bayes.recursive_inverse_extend([[0.5]], [0.3], 2.0, noise_variance=0.5)
    b = bayes.recursive_inverse_extend([[0.5]], [0.3], 2.5)
    np.testing.assert_allclose(a, b, atol=0)


def test_extend_from_empty():
    np.testing.assert_allclose(bayes.recursive_inverse_extend(np.zeros((0, 0)), [], 4.0), [[0.25]])


def test_extend_rejects_non_pd():
    with pytest.raises(NumericalError):
        bayes.recursive_inverse_extend([[1.0]], [2.0], 1.0)


def test_extend_rejects_bad_shapes():
    with pytest.raises(DataError):
        bayes.recursive_inverse_extend(np.eye(2), [1.0], 1.0)


def test_random_chain_p2_to_p10():
    rng = np.random.default_rng(5)
    m = random_spd(rng, 10)
    inv = np.linalg.inv(m[-1:, -1:])
    for p in range(2, 11):
        block = m[-p:, -p:]
        inv = bayes.recursive_inverse_extend(inv, block[0, 1:], block[0, 0])
        direct = np.linalg.inv(block)
        assert np.linalg.norm(inv - direct) / np.linalg.norm(direct) < 1e-8


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (6, 9), elements=st.floats(-3, 3)))
def test_grow_inverse_gram_property(x):
    m = x @ x.T + 0.5 * np.eye(6)
    for k, inv in enumerate(bayes.grow_inverse(m)):
        block = m[-(k + 1):, -(k + 1):]
        np.testing.assert_allclose(inv @ block, np.eye(k + 1), atol=1e-6)
