import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from beta_dabp.nn import MlpClassifier
from beta_dabp.refinement import AugmentationPolicy, augment, co_guess_hard, mixup, refine_easy, sharpen

POLICY = AugmentationPolicy(0.05, 0.2, 0.1, views=2)


def const_net(p, d=2):
    net = MlpClassifier([d, len(p)])
    net.weights[0].data = np.zeros_like(net.weights[0].data)
    net.biases[0].data = np.log(np.maximum(np.asarray(p, dtype=float), 1e-300)).clip(-700)
    return net


def test_policy_validation():
    with pytest.raises(ValueError):
        AugmentationPolicy(0.3, 0.2)
    with pytest.raises(ValueError):
        AugmentationPolicy(dropout=1.0)
    with pytest.raises(ValueError):
        AugmentationPolicy(views=0)


def test_policy_scales_with_feature_spread():
    p = AugmentationPolicy.for_features(np.random.default_rng(0).normal(0, 4, (500, 3)))
    assert p.sigma_weak == pytest.approx(0.05 * 4, rel=0.1)
    assert p.sigma_strong == pytest.approx(0.2 * 4, rel=0.1)


def test_refine_fully_trusted_and_distrusted():
    y = np.eye(2)[[0, 1]]
    net = const_net([0.2, 0.8])
    np.testing.assert_array_equal(refine_easy(y, [1.0, 1.0], net, np.zeros((2, 2)), POLICY, 0), y)
    np.testing.assert_allclose(refine_easy(y, [0.0, 0.0], net, np.zeros((2, 2)), POLICY, 0), [[0.2, 0.8]] * 2)


def test_refine_convex_combination():
    out = refine_easy([[1.0, 0.0]], [0.5], const_net([0.2, 0.8]), np.zeros((1, 2)), POLICY, 0)
    np.testing.assert_allclose(out, [[0.6, 0.4]], atol=1e-12)


def test_co_guess_constant_predictor():
    out = co_guess_hard(const_net([0.3, 0.7]), const_net([0.3, 0.7]), np.zeros((4, 2)), POLICY, 0)
    np.testing.assert_allclose(out, [[0.3, 0.7]] * 4, atol=1e-12)


def test_co_guess_two_view_average():
    one = AugmentationPolicy(0.05, 0.2, views=1)
    out = co_guess_hard(const_net([1.0, 0.0]), const_net([0.0, 1.0]), np.zeros((1, 2)), one, 0)
    np.testing.assert_allclose(out, [[0.5, 0.5]], atol=1e-12)


def test_co_guess_on_simplex():
    rng = np.random.default_rng(1)
    out = co_guess_hard(MlpClassifier([3, 8, 4], 1), MlpClassifier([3, 8, 4], 2), rng.normal(size=(30, 3)), POLICY, 5)
    assert np.abs(out.sum(axis=1) - 1).max() < 1e-9


def test_sharpen_values():
    np.testing.assert_allclose(sharpen([0.6, 0.4], 1.0), [[0.6, 0.4]], atol=1e-15)
    np.testing.assert_allclose(sharpen([0.6, 0.4], 0.5), [[0.36 / 0.52, 0.16 / 0.52]], atol=1e-12)
    np.testing.assert_allclose(sharpen([0.6, 0.4], 0.5), [[0.6923, 0.3077]], atol=1e-4)
    np.testing.assert_allclose(sharpen([0.2, 0.45, 0.35], 0.01), [[0, 1, 0]], atol=1e-3)
    np.testing.assert_array_equal(sharpen([0.0, 1.0], 0.5), [[0.0, 1.0]])
    with pytest.raises(ValueError):
        sharpen([0.5, 0.5], 0)


def test_mixup_boundaries():
    x, y = np.array([[1.0, 2.0]]), np.array([[1.0, 0.0]])
    px, py = np.array([[5.0, -1.0]]), np.array([[0.0, 1.0]])
    same = mixup(x, y, px, py, 1.0, 0, lam=1.0)
    np.testing.assert_array_equal(same.features, x)
    np.testing.assert_array_equal(same.targets, y)
    mid = mixup(x, y, px, py, 1.0, 0, lam=0.5)
    np.testing.assert_allclose(mid.features, [[3.0, 0.5]])
    np.testing.assert_allclose(mid.targets, [[0.5, 0.5]])


def test_mixup_primary_dominates():
    out = mixup(np.zeros((5, 2)), np.eye(2)[[0] * 5], np.ones((3, 2)), np.eye(2)[[1] * 3], 1.0, 0, lam=0.2)
    np.testing.assert_allclose(out.lam, 0.8)


def test_mixup_lambda_mean_monte_carlo():
    out = mixup(np.zeros((1000, 1)), np.ones((1000, 1)), np.zeros((1, 1)), np.ones((1, 1)), 1.0, 123)
    assert abs(out.lam.mean() - 0.75) < 0.02
    assert ((out.lam >= 0.5) & (out.lam <= 1)).all()


def test_mixup_empty_pool():
    with pytest.raises(ValueError, match="empty"):
        mixup(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((0, 2)), np.zeros((0, 2)), 1.0, 0)


def test_augment_identity_and_determinism():
    x = np.random.default_rng(0).normal(size=(10, 3))
    zero = AugmentationPolicy(0.0, 0.2)
    np.testing.assert_array_equal(augment(x, "weak", zero, 1), x)
    np.testing.assert_array_equal(augment(x, "strong", POLICY, 7), augment(x, "strong", POLICY, 7))
    with pytest.raises(ValueError):
        augment(x, "medium", POLICY, 0)


def test_strong_views_distort_more():
    x = np.random.default_rng(0).normal(size=(1000, 3))
    weak = np.linalg.norm(augment(x, "weak", POLICY, 1) - x, axis=1).mean()
    strong = np.linalg.norm(augment(x, "strong", POLICY, 1) - x, axis=1).mean()
    assert strong > weak


simplex_rows = arrays(np.float64, (6, 3), elements=st.floats(0.0, 1.0)).filter(lambda a: (a.sum(axis=1) > 0.1).all())


@settings(max_examples=50, deadline=None)
@given(simplex_rows, st.floats(0.05, 3.0), st.integers(0, 2**31))
def test_targets_stay_on_simplex(raw, T, seed):
    p = raw / raw.sum(axis=1, keepdims=True)
    assert np.abs(sharpen(p, T).sum(axis=1) - 1).max() < 1e-9
    rng = np.random.default_rng(seed)
    m = mixup(rng.normal(size=(6, 2)), p, rng.normal(size=(4, 2)), p[:4], 1.0, rng)
    assert np.abs(m.targets.sum(axis=1) - 1).max() < 1e-9
    y = np.eye(3)[rng.integers(0, 3, 6)]
    rho = rng.random(6)
    out = refine_easy(y, rho, MlpClassifier([2, 3], seed), rng.normal(size=(6, 2)), POLICY, rng)
    assert np.abs(out.sum(axis=1) - 1).max() < 1e-9


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 3), elements=st.floats(-50, 50)), st.floats(0, 1))
def test_mixup_of_identical_rows_is_identity(x, lam):
    y = np.full((4, 2), 0.5)
    out = mixup(x, y, x, y, 1.0, 0, lam=lam, partner=np.arange(4))
    np.testing.assert_array_equal(out.features, x)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 1))
def test_refine_between_inputs(seed, rho):
    rng = np.random.default_rng(seed)
    y = np.eye(3)[rng.integers(0, 3, 5)]
    net = const_net(rng.dirichlet(np.ones(3)))
    out = refine_easy(y, np.full(5, rho), net, np.zeros((5, 2)), POLICY, 0)
    pred = net.predict_proba(np.zeros((1, 2)))
    lo, hi = np.minimum(y, pred), np.maximum(y, pred)
    assert ((out >= lo - 1e-12) & (out <= hi + 1e-12)).all()
