import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from beta_dabp.autodiff import Tensor
from beta_dabp.losses import (
    adversarial_loss,
    as_logits,
    cross_entropy,
    entropy,
    kd_kl,
    mixmatch_loss,
    mixmatch_terms,
    mutual_info,
    negative_entropy,
    one_hot,
    reg_uniform,
    total_objective,
)
from beta_dabp.nn import MlpClassifier

from gradcheck import check, numeric_grad, rel_error

LN2, LN4 = math.log(2), math.log(4)


def val(t):
    return t.item()


# -- closed forms ---------------------------------------------------------


def test_cross_entropy_perfect_prediction():
    assert val(cross_entropy(as_logits([0.0, 1.0, 0.0]), [0, 1, 0])) == pytest.approx(0, abs=1e-9)


def test_cross_entropy_uniform_k4():
    assert val(cross_entropy(np.zeros(4), one_hot([2], 4))) == pytest.approx(LN4, abs=1e-9)


def test_cross_entropy_closed_form():
    assert val(cross_entropy(as_logits([0.7, 0.2, 0.1]), [1, 0, 0])) == pytest.approx(-math.log(0.7), abs=1e-9)
    assert val(cross_entropy(as_logits([0.7, 0.2, 0.1]), [1, 0, 0])) == pytest.approx(0.356675, abs=1e-6)


def test_cross_entropy_clamps_and_flags():
    out = cross_entropy(np.array([[0.0, -100.0]]), [0.0, 1.0])
    assert val(out) == pytest.approx(-math.log(1e-12), abs=1e-9)
    assert out.clamped == 1


@pytest.mark.parametrize(
    "p, expected",
    [([0, 1, 0, 0], 0.0), ([0.25] * 4, -LN4), ([0.5, 0.5], -LN2)],
)
def test_negative_entropy(p, expected):
    assert val(negative_entropy(as_logits(p))) == pytest.approx(expected, abs=1e-9)


def test_kd_kl_identity():
    p = [0.2, 0.5, 0.3]
    assert val(kd_kl(p, as_logits(p))) == pytest.approx(0, abs=1e-9)


def test_kd_kl_one_hot():
    assert val(kd_kl([0, 1, 0], as_logits([0.25, 0.5, 0.25]))) == pytest.approx(LN2, abs=1e-9)


def test_kd_kl_soft_pseudo_label():
    got = val(kd_kl([0.9, 0.1], np.zeros(2)))
    assert got == pytest.approx(0.9 * math.log(1.8) + 0.1 * math.log(0.2), abs=1e-12)
    assert got == pytest.approx(0.368064, abs=1e-6)


def test_mutual_info_identical_rows():
    rows = np.tile([0.1, 0.6, 0.3], (5, 1))
    assert val(mutual_info(as_logits(rows))) == pytest.approx(0, abs=1e-9)


@pytest.mark.parametrize("k", [2, 3, 5])
def test_mutual_info_distinct_one_hots(k):
    assert val(mutual_info(as_logits(np.eye(k)))) == pytest.approx(math.log(k), abs=1e-9)


def test_mutual_info_uniform_rows():
    assert val(mutual_info(np.zeros((6, 4)))) == pytest.approx(0, abs=1e-9)


def test_reg_uniform_values():
    assert val(reg_uniform(np.zeros((3, 3)))) == pytest.approx(0, abs=1e-12)
    mean_75 = as_logits([[1.0, 0.0], [0.5, 0.5]])
    expected = 0.5 * math.log(0.5 / 0.75) + 0.5 * math.log(0.5 / 0.25)
    assert val(reg_uniform(mean_75)) == pytest.approx(expected, abs=1e-9)
    assert expected == pytest.approx(0.143841, abs=1e-6)


def test_mixmatch_zero_weight_drops_mse():
    rng = np.random.default_rng(0)
    le, lh = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
    te, th = one_hot([0, 1, 2, 0], 3), rng.dirichlet(np.ones(3), 5)
    t = mixmatch_terms(le, te, lh, th, 0.0)
    assert val(t["mse"]) == 0.0
    assert val(mixmatch_loss(le, te, lh, th, 0.0)) == val(t["ce"] + t["reg"])


def test_mixmatch_all_terms_vanish():
    le = as_logits([[1.0, 0.0], [0.0, 1.0]])
    assert val(mixmatch_loss(le, [[1, 0], [0, 1]], np.zeros((0, 2)), np.zeros((0, 2)))) == pytest.approx(0, abs=1e-9)


def test_mixmatch_mse_per_row_over_k():
    t = mixmatch_terms(as_logits([[0.5, 0.5]]), [[0.5, 0.5]], as_logits([[0.6, 0.4]]), [[1.0, 0.0]], 1.0)
    assert val(t["mse"]) == pytest.approx(0.16, abs=1e-9)


def test_mixmatch_empty_easy_batch():
    with pytest.raises(ValueError, match="empty easy"):
        mixmatch_terms(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((3, 2)), np.full((3, 2), 0.5))


def blind_discriminator(k=2):
    disc = MlpClassifier([k, 4, 2], seed=1)
    for p in disc.parameters():
        p.data = np.zeros_like(p.data)
    return disc


def test_adversarial_blind_discriminator():
    out = adversarial_loss(blind_discriminator(), np.full((3, 2), 0.5), np.full((2, 2), 0.5))
    assert val(out) == pytest.approx(-2 * LN2, abs=1e-9)
    assert val(out) == pytest.approx(-1.386294, abs=1e-6)


def test_adversarial_perfect_discriminator_limit():
    disc = MlpClassifier([2, 2], seed=0)
    disc.weights[0].data = np.array([[40.0, -40.0], [-40.0, 40.0]])
    out = val(adversarial_loss(disc, [[1.0, 0.0]], [[0.0, 1.0]]))
    assert -1e-6 < out <= 0


def test_total_objective_arithmetic():
    assert total_objective(1, {"l_kd": 0.5, "l_mi": 0.2}) == pytest.approx(0.3, abs=1e-12)
    assert total_objective(2, {"l_dd": 1.0, "l_adv": -1.0}, gamma=0.1) == pytest.approx(1.1, abs=1e-12)
    assert total_objective(2, {"l_dd": 0.7, "l_adv": 3.0}, gamma=0.0) == 0.7


def test_total_objective_refuses_mixed_steps():
    with pytest.raises(ValueError):
        total_objective(1, {"l_kd": 1.0, "l_mi": 0.1, "l_dd": 1.0})
    with pytest.raises(ValueError):
        total_objective(3, {})


# -- gradients -------------------------------------------------------------

rng = np.random.default_rng(7)
Z = rng.normal(size=(5, 3))
Q = rng.dirichlet(np.ones(3), 5)


@pytest.mark.parametrize(
    "name, fn",
    [
        ("cross_entropy", lambda z: cross_entropy(z, Q)),
        ("negative_entropy", negative_entropy),
        ("kd_kl", lambda z: kd_kl(Q, z)),
        ("mutual_info", mutual_info),
        ("reg_uniform", reg_uniform),
    ],
)
def test_loss_gradients(name, fn):
    assert check(fn, Z) < 1e-4, name


@pytest.mark.parametrize("wrt", [0, 1])
def test_mixmatch_gradients(wrt):
    easy, hard = rng.normal(size=(4, 3)), rng.normal(size=(3, 3))
    fn = lambda e, h: mixmatch_loss(e, Q[:4], h, Q[:3], lambda_mse=1.0)  # noqa: E731
    assert check(fn, easy, hard, wrt=wrt) < 1e-4


def test_adversarial_gradients():
    disc = MlpClassifier([3, 6, 2], seed=5)
    e, h = rng.dirichlet(np.ones(3), 4), rng.dirichlet(np.ones(3), 3)
    assert check(lambda a, b: adversarial_loss(disc, a, b), e, h, wrt=0) < 1e-4
    assert check(lambda a, b: adversarial_loss(disc, a, b), e, h, wrt=1) < 1e-4
    w = disc.weights[0]
    original = w.data.copy()
    for p in disc.parameters():
        p.grad = None
    adversarial_loss(disc, e, h).backward()

    def f(v):
        w.data = v
        out = adversarial_loss(disc, e, h).item()
        w.data = original
        return out

    assert rel_error(w.grad, numeric_grad(f, original)) < 1e-4


# -- properties --------------------------------------------------------------

simplex = st.integers(2, 5).flatmap(
    lambda k: arrays(np.float64, (3, k), elements=st.floats(0.05, 1.0)).map(lambda a: a / a.sum(axis=1, keepdims=True))
)
logits = st.integers(2, 5).flatmap(lambda k: arrays(np.float64, (4, k), elements=st.floats(-20, 20)))


@settings(max_examples=60, deadline=None)
@given(simplex, st.randoms(use_true_random=False))
def test_kd_kl_is_cross_entropy_minus_entropy(p, r):
    q = np.random.default_rng(r.randint(0, 2**31)).dirichlet(np.ones(p.shape[1]), len(p))
    lhs = val(kd_kl(p, as_logits(q)))
    rhs = val(cross_entropy(as_logits(q), p)) - val(entropy(as_logits(p)))
    assert lhs == pytest.approx(rhs, abs=1e-9)


@settings(max_examples=80, deadline=None)
@given(logits)
def test_loss_ranges(z):
    k = z.shape[1]
    p = np.exp(z - z.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    target = np.roll(p, 1, axis=0)
    assert val(cross_entropy(z, target)) >= 0
    assert val(kd_kl(target, z)) >= -1e-12
    assert val(reg_uniform(z)) >= -1e-12
    assert -1e-12 <= val(mutual_info(z)) <= math.log(k) + 1e-12
    assert -math.log(k) - 1e-12 <= val(negative_entropy(z)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(logits)
def test_softmax_rows_sum_to_one(z):
    p = Tensor(z).softmax().data
    assert np.abs(p.sum(axis=1) - 1).max() < 1e-9
