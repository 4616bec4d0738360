import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beta_dabp.data import (
    LabeledVectorSet,
    ParseError,
    gaussian_shift_task,
    gen_gaussian_shift,
    gen_two_moons,
    load_csv,
    save_csv,
    standardize,
    two_moons_task,
)
from beta_dabp.diagnostics import ground_truth


def test_two_moons_shapes_and_labels():
    ds = gen_two_moons(101, 0.1, seed=3)
    assert ds.features.shape == (101, 2)
    assert sorted(np.bincount(ds.labels)) == [50, 51]


def test_generators_are_pure():
    a = gen_two_moons(50, 0.1, 30.0, seed=4)
    b = gen_two_moons(50, 0.1, 30.0, seed=4)
    assert a.features.tobytes() == b.features.tobytes()
    s1, t1 = gen_gaussian_shift(60, 3, 3, 2.0, seed=1)
    s2, t2 = gen_gaussian_shift(60, 3, 3, 2.0, seed=1)
    assert t1.features.tobytes() == t2.features.tobytes()


def test_noiseless_moons_lie_on_arcs():
    ds = gen_two_moons(200, 0.0, seed=0)
    up = ds.features[ds.labels == 0]
    low = ds.features[ds.labels == 1] - [1.0, -0.5]
    np.testing.assert_allclose(np.hypot(*up.T), 1.0)
    np.testing.assert_allclose(np.hypot(*low.T), 1.0)
    assert (up[:, 1] >= 0).all() and (low[:, 1] <= 0).all()


def test_rotation_preserves_norms():
    a = gen_two_moons(80, 0.0, 0.0, seed=2)
    b = gen_two_moons(80, 0.0, 45.0, seed=2)
    np.testing.assert_allclose(np.linalg.norm(a.features, axis=1), np.linalg.norm(b.features, axis=1))


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 300), st.integers(2, 6), st.integers(0, 1000))
def test_class_balance(n, k, seed):
    if n < k:
        return
    src, tgt = gen_gaussian_shift(n, 2, k, 1.0, seed=seed)
    for counts in (np.bincount(src.labels, minlength=k), np.bincount(ground_truth(tgt), minlength=k)):
        assert counts.max() - counts.min() <= 1
    moons = gen_two_moons(n, 0.1, seed=seed)
    assert abs(np.bincount(moons.labels)[0] - n / 2) <= 1


def test_target_truth_is_gated():
    src, tgt = two_moons_task()
    assert src.labels is not None
    assert tgt.labels is None
    assert tgt.domain == "target"
    assert ground_truth(tgt) is not None


def test_standardize_uses_source_statistics():
    src, tgt = gen_gaussian_shift(300, 3, 3, 5.0, seed=0)
    s, t = standardize(src, tgt)
    np.testing.assert_allclose(s.features.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(s.features.std(axis=0), 1, atol=1e-12)
    mu, sd = src.features.mean(axis=0), src.features.std(axis=0)
    np.testing.assert_allclose(t.features, (tgt.features - mu) / sd)


def test_task_defaults():
    src, tgt = gaussian_shift_task()
    assert (len(src), src.dim) == (600, 4)
    src, tgt = two_moons_task()
    assert (len(tgt), tgt.dim) == (400, 2)


def test_vector_set_validation():
    with pytest.raises(ValueError):
        LabeledVectorSet(np.zeros(3))
    with pytest.raises(ValueError):
        LabeledVectorSet(np.zeros((3, 2)), labels=[0, 1])
    with pytest.raises(ValueError):
        LabeledVectorSet(np.zeros((2, 2)), pseudo_labels=[[0.5, 0.6], [1, 0]])
    with pytest.raises(ValueError):
        LabeledVectorSet(np.zeros((2, 2)), domain="other")


def test_load_csv_happy_path(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("f0,f1,label\n0.1,0.2,0\n1.5,-2,1\n3,4,1\n")
    ds = load_csv(p, "label")
    assert (len(ds), ds.dim) == (3, 2)
    np.testing.assert_array_equal(ds.labels, [0, 1, 1])
    np.testing.assert_array_equal(ds.features[1], [1.5, -2.0])


def test_load_csv_unlabeled(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("f0,f1\n0.1,0.2\n")
    ds = load_csv(p, None, "target")
    assert ds.labels is None and ground_truth(ds) is None


def test_load_csv_non_numeric_cites_line(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("f0,f1,label\n0.1,abc,0\n")
    with pytest.raises(ParseError, match="line 2"):
        load_csv(p, "label")


def test_load_csv_ragged(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("f0,f1\n1,2\n3\n")
    with pytest.raises(ParseError, match="line 3"):
        load_csv(p)


def test_load_csv_missing_label_column(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("f0,f1\n1,2\n")
    with pytest.raises(ParseError, match="label"):
        load_csv(p, "label")


def test_csv_round_trip(tmp_path):
    src, tgt = two_moons_task(n=30)
    back = load_csv(save_csv(tgt, tmp_path / "t.csv"), "label", "target")
    assert back.features.tobytes() == tgt.features.tobytes()
    np.testing.assert_array_equal(ground_truth(back), ground_truth(tgt))
