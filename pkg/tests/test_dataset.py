import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mlattack.dataset import (Dataset, FormatError, load_sparse, normalize, save_sparse, split,
                              synthesize)
from mlattack.model import numerical_rank


def write(tmp_path, text):
    p = tmp_path / "data.txt"
    p.write_text(text, encoding="utf-8")
    return p


def test_load_decodes_labels_and_features(tmp_path):
    ds = load_sparse(write(tmp_path, "#mlatk d=4 m=3\n0,2 1:0.5 3:1.0\n"))
    assert ds.Y[0].tolist() == [1, -1, 1]
    assert ds.X[0].tolist() == [0, 0.5, 0, 1.0]


def test_blank_line_skipped_with_warning(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        ds = load_sparse(write(tmp_path, "#mlatk d=4 m=3\n0 1:1\n  \n- 2:1\n"))
    assert ds.n == 2
    assert "blank line" in caplog.text


def test_feature_index_out_of_range(tmp_path):
    with pytest.raises(FormatError, match="line 2: feature index out of range"):
        load_sparse(write(tmp_path, "#mlatk d=4 m=3\n0 5:1.0\n"))


def test_label_index_out_of_range(tmp_path):
    with pytest.raises(FormatError, match="label index out of range"):
        load_sparse(write(tmp_path, "#mlatk d=4 m=3\n3 1:1.0\n"))


@pytest.mark.parametrize("text", ["", "# just a comment\n", "#mlatk d=2 m=2\n"])
def test_empty_file(tmp_path, text):
    with pytest.raises(FormatError, match="empty file"):
        load_sparse(write(tmp_path, text))


def test_parse_error_reports_line(tmp_path):
    with pytest.raises(FormatError, match="line 3: bad feature pair"):
        load_sparse(write(tmp_path, "#mlatk d=2 m=2\n0 0:1\n1 0=2\n"))


def test_missing_header(tmp_path):
    with pytest.raises(FormatError, match="header"):
        load_sparse(write(tmp_path, "0 0:1\n"))


def test_round_trip(tmp_path):
    ds, _ = synthesize(30, 6, 4, 2, seed=3)
    p = tmp_path / "rt.txt"
    save_sparse(ds, p)
    back = load_sparse(p)
    assert np.array_equal(back.X, ds.X)
    assert np.array_equal(back.Y, ds.Y)


@given(st.integers(1, 8), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_round_trip_random(tmp_path_factory, d, m, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((5, d)) * (rng.random((5, d)) < 0.5)
    Y = np.where(rng.random((5, m)) < 0.4, 1, -1)
    p = tmp_path_factory.mktemp("rt") / "x.txt"
    save_sparse(Dataset(X, Y), p)
    back = load_sparse(p)
    assert np.array_equal(back.X, X) and np.array_equal(back.Y, Y)


def test_noiseless_generator_self_consistent():
    ds, W0 = synthesize(100, 20, 8, 2, label_corr=0, noise=0, seed=7)
    assert np.array_equal(np.where(ds.X @ W0 >= 0, 1, -1), ds.Y)


def test_teacher_rank():
    _, W0 = synthesize(100, 20, 8, 2, seed=7)
    assert numerical_rank(W0, 1e-8) == 2


def test_synthesize_deterministic():
    a, Wa = synthesize(50, 10, 5, 3, label_corr=0.5, noise=0.3, seed=11)
    b, Wb = synthesize(50, 10, 5, 3, label_corr=0.5, noise=0.3, seed=11)
    assert a.X.tobytes() == b.X.tobytes() and a.Y.tobytes() == b.Y.tobytes()
    assert Wa.tobytes() == Wb.tobytes()


def test_synthesize_feature_decay_keeps_labels_and_norms():
    ds, W0 = synthesize(80, 12, 4, 2, seed=1, feature_decay=0.8)
    assert np.max(np.linalg.norm(ds.X, axis=1)) <= 1 + 1e-12
    # the decayed features still separate the labels through a rescaled teacher
    Ws = W0 / (0.8 ** np.arange(12))[:, None]
    assert np.array_equal(np.where(ds.X @ Ws >= 0, 1, -1), ds.Y)


@pytest.mark.parametrize("kw", [dict(rank=0), dict(rank=6), dict(n=9), dict(label_corr=1.5),
                                dict(noise=-1), dict(feature_decay=0)])
def test_synthesize_rejects(kw):
    args = dict(n=20, d=5, m=4, rank=2)
    args.update(kw)
    with pytest.raises(ValueError):
        synthesize(**args)


def test_label_noise_flips_some_labels():
    ds, W0 = synthesize(200, 10, 5, 2, noise=0.5, seed=2)
    agree = np.mean(np.where(ds.X @ W0 >= 0, 1, -1) == ds.Y)
    assert 0.5 < agree < 1.0


def test_split_counts():
    ds, _ = synthesize(10, 3, 2, 1, seed=0)
    tags = split(ds, (0.5, 0.3, 0.2), seed=1).split_tags
    assert [int(np.sum(tags == s)) for s in ("train", "val", "test")] == [5, 3, 2]


def test_single_instance_goes_to_train():
    ds = Dataset(np.zeros((1, 2)), np.ones((1, 2)))
    assert split(ds).split_tags.tolist() == ["train"]


def test_split_deterministic():
    ds, _ = synthesize(40, 3, 2, 1, seed=0)
    assert np.array_equal(split(ds, seed=4).split_tags, split(ds, seed=4).split_tags)
    assert not np.array_equal(split(ds, seed=4).split_tags, split(ds, seed=5).split_tags)


@given(st.integers(1, 200), st.floats(0.05, 0.9), st.floats(0.05, 0.9))
def test_split_within_one_instance(n, a, b):
    c = 1.0 - a - b
    if c <= 0.01:
        return
    ds = Dataset(np.zeros((n, 1)), np.ones((n, 1)))
    tags = split(ds, (a, b, c), seed=0).split_tags
    for frac, name in zip((a, b, c), ("train", "val", "test")):
        assert abs(np.sum(tags == name) - frac * n) < 1.0 + 1e-9


@pytest.mark.parametrize("fr", [(0.5, 0.5, 0.1), (1.0, 0.0, 0.0), (0.5, 0.5)])
def test_split_rejects_bad_fractions(fr):
    ds = Dataset(np.zeros((4, 1)), np.ones((4, 1)))
    with pytest.raises(ValueError):
        split(ds, fr)


def test_normalize_examples():
    ds = normalize(Dataset(np.array([[3.0, 4.0], [0.1, 0.0]]), np.ones((2, 1))), 1.0)
    assert np.allclose(ds.X[0], [0.6, 0.8])
    assert ds.X[1].tolist() == [0.1, 0.0]
    assert ds.mu_x == 1.0
    with pytest.raises(ValueError):
        normalize(ds, 0.0)


@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10))
def test_normalize_caps_norms(seed, mu):
    X = np.random.default_rng(seed).standard_normal((20, 4)) * 5
    ds = normalize(Dataset(X, np.ones((20, 1))), mu)
    assert np.max(np.linalg.norm(ds.X, axis=1)) <= mu + 1e-12


def test_dataset_rejects_bad_labels():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), np.array([[0, 1], [1, 1]]))


def test_subset_and_indices():
    ds = split(synthesize(20, 3, 2, 1, seed=0)[0], seed=0)
    test = ds.subset("test")
    assert test.n == 4 and set(test.split_tags) == {"test"}
    with pytest.raises(ValueError):
        ds.indices("holdout")
