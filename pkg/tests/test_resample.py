import numpy as np
import pytest

from coingrade import resample
from coingrade.errors import LeakageError
from coingrade.resample import AugmentConfig, SmoteConfig


def toy(rng, counts, d=4):
    X = np.vstack([rng.normal(loc=3 * j, size=(n, d)) for j, n in enumerate(counts)])
    y = np.concatenate([np.full(n, 60 + j) for j, n in enumerate(counts)])
    return X, y


def on_segment(a, b, x, u, tol=1e-12):
    lo, hi = np.minimum(a, b) - tol, np.maximum(a, b) + tol
    return np.all((x >= lo) & (x <= hi)) and np.allclose(x, a + u * (b - a), atol=1e-12)


def neighbor_ranks(X, y, res):
    """Rank of each SMOTE neighbor among its base point's same-class neighbors."""
    ranks = []
    for (b, m, _), p in zip(res.origin, res.provenance):
        if p != resample.SMOTE:
            continue
        same = np.flatnonzero(y == y[b])
        others = same[same != b]
        d = ((X[others] - X[b]) ** 2).sum(axis=1)
        order = others[np.argsort(d, kind="stable")]
        ranks.append(int(np.flatnonzero(order == m)[0]))
    return ranks


def test_balanced_input_unchanged(rng):
    X, y = toy(rng, [10, 10, 10])
    res = resample.smote(X, y)
    assert np.array_equal(res.X, X) and np.array_equal(res.y, y)
    assert set(res.provenance) == {resample.ORIGINAL}


def test_two_sample_class_lies_on_segment(rng):
    X, y = toy(rng, [20, 2])
    res = resample.smote(X, y)
    a, b = X[y == 61]
    new = res.provenance == resample.SMOTE
    assert new.sum() == 18
    for x, (base, nbr, u) in zip(res.X[new], np.array(res.origin, dtype=object)[new]):
        assert 0 <= u < 1
        pa, pb = X[base], X[nbr]
        assert {tuple(pa), tuple(pb)} == {tuple(a), tuple(b)}
        assert on_segment(pa, pb, x, u)


def test_fifty_to_five(rng):
    X, y = toy(rng, [50, 5])
    res = resample.smote(X, y)
    _, counts = np.unique(res.y, return_counts=True)
    assert counts.tolist() == [50, 50]
    for x, lab, (b, m, u), p in zip(res.X, res.y, res.origin, res.provenance):
        if p == resample.SMOTE:
            assert lab == 61 and y[b] == 61 and y[m] == 61
            assert on_segment(X[b], X[m], x, u)
    # originals are untouched and come first
    assert np.array_equal(res.X[:55], X) and np.array_equal(res.y[:55], y)


@pytest.mark.parametrize("n_min, k", [(2, 1), (3, 2), (6, 5)])
def test_neighbor_count(rng, n_min, k):
    assert resample.neighbor_count([300, n_min]) == k
    X, y = toy(rng, [300, n_min])
    res = resample.smote(X, y)
    assert sorted(set(neighbor_ranks(X, y, res))) == list(range(k))


def test_neighbor_count_global_minimum():
    assert resample.neighbor_count([100, 40, 3]) == 2
    assert resample.neighbor_count([100, 40, 30]) == 5
    assert resample.neighbor_count([100, 1, 4]) == 3  # singletons do not set k


def test_singleton_duplicates_with_warning(rng):
    X, y = toy(rng, [8, 1])
    with pytest.warns(RuntimeWarning, match="single sample"):
        res = resample.smote(X, y, SmoteConfig(singleton_noise_sigma=0.01))
    dup = res.X[8 + 1:][res.y[9:] == 61]
    assert len(dup) == 7
    assert np.all(np.abs(dup - X[8]) < 0.1)


def test_smote_deterministic(rng):
    X, y = toy(rng, [30, 4, 9])
    a = resample.smote(X, y, SmoteConfig(seed=5))
    b = resample.smote(X, y, SmoteConfig(seed=5))
    c = resample.smote(X, y, SmoteConfig(seed=6))
    assert np.array_equal(a.X, b.X) and a.origin == b.origin
    assert not np.array_equal(a.X, c.X)


def test_refuses_test_split(rng):
    X, y = toy(rng, [5, 3])
    tags = ["train"] * 7 + ["test"]
    with pytest.raises(LeakageError):
        resample.smote(X, y, split=tags)
    with pytest.raises(LeakageError):
        resample.gaussian_augment(X, y, split=tags)
    resample.smote(X, y, split=["train"] * 8)


def test_augment_zero_sigma(rng):
    X, y = toy(rng, [5, 3])
    res = resample.gaussian_augment(X, y, AugmentConfig(noise_sigma=0.0))
    assert res.X.shape == (16, 4) and np.array_equal(res.X[8:], X)
    assert np.array_equal(res.y, np.concatenate([y, y]))


def test_augment_mean_shift_within_standard_error(rng):
    X = rng.normal(size=(4000, 6))
    y = np.zeros(4000, dtype=int)
    sigma = 0.5
    res = resample.gaussian_augment(X, y, AugmentConfig(noise_sigma=sigma, seed=2))
    shift = (res.X[4000:] - X).mean(axis=0)
    assert np.all(np.abs(shift) <= 3 * sigma / np.sqrt(4000))
    assert list(res.provenance[4000:]) == [resample.NOISE] * 4000
