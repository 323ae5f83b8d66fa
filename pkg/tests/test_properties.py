"""Property-based checks over randomly generated inputs."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from coingrade import features, imaging, metrics

grades = st.integers(min_value=50, max_value=68)


@st.composite
def prediction_sets(draw):
    n = draw(st.integers(min_value=1, max_value=80))
    truth = draw(st.lists(grades, min_size=n, max_size=n))
    pred = draw(st.lists(grades, min_size=n, max_size=n))
    return np.array(pred), np.array(truth)


@given(prediction_sets())
@settings(max_examples=150, deadline=None)
def test_report_invariants(pt):
    pred, truth = pt
    rep = metrics.classification_report(pred, truth)
    tol = [rep.tol_accuracy[t] for t in metrics.TOLERANCES]
    assert tol == sorted(tol)
    assert sum(r.support for r in rep.per_grade) == rep.n == len(truth) == rep.confusion.sum()
    assert abs(rep.weighted[1] - rep.exact_accuracy) < 1e-12
    assert all(0 <= v <= 1 for r in rep.per_grade for v in (r.precision, r.recall, r.f1))


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=8, max_side=20),
                  elements=st.floats(-4, 4, allow_nan=False)))
@settings(max_examples=60, deadline=None)
def test_sobel_magnitude_identity(gray):
    f = imaging.sobel(gray)
    assert np.all(np.abs(f.g ** 2 - (f.gx ** 2 + f.gy ** 2)) <= 1e-9 * np.maximum(f.g ** 2, 1e-300))


@given(st.integers(0, 2 ** 31), st.sampled_from([4, 8]))
@settings(max_examples=60, deadline=None)
def test_wedges_partition(seed, n):
    rng = np.random.default_rng(seed)
    mask = rng.random((30, 40)) < 0.6
    spec = imaging.WedgeSpec(n, (float(rng.uniform(0, 40)), float(rng.uniform(0, 30))), 10.0,
                             float(rng.uniform(0, 6.3)))
    assert np.array_equal(np.sum(imaging.wedge_masks(spec, mask), axis=0), mask.astype(int))


@given(hnp.arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 6)),
                  elements=st.floats(-1e3, 1e3, allow_nan=False)))
@settings(max_examples=100, deadline=None)
def test_standardization_round_trip(x):
    st_ = features.fit_standardization(x)
    assert np.allclose(st_.invert(st_.apply(x)), x, atol=1e-9, rtol=1e-12)


@given(st.floats(0, 360, exclude_max=True), st.floats(0, 1), st.floats(0, 1))
def test_brightness_bounded_and_peaks_at_h0(h, s, v):
    p = features.BrightnessParams()
    b = features.brightness(features.HsvTriple(h, s, v), p)
    assert 0 <= b <= 1
    assert features.brightness(features.HsvTriple(p.h0, s, v), p) >= b
