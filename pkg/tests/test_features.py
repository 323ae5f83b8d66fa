import math
import warnings

import numpy as np
import pytest

from coingrade import features, imaging
from coingrade.errors import DegenerateDistribution, TooFewPoints
from coingrade.features import HsvTriple, BrightnessParams
from conftest import disk_rgb


def _field(gx, gy, mask):
    return imaging.GradientField(gx=gx, gy=gy, g=np.hypot(gx, gy), mask=mask)


def sort_oracle(values):
    s = sorted(float(v) for v in values)
    n = len(s)
    med = s[n // 2] if n % 2 else 0.5 * (s[n // 2 - 1] + s[n // 2])
    return s[0], s[-1], math.fsum(s) / n, med


# -- wedge statistics --------------------------------------------------------

def test_wedge_stats_small_example():
    mask = np.zeros((4, 4), dtype=bool)
    mask[0, :] = True
    gx = np.zeros((4, 4))
    gx[0] = [1, 2, 3, 4]
    out = features.wedge_gradient_stats(_field(gx, np.zeros((4, 4)), mask), [mask])
    assert out[:4].tolist() == [1.0, 4.0, 2.5, 2.5]


def test_wedge_stats_constant_plane():
    mask = np.ones((6, 6), dtype=bool)
    gx = np.full((6, 6), -0.75)
    out = features.wedge_gradient_stats(_field(gx, np.zeros((6, 6)), mask), [mask])
    assert np.all(out[:4] == -0.75)


def test_wedge_stats_sort_oracle_and_fast_path(rng):
    mask = rng.random((50, 60)) > 0.3
    gx = rng.normal(size=mask.shape) * mask
    gy = rng.normal(size=mask.shape) * mask
    f = _field(gx, gy, mask)
    spec = imaging.WedgeSpec(8, (30.0, 25.0), 30.0)
    labels = imaging.wedge_labels(spec, mask)
    wedges = [labels == k for k in range(8)]
    slow = features.wedge_gradient_stats(f, wedges)
    fast = features._wedge_stats_fast(f, labels, 8)
    for k in range(8):
        for p, plane in enumerate((f.gx, f.gy, f.g)):
            mn, mx, mean, med = sort_oracle(plane[wedges[k]])
            block = slow[12 * k + 4 * p:12 * k + 4 * p + 4]
            assert block[0] == mn and block[1] == mx and block[3] == med
            assert block[2] == pytest.approx(mean, rel=1e-12, abs=1e-15)
            assert block[0] <= block[3] <= block[1] and block[0] <= block[2] <= block[1]
    assert np.allclose(fast, slow, rtol=1e-12, atol=1e-15)


def test_empty_wedge_warns_and_zeros():
    mask = np.zeros((8, 8), dtype=bool)
    mask[0, 0] = True
    f = _field(np.ones((8, 8)), np.ones((8, 8)), mask)
    with pytest.warns(RuntimeWarning, match="empty"):
        out = features.wedge_gradient_stats(f, [mask, np.zeros_like(mask)])
    assert not out[12:].any()


# -- color -------------------------------------------------------------------

def _coin(color):
    img, disk = disk_rgb(size=128, radius=50, color=color)
    return imaging.CoinImage(pixels=img, mask=disk, center=(63.5, 63.5), radius=50.0)


def test_mean_hsv_pure_red():
    h = features.mean_hsv(_coin((255, 0, 0)))
    assert (h.h, h.s, h.v) == (0.0, 1.0, 1.0)


def test_mean_hsv_gray():
    h = features.mean_hsv(_coin((128, 128, 128)))
    assert h.s == 0.0
    assert h.v == pytest.approx(128 / 255, abs=1e-12)
    assert h.v == pytest.approx(0.502, abs=5e-4)


def test_circular_mean_across_seam():
    m = features.circular_mean_deg(np.array([10.0, 350.0] * 50))
    assert min(m, 360 - m) < 1e-9


def test_rgb_to_hsv_matches_colorsys(rng):
    import colorsys
    px = rng.integers(0, 256, size=(200, 3))
    ours = features.rgb_to_hsv(px.astype(np.uint8))
    for p, o in zip(px, ours):
        h, s, v = colorsys.rgb_to_hsv(*(p / 255.0))
        assert o[1] == pytest.approx(s, abs=1e-12) and o[2] == pytest.approx(v, abs=1e-12)
        assert abs(features.hue_difference(o[0], h * 360)) < 1e-9


# -- brightness --------------------------------------------------------------

def test_brightness_examples():
    p = BrightnessParams()
    assert features.brightness(HsvTriple(50.0, 1.0, 1.0), p) == 1.0
    assert features.brightness(HsvTriple(123.0, 0.0, 0.7), p) == 0.0
    assert features.brightness(HsvTriple(70.0, 1.0, 1.0), p) == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert features.brightness(HsvTriple(70.0, 1.0, 1.0), p) == pytest.approx(0.6065, abs=1e-4)


def test_brightness_monotone(rng):
    p = BrightnessParams()
    for _ in range(200):
        h, s, v = rng.uniform(0, 360), rng.random(), rng.random()
        b = features.brightness(HsvTriple(h, s, v), p)
        assert features.brightness(HsvTriple(h, min(1, s + 0.1), v), p) >= b
        assert features.brightness(HsvTriple(h, s, min(1, v + 0.1)), p) >= b
        assert features.brightness(HsvTriple(p.h0, s, v), p) >= b


def test_brightness_levels_percentiles():
    lv = features.fit_brightness_levels(np.arange(1, 101, dtype=float))
    assert np.allclose(lv.thresholds, [20.2, 40.4, 60.6, 80.8], atol=1e-9)
    counts = np.bincount([lv.level(b) for b in range(1, 101)], minlength=5)
    assert np.all(np.abs(counts - 20) <= 1)


def test_brightness_levels_degenerate():
    with pytest.raises(DegenerateDistribution):
        features.fit_brightness_levels([0.4] * 30)
    with pytest.raises(TooFewPoints):
        features.fit_brightness_levels([0.1, 0.2])


# -- color clusters ----------------------------------------------------------

def _five_points():
    return np.array([[10, .2, .3, 20, .2, .3], [40, .5, .5, 40, .5, .6], [60, .7, .7, 55, .8, .8],
                     [90, .3, .9, 80, .4, .9], [200, .9, .2, 210, .8, .3]], dtype=float)


def test_kmeans_five_points_own_clusters():
    m = features.fit_color_clusters(_five_points(), k=5, seed=0)
    assert m.inertia == 0.0
    got = sorted(map(tuple, np.round(m.centroids, 9)))
    assert got == sorted(map(tuple, np.round(_five_points(), 9)))


def test_kmeans_too_few_distinct():
    pts = np.vstack([_five_points()[:4]] * 3)
    with pytest.raises(TooFewPoints):
        features.fit_color_clusters(pts, k=5)


def _mixture(rng, n_per=100, sep=0.25, sd=0.02):
    means = np.array([[40 + 60 * j, 0.2 + 0.15 * j, 0.3 + 0.1 * j] * 2 for j in range(5)], float)
    means[:, 3] += 10
    comp = np.repeat(np.arange(5), n_per)
    scale = np.array([360, 1, 1, 360, 1, 1]) * sd
    return means[comp] + rng.normal(size=(len(comp), 6)) * scale, comp, means


def test_kmeans_recovers_mixture(rng):
    x, comp, means = _mixture(rng)
    m = features.fit_color_clusters(x, k=5, seed=3)
    assigned = np.array([features.assign_color_cluster(m, p) for p in x])
    # map each generating component to the centroid nearest its mean
    nearest = np.array([features.assign_color_cluster(m, mu) for mu in means])
    assert len(set(nearest)) == 5
    assert np.mean(assigned == nearest[comp]) >= 0.99


def test_lloyd_invariant_and_monotone_inertia(rng):
    x, _, _ = _mixture(rng, n_per=40, sd=0.15)
    z = features._cluster_space(x)
    start = z[rng.choice(len(z), 5, replace=False)]
    centers, labels, hist = features.lloyd(z, start)
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))
    d2 = features._sq_dists(z, centers)
    assert np.all(d2[np.arange(len(z)), labels] <= d2.min(axis=1) + 1e-12)


def test_assign_exact_tie_and_oracle(rng):
    c = _five_points()
    m = features.ColorClusterModel(k=5, centroids=c)
    assert features.assign_color_cluster(m, c[3]) == 3
    # equidistant (distance 1) from centroids 1 and 4, far from the rest
    m3 = features.ColorClusterModel(k=5, centroids=np.array(
        [[0, 5, 5, 0, 0, 0], [0, 1, 0, 0, 0, 0], [0, 0, 9, 0, 0, 0], [0, 0, 0, 0, 9, 0], [0, -1, 0, 0, 0, 0]], float))
    assert features.assign_color_cluster(m3, [0, 0, 0, 0, 0, 0]) == 1
    cs = features._cluster_space(c)
    for _ in range(100):
        p = c[rng.integers(5)] + rng.normal(size=6) * [40, .3, .3, 40, .3, .3]
        d = ((features._cluster_space(p)[0] - cs) ** 2).sum(axis=1)
        assert features.assign_color_cluster(m, p) == int(np.argmin(d))


# -- assembly ----------------------------------------------------------------

def _models():
    clusters = features.ColorClusterModel(k=5, centroids=_five_points())
    return features.FeatureModels(clusters=clusters,
                                  levels=features.BrightnessLevels((0.2, 0.4, 0.6, 0.8)))


def _coin_rgb(seed=0):
    from coingrade.dataset import render_coin
    return render_coin(64, seed=seed, size=128)[:2]


def test_feature_vector_layout():
    assert features.FEATURE_DIM == 202
    assert features.SLOT["obv_w0_gx_min"] == 0
    assert features.SLOT["rev_w0_gx_min"] == 96
    assert features.SLOT["obv_h"] == 192 and features.SLOT["rev_v"] == 197
    assert features.SLOT["color_cluster"] == 198
    assert features.SLOT["service"] == 201
    assert len(set(features.FEATURE_NAMES)) == 202


def test_identical_sides_and_service_slot():
    obv, _ = _coin_rgb()
    m = _models()
    v = features.build_feature_vector(obv, obv, "PCGS", m)
    assert v.shape == (202,)
    assert np.array_equal(v[:96], v[96:192])
    assert v[201] == 0.0
    assert features.build_feature_vector(obv, obv, "NGC", m)[201] == 1.0
    with pytest.raises(ValueError):
        features.service_code("ANACS")


def test_feature_vector_deterministic():
    obv, rev = _coin_rgb(7)
    m = _models()
    a = features.build_feature_vector(obv, rev, "NGC", m)
    b = features.build_feature_vector(obv.copy(), rev.copy(), "NGC", m)
    assert a.tobytes() == b.tobytes()


def test_feature_models_round_trip():
    m = _models()
    assert features.FeatureModels.from_dict(m.to_dict()) .to_dict() == m.to_dict()


# -- standardization ---------------------------------------------------------

def test_standardization_properties(rng):
    x = rng.normal(3.0, 5.0, size=(200, 10))
    x[:, 4] = 7.25
    st = features.fit_standardization(x)
    z = features.apply_standardization(st, x)
    live = [i for i in range(10) if i != 4]
    assert np.all(np.abs(z[:, live].mean(axis=0)) < 1e-10)
    assert np.all(np.abs(z[:, live].var(axis=0) - 1) < 1e-6)
    assert not z[:, 4].any()
    assert np.allclose(st.invert(z), x, atol=1e-9, rtol=0)
