"""The 202-slot numismatic feature vector.

Per side: 8 wedges x (gx, gy, g) x (min, max, mean, median) = 96 edge
statistics plus a mean HSV triple.  Per coin: a color-cluster index,
one brightness level per side, and the grading-service flag.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import imaging
from .errors import DegenerateDistribution, TooFewPoints

LAYOUT_VERSION = "coingrade-features-v1"

N_WEDGES = 8
PLANES = ("gx", "gy", "g")
STATS = ("min", "max", "mean", "median")
EDGE_STATS_PER_SIDE = N_WEDGES * len(PLANES) * len(STATS)

COLOR_LABELS = ("Rustic Gold", "Golden Bronze", "Autumn Gold", "Golden Sand", "Sunlit Gold")
BRIGHTNESS_LABELS = ("Dim", "Soft", "Bright", "Vivid", "Brilliant")
SERVICES = {"PCGS": 0, "NGC": 1}


def _layout() -> list[str]:
    names = []
    for side in ("obv", "rev"):
        for k in range(N_WEDGES):
            for plane in PLANES:
                for stat in STATS:
                    names.append(f"{side}_w{k}_{plane}_{stat}")
    names += ["obv_h", "obv_s", "obv_v", "rev_h", "rev_s", "rev_v",
              "color_cluster", "obv_brightness_level", "rev_brightness_level", "service"]
    return names


FEATURE_NAMES: tuple[str, ...] = tuple(_layout())
FEATURE_DIM = len(FEATURE_NAMES)
SLOT = {name: i for i, name in enumerate(FEATURE_NAMES)}

assert FEATURE_DIM == 202


def service_code(service) -> int:
    if isinstance(service, str):
        key = service.strip().upper()
        if key not in SERVICES:
            raise ValueError(f"unknown grading service {service!r}; expected PCGS or NGC")
        return SERVICES[key]
    code = int(service)
    if code not in (0, 1):
        raise ValueError(f"service code must be 0 or 1, got {service!r}")
    return code


@dataclass(frozen=True)
class HsvTriple:
    h: float
    s: float
    v: float

    def __iter__(self):
        return iter((self.h, self.s, self.v))


@dataclass(frozen=True)
class BrightnessParams:
    h0: float = 50.0
    sigma_h: float = 20.0

    def __post_init__(self):
        if not self.sigma_h > 0:
            raise ValueError("sigma_h must be positive")


# -- edge statistics ---------------------------------------------------------

def wedge_gradient_stats(field: imaging.GradientField, wedges) -> np.ndarray:
    """[min, max, mean, median] of gx, gy, g inside each wedge, wedge-major."""
    out = np.zeros(len(wedges) * 12)
    for k, wmask in enumerate(wedges):
        if not np.any(wmask):
            warnings.warn(f"wedge {k} is empty; emitting zeros", RuntimeWarning, stacklevel=2)
            continue
        for p, plane in enumerate((field.gx, field.gy, field.g)):
            vals = plane[wmask]
            base = 12 * k + 4 * p
            out[base] = vals.min()
            out[base + 1] = vals.max()
            out[base + 2] = vals.mean()
            out[base + 3] = np.median(vals)
    return out


def _wedge_stats_fast(field: imaging.GradientField, labels: np.ndarray, n: int) -> np.ndarray:
    # same numbers as wedge_gradient_stats, but one pass over the mask
    idx = labels[field.mask]
    order = np.argsort(idx, kind="stable")
    idx = idx[order]
    cuts = np.searchsorted(idx, np.arange(n + 1))
    out = np.zeros(n * 12)
    for p, plane in enumerate((field.gx, field.gy, field.g)):
        vals = plane[field.mask][order]
        for k in range(n):
            seg = vals[cuts[k]:cuts[k + 1]]
            if seg.size == 0:
                if p == 0:
                    warnings.warn(f"wedge {k} is empty; emitting zeros", RuntimeWarning,
                                  stacklevel=3)
                continue
            base = 12 * k + 4 * p
            out[base] = seg.min()
            out[base + 1] = seg.max()
            out[base + 2] = seg.mean()
            out[base + 3] = np.median(seg)
    return out


# -- color -------------------------------------------------------------------

def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Hexcone RGB -> HSV. Input uint8 or [0,1] floats (..., 3); hue in degrees."""
    rgb = np.asarray(rgb)
    if rgb.dtype == np.uint8:
        rgb = rgb.astype(np.float64) / 255.0
    else:
        rgb = rgb.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = np.max(rgb, axis=-1)
    mn = np.min(rgb, axis=-1)
    delta = mx - mn
    v = mx
    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    h = np.zeros_like(mx)
    rmax = (mx == r) & (delta > 0)
    gmax = (mx == g) & (delta > 0) & ~rmax
    bmax = (delta > 0) & ~rmax & ~gmax
    h = np.where(rmax, np.mod((g - b) / safe, 6.0), h)
    h = np.where(gmax, (b - r) / safe + 2.0, h)
    h = np.where(bmax, (r - g) / safe + 4.0, h)
    h = np.mod(h * 60.0, 360.0)
    return np.stack([h, s, v], axis=-1)


def circular_mean_deg(h: np.ndarray) -> float:
    rad = np.deg2rad(h)
    m = math.degrees(math.atan2(float(np.mean(np.sin(rad))), float(np.mean(np.cos(rad)))))
    m = m % 360.0
    return 0.0 if m >= 360.0 else m


def mean_hsv(img: imaging.CoinImage) -> HsvTriple:
    hsv = rgb_to_hsv(img.pixels[img.mask])
    return HsvTriple(h=circular_mean_deg(hsv[:, 0]),
                     s=float(hsv[:, 1].mean()), v=float(hsv[:, 2].mean()))


def hue_difference(h: float, h0: float) -> float:
    """Signed difference on the hue circle, in [-180, 180)."""
    return (h - h0 + 180.0) % 360.0 - 180.0


def brightness(hsv: HsvTriple, params: BrightnessParams = BrightnessParams()) -> float:
    dh = hue_difference(hsv.h, params.h0)
    return math.sqrt(hsv.s * hsv.v) * math.exp(-(dh * dh) / (2.0 * params.sigma_h ** 2))


# -- color clusters ----------------------------------------------------------

HUE_SCALE = 1.0 / 360.0


def _cluster_space(points: np.ndarray) -> np.ndarray:
    # hue columns (0 and 3) rescaled so degrees do not swamp S and V
    pts = np.array(points, dtype=np.float64, ndmin=2)
    pts[:, 0] *= HUE_SCALE
    pts[:, 3] *= HUE_SCALE
    return pts


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            i = int(rng.integers(n))
        else:
            i = int(rng.choice(n, p=d2 / total))
        centers.append(x[i])
        d2 = np.minimum(d2, ((x - x[i]) ** 2).sum(axis=1))
    return np.array(centers)


def lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int = 300):
    """Lloyd iterations until assignments stop changing.

    Returns ``(centers, labels, inertia_history)``.  Empty clusters are
    re-seeded at the point currently farthest from its centroid.
    """
    centers = centers.copy()
    rows = np.arange(len(x))
    d2 = _sq_dists(x, centers)
    labels = np.argmin(d2, axis=1)
    history = [float(d2[rows, labels].sum())]
    for _ in range(max_iter):
        own = d2[rows, labels].copy()
        for j in range(centers.shape[0]):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
            else:
                far = int(np.argmax(own))
                centers[j] = x[far]
                own[far] = 0.0
        d2 = _sq_dists(x, centers)
        new = np.argmin(d2, axis=1)
        history.append(float(d2[rows, new].sum()))
        if np.array_equal(new, labels):
            break
        labels = new
    return centers, labels, history


@dataclass(frozen=True)
class ColorClusterModel:
    k: int
    centroids: np.ndarray  # (k, 6), hue in degrees
    labels: tuple[str, ...] = COLOR_LABELS
    inertia: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.centroids)
        if c.shape != (self.k, 6):
            raise ValueError(f"expected {self.k} centroids of dimension 6, got {c.shape}")
        if len(np.unique(c.round(12), axis=0)) != self.k:
            raise ValueError("centroids must be distinct")

    def to_dict(self) -> dict:
        return {"k": self.k, "centroids": np.asarray(self.centroids).tolist(),
                "labels": list(self.labels), "inertia": self.inertia}

    @classmethod
    def from_dict(cls, d: dict) -> "ColorClusterModel":
        return cls(k=int(d["k"]), centroids=np.array(d["centroids"], dtype=np.float64),
                   labels=tuple(d["labels"]), inertia=float(d.get("inertia", 0.0)))


def _brightness_proxy(centroids: np.ndarray) -> np.ndarray:
    c = np.asarray(centroids)
    return 0.5 * (np.sqrt(c[:, 1] * c[:, 2]) + np.sqrt(c[:, 4] * c[:, 5]))


def fit_color_clusters(points, k: int = 5, seed: int = 0, n_init: int = 10,
                       max_iter: int = 300) -> ColorClusterModel:
    """k-means (k-means++ seeding, best of ``n_init`` runs) on per-coin mean HSV.

    Clusters come back ordered darkest to brightest by sqrt(S*V), so index 0
    is "Rustic Gold" and index 4 "Sunlit Gold".
    """
    raw = np.array(points, dtype=np.float64, ndmin=2)
    if raw.shape[1] != 6:
        raise ValueError(f"expected 6-dimensional points, got {raw.shape[1]}")
    x = _cluster_space(raw)
    if len(np.unique(x, axis=0)) < k:
        raise TooFewPoints(f"need at least {k} distinct points to fit {k} clusters")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers, labels, history = lloyd(x, _kmeans_pp(x, k, rng), max_iter)
        if best is None or history[-1] < best[2]:
            best = (centers, labels, history[-1])
    centers = best[0].copy()
    centers[:, 0] /= HUE_SCALE
    centers[:, 3] /= HUE_SCALE
    order = np.argsort(_brightness_proxy(centers), kind="stable")
    return ColorClusterModel(k=k, centroids=centers[order], inertia=best[2])


def assign_color_cluster(model: ColorClusterModel, point) -> int:
    d2 = _sq_dists(_cluster_space(point), _cluster_space(model.centroids))[0]
    return int(np.argmin(d2))  # argmin keeps the lowest index on ties


# -- brightness levels -------------------------------------------------------

@dataclass(frozen=True)
class BrightnessLevels:
    thresholds: tuple[float, float, float, float]
    labels: tuple[str, ...] = BRIGHTNESS_LABELS

    def __post_init__(self):
        t = self.thresholds
        if len(t) != 4 or any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("thresholds must be 4 strictly ascending values")

    def level(self, b: float) -> int:
        return int(np.searchsorted(np.asarray(self.thresholds), b, side="right"))

    def to_dict(self) -> dict:
        return {"thresholds": list(self.thresholds), "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, d: dict) -> "BrightnessLevels":
        return cls(thresholds=tuple(float(v) for v in d["thresholds"]), labels=tuple(d["labels"]))


def fit_brightness_levels(values) -> BrightnessLevels:
    """Quintile thresholds; percentile position p*(n+1) between order statistics."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 5:
        raise TooFewPoints("need at least 5 brightness values")
    if np.all(v == v[0]):
        raise DegenerateDistribution("all brightness values are identical")
    t = np.percentile(v, [20, 40, 60, 80], method="weibull")
    if np.any(np.diff(t) <= 0):
        raise DegenerateDistribution(f"brightness quintiles are not distinct: {t.tolist()}")
    return BrightnessLevels(thresholds=tuple(float(x) for x in t))


# -- per-side extraction and assembly ----------------------------------------

@dataclass
class SideFeatures:
    edge: np.ndarray         # 96 values
    hsv: HsvTriple
    timings: dict = field(default_factory=dict)


def extract_side(rgb: np.ndarray, cfg: imaging.PreprocessConfig = imaging.PreprocessConfig(),
                 start_angle: float = 0.0) -> SideFeatures:
    """Everything that depends on one image alone; no fitted model needed."""
    t0 = time.perf_counter()
    pre = imaging.preprocess(rgb, cfg)
    t1 = time.perf_counter()
    field_ = imaging.sobel(pre.blurred, pre.coin.mask)
    t2 = time.perf_counter()
    spec = imaging.WedgeSpec(N_WEDGES, pre.coin.center, pre.coin.radius, start_angle)
    edge = _wedge_stats_fast(field_, imaging.wedge_labels(spec, pre.coin.mask), N_WEDGES)
    t3 = time.perf_counter()
    hsv = mean_hsv(pre.coin)
    t4 = time.perf_counter()
    return SideFeatures(edge=edge, hsv=hsv, timings={
        "preprocess": t1 - t0, "sobel": t2 - t1, "wedge_stats": t3 - t2, "hsv_brightness": t4 - t3})


@dataclass(frozen=True)
class FeatureModels:
    """The unsupervised fits a feature vector depends on."""

    clusters: ColorClusterModel
    levels: BrightnessLevels
    params: BrightnessParams = BrightnessParams()

    def to_dict(self) -> dict:
        return {"layout_version": LAYOUT_VERSION, "clusters": self.clusters.to_dict(),
                "levels": self.levels.to_dict(),
                "params": {"h0": self.params.h0, "sigma_h": self.params.sigma_h}}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureModels":
        return cls(clusters=ColorClusterModel.from_dict(d["clusters"]),
                   levels=BrightnessLevels.from_dict(d["levels"]),
                   params=BrightnessParams(**d["params"]))


def fit_feature_models(sides: list[tuple[SideFeatures, SideFeatures]], seed: int = 0,
                       params: BrightnessParams = BrightnessParams(), k: int = 5,
                       n_init: int = 10, max_iter: int = 300) -> FeatureModels:
    """Fit color clusters and brightness quintiles on training coins only.

    Brightness thresholds pool the obverse and reverse values.
    """
    points = [tuple(o.hsv) + tuple(r.hsv) for o, r in sides]
    b = [brightness(s.hsv, params) for pair in sides for s in pair]
    clusters = fit_color_clusters(points, k=k, seed=seed, n_init=n_init, max_iter=max_iter)
    return FeatureModels(clusters=clusters,
                         levels=fit_brightness_levels(b), params=params)


def assemble(obv: SideFeatures, rev: SideFeatures, service, models: FeatureModels) -> np.ndarray:
    v = np.empty(FEATURE_DIM)
    v[:EDGE_STATS_PER_SIDE] = obv.edge
    v[EDGE_STATS_PER_SIDE:2 * EDGE_STATS_PER_SIDE] = rev.edge
    point = tuple(obv.hsv) + tuple(rev.hsv)
    v[SLOT["obv_h"]:SLOT["rev_v"] + 1] = point
    v[SLOT["color_cluster"]] = assign_color_cluster(models.clusters, point)
    v[SLOT["obv_brightness_level"]] = models.levels.level(brightness(obv.hsv, models.params))
    v[SLOT["rev_brightness_level"]] = models.levels.level(brightness(rev.hsv, models.params))
    v[SLOT["service"]] = service_code(service)
    return v


def build_feature_vector(obv, rev, service, models: FeatureModels,
                         cfg: imaging.PreprocessConfig = imaging.PreprocessConfig()) -> np.ndarray:
    """Full 202-slot vector for one coin from its two RGB rasters."""
    return assemble(extract_side(obv, cfg), extract_side(rev, cfg), service, models)


# -- standardization ---------------------------------------------------------

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def invert(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationStats":
        return cls(mean=np.array(d["mean"], dtype=np.float64), std=np.array(d["std"], dtype=np.float64))


def fit_standardization(train) -> StandardizationStats:
    x = np.array(train, dtype=np.float64, ndmin=2)
    if x.shape[0] < 2:
        raise TooFewPoints("need at least 2 training vectors to standardize")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    const = np.all(x == x[0], axis=0)
    mean[const] = x[0, const]  # exact zeros for constant slots
    std = np.where(std < STD_FLOOR, STD_FLOOR, std)
    return StandardizationStats(mean=mean, std=std)


def apply_standardization(stats: StandardizationStats, v) -> np.ndarray:
    return stats.apply(v)
