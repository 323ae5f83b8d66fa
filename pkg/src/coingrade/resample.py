"""Training-set rebalancing: SMOTE followed by Gaussian-noise copies.

Both transforms expect standardized features and must only ever see the
training split; passing ``split`` tags containing ``"test"`` raises.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import LeakageError

ORIGINAL, SMOTE, NOISE = "original", "smote", "noise"


@dataclass(frozen=True)
class SmoteConfig:
    k_max: int = 5
    target: str = "majority"
    seed: int = 0
    singleton_noise_sigma: float = 0.01

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.target != "majority":
            raise ValueError(f"unsupported SMOTE target policy {self.target!r}")


@dataclass(frozen=True)
class AugmentConfig:
    noise_sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass
class Resampled:
    """Output rows plus where each one came from.

    ``origin[i]`` is ``(base, neighbor, u)`` with indices into the input:
    originals are ``(i, -1, 0.0)``, SMOTE rows satisfy
    ``x = X[base] + u * (X[neighbor] - X[base])``, noise copies and
    singleton duplicates carry ``neighbor == -1``.
    """

    X: np.ndarray
    y: np.ndarray
    provenance: np.ndarray
    origin: list[tuple[int, int, float]]


def _refuse_test(split) -> None:
    if split is None:
        return
    tags = np.asarray(split, dtype=object)
    if np.any(tags == "test"):
        raise LeakageError("resampling received samples tagged as test split")


def neighbor_count(class_counts, k_max: int = 5) -> int:
    """k = min(k_max, n_min - 1), with n_min taken over classes that have >= 2 samples."""
    usable = [int(n) for n in class_counts if n >= 2]
    if not usable:
        return 0
    return min(k_max, min(usable) - 1)


def _nearest(xc: np.ndarray, k: int) -> np.ndarray:
    d2 = ((xc[:, None, :] - xc[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def smote(X, y, cfg: SmoteConfig = SmoteConfig(), split=None) -> Resampled:
    _refuse_test(split)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    target = int(counts.max())
    k = neighbor_count(counts, cfg.k_max)
    rng = np.random.default_rng(cfg.seed)

    rows = [X]
    labels = [y]
    prov = [np.full(len(y), ORIGINAL, dtype=object)]
    origin = [(i, -1, 0.0) for i in range(len(y))]
    for cls, n in zip(classes, counts):
        need = target - int(n)
        if need <= 0:
            continue
        idx = np.flatnonzero(y == cls)
        if n == 1:
            warnings.warn(f"class {int(cls)} has a single sample; duplicating with noise",
                          RuntimeWarning, stacklevel=2)
            base = np.repeat(idx, need)
            new = X[base] + rng.normal(0.0, cfg.singleton_noise_sigma, size=(need, X.shape[1]))
            origin += [(int(b), -1, 0.0) for b in base]
        else:
            nn = _nearest(X[idx], k)
            pick = rng.integers(0, n, size=need)
            which = rng.integers(0, k, size=need)
            u = rng.random(need)
            base = idx[pick]
            nbr = idx[nn[pick, which]]
            new = X[base] + u[:, None] * (X[nbr] - X[base])
            origin += [(int(b), int(m), float(t)) for b, m, t in zip(base, nbr, u)]
        rows.append(new)
        labels.append(np.full(need, cls, dtype=y.dtype))
        prov.append(np.full(need, SMOTE, dtype=object))
    return Resampled(X=np.vstack(rows), y=np.concatenate(labels),
                     provenance=np.concatenate(prov), origin=origin)


def gaussian_augment(X, y, cfg: AugmentConfig = AugmentConfig(), split=None,
                     provenance=None) -> Resampled:
    """Append one ``x + N(0, sigma^2 I)`` copy of every row."""
    _refuse_test(split)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    rng = np.random.default_rng(cfg.seed)
    noisy = X + rng.normal(0.0, 1.0, size=X.shape) * cfg.noise_sigma
    if provenance is None:
        provenance = np.full(len(y), ORIGINAL, dtype=object)
    n = len(y)
    return Resampled(
        X=np.vstack([X, noisy]), y=np.concatenate([y, y]),
        provenance=np.concatenate([np.asarray(provenance, dtype=object),
                                   np.full(n, NOISE, dtype=object)]),
        origin=[(i, -1, 0.0) for i in range(n)] * 2)
