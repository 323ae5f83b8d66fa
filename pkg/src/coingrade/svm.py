"""RBF-kernel SVM baseline: one-vs-one binary SVMs solved with SMO.

The binary solver follows the usual maximal-violating-pair scheme with
second-order working-set selection; it stops once the KKT gap
``m(alpha) - M(alpha)`` falls below ``kkt_tolerance``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np

from . import modelio
from .errors import ShapeMismatch, SingleClass
from .features import StandardizationStats

KIND = "coingrade-svm"
TAU = 1e-12


@dataclass(frozen=True)
class SvmConfig:
    c: float = 1.0
    gamma: float | str = "scale"
    kkt_tolerance: float = 1e-3
    max_passes: int = 100_000

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("C must be positive")
        if isinstance(self.gamma, str):
            if self.gamma != "scale":
                raise ValueError(f"gamma must be 'scale' or a positive number, got {self.gamma!r}")
        elif not self.gamma > 0:
            raise ValueError("gamma must be positive")


def resolve_gamma(gamma, X: np.ndarray) -> float:
    if gamma == "scale":
        var = float(np.asarray(X).var())
        return 1.0 / (X.shape[1] * var) if var > 0 else 1.0
    return float(gamma)


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


@dataclass
class BinarySolution:
    alpha: np.ndarray
    rho: float
    iterations: int
    gap: float


def smo(K: np.ndarray, y: np.ndarray, c: float, tol: float = 1e-3,
        max_iter: int = 100_000) -> BinarySolution:
    """Solve ``min 1/2 a'Qa - e'a`` s.t. ``0 <= a <= C``, ``y'a = 0``.

    ``K`` is the kernel matrix, ``y`` holds +1/-1.  The decision function is
    ``f(x) = sum_i a_i y_i k(x_i, x) - rho``.
    """
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    Q = (y[:, None] * y[None, :]) * K
    diag = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    gap = np.inf
    while it < max_iter:
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
        score = -y * G
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.flatnonzero(up)[np.argmax(score[up])])
        m_val = score[i]
        M_val = score[low].min()
        gap = m_val - M_val
        if gap < tol:
            break
        # second-order choice of j among violators in I_low
        cand = low & (score < m_val)
        b = m_val - score[cand]
        a = diag[i] + diag[cand] - 2.0 * y[i] * y[cand] * Q[i, cand]
        a = np.where(a > 0, a, TAU)
        j = int(np.flatnonzero(cand)[np.argmin(-(b * b) / a)])

        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = diag[i] + diag[j] + 2.0 * Q[i, j]
            quad = quad if quad > 0 else TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            else:
                if ai < 0:
                    ai, aj = 0.0, -diff
            if diff > 0:
                if ai > c:
                    ai, aj = c, c - diff
            else:
                if aj > c:
                    aj, ai = c, c + diff
        else:
            quad = diag[i] + diag[j] - 2.0 * Q[i, j]
            quad = quad if quad > 0 else TAU
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > c:
                if ai > c:
                    ai, aj = c, total - c
            else:
                if aj < 0:
                    aj, ai = 0.0, total
            if total > c:
                if aj > c:
                    aj, ai = c, total - c
            else:
                if ai < 0:
                    ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += Q[:, i] * (ai - ai_old) + Q[:, j] * (aj - aj_old)
        it += 1

    yG = y * G
    free = (alpha > 0) & (alpha < c)
    if free.any():
        rho = float(yG[free].mean())
    else:
        ub, lb = np.inf, -np.inf
        at_low = alpha <= 0
        at_up = alpha >= c
        for t in range(n):
            if (at_up[t] and y[t] < 0) or (at_low[t] and y[t] > 0):
                ub = min(ub, yG[t])
            elif (at_up[t] and y[t] > 0) or (at_low[t] and y[t] < 0):
                lb = max(lb, yG[t])
        rho = float((ub + lb) / 2.0) if np.isfinite(ub) and np.isfinite(lb) else float(
            ub if np.isfinite(ub) else lb)
    return BinarySolution(alpha=alpha, rho=rho, iterations=it, gap=float(gap))


@dataclass
class PairModel:
    pos: int            # grade voted for when f(x) > 0
    neg: int
    sv: np.ndarray      # indices into SvmModel.support_vectors
    coef: np.ndarray    # alpha_i * y_i
    rho: float
    alpha: np.ndarray   # unsigned duals for the same rows as ``sv``

    def decision(self, Ksv: np.ndarray) -> np.ndarray:
        return Ksv[:, self.sv] @ self.coef - self.rho


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    pairs: list[PairModel]
    label_map: list[int]
    gamma: float
    c: float
    stats: StandardizationStats | None = None
    config: dict = field(default_factory=dict)

    def decision_values(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.support_vectors.shape[1]:
            raise ShapeMismatch(f"expected {self.support_vectors.shape[1]} features, got {X.shape[1]}")
        Ksv = rbf_kernel(X, self.support_vectors, self.gamma)
        return np.stack([p.decision(Ksv) for p in self.pairs], axis=1)


def svm_train(X, grades, cfg: SvmConfig = SvmConfig(),
              stats: StandardizationStats | None = None) -> SvmModel:
    """One-vs-one RBF SVMs on already standardized features."""
    X = np.asarray(X, dtype=np.float64)
    grades = np.asarray(grades).astype(np.int64)
    label_map = sorted(int(g) for g in np.unique(grades))
    if len(label_map) < 2:
        raise SingleClass("the SVM needs at least two grades in the training data")
    gamma = resolve_gamma(cfg.gamma, X)
    K = rbf_kernel(X, X, gamma)

    raw_pairs = []
    used = set()
    for a, b in combinations(label_map, 2):
        idx = np.flatnonzero((grades == a) | (grades == b))
        y = np.where(grades[idx] == a, 1.0, -1.0)
        sol = smo(K[np.ix_(idx, idx)], y, cfg.c, cfg.kkt_tolerance, cfg.max_passes)
        keep = sol.alpha > 0
        rows = idx[keep]
        used.update(rows.tolist())
        raw_pairs.append((a, b, rows, sol.alpha[keep] * y[keep], sol.rho, sol.alpha[keep]))

    sv_rows = np.array(sorted(used), dtype=np.int64)
    where = {r: i for i, r in enumerate(sv_rows.tolist())}
    pairs = [PairModel(pos=a, neg=b, sv=np.array([where[r] for r in rows.tolist()], dtype=np.int64),
                       coef=coef, rho=rho, alpha=alpha)
             for a, b, rows, coef, rho, alpha in raw_pairs]
    return SvmModel(support_vectors=X[sv_rows], pairs=pairs, label_map=label_map, gamma=gamma,
                    c=cfg.c, stats=stats, config=asdict(cfg))


def vote(model: SvmModel, dec: np.ndarray) -> np.ndarray:
    """Majority vote over pairwise decisions; ties go to the lowest grade."""
    col = {g: i for i, g in enumerate(model.label_map)}
    votes = np.zeros((dec.shape[0], len(model.label_map)), dtype=np.int64)
    for p, pair in enumerate(model.pairs):
        winner = np.where(dec[:, p] > 0, col[pair.pos], col[pair.neg])
        np.add.at(votes, (np.arange(dec.shape[0]), winner), 1)
    return np.asarray(model.label_map)[np.argmax(votes, axis=1)]


def svm_predict_standardized(model: SvmModel, X) -> np.ndarray:
    return vote(model, model.decision_values(X))


def svm_predict(model: SvmModel, X_raw) -> np.ndarray:
    """Grades for raw (unstandardized) feature vectors."""
    X = np.atleast_2d(np.asarray(X_raw, dtype=np.float64))
    if model.stats is not None:
        X = model.stats.apply(X)
    return svm_predict_standardized(model, X)


def save(model: SvmModel, path, config: dict | None = None) -> None:
    modelio.write_model(path, KIND, {
        "kernel": "rbf", "gamma": model.gamma, "c": model.c,
        "label_map": model.label_map,
        "support_vectors": model.support_vectors.tolist(),
        "pairs": [{"pos": p.pos, "neg": p.neg, "sv": p.sv.tolist(), "coef": p.coef.tolist(),
                   "alpha": p.alpha.tolist(), "rho": p.rho} for p in model.pairs],
        "standardization": model.stats.to_dict() if model.stats is not None else None,
        "train_config": model.config,
        "config": config or {},
    })


def load(path) -> SvmModel:
    body = modelio.read_model(path, KIND)
    sv = np.array(body["support_vectors"], dtype=np.float64)
    pairs = [PairModel(pos=int(p["pos"]), neg=int(p["neg"]), sv=np.array(p["sv"], dtype=np.int64),
                       coef=np.array(p["coef"], dtype=np.float64), rho=float(p["rho"]),
                       alpha=np.array(p["alpha"], dtype=np.float64)) for p in body["pairs"]]
    stats = body.get("standardization")
    return SvmModel(support_vectors=sv.reshape(-1, sv.shape[-1]) if sv.size else sv, pairs=pairs,
                    label_map=[int(g) for g in body["label_map"]], gamma=float(body["gamma"]),
                    c=float(body["c"]), stats=StandardizationStats.from_dict(stats) if stats else None,
                    config=body.get("train_config") or {})
