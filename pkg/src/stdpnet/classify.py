"""Two C2 classifiers: probability-ratio voting and one-vs-one linear max-margin."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

RATIO_GRID = (1.5, 2.0, 3.0, 5.0, 10.0)
ACTIVITY_FRACTION = 0.5
STD_FLOOR = 1e-9


def _classes(labels: Sequence[str]) -> list[str]:
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise InvalidInputError(f"need at least 2 classes, got {classes}")
    return classes


def _check_rows(x: np.ndarray, labels) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != len(labels):
        raise InvalidInputError("features must be a 2-D array with one row per label")
    return x


def activity_thresholds(x: np.ndarray, fraction: float = ACTIVITY_FRACTION) -> np.ndarray:
    """Per-feature activity threshold: ``fraction`` of the column maximum."""
    return fraction * np.asarray(x, dtype=np.float64).max(axis=0)


def binarize(x: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    return np.asarray(x) > thresholds


def _vote(n_classes: int, pairs, winners, side_scores) -> int:
    """Majority vote; ties by total score, then lowest class index."""
    votes = np.zeros(n_classes)
    totals = np.zeros(n_classes)
    for (a, b), win, (sa, sb) in zip(pairs, winners, side_scores):
        if win is not None:
            votes[win] += 1
        totals[a] += sa
        totals[b] += sb
    top = np.flatnonzero(votes == votes.max())
    if top.size > 1:
        best = totals[top].max()
        top = top[totals[top] == best]
    return int(top[0])


# -- simple probability-ratio classifier -----------------------------------------------


@dataclass
class SimplePair:
    """Decision data for classes ``a`` < ``b``.

    ``selected_a`` holds features whose smoothed ratio p_a/p_b exceeds
    ``threshold_a``; ``selected_b`` likewise for p_b/p_a and ``threshold_b``.
    """

    a: int
    b: int
    threshold_a: float
    threshold_b: float
    selected_a: np.ndarray
    selected_b: np.ndarray

    @property
    def degenerate(self) -> bool:
        return self.selected_a.size == 0 and self.selected_b.size == 0


@dataclass
class SimpleClassifierModel:
    classes: list[str]
    activity: np.ndarray  # per-feature binarization threshold
    probs: np.ndarray  # (n_classes, n_features) smoothed occurrence probabilities
    pairs: list[SimplePair]

    def to_dict(self) -> dict:
        return {
            "kind": "simple",
            "classes": list(self.classes),
            "activity": self.activity.tolist(),
            "probs": self.probs.tolist(),
            "pairs": [
                {"a": p.a, "b": p.b, "threshold_a": p.threshold_a, "threshold_b": p.threshold_b,
                 "selected_a": p.selected_a.tolist(), "selected_b": p.selected_b.tolist()}
                for p in self.pairs
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimpleClassifierModel":
        pairs = [SimplePair(p["a"], p["b"], float(p["threshold_a"]), float(p["threshold_b"]), np.array(p["selected_a"], dtype=np.int64),
                            np.array(p["selected_b"], dtype=np.int64)) for p in d["pairs"]]
        return cls(list(d["classes"]), np.array(d["activity"]), np.array(d["probs"]), pairs)


def occurrence_probs(active: np.ndarray, y: np.ndarray, n_classes: int) -> np.ndarray:
    """Add-one smoothed P(feature active | class): (count + 1) / (n + 2)."""
    out = np.empty((n_classes, active.shape[1]))
    for k in range(n_classes):
        rows = active[y == k]
        out[k] = (rows.sum(axis=0) + 1.0) / (rows.shape[0] + 2.0)
    return out


def train_simple(features, labels: Sequence[str] | None = None, grid: Sequence[float] = RATIO_GRID,
                 fraction: float = ACTIVITY_FRACTION) -> SimpleClassifierModel:
    """Fit the ratio classifier; ``features`` is a FeatureMatrix or an array plus ``labels``."""
    x, labels = _unpack(features, labels)
    classes = _classes(labels)
    y = np.array([classes.index(lab) for lab in labels])
    activity = activity_thresholds(x, fraction)
    probs = occurrence_probs(binarize(x, activity), y, len(classes))
    pairs = []
    for a, b in combinations(range(len(classes)), 2):
        rows = (y == a) | (y == b)
        xs, truth = x[rows], y[rows]
        ratio = probs[a] / probs[b]
        best = None
        # each ordered pair gets its own threshold; searched jointly for the pair
        for ta in grid:
            sel_a = np.flatnonzero(ratio > ta)
            score_a = xs[:, sel_a] @ probs[a][sel_a]
            for tb in grid:
                sel_b = np.flatnonzero(1.0 / ratio > tb)
                score_b = xs[:, sel_b] @ probs[b][sel_b]
                # a tied pair casts no vote, so it never counts as correct
                decided = np.where(score_a > score_b, a, np.where(score_b > score_a, b, -1))
                acc = np.mean(decided == truth)
                if best is None or acc > best[0]:
                    best = (acc, ta, tb, sel_a, sel_b)
        pairs.append(SimplePair(a, b, float(best[1]), float(best[2]), best[3], best[4]))
    return SimpleClassifierModel(classes, activity, probs, pairs)


def _simple_decide(model: SimpleClassifierModel, row: np.ndarray):
    winners, scores = [], []
    for p in model.pairs:
        sa = float(row[p.selected_a] @ model.probs[p.a][p.selected_a])
        sb = float(row[p.selected_b] @ model.probs[p.b][p.selected_b])
        winners.append(p.a if sa > sb else p.b if sb > sa else None)
        scores.append((sa, sb))
    return winners, scores


def predict_simple(model: SimpleClassifierModel, row) -> str:
    """Label of one feature row by majority vote over class pairs."""
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (model.probs.shape[1],):
        raise InvalidInputError(f"row must have {model.probs.shape[1]} features, got shape {row.shape}")
    winners, scores = _simple_decide(model, row)
    return model.classes[_vote(len(model.classes), [(p.a, p.b) for p in model.pairs], winners, scores)]


# -- one-vs-one linear max-margin classifier -------------------------------------------


@dataclass
class LinearPair:
    a: int
    b: int
    weights: np.ndarray
    bias: float


@dataclass
class LinearOvOModel:
    classes: list[str]
    mean: np.ndarray
    scale: np.ndarray
    pairs: list[LinearPair]
    lam: float
    epochs: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "kind": "linear",
            "classes": list(self.classes),
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "lambda": self.lam,
            "epochs": self.epochs,
            "seed": self.seed,
            "pairs": [{"a": p.a, "b": p.b, "weights": p.weights.tolist(), "bias": p.bias} for p in self.pairs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearOvOModel":
        pairs = [LinearPair(p["a"], p["b"], np.array(p["weights"]), float(p["bias"])) for p in d["pairs"]]
        return cls(list(d["classes"]), np.array(d["mean"]), np.array(d["scale"]), pairs,
                   float(d["lambda"]), int(d["epochs"]), int(d["seed"]))


def hinge_sgd(x: np.ndarray, t: np.ndarray, lam: float, epochs: int, rng: np.random.Generator):
    """Pegasos subgradient descent on the L2-regularized hinge loss.

    ``t`` holds +1/-1 targets. The bias rides along as a constant input
    coordinate. Step size is 1/(lam * step) with projection onto the ball
    of radius 1/sqrt(lam); the returned iterate is averaged over the final
    epoch.
    """
    n = x.shape[0]
    xa = np.hstack([x, np.ones((n, 1))])
    w = np.zeros(xa.shape[1])
    avg = np.zeros_like(w)
    radius = 1.0 / np.sqrt(lam)
    step = 0
    for epoch in range(epochs):
        for i in rng.permutation(n):
            step += 1
            eta = 1.0 / (lam * step)
            hit = t[i] * (xa[i] @ w) < 1.0
            w *= 1.0 - eta * lam
            if hit:
                w += eta * t[i] * xa[i]
            norm = np.sqrt(w @ w)
            if norm > radius:
                w *= radius / norm
            if epoch == epochs - 1:
                avg += w
    avg /= n
    return avg[:-1], float(avg[-1])


def train_linear(features, labels: Sequence[str] | None = None, lam: float = 1e-4, epochs: int = 50,
                 seed: int = 0) -> LinearOvOModel:
    """One linear max-margin classifier per unordered class pair on standardized features."""
    x, labels = _unpack(features, labels)
    classes = _classes(labels)
    if lam <= 0 or epochs < 1:
        raise InvalidInputError("lam must be > 0 and epochs >= 1")
    y = np.array([classes.index(lab) for lab in labels])
    mean = x.mean(axis=0)
    scale = np.maximum(x.std(axis=0), STD_FLOOR)
    z = (x - mean) / scale
    pairs = []
    for a, b in combinations(range(len(classes)), 2):
        rows = (y == a) | (y == b)
        if not (np.any(y == a) and np.any(y == b)):
            raise InvalidInputError(f"class pair ({classes[a]}, {classes[b]}) lacks one side")
        t = np.where(y[rows] == a, 1.0, -1.0)
        rng = np.random.default_rng([seed, a, b])
        w, bias = hinge_sgd(z[rows], t, lam, epochs, rng)
        pairs.append(LinearPair(a, b, w, float(bias)))
    return LinearOvOModel(classes, mean, scale, pairs, lam, epochs, seed)


def linear_margins(model: LinearOvOModel, row) -> np.ndarray:
    z = (np.asarray(row, dtype=np.float64) - model.mean) / model.scale
    return np.array([z @ p.weights + p.bias for p in model.pairs])


def predict_linear(model: LinearOvOModel, row) -> str:
    """Majority vote over pair decisions; ties by summed signed margins, then lowest index."""
    row = np.asarray(row, dtype=np.float64)
    if row.shape != model.mean.shape:
        raise InvalidInputError(f"row must have {model.mean.size} features, got shape {row.shape}")
    m = linear_margins(model, row)
    winners = [p.a if v > 0 else p.b if v < 0 else None for p, v in zip(model.pairs, m)]
    scores = [(v, -v) for v in m]
    return model.classes[_vote(len(model.classes), [(p.a, p.b) for p in model.pairs], winners, scores)]


def predict_many(model, x) -> list[str]:
    predict = predict_simple if isinstance(model, SimpleClassifierModel) else predict_linear
    return [predict(model, row) for row in np.asarray(x, dtype=np.float64)]


def accuracy(model, features, labels: Sequence[str] | None = None) -> float:
    x, labels = _unpack(features, labels)
    pred = predict_many(model, x)
    return float(np.mean([p == t for p, t in zip(pred, labels)]))


def model_from_dict(d: dict):
    kinds = {"simple": SimpleClassifierModel, "linear": LinearOvOModel}
    if d.get("kind") not in kinds:
        raise InvalidInputError(f"unknown model kind {d.get('kind')!r}")
    return kinds[d["kind"]].from_dict(d)


def _unpack(features, labels):
    if labels is None:
        x, labels = features.values, features.labels
    else:
        x = features
    labels = [str(v) for v in labels]
    return _check_rows(x, labels), labels
