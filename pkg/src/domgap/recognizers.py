"""Gesture recognisers: k-nearest neighbours, linear one-vs-rest SVM, and the gesture CNN.

All three take a ``Dataset`` (raw or domain-gap-eliminated) and predict
gesture labels. Every tie is resolved towards the smallest label index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import container
from .ahnet import CnnClassifier, train_cnn
from .dataset import Dataset
from .errors import ConfigError, FormatError, ShapeError
from .training import TrainConfig

GestureCnn = CnnClassifier


def accuracy(predictions, truth) -> float:
    """Fraction of correctly recognised samples."""
    p = np.asarray(predictions)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise ShapeError(f"{p.size} predictions for {t.size} labels")
    if p.size == 0:
        raise ConfigError("accuracy of an empty prediction set is undefined")
    return float(np.count_nonzero(p == t) / p.size)


def _flatten(x, shape) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape == tuple(shape):
        x = x[None]
    if x.shape[1:] != tuple(shape):
        raise ShapeError(f"sample shape {x.shape[1:]} does not match model input {tuple(shape)}")
    return x.reshape(len(x), -1)


# ------------------------------------------------------------------ KNN

@dataclass
class KnnModel:
    train_x: np.ndarray   # (n, features) float32
    train_y: np.ndarray
    k: int
    shape: tuple
    n_classes: int

    def predict(self, x, chunk: int = 256) -> np.ndarray:
        q = _flatten(x, self.shape)
        ref = self.train_x.astype(np.float64)
        ref_sq = (ref ** 2).sum(axis=1)
        out = np.empty(len(q), dtype=np.int64)
        for s in range(0, len(q), chunk):
            qb = q[s:s + chunk]
            d2 = (qb ** 2).sum(axis=1)[:, None] + ref_sq[None, :] - 2.0 * qb @ ref.T
            dist = np.sqrt(np.maximum(d2, 0.0))
            for i, row in enumerate(dist):
                out[s + i] = self._vote(row)
        return out

    def _vote(self, dist_row) -> int:
        nearest = np.argsort(dist_row, kind="stable")[:self.k]
        labels = self.train_y[nearest]
        counts = np.bincount(labels, minlength=self.n_classes)
        tied = np.flatnonzero(counts == counts.max())
        if len(tied) == 1:
            return int(tied[0])
        means = np.array([dist_row[nearest[labels == c]].mean() for c in tied])
        return int(tied[np.flatnonzero(means == means.min())[0]])

    def save(self, path) -> None:
        container.save_tensors(
            path, {"train_x": self.train_x, "train_y": self.train_y.astype(np.float32)},
            {"recognizer": {"kind": "knn", "k": self.k, "shape": list(self.shape),
                            "n_classes": self.n_classes}})

    @classmethod
    def load(cls, path) -> "KnnModel":
        t, meta = container.load_tensors(path)
        m = meta.get("recognizer", {})
        if m.get("kind") != "knn":
            raise FormatError(f"{path}: not a KNN model")
        return cls(t["train_x"], t["train_y"].astype(np.int64), m["k"], tuple(m["shape"]), m["n_classes"])


def knn_fit(train: Dataset, k: int = 5) -> KnnModel:
    if len(train) == 0:
        raise ConfigError("empty training set")
    if not 1 <= k <= len(train):
        raise ConfigError(f"k={k} must lie in [1, {len(train)}]")
    return KnnModel(train.x.reshape(len(train), -1).astype(np.float32), train.gestures.copy(),
                    k, train.shape, train.n_gestures)


def knn_predict(model: KnnModel, x) -> np.ndarray:
    return model.predict(x)


# ------------------------------------------------------------------ SVM

@dataclass
class SvmModel:
    weights: np.ndarray   # (classes, features)
    bias: np.ndarray      # (classes,)
    shape: tuple
    lam: float = 1e-4

    def decision(self, x) -> np.ndarray:
        return _flatten(x, self.shape) @ self.weights.T.astype(np.float64) + self.bias

    def predict(self, x) -> np.ndarray:
        return self.decision(x).argmax(axis=1)  # argmax keeps the first (smallest) label on ties

    def save(self, path) -> None:
        container.save_tensors(path, {"W": self.weights, "b": self.bias},
                               {"recognizer": {"kind": "svm", "lambda": self.lam,
                                               "shape": list(self.shape)}})

    @classmethod
    def load(cls, path) -> "SvmModel":
        t, meta = container.load_tensors(path)
        m = meta.get("recognizer", {})
        if m.get("kind") != "svm":
            raise FormatError(f"{path}: not an SVM model")
        return cls(t["W"], t["b"], tuple(m["shape"]), m["lambda"])


def svm_fit(train: Dataset, lam: float = 1e-4, epochs: int = 50, lr: float = 0.1,
            batch_size: int = 32, seed: int = 0) -> SvmModel:
    """One-vs-rest hinge loss + (lam/2)||w||^2, by seeded mini-batch subgradient descent."""
    classes = np.unique(train.gestures)
    if len(classes) < 2:
        raise ConfigError("SVM training needs at least two gesture classes")
    if not lam > 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    x = train.x.reshape(len(train), -1).astype(np.float64)
    targets = -np.ones((len(train), train.n_gestures))
    targets[np.arange(len(train)), train.gestures] = 1.0
    w = np.zeros((train.n_gestures, x.shape[1]))
    b = np.zeros(train.n_gestures)
    rng = np.random.default_rng(seed)
    for epoch in range(epochs):
        step = lr / np.sqrt(1.0 + epoch)
        order = rng.permutation(len(x))
        for s in range(0, len(x), batch_size):
            idx = order[s:s + batch_size]
            xb, tb = x[idx], targets[idx]
            active = (tb * (xb @ w.T + b)) < 1.0
            coef = np.where(active, tb, 0.0)
            w -= step * (lam * w - coef.T @ xb / len(idx))
            b += step * coef.mean(axis=0)
    return SvmModel(w.astype(np.float32), b.astype(np.float32), train.shape, lam)


def svm_predict(model: SvmModel, x) -> np.ndarray:
    return model.predict(x)


# ------------------------------------------------------------------ CNN

def cnn_fit(train: Dataset, cfg: TrainConfig = TrainConfig(), strict_paper_arch: bool = False) -> GestureCnn:
    return train_cnn(train.x, train.gestures, train.n_gestures, cfg, strict_paper_arch, "gesture")


def cnn_predict(model: GestureCnn, x) -> np.ndarray:
    return model.predict(x)


def fit_recognizer(kind: str, train: Dataset, *, k: int = 5, lam: float = 1e-4,
                   svm_epochs: int = 50, cnn: TrainConfig = TrainConfig(),
                   strict_paper_arch: bool = False, seed: int = 0):
    if kind == "knn":
        return knn_fit(train, k)
    if kind == "svm":
        return svm_fit(train, lam, svm_epochs, seed=seed)
    if kind == "cnn":
        return cnn_fit(train, cnn, strict_paper_arch)
    raise ConfigError(f"unknown recognizer {kind!r}")


def load_recognizer(path):
    _, meta = container.load_tensors(path)
    if "architecture" in meta:
        return CnnClassifier.load(path)
    kind = meta.get("recognizer", {}).get("kind")
    if kind == "knn":
        return KnnModel.load(path)
    if kind == "svm":
        return SvmModel.load(path)
    raise FormatError(f"{path}: unknown model kind")
