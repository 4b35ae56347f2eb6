"""2-D PCA projection of flattened samples, exported as CSV, plus a domain-separation score."""
from __future__ import annotations

import csv
from itertools import combinations
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .errors import ConfigError

CSV_COLUMNS = ("sample_id", "gesture", "domain", "pc1", "pc2")


def pca_2d(x) -> np.ndarray:
    """Scores on the first two principal components of mean-centred rows.

    Computed from the n x n Gram matrix, which is cheap when samples are far
    fewer than features. Each component's sign is fixed so that its largest
    absolute loading is positive.
    """
    x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
    if len(x) < 3:
        raise ConfigError(f"PCA export needs at least 3 samples, got {len(x)}")
    xc = x - x.mean(axis=0)
    if not np.any(xc):
        raise ConfigError("all samples are identical; no principal direction exists")
    gram = xc @ xc.T
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1][:2]
    scores = np.zeros((len(x), 2))
    for j, i in enumerate(order):
        lam = evals[i]
        if lam <= evals[order[0]] * 1e-12:
            continue  # numerically absent component: scores stay exactly 0
        loading = xc.T @ evecs[:, i] / np.sqrt(lam)
        sign = 1.0 if loading[np.argmax(np.abs(loading))] >= 0 else -1.0
        scores[:, j] = sign * evecs[:, i] * np.sqrt(lam)
    return scores


def write_embedding_csv(path, ds: Dataset, scores) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for i, (pc1, pc2) in enumerate(scores):
            w.writerow([i, int(ds.gestures[i]), int(ds.domains[i]), f"{pc1:.9g}", f"{pc2:.9g}"])


def read_embedding_csv(path) -> dict[str, np.ndarray]:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return {
        "gesture": np.array([int(r["gesture"]) for r in rows]),
        "domain": np.array([int(r["domain"]) for r in rows]),
        "scores": np.array([[float(r["pc1"]), float(r["pc2"])] for r in rows]),
    }


def export_embedding(ds: Dataset, path) -> np.ndarray:
    scores = pca_2d(ds.x)
    write_embedding_csv(path, ds, scores)
    return scores


def domain_centroid_distance(scores, domains) -> float:
    """Mean Euclidean distance over all pairs of per-domain centroids."""
    scores = np.asarray(scores, dtype=np.float64)
    domains = np.asarray(domains)
    labels = np.unique(domains)
    if len(labels) < 2:
        raise ConfigError("need at least two domains to measure separation")
    centroids = [scores[domains == d].mean(axis=0) for d in labels]
    return float(np.mean([np.linalg.norm(a - b) for a, b in combinations(centroids, 2)]))
