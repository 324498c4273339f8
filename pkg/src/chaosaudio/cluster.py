"""Shared numerical machinery: K-Means, silhouette, PCA, weighted-KNN CV.

All fitting is deterministic given the seed. Models serialize to versioned
JSON documents; a round-trip reproduces predictions exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
SILHOUETTE_ROW_CAP = 20000


@dataclass
class KMeansModel:
    k: int
    centroids: np.ndarray  # k x d
    feature_columns: list[str]
    rng_seed: int
    inertia: float

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model_type": "kmeans",
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "feature_columns": self.feature_columns,
            "rng_seed": self.rng_seed,
            "inertia": self.inertia,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "KMeansModel":
        return cls(
            k=doc["k"],
            centroids=np.asarray(doc["centroids"], dtype=np.float64),
            feature_columns=list(doc["feature_columns"]),
            rng_seed=doc["rng_seed"],
            inertia=doc["inertia"],
        )


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # p x d, orthonormal rows
    explained_variance_ratio: np.ndarray  # descending, for retained components

    def transform(self, data: np.ndarray) -> np.ndarray:
        return (np.asarray(data, dtype=np.float64) - self.mean) @ self.components.T

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model_type": "pca",
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PcaModel":
        return cls(
            mean=np.asarray(doc["mean"], dtype=np.float64),
            components=np.asarray(doc["components"], dtype=np.float64),
            explained_variance_ratio=np.asarray(
                doc["explained_variance_ratio"], dtype=np.float64
            ),
        )


@dataclass
class CvReport:
    fold_accuracies: list[float]
    mean_accuracy: float
    classifier: str
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model_type": "cv_report",
            "fold_accuracies": self.fold_accuracies,
            "mean_accuracy": self.mean_accuracy,
            "classifier": self.classifier,
            "config": self.config,
        }


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True, indent=2) + "\n")


def load_kmeans(path) -> KMeansModel:
    return KMeansModel.from_dict(json.loads(Path(path).read_text()))


def _assign(data: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((data[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)  # argmin breaks ties toward the lower index
    return labels, d2[np.arange(len(data)), labels]


def _kmeanspp_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(data)
    centroids = np.empty((k, data.shape[1]))
    centroids[0] = data[rng.integers(n)]
    d2 = ((data - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[i] = data[rng.integers(n)]
        else:
            centroids[i] = data[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((data - centroids[i]) ** 2).sum(axis=1))
    return centroids


def _lloyd(data, centroids, max_iter, tol):
    prev_inertia = np.inf
    for _ in range(max_iter):
        labels, dists = _assign(data, centroids)
        new_centroids = centroids.copy()
        for j in range(len(centroids)):
            members = labels == j
            if members.any():
                new_centroids[j] = data[members].mean(axis=0)
            else:
                # deterministic repair: steal the point farthest from its centroid
                far = np.argmax(dists)
                new_centroids[j] = data[far]
                labels[far] = j
                dists[far] = 0.0
        inertia = float(dists.sum())
        if inertia > prev_inertia + 1e-12:
            raise AssertionError("k-means inertia increased")
        prev_inertia = inertia
        shift = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        if shift < tol:
            break
    labels, dists = _assign(data, centroids)
    return centroids, labels, float(dists.sum())


def _hartigan_refine(data, labels, k, max_passes: int = 100):
    """Single-point reassignment polish after Lloyd convergence.

    Moves a point whenever the exact inertia change of switching its cluster
    is negative; Lloyd can converge to partitions this still improves. Each
    move strictly decreases inertia, so the loop terminates.
    """
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    sums = np.zeros((k, data.shape[1]))
    for j in range(k):
        sums[j] = data[labels == j].sum(axis=0)
    for _ in range(max_passes):
        moved = False
        for i in range(len(data)):
            a = labels[i]
            if counts[a] <= 1:
                continue
            x = data[i]
            cost_a = (
                counts[a] / (counts[a] - 1)
                * ((x - sums[a] / counts[a]) ** 2).sum()
            )
            best_gain, best_b = 1e-12, -1
            for b in range(k):
                if b == a:
                    continue
                cost_b = (
                    counts[b] / (counts[b] + 1)
                    * ((x - sums[b] / counts[b]) ** 2).sum()
                )
                if cost_a - cost_b > best_gain:
                    best_gain, best_b = cost_a - cost_b, b
            if best_b >= 0:
                sums[a] -= x
                counts[a] -= 1
                sums[best_b] += x
                counts[best_b] += 1
                labels[i] = best_b
                moved = True
        if not moved:
            break
    return sums / counts[:, None]


def kmeans_fit(
    data,
    k: int,
    rng_seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-6,
    n_restarts: int = 10,
    feature_columns: list[str] | None = None,
) -> KMeansModel:
    """K-Means with K-Means++ seeding and Lloyd iterations.

    Runs `n_restarts` seeded initializations and keeps the lowest inertia.
    Empty clusters are repaired by reassigning the point farthest from its
    centroid.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if not np.isfinite(data).all():
        raise ValueError("k-means input contains non-finite values")
    if len(data) < k:
        raise ValueError(f"need at least k={k} rows, got {len(data)}")
    rng = np.random.default_rng(rng_seed)
    best = None
    for _ in range(n_restarts):
        centroids = _kmeanspp_init(data, k, rng)
        centroids, labels, inertia = _lloyd(data, centroids, max_iter, tol)
        centroids = _hartigan_refine(data, labels, k)
        _, dists = _assign(data, centroids)
        inertia = float(dists.sum())
        if best is None or inertia < best[1]:
            best = (centroids, inertia)
    columns = feature_columns or [f"x{i}" for i in range(data.shape[1])]
    return KMeansModel(
        k=k,
        centroids=best[0],
        feature_columns=columns,
        rng_seed=rng_seed,
        inertia=best[1],
    )


def kmeans_predict(model: KMeansModel, data) -> np.ndarray:
    """Nearest-centroid labels; ties break toward the lower cluster index."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[1] != model.centroids.shape[1]:
        raise ValueError(
            f"dimension mismatch: data has {data.shape[1]} columns, "
            f"model expects {model.centroids.shape[1]}"
        )
    labels, _ = _assign(data, model.centroids)
    return labels


def silhouette_score(
    data, labels, rng_seed: int = 0, row_cap: int = SILHOUETTE_ROW_CAP
) -> float:
    """Mean silhouette coefficient; singleton clusters contribute 0.

    Above `row_cap` rows a seeded uniform subsample keeps the pairwise
    distance matrix tractable.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    labels = np.asarray(labels)
    if len(np.unique(labels)) < 2:
        raise ValueError("silhouette requires at least 2 clusters")
    if len(data) > row_cap:
        idx = np.sort(np.random.default_rng(rng_seed).choice(len(data), row_cap, replace=False))
        data, labels = data[idx], labels[idx]
        if len(np.unique(labels)) < 2:
            raise ValueError("subsample collapsed to a single cluster")
    dist = np.sqrt(
        np.maximum(
            ((data[:, None, :] - data[None, :, :]) ** 2).sum(axis=2), 0.0
        )
    )
    uniq = np.unique(labels)
    masks = {c: labels == c for c in uniq}
    counts = {c: int(m.sum()) for c, m in masks.items()}
    scores = np.zeros(len(data))
    for i in range(len(data)):
        c = labels[i]
        if counts[c] == 1:
            continue
        a = dist[i, masks[c]].sum() / (counts[c] - 1)
        b = min(dist[i, masks[o]].mean() for o in uniq if o != c)
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())


def pca_fit(data, variance_target: float = 0.95) -> PcaModel:
    """PCA retaining the fewest components reaching `variance_target`.

    Components are sign-normalized so each row's largest-magnitude entry
    is positive.
    """
    data = np.asarray(data, dtype=np.float64)
    if len(data) < 2:
        raise ValueError("PCA needs at least 2 rows")
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / len(data)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    components = eigvecs[:, order].T
    total = eigvals.sum()
    ratios = eigvals / total if total > 0 else np.zeros_like(eigvals)
    cum = np.cumsum(ratios)
    p = int(np.searchsorted(cum, variance_target) + 1)
    p = min(p, len(ratios))
    components = components[:p].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean=mean, components=components, explained_variance_ratio=ratios[:p])


def _stratified_folds(labels: np.ndarray, n_folds: int, rng: np.random.Generator):
    folds = [[] for _ in range(n_folds)]
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        rng.shuffle(idx)
        for i, j in enumerate(idx):
            folds[i % n_folds].append(j)
    return [np.sort(np.array(f)) for f in folds]


def knn_weighted_cv5(
    data, labels, k_neighbors: int = 10, rng_seed: int = 0
) -> CvReport:
    """Stratified 5-fold CV of an inverse-square-distance weighted KNN."""
    data = np.asarray(data, dtype=np.float64)
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() < 5:
        small = classes[counts < 5]
        raise ValueError(f"classes with fewer than 5 samples: {small.tolist()}")
    rng = np.random.default_rng(rng_seed)
    folds = _stratified_folds(labels, 5, rng)
    accs = []
    all_idx = np.arange(len(data))
    for fold in folds:
        test_mask = np.zeros(len(data), dtype=bool)
        test_mask[fold] = True
        train_idx = all_idx[~test_mask]
        d2 = ((data[fold][:, None, :] - data[train_idx][None, :, :]) ** 2).sum(axis=2)
        k = min(k_neighbors, len(train_idx))
        nearest = np.argpartition(d2, k - 1, axis=1)[:, :k]
        correct = 0
        for row, neigh in enumerate(nearest):
            w = 1.0 / (d2[row, neigh] + 1e-12)
            votes = {}
            for j, wj in zip(train_idx[neigh], w):
                votes[labels[j]] = votes.get(labels[j], 0.0) + wj
            pred = max(sorted(votes), key=lambda c: votes[c])
            correct += pred == labels[fold[row]]
        accs.append(correct / len(fold))
    return CvReport(
        fold_accuracies=[float(a) for a in accs],
        mean_accuracy=float(np.mean(accs)),
        classifier="weighted_knn",
        config={"k_neighbors": k_neighbors, "rng_seed": rng_seed},
    )
