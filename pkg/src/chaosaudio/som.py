"""Self-organizing map over the window feature table.

Online competitive learning on a rectangular grid with a Gaussian
neighborhood and linear learning-rate/radius decay. Inputs are z-scored
before training; the scaler is stored on the model so BMU assignment and
component planes stay in original units where appropriate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from chaosaudio.cluster import (
    SCHEMA_VERSION,
    CvReport,
    knn_weighted_cv5,
    pca_fit,
)


@dataclass(frozen=True)
class SomConfig:
    rows: int = 18
    cols: int = 18
    epochs: int = 20
    initial_learning_rate: float = 0.5
    final_learning_rate: float = 0.01
    initial_radius: float | None = None  # None -> max(rows, cols) / 2
    final_radius: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.rows * self.cols < 2:
            raise ValueError("grid needs at least 2 nodes")
        r0 = self.initial_radius if self.initial_radius is not None else max(self.rows, self.cols) / 2
        if not (self.initial_learning_rate > self.final_learning_rate > 0):
            raise ValueError("learning rates must be positive and decreasing")
        if not (r0 >= self.final_radius > 0):
            raise ValueError("radii must be positive and non-increasing")

    @property
    def radius0(self) -> float:
        return self.initial_radius if self.initial_radius is not None else max(self.rows, self.cols) / 2


@dataclass
class SomModel:
    weights: np.ndarray  # rows x cols x d, in scaled space
    config: SomConfig
    columns: list[str]
    scaler_mean: np.ndarray
    scaler_std: np.ndarray
    qe_trace: list[float]

    @property
    def flat_weights(self) -> np.ndarray:
        return self.weights.reshape(-1, self.weights.shape[2])

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model_type": "som",
            "rows": self.config.rows,
            "cols": self.config.cols,
            "config": {
                "epochs": self.config.epochs,
                "initial_learning_rate": self.config.initial_learning_rate,
                "final_learning_rate": self.config.final_learning_rate,
                "initial_radius": self.config.radius0,
                "final_radius": self.config.final_radius,
                "rng_seed": self.config.rng_seed,
            },
            "columns": self.columns,
            "scaler_mean": self.scaler_mean.tolist(),
            "scaler_std": self.scaler_std.tolist(),
            "weights": self.flat_weights.tolist(),  # row-major over the grid
            "qe_trace": self.qe_trace,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SomModel":
        cfg = SomConfig(rows=doc["rows"], cols=doc["cols"], **doc["config"])
        weights = np.asarray(doc["weights"], dtype=np.float64).reshape(
            doc["rows"], doc["cols"], -1
        )
        return cls(
            weights=weights,
            config=cfg,
            columns=list(doc["columns"]),
            scaler_mean=np.asarray(doc["scaler_mean"], dtype=np.float64),
            scaler_std=np.asarray(doc["scaler_std"], dtype=np.float64),
            qe_trace=list(doc["qe_trace"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SomModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _scale_input(table, columns):
    if isinstance(table, pd.DataFrame):
        missing = [c for c in (columns or []) if c not in table.columns]
        if missing:
            raise ValueError(f"table is missing columns {missing}")
        cols = columns or list(table.columns)
        data = table[cols].to_numpy(dtype=np.float64)
    else:
        data = np.asarray(table, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        cols = columns or [f"x{i}" for i in range(data.shape[1])]
    return data, list(cols)


def _apply_scaler(model: SomModel, table) -> np.ndarray:
    data, cols = _scale_input(table, model.columns)
    if cols != model.columns:
        raise ValueError(f"column mismatch: expected {model.columns}, got {cols}")
    return (data - model.scaler_mean) / model.scaler_std


def som_fit(table, cfg: SomConfig = SomConfig(), columns: list[str] | None = None) -> SomModel:
    """Train a SOM on z-scored input columns.

    Online updates: per sample, the best-matching unit and its Gaussian
    grid neighborhood move toward the input. Learning rate and radius decay
    linearly per epoch; sample order is reshuffled every epoch (seeded).
    Quantization error is recorded after each epoch.
    """
    data, cols = _scale_input(table, columns)
    if len(data) == 0:
        raise ValueError("empty training table")
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    z = (data - mean) / std

    rng = np.random.default_rng(cfg.rng_seed)
    d = z.shape[1]
    weights = rng.uniform(-1.0, 1.0, size=(cfg.rows, cfg.cols, d))
    grid = np.stack(
        np.meshgrid(np.arange(cfg.rows), np.arange(cfg.cols), indexing="ij"), axis=-1
    ).reshape(-1, 2)

    qe_trace = []
    flat = weights.reshape(-1, d)
    for epoch in range(cfg.epochs):
        frac = epoch / (cfg.epochs - 1) if cfg.epochs > 1 else 0.0
        alpha = cfg.initial_learning_rate + frac * (
            cfg.final_learning_rate - cfg.initial_learning_rate
        )
        radius = cfg.radius0 + frac * (cfg.final_radius - cfg.radius0)
        order = rng.permutation(len(z))
        for i in order:
            x = z[i]
            d2 = ((flat - x) ** 2).sum(axis=1)
            bmu = int(np.argmin(d2))
            gd2 = ((grid - grid[bmu]) ** 2).sum(axis=1)
            h = np.exp(-gd2 / (2.0 * radius * radius))
            flat += alpha * h[:, None] * (x - flat)
        d2 = ((z[:, None, :] - flat[None, :, :]) ** 2).sum(axis=2)
        qe_trace.append(float(np.sqrt(d2.min(axis=1)).mean()))
    return SomModel(
        weights=flat.reshape(cfg.rows, cfg.cols, d),
        config=cfg,
        columns=cols,
        scaler_mean=mean,
        scaler_std=std,
        qe_trace=qe_trace,
    )


def bmu_assign(model: SomModel, table) -> np.ndarray:
    """Best-matching node index (row-major, 0..rows*cols-1) per input row."""
    z = _apply_scaler(model, table)
    d2 = ((z[:, None, :] - model.flat_weights[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def u_matrix(model: SomModel) -> np.ndarray:
    """Mean Euclidean distance from each node to its 4-connected neighbors."""
    w = model.weights
    rows, cols, _ = w.shape
    out = np.zeros((rows, cols))
    for r in range(rows):
        for c in range(cols):
            dists = []
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    dists.append(np.linalg.norm(w[r, c] - w[rr, cc]))
            out[r, c] = np.mean(dists)
    return out


def component_planes(model: SomModel) -> np.ndarray:
    """Per-feature weight planes in original units, shape (d, rows, cols)."""
    w = model.weights * model.scaler_std + model.scaler_mean
    return np.moveaxis(w, 2, 0)


def quantization_error(model: SomModel, table) -> float:
    """Mean distance from inputs to their BMU weight vectors."""
    z = _apply_scaler(model, table)
    d2 = ((z[:, None, :] - model.flat_weights[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.min(axis=1)).mean())


def merge_small_clusters(
    model: SomModel, bmus: np.ndarray, min_size: int = 5
) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Fold BMU clusters below `min_size` into the nearest-weight cluster.

    Returns relabeled assignments and the (from_node, to_node) merge log.
    """
    labels = bmus.copy()
    weights = model.flat_weights
    merges = []
    while True:
        uniq, counts = np.unique(labels, return_counts=True)
        small = uniq[counts < min_size]
        if len(small) == 0 or len(uniq) <= 2:
            break
        node = small[np.argmin(counts[np.isin(uniq, small)])]
        others = uniq[uniq != node]
        d2 = ((weights[others] - weights[node]) ** 2).sum(axis=1)
        target = others[np.argmin(d2)]
        labels[labels == node] = target
        merges.append((int(node), int(target)))
    return labels, merges


def som_verify(
    model: SomModel, table, rng_seed: int = 0, k_neighbors: int = 10
) -> dict:
    """Cross-validated weighted-KNN check of BMU cluster separability.

    BMU assignments act as class labels; undersized clusters are merged
    first. Reports accuracy with and without PCA at 95% retained variance.
    """
    z = _apply_scaler(model, table)
    bmus = bmu_assign(model, table)
    labels, merges = merge_small_clusters(model, bmus)
    uniq, counts = np.unique(labels, return_counts=True)
    if len(uniq) < 2 or counts.min() < 5:
        raise ValueError("fewer than 2 viable classes after merging small clusters")
    report = knn_weighted_cv5(z, labels, k_neighbors=k_neighbors, rng_seed=rng_seed)
    pca = pca_fit(z, variance_target=0.95)
    report_pca = knn_weighted_cv5(
        pca.transform(z), labels, k_neighbors=k_neighbors, rng_seed=rng_seed
    )
    report_pca.classifier = "weighted_knn_pca95"
    return {
        "knn": report,
        "knn_pca": report_pca,
        "merged_nodes": merges,
        "n_classes": int(len(uniq)),
        "pca_components": int(pca.components.shape[0]),
    }
