"""Hierarchical binary K-Means tree for chaos-level labeling.

Each level runs k=2 K-Means on one (or a few) feature columns, z-scored
over the rows reaching that node, peels off one leaf and descends into the
other branch. The shipped default topology splits silence off on the raw
signal mean, then broadband noise on MFCC spread, then soft sounds on RMS
energy, and finally divides the remainder on spectral-centroid variance.

Child identity at every node is resolved by ordering the two centroids on
the split feature mean, so leaf semantics do not depend on the RNG seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from chaosaudio.audio_io import AudioClip, save_wav
from chaosaudio.cluster import (
    SCHEMA_VERSION,
    KMeansModel,
    kmeans_fit,
    kmeans_predict,
    silhouette_score,
)
from chaosaudio.features import FEATURE_COLUMNS

LEAF_SILENCE = "silence"
LEAF_LOW_HUMAN = "low human sounds"
LEAF_CRYING = "infant crying/fussing"
LEAF_LOUD_NOISE = "loud white noise"
LEAF_OVERLAP = "loud human noise/overlap"

DEFAULT_LEVELS = {
    LEAF_SILENCE: "none",
    LEAF_LOW_HUMAN: "low",
    LEAF_CRYING: "low",
    LEAF_LOUD_NOISE: "high",
    LEAF_OVERLAP: "high",
}


@dataclass(frozen=True)
class TreeSplit:
    """One k=2 split. The side whose leaf label is None is descended into;
    the final split labels both children."""

    features: tuple[str, ...]
    low_leaf: str | None
    high_leaf: str | None


@dataclass(frozen=True)
class TreeSpec:
    splits: tuple[TreeSplit, ...]

    def __post_init__(self):
        if not self.splits:
            raise ValueError("tree spec needs at least one split")
        for i, s in enumerate(self.splits):
            unknown = set(s.features) - set(FEATURE_COLUMNS)
            if unknown:
                raise ValueError(f"split {i}: unknown features {sorted(unknown)}")
            last = i == len(self.splits) - 1
            n_leaves = (s.low_leaf is not None) + (s.high_leaf is not None)
            if last and n_leaves != 2:
                raise ValueError("final split must label both children")
            if not last and n_leaves != 1:
                raise ValueError(
                    f"split {i} must label exactly one child and descend the other"
                )

    @property
    def leaf_labels(self) -> list[str]:
        labels = []
        for s in self.splits:
            for leaf in (s.low_leaf, s.high_leaf):
                if leaf is not None:
                    labels.append(leaf)
        return labels

    def to_dict(self) -> dict:
        return {
            "splits": [
                {
                    "features": list(s.features),
                    "low_leaf": s.low_leaf,
                    "high_leaf": s.high_leaf,
                }
                for s in self.splits
            ]
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TreeSpec":
        return cls(
            splits=tuple(
                TreeSplit(
                    features=tuple(s["features"]),
                    low_leaf=s.get("low_leaf"),
                    high_leaf=s.get("high_leaf"),
                )
                for s in doc["splits"]
            )
        )


DEFAULT_TREE_SPEC = TreeSpec(
    splits=(
        TreeSplit(("raw_mean",), low_leaf=LEAF_SILENCE, high_leaf=None),
        TreeSplit(("mfcc_std",), low_leaf=LEAF_LOUD_NOISE, high_leaf=None),
        TreeSplit(("rmse_mean", "rmse_std"), low_leaf=LEAF_LOW_HUMAN, high_leaf=None),
        TreeSplit(("centroid_std",), low_leaf=LEAF_OVERLAP, high_leaf=LEAF_CRYING),
    )
)


@dataclass
class TreeNode:
    features: tuple[str, ...]
    scaler_mean: np.ndarray
    scaler_std: np.ndarray
    kmeans: KMeansModel
    low_cluster: int  # cluster index with the lower centroid mean
    low_leaf: str | None
    high_leaf: str | None


@dataclass
class ChaosTreeModel:
    nodes: list[TreeNode]
    leaf_levels: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_LEVELS))
    rng_seed: int = 0

    @property
    def leaf_labels(self) -> list[str]:
        labels = []
        for node in self.nodes:
            for leaf in (node.low_leaf, node.high_leaf):
                if leaf is not None:
                    labels.append(leaf)
        return labels

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model_type": "chaos_tree",
            "rng_seed": self.rng_seed,
            "leaf_levels": self.leaf_levels,
            "nodes": [
                {
                    "features": list(n.features),
                    "scaler_mean": n.scaler_mean.tolist(),
                    "scaler_std": n.scaler_std.tolist(),
                    "kmeans": n.kmeans.to_dict(),
                    "low_cluster": n.low_cluster,
                    "low_leaf": n.low_leaf,
                    "high_leaf": n.high_leaf,
                }
                for n in self.nodes
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ChaosTreeModel":
        return cls(
            nodes=[
                TreeNode(
                    features=tuple(n["features"]),
                    scaler_mean=np.asarray(n["scaler_mean"], dtype=np.float64),
                    scaler_std=np.asarray(n["scaler_std"], dtype=np.float64),
                    kmeans=KMeansModel.from_dict(n["kmeans"]),
                    low_cluster=n["low_cluster"],
                    low_leaf=n["low_leaf"],
                    high_leaf=n["high_leaf"],
                )
                for n in doc["nodes"]
            ],
            leaf_levels=dict(doc["leaf_levels"]),
            rng_seed=doc["rng_seed"],
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ChaosTreeModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _node_route(node: TreeNode, df: pd.DataFrame) -> np.ndarray:
    """True where a row goes to the node's low-centroid child."""
    z = (df[list(node.features)].to_numpy(dtype=np.float64) - node.scaler_mean) / node.scaler_std
    labels = kmeans_predict(node.kmeans, z)
    return labels == node.low_cluster


def tree_fit(
    table: pd.DataFrame,
    spec: TreeSpec = DEFAULT_TREE_SPEC,
    rng_seed: int = 0,
) -> tuple[ChaosTreeModel, pd.DataFrame]:
    """Fit the hierarchical tree; returns the model and per-split silhouettes."""
    nodes = []
    sil_rows = []
    mask = np.ones(len(table), dtype=bool)
    for depth, split in enumerate(spec.splits):
        sub = table.loc[mask, list(split.features)].to_numpy(dtype=np.float64)
        if len(sub) < 2:
            path = " -> ".join("+".join(s.features) for s in spec.splits[: depth + 1])
            raise ValueError(f"node [{path}] received {len(sub)} rows; need >= 2")
        mean = sub.mean(axis=0)
        std = sub.std(axis=0)
        std = np.where(std > 1e-12, std, 1.0)
        z = (sub - mean) / std
        km = kmeans_fit(z, k=2, rng_seed=rng_seed, feature_columns=list(split.features))
        labels = kmeans_predict(km, z)
        sil = silhouette_score(z, labels, rng_seed=rng_seed) if len(set(labels)) > 1 else 0.0
        low_cluster = int(np.argmin(km.centroids.mean(axis=1)))
        node = TreeNode(
            features=split.features,
            scaler_mean=mean,
            scaler_std=std,
            kmeans=km,
            low_cluster=low_cluster,
            low_leaf=split.low_leaf,
            high_leaf=split.high_leaf,
        )
        nodes.append(node)
        sil_rows.append(
            {"split_index": depth, "features": "+".join(split.features), "silhouette": sil}
        )
        # rows that continue to the next split
        goes_low = labels == low_cluster
        descend_low = split.low_leaf is None
        keep = goes_low if descend_low else ~goes_low
        idx = np.nonzero(mask)[0]
        mask = np.zeros(len(table), dtype=bool)
        mask[idx[keep]] = True
    model = ChaosTreeModel(nodes=nodes, rng_seed=rng_seed)
    return model, pd.DataFrame(sil_rows)


def tree_predict(model: ChaosTreeModel, table: pd.DataFrame) -> pd.DataFrame:
    """Route rows to leaves; returns the table plus leaf_label and chaos_level."""
    needed = {f for n in model.nodes for f in n.features}
    missing = needed - set(table.columns)
    if missing:
        raise ValueError(f"table is missing feature columns {sorted(missing)}")
    leaf = np.array([""] * len(table), dtype=object)
    mask = np.ones(len(table), dtype=bool)
    for node in model.nodes:
        idx = np.nonzero(mask)[0]
        if len(idx) == 0:
            break
        goes_low = _node_route(node, table.iloc[idx])
        if node.low_leaf is not None:
            leaf[idx[goes_low]] = node.low_leaf
        if node.high_leaf is not None:
            leaf[idx[~goes_low]] = node.high_leaf
        descend_low = node.low_leaf is None
        keep = goes_low if descend_low else ~goes_low
        mask = np.zeros(len(table), dtype=bool)
        mask[idx[keep]] = True
    out = table.copy()
    out["leaf_label"] = leaf
    out["chaos_level"] = [model.leaf_levels.get(l, "") for l in leaf]
    return out


def level_map(model: ChaosTreeModel, mapping: dict[str, str]) -> ChaosTreeModel:
    """Attach a leaf-label -> chaos-level mapping; must cover every leaf."""
    missing = [l for l in model.leaf_labels if l not in mapping]
    if missing:
        raise ValueError(f"mapping is missing leaf labels: {missing}")
    return replace(model, leaf_levels=dict(mapping))


def time_proportions(
    predictions: pd.DataFrame,
    exclude_labels: tuple[str, ...] = (LEAF_CRYING,),
) -> pd.DataFrame:
    """Per-source fraction of windows in each leaf, after exclusions."""
    kept = predictions[~predictions["leaf_label"].isin(exclude_labels)]
    if len(kept) == 0:
        raise ValueError("all rows excluded; nothing to report")
    rows = []
    for source, group in kept.groupby("source_id", sort=True):
        counts = group["leaf_label"].value_counts()
        total = counts.sum()
        for label in sorted(counts.index):
            rows.append(
                {
                    "source_id": source,
                    "leaf_label": label,
                    "proportion": counts[label] / total,
                }
            )
    return pd.DataFrame(rows, columns=["source_id", "leaf_label", "proportion"])


def feature_sweep(
    table: pd.DataFrame,
    candidate_features: list[str],
    k_values: tuple[int, ...] = (2, 3),
    rng_seed: int = 0,
) -> pd.DataFrame:
    """Flat K-Means silhouette for growing prefixes of the candidate list."""
    if not candidate_features:
        raise ValueError("candidate feature list is empty")
    rows = []
    for n in range(1, len(candidate_features) + 1):
        cols = candidate_features[:n]
        data = table[cols].to_numpy(dtype=np.float64)
        std = data.std(axis=0)
        z = (data - data.mean(axis=0)) / np.where(std > 1e-12, std, 1.0)
        for k in k_values:
            km = kmeans_fit(z, k=k, rng_seed=rng_seed, feature_columns=cols)
            labels = kmeans_predict(km, z)
            sil = silhouette_score(z, labels, rng_seed=rng_seed)
            rows.append(
                {"n_features": n, "features": "+".join(cols), "k": k, "silhouette": sil}
            )
    return pd.DataFrame(rows, columns=["n_features", "features", "k", "silhouette"])


AUDIT_COLUMNS = ["leaf_label", "source_id", "window_start_s", "clip_path", "verdict"]


def audit_sample(
    predictions: pd.DataFrame,
    clips: dict[str, AudioClip],
    out_dir,
    per_leaf_n: int = 50,
    rng_seed: int = 0,
    window_len_s: float = 10.0,
) -> pd.DataFrame:
    """Export seeded random windows per leaf for human listening.

    Returns the manifest with an empty verdict column; rows reference the
    exported 16-bit WAV clips.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(rng_seed)
    rows = []
    for label in sorted(predictions["leaf_label"].unique()):
        group = predictions[predictions["leaf_label"] == label].reset_index(drop=True)
        n = min(per_leaf_n, len(group))
        chosen = np.sort(rng.choice(len(group), n, replace=False))
        for rank, i in enumerate(chosen):
            row = group.iloc[i]
            source = row["source_id"]
            if source not in clips:
                raise ValueError(f"no clip available for source_id {source!r}")
            clip = clips[source]
            start = int(round(row["window_start_s"] * clip.sample_rate_hz))
            stop = start + int(round(window_len_s * clip.sample_rate_hz))
            if stop > len(clip.samples):
                stop = len(clip.samples)
            safe = label.replace("/", "_").replace(" ", "_")
            path = out_dir / f"{safe}_{rank:03d}_{source}_{row['window_start_s']:.1f}.wav"
            save_wav(
                path,
                AudioClip(
                    samples=clip.samples[start:stop],
                    sample_rate_hz=clip.sample_rate_hz,
                    source_id=source,
                    start_offset_s=row["window_start_s"],
                ),
            )
            rows.append(
                {
                    "leaf_label": label,
                    "source_id": source,
                    "window_start_s": row["window_start_s"],
                    "clip_path": str(path),
                    "verdict": "",
                }
            )
    return pd.DataFrame(rows, columns=AUDIT_COLUMNS)


def audit_score(manifest: pd.DataFrame) -> pd.DataFrame:
    """Per-leaf accuracy from verdicts; 'unsure' rows leave the denominator.

    The returned table has one row per leaf plus a final 'mean' row whose
    accuracy is the unweighted mean of the per-leaf accuracies.
    """
    valid = {"correct", "incorrect", "unsure"}
    verdicts = manifest["verdict"].astype(str).str.strip().str.lower()
    bad = sorted(set(verdicts) - valid)
    if bad:
        raise ValueError(f"invalid or missing verdicts: {bad}")
    rows = []
    for label in sorted(manifest["leaf_label"].unique()):
        v = verdicts[manifest["leaf_label"] == label]
        scored = v[v != "unsure"]
        if len(scored) == 0:
            continue
        acc = (scored == "correct").sum() / len(scored)
        rows.append(
            {
                "leaf_label": label,
                "sampled": len(v),
                "scored": len(scored),
                "unsure": int((v == "unsure").sum()),
                "accuracy": float(acc),
            }
        )
    df = pd.DataFrame(rows, columns=["leaf_label", "sampled", "scored", "unsure", "accuracy"])
    mean_row = {
        "leaf_label": "mean",
        "sampled": int(df["sampled"].sum()),
        "scored": int(df["scored"].sum()),
        "unsure": int(df["unsure"].sum()),
        "accuracy": float(df["accuracy"].mean()),
    }
    return pd.concat([df, pd.DataFrame([mean_row])], ignore_index=True)
