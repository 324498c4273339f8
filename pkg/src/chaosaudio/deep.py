"""End-to-end deep chaos pipeline.

Per non-overlapping 1-second window: mel power spectrogram -> log(1 + S)
-> corpus min/max scaling into [0, 1] -> flatten -> encoder latent ->
K-Means cluster -> binary chaos verdict -> 11-second majority vote.

Clusters are mapped to chaos verdicts automatically by their mean input
RMS energy: clusters below the midpoint of the lowest and highest cluster
energies count as "no chaos". The mapping is overridable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.signal import get_window

from chaosaudio.audio_io import CANONICAL_RATE_HZ, AudioClip
from chaosaudio.autoencoder import MlpAutoencoder, encode
from chaosaudio.cluster import (
    SCHEMA_VERSION,
    KMeansModel,
    kmeans_fit,
    kmeans_predict,
    silhouette_score,
)

VOTE_WINDOW_S = 11
CHAOS_YES = "yes"
CHAOS_NO = "no"


@dataclass(frozen=True)
class DeepMelConfig:
    n_mels: int = 64
    n_fft: int = 512
    hop: int = 250
    sample_rate_hz: int = CANONICAL_RATE_HZ
    window_s: float = 1.0

    @property
    def samples_per_window(self) -> int:
        return int(round(self.window_s * self.sample_rate_hz))

    @property
    def sub_frames(self) -> int:
        # centered framing: pad (n_fft - hop) / 2 on both sides so every
        # hop yields a full sub-frame (8000 samples -> exactly 32)
        return self.samples_per_window // self.hop

    @property
    def flat_dim(self) -> int:
        return self.n_mels * self.sub_frames


@dataclass
class MelScaler:
    """log(1 + S) compression followed by corpus min/max scaling."""

    log_min: float
    log_max: float

    def transform(self, log_mel: np.ndarray) -> np.ndarray:
        span = max(self.log_max - self.log_min, 1e-12)
        return np.clip((log_mel - self.log_min) / span, 0.0, 1.0)


def _mel_windows(clip: AudioClip, cfg: DeepMelConfig) -> np.ndarray:
    """Log-mel rows (one per full second), shape (seconds, flat_dim)."""
    from chaosaudio.features import MelConfig, mel_filterbank

    if clip.sample_rate_hz != cfg.sample_rate_hz:
        raise ValueError(
            f"clip at {clip.sample_rate_hz} Hz; pipeline expects {cfg.sample_rate_hz}"
        )
    spw = cfg.samples_per_window
    n_seconds = len(clip.samples) // spw
    if n_seconds < 1:
        raise ValueError("clip shorter than one second")
    fb = mel_filterbank(cfg.sample_rate_hz, cfg.n_fft, MelConfig(n_mels=cfg.n_mels))
    win = get_window("hann", cfg.n_fft, fftbins=True)
    pad = (cfg.n_fft - cfg.hop) // 2

    rows = np.empty((n_seconds, cfg.flat_dim))
    for s in range(n_seconds):
        x = clip.samples[s * spw : (s + 1) * spw]
        xp = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
        idx = np.arange(cfg.sub_frames)[:, None] * cfg.hop + np.arange(cfg.n_fft)[None, :]
        frames = xp[idx] * win
        power = np.abs(np.fft.rfft(frames, axis=1)) ** 2  # (sub, bins)
        mel = power @ fb.T  # (sub, n_mels)
        rows[s] = np.log1p(mel).T.reshape(-1)  # mel-major flattening
    return rows


def _second_rms(clip: AudioClip, cfg: DeepMelConfig) -> np.ndarray:
    spw = cfg.samples_per_window
    n_seconds = len(clip.samples) // spw
    x = clip.samples[: n_seconds * spw].reshape(n_seconds, spw)
    return np.sqrt((x**2).mean(axis=1))


def fit_scaler(clips, cfg: DeepMelConfig = DeepMelConfig()) -> MelScaler:
    lo, hi = np.inf, -np.inf
    for clip in clips:
        rows = _mel_windows(clip, cfg)
        lo = min(lo, float(rows.min()))
        hi = max(hi, float(rows.max()))
    if not hi > lo:
        hi = lo + 1.0
    return MelScaler(log_min=lo, log_max=hi)


def preprocess(
    clip: AudioClip, cfg: DeepMelConfig = DeepMelConfig(), scaler: MelScaler | None = None
) -> np.ndarray:
    """Normalized flattened mel rows, one per full second of audio.

    Without a scaler the raw log(1 + S) values are returned (fit-time
    path); with a scaler, values are scaled into [0, 1] and clamped.
    """
    rows = _mel_windows(clip, cfg)
    return scaler.transform(rows) if scaler is not None else rows


@dataclass
class DeepPipelineModel:
    mel_config: DeepMelConfig
    scaler: MelScaler
    encoder: MlpAutoencoder
    kmeans: KMeansModel
    cluster_chaos: dict[int, str]  # cluster id -> yes/no
    vote_window_s: int = VOTE_WINDOW_S
    encoder_path: str | None = None
    encoder_checksum: str | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model_type": "deep_pipeline",
            "mel_config": {
                "n_mels": self.mel_config.n_mels,
                "n_fft": self.mel_config.n_fft,
                "hop": self.mel_config.hop,
                "sample_rate_hz": self.mel_config.sample_rate_hz,
                "window_s": self.mel_config.window_s,
            },
            "scaler": {"log_min": self.scaler.log_min, "log_max": self.scaler.log_max},
            "encoder_path": self.encoder_path,
            "encoder_checksum": self.encoder_checksum,
            "kmeans": self.kmeans.to_dict(),
            "cluster_chaos": {str(k): v for k, v in self.cluster_chaos.items()},
            "vote_window_s": self.vote_window_s,
        }

    def save(self, path, encoder_path) -> None:
        """Persist the pipeline; the encoder goes to its own JSON file."""
        self.encoder.save(encoder_path)
        self.encoder_path = str(encoder_path)
        self.encoder_checksum = hashlib.sha256(
            Path(encoder_path).read_bytes()
        ).hexdigest()
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "DeepPipelineModel":
        doc = json.loads(Path(path).read_text())
        enc_path = doc["encoder_path"]
        blob = Path(enc_path).read_bytes()
        digest = hashlib.sha256(blob).hexdigest()
        if doc["encoder_checksum"] and digest != doc["encoder_checksum"]:
            raise ValueError(f"encoder checksum mismatch for {enc_path}")
        return cls(
            mel_config=DeepMelConfig(**doc["mel_config"]),
            scaler=MelScaler(**doc["scaler"]),
            encoder=MlpAutoencoder.from_dict(json.loads(blob)),
            kmeans=KMeansModel.from_dict(doc["kmeans"]),
            cluster_chaos={int(k): v for k, v in doc["cluster_chaos"].items()},
            vote_window_s=doc["vote_window_s"],
            encoder_path=enc_path,
            encoder_checksum=doc["encoder_checksum"],
        )


def energy_chaos_mapping(cluster_energy: dict[int, float]) -> dict[int, str]:
    """Clusters below the midpoint of min/max mean energy are "no chaos"."""
    values = np.array(list(cluster_energy.values()))
    midpoint = (values.min() + values.max()) / 2.0
    return {
        c: (CHAOS_NO if e < midpoint or len(values) == 1 else CHAOS_YES)
        for c, e in cluster_energy.items()
    }


def fit_pipeline(
    corpus,
    encoder: MlpAutoencoder,
    k: int = 2,
    rng_seed: int = 0,
    cfg: DeepMelConfig = DeepMelConfig(),
    k_sweep: tuple[int, ...] | None = None,
    cluster_chaos: dict[int, str] | None = None,
) -> tuple[DeepPipelineModel, float, pd.DataFrame | None]:
    """Encode the corpus, fit K-Means on latents and derive the chaos map.

    Returns (model, silhouette at k, optional k-sweep silhouette table).
    """
    if encoder.in_dim != cfg.flat_dim:
        raise ValueError(
            f"encoder expects {encoder.in_dim} inputs, mel config yields {cfg.flat_dim}"
        )
    scaler = fit_scaler(corpus, cfg)
    rows = np.vstack([preprocess(clip, cfg, scaler) for clip in corpus])
    energies = np.concatenate([_second_rms(clip, cfg) for clip in corpus])
    if len(rows) < k:
        raise ValueError(f"corpus yields {len(rows)} seconds; need at least k={k}")
    latents = encode(encoder, rows)

    sweep = None
    if k_sweep:
        sweep_rows = []
        for kk in k_sweep:
            km = kmeans_fit(latents, k=kk, rng_seed=rng_seed)
            sil = silhouette_score(latents, kmeans_predict(km, latents), rng_seed=rng_seed)
            sweep_rows.append({"k": kk, "silhouette": sil, "inertia": km.inertia})
        sweep = pd.DataFrame(sweep_rows, columns=["k", "silhouette", "inertia"])

    kmeans = kmeans_fit(latents, k=k, rng_seed=rng_seed)
    labels = kmeans_predict(kmeans, latents)
    silhouette = silhouette_score(latents, labels, rng_seed=rng_seed)
    if cluster_chaos is None:
        cluster_energy = {
            int(c): float(energies[labels == c].mean()) for c in range(k)
        }
        cluster_chaos = energy_chaos_mapping(cluster_energy)
    missing = [c for c in range(k) if c not in cluster_chaos]
    if missing:
        raise ValueError(f"chaos mapping missing clusters {missing}")
    model = DeepPipelineModel(
        mel_config=cfg,
        scaler=scaler,
        encoder=encoder,
        kmeans=kmeans,
        cluster_chaos=cluster_chaos,
    )
    return model, silhouette, sweep


def predict_seconds(model: DeepPipelineModel, clip: AudioClip) -> pd.DataFrame:
    """Per-second timeline: offset_s, cluster_id, chaos (yes/no)."""
    rows = preprocess(clip, model.mel_config, model.scaler)
    latents = encode(model.encoder, rows)
    clusters = kmeans_predict(model.kmeans, latents)
    return pd.DataFrame(
        {
            "source_id": clip.source_id,
            "second_offset": np.arange(len(rows)),
            "cluster_id": clusters,
            "chaos": [model.cluster_chaos[int(c)] for c in clusters],
        }
    )


def majority_vote(timeline: pd.DataFrame, window_s: int = VOTE_WINDOW_S) -> pd.DataFrame:
    """Modal verdict per consecutive block of seconds; ties go to "yes".

    A trailing partial block is voted over the seconds it has.
    """
    if len(timeline) == 0:
        raise ValueError("empty timeline")
    rows = []
    for source, group in timeline.groupby("source_id", sort=True):
        verdicts = group.sort_values("second_offset")["chaos"].to_numpy()
        for start in range(0, len(verdicts), window_s):
            block = verdicts[start : start + window_s]
            yes = (block == CHAOS_YES).sum()
            rows.append(
                {
                    "source_id": source,
                    "window_start_s": start,
                    "verdict": CHAOS_YES if yes >= len(block) - yes else CHAOS_NO,
                }
            )
    return pd.DataFrame(rows, columns=["source_id", "window_start_s", "verdict"])


def evaluate(
    model: DeepPipelineModel, labeled_clips: list[tuple[AudioClip, pd.DataFrame]]
) -> dict:
    """Window-level accuracy against per-second ground-truth chaos labels.

    Each element pairs a clip with a label table holding `second_offset`
    and `chaos` columns. Ground-truth window verdicts use the same
    majority-vote rule as predictions.
    """
    pred_frames = []
    truth_frames = []
    for clip, labels in labeled_clips:
        if not {"second_offset", "chaos"} <= set(labels.columns):
            raise ValueError("label table needs second_offset and chaos columns")
        pred = predict_seconds(model, clip)
        truth = labels.copy()
        truth["source_id"] = clip.source_id
        pred_frames.append(pred)
        truth_frames.append(truth[["source_id", "second_offset", "chaos"]])
    pred_windows = majority_vote(pd.concat(pred_frames), model.vote_window_s)
    truth_windows = majority_vote(pd.concat(truth_frames), model.vote_window_s)
    merged = pred_windows.merge(
        truth_windows, on=["source_id", "window_start_s"], suffixes=("_pred", "_true")
    )
    accuracy = float((merged["verdict_pred"] == merged["verdict_true"]).mean())
    return {
        "k": model.kmeans.k,
        "n_windows": len(merged),
        "accuracy": accuracy,
        "n_no_chaos_clusters": sum(
            1 for v in model.cluster_chaos.values() if v == CHAOS_NO
        ),
    }
