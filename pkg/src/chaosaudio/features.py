"""Per-frame acoustic features and 10-second window aggregation.

Each 1-second frame yields mean and standard deviation of eight feature
kinds (raw signal, MFCC, RMS energy, zero-crossing rate, spectral centroid,
bandwidth, roll-off and flatness), giving the fixed 16-column feature
schema. Twenty contiguous frames are averaged into one window row.

All statistics use the population standard deviation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.fft import dct
from scipy.signal import get_window

from chaosaudio.audio_io import AudioClip

LOG_FLOOR = 1e-10
ROLLOFF_FRACTION = 0.85

FEATURE_COLUMNS = [
    "raw_mean",
    "raw_std",
    "mfcc_mean",
    "mfcc_std",
    "rmse_mean",
    "rmse_std",
    "zcr_mean",
    "zcr_std",
    "centroid_mean",
    "centroid_std",
    "bandwidth_mean",
    "bandwidth_std",
    "rolloff_mean",
    "rolloff_std",
    "flatness_mean",
    "flatness_std",
]

TABLE_COLUMNS = ["source_id", "window_index", "window_start_s"] + FEATURE_COLUMNS


@dataclass(frozen=True)
class StftConfig:
    n_fft: int = 512
    hop: int = 256

    def __post_init__(self):
        if self.hop > self.n_fft:
            raise ValueError("hop must not exceed n_fft")
        if self.n_fft & (self.n_fft - 1):
            raise ValueError("n_fft must be a power of two")


@dataclass(frozen=True)
class MelConfig:
    n_mels: int = 64
    f_min: float = 0.0
    f_max: float | None = None  # None -> Nyquist
    mfcc_count: int = 13

    def __post_init__(self):
        if self.n_mels < self.mfcc_count:
            raise ValueError("n_mels must be >= mfcc_count")


def _frame_matrix(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """Strided sub-frames of length n_fft; shape (n_sub, n_fft)."""
    if len(x) < n_fft:
        raise ValueError(f"signal of {len(x)} samples shorter than n_fft={n_fft}")
    n = 1 + (len(x) - n_fft) // hop
    idx = np.arange(n)[:, None] * hop + np.arange(n_fft)[None, :]
    return x[idx]


def stft(frame: AudioClip, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Hann-windowed complex spectrogram, shape (n_fft/2 + 1, n_sub)."""
    win = get_window("hann", cfg.n_fft, fftbins=True)
    sub = _frame_matrix(frame.samples, cfg.n_fft, cfg.hop) * win
    return np.fft.rfft(sub, axis=1).T


def spectral_descriptors(
    magnitudes: np.ndarray, sample_rate_hz: int, n_fft: int
) -> dict[str, np.ndarray]:
    """Centroid, bandwidth, roll-off and flatness per sub-frame.

    `magnitudes` has shape (bins, n_sub). All four descriptors are defined
    as 0 for an all-zero sub-frame.
    """
    mag = np.asarray(magnitudes, dtype=np.float64)
    if mag.ndim != 2 or mag.shape[1] < 1:
        raise ValueError("need a (bins, n_sub) magnitude array")
    if np.any(mag < 0):
        raise ValueError("magnitudes must be non-negative")
    freqs = np.arange(mag.shape[0]) * sample_rate_hz / n_fft
    total = mag.sum(axis=0)
    nonzero = total > 0
    safe_total = np.where(nonzero, total, 1.0)

    centroid = (freqs[:, None] * mag).sum(axis=0) / safe_total
    spread = ((freqs[:, None] - centroid[None, :]) ** 2 * mag).sum(axis=0) / safe_total
    bandwidth = np.sqrt(spread)

    power = mag**2
    cum = np.cumsum(power, axis=0)
    energy = cum[-1]
    threshold = ROLLOFF_FRACTION * np.where(energy > 0, energy, 1.0)
    rolloff = freqs[np.argmax(cum >= threshold[None, :], axis=0)]

    floored = np.maximum(power, LOG_FLOOR)
    geo = np.exp(np.log(floored).mean(axis=0))
    arith = floored.mean(axis=0)
    flatness = geo / arith

    zero = ~nonzero
    for arr in (centroid, bandwidth, rolloff, flatness):
        arr[zero] = 0.0
    return {
        "centroid": centroid,
        "bandwidth": bandwidth,
        "rolloff": rolloff,
        "flatness": flatness,
    }


def zcr(frame: AudioClip, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Zero-crossing rate per sub-frame; zeros count as positive."""
    sub = _frame_matrix(frame.samples, cfg.n_fft, cfg.hop)
    signs = sub >= 0
    return (signs[:, 1:] != signs[:, :-1]).sum(axis=1) / (cfg.n_fft - 1)


def rmse(frame: AudioClip, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Root-mean-square energy per sub-frame."""
    sub = _frame_matrix(frame.samples, cfg.n_fft, cfg.hop)
    return np.sqrt((sub**2).mean(axis=1))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    sample_rate_hz: int, n_fft: int, cfg: MelConfig = MelConfig()
) -> np.ndarray:
    """Triangular mel filterbank over FFT bins, shape (n_mels, n_fft/2 + 1)."""
    f_max = cfg.f_max if cfg.f_max is not None else sample_rate_hz / 2
    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(f_max), cfg.n_mels + 2))
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate_hz / n_fft
    fb = np.zeros((cfg.n_mels, len(bin_freqs)))
    for i in range(cfg.n_mels):
        lo, center, hi = edges[i], edges[i + 1], edges[i + 2]
        rising = (bin_freqs - lo) / max(center - lo, 1e-12)
        falling = (hi - bin_freqs) / max(hi - center, 1e-12)
        fb[i] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def mfcc(
    frame: AudioClip,
    stft_cfg: StftConfig = StftConfig(),
    mel_cfg: MelConfig = MelConfig(),
) -> np.ndarray:
    """MFCC matrix, shape (mfcc_count, n_sub).

    Power spectrogram -> triangular mel filterbank -> log (floored) ->
    orthonormal DCT-II -> first `mfcc_count` coefficients.
    """
    spec = stft(frame, stft_cfg)
    power = np.abs(spec) ** 2
    fb = mel_filterbank(frame.sample_rate_hz, stft_cfg.n_fft, mel_cfg)
    mel_energy = fb @ power
    log_mel = np.log(np.maximum(mel_energy, LOG_FLOOR))
    coeffs = dct(log_mel, type=2, norm="ortho", axis=0)
    return coeffs[: mel_cfg.mfcc_count]


def frame_features(
    frame: AudioClip,
    stft_cfg: StftConfig = StftConfig(),
    mel_cfg: MelConfig = MelConfig(),
) -> dict[str, float]:
    """The 16 per-frame statistics, keyed by FEATURE_COLUMNS.

    MFCC statistics pool over both coefficients and sub-frames; every other
    spectral feature is summarized over sub-frames.
    """
    x = frame.samples
    spec = stft(frame, stft_cfg)
    mag = np.abs(spec)
    desc = spectral_descriptors(mag, frame.sample_rate_hz, stft_cfg.n_fft)

    power = mag**2
    fb = mel_filterbank(frame.sample_rate_hz, stft_cfg.n_fft, mel_cfg)
    log_mel = np.log(np.maximum(fb @ power, LOG_FLOOR))
    coeffs = dct(log_mel, type=2, norm="ortho", axis=0)[: mel_cfg.mfcc_count]

    sub = _frame_matrix(x, stft_cfg.n_fft, stft_cfg.hop)
    signs = sub >= 0
    zcr_vals = (signs[:, 1:] != signs[:, :-1]).sum(axis=1) / (stft_cfg.n_fft - 1)
    rmse_vals = np.sqrt((sub**2).mean(axis=1))

    out = {
        "raw_mean": x.mean(),
        "raw_std": x.std(),
        "mfcc_mean": coeffs.mean(),
        "mfcc_std": coeffs.std(),
        "rmse_mean": rmse_vals.mean(),
        "rmse_std": rmse_vals.std(),
        "zcr_mean": zcr_vals.mean(),
        "zcr_std": zcr_vals.std(),
    }
    for name in ("centroid", "bandwidth", "rolloff", "flatness"):
        out[f"{name}_mean"] = desc[name].mean()
        out[f"{name}_std"] = desc[name].std()
    return {k: float(v) for k, v in out.items()}


FRAMES_PER_WINDOW = 20


def aggregate_windows(
    frames: list[dict], offsets: list[float], frames_per_window: int = FRAMES_PER_WINDOW
) -> list[dict]:
    """Average consecutive groups of frame feature dicts into window rows.

    A trailing group smaller than `frames_per_window` is dropped. Each row
    carries `window_index` and `window_start_s` (first frame's offset).
    """
    if len(frames) < frames_per_window:
        raise ValueError(
            f"need at least {frames_per_window} frames, got {len(frames)}"
        )
    windows = []
    for w, start in enumerate(range(0, len(frames) - frames_per_window + 1, frames_per_window)):
        group = frames[start : start + frames_per_window]
        row = {
            col: float(np.mean([g[col] for g in group])) for col in FEATURE_COLUMNS
        }
        row["window_index"] = w
        row["window_start_s"] = float(offsets[start])
        windows.append(row)
    return windows


def extract_feature_table(
    clips,
    stft_cfg: StftConfig = StftConfig(),
    mel_cfg: MelConfig = MelConfig(),
    frame_spec=None,
) -> pd.DataFrame:
    """Full pipeline from 8 kHz clips to the window feature table."""
    from chaosaudio.audio_io import CANONICAL_RATE_HZ, FrameSpec, segment

    frame_spec = frame_spec or FrameSpec()
    rows = []
    for clip in clips:
        if clip.sample_rate_hz != CANONICAL_RATE_HZ:
            raise ValueError(
                f"{clip.source_id}: expected {CANONICAL_RATE_HZ} Hz, "
                f"got {clip.sample_rate_hz}"
            )
        frames = segment(clip, frame_spec)
        feats = [frame_features(f, stft_cfg, mel_cfg) for f in frames]
        offsets = [f.start_offset_s for f in frames]
        for row in aggregate_windows(feats, offsets):
            row["source_id"] = clip.source_id
            rows.append(row)
    df = pd.DataFrame(rows, columns=TABLE_COLUMNS)
    return df.sort_values(["source_id", "window_start_s"], kind="stable").reset_index(
        drop=True
    )


def write_feature_table(df: pd.DataFrame, path) -> None:
    """Serialize with the fixed header; reals use 9 significant digits."""
    df.to_csv(path, index=False, float_format="%.9g", columns=TABLE_COLUMNS,
              lineterminator="\n")


def read_feature_table(path) -> pd.DataFrame:
    df = pd.read_csv(path)
    missing = [c for c in TABLE_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing feature table columns {missing}")
    return df[TABLE_COLUMNS]


def correlation_matrix(
    df: pd.DataFrame, threshold: float = 0.85
) -> tuple[np.ndarray, list[tuple[str, str, float]], list[str]]:
    """Pearson correlation over the feature columns.

    Returns (matrix, flagged pairs with |r| > threshold, constant columns).
    Constant columns get r = 0 against everything (unit diagonal kept).
    """
    if len(df) < 2:
        raise ValueError("need at least 2 rows for correlations")
    data = df[FEATURE_COLUMNS].to_numpy(dtype=np.float64)
    stds = data.std(axis=0)
    constant = [FEATURE_COLUMNS[i] for i in np.nonzero(stds == 0)[0]]
    safe = np.where(stds > 0, stds, 1.0)
    z = (data - data.mean(axis=0)) / safe
    corr = z.T @ z / len(data)
    for i in np.nonzero(stds == 0)[0]:
        corr[i, :] = 0.0
        corr[:, i] = 0.0
    np.fill_diagonal(corr, 1.0)
    flagged = []
    n = len(FEATURE_COLUMNS)
    for i in range(n):
        for j in range(i + 1, n):
            if abs(corr[i, j]) > threshold:
                flagged.append((FEATURE_COLUMNS[i], FEATURE_COLUMNS[j], float(corr[i, j])))
    return corr, flagged, constant


def low_correlation_columns(df: pd.DataFrame, threshold: float = 0.85) -> list[str]:
    """Greedy subset of feature columns pairwise correlated below threshold.

    Walks FEATURE_COLUMNS in order and keeps a column only if its |r|
    against every already-kept column is <= threshold.
    """
    corr, _, constant = correlation_matrix(df, threshold)
    kept: list[int] = []
    for i, name in enumerate(FEATURE_COLUMNS):
        if name in constant:
            continue
        if all(abs(corr[i, j]) <= threshold for j in kept):
            kept.append(i)
    return [FEATURE_COLUMNS[i] for i in kept]
