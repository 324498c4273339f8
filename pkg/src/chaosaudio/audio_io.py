"""WAV decoding, resampling, segmentation and spectral noise gating.

Everything downstream operates on mono clips at the canonical 8 kHz rate
(1 second == 8000 samples). Decoding supports PCM WAV with 8/16/24-bit
integer or 32-bit float samples, 1 or 2 channels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from math import gcd
from pathlib import Path

import numpy as np
from scipy.signal import firwin, get_window, resample_poly

CANONICAL_RATE_HZ = 8000


class AudioIOError(Exception):
    """Unreadable or unsupported audio input."""


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform with provenance and a time offset into its source."""

    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate_hz: int
    source_id: str = ""
    start_offset_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class FrameSpec:
    """Analysis framing; defaults encode 1 s frames with 50% overlap."""

    frame_len_s: float = 1.0
    hop_s: float = 0.5

    def __post_init__(self):
        if self.frame_len_s <= 0 or self.hop_s <= 0:
            raise ValueError("frame_len_s and hop_s must be positive")
        if self.hop_s > self.frame_len_s:
            raise ValueError("hop_s must not exceed frame_len_s")


def _parse_wav(data: bytes, path: str):
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioIOError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None or payload is None:
        raise AudioIOError(f"{path}: missing fmt or data chunk")
    if len(fmt) < 16:
        raise AudioIOError(f"{path}: truncated fmt chunk")
    audio_format, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if audio_format == 0xFFFE and len(fmt) >= 40:
        # WAVE_FORMAT_EXTENSIBLE: first two bytes of the GUID carry the format
        (audio_format,) = struct.unpack_from("<H", fmt, 24)
    return audio_format, channels, rate, bits, payload


def load_audio(path) -> AudioClip:
    """Decode a PCM WAV file into a mono clip with samples in [-1, 1].

    Stereo is mixed down by per-sample channel average; integer samples are
    scaled by the type's maximum magnitude. The header sample rate is kept.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise AudioIOError(f"{path}: cannot read file ({exc})") from exc
    audio_format, channels, rate, bits, payload = _parse_wav(data, str(path))
    if channels not in (1, 2):
        raise AudioIOError(f"{path}: unsupported channel count {channels}")
    if rate <= 0:
        raise AudioIOError(f"{path}: invalid sample rate {rate}")

    if audio_format == 1 and bits == 8:
        x = (np.frombuffer(payload, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif audio_format == 1 and bits == 16:
        x = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == 1 and bits == 24:
        raw = np.frombuffer(payload, dtype=np.uint8)
        raw = raw[: len(raw) - len(raw) % 3].reshape(-1, 3).astype(np.int64)
        vals = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        vals = np.where(vals >= 1 << 23, vals - (1 << 24), vals)
        x = vals.astype(np.float64) / float(1 << 23)
    elif audio_format == 3 and bits == 32:
        x = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    else:
        raise AudioIOError(
            f"{path}: unsupported encoding (format {audio_format}, {bits}-bit)"
        )

    x = x[: len(x) - len(x) % channels]
    if len(x) == 0:
        raise AudioIOError(f"{path}: zero-length audio stream")
    if channels == 2:
        x = x.reshape(-1, 2).mean(axis=1)
    x = np.clip(x, -1.0, 1.0)
    return AudioClip(samples=x, sample_rate_hz=int(rate), source_id=path.stem)


def save_wav(path, clip: AudioClip) -> None:
    """Write a clip as 16-bit PCM WAV."""
    x = np.clip(clip.samples, -1.0, 1.0)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        1,
        1,
        clip.sample_rate_hz,
        clip.sample_rate_hz * 2,
        2,
        16,
        b"data",
        len(payload),
    )
    Path(path).write_bytes(header + payload)


_TAPS_PER_PHASE = 64
_KAISER_BETA = 8.0


def resample(clip: AudioClip, target_hz: int) -> AudioClip:
    """Band-limited polyphase resampling to `target_hz`.

    Windowed-sinc anti-aliasing filter (Kaiser window), cutoff at the lower
    of the two Nyquist frequencies. Output length is
    round(len * target / source); samples are clipped back to [-1, 1].
    """
    if target_hz < 1000:
        raise ValueError(f"target_hz must be >= 1000, got {target_hz}")
    if target_hz == clip.sample_rate_hz:
        return clip
    g = gcd(clip.sample_rate_hz, target_hz)
    up, down = target_hz // g, clip.sample_rate_hz // g
    # odd tap count keeps the filter delay an integer number of samples
    h = firwin(
        _TAPS_PER_PHASE * up + 1, 1.0 / max(up, down), window=("kaiser", _KAISER_BETA)
    )
    y = resample_poly(clip.samples, up, down, window=h)
    n_out = int(round(len(clip.samples) * target_hz / clip.sample_rate_hz))
    if len(y) < n_out:
        y = np.concatenate([y, np.zeros(n_out - len(y))])
    y = np.clip(y[:n_out], -1.0, 1.0)
    return replace(clip, samples=y, sample_rate_hz=int(target_hz))


def segment(clip: AudioClip, spec: FrameSpec = FrameSpec()) -> list[AudioClip]:
    """Cut a clip into frames starting at multiples of the hop.

    A trailing partial frame is dropped. Each frame carries its absolute
    start offset within the original source.
    """
    frame_len = int(round(spec.frame_len_s * clip.sample_rate_hz))
    hop = int(round(spec.hop_s * clip.sample_rate_hz))
    if len(clip.samples) < frame_len:
        raise ValueError(
            f"clip of {clip.duration_s:.3f} s is shorter than one "
            f"{spec.frame_len_s} s frame"
        )
    frames = []
    k = 0
    while k * hop + frame_len <= len(clip.samples):
        start = k * hop
        frames.append(
            AudioClip(
                samples=clip.samples[start : start + frame_len],
                sample_rate_hz=clip.sample_rate_hz,
                source_id=clip.source_id,
                start_offset_s=clip.start_offset_s + k * spec.hop_s,
            )
        )
        k += 1
    return frames


def _stft_frames(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    n = 1 + (len(x) - n_fft) // hop
    idx = np.arange(n)[:, None] * hop + np.arange(n_fft)[None, :]
    return x[idx]


def noise_gate(
    clip: AudioClip,
    noise_profile: AudioClip,
    reduction_db: float = 20.0,
    n_fft: int = 512,
) -> AudioClip:
    """Spectral-subtraction style gate against a noise profile clip.

    Per STFT bin, the expected noise magnitude is estimated from the profile;
    clip bins at or below that estimate are attenuated by `reduction_db`.
    Phase is preserved and the signal is rebuilt by overlap-add, so the
    output has the same length as the input.
    """
    if len(noise_profile.samples) < n_fft:
        raise ValueError("noise profile shorter than one STFT window")
    hop = n_fft // 2
    win = get_window("hann", n_fft, fftbins=True)

    prof = _stft_frames(noise_profile.samples, n_fft, hop) * win
    noise_mag = np.abs(np.fft.rfft(prof, axis=1)).mean(axis=0)

    x = clip.samples
    pad = n_fft
    xp = np.concatenate([np.zeros(pad), x, np.zeros(pad + n_fft)])
    frames = _stft_frames(xp, n_fft, hop) * win
    spec = np.fft.rfft(frames, axis=1)
    mag = np.abs(spec)

    floor_gain = 10.0 ** (-abs(reduction_db) / 20.0)
    gain = np.where(mag <= noise_mag[None, :], floor_gain, 1.0)
    spec *= gain

    out_frames = np.fft.irfft(spec, n=n_fft, axis=1) * win
    total = np.zeros(len(xp))
    wsum = np.zeros(len(xp))
    for i, frame in enumerate(out_frames):
        start = i * hop
        total[start : start + n_fft] += frame
        wsum[start : start + n_fft] += win**2
    out = total / np.maximum(wsum, 1e-12)
    out = np.clip(out[pad : pad + len(x)], -1.0, 1.0)
    return replace(clip, samples=out)
