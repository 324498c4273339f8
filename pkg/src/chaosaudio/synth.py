"""Deterministic synthetic corpus generator.

Stands in for real home recordings in tests and demos. Four sound classes
mirror the leaf semantics of the chaos tree:

- ``silence``: exact zeros (optionally low-level dither),
- ``soft_tone``: quiet amplitude-modulated tone (speech/music-like),
- ``loud_noise``: loud broadband noise,
- ``crying``: pulsed tone bursts with vibrato.

Active (non-silent) classes ride on a small DC bias so that the raw-signal
mean separates silence from activity, which the first tree split relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from chaosaudio.audio_io import CANONICAL_RATE_HZ, AudioClip

CLASS_NAMES = ["silence", "soft_tone", "loud_noise", "crying"]

# per-second binary chaos labels used by the deep pipeline harnesses
CLASS_CHAOS = {"silence": "no", "soft_tone": "yes", "loud_noise": "yes", "crying": "yes"}


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    seconds_per_class: dict[str, float] = field(
        default_factory=lambda: {name: 60.0 for name in CLASS_NAMES}
    )
    seed: int = 0
    sample_rate_hz: int = CANONICAL_RATE_HZ
    dc_bias: float = 0.02  # applied to active classes
    dither_db: float | None = None  # e.g. -60.0 for dithered silence

    def __post_init__(self):
        if not self.seconds_per_class or sum(self.seconds_per_class.values()) <= 0:
            raise ValueError("total corpus duration must be positive")
        unknown = set(self.seconds_per_class) - set(CLASS_NAMES)
        if unknown:
            raise ValueError(f"unknown class names: {sorted(unknown)}")


def _silence(n, sr, rng, spec):
    x = np.zeros(n)
    if spec.dither_db is not None:
        x += rng.uniform(-1.0, 1.0, n) * 10.0 ** (spec.dither_db / 20.0)
    return x


def _slow_gain(n, sr, rng, depth=0.2, rate_hz=0.05):
    """Smooth random loudness drift so windows are not carbon copies."""
    t = np.arange(n) / sr
    phase = rng.uniform(0, 2 * np.pi, 3)
    drift = (
        np.sin(2 * np.pi * rate_hz * t + phase[0])
        + 0.5 * np.sin(2 * np.pi * 2.3 * rate_hz * t + phase[1])
        + 0.25 * np.sin(2 * np.pi * 5.1 * rate_hz * t + phase[2])
    )
    return 1.0 + depth * drift / 1.75


def _soft_tone(n, sr, rng, spec):
    t = np.arange(n) / sr
    f0 = 220.0 + 30.0 * np.sin(2 * np.pi * 0.11 * t)
    am = 1.0 + 0.3 * np.sin(2 * np.pi * 4.0 * t + rng.uniform(0, 2 * np.pi))
    tone = 0.05 * am * np.sin(2 * np.pi * np.cumsum(f0) / sr)
    return tone * _slow_gain(n, sr, rng) + spec.dc_bias


def _loud_noise(n, sr, rng, spec):
    noise = 0.45 * rng.uniform(-1.0, 1.0, n)
    return noise * _slow_gain(n, sr, rng) + spec.dc_bias


def _crying(n, sr, rng, spec):
    t = np.arange(n) / sr
    f0 = 450.0 + 40.0 * np.sin(2 * np.pi * 5.0 * t)
    carrier = np.sin(2 * np.pi * np.cumsum(f0) / sr)
    # cry rhythm: ~0.35 s bursts separated by near-silence
    envelope = (np.sin(2 * np.pi * 1.4 * t + rng.uniform(0, 2 * np.pi)) > -0.2).astype(float)
    envelope *= 0.35 + 0.1 * np.sin(2 * np.pi * 0.7 * t)
    return carrier * envelope * _slow_gain(n, sr, rng) + spec.dc_bias


_GENERATORS = {
    "silence": _silence,
    "soft_tone": _soft_tone,
    "loud_noise": _loud_noise,
    "crying": _crying,
}


def generate_corpus(spec: SyntheticCorpusSpec) -> tuple[list[AudioClip], pd.DataFrame]:
    """One clip per class plus a per-second ground-truth label table.

    Label columns: source_id, second_offset, class_label, chaos (yes/no).
    """
    rng = np.random.default_rng(spec.seed)
    clips = []
    label_rows = []
    for name in CLASS_NAMES:
        seconds = spec.seconds_per_class.get(name, 0.0)
        if seconds <= 0:
            continue
        n = int(round(seconds * spec.sample_rate_hz))
        x = np.clip(_GENERATORS[name](n, spec.sample_rate_hz, rng, spec), -1.0, 1.0)
        clips.append(
            AudioClip(samples=x, sample_rate_hz=spec.sample_rate_hz, source_id=name)
        )
        for s in range(int(seconds)):
            label_rows.append(
                {
                    "source_id": name,
                    "second_offset": s,
                    "class_label": name,
                    "chaos": CLASS_CHAOS[name],
                }
            )
    labels = pd.DataFrame(
        label_rows, columns=["source_id", "second_offset", "class_label", "chaos"]
    )
    return clips, labels
