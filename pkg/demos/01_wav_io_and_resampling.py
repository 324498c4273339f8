"""Loading, resampling and gating audio.

Every analysis in this toolkit runs at a canonical 8 kHz mono rate. This
script writes a synthetic WAV, loads it back, resamples a 44.1 kHz signal
down to 8 kHz, and applies the spectral noise gate.
"""

import tempfile
from pathlib import Path

import numpy as np

from chaosaudio.audio_io import (
    CANONICAL_RATE_HZ,
    AudioClip,
    load_audio,
    noise_gate,
    resample,
    save_wav,
    segment,
)

out = Path(tempfile.mkdtemp(prefix="chaosaudio_demo_"))

# --- write and reload a 16-bit PCM WAV -------------------------------------
t = np.arange(2 * CANONICAL_RATE_HZ) / CANONICAL_RATE_HZ
clip = AudioClip(0.5 * np.sin(2 * np.pi * 440 * t), CANONICAL_RATE_HZ, "tone")
save_wav(out / "tone.wav", clip)
back = load_audio(out / "tone.wav")
print(f"roundtrip error: {np.max(np.abs(back.samples - clip.samples)):.2e}")

# --- resample CD-rate audio to the canonical rate ---------------------------
t44 = np.arange(44100) / 44100
cd = AudioClip(0.5 * np.sin(2 * np.pi * 440 * t44), 44100, "cd")
resampled = resample(cd, CANONICAL_RATE_HZ)
print(f"44.1 kHz -> {resampled.sample_rate_hz} Hz: {len(resampled.samples)} samples")

# --- 1-second frames with 50% overlap ---------------------------------------
frames = segment(clip)
print(f"{clip.duration_s:.0f} s clip -> {len(frames)} frames, "
      f"offsets {[f.start_offset_s for f in frames]}")

# --- spectral noise gate against a noise profile ----------------------------
rng = np.random.default_rng(0)
profile = AudioClip(0.05 * rng.standard_normal(2 * CANONICAL_RATE_HZ),
                    CANONICAL_RATE_HZ, "profile")
hum = AudioClip(0.005 * rng.standard_normal(2 * CANONICAL_RATE_HZ),
                CANONICAL_RATE_HZ, "hum")
gated = noise_gate(hum, profile, reduction_db=40.0)
print(f"gate: {np.sqrt(np.mean(hum.samples**2)):.4f} RMS -> "
      f"{np.sqrt(np.mean(gated.samples**2)):.4f} RMS")
