"""Shared fixtures: a small synthetic corpus and its feature table."""

import numpy as np
import pytest

from chaosaudio.audio_io import CANONICAL_RATE_HZ, AudioClip
from chaosaudio.features import extract_feature_table
from chaosaudio.synth import SyntheticCorpusSpec, generate_corpus


@pytest.fixture(scope="session")
def small_corpus():
    """Four 60-second class clips plus per-second labels."""
    spec = SyntheticCorpusSpec(
        seconds_per_class={c: 60.0 for c in ("silence", "soft_tone", "loud_noise", "crying")},
        seed=11,
    )
    return generate_corpus(spec)


@pytest.fixture(scope="session")
def small_table(small_corpus):
    clips, _ = small_corpus
    return extract_feature_table(clips)


@pytest.fixture()
def sine_clip():
    sr = CANONICAL_RATE_HZ
    t = np.arange(sr * 2) / sr
    return AudioClip(0.5 * np.sin(2 * np.pi * 440.0 * t), sr, "sine440")
