"""Batch toolkit for quantifying the chaos level of home audio recordings.

Three unsupervised back-ends over a shared acoustic feature pipeline:

- a hierarchical binary K-Means tree over hand-crafted features (`tree`),
- a self-organizing map over the same features (`som`),
- a denoising autoencoder + K-Means over mel spectrograms (`deep`).

See the `demos/` directory of the repository for narrative walkthroughs
of each capability, and `chaosaudio.cli` for the batch commands.
"""

__version__ = "0.1.0"

from chaosaudio.audio_io import AudioClip, FrameSpec, load_audio, resample, segment

__all__ = [
    "AudioClip",
    "FrameSpec",
    "load_audio",
    "resample",
    "segment",
    "__version__",
]
