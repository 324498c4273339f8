"""End-to-end deep pipeline: mel spectrograms -> encoder -> K-Means -> vote.

Per second of audio, a 64-band log-mel spectrogram (32 sub-frames,
flattened to 2048 values in [0,1]) is encoded to a low-dimensional latent,
clustered with K-Means, mapped to a yes/no chaos verdict by cluster
energy, and finally smoothed by an 11-second majority vote.
"""

import numpy as np

from chaosaudio.autoencoder import OptimizerConfig, build_autoencoder, train
from chaosaudio.deep import (
    DeepMelConfig,
    evaluate,
    fit_pipeline,
    fit_scaler,
    majority_vote,
    predict_seconds,
    preprocess,
)
from chaosaudio.synth import SyntheticCorpusSpec, generate_corpus

clips, labels = generate_corpus(
    SyntheticCorpusSpec(seconds_per_class={"silence": 90.0, "loud_noise": 90.0}, seed=0)
)

cfg = DeepMelConfig()
scaler = fit_scaler(clips, cfg)
rows = np.vstack([preprocess(c, cfg, scaler) for c in clips])
print(f"mel rows: {rows.shape} in [{rows.min():.2f}, {rows.max():.2f}]")

encoder = build_autoencoder(cfg.flat_dim, 16, rng_seed=0)
report = train(encoder, rows, OptimizerConfig(kind="rmsprop", epochs=120), rng_seed=0)
print(f"encoder: train {report.final_train_loss:.4f}, val {report.final_val_loss:.4f}")

for k in (2, 3):
    model, silhouette, sweep = fit_pipeline(
        clips, encoder, k=k, rng_seed=0,
        k_sweep=(2, 3, 4, 6) if k == 2 else None,
    )
    pairs = [
        (c, labels[labels["source_id"] == c.source_id][["second_offset", "chaos"]])
        for c in clips
    ]
    result = evaluate(model, pairs)
    print(f"\nk={k}: silhouette {silhouette:.3f}, "
          f"window accuracy {result['accuracy']:.3f}, "
          f"no-chaos clusters {result['n_no_chaos_clusters']}")
    if sweep is not None:
        print("k-sweep:", {int(r.k): round(r.silhouette, 3) for r in sweep.itertuples()})

timeline = predict_seconds(model, clips[0])
windows = majority_vote(timeline)
print(f"\n{clips[0].source_id}: {len(timeline)} seconds -> {len(windows)} voted windows, "
      f"verdicts {windows['verdict'].value_counts().to_dict()}")
