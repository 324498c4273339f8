"""From raw audio to the 16-column window feature table.

Each 1-second frame yields mean/std summaries of eight descriptors (raw
signal, MFCC, RMS energy, zero crossings, centroid, bandwidth, roll-off,
flatness); twenty frames average into one 10-second window row.
"""

import numpy as np

from chaosaudio.features import (
    FEATURE_COLUMNS,
    correlation_matrix,
    extract_feature_table,
    low_correlation_columns,
)
from chaosaudio.synth import SyntheticCorpusSpec, generate_corpus

clips, labels = generate_corpus(
    SyntheticCorpusSpec(
        seconds_per_class={c: 60.0 for c in ("silence", "soft_tone", "loud_noise", "crying")},
        seed=0,
    )
)

table = extract_feature_table(clips)
print(f"feature table: {table.shape[0]} windows x {len(FEATURE_COLUMNS)} features")
print(table.groupby("source_id")[["rmse_mean", "zcr_mean", "flatness_mean"]]
      .mean().round(4))

# correlated features can be pruned before map training
corr, flagged, constant = correlation_matrix(table)
print(f"\n{len(flagged)} feature pairs with |r| > 0.85, "
      f"{len(constant)} constant columns")
kept = low_correlation_columns(table)
print(f"greedy low-correlation subset ({len(kept)}): {kept}")
