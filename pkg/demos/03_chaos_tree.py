"""The hierarchical chaos tree: interpretable window labeling.

A cascade of k=2 K-Means splits peels off one acoustic category at a time:
silence (raw mean), broadband noise (MFCC spread), soft sounds (RMS
energy), and finally crying vs. overlapping loud noise (centroid
variance). Each leaf maps to a chaos level.
"""

from chaosaudio.features import extract_feature_table
from chaosaudio.synth import SyntheticCorpusSpec, generate_corpus
from chaosaudio.tree import time_proportions, tree_fit, tree_predict

clips, _ = generate_corpus(
    SyntheticCorpusSpec(
        seconds_per_class={c: 120.0 for c in ("silence", "soft_tone", "loud_noise", "crying")},
        seed=0,
    )
)
table = extract_feature_table(clips)

model, silhouettes = tree_fit(table, rng_seed=0)
print("per-split silhouettes:")
print(silhouettes.to_string(index=False))

pred = tree_predict(model, table)
print("\nleaf assignment by source:")
print(pred.groupby(["source_id", "leaf_label"]).size().unstack(fill_value=0))

# crying windows are excluded from the ambient-chaos time budget
print("\ntime proportions (crying excluded):")
print(time_proportions(pred).round(3).to_string(index=False))
