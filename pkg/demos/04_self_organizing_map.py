"""Training a self-organizing map over the feature table.

The SOM lays the z-scored feature vectors onto a rectangular grid; the
U-matrix shows cluster boundaries, component planes show how each feature
varies across the map, and a weighted-KNN cross-validation quantifies how
separable the BMU clusters are.
"""

import numpy as np

from chaosaudio.features import extract_feature_table, low_correlation_columns
from chaosaudio.som import SomConfig, bmu_assign, component_planes, som_fit, som_verify, u_matrix
from chaosaudio.synth import SyntheticCorpusSpec, generate_corpus

clips, _ = generate_corpus(
    SyntheticCorpusSpec(
        seconds_per_class={c: 120.0 for c in ("silence", "soft_tone", "loud_noise", "crying")},
        seed=0,
    )
)
table = extract_feature_table(clips)
columns = low_correlation_columns(table)

model = som_fit(table, SomConfig(rows=6, cols=6, epochs=30, rng_seed=0), columns=columns)
print(f"map 6x6 on {len(columns)} features; "
      f"QE {model.qe_trace[0]:.3f} -> {model.qe_trace[-1]:.3f} over {len(model.qe_trace)} epochs")

um = u_matrix(model)
print(f"U-matrix ridge: max {um.max():.2f} vs median {np.median(um):.2f}")

planes = component_planes(model)
print(f"{planes.shape[0]} component planes of shape {planes.shape[1:]}")

bmus = bmu_assign(model, table)
print(f"{len(np.unique(bmus))} occupied nodes for {len(table)} windows")

report = som_verify(model, table, rng_seed=0)
print(f"BMU-cluster KNN accuracy: {report['knn'].mean_accuracy:.3f} "
      f"(PCA-95%: {report['knn_pca'].mean_accuracy:.3f}, "
      f"{report['pca_components']} components)")
