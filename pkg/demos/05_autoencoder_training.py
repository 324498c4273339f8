"""The denoising autoencoder on its own: training, noise, gradients.

The network is a symmetric MLP (input -> 512 -> 128 -> latent -> 128 ->
512 -> input) trained on mean squared reconstruction error with seeded
Gaussian noise injected at the bottleneck during training only.
"""

import numpy as np

from chaosaudio.autoencoder import (
    OptimizerConfig,
    build_autoencoder,
    encode,
    forward,
    param_search,
    train,
)

rng = np.random.default_rng(0)
# low-rank structured data: 3 latent factors mixed into 64 dimensions
factors = rng.uniform(-1, 1, size=(500, 3))
mix = rng.uniform(-1, 1, size=(3, 64))
data = factors @ mix
data = 0.1 + 0.8 * (data - data.min()) / (data.max() - data.min())

model = build_autoencoder(64, 8, hidden=(48, 16), rng_seed=0)
report = train(
    model, data,
    OptimizerConfig(kind="rmsprop", learning_rate=0.001, epochs=150, batch_size=128),
    rng_seed=0,
)
print(f"rmsprop: train {report.final_train_loss:.4f}, val {report.final_val_loss:.4f}")

# noise only perturbs training-mode forward passes
batch = data[:4]
noisy, _ = forward(model, batch, training=True, rng=np.random.default_rng(1))
clean, _ = forward(model, batch)
print(f"training-mode output differs by {np.abs(noisy - clean).max():.3f}; "
      f"inference is deterministic")

latents = encode(model, data)
print(f"latent codes: {latents.shape}")

# the 3x3 grid over latent width and adadelta learning rate
cells, best = param_search(
    data, latent_dims=(4, 8, 16), adadelta_lrs=(0.1, 1.0, 10.0),
    epochs=40, batch_size=128, hidden=(48, 16), rng_seed=0,
)
print("\nparameter grid (final validation loss):")
for c in cells:
    print(f"  L={c['latent_dim']:>2} lr={c['learning_rate']:<4} "
          f"val={c['final_val_loss']:.4f}"
          + ("  DIVERGED" if c["diverged_at"] is not None else ""))
print(f"selected: L={best['latent_dim']}, lr={best['learning_rate']}")
