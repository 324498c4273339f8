"""Fully connected symmetric denoising autoencoder with manual backprop.

Encoder: in -> 512 (sigmoid) -> 128 (sigmoid) -> latent (linear).
Decoder: latent -> 128 (sigmoid) -> 512 (sigmoid) -> in (relu).

During training, seeded Gaussian noise (default sigma = 1/sqrt(10)) is
added to the latent; the noise realization is treated as a constant in the
backward pass. Optimizers: adadelta (with a 3x3 search grid over learning
rates 0.1/1/10 and latent widths) and RMSprop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from chaosaudio.cluster import SCHEMA_VERSION

DEFAULT_NOISE_SIGMA = 1.0 / np.sqrt(10.0)
DEFAULT_HIDDEN = (512, 128)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}; learning rate too large?")
        self.epoch = epoch


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str  # sigmoid | linear | relu

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dimensions must be >= 1")
        if self.activation not in ("sigmoid", "linear", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class MlpAutoencoder:
    specs: list[LayerSpec]
    weights: list[np.ndarray]  # per layer, in_dim x out_dim
    biases: list[np.ndarray]
    latent_index: int  # layer whose output is the latent
    latent_noise_sigma: float
    rng_seed: int

    @property
    def in_dim(self) -> int:
        return self.specs[0].in_dim

    @property
    def latent_dim(self) -> int:
        return self.specs[self.latent_index].out_dim

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model_type": "mlp_autoencoder",
            "layers": [
                {
                    "in_dim": s.in_dim,
                    "out_dim": s.out_dim,
                    "activation": s.activation,
                    "weights": w.tolist(),
                    "biases": b.tolist(),
                }
                for s, w, b in zip(self.specs, self.weights, self.biases)
            ],
            "latent_index": self.latent_index,
            "latent_noise_sigma": self.latent_noise_sigma,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpAutoencoder":
        specs, weights, biases = [], [], []
        for layer in doc["layers"]:
            specs.append(
                LayerSpec(layer["in_dim"], layer["out_dim"], layer["activation"])
            )
            weights.append(np.asarray(layer["weights"], dtype=np.float64))
            biases.append(np.asarray(layer["biases"], dtype=np.float64))
        return cls(
            specs=specs,
            weights=weights,
            biases=biases,
            latent_index=doc["latent_index"],
            latent_noise_sigma=doc["latent_noise_sigma"],
            rng_seed=doc["rng_seed"],
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "MlpAutoencoder":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_autoencoder(
    in_dim: int,
    latent_dim: int,
    hidden: tuple[int, int] = DEFAULT_HIDDEN,
    latent_noise_sigma: float = DEFAULT_NOISE_SIGMA,
    rng_seed: int = 0,
) -> MlpAutoencoder:
    """Glorot-uniform initialized symmetric autoencoder."""
    h1, h2 = hidden
    specs = [
        LayerSpec(in_dim, h1, "sigmoid"),
        LayerSpec(h1, h2, "sigmoid"),
        LayerSpec(h2, latent_dim, "linear"),
        LayerSpec(latent_dim, h2, "sigmoid"),
        LayerSpec(h2, h1, "sigmoid"),
        LayerSpec(h1, in_dim, "relu"),
    ]
    rng = np.random.default_rng(rng_seed)
    weights, biases = [], []
    for s in specs:
        limit = np.sqrt(6.0 / (s.in_dim + s.out_dim))
        if s.activation == "relu":
            # damped weights + positive bias keep relu units alive at init;
            # a unit whose pre-activation starts negative for the whole
            # corpus would never receive a gradient
            weights.append(rng.uniform(-limit / 4, limit / 4, size=(s.in_dim, s.out_dim)))
            biases.append(np.full(s.out_dim, 0.5))
        else:
            weights.append(rng.uniform(-limit, limit, size=(s.in_dim, s.out_dim)))
            biases.append(np.zeros(s.out_dim))
    return MlpAutoencoder(
        specs=specs,
        weights=weights,
        biases=biases,
        latent_index=2,
        latent_noise_sigma=latent_noise_sigma,
        rng_seed=rng_seed,
    )


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "sigmoid":
        return expit(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _activate_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "relu":
        return (z > 0).astype(np.float64)
    return np.ones_like(z)


def forward(
    model: MlpAutoencoder,
    batch: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict]:
    """Run the full autoencoder; returns (reconstruction, cache).

    In training mode Gaussian noise is added to the latent activation
    (requires an rng); inference is deterministic.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.in_dim:
        raise ValueError(f"expected {model.in_dim} columns, got {x.shape[1]}")
    if not np.isfinite(x).all():
        raise ValueError("non-finite values in input batch")
    if training and model.latent_noise_sigma > 0 and rng is None:
        raise ValueError("training mode with noise requires an rng")

    activations = [x]
    pre = []
    a = x
    for i, (spec, w, b) in enumerate(zip(model.specs, model.weights, model.biases)):
        z = a @ w + b
        a = _activate(z, spec.activation)
        if training and i == model.latent_index and model.latent_noise_sigma > 0:
            a = a + rng.normal(0.0, model.latent_noise_sigma, size=a.shape)
        pre.append(z)
        activations.append(a)
    cache = {"pre": pre, "activations": activations, "training": training}
    return a, cache


def loss_mse(reconstruction: np.ndarray, target: np.ndarray) -> float:
    reconstruction = np.asarray(reconstruction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if reconstruction.shape != target.shape:
        raise ValueError(
            f"shape mismatch: {reconstruction.shape} vs {target.shape}"
        )
    return float(((reconstruction - target) ** 2).mean())


def backward(
    model: MlpAutoencoder, cache: dict, target: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Analytic MSE gradients for all weights and biases.

    The latent noise realization is baked into the cached activations and
    treated as an additive constant.
    """
    target = np.asarray(target, dtype=np.float64)
    if target.ndim == 1:
        target = target[None, :]
    activations = cache["activations"]
    pre = cache["pre"]
    out = activations[-1]
    if out.shape != target.shape:
        raise ValueError("stale cache: output and target shapes differ")
    batch = out.shape[0]
    n_entries = out.size

    grad_w = [None] * len(model.specs)
    grad_b = [None] * len(model.specs)
    delta = 2.0 * (out - target) / n_entries
    for i in reversed(range(len(model.specs))):
        spec = model.specs[i]
        delta = delta * _activate_grad(pre[i], activations[i + 1], spec.activation)
        grad_w[i] = activations[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ model.weights[i].T
    return grad_w, grad_b


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "rmsprop"  # adadelta | rmsprop
    learning_rate: float = 0.001
    rho: float = 0.9
    epsilon: float = 1e-7
    batch_size: int = 4096
    epochs: int = 100
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.kind not in ("adadelta", "rmsprop"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("learning_rate must be positive, batch_size >= 1")


class _Accumulators:
    def __init__(self, model: MlpAutoencoder, cfg: OptimizerConfig):
        self.cfg = cfg
        shapes = [(w.shape, b.shape) for w, b in zip(model.weights, model.biases)]
        self.sq_grad = [
            (np.zeros(ws), np.zeros(bs)) for ws, bs in shapes
        ]
        self.sq_update = [
            (np.zeros(ws), np.zeros(bs)) for ws, bs in shapes
        ]

    def step(self, model: MlpAutoencoder, grad_w, grad_b):
        cfg = self.cfg
        for i in range(len(model.weights)):
            for param, grad, sq_g, sq_u in (
                (model.weights[i], grad_w[i], 0, 0),
                (model.biases[i], grad_b[i], 1, 1),
            ):
                acc = self.sq_grad[i][sq_g]
                acc *= cfg.rho
                acc += (1.0 - cfg.rho) * grad * grad
                if cfg.kind == "adadelta":
                    d_acc = self.sq_update[i][sq_u]
                    update = grad * np.sqrt(d_acc + cfg.epsilon) / np.sqrt(
                        acc + cfg.epsilon
                    )
                    d_acc *= cfg.rho
                    d_acc += (1.0 - cfg.rho) * update * update
                    param -= cfg.learning_rate * update
                else:
                    param -= cfg.learning_rate * grad / np.sqrt(acc + cfg.epsilon)


@dataclass
class TrainReport:
    train_loss: list[float]
    val_loss: list[float]
    config: dict
    diverged_at: int | None = None

    @property
    def final_train_loss(self) -> float:
        return self.train_loss[-1] if self.train_loss else float("nan")

    @property
    def final_val_loss(self) -> float:
        return self.val_loss[-1] if self.val_loss else float("nan")

    def to_frame(self):
        import pandas as pd

        return pd.DataFrame(
            {
                "epoch": np.arange(len(self.train_loss)),
                "train_loss": self.train_loss,
                "val_loss": self.val_loss,
            }
        )


def train(
    model: MlpAutoencoder,
    data: np.ndarray,
    opt: OptimizerConfig,
    rng_seed: int = 0,
    raise_on_divergence: bool = True,
) -> TrainReport:
    """Minibatch training against the reconstruction MSE; updates in place.

    The seeded 90/10 train/validation split, the per-epoch shuffles and the
    latent noise all come from one generator, so runs are reproducible.
    """
    data = np.asarray(data, dtype=np.float64)
    if len(data) < 2:
        raise ValueError("need at least 2 training rows")
    rng = np.random.default_rng(rng_seed)
    perm = rng.permutation(len(data))
    n_val = max(1, int(round(opt.validation_fraction * len(data))))
    val, tr = data[perm[:n_val]], data[perm[n_val:]]

    report = TrainReport(train_loss=[], val_loss=[], config={
        "kind": opt.kind,
        "learning_rate": opt.learning_rate,
        "rho": opt.rho,
        "epsilon": opt.epsilon,
        "batch_size": opt.batch_size,
        "epochs": opt.epochs,
        "validation_fraction": opt.validation_fraction,
        "rng_seed": rng_seed,
        "latent_dim": model.latent_dim,
    })
    acc = _Accumulators(model, opt)
    for epoch in range(opt.epochs):
        order = rng.permutation(len(tr))
        batch_losses = []
        for start in range(0, len(tr), opt.batch_size):
            batch = tr[order[start : start + opt.batch_size]]
            recon, cache = forward(model, batch, training=True, rng=rng)
            batch_losses.append(loss_mse(recon, batch))
            grad_w, grad_b = backward(model, cache, batch)
            acc.step(model, grad_w, grad_b)
        train_loss = float(np.mean(batch_losses))
        val_recon, _ = forward(model, val, training=False)
        val_loss = loss_mse(val_recon, val)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            report.diverged_at = epoch
            if raise_on_divergence:
                raise TrainingDiverged(epoch)
            break
        report.train_loss.append(train_loss)
        report.val_loss.append(val_loss)
    return report


def encode(model: MlpAutoencoder, batch: np.ndarray) -> np.ndarray:
    """Deterministic encoder half (no noise)."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.in_dim:
        raise ValueError(f"expected {model.in_dim} columns, got {x.shape[1]}")
    a = x
    for i in range(model.latent_index + 1):
        a = _activate(a @ model.weights[i] + model.biases[i], model.specs[i].activation)
    return a


def param_search(
    data: np.ndarray,
    in_dim: int | None = None,
    latent_dims: tuple[int, ...] = (8, 16, 32),
    adadelta_lrs: tuple[float, ...] = (0.1, 1.0, 10.0),
    epochs: int = 100,
    batch_size: int = 4096,
    hidden: tuple[int, int] = DEFAULT_HIDDEN,
    rng_seed: int = 0,
) -> tuple[list[dict], dict]:
    """The 3x3 grid over latent dimensions and adadelta learning rates.

    Returns all cell summaries and the selected cell (lowest final
    validation loss; ties resolved toward lower latent dim, then lower
    learning rate). Diverged cells are flagged, not fatal.
    """
    data = np.asarray(data, dtype=np.float64)
    in_dim = in_dim or data.shape[1]
    cells = []
    for latent in latent_dims:
        for lr in adadelta_lrs:
            model = build_autoencoder(
                in_dim, latent, hidden=hidden, rng_seed=rng_seed
            )
            opt = OptimizerConfig(
                kind="adadelta",
                learning_rate=lr,
                epochs=epochs,
                batch_size=batch_size,
            )
            report = train(model, data, opt, rng_seed=rng_seed, raise_on_divergence=False)
            cells.append(
                {
                    "latent_dim": latent,
                    "learning_rate": lr,
                    "final_train_loss": report.final_train_loss,
                    "final_val_loss": report.final_val_loss,
                    "diverged_at": report.diverged_at,
                }
            )
    viable = [c for c in cells if c["diverged_at"] is None and np.isfinite(c["final_val_loss"])]
    pool = viable or cells
    best = min(
        pool,
        key=lambda c: (
            c["final_val_loss"] if np.isfinite(c["final_val_loss"]) else np.inf,
            c["latent_dim"],
            c["learning_rate"],
        ),
    )
    return cells, best
