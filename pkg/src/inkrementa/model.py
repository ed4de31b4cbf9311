"""Feed-forward classifier with an expandable, bias-free prediction head.

The network is a stack of ReLU hidden layers followed by a linear head whose
row ``j`` is the weight vector of class ``j``. The head carries no bias so
that per-class row norms fully determine class logit scale, which is what
head weight aligning manipulates. Backpropagation and SGD are hand-written
over numpy; the gradient test suite checks every loss configuration against
central finite differences.

Weight convention: layer matrices have shape (out_dim, in_dim), so a batch
``X`` of shape (n, in_dim) maps to ``X @ W.T + b``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numkit
from .errors import ConfigError, ShapeError, VersionError

MODEL_FORMAT_VERSION = "inkrementa-model-v1"

DISTILL_LOSSES = ("mse", "kld", "l1")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and SGD settings. Activation is ReLU, init He-uniform."""

    input_dim: int
    hidden_dims: tuple[int, ...] = (64, 32)
    learning_rate: float = 0.1
    batch_size: int = 32
    epochs_per_stage: int = 30

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError(f"hidden dims must all be >= 1, got {self.hidden_dims}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs_per_stage < 1:
            raise ConfigError(f"epochs_per_stage must be >= 1, got {self.epochs_per_stage}")

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs_per_stage": self.epochs_per_stage,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            input_dim=d["input_dim"],
            hidden_dims=tuple(d["hidden_dims"]),
            learning_rate=d["learning_rate"],
            batch_size=d["batch_size"],
            epochs_per_stage=d["epochs_per_stage"],
        )


def _he_uniform(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    bound = np.sqrt(6.0 / in_dim)
    return rng.uniform(-bound, bound, size=(out_dim, in_dim))


@dataclass
class IncModel:
    """Classifier state: hidden (weight, bias) pairs plus the class head."""

    config: ModelConfig
    weights: list[np.ndarray] = field(repr=False)
    biases: list[np.ndarray] = field(repr=False)
    head: np.ndarray = field(repr=False)

    @classmethod
    def init(cls, config: ModelConfig, num_classes: int, rng: np.random.Generator) -> "IncModel":
        """He-uniform weights, zero biases, bias-free head over the last layer."""
        if num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {num_classes}")
        weights, biases = [], []
        in_dim = config.input_dim
        for h in config.hidden_dims:
            weights.append(_he_uniform(rng, h, in_dim))
            biases.append(np.zeros(h))
            in_dim = h
        head = _he_uniform(rng, num_classes, in_dim)
        return cls(config=config, weights=weights, biases=biases, head=head)

    @property
    def num_classes(self) -> int:
        return self.head.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.head.shape[1]

    def copy(self) -> "IncModel":
        return IncModel(
            config=self.config,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            head=self.head.copy(),
        )

    # -- inference ---------------------------------------------------------

    def forward(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Single-sample pass; returns (logits, embedding)."""
        x = numkit.as_vector(x, "x")
        if x.size != self.config.input_dim:
            raise ShapeError(f"input has length {x.size}, model expects {self.config.input_dim}")
        logits, embeddings = self.forward_batch(x[None, :])
        return logits[0], embeddings[0]

    def forward_batch(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Batched pass; returns (logits (n, C), embeddings (n, E))."""
        logits, _, acts = self._forward_cached(X)
        return logits, acts[-1]

    def _forward_cached(self, X):
        X = numkit.as_matrix(X, "X")
        if X.shape[1] != self.config.input_dim:
            raise ShapeError(f"input has dim {X.shape[1]}, model expects {self.config.input_dim}")
        acts = [X]
        pres = []
        a = X
        for w, b in zip(self.weights, self.biases):
            z = a @ w.T + b
            a = np.maximum(z, 0.0)
            pres.append(z)
            acts.append(a)
        logits = acts[-1] @ self.head.T
        return logits, pres, acts

    # -- structural updates --------------------------------------------------

    def expand_head(self, v: int, rng: np.random.Generator) -> None:
        """Grow the head by ``v`` He-uniform rows; existing rows are untouched."""
        if v < 1:
            raise ValueError(f"head expansion must add at least one class, got v={v}")
        new_rows = _he_uniform(rng, v, self.embed_dim)
        self.head = np.vstack([self.head, new_rows])

    def snapshot(self) -> "TeacherSnapshot":
        return TeacherSnapshot(self)

    # -- training ------------------------------------------------------------

    def backward_and_step(
        self,
        X,
        y,
        teacher: "TeacherSnapshot | None" = None,
        alpha: float = 0.0,
        distill_loss: str = "mse",
        lr: float | None = None,
    ) -> float:
        """One SGD step on the mean batch loss; returns the pre-step loss.

        Loss per sample is (1 - alpha) * cross-entropy against the label plus
        alpha * distillation distance between the student's logits restricted
        to the teacher's classes and the teacher's logits (MSE/L1 on logits,
        KLD on their softmax at temperature 1).
        """
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {alpha}")
        if (teacher is None) and alpha > 0:
            raise ValueError("alpha > 0 requires a teacher snapshot")
        if (teacher is not None) and alpha == 0:
            raise ValueError("a teacher snapshot requires alpha > 0")
        if distill_loss not in DISTILL_LOSSES:
            raise ValueError(f"unknown distill_loss {distill_loss!r}, expected one of {DISTILL_LOSSES}")
        if lr is None:
            lr = self.config.learning_rate

        logits, pres, acts = self._forward_cached(X)
        n, num_classes = logits.shape
        y = np.asarray(y, dtype=np.int64)
        if y.shape != (n,):
            raise ShapeError(f"labels have shape {y.shape}, expected ({n},)")
        if y.min() < 0 or y.max() >= num_classes:
            raise IndexError(f"labels must lie in [0, {num_classes}), got range [{y.min()}, {y.max()}]")

        # cross-entropy term and its logit gradient
        probs = numkit.softmax_rows(logits)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        ce = log_norm - shifted[np.arange(n), y]
        grad = probs.copy()
        grad[np.arange(n), y] -= 1.0
        grad *= (1.0 - alpha) / n

        distill = np.zeros(n)
        if alpha > 0:
            u = teacher.num_classes
            if u > num_classes:
                raise ShapeError(f"teacher has {u} classes but student only {num_classes}")
            t_logits, _ = teacher.forward_batch(X)
            s_logits = logits[:, :u]
            if distill_loss == "mse":
                diff = s_logits - t_logits
                distill = np.mean(diff**2, axis=1)
                d_s = 2.0 * diff / u
            elif distill_loss == "l1":
                diff = s_logits - t_logits
                distill = np.mean(np.abs(diff), axis=1)
                d_s = np.sign(diff) / u
            else:  # kld on softmax, temperature 1
                s_prob = numkit.softmax_rows(s_logits)
                t_prob = numkit.softmax_rows(t_logits)
                q = np.maximum(s_prob, numkit.KL_FLOOR)
                distill = np.sum(np.where(t_prob > 0, t_prob * np.log(np.maximum(t_prob, numkit.KL_FLOOR) / q), 0.0), axis=1)
                d_s = s_prob - t_prob
            grad[:, :u] += (alpha / n) * d_s

        loss = float(np.mean((1.0 - alpha) * ce + alpha * distill))

        # backprop through the head and hidden stack, stepping as we go
        d_head = grad.T @ acts[-1]
        d_act = grad @ self.head
        self.head -= lr * d_head
        for k in range(len(self.weights) - 1, -1, -1):
            d_pre = d_act * (pres[k] > 0)
            d_w = d_pre.T @ acts[k]
            d_b = d_pre.sum(axis=0)
            d_act = d_pre @ self.weights[k]
            self.weights[k] -= lr * d_w
            self.biases[k] -= lr * d_b
        return loss

    # -- persistence -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "config": self.config.to_dict(),
            "num_classes": self.num_classes,
            "layers": [
                {"shape": list(w.shape), "weight": w.tolist(), "bias": b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
            "head_shape": list(self.head.shape),
            "head": self.head.tolist(),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "IncModel":
        version = d.get("version")
        if version != MODEL_FORMAT_VERSION:
            raise VersionError(f"unsupported model version {version!r}, expected {MODEL_FORMAT_VERSION!r}")
        config = ModelConfig.from_dict(d["config"])
        weights = [np.array(layer["weight"], dtype=np.float64) for layer in d["layers"]]
        biases = [np.array(layer["bias"], dtype=np.float64) for layer in d["layers"]]
        head = np.array(d["head"], dtype=np.float64)
        for layer, w in zip(d["layers"], weights):
            if list(w.shape) != layer["shape"]:
                raise ValueError(f"layer weight shape {list(w.shape)} does not match recorded {layer['shape']}")
        if list(head.shape) != d["head_shape"]:
            raise ValueError(f"head shape {list(head.shape)} does not match recorded {d['head_shape']}")
        return cls(config=config, weights=weights, biases=biases, head=head)

    @classmethod
    def load(cls, path) -> "IncModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class TeacherSnapshot:
    """Deep, read-only copy of a model; outputs never change over its lifetime."""

    def __init__(self, model: IncModel):
        self._model = model.copy()
        for arr in (*self._model.weights, *self._model.biases, self._model.head):
            arr.setflags(write=False)

    @property
    def num_classes(self) -> int:
        return self._model.num_classes

    def forward(self, x) -> tuple[np.ndarray, np.ndarray]:
        return self._model.forward(x)

    def forward_batch(self, X) -> tuple[np.ndarray, np.ndarray]:
        return self._model.forward_batch(X)


def train_epochs(
    model: IncModel,
    features: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator,
    *,
    epochs: int | None = None,
    batch_size: int | None = None,
    lr: float | None = None,
    teacher: TeacherSnapshot | None = None,
    alpha: float = 0.0,
    distill_loss: str = "mse",
) -> list[float]:
    """Shuffled mini-batch SGD; returns per-epoch mean losses.

    The only randomness is one ``rng.permutation`` per epoch, which keeps the
    draw sequence identical across loss configurations for the same seed.
    """
    cfg = model.config
    epochs = cfg.epochs_per_stage if epochs is None else epochs
    batch_size = cfg.batch_size if batch_size is None else batch_size
    lr = cfg.learning_rate if lr is None else lr
    features = numkit.as_matrix(features, "features")
    labels = np.asarray(labels, dtype=np.int64)
    n = features.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")

    epoch_losses = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            loss = model.backward_and_step(
                features[idx], labels[idx], teacher=teacher, alpha=alpha,
                distill_loss=distill_loss, lr=lr,
            )
            total += loss * idx.size
        epoch_losses.append(total / n)
    return epoch_losses
