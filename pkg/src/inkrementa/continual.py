"""Continual-learning core: herding exemplar selection, staged model updates
with teacher-student distillation, and head weight aligning.

A stage update takes the previous model and a disjoint block of new classes,
widens the prediction head, and trains on the new data mixed with the
retained exemplars of every earlier class. Distillation pins the student's
old-class logits to the frozen previous model; weight aligning then rescales
the new head rows so their mean norm matches the old rows' mean norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numkit
from .data import LabeledDataset
from .errors import ConflictError, DegenerateHeadError, EmptyInputError, ShapeError
from .model import DISTILL_LOSSES, IncModel, ModelConfig, train_epochs

WA_NORMS = ("l1", "l2")

ALPHA_BASE = 0.1  # mixing schedule: alpha = 0.1 * u / (u + v)


@dataclass
class ExemplarStore:
    """Per-class retained samples, keyed by (remapped) class id.

    Classes are only ever added; each holds min(capacity, available) rows.
    """

    capacity_per_class: int
    per_class: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.capacity_per_class < 1:
            raise ValueError(f"capacity_per_class must be >= 1, got {self.capacity_per_class}")

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(self.per_class)

    @property
    def total_samples(self) -> int:
        return sum(rows.shape[0] for rows in self.per_class.values())

    def copy(self) -> "ExemplarStore":
        return ExemplarStore(
            capacity_per_class=self.capacity_per_class,
            per_class={c: rows.copy() for c, rows in self.per_class.items()},
        )

    def flatten(self) -> tuple[np.ndarray, np.ndarray]:
        """All retained rows and their labels, in class-insertion order."""
        if not self.per_class:
            raise EmptyInputError("exemplar store is empty")
        feats = np.vstack([rows for rows in self.per_class.values()])
        labels = np.concatenate(
            [np.full(rows.shape[0], c, dtype=np.int64) for c, rows in self.per_class.items()]
        )
        return feats, labels


@dataclass(frozen=True)
class StageContext:
    """Per-stage settings: class counts, toggles, loss/norm choices, capacity.

    ``alpha`` of None means the default schedule 0.1 * u / (u + v); an
    explicit value overrides it.
    """

    u: int
    v: int
    k: int = 1
    use_exemplars: bool = True
    use_distillation: bool = True
    use_weight_align: bool = True
    distill_loss: str = "mse"
    wa_norm: str = "l2"
    alpha: float | None = None

    def __post_init__(self):
        if self.u < 1 or self.v < 1:
            raise ValueError(f"need u >= 1 and v >= 1, got u={self.u}, v={self.v}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.distill_loss not in DISTILL_LOSSES:
            raise ValueError(f"unknown distill_loss {self.distill_loss!r}")
        if self.wa_norm not in WA_NORMS:
            raise ValueError(f"unknown wa_norm {self.wa_norm!r}")
        if self.alpha is not None and not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")

    @property
    def mixing_alpha(self) -> float:
        if self.alpha is not None:
            return self.alpha
        return ALPHA_BASE * self.u / (self.u + self.v)


def class_feature_center(model: IncModel, samples: np.ndarray) -> np.ndarray:
    """Mean of the L2-normalized embeddings of one class's samples.

    A zero embedding normalizes to itself.
    """
    samples = numkit.as_matrix(samples, "samples")
    if samples.shape[0] == 0:
        raise EmptyInputError("class has no samples")
    _, embeddings = model.forward_batch(samples)
    return _normalize_rows(embeddings).mean(axis=0)


def _normalize_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.sqrt((rows**2).sum(axis=1, keepdims=True))
    return rows / np.where(norms > 0, norms, 1.0)


def herding_select(model: IncModel, samples: np.ndarray, k: int) -> list[int]:
    """Indices of the k samples nearest (Euclidean) to the class feature center.

    Distances are measured between L2-normalized embeddings and the center;
    ties break toward the lower index. Returns min(k, n) indices ordered by
    distance, then index.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    samples = numkit.as_matrix(samples, "samples")
    if samples.shape[0] == 0:
        raise EmptyInputError("class has no samples")
    _, embeddings = model.forward_batch(samples)
    normalized = _normalize_rows(embeddings)
    center = normalized.mean(axis=0)
    distances = np.sqrt(((normalized - center) ** 2).sum(axis=1))
    order = np.argsort(distances, kind="stable")
    return [int(i) for i in order[: min(k, samples.shape[0])]]


def build_exemplar_store(
    model: IncModel,
    dataset: LabeledDataset,
    k: int,
    existing: ExemplarStore | None = None,
) -> ExemplarStore:
    """Herding-select k exemplars per new class; prior classes stay frozen.

    Returns a new store; ``existing`` is never mutated and its rows are never
    re-selected under the new model.
    """
    store = existing.copy() if existing is not None else ExemplarStore(capacity_per_class=k)
    overlap = set(dataset.class_ids) & set(store.per_class)
    if overlap:
        raise ConflictError(f"classes {sorted(overlap)} already have exemplars")
    for c in dataset.class_ids:
        rows = dataset.class_rows(c)
        if rows.shape[0] == 0:
            continue
        chosen = herding_select(model, rows, k)
        store.per_class[c] = rows[chosen].copy()
    return store


def weight_align(head: np.ndarray, u: int, v: int, norm: str = "l2") -> np.ndarray:
    """Rescale the v new head rows so mean new-row norm matches the old rows'.

    gamma = Mean(||w_1||..||w_u||) / Mean(||w_{u+1}||..||w_{u+v}||); rows
    1..u are returned bit-identical.
    """
    head = numkit.as_matrix(head, "head")
    if u < 1 or v < 1:
        raise ValueError(f"need u >= 1 and v >= 1, got u={u}, v={v}")
    if head.shape[0] != u + v:
        raise ShapeError(f"head has {head.shape[0]} rows, expected u + v = {u + v}")
    if norm not in WA_NORMS:
        raise ValueError(f"unknown norm {norm!r}")

    if norm == "l1":
        row_norms = np.abs(head).sum(axis=1)
    else:
        row_norms = np.sqrt((head**2).sum(axis=1))
    mean_new = row_norms[u:].mean()
    if mean_new == 0.0:
        raise DegenerateHeadError("every new head row is zero; aligning factor undefined")
    gamma = row_norms[:u].mean() / mean_new

    aligned = head.copy()
    aligned[u:] *= gamma
    return aligned


def ccs_stage_update(
    prev: IncModel,
    new_data: LabeledDataset,
    store: ExemplarStore,
    ctx: StageContext,
    config: ModelConfig,
    rng: np.random.Generator,
) -> tuple[IncModel, ExemplarStore, list[float]]:
    """One incremental stage: expand, train with replay + distillation, align.

    Expects ``new_data`` labels already remapped to u..u+v-1. The rng is
    consumed in a fixed order (head expansion draws, then one shuffle per
    epoch) regardless of the toggles, so seed-matched runs differing only in
    toggles see identical batches.

    Returns (updated model, extended store, per-epoch losses). Exemplars for
    the new classes are selected with the updated model and frozen thereafter.
    """
    if new_data.n_samples == 0:
        raise ValueError("new_data is empty")
    u = prev.num_classes
    if ctx.u != u:
        raise ValueError(f"context says u={ctx.u} but previous model has {u} classes")
    new_ids = set(int(l) for l in new_data.labels)
    if ctx.v != len(new_ids):
        raise ValueError(f"context says v={ctx.v} but new_data holds {len(new_ids)} classes")
    seen = set(range(u)) | set(store.per_class)
    overlap = new_ids & seen
    if overlap:
        raise ConflictError(f"new class ids {sorted(overlap)} were already seen")
    expected = set(range(u, u + ctx.v))
    if new_ids != expected:
        raise ValueError(
            f"new_data labels must be contiguous after the old classes "
            f"({sorted(expected)}), got {sorted(new_ids)}"
        )

    student = prev.copy()
    student.expand_head(ctx.v, rng)

    alpha = ctx.mixing_alpha if ctx.use_distillation else 0.0
    teacher = prev.snapshot() if (ctx.use_distillation and alpha > 0) else None

    if ctx.use_exemplars and store.per_class:
        ex_feats, ex_labels = store.flatten()
        features = np.vstack([new_data.features, ex_feats])
        labels = np.concatenate([new_data.labels, ex_labels])
    else:
        features = new_data.features
        labels = new_data.labels

    losses = train_epochs(
        student, features, labels, rng,
        epochs=config.epochs_per_stage, batch_size=config.batch_size,
        lr=config.learning_rate,
        teacher=teacher, alpha=alpha, distill_loss=ctx.distill_loss,
    )

    if ctx.use_weight_align:
        student.head = weight_align(student.head, u, ctx.v, ctx.wa_norm)

    new_store = build_exemplar_store(student, new_data, ctx.k, existing=store)
    return student, new_store, losses
