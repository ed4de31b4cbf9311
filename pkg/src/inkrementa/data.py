"""Dataset construction: synthetic Gaussians, CSV ingestion, stage splits.

The synthetic generator is the default corpus: class-conditional Gaussians
whose centers are drawn once per seed, giving controllable separability so
that forgetting effects are attributable to the learning algorithm rather
than the data. CSV is the sole external format ("label,f1,...,fD").
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numkit
from .errors import ConfigError, ParseError, PlanError


@dataclass(frozen=True)
class LabeledDataset:
    """Feature rows with integer class labels."""

    features: np.ndarray
    labels: np.ndarray
    class_ids: tuple[int, ...] = field(default=())

    def __post_init__(self):
        features = numkit.as_matrix(self.features, "features")
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise ValueError(
                f"labels shape {labels.shape} does not match {features.shape[0]} feature rows"
            )
        class_ids = self.class_ids or tuple(dict.fromkeys(labels.tolist()))
        present = set(labels.tolist())
        if not present.issubset(set(class_ids)):
            raise ValueError(f"labels {sorted(present - set(class_ids))} not in class_ids")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_ids", tuple(int(c) for c in class_ids))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def class_rows(self, class_id: int) -> np.ndarray:
        """Feature rows of one class, in dataset order."""
        return self.features[self.labels == class_id]

    def restrict(self, class_ids) -> "LabeledDataset":
        """Subset holding only the given classes, preserving row order."""
        wanted = tuple(int(c) for c in class_ids)
        mask = np.isin(self.labels, wanted)
        return LabeledDataset(self.features[mask], self.labels[mask], class_ids=wanted)

    def remap_labels(self, table: dict[int, int]) -> "LabeledDataset":
        new_labels = np.array([table[int(l)] for l in self.labels], dtype=np.int64)
        new_ids = tuple(table[c] for c in self.class_ids)
        return LabeledDataset(self.features, new_labels, class_ids=new_ids)


@dataclass(frozen=True)
class StagePlan:
    """Ordered class-id groups: group 0 is the base service, the rest increments."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        groups = tuple(tuple(int(c) for c in g) for g in self.groups)
        if not groups or any(len(g) == 0 for g in groups):
            raise PlanError("plan must contain at least one nonempty group per stage")
        flat = [c for g in groups for c in g]
        if len(flat) != len(set(flat)):
            dupes = sorted({c for c in flat if flat.count(c) > 1})
            raise PlanError(f"plan groups overlap on class ids {dupes}")
        object.__setattr__(self, "groups", groups)

    @property
    def num_stages(self) -> int:
        return len(self.groups)

    def all_classes(self) -> tuple[int, ...]:
        return tuple(c for g in self.groups for c in g)


@dataclass(frozen=True)
class SyntheticSpec:
    """Class-conditional Gaussian corpus parameters."""

    num_classes: int
    input_dim: int
    train_per_class: int
    test_per_class: int
    center_scale: float = 10.0
    stddev: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 1 or self.input_dim < 1:
            raise ConfigError("num_classes and input_dim must be >= 1")
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise ConfigError("per-class sample counts must be >= 1")
        if not self.stddev > 0:
            raise ConfigError(f"stddev must be > 0, got {self.stddev}")
        if not self.center_scale >= 0:
            raise ConfigError(f"center_scale must be >= 0, got {self.center_scale}")


def generate_synthetic(spec: SyntheticSpec) -> tuple[LabeledDataset, LabeledDataset]:
    """Draw disjoint train/test pools; class c ~ Gaussian(center_c, stddev^2 I).

    Centers are drawn once from Gaussian(0, center_scale^2 I) using the spec
    seed, then per class the train block is drawn before the test block, so
    the whole corpus is a pure function of the spec.
    """
    rng = numkit.make_rng(spec.seed)
    centers = rng.normal(0.0, spec.center_scale, size=(spec.num_classes, spec.input_dim))

    train_x, train_y, test_x, test_y = [], [], [], []
    for c in range(spec.num_classes):
        train_x.append(rng.normal(centers[c], spec.stddev, size=(spec.train_per_class, spec.input_dim)))
        test_x.append(rng.normal(centers[c], spec.stddev, size=(spec.test_per_class, spec.input_dim)))
        train_y.append(np.full(spec.train_per_class, c, dtype=np.int64))
        test_y.append(np.full(spec.test_per_class, c, dtype=np.int64))

    class_ids = tuple(range(spec.num_classes))
    train = LabeledDataset(np.vstack(train_x), np.concatenate(train_y), class_ids=class_ids)
    test = LabeledDataset(np.vstack(test_x), np.concatenate(test_y), class_ids=class_ids)
    return train, test


def load_csv(path, has_header: bool = False) -> LabeledDataset:
    """Parse "label,f1,...,fD" rows; ragged or non-numeric rows are rejected.

    Error messages cite 1-based line numbers (the header counts as line 1).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")

    features: list[list[float]] = []
    labels: list[int] = []
    dim: int | None = None
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if has_header and lineno == 1:
                continue
            if not row or (len(row) == 1 and row[0].strip() == ""):
                continue
            if len(row) < 2:
                raise ParseError(f"expected 'label,f1,...' but found {len(row)} field(s)", lineno)
            try:
                label = int(row[0])
            except ValueError:
                raise ParseError(f"label {row[0]!r} is not an integer", lineno) from None
            if label < 0:
                raise ParseError(f"label must be non-negative, got {label}", lineno)
            try:
                values = [float(cell) for cell in row[1:]]
            except ValueError:
                raise ParseError(f"non-numeric feature cell in {row[1:]!r}", lineno) from None
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise ParseError(f"row has {len(values)} features, expected {dim}", lineno)
            labels.append(label)
            features.append(values)

    if not features:
        raise ParseError(f"{path} contains no data rows")
    return LabeledDataset(np.array(features, dtype=np.float64), np.array(labels, dtype=np.int64))


def save_csv(dataset: LabeledDataset, path, header: bool = True) -> None:
    """Write a dataset in the "label,f1,...,fD" format (repr floats, lossless)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(["label"] + [f"f{i + 1}" for i in range(dataset.input_dim)])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


def split_stages(
    train: LabeledDataset,
    test: LabeledDataset,
    plan: StagePlan,
) -> tuple[list[tuple[LabeledDataset, LabeledDataset]], dict[int, int]]:
    """Per-stage (train, test) datasets plus the label remapping table.

    Remapped ids are contiguous 0..N-1 in stage-visit order (within a group,
    the plan's listed order). The plan must cover the dataset's class ids
    exactly.
    """
    plan_classes = plan.all_classes()
    universe = set(train.class_ids) | set(test.class_ids)
    missing = universe - set(plan_classes)
    extra = set(plan_classes) - universe
    if missing:
        raise PlanError(f"plan misses class ids {sorted(missing)}")
    if extra:
        raise PlanError(f"plan lists unknown class ids {sorted(extra)}")

    remap = {orig: new for new, orig in enumerate(plan_classes)}
    stages = []
    for group in plan.groups:
        stage_train = train.restrict(group).remap_labels(remap)
        stage_test = test.restrict(group).remap_labels(remap)
        stages.append((stage_train, stage_test))
    return stages, remap


def standardization_stats(dataset: LabeledDataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and stddev over a training pool; zero spread maps to 1."""
    mean = dataset.features.mean(axis=0)
    std = dataset.features.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


def apply_standardization(dataset: LabeledDataset, stats: tuple[np.ndarray, np.ndarray]) -> LabeledDataset:
    mean, std = stats
    return LabeledDataset((dataset.features - mean) / std, dataset.labels, class_ids=dataset.class_ids)
