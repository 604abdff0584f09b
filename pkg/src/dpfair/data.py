"""Loading and preprocessing of the UCI Adult census files.

The pipeline is ``parse_adult`` -> ``listwise_delete`` -> ``encode_and_split``.
The resulting :class:`ProcessedDataset` holds dense float64 features, binary
labels (1 = income >50K), the protected attribute (1 = male) and a split tag
per row.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ATTRIBUTES = (
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education-num",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
)
LABEL = "income"
FIELDS = ATTRIBUTES + (LABEL,)
CONTINUOUS = (
    "age",
    "fnlwgt",
    "education-num",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
)
CATEGORICAL = tuple(a for a in ATTRIBUTES if a not in CONTINUOUS)
MISSING = "?"
POSITIVE_LABEL = ">50K"
PRIVILEGED_SEX = "Male"

SPLITS = ("train", "validation", "test")


class AdultParseError(ValueError):
    """A data line does not have the expected number of fields."""


class SchemaError(ValueError):
    """A record does not fit the column schema (e.g. unseen category)."""


class DegenerateColumnError(ValueError):
    """A continuous column has zero variance on the training rows."""


@dataclass(frozen=True)
class RawRecord:
    values: tuple[str, ...]
    source: str = ""  # "train" or "test": which file the row came from

    def __post_init__(self):
        if len(self.values) != len(FIELDS):
            raise AdultParseError(
                f"expected {len(FIELDS)} fields, got {len(self.values)}"
            )

    def __getitem__(self, name: str) -> str:
        return self.values[FIELDS.index(name)]

    @property
    def label(self) -> str:
        return self.values[-1]

    def has_missing(self) -> bool:
        return any(v == MISSING for v in self.values)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.534
    validation_fraction: float = 0.133
    test_fraction: float = 0.333
    shuffle_seed: int = 0

    def __post_init__(self):
        fracs = (self.train_fraction, self.validation_fraction, self.test_fraction)
        if any(f < 0 for f in fracs) or abs(sum(fracs) - 1.0) > 1e-6:
            raise ValueError(f"split fractions must be non-negative and sum to 1, got {fracs}")
        if self.train_fraction <= 0:
            raise ValueError("train_fraction must be positive")

    @property
    def validation_share_of_train_file(self) -> float:
        return self.validation_fraction / (self.train_fraction + self.validation_fraction)


@dataclass(frozen=True)
class ColumnSpec:
    """One encoded column.

    ``kind`` is ``"continuous"`` (``mean``/``std`` set) or ``"dummy"``
    (``category`` set).
    """

    attribute: str
    kind: str
    category: str | None = None
    mean: float | None = None
    std: float | None = None

    @property
    def name(self) -> str:
        if self.kind == "dummy":
            return f"{self.attribute}={self.category}"
        return self.attribute


@dataclass(frozen=True)
class GroupStats:
    majority_label_fraction: float
    female_fraction: float
    low_income_rate_female: float
    low_income_rate_male: float


@dataclass(frozen=True, eq=False)
class ProcessedDataset:
    features: np.ndarray
    labels: np.ndarray
    protected: np.ndarray
    split: np.ndarray
    columns: tuple[ColumnSpec, ...] = field(default=())

    def __post_init__(self):
        n = self.features.shape[0]
        for name in ("labels", "protected", "split"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} has {getattr(self, name).shape[0]} rows, features {n}")
        for arr in (self.features, self.labels, self.protected, self.split):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def subset(self, split: str) -> "ProcessedDataset":
        if split not in SPLITS:
            raise KeyError(split)
        mask = self.split == split
        return ProcessedDataset(
            self.features[mask].copy(),
            self.labels[mask].copy(),
            self.protected[mask].copy(),
            self.split[mask].copy(),
            self.columns,
        )

    def to_csv(self, path: str | Path) -> tuple[Path, Path]:
        """Write the encoded matrix as CSV plus a ``.schema`` sidecar.

        The CSV header is the encoded column names followed by ``label``,
        ``protected`` and ``split``. The sidecar has one ``key=value`` line per
        column (see :func:`write_schema`).
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.column_names + ["label", "protected", "split"])
            for i in range(len(self)):
                writer.writerow(
                    [repr(float(v)) for v in self.features[i]]
                    + [int(self.labels[i]), int(self.protected[i]), self.split[i]]
                )
        schema_path = path.with_suffix(".schema")
        write_schema(self.columns, schema_path)
        return path, schema_path


def _read_lines(path: Path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read Adult file {path}: {exc}") from exc


def _parse_file(path: Path, source: str) -> list[RawRecord]:
    records = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        # adult.test opens with "|1x3 Cross validator"
        if line.startswith("|"):
            continue
        values = [v.strip() for v in line.split(",")]
        if len(values) != len(FIELDS):
            raise AdultParseError(
                f"{path}:{lineno}: expected {len(FIELDS)} fields, got {len(values)}"
            )
        values[-1] = values[-1].rstrip(".")
        records.append(RawRecord(tuple(values), source))
    return records


def parse_adult(train_path: str | Path, test_path: str | Path) -> list[RawRecord]:
    """Parse ``adult.data`` and ``adult.test`` into records tagged by source file."""
    return _parse_file(Path(train_path), "train") + _parse_file(Path(test_path), "test")


def listwise_delete(records: Iterable[RawRecord]) -> list[RawRecord]:
    return [r for r in records if not r.has_missing()]


def build_schema(records: Sequence[RawRecord]) -> tuple[ColumnSpec, ...]:
    """Column layout without normalization statistics.

    Dummy columns follow the sorted category names of each attribute.
    """
    columns = []
    for attr in ATTRIBUTES:
        if attr in CONTINUOUS:
            columns.append(ColumnSpec(attr, "continuous"))
        else:
            idx = FIELDS.index(attr)
            for cat in sorted({r.values[idx] for r in records}):
                columns.append(ColumnSpec(attr, "dummy", category=cat))
    return tuple(columns)


def _raw_matrix(records: Sequence[RawRecord], columns: Sequence[ColumnSpec]) -> np.ndarray:
    x = np.zeros((len(records), len(columns)))
    col_of = {}
    for j, col in enumerate(columns):
        if col.kind == "dummy":
            col_of[(col.attribute, col.category)] = j
    for j, col in enumerate(columns):
        if col.kind != "continuous":
            continue
        idx = FIELDS.index(col.attribute)
        try:
            x[:, j] = [float(r.values[idx]) for r in records]
        except ValueError as exc:
            raise SchemaError(f"non-numeric value in continuous column {col.attribute!r}: {exc}") from None
    for attr in CATEGORICAL:
        idx = FIELDS.index(attr)
        for i, r in enumerate(records):
            j = col_of.get((attr, r.values[idx]))
            if j is None:
                raise SchemaError(f"row {i}: unseen category {r.values[idx]!r} for {attr!r}")
            x[i, j] = 1.0
    return x


def encode(
    records: Sequence[RawRecord], columns: Sequence[ColumnSpec]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Encode records with a fitted schema; returns (features, labels, protected)."""
    x = _raw_matrix(records, columns)
    for j, col in enumerate(columns):
        if col.kind == "continuous":
            if col.mean is None or col.std is None:
                raise SchemaError(f"column {col.attribute!r} has no normalization stats")
            x[:, j] = (x[:, j] - col.mean) / col.std
    labels = np.array([r.label == POSITIVE_LABEL for r in records], dtype=np.int8)
    protected = np.array([r["sex"] == PRIVILEGED_SEX for r in records], dtype=np.int8)
    return x, labels, protected


def split_membership(records: Sequence[RawRecord], spec: SplitSpec) -> np.ndarray:
    """Split tag per row: test-file rows -> test; train-file rows shuffled into train/validation."""
    tags = np.array(["test"] * len(records), dtype=object)
    train_idx = np.array([i for i, r in enumerate(records) if r.source != "test"], dtype=np.int64)
    n_val = int(round(len(train_idx) * spec.validation_share_of_train_file))
    perm = np.random.default_rng(spec.shuffle_seed).permutation(len(train_idx))
    tags[train_idx] = "train"
    tags[train_idx[perm[:n_val]]] = "validation"
    return tags.astype("<U10")


def encode_and_split(records: Sequence[RawRecord], spec: SplitSpec = SplitSpec()) -> ProcessedDataset:
    """Dummy-code, z-normalize with train-split statistics, and tag splits."""
    split = split_membership(records, spec)
    columns = build_schema(records)
    raw = _raw_matrix(records, columns)
    train_rows = raw[split == "train"]
    fitted = []
    for j, col in enumerate(columns):
        if col.kind == "continuous":
            mean = float(train_rows[:, j].mean())
            std = float(train_rows[:, j].std(ddof=1)) if len(train_rows) > 1 else 0.0
            if not std > 0:
                raise DegenerateColumnError(f"continuous column {col.attribute!r} has zero variance")
            col = ColumnSpec(col.attribute, "continuous", mean=mean, std=std)
        fitted.append(col)
    columns = tuple(fitted)
    x, labels, protected = encode(records, columns)
    return ProcessedDataset(x, labels, protected, split, columns)


def load_adult(
    data_dir: str | Path, spec: SplitSpec = SplitSpec()
) -> ProcessedDataset:
    """Parse, clean and encode ``adult.data``/``adult.test`` found in ``data_dir``."""
    data_dir = Path(data_dir)
    records = parse_adult(data_dir / "adult.data", data_dir / "adult.test")
    return encode_and_split(listwise_delete(records), spec)


def group_statistics(dataset: ProcessedDataset) -> GroupStats:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    labels = np.asarray(dataset.labels)
    female = np.asarray(dataset.protected) == 0
    male = ~female
    if not female.any() or not male.any():
        raise ZeroDivisionError("a protected group has no rows")
    positive_rate = labels.mean()
    return GroupStats(
        majority_label_fraction=float(max(positive_rate, 1 - positive_rate)),
        female_fraction=float(female.mean()),
        low_income_rate_female=float((labels[female] == 0).mean()),
        low_income_rate_male=float((labels[male] == 0).mean()),
    )


def write_schema(columns: Sequence[ColumnSpec], path: str | Path) -> Path:
    """One line per column: ``<index>=<attribute>|<kind>|<category or mean>|<std>``.

    Floats are written with ``repr`` so they read back exactly.
    """
    path = Path(path)
    lines = []
    for j, col in enumerate(columns):
        if col.kind == "dummy":
            lines.append(f"{j}={col.attribute}|dummy|{col.category}|")
        else:
            lines.append(f"{j}={col.attribute}|continuous|{col.mean!r}|{col.std!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_schema(path: str | Path) -> tuple[ColumnSpec, ...]:
    columns = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        _, value = line.split("=", 1)
        attribute, kind, a, b = value.split("|")
        if kind == "dummy":
            columns.append(ColumnSpec(attribute, kind, category=a))
        else:
            columns.append(ColumnSpec(attribute, kind, mean=float(a), std=float(b)))
    return tuple(columns)
