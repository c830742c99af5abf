"""Candidate-attribute schema, CSV ingestion, CV folds and synthetic data."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import seeding
from .errors import DataError, ParameterError, SchemaError

GOOD, AVERAGE, POOR = "Good", "Average", "Poor"
THREE_LEVELS = (GOOD, AVERAGE, POOR)
TARGET_COLUMN = "P"


@dataclass(frozen=True)
class Feature:
    name: str
    levels: tuple[str, ...]

    def level_index(self, token: str) -> int:
        """Case-insensitive lookup of ``token`` among the levels."""
        folded = token.strip().casefold()
        for i, level in enumerate(self.levels):
            if level.casefold() == folded:
                return i
        raise KeyError(token)


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]
    target_levels: tuple[str, ...] = THREE_LEVELS

    def __post_init__(self):
        names = [f.name for f in self.features]
        if not names:
            raise SchemaError("schema needs at least one feature")
        if any(not n for n in names):
            raise SchemaError("feature names must be nonempty")
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate feature names in {names}")
        if TARGET_COLUMN in names:
            raise SchemaError(f"{TARGET_COLUMN!r} is reserved for the target column")
        for f in self.features:
            if len(f.levels) < 2:
                raise SchemaError(f"feature {f.name} needs at least 2 levels")
            if len({lv.casefold() for lv in f.levels}) != len(f.levels):
                raise SchemaError(f"duplicate levels for feature {f.name}")
        if len(self.target_levels) < 2:
            raise SchemaError("target needs at least 2 levels")
        if len({lv.casefold() for lv in self.target_levels}) != len(self.target_levels):
            raise SchemaError("duplicate target levels")

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def n_classes(self) -> int:
        return len(self.target_levels)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def n_levels(self) -> tuple[int, ...]:
        return tuple(len(f.levels) for f in self.features)

    def index(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name.casefold() == name.strip().casefold():
                return i
        raise SchemaError(f"unknown feature {name!r}")

    def target_index(self, token: str) -> int:
        folded = token.strip().casefold()
        for i, level in enumerate(self.target_levels):
            if level.casefold() == folded:
                return i
        raise KeyError(token)

    def to_dict(self) -> dict:
        return {
            "features": [{"name": f.name, "levels": list(f.levels)} for f in self.features],
            "target": {"name": TARGET_COLUMN, "levels": list(self.target_levels)},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> FeatureSchema:
        try:
            features = tuple(Feature(f["name"], tuple(f["levels"])) for f in d["features"])
            target = tuple(d["target"]["levels"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from None
        return cls(features, target)


def default_schema() -> FeatureSchema:
    """PS, RAS, DSK, TE, GPA, CS with a Good/Average/Poor target."""
    return FeatureSchema(
        features=(
            Feature("PS", THREE_LEVELS),
            Feature("RAS", THREE_LEVELS),
            Feature("DSK", THREE_LEVELS),
            Feature("TE", (GOOD, "Bad")),
            Feature("GPA", THREE_LEVELS),
            Feature("CS", THREE_LEVELS),
        ),
        target_levels=THREE_LEVELS,
    )


@dataclass(frozen=True, eq=False)
class Dataset:
    """Categorical records as a read-only ``(n, p)`` int matrix of level indices.

    ``targets`` is ``None`` for unlabelled input (prediction and screening).
    """

    schema: FeatureSchema
    rows: np.ndarray
    targets: np.ndarray | None

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.int64, copy=True).reshape(-1, self.schema.n_features)
        limits = np.array(self.schema.n_levels, dtype=np.int64)
        if rows.size and ((rows < 0).any() or (rows >= limits).any()):
            raise SchemaError("row entry outside its feature's level range")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        if self.targets is not None:
            targets = np.array(self.targets, dtype=np.int64, copy=True).reshape(-1)
            if len(targets) != len(rows):
                raise SchemaError(f"{len(targets)} targets for {len(rows)} rows")
            if targets.size and ((targets < 0).any() or (targets >= self.schema.n_classes).any()):
                raise SchemaError("target outside the target-level range")
            targets.setflags(write=False)
            object.__setattr__(self, "targets", targets)

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.schema != other.schema or not np.array_equal(self.rows, other.rows):
            return False
        if self.targets is None or other.targets is None:
            return self.targets is None and other.targets is None
        return np.array_equal(self.targets, other.targets)

    @property
    def labelled(self) -> bool:
        return self.targets is not None

    def require_targets(self) -> np.ndarray:
        if self.targets is None:
            raise DataError(f"dataset has no {TARGET_COLUMN} column")
        return self.targets

    def subset(self, indices) -> Dataset:
        idx = np.asarray(indices, dtype=np.int64)
        targets = None if self.targets is None else self.targets[idx]
        return Dataset(self.schema, self.rows[idx], targets)


# -- raw score categorization -------------------------------------------------

def categorize_score(raw: float) -> str:
    """Map a percentage score to Good (>75), Average (50..75) or Poor (<50)."""
    if not 0 <= raw <= 100:
        raise ParameterError(f"score {raw!r} outside [0, 100]")
    if raw > 75:
        return GOOD
    if raw >= 50:
        return AVERAGE
    return POOR


# -- CSV ----------------------------------------------------------------------

def parse_csv(content: bytes | str, schema: FeatureSchema | None = None,
              require_target: bool = True) -> Dataset:
    """Parse a headered, comma-separated UTF-8 table into a :class:`Dataset`.

    Columns may appear in any order; extra columns are rejected. When
    ``require_target`` is false the ``P`` column may be absent.
    """
    schema = schema or default_schema()
    if isinstance(content, bytes):
        try:
            content = content.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise DataError(f"not valid UTF-8: {exc}") from None
    reader = csv.reader(io.StringIO(content))
    header = None
    for header in reader:
        if any(cell.strip() for cell in header):
            break
    else:
        header = None
    if header is None:
        raise DataError("empty file", line=1)
    header_line = reader.line_num

    columns = [h.strip() for h in header]
    lookup = {c.casefold(): i for i, c in enumerate(columns)}
    if len(lookup) != len(columns):
        raise DataError("duplicate column in header", line=header_line)
    wanted = schema.names + [TARGET_COLUMN]
    for name in columns:
        if name.casefold() not in {w.casefold() for w in wanted}:
            raise DataError(f"unexpected column {name!r}", line=header_line)
    feature_cols = []
    for name in schema.names:
        if name.casefold() not in lookup:
            raise DataError(f"missing column {name!r}", line=header_line)
        feature_cols.append(lookup[name.casefold()])
    target_col = lookup.get(TARGET_COLUMN.casefold())
    if target_col is None and require_target:
        raise DataError(f"missing column {TARGET_COLUMN!r}", line=header_line)

    rows, targets = [], []
    for record in reader:
        line = reader.line_num
        if not any(cell.strip() for cell in record):
            continue
        if len(record) != len(columns):
            raise DataError(f"expected {len(columns)} fields, found {len(record)}", line=line)
        row = []
        for feature, col in zip(schema.features, feature_cols):
            try:
                row.append(feature.level_index(record[col]))
            except KeyError:
                raise DataError(f"unknown level {record[col].strip()!r} for {feature.name}",
                                line=line) from None
        rows.append(row)
        if target_col is not None:
            try:
                targets.append(schema.target_index(record[target_col]))
            except KeyError:
                raise DataError(f"unknown level {record[target_col].strip()!r} for "
                                f"{TARGET_COLUMN}", line=line) from None
    matrix = np.array(rows, dtype=np.int64).reshape(-1, schema.n_features)
    return Dataset(schema, matrix, np.array(targets) if target_col is not None else None)


def to_csv(data: Dataset) -> str:
    """Serialize in schema column order, target last, ``\\n`` line endings."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = data.schema.names + ([TARGET_COLUMN] if data.labelled else [])
    writer.writerow(header)
    for i, row in enumerate(data.rows):
        out = [f.levels[v] for f, v in zip(data.schema.features, row)]
        if data.labelled:
            out.append(data.schema.target_levels[data.targets[i]])
        writer.writerow(out)
    return buf.getvalue()


# -- cross-validation folds ----------------------------------------------------

@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: tuple[int, ...]

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.assignment) == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.assignment) != fold)


def stratified_folds(data: Dataset, k: int, seed: int) -> FoldAssignment:
    """Shuffle each class, lay the classes end to end and deal rows round-robin.

    Dealing consecutive positions to folds ``0..k-1`` keeps both the overall
    fold sizes and the per-class counts within one of each other.
    """
    n = len(data)
    if not 2 <= k <= n:
        raise ParameterError(f"need 2 <= k <= n, got k={k}, n={n}")
    targets = data.require_targets()
    rng = seeding.stream(seed)
    order = []
    for c in range(data.schema.n_classes):
        members = np.flatnonzero(targets == c)
        order.extend(members[rng.permutation(len(members))].tolist())
    assignment = [0] * n
    for pos, row in enumerate(order):
        assignment[row] = pos % k
    return FoldAssignment(k, tuple(assignment))


# -- synthetic data -------------------------------------------------------------

def figure3_ground_truth() -> dict[tuple[str, str, str], str]:
    """(DSK, RAS, PS) -> target, collapsing the recruiting rule tree.

    Strong accepts (DSK Good with RAS Good/Average) map to Good, the other
    accepting paths to Average, everything else to Poor. The DSK/RAS/PS =
    Average/Average/Good path accepts only on a CS test; CS is kept independent
    of the target, so that triple is labelled Average.
    """
    truth = {}
    for dsk, ras, ps in itertools.product(THREE_LEVELS, repeat=3):
        if dsk == GOOD and ras in (GOOD, AVERAGE):
            label = GOOD
        elif dsk == GOOD and ras == POOR:
            label = AVERAGE if ps == GOOD else POOR
        elif dsk == AVERAGE and ras == GOOD:
            label = AVERAGE
        elif dsk == AVERAGE and ras == AVERAGE:
            label = AVERAGE if ps == GOOD else POOR
        else:
            label = POOR
        truth[(dsk, ras, ps)] = label
    return truth


@dataclass(frozen=True)
class SynthSpec:
    n_rows: int = 600
    noise_rate: float = 0.1
    seed: int = 0
    ground_truth: Mapping[tuple[str, str, str], str] = field(default_factory=figure3_ground_truth)

    def __post_init__(self):
        if self.n_rows < 1:
            raise ParameterError("n_rows must be >= 1")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ParameterError(f"noise_rate {self.noise_rate} outside [0, 1]")
        missing = [t for t in itertools.product(THREE_LEVELS, repeat=3)
                   if t not in self.ground_truth]
        if missing:
            raise ParameterError(f"ground truth is not total; missing {missing[0]}")


def generate_synthetic(spec: SynthSpec, schema: FeatureSchema | None = None) -> Dataset:
    """Draw every attribute uniformly; label from (DSK, RAS, PS) plus label noise."""
    schema = schema or default_schema()
    rng = seeding.stream(spec.seed)
    n, p = spec.n_rows, schema.n_features
    rows = np.empty((n, p), dtype=np.int64)
    for j, m in enumerate(schema.n_levels):
        rows[:, j] = rng.integers(0, m, size=n)

    dsk, ras, ps = schema.index("DSK"), schema.index("RAS"), schema.index("PS")
    table = {}
    for key, label in spec.ground_truth.items():
        idx = tuple(schema.features[j].level_index(lv) for j, lv in zip((dsk, ras, ps), key))
        table[idx] = schema.target_index(label)
    targets = np.array([table[(r[dsk], r[ras], r[ps])] for r in rows], dtype=np.int64)

    k = schema.n_classes
    flip = rng.random(n) < spec.noise_rate
    shift = rng.integers(1, k, size=n)
    targets = np.where(flip, (targets + shift) % k, targets)
    return Dataset(schema, rows, targets)


def enumerate_records(schema: FeatureSchema | None = None) -> np.ndarray:
    """Every schema-valid record, in lexicographic level order."""
    schema = schema or default_schema()
    return np.array(list(itertools.product(*(range(m) for m in schema.n_levels))),
                    dtype=np.int64).reshape(-1, schema.n_features)

