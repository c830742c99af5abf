"""Bagged ensembles of categorical CART trees."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import seeding
from .cart import Internal, Leaf, SplitSpec, TreeNode, TreeParams, grow_tree, predict_tree_batch
from .dataset import Dataset, FeatureSchema
from .errors import ConsistencyError, DataError, DegenerateDataError, ParameterError, SchemaError

FORMAT_VERSION = "talentforest-model/1"


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    mtry: int | None = None  # None = auto, floor(sqrt(p))
    min_node_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ParameterError("n_trees must be >= 1")
        if self.min_node_size < 1:
            raise ParameterError("min_node_size must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ParameterError("mtry must be >= 1")

    def resolved_mtry(self, p: int) -> int:
        if self.mtry is None:
            return min(max(math.isqrt(p), 1), p)
        if self.mtry > p:
            raise ParameterError(f"mtry={self.mtry} exceeds the {p} features")
        return self.mtry

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "mtry": "auto" if self.mtry is None else self.mtry,
            "min_node_size": self.min_node_size,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d) -> ForestParams:
        mtry = d["mtry"]
        return cls(int(d["n_trees"]), None if mtry == "auto" else int(mtry),
                   int(d["min_node_size"]), int(d["seed"]))


class VoteResult(NamedTuple):
    predicted: int
    vote_fractions: tuple[float, ...]


class OOBResult(NamedTuple):
    error_rate: float
    predictions: list  # VoteResult per row, None where the row was never out of bag
    skipped: list[int]


@dataclass(frozen=True, eq=False)
class RandomForestModel:
    params: ForestParams
    schema: FeatureSchema
    trees: tuple[TreeNode, ...]
    inbag: tuple[np.ndarray, ...]  # sorted bootstrap multiset per tree
    format_version: str = FORMAT_VERSION

    @property
    def n_train(self) -> int:
        return len(self.inbag[0])

    def oob_indices(self, t: int) -> np.ndarray:
        present = np.zeros(self.n_train, dtype=bool)
        present[self.inbag[t]] = True
        return np.flatnonzero(~present)

    def __eq__(self, other):
        if not isinstance(other, RandomForestModel):
            return NotImplemented
        return model_to_json(self) == model_to_json(other)


def bootstrap_sample(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``n`` uniform draws with replacement; returns (sorted inbag, oob)."""
    if n < 1:
        raise ParameterError("bootstrap needs n >= 1")
    inbag = np.sort(rng.integers(0, n, size=n))
    present = np.zeros(n, dtype=bool)
    present[inbag] = True
    return inbag, np.flatnonzero(~present)


def _grow_one(data: Dataset, params: ForestParams, mtry: int, t: int):
    rng = seeding.stream(params.seed, t)
    inbag, _ = bootstrap_sample(len(data), rng)
    tree = grow_tree(data, inbag, TreeParams(params.min_node_size, mtry, rng))
    return tree, inbag


def train_forest(data: Dataset, params: ForestParams | None = None, n_jobs: int = 1) -> RandomForestModel:
    """Fit ``params.n_trees`` trees, each on its own bootstrap sample.

    Tree ``t`` draws everything from the stream keyed by ``(seed, t)``, so
    the model does not depend on ``n_jobs`` or on evaluation order, and
    adding trees leaves the earlier ones untouched.
    """
    params = params or ForestParams()
    targets = data.require_targets()
    if len(data) < 2:
        raise ParameterError("training needs at least 2 rows")
    if len(np.unique(targets)) < 2:
        raise DegenerateDataError("training data contains a single class")
    mtry = params.resolved_mtry(data.schema.n_features)

    if n_jobs == 1:
        grown = [_grow_one(data, params, mtry, t) for t in range(params.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs if n_jobs > 0 else None) as pool:
            grown = list(pool.map(lambda t: _grow_one(data, params, mtry, t), range(params.n_trees)))
    trees = tuple(g[0] for g in grown)
    inbag = tuple(g[1] for g in grown)
    for ib in inbag:
        ib.setflags(write=False)
    return RandomForestModel(params, data.schema, trees, inbag)


def _check_rows(model: RandomForestModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.int64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    limits = np.array(model.schema.n_levels)
    if X.shape[1] != len(limits):
        raise SchemaError(f"records have {X.shape[1]} fields, model expects {len(limits)}")
    if X.size and ((X < 0).any() or (X >= limits).any()):
        raise SchemaError("record level index outside the model schema")
    return X


def vote_counts(model: RandomForestModel, X, trees=None) -> np.ndarray:
    """``(rows, classes)`` vote counts, optionally from a subset of tree indices."""
    X = _check_rows(model, X)
    k = model.schema.n_classes
    votes = np.zeros((len(X), k), dtype=np.int64)
    rows = np.arange(len(X))
    for t in (range(len(model.trees)) if trees is None else trees):
        votes[rows, predict_tree_batch(model.trees[t], X)] += 1
    return votes


def _vote_result(counts) -> VoteResult:
    counts = np.asarray(counts)
    total = int(counts.sum())
    return VoteResult(int(np.argmax(counts)), tuple(float(c) / total for c in counts))


def predict_forest(model: RandomForestModel, record) -> VoteResult:
    """Majority vote of all trees; ties go to the lowest class index."""
    return _vote_result(vote_counts(model, record)[0])


def predict_forest_batch(model: RandomForestModel, X) -> list[VoteResult]:
    return [_vote_result(c) for c in vote_counts(model, X)]


def _check_training_data(model: RandomForestModel, data: Dataset) -> None:
    if data.schema != model.schema:
        raise ConsistencyError("data schema differs from the model schema")
    if len(data) != model.n_train:
        raise ConsistencyError(f"model was trained on {model.n_train} rows, data has {len(data)}")
    data.require_targets()


def oob_votes(model: RandomForestModel, data: Dataset) -> np.ndarray:
    """Per-row vote counts restricted to trees for which the row is out of bag."""
    _check_training_data(model, data)
    votes = np.zeros((len(data), model.schema.n_classes), dtype=np.int64)
    for t, tree in enumerate(model.trees):
        oob = model.oob_indices(t)
        if len(oob):
            votes[oob, predict_tree_batch(tree, data.rows[oob])] += 1
    return votes


def oob_error(model: RandomForestModel, data: Dataset) -> OOBResult:
    votes = oob_votes(model, data)
    predictions, skipped, wrong = [], [], 0
    for i, counts in enumerate(votes):
        if counts.sum() == 0:
            predictions.append(None)
            skipped.append(i)
            continue
        vr = _vote_result(counts)
        predictions.append(vr)
        wrong += vr.predicted != data.targets[i]
    evaluated = len(data) - len(skipped)
    rate = wrong / evaluated if evaluated else float("nan")
    return OOBResult(rate, predictions, skipped)


# -- serialization --------------------------------------------------------------

def _node_to_obj(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"leaf": {"counts": list(node.counts), "class": node.predicted}}
    return {
        "split": {"feature": node.split.feature, "left_levels": sorted(node.split.left_levels)},
        "left": _node_to_obj(node.left),
        "right": _node_to_obj(node.right),
    }


def _node_from_obj(obj, schema: FeatureSchema) -> TreeNode:
    if "leaf" in obj:
        leaf = obj["leaf"]
        counts = tuple(int(c) for c in leaf["counts"])
        if len(counts) != schema.n_classes or sum(counts) < 1:
            raise DataError("leaf counts do not match the target levels")
        return Leaf(counts, int(leaf["class"]))
    split = obj["split"]
    f = int(split["feature"])
    if not 0 <= f < schema.n_features:
        raise DataError(f"split feature {f} out of range")
    levels = frozenset(int(v) for v in split["left_levels"])
    if not levels or not levels < set(range(schema.n_levels[f])):
        raise DataError("split left_levels must be a nonempty proper subset")
    return Internal(SplitSpec(f, levels), _node_from_obj(obj["left"], schema),
                    _node_from_obj(obj["right"], schema))


def model_to_json(model: RandomForestModel) -> str:
    doc = {
        "format_version": model.format_version,
        "schema": model.schema.to_dict(),
        "params": model.params.to_dict(),
        "inbag": [ib.tolist() for ib in model.inbag],
        "trees": [_node_to_obj(t) for t in model.trees],
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def model_from_json(text: str) -> RandomForestModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"model is not valid JSON: {exc}") from None
    try:
        version = doc["format_version"]
        if version != FORMAT_VERSION:
            raise DataError(f"unsupported model format {version!r}")
        schema = FeatureSchema.from_dict(doc["schema"])
        params = ForestParams.from_dict(doc["params"])
        inbag = tuple(np.array(ib, dtype=np.int64) for ib in doc["inbag"])
        trees = tuple(_node_from_obj(t, schema) for t in doc["trees"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"malformed model document: {exc}") from None
    if len(trees) != params.n_trees or len(inbag) != len(trees):
        raise DataError("tree count disagrees with params.n_trees")
    n = len(inbag[0])
    for ib in inbag:
        if len(ib) != n or (ib.size and (ib.min() < 0 or ib.max() >= n)):
            raise DataError("inconsistent inbag multisets")
        ib.setflags(write=False)
    return RandomForestModel(params, schema, trees, inbag, version)
