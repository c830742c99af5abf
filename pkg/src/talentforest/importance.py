"""Variable importance (permutation and Gini) and percentage-based pruning."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import seeding
from .cart import Internal, Leaf, TreeNode, features_used, predict_tree_batch
from .dataset import Dataset
from .errors import DataError, DegenerateDataError, ParameterError
from .forest import RandomForestModel, _check_training_data


def mean_decrease_accuracy(model: RandomForestModel, data: Dataset, perm_seed: int = 0) -> np.ndarray:
    """OOB permutation importance, averaged over trees.

    For tree ``t`` and feature ``f`` the OOB column of ``f`` is shuffled with
    the stream keyed by ``(perm_seed, t, f)`` and the drop in that tree's OOB
    accuracy recorded. A tree that never splits on ``f`` routes the shuffled
    rows identically, so its drop is exactly zero and is not recomputed.
    Trees without OOB rows do not take part in the mean.
    """
    _check_training_data(model, data)
    p = model.schema.n_features
    total = np.zeros(p)
    used_trees = 0
    for t, tree in enumerate(model.trees):
        oob = model.oob_indices(t)
        if len(oob) == 0:
            continue
        used_trees += 1
        X = data.rows[oob]
        y = data.targets[oob]
        base = np.mean(predict_tree_batch(tree, X) == y)
        for f in sorted(features_used(tree)):
            rng = seeding.stream(perm_seed, t, f)
            Xp = X.copy()
            Xp[:, f] = X[rng.permutation(len(oob)), f]
            total[f] += base - np.mean(predict_tree_batch(tree, Xp) == y)
    return total / used_trees if used_trees else total


def _gini_mass(counts) -> float:
    """n * Gini for a node with the given class counts."""
    n = sum(counts)
    return n - sum(c * c for c in counts) / n


def _accumulate_gini(node: TreeNode, out: np.ndarray, n_root: int):
    """Add each split's root-normalized impurity decrease; returns node counts."""
    if isinstance(node, Leaf):
        return node.counts
    left = _accumulate_gini(node.left, out, n_root)
    right = _accumulate_gini(node.right, out, n_root)
    counts = tuple(a + b for a, b in zip(left, right))
    out[node.split.feature] += (_gini_mass(counts) - _gini_mass(left) - _gini_mass(right)) / n_root
    return counts


def tree_gini_decrease(tree: TreeNode, p: int) -> np.ndarray:
    out = np.zeros(p)
    if isinstance(tree, Internal):
        counts = _accumulate_gini(tree, np.zeros(p), 1)
        _accumulate_gini(tree, out, sum(counts))
    return out


def mean_decrease_gini(model: RandomForestModel) -> np.ndarray:
    p = model.schema.n_features
    total = np.zeros(p)
    for tree in model.trees:
        total += tree_gini_decrease(tree, p)
    return total / len(model.trees)


def percent_importance(imps) -> np.ndarray:
    """Each importance as a percentage of the total."""
    values = np.asarray(imps, dtype=float)
    if (values < 0).any():
        raise ParameterError("importances must be non-negative")
    total = values.sum()
    if not total > 0:
        raise DegenerateDataError("all importances are zero; percentages are undefined")
    return values / total * 100


@dataclass(frozen=True)
class ImportanceReport:
    names: tuple[str, ...]
    mda: tuple[float, ...]
    mdg: tuple[float, ...]
    percent_mdg: tuple[float, ...] | None
    percent_mda: tuple[float, ...] | None
    ranking: tuple[int, ...]

    def rank_of(self, feature: int) -> int:
        return self.ranking.index(feature) + 1


def rank_features(values) -> tuple[int, ...]:
    """Indices by descending value, ties by ascending index."""
    return tuple(sorted(range(len(values)), key=lambda i: (-values[i], i)))


def _percent_or_none(values):
    try:
        return tuple(float(v) for v in percent_importance(values))
    except DegenerateDataError:
        return None


def importance_report(model: RandomForestModel, data: Dataset, perm_seed: int = 0) -> ImportanceReport:
    mda = mean_decrease_accuracy(model, data, perm_seed)
    mdg = mean_decrease_gini(model)
    return build_report(model.schema.names, mda, mdg)


def build_report(names, mda, mdg) -> ImportanceReport:
    mda = tuple(float(v) for v in mda)
    mdg = tuple(float(v) for v in mdg)
    # permutation importance can dip below zero; those features get 0 percent
    clipped = [max(v, 0.0) for v in mda]
    return ImportanceReport(tuple(names), mda, mdg, _percent_or_none(mdg),
                            _percent_or_none(clipped), rank_features(mdg))


TSV_HEADER = ("feature", "mda", "mdg", "percent_mdg", "percent_mda", "rank")


def _fmt(v) -> str:
    return "NA" if v is None else repr(float(v))


def report_to_tsv(report: ImportanceReport) -> str:
    lines = ["\t".join(TSV_HEADER)]
    for i in report.ranking:
        pmdg = report.percent_mdg[i] if report.percent_mdg else None
        pmda = report.percent_mda[i] if report.percent_mda else None
        lines.append("\t".join([report.names[i], _fmt(report.mda[i]), _fmt(report.mdg[i]),
                                _fmt(pmdg), _fmt(pmda), str(report.rank_of(i))]))
    return "\n".join(lines) + "\n"


def report_from_tsv(text: str, feature_order=None) -> ImportanceReport:
    """Parse :func:`report_to_tsv` output.

    Rows come out in rank order; ``feature_order`` (e.g. schema names)
    restores feature indexing, otherwise rank order is used as the index.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or tuple(lines[0].split("\t")) != TSV_HEADER:
        raise DataError("not an importance report (bad header)", line=1)
    records = {}
    for no, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(TSV_HEADER):
            raise DataError(f"expected {len(TSV_HEADER)} fields", line=no)
        try:
            vals = [None if c == "NA" else float(c) for c in cells[1:5]]
        except ValueError:
            raise DataError("non-numeric importance value", line=no) from None
        if cells[0] in records:
            raise DataError(f"duplicate feature {cells[0]!r}", line=no)
        records[cells[0]] = vals
    names = tuple(feature_order) if feature_order is not None else tuple(records)
    if set(names) != set(records):
        raise DataError(f"report features {sorted(records)} do not match {sorted(names)}")
    cols = list(zip(*(records[n] for n in names)))
    pmdg = None if any(v is None for v in cols[2]) else tuple(cols[2])
    pmda = None if any(v is None for v in cols[3]) else tuple(cols[3])
    return ImportanceReport(names, tuple(cols[0]), tuple(cols[1]), pmdg, pmda,
                            rank_features(cols[1]))


@dataclass(frozen=True)
class PruneResult:
    threshold: float
    pruned: frozenset[int]
    kept: frozenset[int]
    tie_groups: tuple[frozenset[int], ...]
    pruned_total: float
    safeguard: bool = False


def _same(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-9)


def prune_features(percentages, P: float) -> PruneResult:
    """Drop the least important features until their share reaches ``P``.

    Features are taken in ascending percentage order (ties by index) and the
    one whose addition first brings the running total to ``P`` or more is
    dropped too. The last remaining feature is always kept. Groups of equal
    percentages cut in two by the stopping point are reported in
    ``tie_groups`` so a reviewer can decide how to treat them.
    """
    if not 0 < P < 100:
        raise ParameterError(f"threshold P must lie in (0, 100), got {P}")
    pct = [float(v) for v in percentages]
    if any(v < 0 for v in pct):
        raise ParameterError("percentages must be non-negative")
    order = sorted(range(len(pct)), key=lambda i: (pct[i], i))
    pruned, running, safeguard = [], 0.0, False
    for i in order:
        if len(pruned) == len(pct) - 1:
            safeguard = True
            break
        pruned.append(i)
        running += pct[i]
        if running >= P:
            break
    pruned_set = frozenset(pruned)
    kept = frozenset(range(len(pct))) - pruned_set
    groups = []
    for i in sorted(pruned_set):
        group = frozenset(j for j in range(len(pct)) if _same(pct[j], pct[i]))
        if group & kept and group not in groups:
            groups.append(group)
    return PruneResult(float(P), pruned_set, kept, tuple(groups), running, safeguard)


def prune_listing(result: PruneResult, names) -> str:
    """Tab-separated listing: one ``feature<TAB>status`` line per feature."""
    lines = [f"# threshold\t{result.threshold!r}",
             f"# pruned_total\t{result.pruned_total!r}"]
    if result.safeguard:
        lines.append("# safeguard\tlast feature kept")
    for g in result.tie_groups:
        lines.append("# tie\t" + ",".join(names[i] for i in sorted(g)))
    lines.append("feature\tstatus")
    for i, name in enumerate(names):
        lines.append(f"{name}\t{'pruned' if i in result.pruned else 'kept'}")
    return "\n".join(lines) + "\n"
