"""Accept/reject selection trees: representation, rules text, screening, derivation."""

from __future__ import annotations

import enum
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from typing import Union

import numpy as np

from .dataset import Dataset, FeatureSchema, default_schema
from .errors import ParameterError, RulesError, SchemaError
from .forest import RandomForestModel, predict_forest_batch
from .importance import ImportanceReport, PruneResult


class Decision(str, enum.Enum):
    ACCEPT = "ACCEPT"
    REJECT = "REJECT"


@dataclass(frozen=True)
class Verdict:
    decision: Decision


@dataclass(frozen=True)
class FeatureTest:
    """Multiway test on one feature; branches are kept sorted by lowest level."""

    feature: int
    branches: tuple[tuple[frozenset[int], SelectionTree], ...]

    def __post_init__(self):
        ordered = tuple(sorted(((frozenset(s), t) for s, t in self.branches),
                               key=lambda b: min(b[0]) if b[0] else -1))
        object.__setattr__(self, "branches", ordered)


SelectionTree = Union[Verdict, FeatureTest]

ACCEPT = Verdict(Decision.ACCEPT)
REJECT = Verdict(Decision.REJECT)


def validate(tree: SelectionTree, schema: FeatureSchema, ranking=None) -> None:
    """Check totality, one test per feature per path and, if given, rank order."""
    position = None if ranking is None else {f: r for r, f in enumerate(ranking)}

    def walk(node, seen, last_rank):
        if isinstance(node, Verdict):
            return
        f = node.feature
        if not 0 <= f < schema.n_features:
            raise SchemaError(f"test on unknown feature index {f}")
        name = schema.features[f].name
        if f in seen:
            raise SchemaError(f"feature {name} tested twice on one path")
        if position is not None:
            if f not in position:
                raise SchemaError(f"feature {name} is not in the ranking")
            if position[f] < last_rank:
                raise SchemaError(f"feature {name} tested below a less important feature")
        covered = set()
        for levels, child in node.branches:
            if not levels:
                raise SchemaError(f"empty level set under {name}")
            if covered & levels:
                raise SchemaError(f"overlapping branches for {name}")
            covered |= levels
            walk(child, seen | {f}, -1 if position is None else position[f])
        if covered != set(range(schema.n_levels[f])):
            raise SchemaError(f"branches for {name} do not cover every level")

    walk(tree, frozenset(), -1)


# -- screening ----------------------------------------------------------------------

@dataclass(frozen=True)
class ScreeningDecision:
    verdict: Decision
    path: tuple[tuple[int, int, frozenset[int]], ...]  # (feature, candidate level, matched set)


def screen_candidate(tree: SelectionTree, record) -> ScreeningDecision:
    record = tuple(int(v) for v in record)
    path = []
    node = tree
    while isinstance(node, FeatureTest):
        if node.feature >= len(record):
            raise SchemaError(f"record lacks feature index {node.feature}")
        level = record[node.feature]
        for levels, child in node.branches:
            if level in levels:
                path.append((node.feature, level, levels))
                node = child
                break
        else:
            raise RulesError(f"level {level} of feature {node.feature} matches no branch; "
                             "the tree is not total")
    return ScreeningDecision(node.decision, tuple(path))


def describe_path(decision: ScreeningDecision, schema: FeatureSchema) -> str:
    steps = []
    for f, level, _ in decision.path:
        feat = schema.features[f]
        steps.append(f"{feat.name}={feat.levels[level]}")
    return " > ".join(steps)


# -- rules text -------------------------------------------------------------------

INDENT = "  "
_LINE = re.compile(
    r"^(?P<feature>[A-Za-z_][\w]*)\s*"
    r"(?:==\s*(?P<level>[^:{}]+?)|in\s*\{(?P<levels>[^}]*)\})\s*"
    r"(?::\s*(?P<verdict>ACCEPT|REJECT))?\s*$",
    re.IGNORECASE,
)


def _level_text(schema: FeatureSchema, f: int, levels: frozenset[int]) -> str:
    names = [schema.features[f].levels[i] for i in sorted(levels)]
    if len(names) == 1:
        return f"{schema.features[f].name} == {names[0]}"
    return f"{schema.features[f].name} in {{{', '.join(names)}}}"


def serialize_rules(tree: SelectionTree, schema: FeatureSchema | None = None) -> str:
    schema = schema or default_schema()
    if isinstance(tree, Verdict):
        return tree.decision.value + "\n"
    lines = []

    def emit(node: FeatureTest, depth: int):
        for levels, child in node.branches:
            text = INDENT * depth + _level_text(schema, node.feature, levels)
            if isinstance(child, Verdict):
                lines.append(f"{text} : {child.decision.value}")
            else:
                lines.append(text)
                emit(child, depth + 1)

    emit(tree, 0)
    return "\n".join(lines) + "\n"


def parse_rules(text: str, schema: FeatureSchema | None = None) -> SelectionTree:
    """Inverse of :func:`serialize_rules`; errors carry 1-based line numbers."""
    schema = schema or default_schema()
    entries = []  # (line_no, depth, feature, levels, verdict)
    for no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        stripped = raw.lstrip(" ")
        if "\t" in raw[: len(raw) - len(stripped)]:
            raise RulesError("tabs are not allowed in indentation", line=no)
        indent = len(raw) - len(stripped)
        if indent % len(INDENT):
            raise RulesError(f"indentation of {indent} spaces is not a multiple of 2", line=no)
        body = stripped.rstrip()
        if body.upper() in (Decision.ACCEPT.value, Decision.REJECT.value):
            if entries or indent:
                raise RulesError("a bare verdict must be the only rule", line=no)
            entries.append((no, 0, None, None, Decision(body.upper())))
            continue
        m = _LINE.match(body)
        if not m:
            raise RulesError(f"cannot parse {body!r}", line=no)
        try:
            f = schema.index(m["feature"])
        except SchemaError:
            raise RulesError(f"unknown feature {m['feature']!r}", line=no) from None
        tokens = [m["level"]] if m["level"] is not None else m["levels"].split(",")
        levels = set()
        for tok in tokens:
            try:
                lv = schema.features[f].level_index(tok)
            except KeyError:
                raise RulesError(f"unknown level {tok.strip()!r} for {schema.features[f].name}",
                                 line=no) from None
            if lv in levels:
                raise RulesError(f"level {tok.strip()!r} listed twice", line=no)
            levels.add(lv)
        verdict = Decision(m["verdict"].upper()) if m["verdict"] else None
        entries.append((no, indent // len(INDENT), f, frozenset(levels), verdict))

    if not entries:
        raise RulesError("no rules found", line=1)
    if entries[0][2] is None:
        if len(entries) > 1:
            raise RulesError("a bare verdict must be the only rule", line=entries[1][0])
        return Verdict(entries[0][4])

    pos = 0

    def group(depth: int, seen: frozenset[int]) -> FeatureTest:
        nonlocal pos
        first_line, _, feature, _, _ = entries[pos]
        name = schema.features[feature].name
        if feature in seen:
            raise RulesError(f"feature {name} tested twice on one path", line=first_line)
        branches, covered = [], set()
        while pos < len(entries) and entries[pos][1] == depth:
            no, _, f, levels, verdict = entries[pos]
            if f != feature:
                raise RulesError(f"sibling tests mix {name} and {schema.features[f].name}", line=no)
            if covered & levels:
                raise RulesError(f"overlapping branches for {name}", line=no)
            covered |= levels
            pos += 1
            has_children = pos < len(entries) and entries[pos][1] > depth
            if has_children and entries[pos][1] != depth + 1:
                raise RulesError("indentation jumps more than one level", line=entries[pos][0])
            if verdict is not None:
                if has_children:
                    raise RulesError("a verdict line cannot have children", line=no)
                child = Verdict(verdict)
            elif not has_children:
                raise RulesError("branch has neither a verdict nor children", line=no)
            else:
                child = group(depth + 1, seen | {feature})
            branches.append((levels, child))
        missing = set(range(schema.n_levels[feature])) - covered
        if missing:
            lv = ", ".join(schema.features[feature].levels[i] for i in sorted(missing))
            raise RulesError(f"branches for {name} are not total; missing {lv}", line=first_line)
        return FeatureTest(feature, tuple(branches))

    if entries[0][1] != 0:
        raise RulesError("first rule must not be indented", line=entries[0][0])
    tree = group(0, frozenset())
    if pos < len(entries):
        raise RulesError("unexpected indentation", line=entries[pos][0])
    return tree


def builtin_rules_text() -> str:
    return resources.files("talentforest").joinpath("data/fig3.rules").read_text(encoding="utf-8")


def figure3_tree() -> SelectionTree:
    """The hand-written recruiting procedure over DSK, RAS, PS and CS."""
    return parse_rules(builtin_rules_text(), default_schema())


BUILTIN_RULES = {"fig3": figure3_tree}


# -- derivation from a forest -------------------------------------------------------------

@dataclass(frozen=True)
class AcceptPolicy:
    accept_classes: frozenset[int] = frozenset({0, 1})  # Good, Average
    max_depth: int | None = None

    def check(self, n_classes: int) -> None:
        if not self.accept_classes or not self.accept_classes < set(range(n_classes)):
            raise ParameterError("accept_classes must be a nonempty proper subset of the classes")
        if self.max_depth is not None and self.max_depth < 1:
            raise ParameterError("max_depth must be >= 1")


def merge_siblings(tree: SelectionTree) -> SelectionTree:
    """Merge sibling branches with identical subtrees, bottom-up.

    A test whose branches all end up identical is replaced by that subtree.
    """
    if isinstance(tree, Verdict):
        return tree
    merged: dict[SelectionTree, set[int]] = {}
    for levels, child in tree.branches:
        merged.setdefault(merge_siblings(child), set()).update(levels)
    if len(merged) == 1:
        return next(iter(merged))
    return FeatureTest(tree.feature, tuple((frozenset(lv), sub) for sub, lv in merged.items()))


def _node_decision(classes: np.ndarray, accept: frozenset[int]) -> Decision:
    counts = Counter(classes.tolist())
    top = max(counts.values())
    leaders = {c for c, n in counts.items() if n == top}
    verdicts = {c in accept for c in leaders}
    # tied leaders that disagree on acceptance resolve to reject
    return Decision.ACCEPT if verdicts == {True} else Decision.REJECT


def derive_selection_tree(model: RandomForestModel, data: Dataset, report: ImportanceReport,
                          prune: PruneResult, policy: AcceptPolicy | None = None) -> SelectionTree:
    """Build a selection tree over the kept features, most important first.

    Each training row is labelled with the forest's predicted class. A node
    accepts when the majority predicted class of the rows reaching it is in
    ``policy.accept_classes``; a level no row reaches inherits its parent's
    verdict. Growth stops at ``max_depth``, when features run out, or when
    every row at the node gets the same verdict.
    """
    policy = policy or AcceptPolicy()
    schema = model.schema
    policy.check(schema.n_classes)
    if not prune.kept:
        raise ParameterError("pruning removed every feature; nothing to build a tree from")
    order = [f for f in report.ranking if f in prune.kept]
    predicted = np.array([v.predicted for v in predict_forest_batch(model, data.rows)])
    X = data.rows
    accept = policy.accept_classes
    max_depth = policy.max_depth

    def build(idx: np.ndarray, depth: int, inherited: Decision) -> SelectionTree:
        if len(idx) == 0:
            return Verdict(inherited)
        classes = predicted[idx]
        decision = _node_decision(classes, accept)
        pure = len({c in accept for c in classes.tolist()}) == 1
        if pure or depth == len(order) or (max_depth is not None and depth >= max_depth):
            return Verdict(decision)
        f = order[depth]
        branches = tuple((frozenset({lv}), build(idx[X[idx, f] == lv], depth + 1, decision))
                         for lv in range(schema.n_levels[f]))
        return FeatureTest(f, branches)

    return merge_siblings(build(np.arange(len(data)), 0, Decision.REJECT))


def tree_features(tree: SelectionTree) -> set[int]:
    if isinstance(tree, Verdict):
        return set()
    out = {tree.feature}
    for _, child in tree.branches:
        out |= tree_features(child)
    return out


def paths(tree: SelectionTree, prefix=()):
    """Yield the tuple of tested features along every root-to-leaf path."""
    if isinstance(tree, Verdict):
        yield prefix
        return
    for _, child in tree.branches:
        yield from paths(child, prefix + (tree.feature,))
