import itertools

import numpy as np
import pytest

from oracles import figure3_verdict
from talentforest.dataset import default_schema, enumerate_records
from talentforest.errors import ParameterError, RulesError, SchemaError
from talentforest.forest import ForestParams, train_forest
from talentforest.importance import PruneResult, importance_report, prune_features
from talentforest.selection import (ACCEPT, REJECT, AcceptPolicy, Decision, FeatureTest, Verdict,
                                    builtin_rules_text, derive_selection_tree, figure3_tree,
                                    merge_siblings, parse_rules, paths, screen_candidate,
                                    serialize_rules, tree_features, validate)

SCHEMA = default_schema()
LEVELS = ("Good", "Average", "Poor")
PS, RAS, DSK, TE, GPA, CS = range(6)


def record(dsk="Good", ras="Good", ps="Good", cs="Good", te="Good", gpa="Good"):
    rec = [0] * 6
    for f, name in ((DSK, dsk), (RAS, ras), (PS, ps), (CS, cs), (TE, te), (GPA, gpa)):
        rec[f] = SCHEMA.features[f].level_index(name)
    return rec


class TestFigure3:
    def test_examples(self):
        tree = figure3_tree()
        assert screen_candidate(tree, record("Good", "Poor", "Good", "Poor")).verdict == Decision.ACCEPT
        assert screen_candidate(tree, record("Poor")).verdict == Decision.REJECT
        assert screen_candidate(tree, record("Average", "Average", "Good", "Average")).verdict == Decision.REJECT

    def test_truth_table(self):
        tree = figure3_tree()
        accepts = 0
        for dsk, ras, ps, cs in itertools.product(LEVELS, repeat=4):
            got = screen_candidate(tree, record(dsk, ras, ps, cs)).verdict.value
            assert got == figure3_verdict(dsk, ras, ps, cs), (dsk, ras, ps, cs)
            accepts += got == "ACCEPT"
        assert accepts == 31

    def test_ignores_te_and_gpa(self):
        tree = figure3_tree()
        assert tree_features(tree) == {DSK, RAS, PS, CS}
        for te, gpa in itertools.product(("Good", "Bad"), LEVELS):
            gpa_ok = gpa if gpa != "Bad" else "Good"
            assert screen_candidate(tree, record("Good", te=te, gpa=gpa_ok)).verdict == Decision.ACCEPT

    def test_path(self):
        d = screen_candidate(figure3_tree(), record("Good", "Average"))
        assert d.verdict == Decision.ACCEPT
        assert [(f, lv) for f, lv, _ in d.path] == [(DSK, 0), (RAS, 1)]
        assert d.path[1][2] == {0, 1}

    def test_roundtrip(self):
        tree = figure3_tree()
        text = serialize_rules(tree)
        assert parse_rules(text) == tree
        assert serialize_rules(parse_rules(text)) == text
        body = [ln for ln in builtin_rules_text().splitlines() if not ln.startswith("#")]
        assert "\n".join(body) + "\n" == text

    def test_well_formed(self):
        validate(figure3_tree(), SCHEMA, ranking=(DSK, RAS, PS, CS, TE, GPA))

    def test_totality_over_all_records(self):
        tree = figure3_tree()
        records = enumerate_records()
        assert len(records) == 486
        for rec in records:
            screen_candidate(tree, rec)


class TestScreening:
    def test_verdict_only(self):
        d = screen_candidate(ACCEPT, record())
        assert d.verdict == Decision.ACCEPT and d.path == ()

    def test_non_total_tree(self):
        tree = FeatureTest(DSK, ((frozenset({0}), ACCEPT),))
        with pytest.raises(RulesError):
            screen_candidate(tree, record("Poor"))

    def test_missing_feature(self):
        with pytest.raises(SchemaError):
            screen_candidate(FeatureTest(CS, ((frozenset({0, 1, 2}), ACCEPT),)), (0, 0))


class TestRulesParsing:
    @pytest.mark.parametrize("text, pattern, line", [
        ("DSK == Good\n  DSK == Good : ACCEPT\n  DSK in {Average, Poor} : REJECT\n"
         "DSK in {Average, Poor} : REJECT\n", "twice", 2),
        ("DSK == Good : ACCEPT\nDSK == Poor : REJECT\n", "not total; missing Average", 1),
        ("DSK == Good : ACCEPT\n   DSK == Poor : REJECT\n", "indentation", 2),
        ("XYZ == Good : ACCEPT\n", "unknown feature", 1),
        ("DSK == Great : ACCEPT\n", "unknown level", 1),
        ("DSK == Good : ACCEPT\nRAS in {Average, Poor} : REJECT\n", "mix", 2),
        ("DSK == Good\nDSK in {Average, Poor} : REJECT\n", "neither", 1),
        ("DSK == Good : ACCEPT\n  RAS == Good : ACCEPT\n", "cannot have children", 1),
        ("DSK in {Good, Average} : ACCEPT\nDSK in {Average, Poor} : REJECT\n", "overlapping", 2),
        ("# only a comment\n", "no rules", 1),
    ])
    def test_errors(self, text, pattern, line):
        with pytest.raises(RulesError, match=pattern) as exc:
            parse_rules(text)
        assert exc.value.line == line

    def test_missing_dsk_average_branch(self):
        text = builtin_rules_text()
        start = text.index("DSK == Average")
        end = text.index("DSK == Poor")
        with pytest.raises(RulesError, match="DSK"):
            parse_rules(text[:start] + text[end:])

    def test_case_and_comments(self):
        text = "# c\ndka == good : accept\ndsk in {AVERAGE, poor} : reject\n"
        with pytest.raises(RulesError):
            parse_rules(text)
        tree = parse_rules(text.replace("dka", "dsk"))
        assert tree == FeatureTest(DSK, ((frozenset({0}), ACCEPT), (frozenset({1, 2}), REJECT)))

    def test_bare_verdict(self):
        assert parse_rules("REJECT\n") == REJECT
        assert serialize_rules(ACCEPT) == "ACCEPT\n"


class TestMerge:
    def test_all_reject_collapses(self):
        tree = FeatureTest(DSK, tuple((frozenset({lv}), REJECT) for lv in range(3)))
        assert merge_siblings(tree) == REJECT

    def test_partial_merge_and_idempotence(self):
        inner = FeatureTest(PS, ((frozenset({0}), ACCEPT), (frozenset({1}), REJECT), (frozenset({2}), REJECT)))
        tree = FeatureTest(DSK, ((frozenset({0}), inner), (frozenset({1}), inner), (frozenset({2}), REJECT)))
        merged = merge_siblings(tree)
        expected_inner = FeatureTest(PS, ((frozenset({0}), ACCEPT), (frozenset({1, 2}), REJECT)))
        assert merged == FeatureTest(DSK, ((frozenset({0, 1}), expected_inner), (frozenset({2}), REJECT)))
        assert merge_siblings(merged) == merged


@pytest.fixture(scope="module")
def derived_inputs(forest500, synth600):
    report = importance_report(forest500, synth600, perm_seed=0)
    return forest500, synth600, report


class TestDerive:
    def test_root_is_top_feature(self, derived_inputs):
        model, data, report = derived_inputs
        prune = prune_features(report.percent_mdg, 15)
        tree = derive_selection_tree(model, data, report, prune)
        assert isinstance(tree, FeatureTest) and tree.feature == DSK
        assert report.ranking[0] == DSK

    def test_invariants(self, derived_inputs):
        model, data, report = derived_inputs
        for P in (5, 15, 30):
            prune = prune_features(report.percent_mdg, P)
            for depth in (None, 1, 2):
                tree = derive_selection_tree(model, data, report, prune, AcceptPolicy(max_depth=depth))
                kept_order = [f for f in report.ranking if f in prune.kept]
                validate(tree, SCHEMA, ranking=kept_order)
                assert not tree_features(tree) & prune.pruned
                for path in paths(tree):
                    it = iter(kept_order)
                    assert all(f in it for f in path)  # subsequence check
                    if depth is not None:
                        assert len(path) <= depth
                assert merge_siblings(tree) == tree
                assert derive_selection_tree(model, data, report, prune,
                                             AcceptPolicy(max_depth=depth)) == tree

    def test_depth_one(self, derived_inputs):
        model, data, report = derived_inputs
        prune = prune_features(report.percent_mdg, 10)
        tree = derive_selection_tree(model, data, report, prune, AcceptPolicy(max_depth=1))
        assert isinstance(tree, FeatureTest) and tree.feature == report.ranking[0]
        assert all(isinstance(child, Verdict) for _, child in tree.branches)

    def test_recovers_builtin_structure(self, derived_inputs):
        # the synthetic labels come from the recruiting procedure without its CS test
        model, data, report = derived_inputs
        prune = prune_features(report.percent_mdg, 15)
        tree = derive_selection_tree(model, data, report, prune)
        for dsk, ras, ps in itertools.product(LEVELS, repeat=3):
            expected = figure3_verdict(dsk, ras, ps, "Good")
            assert screen_candidate(tree, record(dsk, ras, ps)).verdict.value == expected

    def test_policy_errors(self, derived_inputs):
        model, data, report = derived_inputs
        everything = PruneResult(1.0, frozenset(), frozenset(range(6)), (), 0.0)
        with pytest.raises(ParameterError):
            derive_selection_tree(model, data, report, everything, AcceptPolicy(frozenset({0, 1, 2})))
        with pytest.raises(ParameterError):
            derive_selection_tree(model, data, report,
                                  PruneResult(1.0, frozenset(range(6)), frozenset(), (), 0.0))

    def test_reject_only_policy_collapses(self, derived_inputs):
        model, data, report = derived_inputs
        everything = PruneResult(1.0, frozenset(), frozenset(range(6)), (), 0.0)
        # accepting only Good: DSK=Good with RAS Good/Average is the accept region
        tree = derive_selection_tree(model, data, report, everything, AcceptPolicy(frozenset({0})))
        for dsk, ras in itertools.product(LEVELS, repeat=2):
            v = screen_candidate(tree, record(dsk, ras)).verdict
            assert (v == Decision.ACCEPT) == (dsk == "Good" and ras != "Poor")
