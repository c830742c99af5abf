import os
import subprocess
import sys

import pytest

from talentforest.cli import main
from talentforest.dataset import default_schema, parse_csv
from talentforest.forest import FORMAT_VERSION, model_from_json
from talentforest.importance import report_from_tsv
from talentforest.metrics import parse_report_tsv
from talentforest.selection import figure3_tree, parse_rules

HEADER = "PS,RAS,DSK,TE,GPA,CS\n"


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--rows", "300", "--noise", "0.1", "--seed", "3", "--out", str(d / "d.csv")]) == 0
    assert main(["train", "--data", str(d / "d.csv"), "--trees", "60", "--seed", "42",
                 "--out", str(d / "m.json")]) == 0
    return d


def test_synth_parses_back(workdir):
    data = parse_csv((workdir / "d.csv").read_bytes())
    assert len(data) == 300


def test_synth_stdout(capsys):
    assert main(["synth", "--rows", "5", "--seed", "1"]) == 0
    assert capsys.readouterr().out.startswith("PS,RAS,DSK,TE,GPA,CS,P\n")


def test_train_deterministic(workdir, capsys):
    out = workdir / "m2.json"
    assert main(["train", "--data", str(workdir / "d.csv"), "--trees", "60", "--seed", "42",
                 "--out", str(out)]) == 0
    assert "OOB error" in capsys.readouterr().out
    assert out.read_bytes() == (workdir / "m.json").read_bytes()
    model_from_json(out.read_text())


def test_inputs_untouched(workdir):
    before = (workdir / "d.csv").read_bytes()
    main(["train", "--data", str(workdir / "d.csv"), "--trees", "5", "--out", str(workdir / "t.json")])
    assert (workdir / "d.csv").read_bytes() == before


def test_predict(workdir, capsys):
    assert main(["predict", "--model", str(workdir / "m.json"), "--data", str(workdir / "d.csv")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "row\tpredicted\tGood\tAverage\tPoor"
    assert len(lines) == 301
    fracs = [float(x) for x in lines[1].split("\t")[2:]]
    assert sum(fracs) == pytest.approx(1.0)


def test_importance_and_prune(workdir, capsys):
    tsv, svg = workdir / "imp.tsv", workdir / "imp.svg"
    args = ["importance", "--model", str(workdir / "m.json"), "--data", str(workdir / "d.csv"),
            "--out", str(tsv), "--plot", str(svg)]
    assert main(args) == 0
    report = report_from_tsv(tsv.read_text(), default_schema().names)
    assert report.names[report.ranking[0]] == "DSK"
    assert svg.read_text().lstrip().startswith("<?xml")
    first = svg.read_bytes()
    assert main(args) == 0
    assert svg.read_bytes() == first
    capsys.readouterr()
    assert main(["prune", "--importance", str(tsv), "-P", "15"]) == 0
    out = capsys.readouterr().out
    assert "TE\tpruned" in out and "DSK\tkept" in out


def test_rules_builtin(workdir):
    out = workdir / "fig3.rules"
    assert main(["rules", "--builtin", "fig3", "--out", str(out)]) == 0
    assert parse_rules(out.read_text()) == figure3_tree()


def test_rules_derived(workdir, capsys):
    assert main(["rules", "--model", str(workdir / "m.json"), "--data", str(workdir / "d.csv"),
                 "-P", "15", "--accept", "Good,Average"]) == 0
    tree = parse_rules(capsys.readouterr().out)
    assert tree.feature == default_schema().index("DSK")


def test_screen_builtin_reject(tmp_path, capsys):
    cand = tmp_path / "one-candidate.csv"
    cand.write_text(HEADER + "Good,Good,Poor,Good,Good,Good\n")
    assert main(["screen", "--rules", "fig3", "--input", str(cand)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1].split("\t") == ["1", "REJECT", "DSK=Poor"]


def test_screen_rules_file(workdir, tmp_path, capsys):
    main(["rules", "--builtin", "fig3", "--out", str(tmp_path / "r.rules")])
    cand = tmp_path / "c.csv"
    cand.write_text(HEADER + "Good,Average,Good,Bad,Poor,Poor\n")
    assert main(["screen", "--rules", str(tmp_path / "r.rules"), "--input", str(cand)]) == 0
    assert "ACCEPT\tDSK=Good > RAS=Average" in capsys.readouterr().out


def test_evaluate(workdir, capsys):
    tsv, svg = workdir / "ev.tsv", workdir / "roc.svg"
    assert main(["evaluate", "--data", str(workdir / "d.csv"), "--trees", "20", "--folds", "10",
                 "--seed", "7", "--out", str(tsv), "--plot", str(svg)]) == 0
    table = capsys.readouterr().out
    assert table.splitlines()[0].split() == ["CLASS", "TP", "RATE", "FP", "RATE", "AUC"]
    parsed = parse_report_tsv(tsv.read_text())
    assert list(parsed) == ["Good", "Average", "Poor", "MEAN AUC"]
    assert svg.exists()


def test_missing_input_is_usage_error(tmp_path, capsys):
    out = tmp_path / "m.json"
    assert main(["train", "--data", str(tmp_path / "nope.csv"), "--out", str(out)]) == 2
    assert not out.exists()
    assert "no such file" in capsys.readouterr().err


def test_bad_arguments(capsys):
    assert main([]) == 2
    assert main(["train", "--trees", "x"]) == 2
    assert main(["prune", "--importance", __file__, "-P", "150"]) == 2
    assert main(["rules"]) == 2


def test_data_error_exit_one_and_no_partial_output(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("PS,RAS,DSK,TE,GPA,CS,P\nExcellent,Good,Good,Good,Good,Good,Good\n")
    out = tmp_path / "m.json"
    assert main(["train", "--data", str(bad), "--out", str(out)]) == 1
    assert "line 2" in capsys.readouterr().err
    assert not out.exists()
    assert os.listdir(tmp_path) == ["bad.csv"]


def test_version(capsys):
    assert main(["--version"]) == 0
    assert FORMAT_VERSION in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "talentforest", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("train", "predict", "evaluate", "importance", "prune", "rules", "screen", "synth"):
        assert cmd in proc.stdout
