"""``talentforest`` command line.

Exit status: 0 on success, 1 for data or runtime errors, 2 for usage errors
(including missing input files). Output files are staged and written only
once the whole command has succeeded.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .dataset import SynthSpec, default_schema, generate_synthetic, parse_csv, to_csv
from .errors import TalentForestError
from .forest import (FORMAT_VERSION, ForestParams, model_from_json, model_to_json, oob_error,
                     predict_forest_batch, train_forest)
from .importance import (PruneResult, build_report, importance_report, prune_features, prune_listing,
                         report_from_tsv, report_to_tsv)
from .metrics import cross_validate, format_report_table, format_report_tsv
from .plotting import importance_dotplot, roc_plot
from .selection import (BUILTIN_RULES, AcceptPolicy, derive_selection_tree, describe_path,
                        parse_rules, screen_candidate, serialize_rules)


class Outputs:
    """Collects (path, text) pairs; ``commit`` writes each atomically."""

    def __init__(self):
        self.staged: list[tuple[Path, str]] = []

    def add(self, path, text: str) -> None:
        self.staged.append((Path(path), text))

    def commit(self) -> None:
        umask = os.umask(0)
        os.umask(umask)
        written = []
        try:
            for path, text in self.staged:
                fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
                with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                    fh.write(text)
                os.chmod(tmp, 0o666 & ~umask)
                os.replace(tmp, path)
                written.append(path)
        except BaseException:
            for path in written:
                path.unlink(missing_ok=True)
            raise


def _emit(out: Outputs, path, text: str) -> None:
    """Stage ``text`` for ``path`` or print it when no path is given."""
    if path:
        out.add(path, text)
    else:
        sys.stdout.write(text)


def _mtry(value: str):
    if value.lower() == "auto":
        return None
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("mtry must be 'auto' or a positive integer") from None
    if n < 1:
        raise argparse.ArgumentTypeError("mtry must be >= 1")
    return n


def _read(path) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_data(path, require_target=True):
    return parse_csv(Path(path).read_bytes(), default_schema(), require_target=require_target)


def _forest_params(args) -> ForestParams:
    return ForestParams(n_trees=args.trees, mtry=args.mtry, min_node_size=args.min_node,
                        seed=args.seed)


# -- subcommands -------------------------------------------------------------------------

def cmd_synth(args, out):
    data = generate_synthetic(SynthSpec(args.rows, args.noise, args.seed))
    _emit(out, args.out, to_csv(data))


def cmd_train(args, out):
    data = _load_data(args.data)
    model = train_forest(data, _forest_params(args), n_jobs=args.jobs)
    oob = oob_error(model, data)
    out.add(args.out, model_to_json(model))
    evaluated = len(data) - len(oob.skipped)
    print(f"OOB error: {oob.error_rate:.4f} ({evaluated} rows evaluated, "
          f"{len(oob.skipped)} skipped)")


def cmd_predict(args, out):
    model = model_from_json(_read(args.model))
    data = _load_data(args.data, require_target=False)
    levels = model.schema.target_levels
    lines = ["\t".join(["row", "predicted"] + list(levels))]
    for i, vr in enumerate(predict_forest_batch(model, data.rows)):
        lines.append("\t".join([str(i + 1), levels[vr.predicted]] +
                               [repr(f) for f in vr.vote_fractions]))
    _emit(out, args.out, "\n".join(lines) + "\n")


def cmd_evaluate(args, out):
    data = _load_data(args.data)
    report = cross_validate(data, _forest_params(args), k=args.folds, seed=args.seed,
                            n_jobs=args.jobs)
    sys.stdout.write(format_report_table(report))
    if args.out:
        out.add(args.out, format_report_tsv(report))
    if args.plot:
        out.add(args.plot, roc_plot(report, data.targets))


def cmd_importance(args, out):
    model = model_from_json(_read(args.model))
    data = _load_data(args.data)
    report = importance_report(model, data, args.perm_seed)
    _emit(out, args.out, report_to_tsv(report))
    if args.plot:
        out.add(args.plot, importance_dotplot(report))


def _percentages(report, measure):
    values = report.percent_mdg if measure == "mdg" else report.percent_mda
    if values is None:
        raise TalentForestError(f"all {measure.upper()} importances are zero; cannot prune")
    return values


def cmd_prune(args, out):
    names = default_schema().names
    report = report_from_tsv(_read(args.importance), names)
    result = prune_features(_percentages(report, args.measure), args.threshold)
    _emit(out, args.out, prune_listing(result, names))


def cmd_rules(args, out):
    schema = default_schema()
    if args.builtin:
        tree = BUILTIN_RULES[args.builtin]()
    else:
        model = model_from_json(_read(args.model))
        data = _load_data(args.data)
        if args.importance:
            report = report_from_tsv(_read(args.importance), model.schema.names)
            report = build_report(report.names, report.mda, report.mdg)
        else:
            report = importance_report(model, data, args.perm_seed)
        if args.threshold is not None:
            prune = prune_features(_percentages(report, "mdg"), args.threshold)
        else:
            every = frozenset(range(len(report.names)))
            prune = PruneResult(0.0, frozenset(), every, (), 0.0)
        accept = frozenset(schema.target_index(c) for c in args.accept.split(","))
        tree = derive_selection_tree(model, data, report, prune,
                                     AcceptPolicy(accept, args.max_depth))
    _emit(out, args.out, serialize_rules(tree, schema))


def cmd_screen(args, out):
    schema = default_schema()
    if args.rules in BUILTIN_RULES and not Path(args.rules).exists():
        tree = BUILTIN_RULES[args.rules]()
    else:
        tree = parse_rules(_read(args.rules), schema)
    data = _load_data(args.input, require_target=False)
    lines = ["row\tverdict\tpath"]
    for i, record in enumerate(data.rows):
        decision = screen_candidate(tree, record)
        lines.append(f"{i + 1}\t{decision.verdict.value}\t{describe_path(decision, schema)}")
    _emit(out, args.out, "\n".join(lines) + "\n")


# -- parser ---------------------------------------------------------------------------------

def _accept_levels(value: str) -> str:
    schema = default_schema()
    for token in value.split(","):
        try:
            schema.target_index(token)
        except KeyError:
            raise argparse.ArgumentTypeError(f"unknown class {token!r}") from None
    return value


def _percent(value: str) -> float:
    p = float(value)
    if not 0 < p < 100:
        raise argparse.ArgumentTypeError("threshold must lie strictly between 0 and 100")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="talentforest",
        description="Random-forest analysis of categorical candidate records.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__} (model format {FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def forest_opts(p):
        p.add_argument("--trees", type=int, default=500, help="number of trees (default 500)")
        p.add_argument("--mtry", type=_mtry, default=None,
                       help="candidate features per node, or 'auto' = floor(sqrt(p))")
        p.add_argument("--min-node", type=int, default=1, help="minimum rows per leaf")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1, help="worker threads (0 = all cores)")

    p = sub.add_parser("synth", help="write a synthetic dataset as CSV")
    p.add_argument("--rows", type=int, default=600)
    p.add_argument("--noise", type=float, default=0.1, help="label-noise rate in [0, 1]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_synth, inputs=(), outputs=("out",))

    p = sub.add_parser("train", help="fit a forest and report its OOB error")
    p.add_argument("--data", required=True)
    forest_opts(p)
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_train, inputs=("data",), outputs=("out",))

    p = sub.add_parser("predict", help="per-row class and vote fractions")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="CSV; the P column is optional")
    p.add_argument("--out", help="TSV path (default: stdout)")
    p.set_defaults(func=cmd_predict, inputs=("model", "data"), outputs=("out",))

    p = sub.add_parser("evaluate", help="stratified k-fold TP/FP rate and AUC report")
    p.add_argument("--data", required=True)
    forest_opts(p)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--out", help="TSV copy of the report")
    p.add_argument("--plot", help="SVG path for one-vs-rest ROC curves")
    p.set_defaults(func=cmd_evaluate, inputs=("data",), outputs=("out", "plot"))

    p = sub.add_parser("importance", help="accuracy and Gini importance per feature")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="the training CSV of the model")
    p.add_argument("--perm-seed", type=int, default=0)
    p.add_argument("--out", help="TSV path (default: stdout)")
    p.add_argument("--plot", help="SVG dot plot path")
    p.set_defaults(func=cmd_importance, inputs=("model", "data"), outputs=("out", "plot"))

    p = sub.add_parser("prune", help="drop the least important features up to P percent")
    p.add_argument("--importance", required=True, help="TSV from the importance command")
    p.add_argument("--threshold", "-P", type=_percent, required=True)
    p.add_argument("--measure", choices=("mdg", "mda"), default="mdg")
    p.add_argument("--out")
    p.set_defaults(func=cmd_prune, inputs=("importance",), outputs=("out",))

    p = sub.add_parser("rules", help="emit a selection tree as rules text")
    p.add_argument("--builtin", choices=sorted(BUILTIN_RULES))
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--importance", help="reuse an importance TSV instead of recomputing")
    p.add_argument("--perm-seed", type=int, default=0)
    p.add_argument("--threshold", "-P", type=_percent)
    p.add_argument("--accept", type=_accept_levels, default="Good,Average",
                   help="classes treated as accept (default Good,Average)")
    p.add_argument("--max-depth", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rules, inputs=("model", "data", "importance"), outputs=("out",))

    p = sub.add_parser("screen", help="run candidates through a selection tree")
    p.add_argument("--rules", required=True, help="rules file or a builtin name (fig3)")
    p.add_argument("--input", required=True, help="candidate CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_screen, inputs=("input",), outputs=("out",))
    return parser


def _validate_paths(parser, args) -> None:
    for name in args.inputs:
        value = getattr(args, name, None)
        if value is not None and not Path(value).is_file():
            parser.error(f"--{name.replace('_', '-')}: no such file: {value}")
    if args.command == "screen" and args.rules not in BUILTIN_RULES and not Path(args.rules).is_file():
        parser.error(f"--rules: no such file or builtin: {args.rules}")
    if args.command == "rules":
        if args.builtin and (args.model or args.data):
            parser.error("--builtin cannot be combined with --model/--data")
        if not args.builtin and not (args.model and args.data):
            parser.error("either --builtin or both --model and --data are required")
    for name in args.outputs:
        value = getattr(args, name, None)
        if value is not None and not Path(value).resolve().parent.is_dir():
            parser.error(f"--{name}: directory does not exist: {Path(value).parent}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate_paths(parser, args)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = Outputs()
    try:
        args.func(args, out)
        out.commit()
    except (TalentForestError, OSError, UnicodeDecodeError) as exc:
        print(f"talentforest {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
