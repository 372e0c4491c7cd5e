"""Command-line entry point.

Subcommands: scope, features, size, run, train, report. Exit codes:
0 success, 1 internal error, 2 bad input, 3 bad configuration.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import shutil
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from . import dtree, features, harness, report, scope
from .dtree import Task
from .elf import parse_elf, size_delta, size_profile
from .errors import (
    DegenerateSplit,
    EmptyMatrix,
    MalformedElf,
    RwevalError,
    SchemaError,
    UnknownTool,
    Unsupported,
)
from .util import fmt_pct

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_BAD_INPUT = 2
EXIT_BAD_CONFIG = 3


class CliConfigError(Exception):
    pass


class CliInputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on its own; route usage problems to exit 3
    def error(self, message):
        raise CliConfigError(message)


def _read_binary(path: str) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise CliInputError(f"cannot read {path!r}: {e}") from e


def _load_models(model_dir: str | None):
    if model_dir is None:
        return scope.builtin_models()
    try:
        paths = sorted(glob.glob(os.path.join(glob.escape(model_dir), "*.json")))
        if not paths:
            raise CliConfigError(f"no *.json models under {model_dir!r}")
        models = []
        for p in paths:
            with open(p, "r", encoding="utf-8") as f:
                models.append(dtree.parse_tree(f.read()))
        return models
    except (OSError, SchemaError, json.JSONDecodeError) as e:
        raise CliConfigError(f"cannot load models from {model_dir!r}: {e}") from e


def cmd_scope(args) -> int:
    models = _load_models(args.models)
    data = _read_binary(args.path)
    fv = features.extract_features(parse_elf(data))
    rep = scope.ScopeReport(
        binary_id=args.path,
        features=fv,
        predictions={m.tool_name: dtree.predict(m, fv) for m in models},
    )
    print(rep.to_json() if args.format == "json" else rep.to_text())
    return EXIT_OK


def cmd_features(args) -> int:
    fv = features.extract_features(parse_elf(_read_binary(args.path)))
    if args.format == "text":
        for name, value in sorted(fv.features.items()):
            print(f"{name} {'1' if value else '0'}")
    else:
        print(json.dumps(fv.to_json_obj(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_size(args) -> int:
    data = _read_binary(args.path)
    profile = size_profile(parse_elf(data), len(data))
    if args.path2 is None:
        rows = [["bucket", "bytes"]]
        rows += [[name, str(n)] for name, n in profile.buckets.items()]
        obj = profile.buckets
    else:
        data2 = _read_binary(args.path2)
        after = size_profile(parse_elf(data2), len(data2))
        delta = size_delta(profile, after)
        rows = [["bucket", "pct"]]
        rows += [[name, fmt_pct(v)] for name, v in delta.items()]
        obj = {name: (None if v is None else v) for name, v in delta.items()}
    if args.format == "json":
        print(json.dumps(obj, indent=2))
    elif args.format == "csv":
        print(report.rows_to_csv(rows), end="")
    else:
        print(report.rows_to_text(rows))
    return EXIT_OK


def _load_manifest(path: str):
    try:
        return harness.load_manifest(path)
    except (OSError, ValueError, json.JSONDecodeError) as e:
        raise CliInputError(f"cannot load manifest {path!r}: {e}") from e


def _load_adapters(path: str):
    try:
        return harness.load_adapters(path)
    except (OSError, ValueError, json.JSONDecodeError) as e:
        raise CliConfigError(f"cannot load adapters {path!r}: {e}") from e


def cmd_run(args) -> int:
    manifest = _load_manifest(args.manifest)
    adapters = _load_adapters(args.adapters)
    tasks = _parse_tasks(args.tasks)

    with tempfile.TemporaryDirectory(prefix="rweval-run-") as workroot:
        stream = open(args.out, "w", encoding="utf-8", newline="")
        import csv as _csv

        writer = _csv.writer(stream, lineterminator="\n")
        writer.writerow(harness.RESULTS_COLUMNS)

        def on_record(record):
            writer.writerow(harness.record_to_row(record))
            stream.flush()

        try:
            records = harness.run_campaign(
                manifest,
                adapters,
                tasks=tasks,
                parallelism=args.parallelism,
                timeout_s=args.timeout_s,
                afl_driver=args.afl_driver,
                workroot=workroot,
                on_record=on_record,
            )
        finally:
            stream.close()
        if args.keep_outputs:
            _keep_outputs(records, manifest, workroot, args.keep_outputs)
    # rewrite sorted so reruns produce identical files regardless of scheduling
    harness.write_records_csv(records, args.out)
    print(f"{len(records)} records -> {args.out}")
    return EXIT_OK


def _keep_outputs(records, manifest, workroot: str, dest: str) -> None:
    os.makedirs(dest, exist_ok=True)
    paths = {e.binary_id: e.path for e in manifest}
    for r in records:
        if not r.exe_ok:
            continue
        workdir = os.path.join(workroot, f"{r.binary_id}__{r.tool_name}__{r.task.value}")
        src = harness.task_output_path(workdir, paths[r.binary_id])
        if src.is_file():
            shutil.copy2(src, os.path.join(dest, f"{r.binary_id}__{r.tool_name}__{r.task.value}"))


def _parse_tasks(spec: str) -> list[Task]:
    try:
        return [Task(t.strip()) for t in spec.split(",") if t.strip()]
    except ValueError as e:
        raise CliConfigError(f"bad --tasks value {spec!r}: {e}") from e


def _load_results(path: str):
    try:
        return harness.load_records_csv(path)
    except (OSError, ValueError) as e:
        raise CliInputError(f"cannot load results {path!r}: {e}") from e


def cmd_train(args) -> int:
    records = _load_results(args.results)
    manifest = _load_manifest(args.manifest)
    task = Task(args.task)

    relevant = [
        r for r in records if r.tool_name == args.tool and r.task is task
    ]
    if not relevant:
        raise CliInputError(
            f"no records for tool {args.tool!r} task {task.value} in {args.results!r}"
        )
    label_by_id = {
        r.binary_id: (
            features.Label.PASS
            if r.func_ok is harness.TriState.YES
            else features.Label.FAIL
        )
        for r in relevant
    }

    vectors = []
    for entry in manifest:
        if entry.binary_id not in label_by_id:
            continue
        fv = features.extract_features(parse_elf(_read_binary(entry.path)))
        vectors.append((entry.binary_id, fv, label_by_id[entry.binary_id]))
    if len(vectors) < 2:
        raise CliInputError("fewer than 2 manifest binaries have records to train on")

    try:
        matrix = features.build_matrix(
            vectors,
            min_support=args.min_support,
            max_support_fraction=args.max_support_fraction,
        )
        selected = dtree.select_features(matrix, k=args.k, seed=args.seed)
        projected = features.select_columns(matrix, selected)
        train, test = dtree.split_train_test(
            projected, args.train_fraction, seed=args.seed
        )
        model = dtree.train_cart(
            train,
            max_depth=args.max_depth,
            min_leaf=args.min_leaf,
            seed=args.seed,
            tool_name=args.tool,
            task=task,
        )
        score = dtree.accuracy(model, test)
    except (EmptyMatrix, DegenerateSplit) as e:
        raise CliInputError(str(e)) from e

    model = replace(model, reported_accuracy=score.percent)
    Path(args.out_model).write_text(dtree.serialize_tree(model) + "\n", encoding="utf-8")
    print(f"test accuracy: {score.percent:.2f}% ({len(train.rows)} train / {len(test.rows)} test rows)")
    print(f"model -> {args.out_model}")
    return EXIT_OK


def _parse_cohort(spec: str, records) -> report.Cohort:
    if "=" in spec:
        predicate = {}
        for part in spec.split(","):
            if "=" not in part:
                raise CliConfigError(f"bad cohort term {part!r}, want key=value")
            key, _, value = part.partition("=")
            predicate[key.strip()] = value.strip()
        try:
            return report.make_cohort(spec, predicate, records)
        except ValueError as e:
            raise CliConfigError(str(e)) from e
    if spec not in report.COHORT_PRESETS:
        raise CliConfigError(
            f"unknown cohort {spec!r}; presets: {', '.join(report.COHORT_PRESETS)}"
        )
    return report.make_cohort(spec, report.COHORT_PRESETS[spec], records)


def cmd_report(args) -> int:
    records = _load_results(args.results)
    tool_order = args.tools.split(",") if args.tools else None
    try:
        if args.table == "success":
            cohort = _parse_cohort(args.cohort, records)
            table = report.success_table(records, cohort, tool_order)
        elif args.table == "comparative":
            table = report.comparative_average(
                records,
                metric=args.metric,
                tool_order=tool_order,
                mean_of_ratios=args.mean_of_ratios,
            )
        elif args.table == "size":
            table = _size_table(args, records)
        else:  # sections
            table = _sections_table(args, records)
    except UnknownTool as e:
        raise CliInputError(str(e)) from e
    print(report.render(table, args.format))
    return EXIT_OK


class _MapTable:
    """Adapter so plain {name: pct|None} maps render like other tables."""

    def __init__(self, key_label: str, values: dict[str, float | None]):
        self.key_label = key_label
        self.values = values

    def to_rows(self):
        rows = [[self.key_label, "pct"]]
        rows += [[k, fmt_pct(v)] for k, v in self.values.items()]
        return rows

    def to_json_obj(self):
        return self.values


def _original_paths(args) -> dict[str, str]:
    if not args.manifest:
        raise CliConfigError("--manifest is required for this table")
    return {e.binary_id: e.path for e in _load_manifest(args.manifest)}


def _size_table(args, records) -> _MapTable:
    paths = _original_paths(args)
    pairs = []
    for r in records:
        if not report.default_success_filter(r) or r.output_size_bytes is None:
            continue
        path = paths.get(r.binary_id)
        if path is None or not os.path.isfile(path):
            continue
        pairs.append((r.tool_name, os.path.getsize(path), r.output_size_bytes))
    return _MapTable("tool", report.relative_size(pairs))


def _sections_table(args, records) -> report.SectionSizeTable:
    if not args.outputs:
        raise CliConfigError("--outputs DIR (from run --keep-outputs) is required")
    paths = _original_paths(args)
    pairs = []
    for r in records:
        if not report.default_success_filter(r):
            continue
        original = paths.get(r.binary_id)
        rewritten = os.path.join(
            args.outputs, f"{r.binary_id}__{r.tool_name}__{r.task.value}"
        )
        if original is None or not os.path.isfile(original) or not os.path.isfile(rewritten):
            continue
        try:
            before = _profile_path(original)
            after = _profile_path(rewritten)
        except (MalformedElf, Unsupported):
            continue  # broken section tables cannot be profiled
        pairs.append((r.tool_name, before, after))
    return report.section_size_table(pairs)


def _profile_path(path: str):
    data = _read_binary(path)
    return size_profile(parse_elf(data), len(data))


def build_parser() -> _Parser:
    parser = _Parser(prog="rweval", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scope", help="predict which rewriters can handle a binary")
    p.add_argument("path")
    p.add_argument("--models", default=None, metavar="DIR",
                   help="directory of tree JSON files (default: built-in models)")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_scope)

    p = sub.add_parser("features", help="print a binary's boolean feature vector")
    p.add_argument("path")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("size", help="byte attribution profile, or delta of two files")
    p.add_argument("path")
    p.add_argument("path2", nargs="?", default=None)
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.set_defaults(func=cmd_size)

    p = sub.add_parser("run", help="execute a rewriting campaign")
    p.add_argument("--manifest", required=True)
    p.add_argument("--adapters", required=True)
    p.add_argument("--out", required=True, metavar="CSV")
    p.add_argument("--tasks", default="NOP,AFL")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--timeout-s", type=float, default=harness.DEFAULT_TIMEOUT_S)
    p.add_argument("--afl-driver", default=None,
                   help="driver command template with {target}")
    p.add_argument("--keep-outputs", default=None, metavar="DIR")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("train", help="train a success predictor from results")
    p.add_argument("--results", required=True, metavar="CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--tool", required=True)
    p.add_argument("--task", choices=[t.value for t in Task], default=Task.AFL.value)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--min-support", type=int, default=2)
    p.add_argument("--max-support-fraction", type=float, default=1.0)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--out-model", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("report", help="aggregate results into tables")
    p.add_argument("results", metavar="CSV")
    p.add_argument("--table", choices=("success", "comparative", "size", "sections"),
                   default="success")
    p.add_argument("--cohort", default="full",
                   help="preset name or key=value[,key=value...]")
    p.add_argument("--metric", choices=report.METRICS, default="runtime_s")
    p.add_argument("--tools", default=None, help="comma-separated tool order")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--ratio-of-means", dest="mean_of_ratios",
                      action="store_false", help="comparative cells as ratio of "
                      "per-tool means over the intersection (default)")
    mode.add_argument("--mean-of-ratios", dest="mean_of_ratios",
                      action="store_true",
                      help="comparative cells as mean of per-binary ratios")
    p.set_defaults(mean_of_ratios=False)
    p.add_argument("--manifest", default=None)
    p.add_argument("--outputs", default=None, metavar="DIR")
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except CliConfigError as e:
        print(f"rweval: {e}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        return args.func(args)
    except CliConfigError as e:
        print(f"rweval: {e}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (CliInputError, MalformedElf, Unsupported) as e:
        print(f"rweval: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except RwevalError as e:
        print(f"rweval: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except BrokenPipeError:
        return EXIT_INTERNAL
    except Exception as e:  # noqa: BLE001 - last-resort mapping to exit 1
        print(f"rweval: internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
