"""Command-line entry point.

Exit codes: 0 success, 1 runtime error (one machine-readable JSON error
line on stderr), 2 usage error (argparse help text).
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from pathlib import Path

from . import __version__
from .aux_corpora import load_aux_corpus
from .backend import protocol
from .backend.gateway import Gateway, make_client
from .bundles import (
    build_alsc_cr,
    build_alsc_regular,
    index_by_id,
    read_manifest,
    subset_fraction,
    write_manifest,
)
from .errors import AlscCrError, ConfigError
from .experiment import build_orchestrator, load_config, stages_from_config
from .ingest import clean, parse_mams_xml, parse_semeval_xml
from .labeling import (
    PronounLexicon,
    apply_decisions,
    classify_corpus,
    emit_annotation_queue,
    load_decisions,
)
from .prompts import render_alsc, render_aux, write_prompts
from .records import (
    AuxTask,
    SourceDataset,
    Split,
    read_corpus,
    read_instances,
    write_corpus,
    write_instances,
)
from .reporting import (
    ReportSpec,
    compare_cells,
    pronoun_table,
    render_pronoun_table,
    write_report,
)
from .runstore import RunStore, import_records, read_records_jsonl

logger = logging.getLogger(__name__)

_SPLIT_FLAGS = [
    ("rest16", SourceDataset.REST16, Split.TRAIN),
    ("rest16", SourceDataset.REST16, Split.VAL),
    ("rest16", SourceDataset.REST16, Split.TEST),
    ("mams", SourceDataset.MAMS, Split.TRAIN),
    ("mams", SourceDataset.MAMS, Split.VAL),
    ("mams", SourceDataset.MAMS, Split.TEST),
]


def _cmd_ingest(args) -> int:
    instances = []
    loaded_any = False
    for prefix, dataset, split in _SPLIT_FLAGS:
        path = getattr(args, f"{prefix}_{split.value}")
        if not path:
            continue
        loaded_any = True
        with open(path, "rb") as fh:
            data = fh.read()
        parser = parse_semeval_xml if dataset is SourceDataset.REST16 else parse_mams_xml
        reviews = parser(data, split)
        cleaned = clean(reviews)
        logger.info("%s %s: %d instances", dataset.value, split.value, len(cleaned))
        instances.extend(cleaned)
    if not loaded_any:
        raise ConfigError("ingest needs at least one corpus file flag")
    count = write_instances(instances, args.out)
    print(f"ingested {count} instances -> {args.out}")
    return 0


def _cmd_label(args) -> int:
    instances = read_instances(args.corpus)
    labeled = classify_corpus(instances, PronounLexicon())
    write_corpus(labeled, args.out)
    pronoun_cases = sum(1 for it in labeled if it.label.pronoun_occurrences)
    queued = emit_annotation_queue(labeled, args.queue) if args.queue else 0
    print(
        f"labeled {len(labeled)} instances ({pronoun_cases} pronoun cases) -> {args.out}"
        + (f"; queued {queued} for review -> {args.queue}" if args.queue else "")
    )
    return 0


def _cmd_apply_decisions(args) -> int:
    labeled = read_corpus(args.corpus)
    decisions = load_decisions(args.decisions)
    updated, counts = apply_decisions(labeled, decisions)
    write_corpus(updated, args.out)
    print(
        f"applied {len(decisions)} decisions: {counts['yes']} yes, "
        f"{counts['no']} no, {counts['unreviewed']} still unreviewed -> {args.out}"
    )
    return 0


def _cmd_build(args) -> int:
    labeled = read_corpus(args.corpus)
    bundle_cr = build_alsc_cr(
        labeled, args.seed, mams_val_all_cases=not args.mams_val_nonpronoun_only
    )
    digest_cr = write_manifest(bundle_cr, args.out_cr)
    sizes = bundle_cr.sizes()
    print(
        f"ALSC-CR: train {sizes['train']} / val {sizes['val']} / test {sizes['test']}"
        f" (digest {digest_cr[:12]}) -> {args.out_cr}"
    )
    if args.out_regular:
        bundle_reg = build_alsc_regular(labeled, args.seed, bundle_cr)
        digest_reg = write_manifest(bundle_reg, args.out_regular)
        sizes = bundle_reg.sizes()
        print(
            f"ALSC-Regular: train {sizes['train']} / val {sizes['val']} / test {sizes['test']}"
            f" (digest {digest_reg[:12]}) -> {args.out_regular}"
        )
    return 0


def _cmd_render(args) -> int:
    if args.aux:
        task = AuxTask(args.aux)
        records = load_aux_corpus(task, args.data, split=Split(args.split))
        if args.fraction != 1.0:
            records = subset_fraction(records, args.fraction, args.seed)
        count = write_prompts((render_aux(r) for r in records), args.out)
    else:
        if not args.bundle or not args.corpus:
            raise ConfigError("rendering a bundle partition needs --corpus and --bundle")
        labeled = index_by_id(read_corpus(args.corpus))
        bundle = read_manifest(args.bundle)
        examples = [
            render_alsc(labeled[iid].instance) for iid in bundle.partition(args.partition)
        ]
        count = write_prompts(examples, args.out)
    print(f"rendered {count} prompts -> {args.out}")
    return 0


def _cmd_run(args) -> int:
    config, base_dir = load_config(args.config)
    override = {"kind": args.backend_kind} if args.backend_kind else None
    orchestrator, gateway = build_orchestrator(config, base_dir, backend_override=override)
    if args.stages:
        override = [s.strip() for s in args.stages.split(",")]
        stages = stages_from_config({**config, "stages": override})
    else:
        stages = stages_from_config(config)
    try:
        records = orchestrator.run_all(stages)
    finally:
        gateway.close()
    ok = sum(1 for r in records if r.status == "ok")
    failed = len(records) - ok
    print(f"run complete: {ok} runs ok, {failed} failed, store at {orchestrator.store.root}")
    return 0 if failed == 0 else 1


def _cmd_stats(args) -> int:
    store = RunStore(args.store)
    spec_a, _, spec_b = args.compare.partition(":")
    if not spec_b:
        raise ConfigError("--compare expects 'cellA:cellB', e.g. baseline:qqp@0.5")
    result = compare_cells(
        store.records(), spec_b, spec_a, trim_gamma=args.gamma, alpha=args.alpha
    )
    payload = result.to_dict()
    print(json.dumps(payload, sort_keys=True, indent=2))
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return 0


def _cmd_report(args) -> int:
    store = RunStore(args.store)
    spec = ReportSpec(
        formats=tuple(args.formats.split(",")),
        alpha=args.alpha,
        trim_gamma=args.gamma,
        provenance=args.provenance,
        figures=not args.no_figures,
        min_seeds=args.min_seeds,
    )
    written = write_report(store.records(), args.out, spec)
    if args.pronouns:
        record = store.get(args.pronouns)
        if record is None:
            raise ConfigError(f"run {args.pronouns!r} not in store")
        if not args.corpus or not args.bundle:
            raise ConfigError("--pronouns needs --corpus and --bundle for gold labels")
        labeled = index_by_id(read_corpus(args.corpus))
        bundle = read_manifest(args.bundle)
        rows = pronoun_table(record, labeled, bundle.test, PronounLexicon().entries)
        path = Path(args.out) / "pronouns.md"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(render_pronoun_table(rows))
        written.append(path)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_import_runs(args) -> int:
    store = RunStore(args.store)
    records = read_records_jsonl(args.records)
    added = import_records(store, records)
    print(f"imported {added} of {len(records)} records into {args.store}")
    return 0


def _cmd_backend_check(args) -> int:
    """Protocol conformance: ping, toy train, predict, error shapes."""
    import tempfile

    backend_cfg: dict = {"kind": args.backend_kind}
    if args.command:
        backend_cfg["command"] = shlex.split(args.command)
    if args.endpoint:
        backend_cfg["endpoint"] = args.endpoint
    if args.timeout:
        backend_cfg["timeout"] = args.timeout
    gateway = Gateway(make_client(backend_cfg))
    failures = []

    def check(name: str, fn):
        try:
            fn()
            print(f"PASS {name}")
        except Exception as exc:  # noqa: BLE001 - report every failure kind
            failures.append(name)
            print(f"FAIL {name}: {exc}")

    with tempfile.TemporaryDirectory() as tmp:
        train_path = Path(tmp) / "toy.train.jsonl"
        val_path = Path(tmp) / "toy.val.jsonl"
        pairs = [
            {"input": f"get sentiment: toy sentence {i}. aspect: thing", "target": t,
             "origin_id": f"toy-{i}", "task": "alsc"}
            for i, t in enumerate(["positive", "negative", "positive", "neutral"])
        ]
        for path, rows in ((train_path, pairs), (val_path, pairs[:2])):
            with open(path, "w", encoding="utf-8") as fh:
                for row in rows:
                    fh.write(json.dumps(row, sort_keys=True) + "\n")

        handle = {}

        check("ping", lambda: gateway.ping() or (_ for _ in ()).throw(RuntimeError("ping not ok")))

        def do_train():
            job = protocol.TrainJob(
                job_id="check:toy",
                train_path=str(train_path),
                val_path=str(val_path),
                hyperparams={"learning_rate": 1e-4, "max_epochs": 2},
                seed=0,
            )
            handle["model"] = gateway.train(job)

        check("train", do_train)

        def do_predict():
            outputs = gateway.predict(
                handle["model"].model_id, [p["input"] for p in pairs[:3]]
            )
            if len(outputs) != 3:
                raise RuntimeError(f"expected 3 outputs, got {len(outputs)}")

        check("predict", do_predict)

        def do_empty_predict():
            if gateway.predict(handle["model"].model_id, []) != []:
                raise RuntimeError("empty input list must yield empty output list")

        check("predict-empty", do_empty_predict)

        def do_unknown_model():
            try:
                gateway.predict("no-such-model", ["x"])
            except AlscCrError as exc:
                if exc.code != "UnknownModel":
                    raise RuntimeError(f"expected UnknownModel, got {exc.code}") from exc
                return
            raise RuntimeError("predicting on an unknown model must fail")

        check("error-unknown-model", do_unknown_model)

        def do_bad_init():
            try:
                gateway.train(
                    protocol.TrainJob(
                        job_id="check:bad-init",
                        train_path=str(train_path),
                        val_path=str(val_path),
                        hyperparams={"learning_rate": 1e-4, "max_epochs": 1},
                        seed=0,
                        init_from="no-such-model",
                    )
                )
            except AlscCrError as exc:
                if exc.code not in ("TrainFailed",):
                    raise RuntimeError(f"expected TrainFailed, got {exc.code}") from exc
                return
            raise RuntimeError("training from an unknown init_from must fail")

        check("error-bad-init", do_bad_init)

    gateway.close()
    print(f"backend-check: {6 - len(failures)}/6 passed")
    return 0 if not failures else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alsc-cr",
        description=(
            "Build coreference-focused aspect-sentiment benchmarks, run "
            "auxiliary-task fine-tuning sweeps, and report multi-seed statistics."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="INFO-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and clean raw corpus XML into instance records")
    for prefix, _, split in _SPLIT_FLAGS:
        p.add_argument(f"--{prefix}-{split.value}", help=f"{prefix} {split.value} XML file")
    p.add_argument("--out", required=True, help="output instances JSONL")
    p.set_defaults(fn=_cmd_ingest)

    p = sub.add_parser("label", help="detect pronoun cases and emit the review queue")
    p.add_argument("--corpus", required=True, help="instances JSONL from ingest")
    p.add_argument("--out", required=True, help="labeled corpus JSONL")
    p.add_argument("--queue", help="TSV review queue for unreviewed pronoun cases")
    p.set_defaults(fn=_cmd_label)

    p = sub.add_parser("apply-decisions", help="merge reviewed CR verdicts into the corpus")
    p.add_argument("--corpus", required=True, help="labeled corpus JSONL")
    p.add_argument("--decisions", required=True, help="decisions TSV")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_apply_decisions)

    p = sub.add_parser("build", help="assemble the CR-focused and regular bundles")
    p.add_argument("--corpus", required=True, help="labeled corpus JSONL with CR verdicts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-cr", required=True, help="CR bundle manifest path")
    p.add_argument("--out-regular", help="regular bundle manifest path")
    p.add_argument(
        "--mams-val-nonpronoun-only",
        action="store_true",
        help="narrow the 50%% validation pool to non-pronoun cases on the MAMS side too",
    )
    p.set_defaults(fn=_cmd_build)

    p = sub.add_parser("render", help="render prompt files for a bundle partition or aux task")
    p.add_argument("--corpus", help="labeled corpus JSONL (bundle mode)")
    p.add_argument("--bundle", help="bundle manifest (bundle mode)")
    p.add_argument("--partition", choices=["train", "val", "test"], default="train")
    p.add_argument("--aux", choices=[t.value for t in AuxTask], help="aux task (aux mode)")
    p.add_argument("--data", help="aux source JSONL (aux mode)")
    p.add_argument("--split", choices=[s.value for s in Split], default="train")
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_render)

    p = sub.add_parser("run", help="execute baseline, sweep, and probe stages per config")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--backend-kind", choices=["mock", "stdio", "http"])
    p.add_argument("--stages", help="comma-separated subset of baseline,sweep,probe")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("stats", help="significance test between two run-store cells")
    p.add_argument("--store", required=True, help="run store directory")
    p.add_argument("--compare", required=True, help="cellA:cellB, e.g. baseline:qqp@0.5")
    p.add_argument("--gamma", type=float, default=0.2, help="trim proportion")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--json-out", help="also write the result JSON here")
    p.set_defaults(fn=_cmd_stats)

    p = sub.add_parser("report", help="emit result tables, plot data, and figures")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--formats", default="markdown,csv,json-plot")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--gamma", type=float, default=0.2)
    p.add_argument("--min-seeds", type=int, default=10, help="flag cells below this")
    p.add_argument("--provenance", action="store_true", help="write contributing run ids")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.add_argument("--pronouns", metavar="RUN_ID", help="per-pronoun accuracy for one run")
    p.add_argument("--corpus", help="labeled corpus (for --pronouns)")
    p.add_argument("--bundle", help="CR bundle manifest (for --pronouns)")
    p.set_defaults(fn=_cmd_report)

    p = sub.add_parser("import-runs", help="append externally produced run records")
    p.add_argument("--store", required=True)
    p.add_argument("--records", required=True, help="JSONL of run records")
    p.set_defaults(fn=_cmd_import_runs)

    p = sub.add_parser("backend-check", help="protocol conformance against a backend")
    p.add_argument("--backend-kind", default="mock", choices=["mock", "stdio", "http"])
    p.add_argument("--command", help="backend command line (stdio), e.g. 'python3 -m my_backend'")
    p.add_argument("--endpoint", help="backend URL (http)")
    p.add_argument("--timeout", type=float)
    p.set_defaults(fn=_cmd_backend_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.fn(args)
    except AlscCrError as exc:
        print(
            json.dumps({"ok": False, "code": exc.code, "message": exc.message}),
            file=sys.stderr,
        )
        return 1
    except OSError as exc:
        print(
            json.dumps({"ok": False, "code": "IOError", "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
