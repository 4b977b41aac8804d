"""The release checklist: one test per numbered acceptance criterion.

Each criterion ends with a printed `criterion N PASS` line, so running this
module with `-v -s` doubles as the checklist transcript. Criterion 2 needs
the released review corpora and the CR decisions file; it is conditional on
an environment variable and skips with an explanation otherwise, because
those counts cannot be desk-checked from synthetic fixtures.

The checklist:
  1. partition algebra on a synthetic corpus (exact sizes, composition,
     byte-identical rebuild, under five seconds)
  2. partition algebra on the released corpora (conditional)
  3. the trimmed-mean test against independent statistical oracles
  4. macro-F1 against confusion-matrix brute force, exhaustively
  5. rendered prompts byte-match the golden files
  6. the end-to-end mock pipeline: determinism, kill-resume, golden report
  7. externally produced run records reproduce derived statistics exactly
"""

from __future__ import annotations

import itertools
import json
import os
import random
import subprocess
import sys
import time
from collections import Counter
from pathlib import Path

import pytest

from alsc_cr import runstore
from alsc_cr.bundles import build_alsc_cr, index_by_id, write_manifest, read_manifest
from alsc_cr.cli import main as cli_main
from alsc_cr.labeling import PronounLexicon
from alsc_cr.prompts import render_alsc, render_dpr, write_prompts
from alsc_cr.records import AuxTask, CrState, Polarity, read_corpus, write_corpus
from alsc_cr.runstore import RunRecord, RunStore, record_to_dict, run_id_for
from alsc_cr.stats import macro_f1, student_t_two_sided_p, yuen_welch

from helpers import corpus_e2e, corpus_exact, write_aux_file
from test_prompts import GOLDEN_DIR, GOLDEN_EXAMPLES, render_fixture
from test_stats import (
    DF_GRID,
    T_GRID,
    macro_f1_oracle,
    p_value_oracle,
    random_pairs,
    welch_oracle,
)

GOLDEN_E2E = Path(__file__).parent / "golden" / "e2e"

REAL_DATA_ENV = "ALSC_CR_REAL_DATA"


def run_cli(*argv) -> int:
    return cli_main([str(a) for a in argv])


# ---------------------------------------------------------------------------
# 1. partition algebra, synthetic


def test_criterion_1_partition_algebra_on_a_synthetic_corpus(tmp_path):
    corpus = corpus_exact()
    started = time.monotonic()
    bundle = build_alsc_cr(corpus, seed=7)
    elapsed = time.monotonic() - started
    assert elapsed < 5.0

    # hand enumeration (see the corpus_exact docstring): the 10 confirmed CR
    # cases form the test set; val is 3 of the 20 heldout pronoun cases plus
    # 7 of the 14 MAMS Val cases; train is everything the quotas leave behind
    assert bundle.sizes() == {"train": 60, "val": 10, "test": 10}
    assert bundle.composition_report == {
        "test": {
            ("mams", "pronoun", "yes", "positive"): 4,
            ("rest16", "pronoun", "yes", "positive"): 6,
        },
        "val": {
            ("mams", "pronoun", "no", "negative"): 3,
            ("mams", "non_pronoun", "no", "neutral"): 7,
        },
        "train": {
            ("mams", "pronoun", "no", "negative"): 8,
            ("mams", "non_pronoun", "no", "neutral"): 32,
            ("rest16", "non_pronoun", "no", "neutral"): 20,
        },
    }

    confirmed = {it.instance_id for it in corpus if it.label.is_cr is CrState.YES}
    assert set(bundle.test) == confirmed
    taken = bundle.train + bundle.val + bundle.test
    assert len(taken) == len(set(taken))

    first, second = tmp_path / "a.json", tmp_path / "b.json"
    write_manifest(bundle, first)
    write_manifest(build_alsc_cr(corpus, seed=7), second)
    assert first.read_bytes() == second.read_bytes()

    # every sampled pool is homogeneous, so other seeds shift ids only
    assert build_alsc_cr(corpus, seed=11).composition_report == bundle.composition_report

    print(
        f"criterion 1 PASS: synthetic partitions 60/10/10 with the expected "
        f"composition, rebuilt byte-identically in {elapsed:.3f}s"
    )


# ---------------------------------------------------------------------------
# 2. partition algebra, real data (conditional)

TABLE_SIZES = {"train": 12_434, "val": 889, "test": 346}

POLARITY_TABLE = {
    "train": {"positive": 4_279, "negative": 3_065, "neutral": 5_090},
    "val": {"positive": 337, "negative": 222, "neutral": 330},
    "test": {"positive": 178, "negative": 122, "neutral": 46},
}

TEST_PRONOUN_TABLE = {
    "it": 132, "which": 59, "they": 54, "he": 24, "who": 19, "she": 17,
    "their": 14, "them": 12, "its": 10, "his": 10, "there": 10,
    "him": 5, "her": 5, "hers": 0,
}

REAL_DATA_FILES = (
    ("--rest16-train", "rest16_train.xml"),
    ("--rest16-val", "rest16_val.xml"),
    ("--rest16-test", "rest16_test.xml"),
    ("--mams-train", "mams_train.xml"),
    ("--mams-val", "mams_val.xml"),
    ("--mams-test", "mams_test.xml"),
)


def test_criterion_2_partition_algebra_on_the_released_corpora(tmp_path):
    root = os.environ.get(REAL_DATA_ENV)
    if not root:
        pytest.skip(
            "criterion 2 SKIP (conditional): reproducing the released sizes "
            "12,434 / 889 / 346 needs the raw review corpora and the CR "
            f"decisions; set {REAL_DATA_ENV} to a directory holding "
            "rest16_{train,val,test}.xml, mams_{train,val,test}.xml and "
            "decisions.tsv to enable this check"
        )
    data = Path(root)
    ingest_args = ["ingest", "--out", tmp_path / "instances.jsonl"]
    for flag, name in REAL_DATA_FILES:
        if (data / name).exists():
            ingest_args += [flag, data / name]
    assert run_cli(*ingest_args) == 0
    assert run_cli(
        "label",
        "--corpus", tmp_path / "instances.jsonl",
        "--out", tmp_path / "labeled.jsonl",
    ) == 0
    assert run_cli(
        "apply-decisions",
        "--corpus", tmp_path / "labeled.jsonl",
        "--decisions", data / "decisions.tsv",
        "--out", tmp_path / "reviewed.jsonl",
    ) == 0
    assert run_cli(
        "build",
        "--corpus", tmp_path / "reviewed.jsonl",
        "--seed", os.environ.get("ALSC_CR_BUILD_SEED", "0"),
        "--out-cr", tmp_path / "cr.json",
    ) == 0

    bundle = read_manifest(tmp_path / "cr.json")
    labeled = index_by_id(read_corpus(tmp_path / "reviewed.jsonl"))
    sizes = bundle.sizes()
    assert sizes["train"] == TABLE_SIZES["train"]
    assert sizes["test"] == TABLE_SIZES["test"]

    def polarity_counts(partition: str) -> dict[str, int]:
        counts = Counter(
            labeled[iid].instance.polarity.value for iid in bundle.partition(partition)
        )
        return {p.value: counts.get(p.value, 0) for p in Polarity}

    assert polarity_counts("train") == POLARITY_TABLE["train"]
    assert polarity_counts("test") == POLARITY_TABLE["test"]

    val_note = ""
    if sizes["val"] == TABLE_SIZES["val"]:
        assert polarity_counts("val") == POLARITY_TABLE["val"]
    else:
        # the validation quota depends on the sampling seed; the discrepancy
        # must be reported rather than silently accepted
        val_note = (
            f" NOTE: val came out at {sizes['val']} instead of 889 "
            "(re-sampling ambiguity); train and test matched exactly"
        )

    pronoun_counts = {form: 0 for form in PronounLexicon().entries}
    for iid in bundle.test:
        for form in {f.lower() for f, _ in labeled[iid].label.pronoun_occurrences}:
            pronoun_counts[form] += 1
    assert pronoun_counts == TEST_PRONOUN_TABLE

    print(
        "criterion 2 PASS: released corpora rebuild to the reference sizes, "
        "polarity distribution, and test-set pronoun distribution" + val_note
    )


# ---------------------------------------------------------------------------
# 3. statistics oracles


def test_criterion_3_trimmed_test_against_independent_oracles():
    for x, y in random_pairs(100):
        t_oracle, df_oracle = welch_oracle(x, y)
        result = yuen_welch(x, y, trim_gamma=0.0)
        assert abs(result.t_stat - t_oracle) <= 1e-10
        assert abs(result.deg_freedom - df_oracle) <= 1e-10
        assert abs(result.p_value - p_value_oracle(t_oracle, df_oracle)) <= 1e-10

    for gamma in (0.0, 0.1, 0.2):
        for x, y in random_pairs(10, seed=7):
            base = yuen_welch(x, y, trim_gamma=gamma)
            swapped = yuen_welch(y, x, trim_gamma=gamma)
            assert abs(base.t_stat + swapped.t_stat) <= 1e-10
            assert abs(base.p_value - swapped.p_value) <= 1e-10
            shifted = yuen_welch(
                [v + 13.5 for v in x], [v + 13.5 for v in y], trim_gamma=gamma
            )
            assert abs(base.t_stat - shifted.t_stat) <= 1e-10
            assert abs(base.p_value - shifted.p_value) <= 1e-10
            scaled = yuen_welch(
                [v * 3.25 for v in x], [v * 3.25 for v in y], trim_gamma=gamma
            )
            assert abs(base.t_stat - scaled.t_stat) <= 1e-10
            assert abs(base.p_value - scaled.p_value) <= 1e-10

    worst = 0.0
    for t in T_GRID:
        for df in DF_GRID:
            worst = max(worst, abs(student_t_two_sided_p(t, df) - p_value_oracle(t, df)))
    assert worst <= 1e-6

    print(
        "criterion 3 PASS: gamma=0 matches the Welch oracle to 1e-10 on 100 "
        "pairs, invariances hold to 1e-10, and the p-value grid is within "
        f"{worst:.2e} of numerical integration"
    )


# ---------------------------------------------------------------------------
# 4. metric oracle


def test_criterion_4_macro_f1_equals_confusion_matrix_brute_force():
    classes = (Polarity.POSITIVE, Polarity.NEGATIVE, Polarity.NEUTRAL)
    cell = {pair: i for i, pair in enumerate(itertools.product(classes, classes))}
    # the oracle is cached by confusion signature; the implementation under
    # test still runs once per (gold, prediction) pair
    oracle_by_signature: dict[tuple[int, ...], float] = {}
    checked = 0
    for length in range(1, 7):
        for gold in itertools.product(classes, repeat=length):
            for pred in itertools.product(classes, repeat=length):
                signature = [0] * 9
                for pair in zip(gold, pred):
                    signature[cell[pair]] += 1
                key = tuple(signature)
                expected = oracle_by_signature.get(key)
                if expected is None:
                    expected = oracle_by_signature[key] = macro_f1_oracle(pred, gold)
                assert macro_f1(pred, gold) == expected, (gold, pred)
                checked += 1
    assert checked == 597_870

    print(
        "criterion 4 PASS: macro-F1 equals brute force exactly on all "
        f"{checked:,} label sequence pairs of length <= 6"
    )


# ---------------------------------------------------------------------------
# 5. prompt golden files


def test_criterion_5_rendered_prompts_byte_match_the_golden_files(tmp_path):
    for name in sorted(GOLDEN_EXAMPLES):
        out = tmp_path / f"{name}.jsonl"
        write_prompts(render_fixture(name), out)
        assert out.read_bytes() == (GOLDEN_DIR / f"{name}.jsonl").read_bytes(), name

    sushi = render_alsc(GOLDEN_EXAMPLES["alsc"][0])
    assert sushi.input_text == (
        "get sentiment: $20 for good sushi cannot be beaten. aspect: sushi"
    )
    robots = render_dpr(GOLDEN_EXAMPLES["dpr"][0])
    assert robots.input_text == (
        "Get antecedent: Humans were afraid of robots as *they* were strong."
    )

    print(
        f"criterion 5 PASS: {len(GOLDEN_EXAMPLES)} prompt fixtures byte-match "
        "their golden files, including both worked examples"
    )


# ---------------------------------------------------------------------------
# 6. end-to-end mock pipeline

# Scripted abilities: chained models answer the sentiment words correctly
# when their chain passed through commongen (and only "superb" after qqp),
# and only commongen chains can name the antecedent in the probe prompts.
# Baselines have no chain, so they fall back to the majority target of the
# training bundle, whose targets tie 12/12/12 and resolve to "negative".
E2E_PROFILE = [
    {"pattern": "superb", "output": "positive",
     "when": {"has_init": True, "chain_contains": "aux:commongen"}},
    {"pattern": "stale", "output": "negative",
     "when": {"has_init": True, "chain_contains": "aux:commongen"}},
    {"pattern": "ordinary", "output": "neutral",
     "when": {"has_init": True, "chain_contains": "aux:commongen"}},
    {"pattern": "superb", "output": "positive",
     "when": {"has_init": True, "chain_contains": "aux:qqp"}},
    {"pattern": r"\*he\* grew", "output": "the farmer",
     "when": {"chain_contains": "aux:commongen"}},
]

# all test predictions correct
COMMONGEN_F1 = 100.0
# positives right, negatives right via the majority, neutrals wrong:
# per-class F1 1, 2/3, 0
QQP_F1 = 500.0 / 9.0
# everything predicted "negative": per-class F1 0, 1/2, 0
BASELINE_F1 = 100.0 / 6.0

SLOW_BACKEND = '''\
"""Mock trainer that naps through train calls, for mid-run kill tests."""
import json
import sys
import time

from alsc_cr.backend.mock import MockBackend, serve_stdio


class SlowTrainBackend(MockBackend):
    def handle(self, request):
        if request.get("op") == "train":
            time.sleep(0.1)
        return super().handle(request)


if __name__ == "__main__":
    with open(sys.argv[1], "r", encoding="utf-8") as fh:
        profile = json.load(fh)
    serve_stdio(SlowTrainBackend(skill_profile=profile))
'''


def e2e_workspace(root: Path) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    write_corpus(corpus_e2e(), root / "reviewed.jsonl")
    assert run_cli(
        "build",
        "--corpus", root / "reviewed.jsonl",
        "--seed", 0,
        "--out-cr", root / "cr.json",
        "--out-regular", root / "regular.json",
    ) == 0
    for task in (AuxTask.COMMONGEN, AuxTask.QQP):
        write_aux_file(task, 20, root / "aux" / f"{task.value}.train.jsonl")
        write_aux_file(task, 4, root / "aux" / f"{task.value}.val.jsonl", offset=1000)
    write_aux_file(AuxTask.DPR, 5, root / "aux" / "dpr.eval.jsonl")
    (root / "profile.json").write_text(json.dumps(E2E_PROFILE, indent=2), encoding="utf-8")
    config = {
        "output_dir": "store",
        "corpus": "reviewed.jsonl",
        "bundles": {"alsc_cr": "cr.json", "alsc_regular": "regular.json"},
        "aux_data": {
            "commongen": {"train": "aux/commongen.train.jsonl", "val": "aux/commongen.val.jsonl"},
            "qqp": {"train": "aux/qqp.train.jsonl", "val": "aux/qqp.val.jsonl"},
            "dpr": {"eval": "aux/dpr.eval.jsonl"},
        },
        "backend": {"kind": "mock", "skill_profile": "profile.json"},
        "sweep": {
            "aux_tasks": ["commongen", "qqp"],
            "fractions": [0.1, 0.5],
            "seeds": [0, 1, 2],
            "lr_grid_aux": [1e-4],
            "lr_grid_target": [5e-4],
            "small_scale": True,
        },
    }
    (root / "config.json").write_text(json.dumps(config, indent=2), encoding="utf-8")
    return root


def store_bytes(store_root: Path) -> dict[str, bytes]:
    files = {"index.json": (store_root / "index.json").read_bytes()}
    for path in sorted((store_root / "runs").glob("*.json")):
        files[f"runs/{path.name}"] = path.read_bytes()
    return files


def test_criterion_6_end_to_end_mock_pipeline(tmp_path):
    started = time.monotonic()
    ws = e2e_workspace(tmp_path / "a")
    assert run_cli("run", "--config", ws / "config.json") == 0
    elapsed = time.monotonic() - started
    assert elapsed < 60.0

    records = RunStore(ws / "store").records()
    kinds = Counter(r.kind for r in records)
    assert kinds == {"lrsel": 27, "baseline": 6, "sweep": 12, "probe": 5}
    assert all(r.status == "ok" for r in records)

    baseline_cr = [
        r for r in records if r.kind == "baseline" and r.eval_dataset == "ALSC-CR"
    ]
    assert [r.metric for r in baseline_cr] == [pytest.approx(BASELINE_F1)] * 3
    sweep = {
        (r.aux_task, r.fraction): r.metric for r in records if r.kind == "sweep"
    }
    by_cell = Counter(
        (r.aux_task, r.fraction) for r in records if r.kind == "sweep"
    )
    assert all(n == 3 for n in by_cell.values())
    for fraction in (0.1, 0.5):
        assert sweep[("commongen", fraction)] == COMMONGEN_F1
        assert sweep[("qqp", fraction)] == pytest.approx(QQP_F1)
    probes = {
        (r.aux_task, r.fraction): r.metric for r in records if r.kind == "probe"
    }
    assert probes == {
        (None, None): 0.0,
        ("commongen", 0.1): 100.0,
        ("commongen", 0.5): 100.0,
        ("qqp", 0.1): 0.0,
        ("qqp", 0.5): 0.0,
    }

    # rerun from scratch in a separate workspace: byte-identical store
    ws_b = e2e_workspace(tmp_path / "b")
    assert run_cli("run", "--config", ws_b / "config.json") == 0
    reference = store_bytes(ws / "store")
    assert store_bytes(ws_b / "store") == reference

    # kill a slowed run mid-sweep, then resume it with the normal backend
    ws_c = e2e_workspace(tmp_path / "c")
    script = ws_c / "slow_backend.py"
    script.write_text(SLOW_BACKEND, encoding="utf-8")
    slow = json.loads((ws_c / "config.json").read_text(encoding="utf-8"))
    slow["backend"] = {
        "kind": "stdio",
        "command": [sys.executable, str(script), str(ws_c / "profile.json")],
    }
    (ws_c / "config-slow.json").write_text(json.dumps(slow, indent=2), encoding="utf-8")
    proc = subprocess.Popen(
        [sys.executable, "-m", "alsc_cr.cli", "run",
         "--config", str(ws_c / "config-slow.json")],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    runs_dir = ws_c / "store" / "runs"
    try:
        deadline = time.monotonic() + 30.0
        while time.monotonic() < deadline:
            if len(list(runs_dir.glob("*.json"))) >= 8:
                break
            if proc.poll() is not None:
                pytest.fail("the slowed pipeline finished before it could be killed")
            time.sleep(0.02)
        proc.kill()
    finally:
        proc.wait(timeout=10)
    partial = len(list(runs_dir.glob("*.json")))
    assert 8 <= partial < len(reference) - 1  # genuinely interrupted
    assert run_cli("run", "--config", ws_c / "config.json") == 0
    assert store_bytes(ws_c / "store") == reference

    # the report over the finished store matches the golden table and plot
    out = ws / "report"
    assert run_cli(
        "report", "--store", ws / "store", "--out", out, "--min-seeds", 3
    ) == 0
    for name in ("results.md", "results.csv", "plot_data.json"):
        assert (out / name).read_bytes() == (GOLDEN_E2E / name).read_bytes(), name
    assert (out / "sweep.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    print(
        f"criterion 6 PASS: 2x2x3 sweep plus baseline and probe in {elapsed:.1f}s, "
        f"byte-identical rerun, resume after kill at {partial} records, "
        "report and plot data match the goldens"
    )


# ---------------------------------------------------------------------------
# 7. externally produced records

BASE_STD = 3.0276503540974917  # sample standard deviation of range(10)


def seeded_scores(mean: float, std: float) -> list[float]:
    """Ten per-seed scores with exactly this sample mean and deviation."""
    return [mean + std * (s - 4.5) / BASE_STD for s in range(10)]


def external_records() -> list[RunRecord]:
    """Per-seed scores shaped like a full-scale result sheet.

    The reference scale (a large encoder-decoder fine-tuned for days per
    sweep cell) is far outside a desk run, so these records stand in for a
    cluster's output: baseline 71.07 +- 2.60 on the CR bundle and 79.71 +-
    1.99 on the regular one, with sweep cells at 75.72 +- 1.14 and 76.10 +-
    1.26, and single-model probe scores alongside.
    """
    records = []
    for eval_dataset, mean, std in (
        ("ALSC-CR", 71.07, 2.60),
        ("ALSC-Regular", 79.71, 1.99),
    ):
        for seed, score in enumerate(seeded_scores(mean, std)):
            records.append(
                RunRecord(
                    run_id=run_id_for(runstore.baseline_coords(seed, eval_dataset)),
                    kind="baseline",
                    seed=seed,
                    lr_target=5e-4,
                    lineage=("target:baseline",),
                    eval_dataset=eval_dataset,
                    metric=score,
                    val_metric=70.0,
                )
            )
    for task, fraction, mean, std in (
        ("commongen", 0.1, 75.72, 1.14),
        ("qqp", 0.5, 76.10, 1.26),
    ):
        for seed, score in enumerate(seeded_scores(mean, std)):
            records.append(
                RunRecord(
                    run_id=run_id_for(runstore.sweep_coords(task, fraction, seed)),
                    kind="sweep",
                    aux_task=task,
                    fraction=fraction,
                    seed=seed,
                    lr_aux=1e-4,
                    lr_target=5e-4,
                    lineage=(f"aux:{task}", "target:alsc"),
                    eval_dataset="ALSC-CR",
                    metric=score,
                    val_metric=72.0,
                )
            )
    for task, fraction, score in (
        (None, None, 59.28),
        ("commongen", 0.1, 75.77),
        ("qqp", 0.5, 76.36),
    ):
        records.append(
            RunRecord(
                run_id=run_id_for(runstore.probe_coords(task, fraction)),
                kind="probe",
                aux_task=task,
                fraction=fraction,
                seed=0,
                lr_target=5e-4,
                lineage=("target:probe",),
                eval_dataset="DPR",
                metric=score,
                val_metric=70.0,
            )
        )
    return records


def test_criterion_7_external_run_records_reproduce_derived_statistics(tmp_path):
    # Full-scale training is not desk-reproducible and is out of scope here;
    # what this harness owes those runs is exact bookkeeping: ingest their
    # records, and the derived means, deviations, and significance marks
    # must follow from the per-seed scores alone.
    lines = [json.dumps(record_to_dict(r), sort_keys=True) for r in external_records()]
    sheet = tmp_path / "external.jsonl"
    sheet.write_text("\n".join(lines) + "\n", encoding="utf-8")
    store = tmp_path / "store"
    assert run_cli("import-runs", "--store", store, "--records", sheet) == 0

    first = tmp_path / "report-a"
    assert run_cli("report", "--store", store, "--out", first, "--no-figures") == 0
    table = (first / "results.md").read_text(encoding="utf-8")
    assert "71.07 (± 2.60)" in table
    assert "_75.72 (± 1.14) *_" in table
    assert "**76.10 (± 1.26) ***" in table
    assert "| 59.28" in table
    assert "| 75.77" in table
    assert "| 76.36" in table

    # the marks must agree with a direct run of the significance test on the
    # same per-seed scores
    baseline = seeded_scores(71.07, 2.60)
    for mean, std in ((75.72, 1.14), (76.10, 1.26)):
        check = yuen_welch(seeded_scores(mean, std), baseline)
        assert check.significant and check.p_value < 0.05

    # the regular-vs-CR gap is recoverable through the comparison command
    assert run_cli(
        "stats", "--store", store, "--compare", "baseline:baseline-regular",
        "--json-out", tmp_path / "gap.json",
    ) == 0
    gap = json.loads((tmp_path / "gap.json").read_text(encoding="utf-8"))
    assert gap["group_a"] == "baseline-regular"
    assert gap["significant"] is True
    assert gap["p_value"] < 1e-3

    # importing the same sheet again adds nothing and rerendering is stable
    assert run_cli("import-runs", "--store", store, "--records", sheet) == 0
    second = tmp_path / "report-b"
    assert run_cli("report", "--store", store, "--out", second, "--no-figures") == 0
    for name in ("results.md", "results.csv", "plot_data.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name

    print(
        "criterion 7 PASS: full-scale results are ingested, not recomputed; "
        "their means, deviations, and significance marks are reproduced "
        "exactly from per-seed scores"
    )
