"""Tables, plot data, and figures derived from a run store.

Emission is a pure function of the records plus the report parameters;
reports are golden-file tested byte for byte. Warnings (missing cells,
cells with too few seeds for a significance test) come back as sorted
text lines and are embedded in the rendered output.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import MissingCell, TooFewSamples
from .records import AuxTask, CaseKind
from .runstore import RunRecord
from .stats import (
    DEFAULT_ALPHA,
    DEFAULT_TRIM_GAMMA,
    PronounAccuracy,
    StatResult,
    accuracy_by_pronoun,
    aggregate,
    yuen_welch,
)
from .prompts import parse_alsc_output

logger = logging.getLogger(__name__)

PLOT_SCHEMA = "plot-data/1"
TASK_ORDER = tuple(t.value for t in AuxTask)
F1_VARIANT = "macro-F1 over present classes"

MARK_IMPROVED = "*"
MARK_DEGRADED = "†"


@dataclass(frozen=True)
class ReportSpec:
    formats: tuple[str, ...] = ("markdown", "csv", "json-plot")
    alpha: float = DEFAULT_ALPHA
    trim_gamma: float = DEFAULT_TRIM_GAMMA
    provenance: bool = False
    figures: bool = True
    min_seeds: int = 10  # cells below this are flagged


@dataclass
class ScoreTable:
    baseline_cr: dict[int, float] = field(default_factory=dict)  # seed -> metric
    baseline_regular: dict[int, float] = field(default_factory=dict)
    cells: dict[tuple[str, float], dict[int, float]] = field(default_factory=dict)
    probes: dict[tuple[str | None, float | None], RunRecord] = field(default_factory=dict)
    run_ids: dict[str, list[str]] = field(default_factory=dict)  # cell label -> run ids
    failures: list[str] = field(default_factory=list)


def cell_label(aux_task: str | None, fraction: float | None) -> str:
    if aux_task is None:
        return "baseline"
    return f"{aux_task}@{fraction:g}"


def collect_scores(records: Sequence[RunRecord]) -> ScoreTable:
    table = ScoreTable()
    for record in records:
        if record.kind == "probe":
            table.probes[(record.aux_task, record.fraction)] = record
            continue
        if record.kind not in ("baseline", "sweep"):
            continue
        label = (
            f"baseline/{record.eval_dataset}"
            if record.kind == "baseline"
            else cell_label(record.aux_task, record.fraction)
        )
        if record.status != "ok" or record.metric is None:
            table.failures.append(f"{label}: seed {record.seed} failed ({record.error})")
            continue
        table.run_ids.setdefault(label, []).append(record.run_id)
        if record.kind == "baseline":
            if record.eval_dataset == "ALSC-CR":
                table.baseline_cr[record.seed] = record.metric
            elif record.eval_dataset == "ALSC-Regular":
                table.baseline_regular[record.seed] = record.metric
        else:
            table.cells.setdefault((record.aux_task, record.fraction), {})[
                record.seed
            ] = record.metric
    table.failures.sort()
    return table


def scores_for(table: ScoreTable, spec: str) -> list[float]:
    """Resolve a cell spec like "baseline", "baseline-regular", "qqp@0.5"."""
    if spec in ("baseline", "baseline-cr"):
        seeds = table.baseline_cr
    elif spec in ("baseline-regular", "regular"):
        seeds = table.baseline_regular
    else:
        if "@" not in spec:
            raise MissingCell(f"cannot parse cell spec {spec!r}")
        task, _, fraction = spec.partition("@")
        try:
            seeds = table.cells[(task, float(fraction))]
        except (KeyError, ValueError):
            raise MissingCell(spec) from None
    if not seeds:
        raise MissingCell(spec)
    return [seeds[s] for s in sorted(seeds)]


def compare_cells(
    records: Sequence[RunRecord],
    spec_a: str,
    spec_b: str,
    trim_gamma: float = DEFAULT_TRIM_GAMMA,
    alpha: float = DEFAULT_ALPHA,
) -> StatResult:
    table = collect_scores(records)
    return yuen_welch(
        scores_for(table, spec_a),
        scores_for(table, spec_b),
        trim_gamma=trim_gamma,
        alpha=alpha,
        group_a=spec_a,
        group_b=spec_b,
    )


def _cell_stats(seed_scores: dict[int, float]) -> tuple[float, float | None, int]:
    values = [seed_scores[s] for s in sorted(seed_scores)]
    if len(values) == 1:
        return values[0], None, 1
    mean, std = aggregate(values)
    return mean, std, len(values)


def _marker(
    cell_scores: list[float],
    baseline_scores: list[float],
    trim_gamma: float,
    alpha: float,
    warnings: list[str],
    label: str,
) -> str:
    try:
        result = yuen_welch(
            cell_scores, baseline_scores, trim_gamma=trim_gamma, alpha=alpha,
            group_a=label, group_b="baseline",
        )
    except TooFewSamples:
        warnings.append(f"{label}: too few seeds for a significance test")
        return ""
    if not result.significant:
        return ""
    return MARK_IMPROVED if result.t_stat > 0 else MARK_DEGRADED


def _format_cell(mean: float, std: float | None, marker: str) -> str:
    text = f"{mean:.2f}" if std is None else f"{mean:.2f} (± {std:.2f})"
    return f"{text} {marker}".rstrip()


@dataclass
class ResultsTable:
    fractions: list[float]
    rows: list[tuple[str, list[str]]]  # (row label, one formatted cell per fraction)
    warnings: list[str]
    provenance: dict[str, list[str]]
    baseline_n: int


def build_results_table(
    records: Sequence[RunRecord],
    spec: ReportSpec = ReportSpec(),
) -> ResultsTable:
    """Rows = baseline plus each aux task; columns = fractions; cells =
    "mean (± std)" with significance markers against the baseline."""
    table = collect_scores(records)
    if not table.baseline_cr and not table.cells:
        raise MissingCell("run store has no evaluation runs")
    warnings = list(table.failures)

    fractions = sorted({fraction for _, fraction in table.cells})
    tasks = [t for t in TASK_ORDER if any(task == t for task, _ in table.cells)]

    baseline_scores = [table.baseline_cr[s] for s in sorted(table.baseline_cr)]
    rows: list[tuple[str, list[str]]] = []
    provenance: dict[str, list[str]] = {}
    cell_means: list[tuple[float, int, int]] = []  # (mean, row index, col index)

    if baseline_scores:
        mean, std, n = _cell_stats(table.baseline_cr)
        if n < spec.min_seeds:
            warnings.append(f"baseline: only {n} seeds")
        text = _format_cell(mean, std, "")
        rows.append(("baseline", [text for _ in fractions] or [text]))
        provenance["baseline"] = sorted(table.run_ids.get("baseline/ALSC-CR", []))
        cell_means.append((mean, 0, 0))
    else:
        warnings.append("baseline: no successful runs")

    for task in tasks:
        row_cells = []
        row_index = len(rows)
        for col_index, fraction in enumerate(fractions):
            seed_scores = table.cells.get((task, fraction))
            label = cell_label(task, fraction)
            if not seed_scores:
                warnings.append(f"{label}: missing cell")
                row_cells.append("")
                continue
            mean, std, n = _cell_stats(seed_scores)
            if n < spec.min_seeds:
                warnings.append(f"{label}: only {n} seeds")
            marker = ""
            if baseline_scores:
                scores = [seed_scores[s] for s in sorted(seed_scores)]
                marker = _marker(
                    scores, baseline_scores, spec.trim_gamma, spec.alpha, warnings, label
                )
            row_cells.append(_format_cell(mean, std, marker))
            provenance[label] = sorted(table.run_ids.get(label, []))
            cell_means.append((mean, row_index, col_index))
        rows.append((task, row_cells))

    # best/second-best annotations by mean, baseline counted once
    ranked = sorted(cell_means, key=lambda item: (-item[0], item[1], item[2]))
    best = ranked[0][1:] if ranked else None
    second = ranked[1][1:] if len(ranked) > 1 else None
    annotated: list[tuple[str, list[str]]] = []
    for row_index, (label, row_cells) in enumerate(rows):
        if label == "baseline" and best is not None and best[0] == row_index:
            row_cells = [f"**{c}**" if c else c for c in row_cells]
        elif label == "baseline" and second is not None and second[0] == row_index:
            row_cells = [f"_{c}_" if c else c for c in row_cells]
        else:
            row_cells = [
                f"**{cell}**"
                if best == (row_index, col) and cell
                else f"_{cell}_"
                if second == (row_index, col) and cell
                else cell
                for col, cell in enumerate(row_cells)
            ]
        annotated.append((label, row_cells))

    warnings.sort()
    return ResultsTable(
        fractions=fractions,
        rows=annotated,
        warnings=warnings,
        provenance=provenance,
        baseline_n=len(baseline_scores),
    )


def _markdown_table(header: list[str], body: list[list[str]]) -> str:
    widths = [len(h) for h in header]
    for row in body:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def fmt(row: list[str]) -> str:
        return "| " + " | ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) + " |"
    lines = [fmt(header), "| " + " | ".join("-" * w for w in widths) + " |"]
    lines.extend(fmt(row) for row in body)
    return "\n".join(lines)


def emit_results_table(
    records: Sequence[RunRecord],
    spec: ReportSpec = ReportSpec(),
    fmt: str = "markdown",
) -> str:
    built = build_results_table(records, spec)
    header = ["cell"] + [f"{f:g}" for f in built.fractions]
    if not built.fractions:
        header = ["cell", "score"]
    body = [[label] + cells for label, cells in built.rows]
    if fmt == "markdown":
        lines = [
            f"Mean {F1_VARIANT} (± std dev), "
            f"{MARK_IMPROVED} significant improvement / {MARK_DEGRADED} significant "
            f"deterioration vs baseline (alpha={spec.alpha:g}, trim={spec.trim_gamma:g})",
            "",
            _markdown_table(header, body),
        ]
        if built.warnings:
            lines += ["", "Notes:"] + [f"- {w}" for w in built.warnings]
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        def strip_marks(cell: str) -> str:
            return cell.strip(f"*_ {MARK_DEGRADED}")
        rows = [",".join(header)]
        rows += [
            ",".join([row[0]] + [f'"{strip_marks(c)}"' for c in row[1:]]) for row in body
        ]
        return "\n".join(rows) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")


def emit_sweep_plot_data(
    records: Sequence[RunRecord],
    spec: ReportSpec = ReportSpec(),
) -> dict:
    """One series per aux task: (fraction, mean, std) points, plus the
    baseline as a constant reference."""
    table = collect_scores(records)
    if not table.cells:
        raise MissingCell("run store has no sweep cells")
    if not table.baseline_cr:
        raise MissingCell("run store has no baseline runs")
    fractions = sorted({fraction for _, fraction in table.cells})
    base_mean, base_std, base_n = _cell_stats(table.baseline_cr)
    series = []
    for task in TASK_ORDER:
        cells = {f: table.cells[(t, f)] for t, f in table.cells if t == task}
        if not cells:
            continue
        points = []
        for fraction in fractions:
            if fraction not in cells:
                logger.warning("plot: %s has no cell at fraction %g", task, fraction)
                continue
            mean, std, n = _cell_stats(cells[fraction])
            points.append(
                {"fraction": fraction, "mean": mean, "std": std if std is not None else 0.0, "n": n}
            )
        series.append({"task": task, "points": points})
    return {
        "schema_version": PLOT_SCHEMA,
        "metric": F1_VARIANT,
        "baseline": {
            "mean": base_mean,
            "std": base_std if base_std is not None else 0.0,
            "n": base_n,
        },
        "series": series,
    }


def probe_table(records: Sequence[RunRecord], fmt: str = "markdown") -> str:
    """Pronoun-resolution probe scores per cell, one row per probe run."""
    table = collect_scores(records)
    body = []
    ordered = sorted(
        table.probes.items(),
        key=lambda item: (
            item[0][0] is not None,
            TASK_ORDER.index(item[0][0]) if item[0][0] else -1,
            item[0][1] or 0.0,
        ),
    )
    for (task, fraction), record in ordered:
        label = cell_label(task, fraction)
        if record.status != "ok" or record.metric is None:
            body.append([label, "failed", str(record.seed)])
            continue
        body.append([label, f"{record.metric:.2f}", str(record.seed)])
    header = ["cell", "antecedent accuracy", "selected seed"]
    if fmt == "markdown":
        if not body:
            return "No probe runs in store.\n"
        return _markdown_table(header, body) + "\n"
    if fmt == "csv":
        return "\n".join([",".join(header)] + [",".join(row) for row in body]) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")


def pronoun_table(
    record: RunRecord,
    labeled: dict,
    test_ids: Sequence[str],
    lexicon_order: Sequence[str],
) -> list[PronounAccuracy]:
    """Per-pronoun accuracy of one evaluation run on the CR test set."""
    golds = [labeled[iid].instance.polarity for iid in test_ids]
    parsed = [parse_alsc_output(o) for o in record.predictions]
    correct = [p is not None and p is g for p, g in zip(parsed, golds)]
    instance_pronouns = []
    for iid in test_ids:
        label = labeled[iid].label
        if label.kind is CaseKind.PRONOUN:
            instance_pronouns.append([form for form, _ in label.pronoun_occurrences])
        else:
            instance_pronouns.append([])
    return accuracy_by_pronoun(correct, instance_pronouns, lexicon_order)


def render_pronoun_table(rows: Sequence[PronounAccuracy]) -> str:
    body = []
    for row in rows:
        accuracy = "N/A" if row.accuracy_pct is None else f"{row.accuracy_pct:.2f}"
        analysed = "yes" if row.analysed else "no"
        body.append([row.pronoun, str(row.count), accuracy, analysed])
    return _markdown_table(["pronoun", "count", "accuracy", "analysed"], body) + "\n"


def render_figure(plot_data: dict, out_path: str | Path) -> Path:
    """Draw the sweep as fraction-vs-F1 error-bar series over a baseline band."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    baseline = plot_data["baseline"]
    fractions = sorted(
        {p["fraction"] for s in plot_data["series"] for p in s["points"]}
    ) or [0.0, 1.0]
    ax.axhline(baseline["mean"], color="gray", linestyle="--", label="baseline")
    ax.fill_between(
        [min(fractions), max(fractions)],
        baseline["mean"] - baseline["std"],
        baseline["mean"] + baseline["std"],
        color="gray",
        alpha=0.15,
    )
    for series in plot_data["series"]:
        xs = [p["fraction"] for p in series["points"]]
        ys = [p["mean"] for p in series["points"]]
        errs = [p["std"] for p in series["points"]]
        ax.errorbar(xs, ys, yerr=errs, marker="o", capsize=3, label=series["task"])
    ax.set_xlabel("auxiliary dataset fraction")
    ax.set_ylabel(plot_data.get("metric", "score"))
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def write_report(
    records: Sequence[RunRecord],
    out_dir: str | Path,
    spec: ReportSpec = ReportSpec(),
) -> list[Path]:
    """Render every requested format into out_dir; figures accompany the
    delimited outputs when enabled."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    plot_data = None
    if "markdown" in spec.formats:
        path = out_dir / "results.md"
        text = emit_results_table(records, spec, fmt="markdown")
        probe = probe_table(records, fmt="markdown")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.write("\nProbe (selected seed per cell):\n\n")
            fh.write(probe)
        written.append(path)
    if "csv" in spec.formats:
        path = out_dir / "results.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(emit_results_table(records, spec, fmt="csv"))
        written.append(path)
    if "json-plot" in spec.formats:
        plot_data = emit_sweep_plot_data(records, spec)
        path = out_dir / "plot_data.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(plot_data, fh, sort_keys=True, ensure_ascii=False, indent=2)
            fh.write("\n")
        written.append(path)
    if spec.provenance:
        built = build_results_table(records, spec)
        path = out_dir / "provenance.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(built.provenance, fh, sort_keys=True, indent=2)
            fh.write("\n")
        written.append(path)
    if spec.figures:
        if plot_data is None:
            try:
                plot_data = emit_sweep_plot_data(records, spec)
            except MissingCell:
                plot_data = None
        if plot_data is not None:
            written.append(render_figure(plot_data, out_dir / "sweep.png"))
    return written
