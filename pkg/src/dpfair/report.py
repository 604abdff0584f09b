"""Aggregate run records into the comparison tables and write them to disk."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .experiment import (
    DP_MODELS,
    FOCAL_CELL,
    RECORD_FIELDS,
    RunRecord,
    record_from_row,
    record_to_row,
)
from .fairness import FairnessThresholds
from .stats import (
    SampleSummary,
    TTestResult,
    dummy_design,
    ols_fit,
    pooled_t_test,
    summarize,
)

MODEL_LABELS = {"snn": "S-NN", "dpnn": "DP-NN", "fnn": "F-NN", "dpfnn": "DPF-NN"}
TABLE_ORDER = ("snn", "dpnn", "fnn", "dpfnn")


@dataclass(frozen=True)
class BaselineConstants:
    """Published logistic-regression results (accuracy in percent), n = 10 seeds each."""

    accuracy: dict
    risk_difference: dict
    equivalent: dict
    n: int = 10

    def summary(self, name: str, metric: str) -> SampleSummary:
        mean, sd = getattr(self, metric)[name]
        return SampleSummary(self.n, mean, sd)


LR_BASELINES = BaselineConstants(
    accuracy={
        "LR": (83.80, 0.23),
        "PrivLR": (62.63, 14.80),
        "FairLR": (77.39, 5.21),
        "PFLR*": (74.91, 0.40),
    },
    risk_difference={
        "LR": (0.1577, 0.0064),
        "PrivLR": (0.0883, 0.0805),
        "FairLR": (0.0095, 0.0071),
        "PFLR*": (0.0028, 0.0039),
    },
    equivalent={"snn": "LR", "dpnn": "PrivLR", "fnn": "FairLR", "dpfnn": "PFLR*"},
)


class ReportError(ValueError):
    pass


@dataclass
class CellSummary:
    model: str
    epsilon: float | None
    delta: float | None
    accuracy: SampleSummary  # percent
    risk_difference: SampleSummary
    verdict: str


@dataclass
class ReportTable:
    records: list[RunRecord]
    cells: list[CellSummary]
    accuracy_tests: dict = field(default_factory=dict)  # (row, col) -> TTestResult
    rd_tests: dict = field(default_factory=dict)
    baseline_accuracy_tests: dict = field(default_factory=dict)  # model -> TTestResult
    baseline_rd_tests: dict = field(default_factory=dict)
    regressions: dict = field(default_factory=dict)  # (model, metric) -> (RegressionResult, names)
    failures: list[RunRecord] = field(default_factory=list)
    focal: tuple[float, float] = FOCAL_CELL

    def cell(self, model: str, epsilon=None, delta=None) -> CellSummary:
        for c in self.cells:
            if c.model == model and c.epsilon == epsilon and c.delta == delta:
                return c
        raise KeyError((model, epsilon, delta))


def _focal_key(model: str, focal) -> tuple:
    return (model, *focal) if model in DP_MODELS else (model, None, None)


def build_report(
    records: Sequence[RunRecord],
    baselines: BaselineConstants = LR_BASELINES,
    focal: tuple[float, float] = FOCAL_CELL,
    thresholds: FairnessThresholds = FairnessThresholds(),
) -> ReportTable:
    if not records:
        raise ReportError("no records to report")
    groups = defaultdict(list)
    failures = []
    for r in records:
        if r.ok:
            groups[r.cell].append(r)
        else:
            failures.append(r)
    too_small = [k for k, v in groups.items() if len(v) < 2]
    if too_small:
        raise ReportError(f"cells with fewer than 2 successful seeds: {sorted(too_small, key=str)}")
    if not groups:
        raise ReportError("every record failed")

    def order(key):
        m, e, d = key
        return (TABLE_ORDER.index(m), -1 if e is None else e, -1 if d is None else -d)

    cells = []
    samples = {}
    for key in sorted(groups, key=order):
        rs = groups[key]
        acc = [100.0 * r.test_accuracy for r in rs]
        rd = [r.test_risk_difference for r in rs]
        samples[key] = (acc, rd)
        rd_summary = summarize(rd)
        cells.append(CellSummary(*key, summarize(acc), rd_summary, thresholds.verdict(rd_summary.mean)))
    report = ReportTable(list(records), cells, failures=failures, focal=tuple(focal))
    by_key = {(c.model, c.epsilon, c.delta): c for c in cells}

    present = [m for m in TABLE_ORDER if _focal_key(m, focal) in by_key]
    for i, a in enumerate(present):
        ca = by_key[_focal_key(a, focal)]
        for b in present[i:]:
            cb = by_key[_focal_key(b, focal)]
            report.accuracy_tests[(a, b)] = pooled_t_test(ca.accuracy, cb.accuracy)
            report.rd_tests[(a, b)] = pooled_t_test(ca.risk_difference, cb.risk_difference)
        eq = baselines.equivalent[a]
        report.baseline_accuracy_tests[a] = pooled_t_test(ca.accuracy, baselines.summary(eq, "accuracy"))
        report.baseline_rd_tests[a] = pooled_t_test(ca.risk_difference, baselines.summary(eq, "risk_difference"))

    for model in DP_MODELS:
        keys = [k for k in by_key if k[0] == model]
        if not keys:
            continue
        eps_levels = sorted({k[1] for k in keys})
        delta_levels = sorted({k[2] for k in keys})
        missing = [(model, e, d) for e in eps_levels for d in delta_levels if (model, e, d) not in by_key]
        if missing:
            raise ReportError(f"incomplete (epsilon, delta) grid, missing cells: {missing}")
        factors = {}
        if len(eps_levels) > 1:
            factors["eps"] = [k[1] for k in keys]
        if len(delta_levels) > 1:
            factors["delta"] = [k[2] for k in keys]
        if not factors:
            continue
        X, names = dummy_design(factors)
        if X.shape[0] <= X.shape[1]:
            continue
        for metric in ("accuracy", "risk_difference"):
            y = [getattr(by_key[k], metric).mean for k in keys]
            report.regressions[(model, metric)] = (ols_fit(X, y), names)
    return report


# --- emission ---------------------------------------------------------------


def _fmt_level(value) -> str:
    return "" if value is None else f"{value:g}"


def _ttest_entry(t: TTestResult, digits: int) -> str:
    star = "*" if t.significant_at_05 else ""
    t_str = "inf" if t.infinite_t else f"{t.t_statistic:.1f}"
    return f"{t.mean_difference:.{digits}f}{star} ({t_str})"


def _markdown_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    fmt = lambda cells: "| " + " | ".join(str(c).ljust(w) for c, w in zip(cells, widths)) + " |"
    lines = [fmt(header), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    lines += [fmt(r) for r in rows]
    return "\n".join(lines)


def summary_markdown(report: ReportTable, baselines: BaselineConstants = LR_BASELINES) -> str:
    out = ["# Results", "", "## Per-cell summary (mean ± SD over seeds)", ""]
    rows = [
        [
            MODEL_LABELS[c.model],
            _fmt_level(c.epsilon),
            _fmt_level(c.delta),
            str(c.accuracy.n),
            f"{c.accuracy.mean:.2f} ± {c.accuracy.sd:.2f}",
            f"{c.risk_difference.mean:.4f} ± {c.risk_difference.sd:.4f}",
            c.verdict,
        ]
        for c in report.cells
    ]
    out.append(_markdown_table(["Model", "ε", "δ", "n", "Accuracy (%)", "Risk difference", "Verdict"], rows))

    out += ["", "## Baselines (logistic regression, published)", ""]
    rows = [
        [
            name,
            f"{baselines.accuracy[name][0]:.2f} ± {baselines.accuracy[name][1]:.2f}",
            f"{baselines.risk_difference[name][0]:.4f} ± {baselines.risk_difference[name][1]:.4f}",
        ]
        for name in ("LR", "PrivLR", "FairLR", "PFLR*")
    ]
    out.append(_markdown_table(["Model", "Accuracy (%)", "Risk difference"], rows))

    eps, delta = report.focal
    present = [m for m in TABLE_ORDER if any((m, b) in report.accuracy_tests for b in TABLE_ORDER)]
    for title, tests, btests, digits in (
        ("accuracy", report.accuracy_tests, report.baseline_accuracy_tests, 2),
        ("risk difference", report.rd_tests, report.baseline_rd_tests, 4),
    ):
        if not present:
            break
        out += [
            "",
            f"## Difference in mean {title} (row − column), pooled t-test, ε={eps:g}, δ={delta:g}",
            "",
            "`*` marks p < 0.05; t-statistic in brackets.",
            "",
        ]
        rows = []
        for a in present:
            row = [MODEL_LABELS[a]]
            for b in present:
                row.append(_ttest_entry(tests[(a, b)], digits) if (a, b) in tests else "")
            row.append(f"{baselines.equivalent[a]}: {_ttest_entry(btests[a], digits)}")
            rows.append(row)
        out.append(_markdown_table([""] + [MODEL_LABELS[m] for m in present] + ["Eq. model"], rows))

    if report.failures:
        out += ["", "## Failed cells", ""]
        for r in report.failures:
            out.append(f"- {r.model_kind} ε={r.epsilon} δ={r.delta} seed={r.seed}: {r.error}")
    return "\n".join(out) + "\n"


def regression_text(report: ReportTable) -> str:
    lines = []
    for (model, metric), (res, names) in report.regressions.items():
        lines.append(f"[{MODEL_LABELS[model]} {metric}]")
        for name, coef in zip(names, res.coefficients):
            lines.append(f"coef {name} = {coef:.6g}")
        lines.append(f"R2 = {res.r_squared:.4f}")
        lines.append(f"F({res.df_model},{res.df_residual}) = {res.f_statistic:.4f}")
        lines.append(f"p = {res.p_value:.4f}")
        lines.append("")
    if not lines:
        lines = ["no regression: fewer than two levels of epsilon/delta", ""]
    return "\n".join(lines)


def write_records(records: Sequence[RunRecord], path: str | Path) -> Path:
    """CSV with header ``RECORD_FIELDS``; empty cells mean 'not applicable'."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RECORD_FIELDS)
        writer.writeheader()
        for r in records:
            writer.writerow(record_to_row(r))
    return path


def read_records(path: str | Path) -> list[RunRecord]:
    with Path(path).open(newline="") as fh:
        return [record_from_row(row) for row in csv.DictReader(fh)]


def emit(report: ReportTable, out_dir: str | Path) -> list[Path]:
    if not report.records:
        raise ReportError("refusing to write an empty report")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [write_records(report.records, out_dir / "records.csv")]
        summary = out_dir / "summary.md"
        summary.write_text(summary_markdown(report))
        regression = out_dir / "regression.txt"
        regression.write_text(regression_text(report))
    except OSError as exc:
        raise OSError(f"cannot write report to {out_dir}: {exc}") from exc
    return paths + [summary, regression]
