"""Agreement and accuracy metrics, plus report table rendering.

Percentages are rendered with round-half-up at the displayed precision.
Totals rows are computed from summed raw counts, never from averaged
percentages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .errors import LengthMismatch, MissingJudgment, PartialCoverage


def round_half_up(value: float | Decimal, decimals: int) -> Decimal:
    quantum = Decimal(1).scaleb(-decimals)
    return Decimal(value).quantize(quantum, rounding=ROUND_HALF_UP)


def format_pct(numerator: int, denominator: int, decimals: int) -> str:
    """Render numerator/denominator as a percentage string, half-up rounded."""
    if denominator == 0:
        ratio = Decimal(0)
    else:
        ratio = Decimal(numerator) * 100 / Decimal(denominator)
    return str(round_half_up(ratio, decimals))


# --- Cohen's kappa -----------------------------------------------------------

@dataclass
class AgreementReport:
    kappa: float
    observed: float
    expected: float
    n: int


def cohen_kappa(a: list[bool], b: list[bool]) -> AgreementReport:
    """Two-rater binary Cohen's kappa.

    Degenerate cases (the standard formula divides by zero when expected
    agreement is 1): both raters constant and equal -> kappa = 1; both
    constant and unequal -> kappa = -1, the limit of the formula as the
    vectors approach constant total disagreement.
    """
    if len(a) != len(b):
        raise LengthMismatch(f"vectors of length {len(a)} and {len(b)}")
    if not a:
        raise LengthMismatch("vectors must be non-empty")
    n = len(a)
    tt = sum(1 for x, y in zip(a, b) if x and y)
    ff = sum(1 for x, y in zip(a, b) if not x and not y)
    p_o = (tt + ff) / n
    pa_true = sum(a) / n
    pb_true = sum(b) / n
    p_e = pa_true * pb_true + (1 - pa_true) * (1 - pb_true)
    a_constant = pa_true in (0.0, 1.0)
    b_constant = pb_true in (0.0, 1.0)
    if a_constant and b_constant:
        kappa = 1.0 if pa_true == pb_true else -1.0
    else:
        kappa = (p_o - p_e) / (1 - p_e)
    return AgreementReport(kappa=kappa, observed=p_o, expected=p_e, n=n)


# --- accuracy ----------------------------------------------------------------

@dataclass
class AccuracyReport:
    accuracy: float
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def rendered(self) -> str:
        """Percentage at 2 decimals, as printed in the result matrices."""
        return format_pct(self.tp + self.tn, self.n, 2)


def accuracy(decisions: dict[str, bool], reference: dict[str, bool]) -> AccuracyReport:
    """Confusion counts of predicted decisions against reference decisions."""
    tp = tn = fp = fn = 0
    for criterion_id, ref in reference.items():
        if criterion_id not in decisions:
            raise MissingJudgment(criterion_id)
        pred = decisions[criterion_id]
        if pred and ref:
            tp += 1
        elif not pred and not ref:
            tn += 1
        elif pred and not ref:
            fp += 1
        else:
            fn += 1
    n = tp + tn + fp + fn
    return AccuracyReport(
        accuracy=(tp + tn) / n if n else 0.0, tp=tp, tn=tn, fp=fp, fn=fn
    )


# --- failed-criteria ratio table ----------------------------------------------

@dataclass
class FailedRatioRow:
    station_id: str
    criterion_count: int
    failed_unperturbed: int
    failed_perturbed: int

    def pct_unperturbed(self) -> str:
        return format_pct(self.failed_unperturbed, self.criterion_count, 1)

    def pct_perturbed(self) -> str:
        return format_pct(self.failed_perturbed, self.criterion_count, 1)


@dataclass
class FailedRatioTable:
    rows: list[FailedRatioRow] = field(default_factory=list)

    def totals(self) -> FailedRatioRow:
        return FailedRatioRow(
            station_id="Total",
            criterion_count=sum(r.criterion_count for r in self.rows),
            failed_unperturbed=sum(r.failed_unperturbed for r in self.rows),
            failed_perturbed=sum(r.failed_perturbed for r in self.rows),
        )


def failed_ratio(
    stations: dict[str, int],
    unperturbed: dict[str, dict[str, bool]],
    perturbed: dict[str, dict[str, bool]],
) -> FailedRatioTable:
    """Per-station failed-criteria proportions for both corpora.

    ``stations`` maps station id to criterion count; the label dicts map
    station id to {criterion id: decision}.  Every station must be fully
    covered in both corpora.
    """
    table = FailedRatioTable()
    for station_id in sorted(stations):
        count = stations[station_id]
        for labels in (unperturbed, perturbed):
            if station_id not in labels or len(labels[station_id]) != count:
                raise PartialCoverage(station_id)
        table.rows.append(
            FailedRatioRow(
                station_id=station_id,
                criterion_count=count,
                failed_unperturbed=sum(
                    1 for v in unperturbed[station_id].values() if not v
                ),
                failed_perturbed=sum(
                    1 for v in perturbed[station_id].values() if not v
                ),
            )
        )
    return table


# --- result matrix -----------------------------------------------------------

STRATEGY_ORDER = ["zero-shot", "few-shot", "multi-step"]
TOOL_ORDER = ["direct", "CD", "MD", "CD+MD"]


@dataclass
class ResultMatrix:
    """Accuracy percentages keyed by (model, strategy, tool config)."""

    corpus: str
    cells: dict[tuple[str, str, str], str] = field(default_factory=dict)

    def set(self, model: str, strategy: str, tools: str, rendered: str) -> None:
        self.cells[(model, strategy, tools)] = rendered

    def models(self) -> list[str]:
        return sorted({model for model, _, _ in self.cells})


# --- rendering ---------------------------------------------------------------

def render_failed_ratio(table: FailedRatioTable) -> tuple[str, str]:
    """(markdown, csv) renderings of the failed-ratio table."""
    totals = table.totals()
    md = [
        "| Station ID | Criteria | Failed unperturbed | Failed perturbed |",
        "| --- | --- | --- | --- |",
    ]
    csv = ["station_id,criteria,failed_unperturbed_pct,failed_perturbed_pct"]
    for row in table.rows:
        md.append(
            f"| {row.station_id} | {row.criterion_count} "
            f"| {row.pct_unperturbed()}% | {row.pct_perturbed()}% |"
        )
        csv.append(
            f"{row.station_id},{row.criterion_count},"
            f"{row.pct_unperturbed()},{row.pct_perturbed()}"
        )
    md.append(
        f"| **{totals.station_id}** | **{totals.criterion_count}** "
        f"| **{totals.pct_unperturbed()}%** | **{totals.pct_perturbed()}%** |"
    )
    csv.append(
        f"{totals.station_id},{totals.criterion_count},"
        f"{totals.pct_unperturbed()},{totals.pct_perturbed()}"
    )
    return "\n".join(md) + "\n", "\n".join(csv) + "\n"


def render_matrix(matrix: ResultMatrix) -> tuple[str, str]:
    """(markdown, csv) renderings, one strategy x tools block per model."""
    md: list[str] = []
    csv: list[str] = []
    for model in matrix.models():
        md.append(f"### {model} ({matrix.corpus})")
        md.append("| strategy | direct | CD | MD | CD+MD |")
        md.append("| --- | --- | --- | --- | --- |")
        csv.append(f"# model: {model}")
        csv.append("strategy,direct,CD,MD,CD+MD")
        for strategy in STRATEGY_ORDER:
            values = [
                matrix.cells.get((model, strategy, tools), "-")
                for tools in TOOL_ORDER
            ]
            md.append(f"| {strategy} | " + " | ".join(values) + " |")
            csv.append(f"{strategy}," + ",".join(values))
        md.append("")
    if not matrix.cells:
        md.append("| strategy | direct | CD | MD | CD+MD |")
        md.append("| --- | --- | --- | --- | --- |")
        csv.append("strategy,direct,CD,MD,CD+MD")
    return "\n".join(md) + "\n", "\n".join(csv) + "\n"


def render_reports(
    destination: Path,
    failed_table: FailedRatioTable | None = None,
    matrices: list[ResultMatrix] | None = None,
    realcase: ResultMatrix | None = None,
) -> list[Path]:
    """Write the report tree; returns written paths (byte-stable)."""
    destination = Path(destination)
    destination.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(stem: str, md: str, csv: str) -> None:
        for suffix, content in ((".md", md), (".csv", csv)):
            path = destination / f"{stem}{suffix}"
            path.write_text(content, encoding="utf-8")
            written.append(path)

    if failed_table is not None:
        emit("table1_failed_ratio", *render_failed_ratio(failed_table))
    for matrix in matrices or []:
        emit(f"table2_matrix_{matrix.corpus}", *render_matrix(matrix))
    if realcase is not None:
        emit("table3_realcase", *render_matrix(realcase))
    return written
