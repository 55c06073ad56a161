"""Tabulated evaluation results, as text and as CSV."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from ..errors import DataError
from .evaluate import EvalReport

CSV_COLUMNS = ("dataset", "variant", "horizon", "mean_iou", "n_items", "seed")


@dataclass
class ResultRow:
    dataset: str
    variant: str
    horizon: int
    mean_iou: float
    n_items: int
    seed: int

    @classmethod
    def from_report(
        cls, report: EvalReport, dataset: str, variant: str, seed: int
    ) -> "ResultRow":
        return cls(
            dataset=dataset,
            variant=variant,
            horizon=report.horizon,
            mean_iou=report.mean_iou,
            n_items=report.n_items,
            seed=seed,
        )


def format_table(rows: list[ResultRow]) -> str:
    """Fixed-width text table, one line per result row."""
    if not rows:
        raise DataError("no result rows to format")
    header = list(CSV_COLUMNS)
    cells = [
        [
            r.dataset,
            r.variant,
            str(r.horizon),
            f"{r.mean_iou:.4f}",
            str(r.n_items),
            str(r.seed),
        ]
        for r in rows
    ]
    widths = [
        max(len(header[j]), *(len(c[j]) for c in cells)) for j in range(len(header))
    ]
    def line(parts: list[str]) -> str:
        return "  ".join(p.ljust(w) for p, w in zip(parts, widths)).rstrip()
    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line(header), rule, *(line(c) for c in cells)])


def write_csv(rows: list[ResultRow], path: str) -> None:
    if not rows:
        raise DataError("no result rows to write")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow(
                [r.dataset, r.variant, r.horizon, f"{r.mean_iou:.6f}", r.n_items, r.seed]
            )


def read_csv(path: str) -> list[ResultRow]:
    """Parse a results CSV back into rows; malformed input is an error."""
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as e:
        raise DataError(f"cannot read results csv: {e}") from e
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{path}: empty results csv") from None
    if tuple(header) != CSV_COLUMNS:
        raise DataError(f"{path}: unexpected csv header {header}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(CSV_COLUMNS):
            raise DataError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} fields")
        try:
            rows.append(
                ResultRow(
                    dataset=rec[0],
                    variant=rec[1],
                    horizon=int(rec[2]),
                    mean_iou=float(rec[3]),
                    n_items=int(rec[4]),
                    seed=int(rec[5]),
                )
            )
        except ValueError as e:
            raise DataError(f"{path}:{lineno}: {e}") from e
    if not rows:
        raise DataError(f"{path}: results csv has no data rows")
    return rows
