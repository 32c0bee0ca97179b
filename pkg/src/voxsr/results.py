"""Metrics rows, the fixed CSV schema and the text results table."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, List

from .metrics import PSNR_CAP_DB

CSV_HEADER = ("experiment", "task", "ssim", "psnr_db", "n_volumes", "status")
TASKS = ("isotropic", "anisotropic")


@dataclass(frozen=True)
class MetricsRow:
    experiment: str
    task: str
    ssim: float
    psnr_db: float
    n_volumes: int
    status: str = "ok"

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.status not in ("ok", "error"):
            raise ValueError(f"status must be 'ok' or 'error', got {self.status!r}")
        if self.status == "ok":
            if not -1.0 <= self.ssim <= 1.0:
                raise ValueError(f"ssim {self.ssim} outside [-1, 1]")
            if not 0.0 < self.psnr_db <= PSNR_CAP_DB:
                raise ValueError(f"psnr_db {self.psnr_db} outside (0, {PSNR_CAP_DB}]")

    @classmethod
    def error(cls, experiment: str, task: str) -> "MetricsRow":
        return cls(experiment, task, math.nan, math.nan, 0, "error")


def _fmt(x: float, digits: int) -> str:
    return "nan" if math.isnan(x) else f"{x:.{digits}f}"


def rows_to_csv(rows: Iterable[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.experiment, r.task, _fmt(r.ssim, 6), _fmt(r.psnr_db, 4), r.n_volumes, r.status])
    return buf.getvalue()


def write_csv(rows: Iterable[MetricsRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))


def read_csv(path) -> List[MetricsRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}; expected {','.join(CSV_HEADER)}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(CSV_HEADER):
                raise ValueError(f"line {lineno}: expected {len(CSV_HEADER)} fields, got {len(rec)}")
            try:
                rows.append(MetricsRow(rec[0], rec[1], float(rec[2]), float(rec[3]), int(rec[4]), rec[5]))
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
        return rows


def format_table(rows: Iterable[MetricsRow]) -> str:
    """Experiments down, (SSIM, PSNR) per task across, in first-seen order."""
    rows = list(rows)
    names: List[str] = []
    cell = {}
    for r in rows:
        if r.experiment not in names:
            names.append(r.experiment)
        cell[r.experiment, r.task] = r
    width = max([len("Experiment"), *map(len, names)])

    def show(r, attr, digits):
        if r is None:
            return "-"
        if r.status != "ok":
            return "error"
        return _fmt(getattr(r, attr), digits)

    lines = [f"{'':{width}}  {'Isotropic':^15}  {'Anisotropic':^15}",
             f"{'Experiment':{width}}  {'SSIM':>6} {'PSNR':>8}  {'SSIM':>6} {'PSNR':>8}"]
    lines.append("-" * len(lines[-1]))
    for n in names:
        parts = []
        for t in TASKS:
            r = cell.get((n, t))
            parts.append(f"{show(r, 'ssim', 2):>6} {show(r, 'psnr_db', 2):>8}")
        lines.append(f"{n:{width}}  " + "  ".join(parts))
    return "\n".join(lines) + "\n"
