"""Versioned CSV artifacts.

Every file starts with ``# wams-tsa-csv/1 <kind>`` followed by a header row.
Numbers are written with ``repr`` (shortest round-trip form), ``.`` decimal
separator, ``,`` delimiter and LF line endings, so identical inputs give
identical bytes.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CsvParseError

MAGIC = "# wams-tsa-csv/1"
KINDS = {
    "trace": None,  # columns depend on the PMU count
    "cdf": ["delay", "fraction"],
    "roc": ["threshold", "mean_delay", "fa_rate"],
    "summary": ["seed", "detected_pmu", "detection_slot", "is_false_alarm"],
    "phy-roc": ["threshold", "fa_rate", "pd"],
}


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _render(kind: str, header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(f"{MAGIC} {kind}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _write(path, text: str):
    if path is None:
        return text
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return text


def trace_header(n_pmus: int) -> list[str]:
    return (["slot"] + [f"pi_{i}" for i in range(1, n_pmus + 1)]
            + [f"eta_{i}" for i in range(1, n_pmus + 1)] + ["detected_pmu", "is_false_alarm"])


def render_trace(record, mode: str | None = None) -> str:
    """Per-slot suspicion trace of one run.

    ``detected_pmu`` is the 1-based PMU of the first threshold crossing, blank
    before it and held afterwards; ``eta`` columns are 1 when the physical
    layer is off or ``mode`` is ``"upper"``.
    """
    pi = record.pi_for(mode)
    h, m = pi.shape
    use_eta = record.eta is not None and (mode or "cross") == "cross"
    eta = record.eta if use_eta else np.ones((h, m))
    det = record.first_crossing(None, mode)
    rows = []
    for i in range(h):
        slot = i + 1
        if det is not None and slot >= det.slot:
            tail = [det.pmu + 1, det.false_alarm]
        else:
            tail = ["", False]
        rows.append([slot, *pi[i], *eta[i], *tail])
    buf = io.StringIO()
    buf.write(f"{MAGIC} trace\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trace_header(m))
    for row in rows:
        w.writerow([v if v == "" else fmt(v) for v in row])
    return buf.getvalue()


def write_trace(path, record, mode: str | None = None) -> str:
    return _write(path, render_trace(record, mode))


def write_cdf(path, rows) -> str:
    return _write(path, _render("cdf", KINDS["cdf"], rows))


def write_roc(path, rows) -> str:
    return _write(path, _render("roc", KINDS["roc"], rows))


def write_summary(path, records, mode: str | None = None) -> str:
    rows = []
    for rec in records:
        det = rec.first_crossing(None, mode)
        if det is None:
            rows.append([rec.seed, "", "", False])
        else:
            rows.append([rec.seed, det.pmu + 1, det.slot, det.false_alarm])
    buf = io.StringIO()
    buf.write(f"{MAGIC} summary\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(KINDS["summary"])
    for row in rows:
        w.writerow([v if v == "" else fmt(v) for v in row])
    return _write(path, buf.getvalue())


def parse(text: str, expected_kind: str | None = None):
    """Parse an artifact; returns ``(kind, header, rows)`` with float cells
    (``nan`` for blanks).  Raises :class:`CsvParseError` naming the line."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise CsvParseError("empty file", 1)
    first = lines[0].rstrip("\r")
    if not first.startswith(MAGIC + " "):
        raise CsvParseError(f"expected '{MAGIC} <kind>' marker", 1)
    kind = first[len(MAGIC) + 1:].strip()
    if kind not in KINDS:
        raise CsvParseError(f"unknown artifact kind {kind!r}", 1)
    if expected_kind is not None and kind != expected_kind:
        raise CsvParseError(f"expected kind {expected_kind!r}, found {kind!r}", 1)
    if len(lines) < 2:
        raise CsvParseError("missing header row", 2)
    header = next(csv.reader([lines[1]]))
    if kind == "trace":
        m = (len(header) - 3) // 2
        if m < 1 or header != trace_header(m):
            raise CsvParseError("malformed trace header", 2)
    elif header != KINDS[kind]:
        raise CsvParseError(f"expected header {','.join(KINDS[kind])}", 2)
    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        cells = next(csv.reader([line])) if line else []
        if len(cells) != len(header):
            raise CsvParseError(f"expected {len(header)} fields, got {len(cells)}", lineno)
        row = []
        for cell in cells:
            if cell == "":
                row.append(math.nan)
                continue
            try:
                row.append(float(cell))
            except ValueError:
                raise CsvParseError(f"not a number: {cell!r}", lineno) from None
        rows.append(row)
    return kind, header, rows


def read(path, expected_kind: str | None = None):
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data[:exc.start].count(b"\n") + 1
        raise CsvParseError("invalid UTF-8", line) from None
    return parse(text, expected_kind)
