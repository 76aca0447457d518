"""Deterministic CSV and JSON emission of experiment results."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Any, Iterable, Sequence

__all__ = ["ResultRow", "Table", "format_value", "run_hash", "emit_results", "read_rows"]

SIG_DIGITS = 12
_FID_QUANTUM = Decimal(1).scaleb(-SIG_DIGITS)


@dataclass(frozen=True)
class ResultRow:
    """One result point: swept parameters followed by the figures of merit.

    ``wall_time`` is kept for diagnostics but never written to the
    deterministic outputs.
    """

    params: tuple[tuple[str, Any], ...]
    fidelity: float
    asymptotic_fidelity: float = math.nan
    trace_error: float = math.nan
    wall_time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if not -1e-9 <= self.fidelity <= 1 + 1e-9:
            raise ValueError(f"fidelity {self.fidelity} outside [0, 1]")
        f = min(max(float(self.fidelity), 0.0), 1.0)
        object.__setattr__(self, "fidelity", float(fidelity_decimal(f)))
        # Store parameters exactly as they will be written so rows round-trip.
        params = tuple((k, _parse_cell(format_value(v)) if isinstance(v, float) else v)
                       for k, v in self.params)
        object.__setattr__(self, "params", params)
        for name in ("asymptotic_fidelity", "trace_error"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v if math.isnan(v) else float(format_value(v)))

    @property
    def error(self) -> float:
        return 1.0 - self.fidelity

    def columns(self) -> list[str]:
        return [k for k, _ in self.params] + [
            "fidelity", "error", "asymptotic_fidelity", "trace_error"
        ]

    def cells(self) -> list[str]:
        f = fidelity_decimal(self.fidelity)
        return [format_value(v) for _, v in self.params] + [
            format(f, "f"), format(Decimal(1) - f, "f"),
            format_value(self.asymptotic_fidelity), format_value(self.trace_error),
        ]


@dataclass(frozen=True)
class Table:
    """A named block of plain rows with a fixed header, e.g. a ratio table."""

    name: str
    header: tuple[str, ...]
    rows: tuple[tuple[Any, ...], ...]


def fidelity_decimal(value: float) -> Decimal:
    """Fidelity on a fixed 1e-12 grid so that ``1 - F`` is exact in decimal."""
    d = Decimal(repr(float(value))).quantize(_FID_QUANTUM, rounding=ROUND_HALF_EVEN)
    return d.normalize() if d != 0 else Decimal(0)


def format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if v == 0:
            return "0"
        return f"{v:.{SIG_DIGITS}g}"
    if isinstance(v, complex):
        return f"{format_value(v.real)}{'+' if v.imag >= 0 else '-'}{format_value(abs(v.imag))}j"
    return str(v)


def _parse_cell(text: str):
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def run_hash(echo: dict) -> str:
    """Git-style blob hash of the canonical JSON config echo."""
    body = json.dumps(echo, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _json_value(text: str):
    v = _parse_cell(text)
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


def emit_results(
    rows: Sequence[ResultRow],
    out_dir: str | os.PathLike,
    name: str,
    echo: dict,
    tables: Sequence[Table] = (),
) -> dict[str, Path]:
    """Write ``<name>.csv``, one CSV per extra table and ``<name>.json``.

    Returns the written paths keyed by ``"csv"``, ``"json"`` and table names.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths: dict[str, Path] = {}
    header = rows[0].columns() if rows else []
    if any(r.columns() != header for r in rows):
        raise ValueError("rows do not share a column schema")
    body = [r.cells() for r in rows]
    paths["csv"] = out / f"{name}.csv"
    _write(paths["csv"], _csv_text(header, body))
    extra = {}
    for t in tables:
        cells = [[format_value(v) for v in r] for r in t.rows]
        paths[t.name] = out / f"{name}_{t.name}.csv"
        _write(paths[t.name], _csv_text(t.header, cells))
        extra[t.name] = [dict(zip(t.header, map(_json_value, r))) for r in cells]
    summary = {
        "experiment": name,
        "run_hash": run_hash(echo),
        "config": echo,
        "columns": header,
        "rows": [dict(zip(header, map(_json_value, r))) for r in body],
        "tables": extra,
    }
    paths["json"] = out / f"{name}.json"
    _write(paths["json"], json.dumps(summary, indent=2, sort_keys=False) + "\n")
    return paths


def read_rows(path: str | os.PathLike) -> list[ResultRow]:
    """Load rows back from a JSON summary written by :func:`emit_results`."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    fixed = {"fidelity", "error", "asymptotic_fidelity", "trace_error"}
    rows = []
    for rec in data["rows"]:
        params = tuple((k, v) for k, v in rec.items() if k not in fixed)
        nan = lambda x: math.nan if x is None else x  # noqa: E731
        rows.append(
            ResultRow(params, rec["fidelity"], nan(rec["asymptotic_fidelity"]), nan(rec["trace_error"]))
        )
    return rows
