"""CSV ingestion and report serialisation."""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import DataError
from .km import CensoredSample
from .patterns import Dataset


def _open_text(path):
    try:
        return open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc


def _is_missing(cell: str, token: str) -> bool:
    cell = cell.strip()
    return cell == "" or cell == token.strip()


def read_dataset(path, missing_token: str = "NA") -> Dataset:
    """Read a headed CSV; empty cells and ``missing_token`` become NaN."""
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("no data: file is empty") from None
        header = [h.strip() for h in header]
        rows = []
        for rec in reader:
            line = reader.line_num
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(
                    f"malformed row: {len(rec)} cells, expected {len(header)}", line=line
                )
            vals = []
            for j, (name, cell) in enumerate(zip(header, rec), start=1):
                if _is_missing(cell, missing_token):
                    vals.append(math.nan)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"bad cell {cell.strip()!r} in {name!r}", line=line, column=j
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"bad cell {cell.strip()!r} in {name!r}", line=line, column=j)
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError("no data: header only")
    return Dataset(np.array(rows, dtype=float), tuple(header))


def read_censored(path) -> CensoredSample:
    """Read a two-column ``time,event`` CSV with a header row."""
    times, events = [], []
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("no data: file is empty") from None
        if len(header) != 2:
            raise DataError("expected two columns: time, event", line=1)
        for rec in reader:
            line = reader.line_num
            if not rec:
                continue
            if len(rec) != 2:
                raise DataError("malformed row: expected time, event", line=line)
            t_cell, e_cell = (c.strip() for c in rec)
            try:
                t = float(t_cell)
            except ValueError:
                raise DataError(f"bad time {t_cell!r}", line=line, column=1) from None
            if not (math.isfinite(t) and t > 0):
                raise DataError(f"bad time {t_cell!r}", line=line, column=1)
            if e_cell not in ("0", "1"):
                raise DataError(f"bad event flag {e_cell!r}", line=line, column=2)
            times.append(t)
            events.append(e_cell == "1")
    return CensoredSample(np.array(times), np.array(events, dtype=bool))


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps_json(report) -> str:
    return json.dumps(to_jsonable(report), sort_keys=True, indent=2) + "\n"


def flatten(report, prefix="") -> dict:
    """Row-major flattening: ``cov[0][1]``, ``nodes.(1,0).theta[0]``."""
    out = {}
    if isinstance(report, dict):
        for k in sorted(report, key=str):
            key = f"{prefix}.{k}" if prefix else str(k)
            out.update(flatten(report[k], key))
    elif isinstance(report, (list, tuple, np.ndarray)):
        for i, v in enumerate(report):
            out.update(flatten(v, f"{prefix}[{i}]"))
    else:
        out[prefix] = report
    return out


def dumps_csv(report, table=None) -> str:
    """Tabular records as-is; anything else as one flattened row."""
    buf = io.StringIO()
    if table:
        cols = list(table[0])
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for rec in table:
            w.writerow([_cell(rec[c]) for c in cols])
        return buf.getvalue()
    flat = flatten(to_jsonable(report))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(flat))
    w.writerow([_cell(v) for v in flat.values()])
    return buf.getvalue()


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def dumps_table(report, sections=None) -> str:
    """Plain-text rendering for people; layout is not a stable format."""
    lines = []
    for title, body in (sections or [("report", report)]):
        lines.append(f"== {title} ==")
        if isinstance(body, list) and body and isinstance(body[0], dict):
            cols = list(body[0])
            cells = [[_fmt(r[c]) for c in cols] for r in body]
            widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
            lines.append("  ".join(c.rjust(w) for c, w in zip(cols, widths)))
            for row in cells:
                lines.append("  ".join(v.rjust(w) for v, w in zip(row, widths)))
        elif isinstance(body, dict):
            flat = flatten(to_jsonable(body))
            width = max((len(k) for k in flat), default=0)
            for k, v in flat.items():
                lines.append(f"{k.ljust(width)}  {_fmt(v)}")
        else:
            lines.append(_fmt(body))
        lines.append("")
    return "\n".join(lines)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if v is None:
        return "-"
    return str(v)


def write_output(text: str, path=None) -> None:
    """Write to ``path`` or stdout; ``OSError`` propagates for exit code 4."""
    if path is None:
        sys.stdout.write(text)
        return
    Path(path).write_text(text, encoding="utf-8")
