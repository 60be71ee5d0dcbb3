"""CSV artifacts with ``#`` metadata lines and lossless float round-trips."""

from __future__ import annotations

import csv
import datetime as _dt
import io
import math
import os

from ..errors import DataFormatError


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        # repr is the shortest string that round-trips exactly
        return repr(v)
    if hasattr(v, "item") and not isinstance(v, (str, bytes)):
        return _cell(v.item())
    return str(v)


def format_csv(header, rows, meta=None, reproducible: bool = True) -> str:
    buf = io.StringIO()
    for key, value in (meta or []):
        buf.write(f"# {key}: {value}\n")
    if not reproducible:
        stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        buf.write(f"# generated: {stamp}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if isinstance(row, dict):
            row = [row[h] for h in header]
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows, meta=None, reproducible: bool = True) -> str:
    """Write a CSV artifact; metadata is a sequence of ``(key, value)`` pairs.

    Without ``reproducible`` a ``# generated: <UTC time>`` line is added.
    """
    text = format_csv(header, rows, meta, reproducible)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return str(path)


def _parse_cell(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if text == "true":
        return True
    if text == "false":
        return False
    return text


def read_csv(path):
    """Return ``(meta, header, rows)``; numeric cells come back as int or float."""
    meta, lines = {}, []
    with open(path, encoding="utf-8", newline="") as fh:
        for n, line in enumerate(fh, start=1):
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition(":")
                if not sep:
                    raise DataFormatError("metadata line without ':'", line=n)
                meta[key.strip()] = value.strip()
            else:
                lines.append(line)
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError(f"{path}: no header row") from None
    rows = []
    for row in reader:
        if len(row) != len(header):
            raise DataFormatError(f"{path}: row of {len(row)} cells under a {len(header)}-column header")
        rows.append([_parse_cell(c) for c in row])
    return meta, header, rows


def column(header, rows, name):
    i = header.index(name)
    return [r[i] for r in rows]


def same_value(a, b) -> bool:
    """Equality that treats NaN as equal to NaN."""
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b
