"""CSV and line-delimited JSON writers.

Floats are written with 17 significant digits so that parsing the output
gives back the in-memory values exactly. Missing values (an undefined rate)
are an empty CSV cell and ``null`` in JSON.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Iterable

from .simulation import RunResult
from .sweep import SweepTable

RUN_COLUMNS = ("seed", "round", "cumulative_regret")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return format(value, ".17g")
    if isinstance(value, (dict, list)):
        return json.dumps(value, sort_keys=True, separators=(",", ":"))
    return str(value)


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _rows(obj: SweepTable | RunResult) -> tuple[list[str], Iterable[dict]]:
    if isinstance(obj, SweepTable):
        return obj.columns, obj.rows
    if isinstance(obj, RunResult):
        rows = (
            {"seed": obj.seed, "round": cp, "cumulative_regret": r}
            for cp, r in zip(obj.checkpoints, obj.regret_trajectory)
        )
        return list(RUN_COLUMNS), rows
    raise TypeError(f"cannot emit {type(obj).__name__}")


def render(obj: SweepTable | RunResult, fmt: str = "csv") -> str:
    columns, rows = _rows(obj)
    buf = io.StringIO()
    if fmt == "csv":
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
    elif fmt == "json":
        for row in rows:
            record = {c: _json_value(row.get(c)) for c in columns}
            buf.write(json.dumps(record, allow_nan=False))
            buf.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}; expected csv or json")
    return buf.getvalue()


def emit_results(obj: SweepTable | RunResult, fmt: str = "csv", destination: str | Path | None = None) -> None:
    """Write ``obj`` to ``destination`` (a path) or to standard output when None or '-'.

    The text is rendered in full before the file is opened, so a rendering
    failure never leaves a partial file behind.
    """
    text = render(obj, fmt)
    if destination is None or str(destination) == "-":
        sys.stdout.write(text)
        return
    with open(destination, "w", newline="") as fh:
        fh.write(text)


def read_csv(text: str) -> list[dict]:
    """Parse emitted CSV back into typed rows (ints, floats, None, JSON objects)."""

    def parse(value: str):
        if value == "":
            return None
        for cast in (int, float):
            try:
                return cast(value)
            except ValueError:
                pass
        if value[:1] in "{[":
            return json.loads(value)
        return value

    reader = csv.DictReader(io.StringIO(text))
    return [{k: parse(v) for k, v in row.items()} for row in reader]
