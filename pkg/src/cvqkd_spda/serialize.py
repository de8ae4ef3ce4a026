"""CSV / JSON emission and parsing.

CSV files start with ``# key = <json value>`` comment lines echoing the
resolved run configuration, then a header row of unit-annotated column
names. Floats are written with 17 significant digits so every file parses
back to the exact same doubles.
"""
from __future__ import annotations

import csv
import io
import json
from typing import Any, Iterable, Sequence

import numpy as np

from .analytic import CORRECT, WRONG
from .errors import ConfigError
from .montecarlo import QuadratureHistogram

FORMATS = ("csv", "json")


def format_number(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def _parse_cell(s: str) -> Any:
    if s == "":
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def dump_records(columns: Sequence[str], rows: Iterable[Sequence[Any]], config: dict, fmt: str) -> str:
    rows = [list(r) for r in rows]
    if fmt == "json":
        doc = {"config": config, "columns": list(columns), "rows": rows}
        return json.dumps(doc, indent=2, default=_json_default) + "\n"
    if fmt != "csv":
        raise ConfigError(f"unknown output format {fmt!r}")
    buf = io.StringIO()
    for key in sorted(config):
        buf.write(f"# {key} = {json.dumps(config[key], default=_json_default)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_number(v) for v in r])
    return buf.getvalue()


def load_records(text: str, fmt: str) -> tuple[dict, list[str], list[list[Any]]]:
    if fmt == "json":
        doc = json.loads(text)
        return doc["config"], list(doc["columns"]), [list(r) for r in doc["rows"]]
    if fmt != "csv":
        raise ConfigError(f"unknown output format {fmt!r}")
    config = {}
    body = []
    for line in text.splitlines(keepends=True):
        if line.startswith("# ") and not body:
            key, _, value = line[2:].partition(" = ")
            config[key] = json.loads(value)
        else:
            body.append(line)
    reader = csv.reader(io.StringIO("".join(body)))
    columns = next(reader)
    rows = [[_parse_cell(c) for c in r] for r in reader]
    return config, columns, rows


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (tuple, set)):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


# --- typed round trips ---------------------------------------------------


def dump_table(table, config: dict, fmt: str) -> str:
    return dump_records(table.columns, table.rows, config, fmt)


def load_table(text: str, fmt: str):
    from .analysis import SweepTable

    config, columns, rows = load_records(text, fmt)
    variable, _, unit = columns[0].partition("[")
    return SweepTable(variable, unit.rstrip("]"), tuple(columns[1:]), tuple(tuple(r) for r in rows)), config


HISTOGRAM_COLUMNS = (
    "bin_lo[quadrature]",
    "bin_hi[quadrature]",
    "count_correct[count]",
    "count_wrong[count]",
)


def dump_histograms(hists: dict[str, QuadratureHistogram], config: dict, fmt: str) -> str:
    c, w = hists[CORRECT], hists[WRONG]
    edges = c.bin_edges
    rows = [
        (float(edges[i]), float(edges[i + 1]), int(c.counts[i]), int(w.counts[i]))
        for i in range(edges.size - 1)
    ]
    return dump_records(HISTOGRAM_COLUMNS, rows, config, fmt)


def load_histograms(text: str, fmt: str) -> tuple[dict[str, QuadratureHistogram], dict]:
    config, columns, rows = load_records(text, fmt)
    if tuple(columns) != HISTOGRAM_COLUMNS:
        raise ConfigError(f"not a histogram file: columns {columns}")
    edges = np.array([r[0] for r in rows] + [rows[-1][1]], dtype=float)
    hists = {
        CORRECT: QuadratureHistogram(CORRECT, edges, np.array([r[2] for r in rows])),
        WRONG: QuadratureHistogram(WRONG, edges, np.array([r[3] for r in rows])),
    }
    return hists, config


def dump_record(record: dict, config: dict, fmt: str) -> str:
    """A single flat result object as a one-row table."""
    return dump_records(list(record), [list(record.values())], config, fmt)


def load_record(text: str, fmt: str) -> tuple[dict, dict]:
    config, columns, rows = load_records(text, fmt)
    return dict(zip(columns, rows[0])), config
