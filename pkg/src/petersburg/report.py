"""Serialisation of experiment reports.

CSV cells use ``repr`` for floats (shortest string that round-trips, always a
'.' separator) and the empty string for fields that do not apply.  JSON keeps
numbers as numbers; since JSON has no literal for them, non-finite floats are
written as the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
"""

import csv
import io
import json
import math
import numbers
from importlib import resources

from .experiments import COLUMNS

FORMATS = ("csv", "json")
SCHEMA_NAME = "report.schema.json"
REPORT_VERSION = 1


def format_cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real):
        return repr(float(value))
    return str(value)


def json_number(value):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        return value
    if isinstance(value, numbers.Integral):
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def parse_cell(column, text):
    """Inverse of :func:`format_cell` for the report columns."""
    if text == "":
        return None
    if column in ("experiment", "statistic"):
        return text
    if column in ("n", "R", "seed"):
        return int(text)
    return float(text)


def to_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in report.rows:
        values = row.as_dict()
        writer.writerow([format_cell(values[c]) for c in COLUMNS])
    return buf.getvalue()


def read_csv(text):
    """Rows of a CSV report as dicts with typed values."""
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != COLUMNS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    return [{c: parse_cell(c, rec[c]) for c in COLUMNS} for rec in reader]


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return json_number(obj)


def report_document(report, seed=None):
    return {
        "version": REPORT_VERSION,
        "experiment": report.experiment,
        "kind": report.config.kind,
        "seed": seed,
        "config": _clean(report.config.as_dict()),
        "columns": list(COLUMNS),
        "rows": [_clean(row.as_dict()) for row in report.rows],
    }


def to_json(report, seed=None):
    return json.dumps(report_document(report, seed), indent=2, allow_nan=False) + "\n"


def render(report, fmt, seed=None):
    if fmt == "csv":
        return to_csv(report)
    if fmt == "json":
        return to_json(report, seed)
    raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")


def load_schema():
    text = resources.files("petersburg").joinpath("schema", SCHEMA_NAME).read_text()
    return json.loads(text)
