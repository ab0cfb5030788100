"""Table serialization: CSV and JSON files, pretty text for the console.

File formats keep full float precision (shortest round-trip repr) so results
can be compared exactly; the pretty renderer rounds to two decimals and is
for eyeballs only.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Sequence

__all__ = [
    "table_to_csv",
    "table_to_json",
    "table_to_pretty",
    "geojson_to_text",
]


def _file_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def table_to_csv(table) -> str:
    """Render an estimate table as CSV text (full precision)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_file_cell(row.get(c)) for c in table.columns])
    return buf.getvalue()


def table_to_json(table) -> str:
    """Render an estimate table as a JSON document (full precision).

    The column list is carried explicitly since JSON objects do not
    guarantee ordering to every consumer.
    """
    doc = {
        "columns": list(table.columns),
        "rows": [{c: row.get(c) for c in table.columns} for row in table.rows],
    }
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _pretty_cell(value) -> str:
    if value is None:
        return "--"
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def table_to_pretty(table) -> str:
    """Aligned two-decimal text table for terminal display."""
    header = [str(c) for c in table.columns]
    body = [[_pretty_cell(row.get(c)) for c in table.columns] for row in table.rows]
    widths = [len(h) for h in header]
    for line in body:
        for i, cell in enumerate(line):
            widths[i] = max(widths[i], len(cell))

    def fmt(line: Sequence[str]) -> str:
        return "  ".join(cell.rjust(w) for cell, w in zip(line, widths)).rstrip()

    out = [fmt(header), fmt(["-" * w for w in widths])]
    out.extend(fmt(line) for line in body)
    return "\n".join(out) + "\n"


def geojson_to_text(collection: dict) -> str:
    """Serialize a FeatureCollection produced by the spatial join."""
    return json.dumps(collection, indent=2, allow_nan=False) + "\n"
