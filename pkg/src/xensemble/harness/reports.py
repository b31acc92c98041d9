"""Table emission: CSV, JSON and whitespace-separated gnuplot data.

Floats are written with ``repr`` so files round-trip exactly and identical
inputs give identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple
    rows: tuple  # tuple of dicts keyed by column

    def column(self, col: str) -> list:
        return [r[col] for r in self.rows]

    def where(self, **match) -> list[dict]:
        return [r for r in self.rows if all(r.get(k) == v for k, v in match.items())]


def make_table(name: str, columns: Sequence[str], rows: Sequence[dict]) -> Table:
    cols = tuple(columns)
    for r in rows:
        missing = [c for c in cols if c not in r]
        if missing:
            raise ValueError(f"table {name}: row lacks columns {missing}")
    return Table(name, cols, tuple({c: r[c] for c in cols} for r in rows))


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for r in table.rows:
        w.writerow([_cell(r[c]) for c in table.columns])
    return buf.getvalue()


def to_json(table: Table) -> str:
    return json.dumps({"name": table.name, "columns": list(table.columns), "rows": list(table.rows)},
                      indent=2, sort_keys=False) + "\n"


def to_dat(table: Table, columns: Sequence[str] | None = None) -> str:
    """gnuplot-friendly block: a ``#`` header then whitespace-separated rows."""
    cols = list(columns or table.columns)
    lines = ["# " + " ".join(cols)]
    for r in table.rows:
        lines.append(" ".join(_cell(r[c]).replace(" ", "_") or "NaN" for c in cols))
    return "\n".join(lines) + "\n"


def to_aligned(table: Table) -> str:
    cells = [[str(c) for c in table.columns]]
    for r in table.rows:
        cells.append([f"{r[c]:.4f}" if isinstance(r[c], float) else _cell(r[c]) for c in table.columns])
    widths = [max(len(row[i]) for row in cells) for i in range(len(table.columns))]
    return "\n".join("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in cells) + "\n"


def write_table(table: Table, directory, dat_columns: Sequence[str] | None = None) -> list[Path]:
    """Writes ``<name>.csv`` and ``<name>.json`` (and ``<name>.dat`` if asked)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = [d / f"{table.name}.csv", d / f"{table.name}.json"]
    paths[0].write_text(to_csv(table))
    paths[1].write_text(to_json(table))
    if dat_columns is not None:
        p = d / f"{table.name}.dat"
        p.write_text(to_dat(table, dat_columns))
        paths.append(p)
    return paths


def read_table_json(path) -> Table:
    obj = json.loads(Path(path).read_text())
    return Table(obj["name"], tuple(obj["columns"]), tuple(obj["rows"]))


def render(table: Table, fmt: str) -> str:
    if fmt == "csv":
        return to_csv(table)
    if fmt == "json":
        return to_json(table)
    if fmt == "table":
        return to_aligned(table)
    raise ValueError(f"unknown format {fmt!r}")
