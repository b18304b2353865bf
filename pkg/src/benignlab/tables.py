"""Result tables and their deterministic CSV / SVG renderings."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np


@dataclass
class Table:
    columns: list[str]
    rows: list[tuple] = field(default_factory=list)

    def __post_init__(self):
        self.columns = list(self.columns)
        self.rows = [tuple(r) for r in self.rows]
        for r in self.rows:
            if len(r) != len(self.columns):
                raise ValueError(f"row of length {len(r)} does not match {len(self.columns)} columns")

    def column(self, name: str) -> list:
        try:
            j = self.columns.index(name)
        except ValueError:
            raise KeyError(f"no column {name!r}; have {self.columns}") from None
        return [r[j] for r in self.rows]

    def __len__(self) -> int:
        return len(self.rows)


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def parse_value(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def csv_text(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def emit_csv(table: Table, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(csv_text(table))
    return path


def read_csv(path: str | Path) -> Table:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return Table(rows[0], [tuple(parse_value(v) for v in r) for r in rows[1:]])


# --- SVG ---------------------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
_W, _H = 640, 420
_L, _R, _T, _B = 70, 170, 30, 50


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    return float(np.linalg.lstsq(A, ly, rcond=None)[0][0])


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _fmt(v: float) -> str:
    return format(v, ".4g")


def emit_plot(table: Table, x_col: str, y_cols: Sequence[str], path: str | Path,
              loglog: bool = False, title: str | None = None) -> Path:
    """Standalone SVG line chart; byte-identical output for identical input."""
    if len(table) < 2:
        raise ValueError("need at least two rows to draw a line")
    xs = np.asarray(table.column(x_col), dtype=float)
    series = {c: np.asarray(table.column(c), dtype=float) for c in y_cols}
    tx = np.log10 if loglog else (lambda a: np.asarray(a, float))
    if loglog and (np.any(xs <= 0) or any(np.any(v <= 0) for v in series.values())):
        raise ValueError("log-log plot needs strictly positive data")
    X = tx(xs)
    Ys = {c: tx(v) for c, v in series.items()}
    ymin = min(float(np.min(v)) for v in Ys.values())
    ymax = max(float(np.max(v)) for v in Ys.values())
    xmin, xmax = float(np.min(X)), float(np.max(X))
    if ymax == ymin:
        ymin, ymax = ymin - 1.0, ymax + 1.0
    if xmax == xmin:
        xmin, xmax = xmin - 1.0, xmax + 1.0
    pw, ph = _W - _L - _R, _H - _T - _B

    def px(v):
        return _L + (v - xmin) / (xmax - xmin) * pw

    def py(v):
        return _T + ph - (v - ymin) / (ymax - ymin) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_L}" y="{_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{_L + pw / 2:.2f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for v in _ticks(xmin, xmax):
        label = _fmt(10 ** v) if loglog else _fmt(v)
        out.append(f'<line x1="{px(v):.2f}" y1="{_T + ph}" x2="{px(v):.2f}" y2="{_T + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px(v):.2f}" y="{_T + ph + 18}" text-anchor="middle" font-size="11">{label}</text>')
    for v in _ticks(ymin, ymax):
        label = _fmt(10 ** v) if loglog else _fmt(v)
        out.append(f'<line x1="{_L - 5}" y1="{py(v):.2f}" x2="{_L}" y2="{py(v):.2f}" stroke="black"/>')
        out.append(f'<text x="{_L - 8}" y="{py(v) + 4:.2f}" text-anchor="end" font-size="11">{label}</text>')
    out.append(f'<text x="{_L + pw / 2:.2f}" y="{_H - 10}" text-anchor="middle" font-size="12">{escape(x_col)}</text>')

    order = np.argsort(X, kind="stable")
    for i, (name, Y) in enumerate(Ys.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{px(X[j]):.2f},{py(Y[j]):.2f}" for j in order)
        out.append(f'<polyline class="series" data-name="{escape(name)}" points="{pts}" '
                   f'fill="none" stroke="{color}" stroke-width="1.5"/>')
        for j in order:
            out.append(f'<circle cx="{px(X[j]):.2f}" cy="{py(Y[j]):.2f}" r="2.5" fill="{color}"/>')
        label = escape(name)
        if loglog:
            slope = loglog_slope(xs, series[name])
            label += f" (slope {slope:.3f})"
            out.append(f'<desc class="slope" data-name="{escape(name)}">{slope!r}</desc>')
        ly = _T + 14 + 16 * i
        out.append(f'<line x1="{_W - _R + 10}" y1="{ly - 4}" x2="{_W - _R + 28}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_W - _R + 32}" y="{ly}" font-size="11">{label}</text>')
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path
