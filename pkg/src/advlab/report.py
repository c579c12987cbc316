"""Log-log slope fits over sweep results and a small deterministic SVG plotter."""

from __future__ import annotations

import csv
import math
import warnings
from collections import defaultdict
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
from scipy.stats import linregress


def read_rows(source) -> list[dict]:
    if isinstance(source, (str, Path)):
        with Path(source).open(newline="") as fh:
            return list(csv.DictReader(fh))
    return list(source)


def _fit(x: np.ndarray, y: np.ndarray):
    if np.ptp(y) == 0:
        return 0.0, float(y[0]), 0.0
    res = linregress(x, y)
    return float(res.slope), float(res.intercept), float(res.stderr)


def fit_slope(source, x_col: str, y_col: str, group=None) -> dict:
    """Least squares of ``ln mean(y)`` on ``ln x`` (means over repeated x).

    Returns ``{group_key: (slope, intercept, stderr)}``; ungrouped fits use the
    key ``None``. Rows with nonpositive or missing y are dropped with a warning.
    """
    rows = read_rows(source)
    cols = () if group is None else ((group,) if isinstance(group, str) else tuple(group))
    buckets = defaultdict(lambda: defaultdict(list))
    dropped = 0
    for row in rows:
        try:
            x, y = float(row[x_col]), float(row[y_col])
        except (TypeError, ValueError):
            dropped += 1
            continue
        if not (y > 0 and x > 0) or not math.isfinite(y):
            dropped += 1
            continue
        key = None if not cols else tuple(row[c] for c in cols)
        buckets[key][x].append(y)
    if dropped:
        warnings.warn(f"dropped {dropped} rows with nonpositive or missing values", stacklevel=2)
    out = {}
    for key, by_x in buckets.items():
        if len(by_x) < 3:
            raise ValueError(f"need at least 3 distinct x values to fit a slope (group {key})")
        xs = np.array(sorted(by_x))
        ys = np.array([np.mean(by_x[x]) for x in xs])
        out[key] = _fit(np.log(xs), np.log(ys))
    if not out:
        raise ValueError("no usable rows to fit")
    return out


def mean_by(source, x_col: str, y_col: str) -> tuple[np.ndarray, np.ndarray]:
    by_x = defaultdict(list)
    for row in read_rows(source):
        try:
            by_x[float(row[x_col])].append(float(row[y_col]))
        except (TypeError, ValueError):
            continue
    xs = np.array(sorted(by_x))
    return xs, np.array([np.mean(by_x[x]) for x in xs])


_W, _H, _PAD = 480, 360, 56
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def emit_svg(series, path, title: str = "", x_label: str = "n", y_label: str = "value") -> None:
    """Log-log scatter with optional fitted lines.

    ``series`` is a list of dicts with ``label``, ``x``, ``y`` and optional
    ``fit = (slope, intercept)`` in natural-log coordinates; without one, a
    least-squares line is drawn whenever the series has two distinct x values.
    """
    series = [s for s in series if len(s["x"])]
    if not series:
        raise ValueError("nothing to plot")
    lx = np.concatenate([np.log10(np.asarray(s["x"], dtype=float)) for s in series])
    ly = np.concatenate([np.log10(np.asarray(s["y"], dtype=float)) for s in series])
    x0, x1 = lx.min(), lx.max()
    y0, y1 = ly.min(), ly.max()
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(v):
        return _PAD + (v - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def py(v):
        return _H - _PAD - (v - y0) / (y1 - y0) * (_H - 2 * _PAD)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<text x="{_W / 2:.0f}" y="{_H - 16}" text-anchor="middle" font-size="12">log10 {escape(x_label)}</text>',
        f'<text x="16" y="{_H / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {_H / 2:.0f})">log10 {escape(y_label)}</text>',
        f'<text x="{_PAD}" y="{_H - _PAD + 16}" font-size="10">{x0:.2f}</text>',
        f'<text x="{_W - _PAD}" y="{_H - _PAD + 16}" font-size="10" text-anchor="end">{x1:.2f}</text>',
        f'<text x="{_PAD - 4}" y="{_H - _PAD}" font-size="10" text-anchor="end">{y0:.2f}</text>',
        f'<text x="{_PAD - 4}" y="{_PAD + 4}" font-size="10" text-anchor="end">{y1:.2f}</text>',
    ]
    if title:
        out.append(f'<text x="{_W / 2:.0f}" y="24" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for i, s in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        xs = np.log10(np.asarray(s["x"], dtype=float))
        ys = np.log10(np.asarray(s["y"], dtype=float))
        for a, b in zip(xs, ys):
            out.append(f'<circle cx="{_fmt(px(a))}" cy="{_fmt(py(b))}" r="3" fill="{color}"/>')
        fit = s.get("fit")
        if fit is None and np.unique(xs).size >= 2:
            fit = _fit(xs * math.log(10), ys * math.log(10))[:2]
        if fit is not None:
            slope, intercept = fit
            ends = np.array([xs.min(), xs.max()])
            fy = (slope * ends * math.log(10) + intercept) / math.log(10)
            pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(ends, fy))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}"/>')
        ly_pos = _PAD + 14 * i
        out.append(f'<text x="{_W - _PAD}" y="{ly_pos}" font-size="11" text-anchor="end" fill="{color}">'
                   f'{escape(str(s.get("label", f"series {i + 1}")))}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
