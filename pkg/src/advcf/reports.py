"""Report serialization: canonical JSON, RFC-4180 CSV, hand-rolled SVG charts.

All writers are deterministic functions of their inputs: sorted JSON keys,
fixed float formatting in SVG, no timestamps or environment leakage. A JSON
report reloaded and re-emitted is byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Sequence


def json_dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(obj, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json_dumps(obj), encoding="utf-8")
    return path


def csv_text(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL)
    writer.writerow(list(header))
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def write_csv(header: Sequence[str], rows: Sequence[Sequence[object]], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(header, rows))
    return path


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 640, 400
_MARGIN = 48


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo
    if span == 0:
        return [(out_lo + out_hi) / 2.0 for _ in values]
    k = (out_hi - out_lo) / span
    return [out_lo + (v - lo) * k for v in values]


def svg_line_chart(
    series: dict[str, Sequence[float]],
    path: str | Path,
    title: str = "",
    x_label: str = "",
    y_label: str = "",
) -> Path:
    """Line chart with one polyline per named series, points evenly spaced
    on x. Every data point appears as one polyline coordinate pair.
    """
    all_vals = [v for vals in series.values() for v in vals]
    if not all_vals:
        raise ValueError("nothing to chart")
    ylo, yhi = min(all_vals), max(all_vals)
    if ylo == yhi:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    xmax = max(len(vals) for vals in series.values()) - 1
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_W // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>'
        )
    x0, x1 = _MARGIN, _W - _MARGIN
    y0, y1 = _H - _MARGIN, _MARGIN
    parts.append(
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>'
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>'
    )
    parts.append(
        f'<text x="{x0}" y="{y0 + 16}" font-size="10">0</text>'
        f'<text x="{x1}" y="{y0 + 16}" text-anchor="end" font-size="10">{xmax}</text>'
        f'<text x="{x0 - 4}" y="{y0}" text-anchor="end" font-size="10">{_fmt(ylo)}</text>'
        f'<text x="{x0 - 4}" y="{y1 + 8}" text-anchor="end" font-size="10">{_fmt(yhi)}</text>'
    )
    if x_label:
        parts.append(
            f'<text x="{(x0 + x1) // 2}" y="{_H - 10}" text-anchor="middle" font-size="11">{x_label}</text>'
        )
    if y_label:
        parts.append(
            f'<text x="14" y="{(y0 + y1) // 2}" font-size="11" '
            f'transform="rotate(-90 14 {(y0 + y1) // 2})" text-anchor="middle">{y_label}</text>'
        )
    for k, (name, vals) in enumerate(series.items()):
        if not len(vals):
            continue
        xs = _scale(range(len(vals)), 0, max(xmax, 1), x0, x1)
        ys = _scale(vals, ylo, yhi, y0, y1)
        pts = " ".join(f"{px:.2f},{py:.2f}" for px, py in zip(xs, ys))
        color = _SVG_COLORS[k % len(_SVG_COLORS)]
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>'
        )
        parts.append(
            f'<text x="{x1 - 4}" y="{y1 + 12 + 14 * k}" text-anchor="end" '
            f'font-size="11" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out


def svg_bar_chart(
    labels: Sequence[str],
    values: Sequence[float],
    path: str | Path,
    title: str = "",
    y_label: str = "",
) -> Path:
    """Bar chart, one rect per category, y scaled to [0, max]."""
    if len(labels) != len(values):
        raise ValueError("labels and values must align")
    if not values:
        raise ValueError("nothing to chart")
    yhi = max(max(values), 1e-12)
    x0, x1 = _MARGIN, _W - _MARGIN
    y0, y1 = _H - _MARGIN, _MARGIN
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_W // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>'
        )
    parts.append(
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>'
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>'
        f'<text x="{x0 - 4}" y="{y1 + 8}" text-anchor="end" font-size="10">{_fmt(yhi)}</text>'
    )
    if y_label:
        parts.append(
            f'<text x="14" y="{(y0 + y1) // 2}" font-size="11" '
            f'transform="rotate(-90 14 {(y0 + y1) // 2})" text-anchor="middle">{y_label}</text>'
        )
    n = len(values)
    slot = (x1 - x0) / n
    bar_w = slot * 0.7
    for i, (lbl, v) in enumerate(zip(labels, values)):
        h = (y0 - y1) * (v / yhi)
        bx = x0 + i * slot + (slot - bar_w) / 2.0
        parts.append(
            f'<rect x="{bx:.2f}" y="{y0 - h:.2f}" width="{bar_w:.2f}" '
            f'height="{h:.2f}" fill="{_SVG_COLORS[0]}"/>'
        )
        parts.append(
            f'<text x="{bx + bar_w / 2:.2f}" y="{y0 + 14}" text-anchor="middle" '
            f'font-size="9">{lbl}</text>'
        )
    parts.append("</svg>")
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out
