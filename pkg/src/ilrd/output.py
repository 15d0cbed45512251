"""Writers for run artefacts: canonical JSON, 17-digit CSV, minimal SVG."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def canonical_json(obj):
    """Sorted keys, fixed indentation, trailing newline: equal input, equal bytes."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj):
    path = Path(path)
    path.write_text(canonical_json(obj))
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, header, rows):
    """Comma separated, header row, LF endings, floats with 17 significant digits."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def svg_polyline(series, path, *, width=640, height=320, title="", x=None, y_range=None):
    """Draw one or more series as polylines.

    ``series`` maps a label to y values (plotted against ``x`` or the index)
    or to an ``(x, y)`` pair.
    """
    colors = ("#1f4e79", "#b03a2e", "#1e8449", "#7d3c98")
    pad = 36
    pairs = []
    for v in series.values():
        if isinstance(v, tuple):
            px, py = (np.asarray(a, dtype=np.float64) for a in v)
        else:
            py = np.asarray(v, dtype=np.float64)
            px = np.arange(py.size, dtype=np.float64) if x is None else np.asarray(x, dtype=np.float64)
        pairs.append((px, py))
    ys = [p[1] for p in pairs]
    x_lo = min(p[0].min() for p in pairs)
    x_hi = max(p[0].max() for p in pairs)
    x_span = x_hi - x_lo if x_hi > x_lo else 1.0
    lo, hi = y_range if y_range else (min(v.min() for v in ys), max(v.max() for v in ys))
    hi = hi if hi > lo else lo + 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{pad}" y="20" font-family="sans-serif" font-size="13">{title}</text>',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        'fill="none" stroke="#888"/>',
    ]
    for k, (label, (xs, v)) in enumerate(zip(series, pairs)):
        px = pad + (xs - x_lo) / x_span * (width - 2 * pad)
        py = height - pad - (v - lo) / (hi - lo) * (height - 2 * pad)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        color = colors[k % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{pts}"/>')
        parts.append(
            f'<text x="{width - pad - 120}" y="{pad + 16 * (k + 1)}" font-family="sans-serif" '
            f'font-size="11" fill="{color}">{label}</text>'
        )
    parts.append("</svg>\n")
    Path(path).write_text("\n".join(parts))
    return Path(path)


def ecdf_points(sample):
    s = np.sort(np.asarray(sample, dtype=np.float64))
    return s, np.arange(1, s.size + 1) / s.size
