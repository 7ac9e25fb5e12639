"""Static SVG rendering of per-epoch report curves.

Output is a two-panel figure: training loss on the left, the bounded test
metrics on the right. Hand-written SVG keeps the artifact dependency-free
and the bytes deterministic; NaN values (e.g. undefined AUROC) simply
break the polyline.
"""

from __future__ import annotations

import math
from pathlib import Path

from .errors import DataError
from .train import EpochReport

_METRIC_COLORS = [
    ("accuracy", "#1f77b4"),
    ("precision", "#ff7f0e"),
    ("recall", "#2ca02c"),
    ("f1", "#d62728"),
    ("roc_auc", "#9467bd"),
    ("kappa", "#8c564b"),
    ("mcc", "#e377c2"),
]

_W, _H = 980, 420
_PANEL_W, _PANEL_H = 380, 300
_MARGIN_Y = 60


def _scale(values, lo, hi, out_lo, out_hi):
    if hi == lo:
        return [0.5 * (out_lo + out_hi) for _ in values]
    return [out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo) for v in values]


def _polyline(xs, ys, color):
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y, in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>'


def _panel(origin_x, title, epochs, series, y_lo, y_hi):
    """series: list of (label, color, values); NaNs split the line."""
    parts = [
        f'<rect x="{origin_x}" y="{_MARGIN_Y}" width="{_PANEL_W}" height="{_PANEL_H}" '
        'fill="none" stroke="#444"/>',
        f'<text x="{origin_x + _PANEL_W / 2:.0f}" y="{_MARGIN_Y - 14}" text-anchor="middle" '
        f'font-size="15">{title}</text>',
        f'<text x="{origin_x - 6}" y="{_MARGIN_Y + 10}" text-anchor="end" font-size="11">{y_hi:.3g}</text>',
        f'<text x="{origin_x - 6}" y="{_MARGIN_Y + _PANEL_H}" text-anchor="end" font-size="11">{y_lo:.3g}</text>',
        f'<text x="{origin_x}" y="{_MARGIN_Y + _PANEL_H + 16}" font-size="11">epoch {epochs[0]}</text>',
        f'<text x="{origin_x + _PANEL_W}" y="{_MARGIN_Y + _PANEL_H + 16}" text-anchor="end" '
        f'font-size="11">epoch {epochs[-1]}</text>',
    ]
    xs = _scale(epochs, epochs[0], epochs[-1], origin_x, origin_x + _PANEL_W)
    legend_y = _MARGIN_Y + 14
    for label, color, values in series:
        run_x, run_y = [], []
        for x, v in zip(xs, values):
            if math.isnan(v):
                if len(run_x) > 1:
                    parts.append(_polyline(run_x, run_y, color))
                run_x, run_y = [], []
                continue
            y = _MARGIN_Y + _PANEL_H - (_scale([v], y_lo, y_hi, 0, _PANEL_H)[0])
            run_x.append(x)
            run_y.append(y)
        if len(run_x) > 1:
            parts.append(_polyline(run_x, run_y, color))
        elif len(run_x) == 1:
            parts.append(f'<circle cx="{run_x[0]:.2f}" cy="{run_y[0]:.2f}" r="2.5" fill="{color}"/>')
        parts.append(f'<text x="{origin_x + _PANEL_W + 10}" y="{legend_y}" font-size="12" '
                     f'fill="{color}">{label}</text>')
        legend_y += 16
    return parts


def render_report_svg(reports: list[EpochReport], out_path, title: str = "training report") -> None:
    if not reports:
        raise DataError("cannot plot an empty report")
    epochs = [r.epoch for r in reports]
    losses = [r.loss for r in reports]
    loss_hi = max(losses) if max(losses) > 0 else 1.0

    metric_series = []
    lo, hi = 0.0, 1.0
    for name, color in _METRIC_COLORS:
        values = [getattr(r, name) for r in reports]
        finite = [v for v in values if not math.isnan(v)]
        if finite:
            lo = min([lo] + finite)
        metric_series.append((name, color, values))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif">',
        f'<text x="{_W / 2:.0f}" y="24" text-anchor="middle" font-size="17">{title}</text>',
    ]
    parts += _panel(70, "train loss", epochs, [("loss", "#111111", losses)], 0.0, loss_hi)
    parts += _panel(540, "test metrics", epochs, metric_series, lo, hi)
    parts.append("</svg>")
    Path(out_path).write_text("\n".join(parts) + "\n")
