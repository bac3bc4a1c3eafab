"""Precision and success plots as standalone SVG text."""

from __future__ import annotations

from xml.sax.saxutils import escape

from .metrics import PRECISION_THRESHOLDS, SUCCESS_THRESHOLDS

COLORS = ("#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")
W, H = 420, 320
L, R, T, B = 50, 20, 30, 45


def _polyline(xs, ys, x_max, color):
    pw, ph = W - L - R, H - T - B
    pts = " ".join(f"{L + pw * x / x_max:.2f},{T + ph * (1 - y):.2f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>'


def curve_svg(title, xlabel, xs, x_max, curves) -> str:
    """``curves`` is a list of ``(label, ys)``; every curve shares the x samples."""
    pw, ph = W - L - R, H - T - B
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="{L}" y="{T}" width="{pw}" height="{ph}" fill="white" stroke="black"/>',
        f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<text x="{L + pw / 2}" y="{H - 8}" text-anchor="middle" font-size="11">{escape(xlabel)}</text>',
    ]
    for i in range(6):
        frac = i / 5
        y = T + ph * (1 - frac)
        x = L + pw * frac
        out.append(f'<text x="{L - 6}" y="{y + 4:.1f}" text-anchor="end" font-size="10">{frac:.1f}</text>')
        out.append(f'<text x="{x:.1f}" y="{T + ph + 14}" text-anchor="middle" font-size="10">{x_max * frac:g}</text>')
    for k, (label, ys) in enumerate(curves):
        color = COLORS[k % len(COLORS)]
        out.append(_polyline(xs, ys, x_max, color))
        ly = T + ph - 12 - 14 * (len(curves) - 1 - k)
        out.append(f'<text x="{L + pw - 6}" y="{ly}" text-anchor="end" font-size="10" fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def precision_svg(reports) -> str:
    """``reports`` maps a run label to its MetricsReport."""
    curves = [(f"{name} [{r.dpr:.3f}]", r.precision) for name, r in reports.items()]
    return curve_svg("Precision plots of OPE", "Location error threshold (px)",
                     PRECISION_THRESHOLDS, float(PRECISION_THRESHOLDS[-1]), curves)


def success_svg(reports) -> str:
    curves = [(f"{name} [{r.success.mean():.3f}]", r.success) for name, r in reports.items()]
    return curve_svg("Success plots of OPE", "Overlap threshold", SUCCESS_THRESHOLDS, 1.0, curves)
