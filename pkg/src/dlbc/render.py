"""Hand-written SVG output: animated episode replays and metric curves.

Numbers are formatted with fixed precision so that identical inputs give
identical bytes.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

GROUP_COLORS = ("#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b")
EVADER_COLOR = "#d62728"
SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


def _f(x: float) -> str:
    s = f"{x:.4f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def episode_svg(
    records: list[dict],
    num_pursuers: int,
    radii,
    half_width: float,
    assignment,
    frame_seconds: float = 0.1,
    size: int = 600,
    title: str = "",
) -> str:
    """Animated SVG of one episode from trajectory records.

    Pursuers are colored by group, evaders red. Each evader carries a ring
    that flashes on steps where some pursuer overlaps it.
    """
    pos = np.array([r["positions"] for r in records])  # (T, E, 2)
    n_frames, n_ent = pos.shape[:2]
    radii = np.asarray(radii, dtype=float)
    dur = _f(max(n_frames, 1) * frame_seconds) + "s"
    pad = 0.05 * half_width
    lo, span = -half_width - pad, 2 * (half_width + pad)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="{_f(lo)} {_f(lo)} {_f(span)} {_f(span)}">',
    ]
    if title:
        out.append(f"<title>{escape(title)}</title>")
    hw = _f(half_width)
    out.append(
        f'<rect x="-{hw}" y="-{hw}" width="{_f(2 * half_width)}" height="{_f(2 * half_width)}" '
        f'fill="#fafafa" stroke="#333" stroke-width="{_f(0.005 * span)}"/>'
    )
    # flip y so that +y points up
    out.append('<g transform="scale(1,-1)">')
    for e in range(n_ent):
        color = GROUP_COLORS[assignment[e] % len(GROUP_COLORS)] if e < num_pursuers else EVADER_COLOR
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in pos[:, e])
        out.append(
            f'<polyline class="trail" points="{pts}" fill="none" stroke="{color}" '
            f'stroke-opacity="0.35" stroke-width="{_f(0.004 * span)}"/>'
        )
    for e in range(n_ent):
        is_p = e < num_pursuers
        color = GROUP_COLORS[assignment[e] % len(GROUP_COLORS)] if is_p else EVADER_COLOR
        cls = f"pursuer group-{assignment[e]}" if is_p else "evader"
        xs = ";".join(_f(v) for v in pos[:, e, 0])
        ys = ";".join(_f(v) for v in pos[:, e, 1])
        out.append(
            f'<circle class="{cls}" data-entity="{e}" cx="{_f(pos[0, e, 0])}" cy="{_f(pos[0, e, 1])}" '
            f'r="{_f(radii[e])}" fill="{color}">'
        )
        out.append(f'<animate attributeName="cx" dur="{dur}" repeatCount="indefinite" values="{xs}"/>')
        out.append(f'<animate attributeName="cy" dur="{dur}" repeatCount="indefinite" values="{ys}"/>')
        out.append("</circle>")
    for j in range(num_pursuers, n_ent):
        d = np.linalg.norm(pos[:, :num_pursuers] - pos[:, j : j + 1], axis=-1)
        hit = (d < radii[:num_pursuers] + radii[j]).any(axis=1)
        if not hit.any():
            continue
        xs = ";".join(_f(v) for v in pos[:, j, 0])
        ys = ";".join(_f(v) for v in pos[:, j, 1])
        op = ";".join("1" if h else "0" for h in hit)
        out.append(
            f'<circle class="collision" cx="{_f(pos[0, j, 0])}" cy="{_f(pos[0, j, 1])}" '
            f'r="{_f(3 * radii[j])}" fill="none" stroke="#ffbf00" '
            f'stroke-width="{_f(0.006 * span)}" opacity="0">'
        )
        out.append(f'<animate attributeName="cx" dur="{dur}" repeatCount="indefinite" values="{xs}"/>')
        out.append(f'<animate attributeName="cy" dur="{dur}" repeatCount="indefinite" values="{ys}"/>')
        out.append(
            f'<animate attributeName="opacity" dur="{dur}" repeatCount="indefinite" '
            f'calcMode="discrete" values="{op}"/>'
        )
        out.append("</circle>")
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def curves_svg(panels: list[dict], width: int = 720, panel_height: int = 300) -> str:
    """Stacked line-chart panels.

    Each panel is ``{"title", "ylabel", "series": [{"label", "x", "mean", "std"}]}``;
    ``std`` may be None, in which case no band is drawn.
    """
    margin_l, margin_r, margin_t, margin_b = 70, 150, 30, 40
    height = panel_height * len(panels)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    plot_w = width - margin_l - margin_r
    plot_h = panel_height - margin_t - margin_b
    for pi, panel in enumerate(panels):
        y0 = pi * panel_height + margin_t
        series = panel["series"]
        xs = np.concatenate([np.asarray(s["x"], float) for s in series])
        lows, highs = [], []
        for s in series:
            m = np.asarray(s["mean"], float)
            sd = np.zeros_like(m) if s.get("std") is None else np.asarray(s["std"], float)
            lows.append(m - sd)
            highs.append(m + sd)
        ymin, ymax = float(np.min(np.concatenate(lows))), float(np.max(np.concatenate(highs)))
        if ymax - ymin < 1e-12:
            ymin, ymax = ymin - 1.0, ymax + 1.0
        xmin, xmax = float(xs.min()), float(xs.max())
        if xmax - xmin < 1e-12:
            xmin, xmax = xmin - 1.0, xmax + 1.0

        def px(x):
            return margin_l + (x - xmin) / (xmax - xmin) * plot_w

        def py(y):
            return y0 + plot_h - (y - ymin) / (ymax - ymin) * plot_h

        out.append(
            f'<text x="{margin_l}" y="{y0 - 10}" font-size="13">{escape(panel.get("title", ""))}</text>'
        )
        out.append(
            f'<rect x="{margin_l}" y="{y0}" width="{plot_w}" height="{plot_h}" '
            f'fill="none" stroke="#999"/>'
        )
        for k in range(5):
            yv = ymin + (ymax - ymin) * k / 4
            xv = xmin + (xmax - xmin) * k / 4
            out.append(f'<text x="{margin_l - 6}" y="{_f(py(yv) + 4)}" text-anchor="end">{yv:.3g}</text>')
            out.append(
                f'<text x="{_f(px(xv))}" y="{y0 + plot_h + 16}" text-anchor="middle">{xv:.3g}</text>'
            )
        out.append(
            f'<text x="16" y="{_f(y0 + plot_h / 2)}" transform="rotate(-90 16 {_f(y0 + plot_h / 2)})" '
            f'text-anchor="middle">{escape(panel.get("ylabel", ""))}</text>'
        )
        for si, s in enumerate(series):
            color = SERIES_COLORS[si % len(SERIES_COLORS)]
            x = np.asarray(s["x"], float)
            m = np.asarray(s["mean"], float)
            if s.get("std") is not None:
                sd = np.asarray(s["std"], float)
                upper = [f"{_f(px(a))},{_f(py(b))}" for a, b in zip(x, m + sd)]
                lower = [f"{_f(px(a))},{_f(py(b))}" for a, b in zip(x[::-1], (m - sd)[::-1])]
                out.append(
                    f'<polygon class="band" points="{" ".join(upper + lower)}" '
                    f'fill="{color}" fill-opacity="0.2" stroke="none"/>'
                )
            pts = " ".join(f"{_f(px(a))},{_f(py(b))}" for a, b in zip(x, m))
            out.append(f'<polyline class="curve" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            ly = y0 + 14 + 16 * si
            out.append(f'<line x1="{width - margin_r + 10}" y1="{ly - 4}" x2="{width - margin_r + 30}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{width - margin_r + 35}" y="{ly}">{escape(s["label"])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
