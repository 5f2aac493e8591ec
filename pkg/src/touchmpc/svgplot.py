"""Minimal deterministic SVG step-plot writer.

Matplotlib embeds run-dependent ids and metadata, which breaks the
byte-identical-report guarantee, so the benchmark draws its threshold
curves with this small fixed-format emitter instead.
"""

from __future__ import annotations

_COLORS = ("#e66101", "#0571b0", "#2ca25f", "#756bb1", "#636363")


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def step_plot_svg(curves: dict[str, list[tuple[float, float]]], title: str,
                  x_label: str, y_label: str, width: int = 480,
                  height: int = 320) -> str:
    """Render named step curves [(x, y), ...] into an SVG document string."""
    pad_l, pad_r, pad_t, pad_b = 56, 16, 34, 44
    plot_w = width - pad_l - pad_r
    plot_h = height - pad_t - pad_b
    xs = [x for pts in curves.values() for x, _ in pts] or [0.0, 1.0]
    ys = [y for pts in curves.values() for _, y in pts] or [0.0, 1.0]
    x_min, x_max = min(xs), max(xs)
    y_min, y_max = 0.0, max(max(ys), 1.0)
    if x_max <= x_min:
        x_max = x_min + 1.0

    def px(x: float) -> float:
        return pad_l + plot_w * (x - x_min) / (x_max - x_min)

    def py(y: float) -> float:
        return pad_t + plot_h * (1.0 - (y - y_min) / (y_max - y_min))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{pad_l}" y1="{pad_t + plot_h}" x2="{pad_l + plot_w}" '
        f'y2="{pad_t + plot_h}" stroke="black"/>',
        f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + plot_h}" '
        f'stroke="black"/>',
        f'<text x="{pad_l + plot_w / 2:.0f}" y="{height - 8}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{x_label}</text>',
        f'<text x="14" y="{pad_t + plot_h / 2:.0f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 14 {pad_t + plot_h / 2:.0f})">{y_label}</text>',
    ]
    # axis ticks at the extremes
    for x in (x_min, x_max):
        parts.append(f'<text x="{px(x):.1f}" y="{pad_t + plot_h + 16}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="10">{_fmt(x)}</text>')
    for y in (y_min, y_max):
        parts.append(f'<text x="{pad_l - 6}" y="{py(y) + 3:.1f}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="10">{_fmt(y)}</text>')
    for idx, (name, pts) in enumerate(sorted(curves.items())):
        color = _COLORS[idx % len(_COLORS)]
        if pts:
            coords = []
            prev_y = None
            for x, y in pts:
                if prev_y is not None:
                    coords.append(f"{px(x):.1f},{py(prev_y):.1f}")
                coords.append(f"{px(x):.1f},{py(y):.1f}")
                prev_y = y
            parts.append(f'<polyline fill="none" stroke="{color}" '
                         f'stroke-width="1.5" points="{" ".join(coords)}"/>')
        ly = pad_t + 14 + 14 * idx
        parts.append(f'<line x1="{pad_l + plot_w - 110}" y1="{ly - 4}" '
                     f'x2="{pad_l + plot_w - 90}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{pad_l + plot_w - 84}" y="{ly}" '
                     f'font-family="sans-serif" font-size="11">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
