"""Static SVG overlays of oriented boxes."""
from __future__ import annotations

from typing import Iterable, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

from .formats import fmt
from .geometry import RotatedBox, obb_to_quad

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)  # fmt: skip


def svg_overlay(
    width: float,
    height: float,
    layers: Sequence[Tuple[str, Iterable[Tuple[RotatedBox, int, Optional[str]]]]],
    dashed: Sequence[str] = (),
) -> str:
    """Render named layers of ``(box, class_id, label)`` on a width x height frame.

    Image coordinates are drawn as-is (y down), matching how the boxes are
    annotated on pixels.
    """
    out = [
        '<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{fmt(width)}" height="{fmt(height)}" '
        f'viewBox="0 0 {fmt(width)} {fmt(height)}">\n',
        f'<rect x="0" y="0" width="{fmt(width)}" height="{fmt(height)}" '
        'fill="white" stroke="black"/>\n',
    ]
    for name, items in layers:
        dash = ' stroke-dasharray="4 2"' if name in dashed else ""
        out.append(f'<g id="{escape(name)}">\n')
        for box, class_id, label in items:
            color = PALETTE[class_id % len(PALETTE)]
            pts = " ".join(f"{fmt(x)},{fmt(y)}" for x, y in obb_to_quad(box).points)
            out.append(
                f'<polygon points="{pts}" fill="none" stroke="{color}"{dash}/>\n'
            )
            if label:
                out.append(
                    f'<text x="{fmt(box.cx)}" y="{fmt(box.cy)}" font-size="10" '
                    f'fill="{color}">{escape(label)}</text>\n'
                )
        out.append("</g>\n")
    out.append("</svg>\n")
    return "".join(out)
