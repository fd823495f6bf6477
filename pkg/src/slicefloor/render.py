"""SVG drawings of placed floorplans: light blue modules, id label at each
module's lower-left corner, y axis pointing up."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import ModuleDef, Placement


@dataclass(frozen=True)
class RenderStyle:
    scale: float = 1.0
    fill: str = "#add8e6"
    stroke: str = "#1f3b57"
    stroke_width: float = 1.0
    font_size: float = 12.0
    label_inset: float = 2.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")


def _num(value: float) -> str:
    text = f"{value:.6f}".rstrip("0").rstrip(".")
    return "0" if text in ("", "-0") else text


def render_svg(placement: Placement, modules: Sequence[ModuleDef], style: RenderStyle = RenderStyle()) -> str:
    by_id = {m.id: m for m in modules}
    placed_ids = [p.id for p in placement]
    if sorted(placed_ids) != sorted(by_id) or len(set(placed_ids)) != len(placed_ids):
        raise ValueError("placement does not match the module list")
    s = style.scale
    env_w, env_h = placement.envelope.width, placement.envelope.height
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_num(env_w * s)}" height="{_num(env_h * s)}" viewBox="0 0 {_num(env_w * s)} {_num(env_h * s)}">',
        f'<g fill="{style.fill}" stroke="{style.stroke}" stroke-width="{_num(style.stroke_width)}">',
    ]
    labels = []
    for p in sorted(placement, key=lambda p: p.id):
        m = by_id[p.id]
        x = p.x * s
        top = (env_h - p.y - m.height) * s  # flip to screen coordinates
        lines.append(
            f'<rect id="P_{m.id}" x="{_num(x)}" y="{_num(top)}" width="{_num(m.width * s)}" height="{_num(m.height * s)}"/>'
        )
        labels.append(
            f'<text x="{_num(x + style.label_inset)}" y="{_num(top + m.height * s - style.label_inset)}">P_{m.id}</text>'
        )
    lines.append("</g>")
    lines.append(f'<g font-family="sans-serif" font-size="{_num(style.font_size)}" fill="#000000">')
    lines.extend(labels)
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
