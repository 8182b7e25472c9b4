"""Static SVG maps of node fields and optional edge-value overlays."""

from __future__ import annotations

import numpy as np

__all__ = ["render_field", "COLOR_LOW", "COLOR_HIGH"]

COLOR_LOW = (33, 102, 172)
COLOR_HIGH = (178, 24, 43)

_VIEW = 800.0
_MARGIN = 40.0


def _lerp_color(t: float) -> str:
    rgb = [round(a + t * (b - a)) for a, b in zip(COLOR_LOW, COLOR_HIGH)]
    return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"


def _normalize(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.full(values.shape, 0.5)
    return (values - lo) / (hi - lo)


def render_field(field: np.ndarray, coords: np.ndarray, *,
                 edges=None, edge_values=None, node_radius: float = 8.0) -> str:
    """SVG document with one colored circle per node.

    Coordinates are scaled into an 800x800 viewport; fill colors interpolate
    linearly between the low and high anchor colors over the value range (a
    constant field maps to the midpoint color). When ``edges`` and
    ``edge_values`` are given, line segments between endpoint nodes are
    colored on the same scale.
    """
    field = np.asarray(field, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape[0] < field.size:
        raise ValueError(f"coords cover {coords.shape[0]} nodes but field has {field.size}")
    span = _VIEW - 2.0 * _MARGIN
    xy = coords[:field.size].copy()
    for d in range(2):
        lo, hi = xy[:, d].min(), xy[:, d].max()
        xy[:, d] = 0.5 if hi == lo else (xy[:, d] - lo) / (hi - lo)
    px = _MARGIN + span * xy[:, 0]
    py = _MARGIN + span * (1.0 - xy[:, 1])  # y grows upward on the map

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(_VIEW)}" '
        f'height="{int(_VIEW)}" viewBox="0 0 {int(_VIEW)} {int(_VIEW)}">',
    ]
    if edges is not None and edge_values is not None:
        ev = np.asarray(edge_values, dtype=np.float64)
        if len(edges) != ev.size:
            raise ValueError("edge_values length must match edges")
        tv = _normalize(ev)
        for (u, v), t in zip(edges, tv):
            parts.append(
                f'<line x1="{px[u]:.2f}" y1="{py[u]:.2f}" x2="{px[v]:.2f}" '
                f'y2="{py[v]:.2f}" stroke="{_lerp_color(float(t))}" stroke-width="4"/>'
            )
    elif edges is not None:
        for u, v in edges:
            parts.append(
                f'<line x1="{px[u]:.2f}" y1="{py[u]:.2f}" x2="{px[v]:.2f}" '
                f'y2="{py[v]:.2f}" stroke="rgb(180,180,180)" stroke-width="1.5"/>'
            )
    for i, t in enumerate(_normalize(field)):
        parts.append(
            f'<circle cx="{px[i]:.2f}" cy="{py[i]:.2f}" r="{node_radius}" '
            f'fill="{_lerp_color(float(t))}"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
