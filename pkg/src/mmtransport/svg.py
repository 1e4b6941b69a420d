"""Minimal SVG writer for plan, snapshot and margin-trace figures.

Output is plain text with fixed float formatting so identical inputs give
byte-identical files.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#4e79a7", "#f28e2b", "#59a14f", "#b07aa1", "#76b7b2", "#edc948", "#ff9da7",
           "#9c755f", "#bab0ac", "#e15759"]


def _f(x) -> str:
    return f"{float(x):.4f}".rstrip("0").rstrip(".")


class Canvas:
    """World-coordinate canvas with y pointing up."""

    def __init__(self, lo, hi, width=640, margin=20, comment=""):
        self.lo = np.asarray(lo, float)
        self.hi = np.asarray(hi, float)
        span = self.hi - self.lo
        self.scale = (width - 2 * margin) / span[0]
        self.margin = margin
        self.width = width
        self.height = int(round(span[1] * self.scale + 2 * margin))
        self.items = []
        self.comment = comment

    def xy(self, pts):
        pts = np.atleast_2d(np.asarray(pts, float))
        x = self.margin + (pts[:, 0] - self.lo[0]) * self.scale
        y = self.height - self.margin - (pts[:, 1] - self.lo[1]) * self.scale
        return np.column_stack([x, y])

    def polygon(self, pts, fill="none", stroke="black", width=1.0, opacity=1.0):
        s = " ".join(f"{_f(x)},{_f(y)}" for x, y in self.xy(pts))
        self.items.append(f'<polygon points="{s}" fill="{fill}" stroke="{stroke}" '
                          f'stroke-width="{_f(width)}" fill-opacity="{_f(opacity)}"/>')

    def polyline(self, pts, stroke="black", width=1.0, dash=None):
        s = " ".join(f"{_f(x)},{_f(y)}" for x, y in self.xy(pts))
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<polyline points="{s}" fill="none" stroke="{stroke}" '
                          f'stroke-width="{_f(width)}"{d}/>')

    def circle(self, c, r, fill="none", stroke="black", width=1.0, opacity=1.0):
        (x, y), = self.xy(c)
        self.items.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="{_f(r * self.scale)}" fill="{fill}" '
                          f'stroke="{stroke}" stroke-width="{_f(width)}" fill-opacity="{_f(opacity)}"/>')

    def text(self, pos, s, size=12, anchor="start"):
        (x, y), = self.xy(pos)
        self.items.append(f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" '
                          f'text-anchor="{anchor}" font-family="sans-serif">{escape(s)}</text>')

    def render(self) -> str:
        head = ['<?xml version="1.0" encoding="UTF-8"?>']
        if self.comment:
            head.append(f"<!-- {escape(self.comment).replace('--', '- -')} -->")
        head.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
                    f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">')
        head.append(f'<rect width="{self.width}" height="{self.height}" fill="white"/>')
        return "\n".join(head + self.items + ["</svg>", ""])


def _world_canvas(world, comment):
    v = world.bounds.vertices
    c = Canvas(v.min(axis=0), v.max(axis=0), comment=comment)
    c.polygon(v, stroke="black", width=2)
    for o in world.statics:
        c.polygon(o.shape, fill="#444444", stroke="#222222")
    return c


def plan_svg(world, plan, comment="") -> str:
    """Obstacles, regions, seed points, formation graph and the global path."""
    c = _world_canvas(world, comment)
    for k, r in enumerate(plan.regions.regions):
        col = PALETTE[k % len(PALETTE)]
        c.polygon(r.vertices, fill=col, stroke=col, opacity=0.15)
    g = plan.graph
    for i, j in g.edges:
        c.polyline([g.nodes[i].p, g.nodes[j].p], stroke="#999999", width=0.8)
    for node in g.nodes:
        c.circle(node.p, 0.04, fill="#999999", stroke="none")
    for s in plan.seeds:
        c.circle(s, 0.06, fill="#e15759", stroke="none")
    c.polyline(plan.waypoints, stroke="#222222", width=2, dash="6,4")
    ts = np.linspace(0.0, plan.reference.T, 200)
    c.polyline(plan.reference(ts), stroke="#e15759", width=2)
    c.circle(world.start, 0.1, fill="#59a14f", stroke="none")
    c.circle(world.goal, 0.1, fill="#4e79a7", stroke="none")
    return c.render()


def snapshot_svg(world, spec, config, t, trail=None, comment="") -> str:
    """Formation footprint and dynamic obstacles at time ``t``."""
    from .mmr_model import ee_positions, rot
    from .world import dynamic_state

    c = _world_canvas(world, comment)
    if trail is not None and len(trail) > 1:
        c.polyline(trail, stroke="#4e79a7", width=1.5)
    R = rot(config.psi)
    c.polygon(config.p + spec.grasp.object_footprint @ R.T, fill="#f28e2b", stroke="#b05a00", opacity=0.6)
    ee = ee_positions(config)
    fp = np.asarray(spec.base.footprint, float)
    for i in range(config.n):
        b = config.base[i]
        c.polygon(b + fp @ rot(config.phi[i]).T, fill="#4e79a7", stroke="#203f66", opacity=0.8)
        c.polyline([b, ee[i]], stroke="#203f66", width=2)
    for d in world.dynamics:
        pos, _ = dynamic_state(d, t)
        c.circle(pos, d.radius, fill="#e15759", stroke="#a02020", opacity=0.5)
    c.text(world.bounds.vertices.min(axis=0) + [0.1, 0.1], f"t = {t:.2f} s")
    return c.render()


def margin_svg(times, static, dynamic, lines=(0.05, 0.1), comment="") -> str:
    """Safety-margin trace with horizontal reference lines."""
    times = np.asarray(times, float)
    series = [np.asarray(static, float)] + [np.asarray(d, float) for d in dynamic]
    top = max(max(float(np.max(s)) for s in series), max(lines)) * 1.05
    top = min(top, 2.0)
    t_end = max(float(times[-1]), 1e-6)
    c = Canvas([0.0, 0.0], [t_end, top], comment=comment)
    # stretch the vertical axis to a fixed aspect
    ys = 0.5 * (c.width - 2 * c.margin) / top
    c.height = int(round(top * ys + 2 * c.margin))

    def xy(pts, c=c, ys=ys):
        pts = np.atleast_2d(np.asarray(pts, float))
        return np.column_stack([c.margin + pts[:, 0] * c.scale,
                                c.height - c.margin - np.clip(pts[:, 1], 0.0, top) * ys])

    c.xy = xy
    c.polyline([[0, 0], [t_end, 0]], stroke="black")
    c.polyline([[0, 0], [0, top]], stroke="black")
    for y in lines:
        c.polyline([[0, y], [t_end, y]], stroke="#777777", dash="4,3")
        c.text([0.01 * t_end, y], f"{y:g} m", size=10)
    c.polyline(np.column_stack([times, series[0]]), stroke="#222222", width=1.5)
    for k, s in enumerate(series[1:]):
        c.polyline(np.column_stack([times, s]), stroke=PALETTE[k % len(PALETTE)], width=1.5)
    c.text([t_end, 0.0], f"{t_end:.2f} s", size=10, anchor="end")
    return c.render()
