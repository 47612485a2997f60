"""Minimal SVG writers for scatter plots and reverse-process trajectories."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from rpd.data import DEFAULT_SPACING, cell_center

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
           "#7f7f7f", "#17becf")


class _Canvas:
    def __init__(self, bounds, size: int = 480, margin: int = 24, title: str | None = None):
        (self.x0, self.x1), (self.y0, self.y1) = bounds
        self.size, self.margin = size, margin
        self.parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
                      f'viewBox="0 0 {size} {size}">',
                      f'<rect width="{size}" height="{size}" fill="white"/>']
        if title:
            self.parts.append(f'<text x="{margin}" y="{margin - 8}" font-family="sans-serif" '
                              f'font-size="12">{escape(title)}</text>')

    def map(self, pts):
        pts = np.asarray(pts, dtype=np.float64)
        span = self.size - 2 * self.margin
        u = self.margin + (pts[..., 0] - self.x0) / (self.x1 - self.x0) * span
        v = self.size - self.margin - (pts[..., 1] - self.y0) / (self.y1 - self.y0) * span
        return u, v

    def points(self, pts, color, radius=1.2, opacity=0.6):
        u, v = self.map(pts)
        inside = (u >= 0) & (u <= self.size) & (v >= 0) & (v <= self.size)
        for a, b in zip(u[inside], v[inside]):
            self.parts.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="{radius}" fill="{color}" '
                              f'fill-opacity="{opacity}"/>')

    def polyline(self, pts, color, width=0.6, opacity=0.5):
        u, v = self.map(pts)
        coords = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(u, v))
        self.parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}" stroke-opacity="{opacity}"/>')

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.parts + ["</svg>"]) + "\n")


def _square_bounds(pts, pad: float = 0.05):
    pts = np.asarray(pts, dtype=np.float64)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    c, half = (lo + hi) / 2, max(float(np.max(hi - lo)) / 2, 1e-6) * (1 + pad)
    return (c[0] - half, c[0] + half), (c[1] - half, c[1] + half)


def scatter_svg(path, layers, bounds=None, title=None, size: int = 480) -> None:
    """``layers`` is a list of ``(points, color)`` drawn in order."""
    allpts = np.concatenate([np.asarray(p).reshape(-1, 2) for p, _ in layers])
    canvas = _Canvas(bounds or _square_bounds(allpts), size, title=title)
    for pts, color in layers:
        canvas.points(pts, color)
    canvas.save(path)


def overview_and_zooms(out_dir, samples, reference=None, spacing: float = DEFAULT_SPACING,
                       prefix: str = "samples") -> list[Path]:
    """One overview scatter plus a zoom on each of the nine grid cells."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = np.asarray(getattr(samples, "points", samples))
    layers = []
    if reference is not None:
        layers.append((np.asarray(getattr(reference, "points", reference)), "#bbbbbb"))
    layers.append((samples, PALETTE[0]))
    half = 1.5 * spacing
    written = [out / f"{prefix}_overview.svg"]
    scatter_svg(written[0], layers, ((-half, half), (-half, half)), title=prefix)
    for k in range(9):
        c = cell_center(k, spacing)
        b = ((c[0] - spacing / 2, c[0] + spacing / 2), (c[1] - spacing / 2, c[1] + spacing / 2))
        cell_layers = []
        for pts, color in layers:
            inside = np.all(np.abs(pts - c) < spacing / 2, axis=1)
            cell_layers.append((pts[inside], color))
        pts_all = np.concatenate([p for p, _ in cell_layers])
        if len(pts_all):
            b = _square_bounds(pts_all, pad=0.15)
        path = out / f"{prefix}_cell{k}.svg"
        scatter_svg(path, cell_layers, b, title=f"{prefix} cell {k}")
        written.append(path)
    return written


def trajectory_svg(path, trajectory, max_paths: int = 64, title=None) -> None:
    """Polylines from ``x_T`` to ``x_0`` for up to ``max_paths`` samples; endpoints dotted."""
    traj = np.asarray(trajectory, dtype=np.float64)
    traj = traj[:, :max_paths]
    canvas = _Canvas(_square_bounds(traj.reshape(-1, 2)), title=title)
    for i in range(traj.shape[1]):
        canvas.polyline(traj[:, i], PALETTE[i % len(PALETTE)])
    canvas.points(traj[0], "#999999", radius=1.5)
    canvas.points(traj[-1], "#000000", radius=1.5, opacity=0.9)
    canvas.save(path)
