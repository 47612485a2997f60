"""Datasaurus ingestion and Datasaurus-Grid synthesis."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rpd.errors import ConfigurationError, IngestionError

DATASAURUS_NAMES = (
    "away", "bullseye", "circle", "dino", "dots", "h_lines", "high_lines",
    "slant_down", "slant_up", "star", "v_lines", "wide_lines", "x_shape",
)
DEFAULT_SELECTION = (
    "dino", "away", "bullseye", "circle", "dots", "h_lines", "slant_up", "star", "x_shape",
)
DEFAULT_SPACING = 3.0


@dataclass
class PointSet2D:
    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(self.points)):
            raise ConfigurationError("point coordinates must be finite")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.points),):
                raise ConfigurationError("labels must have one entry per point")

    def __len__(self) -> int:
        return len(self.points)

    def replicate(self, k: int) -> PointSet2D:
        labels = None if self.labels is None else np.tile(self.labels, k)
        return PointSet2D(np.tile(self.points, (k, 1)), labels)

    def with_regions(self, spacing: float = DEFAULT_SPACING) -> PointSet2D:
        return PointSet2D(self.points, region_of(self.points, spacing))

    def to_csv(self, path) -> None:
        labels = self.labels if self.labels is not None else region_of(self.points)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell", "x", "y"])
            for lab, (x, y) in zip(labels, self.points):
                w.writerow([int(lab), repr(float(x)), repr(float(y))])

    @classmethod
    def from_csv(cls, path) -> PointSet2D:
        pts, labs = [], []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"x", "y"} <= set(reader.fieldnames):
                raise IngestionError(f"{path}: expected columns x, y")
            has_cell = "cell" in reader.fieldnames
            for lineno, row in enumerate(reader, start=2):
                try:
                    pts.append((float(row["x"]), float(row["y"])))
                    if has_cell:
                        labs.append(int(row["cell"]))
                except (TypeError, ValueError) as exc:
                    raise IngestionError(f"{path}:{lineno}: {exc}") from None
        return cls(np.array(pts).reshape(-1, 2), np.array(labs) if has_cell else None)


def normalize(v):
    return (np.asarray(v, dtype=np.float64) - 50.0) / 50.0


def denormalize(v):
    return np.asarray(v, dtype=np.float64) * 50.0 + 50.0


def load_datasaurus(path, normalized: bool = True) -> dict[str, PointSet2D]:
    """Read a DatasaurusDozen TSV (header ``dataset, x, y``) into named point sets."""
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"{path}: no such file")
    groups: dict[str, list] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or [h.strip() for h in header][:3] != ["dataset", "x", "y"]:
            raise IngestionError(f"{path}:1: expected header 'dataset\\tx\\ty', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 3:
                raise IngestionError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            name = row[0].strip()
            if name not in DATASAURUS_NAMES:
                raise IngestionError(f"{path}:{lineno}: unknown dataset name {name!r}")
            try:
                x, y = float(row[1]), float(row[2])
            except ValueError:
                raise IngestionError(f"{path}:{lineno}: non-numeric coordinate in {row[1:3]}") from None
            groups.setdefault(name, []).append((x, y))
    out = {}
    for name, pts in groups.items():
        arr = np.array(pts)
        out[name] = PointSet2D(normalize(arr) if normalized else arr)
    return out


@dataclass(frozen=True)
class GridSpec:
    spacing: float = DEFAULT_SPACING
    scales: tuple = (0.1,) * 9
    selection: tuple = DEFAULT_SELECTION

    def __post_init__(self):
        if not self.spacing > 0:
            raise ConfigurationError("grid spacing must be positive")
        if len(self.selection) != 9:
            raise ConfigurationError(f"need exactly nine source names, got {len(self.selection)}")
        if len(self.scales) != 9:
            raise ConfigurationError("need nine per-cell scales")
        if any(not s > 0 for s in self.scales):
            raise ConfigurationError("all cell scales must be positive")

    @classmethod
    def uniform(cls, scale: float, spacing: float = DEFAULT_SPACING,
                selection=DEFAULT_SELECTION) -> GridSpec:
        return cls(spacing, (float(scale),) * 9, tuple(selection))

    @classmethod
    def hetero(cls, low: float = 0.05, high: float = 1.0, spacing: float = DEFAULT_SPACING,
               selection=DEFAULT_SELECTION) -> GridSpec:
        return cls(spacing, tuple(float(s) for s in np.geomspace(low, high, 9)), tuple(selection))


def cell_center(k: int, spacing: float = DEFAULT_SPACING) -> np.ndarray:
    return np.array([(k % 3 - 1) * spacing, (k // 3 - 1) * spacing])


def build_grid(sources: dict[str, PointSet2D], spec: GridSpec) -> PointSet2D:
    """Place ``spec.selection[k]`` scaled by ``spec.scales[k]`` at grid cell ``k``.

    Cell ``k`` sits at ``((k % 3 - 1) * spacing, (k // 3 - 1) * spacing)``.
    """
    missing = [n for n in spec.selection if n not in sources]
    if missing:
        raise ConfigurationError(f"unknown source distributions {missing}")
    pts, labels = [], []
    for k, (name, scale) in enumerate(zip(spec.selection, spec.scales)):
        src = sources[name].points
        pts.append(src * scale + cell_center(k, spec.spacing))
        labels.append(np.full(len(src), k))
    return PointSet2D(np.concatenate(pts), np.concatenate(labels))


def region_of(points, spacing: float = DEFAULT_SPACING):
    """Region id ``3 * row + col`` from the intervals ``(-inf,-s/2), [-s/2,s/2), [s/2,inf)``."""
    if not spacing > 0:
        raise ConfigurationError("spacing must be positive")
    p = np.asarray(points, dtype=np.float64)
    edges = np.array([-spacing / 2, spacing / 2])
    col = np.searchsorted(edges, p[..., 0], side="right")
    row = np.searchsorted(edges, p[..., 1], side="right")
    ids = 3 * row + col
    return int(ids) if np.ndim(ids) == 0 else ids


# --- procedural stand-in -----------------------------------------------------
#
# Shapes named after the thirteen Datasaurus Dozen sets, 142 points each, in the
# raw [0, 100] coordinate frame. Used only when the real TSV is not available.

_N_PER_SET = 142


def _along(poly, n, rng, jitter):
    poly = np.asarray(poly, dtype=np.float64)
    seg = np.diff(poly, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    pos = np.sort(rng.uniform(0, lengths.sum(), n))
    cum = np.concatenate([[0], np.cumsum(lengths)])
    idx = np.clip(np.searchsorted(cum, pos, side="right") - 1, 0, len(seg) - 1)
    frac = (pos - cum[idx]) / lengths[idx]
    return poly[idx] + frac[:, None] * seg[idx] + rng.normal(0, jitter, (n, 2))


def _ring(cx, cy, r, n, rng, jitter=1.0):
    th = rng.uniform(0, 2 * math.pi, n)
    return np.c_[cx + r * np.cos(th), cy + r * np.sin(th)] + rng.normal(0, jitter, (n, 2))


_DINO_OUTLINE = [
    (55, 97), (48, 96), (44, 92), (46, 86), (52, 84), (52, 76), (46, 70), (36, 66),
    (28, 58), (24, 48), (25, 38), (22, 28), (18, 18), (26, 24), (32, 34), (36, 30),
    (34, 14), (40, 14), (42, 28), (50, 26), (52, 10), (58, 10), (58, 28), (66, 34),
    (76, 40), (86, 48), (96, 54), (84, 54), (72, 52), (62, 54), (58, 62), (60, 72),
    (62, 82), (62, 92), (55, 97),
]


def synthetic_datasaurus(seed: int = 0) -> dict[str, np.ndarray]:
    """Raw-coordinate stand-ins for the thirteen sets (not the real data)."""
    rng = np.random.default_rng(seed)
    n = _N_PER_SET
    out = {}
    out["away"] = np.c_[rng.uniform(16, 92, n), rng.uniform(2, 98, n)]
    half = n // 2
    out["bullseye"] = np.r_[_ring(54, 47, 16, half, rng), _ring(54, 47, 34, n - half, rng)]
    out["circle"] = _ring(54, 47, 30, n, rng, jitter=0.8)
    out["dino"] = _along(_DINO_OUTLINE, n, rng, 0.8)
    centers = np.array([(x, y) for x in (30, 55, 80) for y in (20, 50, 80)], dtype=float)
    out["dots"] = centers[np.arange(n) % 9] + rng.normal(0, 1.5, (n, 2))
    ys = np.array([10, 30, 50, 70, 90], dtype=float)
    out["h_lines"] = np.c_[rng.uniform(20, 90, n), ys[np.arange(n) % 5] + rng.normal(0, 0.5, n)]
    band = np.where(rng.uniform(size=n) < 0.5, 30.0, 80.0)
    out["high_lines"] = np.c_[rng.uniform(20, 90, n), band + rng.normal(0, 2.5, n)]
    offs = np.array([-25, 0, 25], dtype=float)
    u = rng.uniform(20, 80, n)
    out["slant_down"] = np.c_[u, 120 - u + offs[np.arange(n) % 3] - 20 + rng.normal(0, 0.8, n)]
    out["slant_up"] = np.c_[u, u - 5 + offs[np.arange(n) % 3] + rng.normal(0, 0.8, n)]
    k = np.arange(11)
    r = np.where(k % 2 == 0, 40.0, 16.0)
    th = math.pi / 2 + k * math.pi / 5
    out["star"] = _along(np.c_[54 + r * np.cos(th), 50 + r * np.sin(th)], n, rng, 0.6)
    xs = np.array([30, 45, 55, 65, 80], dtype=float)
    out["v_lines"] = np.c_[xs[np.arange(n) % 5] + rng.normal(0, 0.5, n), rng.uniform(5, 95, n)]
    cols = np.where(rng.uniform(size=n) < 0.5, 35.0, 65.0)
    out["wide_lines"] = np.c_[cols + rng.normal(0, 3.0, n), rng.uniform(5, 95, n)]
    out["x_shape"] = np.r_[_along([(25, 15), (85, 85)], half, rng, 0.8),
                           _along([(25, 85), (85, 15)], n - half, rng, 0.8)]
    return {name: out[name] for name in DATASAURUS_NAMES}


def write_datasaurus_tsv(sets: dict[str, np.ndarray], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("dataset\tx\ty\n")
        for name, arr in sets.items():
            for x, y in arr:
                fh.write(f"{name}\t{x:.6f}\t{y:.6f}\n")


def synthetic_sources(seed: int = 0) -> dict[str, PointSet2D]:
    return {k: PointSet2D(normalize(v)) for k, v in synthetic_datasaurus(seed).items()}


def datasaurus_grid(scale: float | None = 0.1, hetero: bool = False, tsv=None,
                    spacing: float = DEFAULT_SPACING, selection=DEFAULT_SELECTION) -> PointSet2D:
    """Datasaurus-Grid from ``tsv`` if given, otherwise from the procedural stand-in."""
    sources = load_datasaurus(tsv) if tsv is not None else synthetic_sources()
    spec = (GridSpec.hetero(spacing=spacing, selection=selection) if hetero
            else GridSpec.uniform(scale, spacing, selection))
    return build_grid(sources, spec)
