"""1-Wasserstein distance and its region-wise average on the 3x3 grid."""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from rpd.data import DEFAULT_SPACING, region_of
from rpd.errors import MetricError

# POT probes every installed array backend on import, which costs seconds
for _name in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_name}", "1")
import ot  # noqa: E402

MAX_EXACT = 2000
_EMD_MAX_ITER = 10_000_000


@dataclass(frozen=True)
class W1Result:
    value: float
    n_a: int
    n_b: int
    exact: bool


def _points(x) -> np.ndarray:
    p = np.asarray(getattr(x, "points", x), dtype=np.float64)
    return p.reshape(-1, p.shape[-1]) if p.size else p.reshape(0, 2)


def w1_exact(a: np.ndarray, b: np.ndarray) -> float:
    """Exact W1 with uniform weights: assignment for equal sizes, network simplex otherwise."""
    cost = cdist(a, b)
    if len(a) == len(b):
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].mean())
    wa = np.full(len(a), 1.0 / len(a))
    wb = np.full(len(b), 1.0 / len(b))
    return float(ot.emd2(wa, wb, cost, numItermax=_EMD_MAX_ITER))


def wasserstein1(a, b, max_exact: int = MAX_EXACT, seed: int = 0) -> W1Result:
    """W1 under Euclidean cost.

    Exact when both sides have at most ``max_exact`` points. Otherwise each
    side is subsampled without replacement to ``max_exact`` points, each side
    from its own generator seeded with ``seed`` (so identical inputs pick
    identical subsamples); the sizes in the result are the subsample sizes.
    """
    a, b = _points(a), _points(b)
    if len(a) == 0 or len(b) == 0:
        raise MetricError("W1 of an empty point set is undefined")
    if max(len(a), len(b)) <= max_exact:
        return W1Result(w1_exact(a, b), len(a), len(b), True)
    if len(a) > max_exact:
        a = a[np.random.default_rng(seed).choice(len(a), max_exact, replace=False)]
    if len(b) > max_exact:
        b = b[np.random.default_rng(seed).choice(len(b), max_exact, replace=False)]
    return W1Result(w1_exact(a, b), len(a), len(b), False)


@dataclass(frozen=True)
class RegionReport:
    value: float
    regions: tuple  # W1Result or None (skipped) per region id 0..8

    @property
    def skipped(self) -> list[int]:
        return [k for k, r in enumerate(self.regions) if r is None]


def region_wise_w1(a, b, spacing: float = DEFAULT_SPACING) -> RegionReport:
    """Average of exact per-region W1 over the nine grid regions.

    A region empty on either side is skipped with a warning and the average
    is taken over the remaining regions.
    """
    a, b = _points(a), _points(b)
    ra, rb = region_of(a, spacing), region_of(b, spacing)
    regions = []
    for k in range(9):
        pa, pb = a[ra == k], b[rb == k]
        if len(pa) == 0 or len(pb) == 0:
            regions.append(None)
            continue
        regions.append(W1Result(w1_exact(pa, pb), len(pa), len(pb), True))
    values = [r.value for r in regions if r is not None]
    if len(values) < 9:
        skipped = [k for k, r in enumerate(regions) if r is None]
        warnings.warn(f"regions {skipped} are empty on one side and were skipped", stacklevel=2)
    if not values:
        raise MetricError("no region is populated on both sides")
    return RegionReport(float(np.mean(values)), tuple(regions))


def write_metrics_csv(path, global_w1: W1Result | None, report: RegionReport | None) -> None:
    """Columns ``metric, region, value, n_a, n_b, exact_flag``; skipped regions have empty values."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "region", "value", "n_a", "n_b", "exact_flag"])
        if global_w1 is not None:
            w.writerow(["w1", "all", repr(global_w1.value), global_w1.n_a, global_w1.n_b,
                        int(global_w1.exact)])
        if report is not None:
            for k, r in enumerate(report.regions):
                if r is None:
                    w.writerow(["w1_region", k, "", "", "", ""])
                else:
                    w.writerow(["w1_region", k, repr(r.value), r.n_a, r.n_b, int(r.exact)])
            w.writerow(["rw_w1", "mean", repr(report.value), "", "", 1])


def read_metrics_csv(path) -> dict:
    out = {"regions": {}}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            val = float(row["value"]) if row["value"] else None
            if row["metric"] == "w1":
                out["w1"] = val
            elif row["metric"] == "rw_w1":
                out["rw_w1"] = val
            else:
                out["regions"][int(row["region"])] = val
    return out
