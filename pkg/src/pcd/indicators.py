"""Hypervolume indicators and the percentile-filtered evaluation protocol.

Exact hypervolume uses a sort-and-sweep in 2-D and recursive slicing
(WFG-style exclusive volumes) for three or more objectives. A Monte
Carlo estimator is provided as an independent statistical oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .moo import NormalizationStats, non_dominated_sort

__all__ = [
    "HvReport",
    "hypervolume_exact",
    "hypervolume_mc",
    "percentile_filter",
    "crowding_distance",
    "evaluate_run",
]

_MC_BLOCK = 131072


@dataclass(frozen=True)
class HvReport:
    """Hypervolume of a generated set at the 100/75/50 percentiles."""

    hv_100: float
    hv_75: float
    hv_50: float
    reference_point: np.ndarray
    n_points_used: dict[int, int]

    def to_dict(self) -> dict:
        return {
            "hv_100": self.hv_100,
            "hv_75": self.hv_75,
            "hv_50": self.hv_50,
            "reference_point": np.asarray(self.reference_point).tolist(),
            "n_points_used": {str(k): v for k, v in self.n_points_used.items()},
        }


def _clip_to_reference(points: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Drop points that are not strictly better than the reference in
    every dimension; they contribute no volume."""
    keep = (points < ref).all(axis=1)
    return points[keep]


def _pareto_filter(points: np.ndarray) -> np.ndarray:
    """Reduce to the non-dominated subset, removing duplicates.

    Order: lexicographic sort by coordinates, which keeps the result
    deterministic regardless of input order.
    """
    if points.shape[0] <= 1:
        return points
    order = np.lexsort(points.T[::-1])
    pts = points[order]
    # Remove exact duplicates first.
    distinct = np.ones(pts.shape[0], dtype=bool)
    distinct[1:] = (np.diff(pts, axis=0) != 0).any(axis=1)
    pts = pts[distinct]
    n = pts.shape[0]
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        if not keep[i]:
            continue
        le = (pts[i] <= pts).all(axis=1)
        lt = (pts[i] < pts).any(axis=1)
        dominated = le & lt
        dominated[i] = False
        keep &= ~dominated
    return pts[keep]


def _hv_sweep_2d(points: np.ndarray, ref: np.ndarray) -> float:
    """Exact 2-D hypervolume by a single sweep over the staircase."""
    order = np.lexsort((points[:, 1], points[:, 0]))
    pts = points[order]
    hv = 0.0
    best_f2 = math.inf
    xs: list[float] = []
    ys: list[float] = []
    for x, y in pts:
        if y < best_f2:
            xs.append(x)
            ys.append(y)
            best_f2 = y
    for i, (x, y) in enumerate(zip(xs, ys)):
        next_x = xs[i + 1] if i + 1 < len(xs) else ref[0]
        hv += (next_x - x) * (ref[1] - y)
    return hv


def _box_volume(p: np.ndarray, ref: np.ndarray) -> float:
    return float(np.prod(ref - p))


def _limit_set(p: np.ndarray, rest: np.ndarray) -> np.ndarray:
    """Project `rest` into the box [p, ref]: componentwise max with p."""
    return np.maximum(rest, p)


def _hv_recursive(points: np.ndarray, ref: np.ndarray) -> float:
    """WFG-style exclusive-volume recursion over a non-dominated set
    sorted ascending by the first coordinate."""
    n = points.shape[0]
    if n == 0:
        return 0.0
    if n == 1:
        return _box_volume(points[0], ref)
    if n == 2:
        overlap = _box_volume(np.maximum(points[0], points[1]), ref)
        return (
            _box_volume(points[0], ref)
            + _box_volume(points[1], ref)
            - overlap
        )
    total = 0.0
    for i in range(n):
        p = points[i]
        rest = points[i + 1 :]
        exclusive = _box_volume(p, ref)
        if rest.shape[0]:
            limited = _pareto_filter(_limit_set(p, rest))
            exclusive -= _hv_recursive(limited, ref)
        total += exclusive
    return total


def hypervolume_exact(points, ref, method: str = "auto") -> float:
    """Exact hypervolume of `points` relative to reference point `ref`.

    Points with any coordinate >= the reference coordinate are dropped
    (they contribute nothing under the clipped-box convention). Adding a
    dominated point never changes the result.

    Args:
        points: (n, m) array of objective vectors, m >= 2.
        ref: Reference point of length m, all entries finite.
        method: "auto" (sweep for m == 2, recursion otherwise),
            "sweep2d", or "wfg".
    """
    ref = np.asarray(ref, dtype=np.float64)
    if ref.ndim != 1 or not np.isfinite(ref).all():
        raise ValueError("reference point must be a finite vector")
    m = ref.shape[0]
    if m < 2:
        raise ValueError("hypervolume requires at least two objectives")
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return 0.0
    points = points.reshape(-1, m)
    pts = _clip_to_reference(points, ref)
    if pts.shape[0] == 0:
        return 0.0
    pts = _pareto_filter(pts)
    if method == "sweep2d" or (method == "auto" and m == 2):
        if m != 2:
            raise ValueError("sweep2d only applies to two objectives")
        return _hv_sweep_2d(pts, ref)
    if method in ("wfg", "auto"):
        order = np.argsort(pts[:, 0], kind="stable")
        return _hv_recursive(pts[order], ref)
    raise ValueError(f"unknown hypervolume method {method!r}")


def hypervolume_mc(points, ref, n_samples: int, seed: int) -> tuple[float, float]:
    """Monte Carlo hypervolume estimate with its standard error.

    Uniform samples are drawn in the box spanned by the ideal point of
    the (clipped) set and the reference point; the estimate is the box
    volume times the dominated fraction. The standard error follows the
    binomial variance of that fraction.
    """
    if n_samples < 1000:
        raise ValueError("use at least 1000 samples")
    ref = np.asarray(ref, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return 0.0, 0.0
    points = points.reshape(-1, ref.shape[0])
    pts = _clip_to_reference(points, ref)
    if pts.shape[0] == 0:
        return 0.0, 0.0
    pts = _pareto_filter(pts)
    lower = pts.min(axis=0)
    volume = float(np.prod(ref - lower))
    rng = np.random.default_rng(seed)
    hits = 0
    remaining = n_samples
    while remaining > 0:
        block = min(_MC_BLOCK, remaining)
        u = rng.uniform(lower, ref, size=(block, ref.shape[0]))
        dominated = (pts[None, :, :] <= u[:, None, :]).all(axis=2).any(axis=1)
        hits += int(dominated.sum())
        remaining -= block
    frac = hits / n_samples
    estimate = volume * frac
    std_error = volume * math.sqrt(frac * (1.0 - frac) / n_samples)
    return estimate, std_error


def crowding_distance(Y: np.ndarray) -> np.ndarray:
    """NSGA-II crowding distance of points within one front."""
    Y = np.asarray(Y, dtype=np.float64)
    n, m = Y.shape
    dist = np.zeros(n, dtype=np.float64)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for j in range(m):
        order = np.argsort(Y[:, j], kind="stable")
        col = Y[order, j]
        span = col[-1] - col[0]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        if span > 0.0:
            gaps = (col[2:] - col[:-2]) / span
            dist[order[1:-1]] += gaps
    return dist


def percentile_filter(Y, percent: float) -> np.ndarray:
    """Indices of the top `percent`% rows of ``Y`` under NSGA-II survival
    order (non-domination rank, then crowding distance, then index).

    Keeps ceil(Q * percent / 100) rows; the returned indices are sorted
    ascending so percent == 100 is the identity.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] < 1:
        raise ValueError("expected a non-empty Q x m matrix")
    if not 0.0 < percent <= 100.0:
        raise ValueError(f"percent must lie in (0, 100], got {percent}")
    q = Y.shape[0]
    keep = math.ceil(q * percent / 100.0)
    if keep >= q:
        return np.arange(q)
    partition = non_dominated_sort(Y)
    crowd = np.zeros(q, dtype=np.float64)
    for front in partition.fronts:
        crowd[front] = crowding_distance(Y[front])
    order = sorted(
        range(q), key=lambda i: (partition.rank_of[i], -crowd[i], i)
    )
    return np.array(sorted(order[:keep]), dtype=np.int64)


def evaluate_run(
    Y_generated,
    stats: NormalizationStats,
    ref_multiplier: float = 1.1,
) -> HvReport:
    """Score a generated set under the shared evaluation convention.

    Objectives are mapped to ideal/nadir coordinates, the reference
    point is ref_multiplier * (1, ..., 1), and hypervolume is reported
    for the 100th, 75th and 50th percentiles of the set.
    """
    Y = np.asarray(Y_generated, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] < 1:
        raise ValueError("expected a non-empty Q x m matrix")
    Yn = stats.normalize_objectives(Y)
    m = Yn.shape[1]
    ref = np.full(m, float(ref_multiplier))
    values: dict[int, float] = {}
    used: dict[int, int] = {}
    for p in (100, 75, 50):
        idx = percentile_filter(Yn, p)
        values[p] = hypervolume_exact(Yn[idx], ref)
        used[p] = int(idx.shape[0])
    return HvReport(
        hv_100=values[100],
        hv_75=values[75],
        hv_50=values[50],
        reference_point=ref,
        n_points_used=used,
    )
