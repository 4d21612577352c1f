"""Objective-space binning and per-sample training weights.

Each occupied grid cell gets a raw weight
``|B|/(|B| + K) * exp(-mean(normalized dominance)/tau)``; samples
inherit their cell's weight and the vector is rescaled to mean 1 so the
effective learning rate is unchanged across settings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .moo import DominanceStats, FrontPartition

__all__ = ["BinGrid", "SampleWeights", "build_grid", "compute_weights",
           "prune_weights"]


@dataclass(frozen=True)
class BinGrid:
    """Equal-width grid over the objective-space bounding box.

    bins_per_dim bins in every dimension; points exactly on the upper
    boundary fall into the last cell. Only occupied cells are ever
    materialized (cell ids are flat int64 indices).
    """

    bins_per_dim: int
    mins: np.ndarray
    maxs: np.ndarray

    def cell_of(self, Y) -> np.ndarray:
        """Flat cell id for each row of Y."""
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        widths = (self.maxs - self.mins) / self.bins_per_dim
        safe = np.where(widths > 0.0, widths, 1.0)
        idx = np.floor((Y - self.mins) / safe).astype(np.int64)
        idx = np.clip(idx, 0, self.bins_per_dim - 1)
        flat = np.zeros(Y.shape[0], dtype=np.int64)
        for j in range(Y.shape[1]):
            flat = flat * self.bins_per_dim + idx[:, j]
        return flat

    def cell_tuple_of(self, y) -> tuple[int, ...]:
        """Per-dimension cell indices of a single objective vector."""
        y = np.asarray(y, dtype=np.float64)
        widths = (self.maxs - self.mins) / self.bins_per_dim
        safe = np.where(widths > 0.0, widths, 1.0)
        idx = np.floor((y - self.mins) / safe).astype(np.int64)
        return tuple(int(v) for v in np.clip(idx, 0, self.bins_per_dim - 1))


@dataclass(frozen=True)
class SampleWeights:
    """Training weights.

    w is rescaled so mean(w) == 1; raw carries the unscaled per-sample
    cell weight straight out of the weighting formula.
    """

    w: np.ndarray
    raw: np.ndarray
    K: float
    tau: float


def build_grid(Y, bins_per_dim: int) -> BinGrid:
    if bins_per_dim < 1:
        raise ValueError("bins_per_dim must be >= 1")
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if Y.shape[0] < 1:
        raise ValueError("need at least one point")
    return BinGrid(bins_per_dim=bins_per_dim, mins=Y.min(axis=0), maxs=Y.max(axis=0))


def compute_weights(
    Y,
    grid: BinGrid,
    dom: DominanceStats,
    K: float,
    tau: float,
) -> SampleWeights:
    """Per-sample weights from cell size and mean normalized dominance.

    Bigger cells and cells whose members are dominated by fewer points
    get larger weights; tau softens the quality term.
    """
    if K <= 0.0 or tau <= 0.0:
        raise ValueError("K and tau must be positive")
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    n = Y.shape[0]
    cells = grid.cell_of(Y)
    _, inverse = np.unique(cells, return_inverse=True)
    sizes = np.bincount(inverse).astype(np.float64)
    mean_dom = np.bincount(inverse, weights=dom.normalized) / sizes
    size_term = sizes / (sizes + K)
    raw_cell = size_term * np.exp(-mean_dom / tau)
    # Normalized weights use a shifted exponent; the shift cancels in
    # the rescale and avoids underflow at tiny tau.
    stable_cell = size_term * np.exp(-(mean_dom - mean_dom.min()) / tau)
    w = stable_cell[inverse]
    w = w * (n / w.sum())
    return SampleWeights(w=w, raw=raw_cell[inverse], K=float(K), tau=float(tau))


def prune_weights(fronts: FrontPartition, keep_fraction: float) -> np.ndarray:
    """0/1 weights keeping the best fronts until a fraction is reached.

    Whole fronts are kept in rank order; the last included front is
    truncated by ascending index to hit ceil(keep_fraction * N) exactly.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    n = fronts.rank_of.shape[0]
    target = math.ceil(keep_fraction * n)
    w = np.zeros(n, dtype=np.float64)
    kept = 0
    for front in fronts.fronts:
        take = min(front.shape[0], target - kept)
        w[front[:take]] = 1.0
        kept += take
        if kept >= target:
            break
    return w
