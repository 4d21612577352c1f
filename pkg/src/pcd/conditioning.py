"""Conditioning target generation.

A set of (point, direction) pairs is selected front by front: each
direction first claims the front member nearest to it in perpendicular
distance, then leftover members go to whichever direction currently
holds the fewest points. Selected points are snapped onto their
direction ray, pulled a fraction of the way toward the ideal point, and
jittered with Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .moo import (
    FrontPartition,
    NormalizationStats,
    OfflineDataset,
    non_dominated_sort,
    perpendicular_distances,
)
from .refdirs import ReferenceDirections

__all__ = [
    "AssignmentSet",
    "ConditioningSet",
    "assign_points",
    "extrapolate",
    "generate_conditioning_set",
    "conditioning_from_best_subset",
    "conditioning_toward_ideal",
    "conditioning_from_dataset_fronts",
]


@dataclass(frozen=True)
class AssignmentSet:
    """J (point index, direction index) pairs plus per-direction counts."""

    pairs: list[tuple[int, int]]
    niche_counts: np.ndarray


@dataclass(frozen=True)
class ConditioningSet:
    """Q conditioning targets in ideal/nadir-normalized objective space.

    Provenance records, per target: the source dataset index (-1 when
    not applicable), the direction index (-1 when not applicable), the
    extrapolation distance, and the exact noise draw that was added.
    """

    targets: np.ndarray
    source_index: np.ndarray
    direction_index: np.ndarray
    distance: float
    noise: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.targets).all():
            raise ValueError("conditioning targets must be finite")

    @property
    def Q(self) -> int:
        return self.targets.shape[0]


def assign_points(
    fronts: FrontPartition,
    Y_norm: np.ndarray,
    directions: ReferenceDirections,
    J: int,
) -> AssignmentSet:
    """Select J (point, direction) pairs walking the fronts in rank order.

    Within each front, phase one gives every direction its
    perpendicular-nearest member (members may serve several directions);
    phase two hands the remaining members, in ascending index order, to
    the direction with the lowest current niche count (ties break toward
    the lowest direction index). Selection stops at exactly J pairs.
    """
    Y_norm = np.asarray(Y_norm, dtype=np.float64)
    n = Y_norm.shape[0]
    if not 1 <= J <= n:
        raise ValueError(f"J must lie in [1, {n}], got {J}")
    L = directions.L
    niche = np.zeros(L, dtype=np.int64)
    pairs: list[tuple[int, int]] = []
    for front in fronts.fronts:
        if len(pairs) >= J:
            break
        dist = perpendicular_distances(Y_norm[front], directions.W)  # (|F|, L)
        claimed: set[int] = set()
        for l in range(L):
            if len(pairs) >= J:
                break
            member = int(front[int(np.argmin(dist[:, l]))])
            pairs.append((member, l))
            niche[l] += 1
            claimed.add(member)
        for member in front:
            if len(pairs) >= J:
                break
            member = int(member)
            if member in claimed:
                continue
            l = int(np.argmin(niche))
            pairs.append((member, l))
            niche[l] += 1
    return AssignmentSet(pairs=pairs, niche_counts=niche)


def extrapolate(y_norm, w, distance: float) -> np.ndarray:
    """Snap a normalized objective vector onto a direction ray and pull
    it toward the ideal point (the origin).

    The point is replaced by its on-ray representation t * w_hat with
    t = max(y . w_hat, 0), shrunk by (1 - distance); distance -> 1
    collapses onto the ideal point.
    """
    if not 0.0 <= distance < 1.0:
        raise ValueError("distance must lie in [0, 1)")
    y = np.asarray(y_norm, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    norm = np.linalg.norm(w)
    if norm < 1e-12:
        raise ValueError("direction vector has zero norm")
    w_hat = w / norm
    t = max(float(y @ w_hat), 0.0)
    return (1.0 - distance) * t * w_hat


def generate_conditioning_set(
    dataset: OfflineDataset,
    stats: NormalizationStats,
    directions: ReferenceDirections,
    J: int,
    Q: int,
    distance: float = 0.1,
    noise_sigma: float = 0.05,
    seed: int = 0,
) -> ConditioningSet:
    """Produce Q targets from J selected pairs (round-robin tiled)."""
    if Q < J:
        raise ValueError("Q must be at least J")
    fronts = non_dominated_sort(dataset.Y)
    Y_norm = stats.normalize_objectives(dataset.Y)
    assignment = assign_points(fronts, Y_norm, directions, J)
    base = np.empty((Q, dataset.m))
    src = np.empty(Q, dtype=np.int64)
    dir_idx = np.empty(Q, dtype=np.int64)
    for q in range(Q):
        point, l = assignment.pairs[q % J]
        base[q] = extrapolate(Y_norm[point], directions.W[l], distance)
        src[q] = point
        dir_idx[q] = l
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    noise = noise_sigma * rng.standard_normal((Q, dataset.m))
    return ConditioningSet(
        targets=base + noise,
        source_index=src,
        direction_index=dir_idx,
        distance=float(distance),
        noise=noise,
    )


def conditioning_from_best_subset(
    dataset: OfflineDataset,
    stats: NormalizationStats,
    Q: int,
) -> ConditioningSet:
    """Condition directly on the dataset's non-dominated objectives."""
    front = non_dominated_sort(dataset.Y).fronts[0]
    Y_norm = stats.normalize_objectives(dataset.Y)
    src = front[np.arange(Q) % front.shape[0]]
    return ConditioningSet(
        targets=Y_norm[src],
        source_index=src.astype(np.int64),
        direction_index=np.full(Q, -1, dtype=np.int64),
        distance=0.0,
        noise=np.zeros((Q, dataset.m)),
    )


def conditioning_toward_ideal(
    dataset: OfflineDataset,
    stats: NormalizationStats,
    Q: int,
    distance: float = 0.1,
    noise_sigma: float = 0.05,
    seed: int = 0,
) -> ConditioningSet:
    """Random non-dominated points shrunk straight toward the ideal point."""
    if not 0.0 <= distance < 1.0:
        raise ValueError("distance must lie in [0, 1)")
    front = non_dominated_sort(dataset.Y).fronts[0]
    Y_norm = stats.normalize_objectives(dataset.Y)
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    src = front[rng.integers(0, front.shape[0], size=Q)]
    base = (1.0 - distance) * Y_norm[src]
    noise = noise_sigma * rng.standard_normal((Q, dataset.m))
    return ConditioningSet(
        targets=base + noise,
        source_index=src.astype(np.int64),
        direction_index=np.full(Q, -1, dtype=np.int64),
        distance=float(distance),
        noise=noise,
    )


def conditioning_from_dataset_fronts(
    dataset: OfflineDataset,
    stats: NormalizationStats,
    Q: int,
) -> ConditioningSet:
    """Condition on dataset objectives in rank order (reconstruction probe)."""
    fronts = non_dominated_sort(dataset.Y)
    order = np.concatenate(fronts.fronts)
    src = order[np.arange(Q) % order.shape[0]]
    Y_norm = stats.normalize_objectives(dataset.Y)
    return ConditioningSet(
        targets=Y_norm[src],
        source_index=src.astype(np.int64),
        direction_index=np.full(Q, -1, dtype=np.int64),
        distance=0.0,
        noise=np.zeros((Q, dataset.m)),
    )
