"""Core Pareto machinery: dominance, non-dominated sorting, dominance
counts, objective normalization and simplex geometry helpers.

All functions assume minimization of every objective and operate on
float64 numpy arrays. They are pure and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "OfflineDataset",
    "FrontPartition",
    "DominanceStats",
    "NormalizationStats",
    "dominates",
    "non_dominated_sort",
    "dominance_numbers",
    "compute_normalization",
    "perpendicular_distance",
]

# Nadir == ideal in a dimension makes (y - ideal)/(nadir - ideal) blow up;
# inflate by this instead.
_DEGENERATE_EPS = 1e-9

# Cap on the number of floats materialized per pairwise-dominance block.
_BLOCK_BUDGET = 8_000_000


@dataclass(frozen=True)
class OfflineDataset:
    """A static collection of evaluated solutions.

    Attributes:
        X: Decision vectors, shape (N, d), each row inside the box.
        Y: Objective vectors, shape (N, m), minimization convention.
        lower_bounds / upper_bounds: Box constraints, shape (d,).
        seed: Seed the dataset was generated with.
        task_name: Name of the generating task.
    """

    X: np.ndarray
    Y: np.ndarray
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray
    seed: int
    task_name: str

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        Y = np.ascontiguousarray(np.asarray(self.Y, dtype=np.float64))
        lb = np.asarray(self.lower_bounds, dtype=np.float64)
        ub = np.asarray(self.upper_bounds, dtype=np.float64)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "lower_bounds", lb)
        object.__setattr__(self, "upper_bounds", ub)
        if X.ndim != 2 or Y.ndim != 2:
            raise ValueError("X and Y must be 2-D matrices")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(
                f"X has {X.shape[0]} rows but Y has {Y.shape[0]}"
            )
        if X.shape[0] < 1:
            raise ValueError("dataset must contain at least one sample")
        if lb.shape != (X.shape[1],) or ub.shape != (X.shape[1],):
            raise ValueError("bounds must have length d")
        if not (np.isfinite(X).all() and np.isfinite(Y).all()):
            raise ValueError("dataset contains non-finite values")
        if (X < lb - 1e-12).any() or (X > ub + 1e-12).any():
            raise ValueError("dataset rows violate the box bounds")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class FrontPartition:
    """Result of non-dominated sorting.

    Attributes:
        fronts: List of index arrays F_1..F_M, ascending index within
            each front; together they partition 0..N-1.
        rank_of: Array of length N, rank_of[i] = k iff i in fronts[k].
    """

    fronts: list[np.ndarray]
    rank_of: np.ndarray

    @property
    def n_fronts(self) -> int:
        return len(self.fronts)


@dataclass(frozen=True)
class DominanceStats:
    """Per-sample dominance counts.

    counts[i] is the number of other samples whose objectives dominate
    sample i. normalized[i] = counts[i] / (N - 1), or 0 when N == 1.
    """

    counts: np.ndarray
    normalized: np.ndarray


@dataclass(frozen=True)
class NormalizationStats:
    """Objective- and decision-space normalization constants.

    ideal/nadir span the dataset objectives (nadir taken over the
    non-dominated subset); y_mean/y_std are per-column sample statistics
    used to z-score conditioning inputs. Bounds are carried along so the
    decision encoding to [-1, 1] can be inverted.
    """

    ideal: np.ndarray
    nadir: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray

    def normalize_objectives(self, Y: np.ndarray) -> np.ndarray:
        """Map raw objectives into ideal/nadir coordinates ([0,1] on data)."""
        Y = np.asarray(Y, dtype=np.float64)
        return (Y - self.ideal) / (self.nadir - self.ideal)

    def denormalize_objectives(self, Yn: np.ndarray) -> np.ndarray:
        Yn = np.asarray(Yn, dtype=np.float64)
        return Yn * (self.nadir - self.ideal) + self.ideal

    def zscore_objectives(self, Y: np.ndarray) -> np.ndarray:
        Y = np.asarray(Y, dtype=np.float64)
        return (Y - self.y_mean) / self.y_std

    def encode_decisions(self, X: np.ndarray) -> np.ndarray:
        """Affinely map box coordinates to [-1, 1]."""
        X = np.asarray(X, dtype=np.float64)
        span = self.upper_bounds - self.lower_bounds
        return 2.0 * (X - self.lower_bounds) / span - 1.0

    def decode_decisions(self, Xe: np.ndarray) -> np.ndarray:
        """Invert :meth:`encode_decisions` and clip to the box."""
        Xe = np.asarray(Xe, dtype=np.float64)
        span = self.upper_bounds - self.lower_bounds
        X = self.lower_bounds + (Xe + 1.0) * 0.5 * span
        return np.clip(X, self.lower_bounds, self.upper_bounds)

    def to_dict(self) -> dict:
        return {
            "ideal": self.ideal.tolist(),
            "nadir": self.nadir.tolist(),
            "y_mean": self.y_mean.tolist(),
            "y_std": self.y_std.tolist(),
            "lower_bounds": self.lower_bounds.tolist(),
            "upper_bounds": self.upper_bounds.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(**{k: np.asarray(v, dtype=np.float64) for k, v in d.items()})


def dominates(a, b) -> bool:
    """Return True iff objective vector ``a`` Pareto-dominates ``b``.

    a dominates b when a <= b in every component with at least one
    strict inequality (minimization). Equal vectors never dominate.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"objective length mismatch: {a.shape} vs {b.shape}")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("objective vectors must be finite")
    return bool((a <= b).all() and (a < b).any())


def _dominator_counts(Y: np.ndarray, against: np.ndarray) -> np.ndarray:
    """counts[i] = number of rows of `against` that dominate Y[i].

    Blocked so the temporary boolean tensor stays small; self-pairs
    contribute nothing because equal rows never dominate.
    """
    n_a, m = against.shape
    counts = np.zeros(Y.shape[0], dtype=np.int64)
    if n_a == 0:
        return counts
    block = max(1, int(_BLOCK_BUDGET // max(1, n_a * m)))
    for start in range(0, Y.shape[0], block):
        chunk = Y[start : start + block]  # (c, m)
        le = (against[None, :, :] <= chunk[:, None, :]).all(axis=2)
        lt = (against[None, :, :] < chunk[:, None, :]).any(axis=2)
        counts[start : start + block] = (le & lt).sum(axis=1)
    return counts


def _as_objective_matrix(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] < 1:
        raise ValueError("expected a non-empty N x m objective matrix")
    if not np.isfinite(Y).all():
        raise ValueError("objective matrix contains non-finite values")
    return Y


def non_dominated_sort(Y) -> FrontPartition:
    """Partition objective vectors into ranked Pareto fronts.

    Front k+1 contains the points that become non-dominated once fronts
    1..k are removed. Within each front, indices are ascending, so the
    whole partition is deterministic.
    """
    Y = _as_objective_matrix(Y)
    n = Y.shape[0]
    rank_of = np.full(n, -1, dtype=np.int64)
    fronts: list[np.ndarray] = []

    alive = np.arange(n)
    counts = _dominator_counts(Y, Y)
    rank = 0
    while alive.size:
        in_front = counts == 0
        front = alive[in_front]
        fronts.append(front)
        rank_of[front] = rank
        alive = alive[~in_front]
        if alive.size:
            # Only dominators inside the removed front change the counts.
            counts = counts[~in_front] - _dominator_counts(Y[alive], Y[front])
        rank += 1
    return FrontPartition(fronts=fronts, rank_of=rank_of)


def dominance_numbers(Y) -> DominanceStats:
    """Count, for every sample, how many other samples dominate it.

    This is the O(N^2 m) definitional computation; it doubles as the
    oracle for any optimized variant. counts[i] == 0 exactly for first
    front members.
    """
    Y = _as_objective_matrix(Y)
    n = Y.shape[0]
    counts = _dominator_counts(Y, Y)
    if n > 1:
        normalized = counts / float(n - 1)
    else:
        normalized = np.zeros(1, dtype=np.float64)
    return DominanceStats(counts=counts, normalized=normalized)


def compute_normalization(dataset: OfflineDataset) -> NormalizationStats:
    """Derive ideal/nadir and z-score statistics from a dataset.

    The ideal point is the componentwise minimum of Y; the nadir is the
    componentwise maximum over the non-dominated subset. Degenerate
    dimensions (nadir == ideal) are inflated by a tiny epsilon and zero
    standard deviations are clamped to 1 so downstream divisions are
    always safe.
    """
    if dataset.n < 2:
        raise ValueError("normalization requires at least two samples")
    Y = dataset.Y
    ideal = Y.min(axis=0)
    first_front = non_dominated_sort(Y).fronts[0]
    nadir = Y[first_front].max(axis=0)
    degenerate = nadir <= ideal
    nadir = np.where(degenerate, ideal + _DEGENERATE_EPS, nadir)
    y_mean = Y.mean(axis=0)
    y_std = Y.std(axis=0, ddof=1)
    y_std = np.where(y_std > 0.0, y_std, 1.0)
    return NormalizationStats(
        ideal=ideal,
        nadir=nadir,
        y_mean=y_mean,
        y_std=y_std,
        lower_bounds=dataset.lower_bounds.copy(),
        upper_bounds=dataset.upper_bounds.copy(),
    )


def perpendicular_distance(p, w) -> float:
    """Distance from point ``p`` to the ray spanned by unit direction ``w``.

    ``w`` must already have unit Euclidean norm (tolerance 1e-9).
    """
    p = np.asarray(p, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if p.shape != w.shape:
        raise ValueError("point and direction must have equal length")
    norm = float(np.linalg.norm(w))
    if norm < 1e-12:
        raise ValueError("direction vector has zero norm")
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"direction must be unit length, got norm {norm!r}")
    return float(np.linalg.norm(p - (p @ w) * w))


def perpendicular_distances(P: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Pairwise point-to-ray distances, rows of ``W`` normalized internally.

    Returns an array of shape (len(P), len(W)).
    """
    P = np.asarray(P, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    norms = np.linalg.norm(W, axis=1)
    if (norms < 1e-12).any():
        raise ValueError("direction matrix contains a zero-norm row")
    U = W / norms[:, None]
    proj = P @ U.T  # (n, L)
    residual = P[:, None, :] - proj[:, :, None] * U[None, :, :]
    return np.linalg.norm(residual, axis=2)
