"""Reference direction generation on the unit simplex.

Two generators: the Das-Dennis simplex lattice and an iterative Riesz
s-energy minimizer that supports an arbitrary number of directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ReferenceDirections",
    "das_dennis",
    "das_dennis_count",
    "riesz_s_energy",
    "generate_directions",
]


@dataclass(frozen=True)
class ReferenceDirections:
    """L direction vectors on the m-simplex (rows sum to 1, entries >= 0)."""

    W: np.ndarray
    method: str

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        object.__setattr__(self, "W", W)
        if W.ndim != 2:
            raise ValueError("W must be an L x m matrix")
        if (W < -1e-9).any():
            raise ValueError("directions must be non-negative")
        if np.abs(W.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValueError("direction rows must sum to 1")

    @property
    def L(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> int:
        return self.W.shape[1]


def das_dennis_count(m: int, H: int) -> int:
    """Number of lattice points for m objectives with H divisions."""
    return math.comb(H + m - 1, m - 1)


def _compositions(total: int, parts: int):
    """All length-`parts` tuples of non-negative ints summing to `total`,
    first coordinate descending."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for tail in _compositions(total - head, parts - 1):
            yield (head, *tail)


def das_dennis(m: int, H: int) -> ReferenceDirections:
    """Das-Dennis simplex lattice: all compositions (k_1..k_m)/H."""
    if m < 2:
        raise ValueError("need at least two objectives")
    if H < 1:
        raise ValueError("H must be positive")
    rows = np.array(list(_compositions(H, m)), dtype=np.float64) / H
    return ReferenceDirections(W=rows, method="das-dennis")


def _project_to_simplex(V: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the unit simplex."""
    n, m = V.shape
    U = np.sort(V, axis=1)[:, ::-1]
    css = np.cumsum(U, axis=1) - 1.0
    idx = np.arange(1, m + 1)
    cond = U - css / idx > 0
    rho = cond.sum(axis=1)
    theta = css[np.arange(n), rho - 1] / rho
    return np.maximum(V - theta[:, None], 0.0)


def _pair_energy(W: np.ndarray, s: float) -> float:
    diff = W[:, None, :] - W[None, :, :]
    d2 = (diff * diff).sum(axis=2)
    iu = np.triu_indices(W.shape[0], k=1)
    d2 = np.maximum(d2[iu], 1e-30)
    return float((d2 ** (-s / 2.0)).sum())


def riesz_s_energy(
    m: int,
    L: int,
    seed: int = 0,
    iterations: int = 1000,
    step: float = 1e-2,
) -> ReferenceDirections:
    """Spread L directions on the simplex by minimizing Riesz s-energy.

    The energy sum_{i<j} ||w_i - w_j||^{-s} with s = m^2 is driven down
    by projected gradient descent with a decaying step size. The m
    simplex corners are pinned so the extremes of each objective stay
    covered; the best iterate seen is returned, so the final energy
    never exceeds the initial one.
    """
    if m < 2:
        raise ValueError("need at least two objectives")
    if L < 2:
        raise ValueError("need at least two directions")
    s = float(m * m)
    rng = np.random.default_rng(seed)
    n_pinned = min(L, m)
    corners = np.eye(m)[:n_pinned]
    if L > n_pinned:
        free = rng.dirichlet(np.ones(m), size=L - n_pinned)
        W = np.vstack([corners, free])
    else:
        W = corners.copy()
    # Nudge apart any coincident initial rows.
    for _ in range(10):
        diff = W[:, None, :] - W[None, :, :]
        d2 = (diff * diff).sum(axis=2) + np.eye(L)
        if d2.min() > 1e-12:
            break
        W[n_pinned:] = _project_to_simplex(
            W[n_pinned:] + rng.normal(scale=1e-3, size=(L - n_pinned, m))
        )

    best_W = W.copy()
    best_E = _pair_energy(W, s)
    if L <= n_pinned:
        return ReferenceDirections(W=best_W, method="riesz")

    for it in range(iterations):
        diff = W[:, None, :] - W[None, :, :]
        d2 = (diff * diff).sum(axis=2) + np.eye(L)
        coef = d2 ** (-(s + 2.0) / 2.0)
        np.fill_diagonal(coef, 0.0)
        grad = -s * (coef[:, :, None] * diff).sum(axis=1)
        norms = np.linalg.norm(grad, axis=1, keepdims=True)
        norms[norms < 1e-30] = 1.0
        lr = step * (0.01 ** (it / max(1, iterations - 1)))
        W = W.copy()
        W[n_pinned:] = _project_to_simplex(
            W[n_pinned:] - lr * (grad / norms)[n_pinned:]
        )
        energy = _pair_energy(W, s)
        if energy < best_E:
            best_E = energy
            best_W = W.copy()
    return ReferenceDirections(W=best_W, method="riesz")


def generate_directions(
    m: int,
    L: int,
    method: str = "riesz",
    seed: int = 0,
    iterations: int = 1000,
) -> ReferenceDirections:
    """Produce exactly L directions with the requested method.

    Das-Dennis lattices do not hit arbitrary L; the smallest lattice
    with at least L points is generated and subsampled with a
    deterministic stride.
    """
    if method == "riesz":
        return riesz_s_energy(m, L, seed=seed, iterations=iterations)
    if method == "das-dennis":
        H = 1
        while das_dennis_count(m, H) < L:
            H += 1
        full = das_dennis(m, H).W
        count = full.shape[0]
        idx = (np.arange(L) * count) // L
        return ReferenceDirections(W=full[idx], method="das-dennis")
    raise ValueError(f"unknown direction method {method!r}")
