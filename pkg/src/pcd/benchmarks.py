"""Synthetic multi-objective test functions and offline dataset generation.

Tasks follow their standard literature definitions (ZDT, DTLZ, OmniTest,
Van Veldhuizen's MOP suite). Evaluators are vectorized over rows; all
objectives are minimized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .indicators import crowding_distance
from .moo import OfflineDataset, non_dominated_sort
from .refdirs import das_dennis, das_dennis_count

__all__ = [
    "TaskSpec",
    "make_task",
    "available_tasks",
    "evaluate_task",
    "sample_true_front",
    "generate_offline_dataset",
]

_DTLZ_M_CHOICES = (3, 4, 5, 6)


@dataclass(frozen=True)
class TaskSpec:
    """A box-constrained multi-objective task.

    Attributes:
        name: Registry name.
        d: Decision dimension.
        m: Number of objectives.
        lower_bounds / upper_bounds: Box, shape (d,).
        evaluate_batch: Vectorized objective map, (n, d) -> (n, m).
        front_sampler: Optional map count -> (count, m) points on the
            analytic Pareto front; None when no closed form is known.
    """

    name: str
    d: int
    m: int
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray
    evaluate_batch: Callable[[np.ndarray], np.ndarray]
    front_sampler: Optional[Callable[[int], np.ndarray]] = None


def evaluate_task(task: TaskSpec, x) -> np.ndarray:
    """Evaluate a single decision vector, enforcing the box bounds."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (task.d,):
        raise ValueError(f"expected a vector of length {task.d}")
    if (x < task.lower_bounds - 1e-12).any() or (x > task.upper_bounds + 1e-12).any():
        raise ValueError("decision vector is outside the task bounds")
    y = task.evaluate_batch(x[None, :])[0]
    if not np.isfinite(y).all():
        raise ValueError("evaluator produced non-finite objectives")
    return y


def sample_true_front(task: TaskSpec, n: int) -> np.ndarray:
    """n points on the analytic Pareto front of ``task``."""
    if task.front_sampler is None:
        raise ValueError(f"task {task.name!r} has no closed-form front")
    if n < 1:
        raise ValueError("n must be positive")
    return task.front_sampler(n)


# ---------------------------------------------------------------------------
# Task definitions


def _zdt_g(X: np.ndarray) -> np.ndarray:
    return 1.0 + 9.0 * X[:, 1:].sum(axis=1) / (X.shape[1] - 1)


def _zdt1_eval(X):
    f1 = X[:, 0]
    g = _zdt_g(X)
    f2 = g * (1.0 - np.sqrt(f1 / g))
    return np.stack([f1, f2], axis=1)


def _zdt2_eval(X):
    f1 = X[:, 0]
    g = _zdt_g(X)
    f2 = g * (1.0 - (f1 / g) ** 2)
    return np.stack([f1, f2], axis=1)


def _zdt3_eval(X):
    f1 = X[:, 0]
    g = _zdt_g(X)
    r = f1 / g
    f2 = g * (1.0 - np.sqrt(r) - r * np.sin(10.0 * np.pi * f1))
    return np.stack([f1, f2], axis=1)


def _zdt4_eval(X):
    f1 = X[:, 0]
    rest = X[:, 1:]
    g = 1.0 + 10.0 * rest.shape[1] + (
        rest**2 - 10.0 * np.cos(4.0 * np.pi * rest)
    ).sum(axis=1)
    f2 = g * (1.0 - np.sqrt(f1 / g))
    return np.stack([f1, f2], axis=1)


def _zdt6_eval(X):
    x1 = X[:, 0]
    f1 = 1.0 - np.exp(-4.0 * x1) * np.sin(6.0 * np.pi * x1) ** 6
    g = 1.0 + 9.0 * (X[:, 1:].sum(axis=1) / (X.shape[1] - 1)) ** 0.25
    f2 = g * (1.0 - (f1 / g) ** 2)
    return np.stack([f1, f2], axis=1)


def _zdt1_front(n):
    f1 = np.linspace(0.0, 1.0, n)
    return np.stack([f1, 1.0 - np.sqrt(f1)], axis=1)


def _zdt2_front(n):
    f1 = np.linspace(0.0, 1.0, n)
    return np.stack([f1, 1.0 - f1**2], axis=1)


def _nondominated_curve_subsample(F: np.ndarray, n: int) -> np.ndarray:
    """Keep the non-dominated part of a sampled curve, then stride to n."""
    part = non_dominated_sort(F)
    front = F[part.fronts[0]]
    front = front[np.argsort(front[:, 0], kind="stable")]
    if front.shape[0] < n:
        raise ValueError("curve sampling too coarse for requested n")
    idx = (np.arange(n) * front.shape[0]) // n
    return front[idx]


def _zdt3_front(n):
    f1 = np.linspace(0.0, 1.0, max(2000, 50 * n))
    f2 = 1.0 - np.sqrt(f1) - f1 * np.sin(10.0 * np.pi * f1)
    return _nondominated_curve_subsample(np.stack([f1, f2], axis=1), n)


_ZDT6_F1_MIN: Optional[float] = None


def _zdt6_f1_min() -> float:
    """Smallest achievable f1 for ZDT6 (interior minimum in x1)."""
    global _ZDT6_F1_MIN
    if _ZDT6_F1_MIN is None:
        def f1(t):
            return 1.0 - math.exp(-4.0 * t) * math.sin(6.0 * math.pi * t) ** 6

        grid = np.linspace(0.0, 1.0, 10001)
        vals = 1.0 - np.exp(-4.0 * grid) * np.sin(6.0 * np.pi * grid) ** 6
        t0 = grid[int(np.argmin(vals))]
        res = minimize_scalar(
            f1, bounds=(max(0.0, t0 - 1e-3), min(1.0, t0 + 1e-3)),
            method="bounded",
            options={"xatol": 1e-14},
        )
        _ZDT6_F1_MIN = float(res.fun)
    return _ZDT6_F1_MIN


def _zdt6_front(n):
    f1 = np.linspace(_zdt6_f1_min(), 1.0, n)
    return np.stack([f1, 1.0 - f1**2], axis=1)


def _dtlz1_eval(m):
    def ev(X):
        n = X.shape[0]
        XM = X[:, m - 1 :]
        g = 100.0 * (
            XM.shape[1]
            + ((XM - 0.5) ** 2 - np.cos(20.0 * np.pi * (XM - 0.5))).sum(axis=1)
        )
        F = np.empty((n, m))
        half = 0.5 * (1.0 + g)
        for j in range(m):
            f = half.copy()
            k = m - 1 - j
            if k > 0:
                f *= np.prod(X[:, :k], axis=1)
            if j > 0:
                f *= 1.0 - X[:, k]
            F[:, j] = f
        return F

    return ev


def _dtlz1_front(m):
    def sampler(n):
        H = 1
        while das_dennis_count(m, H) < n:
            H += 1
        full = das_dennis(m, H).W
        idx = (np.arange(n) * full.shape[0]) // n
        return 0.5 * full[idx]

    return sampler


def _dtlz7_eval(m):
    def ev(X):
        XM = X[:, m - 1 :]
        g = 1.0 + 9.0 * XM.sum(axis=1) / XM.shape[1]
        F = np.empty((X.shape[0], m))
        F[:, : m - 1] = X[:, : m - 1]
        ratio = F[:, : m - 1] / (1.0 + g)[:, None]
        h = m - (ratio * (1.0 + np.sin(3.0 * np.pi * F[:, : m - 1]))).sum(axis=1)
        F[:, m - 1] = (1.0 + g) * h
        return F

    return ev


def _dtlz7_front(m):
    def sampler(n):
        # On the front g == 1; sample the free coordinates, keep the
        # non-dominated subset of the resulting surface.
        rng = np.random.default_rng(402653189)
        budget = max(4000, 60 * n)
        Fm1 = rng.uniform(0.0, 1.0, size=(budget, m - 1))
        h = m - (Fm1 / 2.0 * (1.0 + np.sin(3.0 * np.pi * Fm1))).sum(axis=1)
        F = np.concatenate([Fm1, (2.0 * h)[:, None]], axis=1)
        part = non_dominated_sort(F)
        front = F[part.fronts[0]]
        if front.shape[0] < n:
            raise ValueError("front sampling budget too small")
        order = np.argsort(front[:, 0], kind="stable")
        front = front[order]
        idx = (np.arange(n) * front.shape[0]) // n
        return front[idx]

    return sampler


def _omnitest_eval(X):
    f1 = np.sin(np.pi * X).sum(axis=1)
    f2 = np.cos(np.pi * X).sum(axis=1)
    return np.stack([f1, f2], axis=1)


def _vlmop1_eval(X):
    f1 = (X**2).sum(axis=1)
    f2 = ((X - 2.0) ** 2).sum(axis=1)
    return np.stack([f1, f2], axis=1)


def _vlmop1_front(n):
    x = np.linspace(0.0, 2.0, n)
    return np.stack([x**2, (x - 2.0) ** 2], axis=1)


def _vlmop2_eval(X):
    a = 1.0 / math.sqrt(X.shape[1])
    f1 = 1.0 - np.exp(-((X - a) ** 2).sum(axis=1))
    f2 = 1.0 - np.exp(-((X + a) ** 2).sum(axis=1))
    return np.stack([f1, f2], axis=1)


def _vlmop2_front(d):
    def sampler(n):
        a = 1.0 / math.sqrt(d)
        c = np.linspace(-a, a, n)
        X = np.repeat(c[:, None], d, axis=1)
        return _vlmop2_eval(X)

    return sampler


def _vlmop3_eval(X):
    x1, x2 = X[:, 0], X[:, 1]
    s = x1**2 + x2**2
    f1 = 0.5 * s + np.sin(s)
    f2 = (3.0 * x1 - 2.0 * x2 + 4.0) ** 2 / 8.0 + (x1 - x2 + 1.0) ** 2 / 27.0 + 15.0
    f3 = 1.0 / (s + 1.0) - 1.1 * np.exp(-s)
    return np.stack([f1, f2, f3], axis=1)


def _box(task_d: int, lo: float, hi: float):
    return np.full(task_d, lo), np.full(task_d, hi)


def _make_zdt(name: str, ev, front, default_d: int, d: Optional[int]):
    d = default_d if d is None else d
    if d < 2:
        raise ValueError("ZDT tasks need d >= 2")
    lb, ub = _box(d, 0.0, 1.0)
    return TaskSpec(name, d, 2, lb, ub, ev, front)


def make_task(name: str, d: Optional[int] = None, m: Optional[int] = None) -> TaskSpec:
    """Build a task by name; d and m override the conventional defaults
    where the task supports it."""
    key = name.lower()
    if key in ("zdt1", "zdt2", "zdt3"):
        ev = {"zdt1": _zdt1_eval, "zdt2": _zdt2_eval, "zdt3": _zdt3_eval}[key]
        front = {"zdt1": _zdt1_front, "zdt2": _zdt2_front, "zdt3": _zdt3_front}[key]
        if m not in (None, 2):
            raise ValueError(f"{key} is bi-objective")
        return _make_zdt(key, ev, front, 30, d)
    if key == "zdt4":
        if m not in (None, 2):
            raise ValueError("zdt4 is bi-objective")
        dd = 10 if d is None else d
        lb = np.full(dd, -5.0)
        ub = np.full(dd, 5.0)
        lb[0], ub[0] = 0.0, 1.0
        return TaskSpec(key, dd, 2, lb, ub, _zdt4_eval, _zdt1_front)
    if key == "zdt6":
        if m not in (None, 2):
            raise ValueError("zdt6 is bi-objective")
        dd = 10 if d is None else d
        lb, ub = _box(dd, 0.0, 1.0)
        return TaskSpec(key, dd, 2, lb, ub, _zdt6_eval, _zdt6_front)
    if key in ("dtlz1", "dtlz7"):
        mm = 3 if m is None else m
        if mm not in _DTLZ_M_CHOICES:
            raise ValueError(f"DTLZ objective count must be one of {_DTLZ_M_CHOICES}")
        k = 5 if key == "dtlz1" else 20
        dd = mm + k - 1 if d is None else d
        if dd < mm:
            raise ValueError("DTLZ needs d >= m")
        lb, ub = _box(dd, 0.0, 1.0)
        if key == "dtlz1":
            return TaskSpec(key, dd, mm, lb, ub, _dtlz1_eval(mm), _dtlz1_front(mm))
        return TaskSpec(key, dd, mm, lb, ub, _dtlz7_eval(mm), _dtlz7_front(mm))
    if key == "omnitest":
        if m not in (None, 2):
            raise ValueError("omnitest is bi-objective")
        dd = 2 if d is None else d
        lb, ub = _box(dd, 0.0, 6.0)
        return TaskSpec(key, dd, 2, lb, ub, _omnitest_eval, None)
    if key == "vlmop1":
        if m not in (None, 2):
            raise ValueError("vlmop1 is bi-objective")
        dd = 1 if d is None else d
        lb, ub = _box(dd, -2.0, 2.0)
        front = _vlmop1_front if dd == 1 else None
        return TaskSpec(key, dd, 2, lb, ub, _vlmop1_eval, front)
    if key == "vlmop2":
        if m not in (None, 2):
            raise ValueError("vlmop2 is bi-objective")
        dd = 3 if d is None else d
        lb, ub = _box(dd, -4.0, 4.0)
        return TaskSpec(key, dd, 2, lb, ub, _vlmop2_eval, _vlmop2_front(dd))
    if key == "vlmop3":
        if d not in (None, 2) or m not in (None, 3):
            raise ValueError("vlmop3 is fixed at d=2, m=3")
        lb, ub = _box(2, -3.0, 3.0)
        return TaskSpec(key, 2, 3, lb, ub, _vlmop3_eval, None)
    raise ValueError(f"unknown task {name!r}")


def available_tasks() -> list[str]:
    return [
        "zdt1", "zdt2", "zdt3", "zdt4", "zdt6",
        "dtlz1", "dtlz7", "omnitest", "vlmop1", "vlmop2", "vlmop3",
    ]


# ---------------------------------------------------------------------------
# Offline dataset generation


def _sample_uniform(task, n, rng):
    return rng.uniform(task.lower_bounds, task.upper_bounds, size=(n, task.d))


def _sample_lhs(task, n, rng):
    span = task.upper_bounds - task.lower_bounds
    X = np.empty((n, task.d))
    for j in range(task.d):
        strata = (rng.permutation(n) + rng.uniform(size=n)) / n
        X[:, j] = task.lower_bounds[j] + strata * span[j]
    return X


def _sbx_crossover(p1, p2, lb, ub, rng, eta=15.0, prob=0.9):
    c1, c2 = p1.copy(), p2.copy()
    if rng.uniform() > prob:
        return c1, c2
    do = rng.uniform(size=p1.shape[0]) < 0.5
    u = rng.uniform(size=p1.shape[0])
    beta = np.where(
        u <= 0.5,
        (2.0 * u) ** (1.0 / (eta + 1.0)),
        (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta + 1.0)),
    )
    mean = 0.5 * (p1 + p2)
    diff = 0.5 * beta * np.abs(p1 - p2)
    c1[do] = (mean - diff)[do]
    c2[do] = (mean + diff)[do]
    return np.clip(c1, lb, ub), np.clip(c2, lb, ub)


def _polynomial_mutation(x, lb, ub, rng, eta=20.0):
    y = x.copy()
    d = x.shape[0]
    do = rng.uniform(size=d) < (1.0 / d)
    if not do.any():
        return y
    u = rng.uniform(size=d)
    span = ub - lb
    delta = np.where(
        u < 0.5,
        (2.0 * u) ** (1.0 / (eta + 1.0)) - 1.0,
        1.0 - (2.0 * (1.0 - u)) ** (1.0 / (eta + 1.0)),
    )
    y[do] = y[do] + delta[do] * span[do]
    return np.clip(y, lb, ub)


def _survival_order(Y):
    """Indices sorted by NSGA-II survival preference."""
    part = non_dominated_sort(Y)
    crowd = np.zeros(Y.shape[0])
    for front in part.fronts:
        crowd[front] = crowding_distance(Y[front])
    return sorted(range(Y.shape[0]), key=lambda i: (part.rank_of[i], -crowd[i], i)), part, crowd


def _collect_with_ea(task, n, rng, pop_size=100):
    """Run a small NSGA-II and pool every evaluated individual.

    The pool inherits the skewed quality distribution of an
    optimization trajectory, which is what an offline collection looks
    like in practice.
    """
    lb, ub = task.lower_bounds, task.upper_bounds
    P = _sample_uniform(task, min(pop_size, n), rng)
    PY = task.evaluate_batch(P)
    pool_X = [P]
    pool_Y = [PY]
    pooled = P.shape[0]
    while pooled < n:
        order, part, crowd = _survival_order(PY)
        rank = part.rank_of
        n_children = min(pop_size, n - pooled)
        children = np.empty((n_children, task.d))
        made = 0
        while made < n_children:
            idx = rng.integers(0, P.shape[0], size=4)
            a = idx[0] if (rank[idx[0]], -crowd[idx[0]]) <= (rank[idx[1]], -crowd[idx[1]]) else idx[1]
            b = idx[2] if (rank[idx[2]], -crowd[idx[2]]) <= (rank[idx[3]], -crowd[idx[3]]) else idx[3]
            c1, c2 = _sbx_crossover(P[a], P[b], lb, ub, rng)
            for c in (c1, c2):
                if made >= n_children:
                    break
                children[made] = _polynomial_mutation(c, lb, ub, rng)
                made += 1
        CY = task.evaluate_batch(children)
        pool_X.append(children)
        pool_Y.append(CY)
        pooled += n_children
        combined_X = np.vstack([P, children])
        combined_Y = np.vstack([PY, CY])
        order, _, _ = _survival_order(combined_Y)
        keep = np.array(order[:pop_size])
        P, PY = combined_X[keep], combined_Y[keep]
    return np.vstack(pool_X)[:n], np.vstack(pool_Y)[:n]


def generate_offline_dataset(
    task: TaskSpec,
    n: int,
    seed: int,
    strategy: str = "ea-collected",
) -> OfflineDataset:
    """Create a reproducible offline dataset for ``task``.

    Strategies: "uniform" and "lhs" sample the decision box directly;
    "ea-collected" pools every individual evaluated by a short NSGA-II
    run, mimicking data gathered along an optimization trajectory.
    """
    if n < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    if strategy == "uniform":
        X = _sample_uniform(task, n, rng)
        Y = task.evaluate_batch(X)
    elif strategy == "lhs":
        X = _sample_lhs(task, n, rng)
        Y = task.evaluate_batch(X)
    elif strategy == "ea-collected":
        X, Y = _collect_with_ea(task, n, rng)
    else:
        raise ValueError(f"unknown dataset strategy {strategy!r}")
    return OfflineDataset(
        X=X,
        Y=Y,
        lower_bounds=task.lower_bounds.copy(),
        upper_bounds=task.upper_bounds.copy(),
        seed=seed,
        task_name=task.name,
    )
