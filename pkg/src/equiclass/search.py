"""Grid search helpers shared by the continuum and binned optimizers.

Objectives here are cheap to vectorize but may be nonsmooth and
multimodal, so instead of derivative-based methods we use multistart
coarse grids followed by shrinking local grids ("bracket refinement").
Every evaluator has the signature ``f(points) -> (values, feasible)``
where ``points`` has shape ``(m, d)``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NumericalFailureError

Evaluator = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def masked(values: np.ndarray, feasible: np.ndarray) -> np.ndarray:
    return np.where(feasible, values, -np.inf)


def refine(
    f: Evaluator,
    x0: np.ndarray,
    step: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    *,
    points: int = 11,
    shrink: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> tuple[np.ndarray, float]:
    """Shrinking-grid ascent from ``x0``.

    Each iteration lays a ``points``-per-axis grid over ``x +- step``
    (clipped to the box), moves to the best feasible point if it improves,
    and multiplies ``step`` by ``shrink``. Stops once every step is below
    ``tol``.
    """
    x = np.asarray(x0, dtype=float).copy()
    step = np.asarray(step, dtype=float).copy()
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    v0, ok0 = f(x[None, :])
    best = float(v0[0]) if ok0[0] else -np.inf
    offsets = np.linspace(-1.0, 1.0, points)
    for _ in range(max_iter):
        if np.all(step < tol):
            break
        axes = [np.clip(x[i] + step[i] * offsets, lower[i], upper[i]) for i in range(x.size)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, x.size)
        vals, ok = f(grid)
        vals = masked(vals, ok)
        j = int(np.argmax(vals))
        if vals[j] > best:
            best = float(vals[j])
            x = grid[j].copy()
        step = step * shrink
    return x, best


def local_maxima_1d(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of up to ``k`` largest finite local maxima (plateaus count once)."""
    v = np.asarray(values, dtype=float)
    padded = np.concatenate([[-np.inf], v, [-np.inf]])
    left = padded[1:-1] >= padded[:-2]
    right = padded[1:-1] > padded[2:]
    idx = np.flatnonzero(left & right & np.isfinite(v))
    if idx.size == 0:
        finite = np.flatnonzero(np.isfinite(v))
        return finite[np.argsort(-v[finite])][:1]
    return idx[np.argsort(-v[idx], kind="stable")][:k]


def top_candidates_2d(values: np.ndarray, k: int, min_sep: int) -> list[tuple[int, int]]:
    """Greedy non-maximum suppression over a 2D array of (masked) values."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(-v, axis=None, kind="stable")
    picked: list[tuple[int, int]] = []
    for flat in order:
        if not np.isfinite(v.flat[flat]) or len(picked) >= k:
            break
        i, j = np.unravel_index(flat, v.shape)
        if all(max(abs(i - a), abs(j - b)) > min_sep for a, b in picked):
            picked.append((int(i), int(j)))
    return picked


def bisect(fn: Callable[[float], float], a: float, b: float, *, tol: float = 1e-13, max_iter: int = 200) -> float:
    """Root of ``fn`` on ``[a, b]`` given a sign change; raises after ``max_iter`` halvings."""
    fa, fb = fn(a), fn(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if np.sign(fa) == np.sign(fb):
        raise NumericalFailureError(f"no sign change on [{a}, {b}]")
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        fm = fn(m)
        if fm == 0.0 or (b - a) <= tol * max(1.0, abs(m)):
            return m
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b = m
    raise NumericalFailureError(f"bisection did not converge within {max_iter} iterations on [{a}, {b}]")


def sign_change_brackets(x: np.ndarray, y: np.ndarray) -> list[tuple[float, float]]:
    """Consecutive grid intervals over which ``y`` changes strict sign."""
    s = np.sign(y)
    out = []
    last = None
    for i in range(len(x)):
        if s[i] == 0:
            continue
        if last is not None and s[i] != s[last]:
            out.append((float(x[last]), float(x[i])))
        last = i
    return out
