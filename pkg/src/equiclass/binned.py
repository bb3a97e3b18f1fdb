"""Designer's problem on a finite partition of the signal line.

A partition into bins ``B^1..B^n`` (two unbounded tails included) turns a
rule into a vector ``delta`` of per-bin acceptance probabilities, and every
reward probability into ``S_beta = sum_j gamma_{beta,j} delta_j``.

The solver does not run a generic NLP. First-order conditions say that the
gradient ``W^j`` of the (quota-penalized) objective has at most one sign
change across bins without cheating, and at most two with cheating under
exponential-family signals. So the optimum lies on a small set of paths:

* baseline: positive or negative "threshold" vectors ``1..1 p 0..0`` /
  ``0..0 p 1..1``, parametrized by a single position ``t in [0, n]``;
* cheating: inner or outer two-cut vectors with up to two fractional bins,
  parametrized by ``0 <= t_low <= t_high <= n``.

Each path is searched on a dense grid, then refined locally; when the quota
binds, the exact boundary points are found by bisection and scored too.
A binding quota can also move the optimum off these paths (two fractional
bins), so that case adds randomized candidates and a local SLSQP polish.

:func:`verify_structure` independently recomputes ``W^j`` from closed-form
switching constants and checks the first-order conditions at the returned
vector. :func:`refinement_study` solves on a sequence of nested partitions.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import optimize as sopt

from .distributions import ExpFamilyRatios, exp_family_ratios
from .equilibrium import REWARD_SHARE, DesignerPayoff, ScenarioSpec, behavior_cutoffs, outcome_arrays
from .errors import InvalidModelError, UnsupportedFamilyError
from .optimizer import optimize
from .rules import Binned
from .search import bisect, local_maxima_1d, masked, refine, sign_change_brackets, top_candidates_2d

# Probabilities this close to 0 or 1 are snapped to the endpoint.
SNAP = 1e-9
# A candidate replaces the incumbent only if it improves by more than this.
IMPROVE = 1e-12
QUOTA_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class BinnedProblem:
    """Bin partition with per-behavior bin masses ``gamma``.

    ``edges`` are the interior cut points, so there are ``len(edges) + 1``
    bins: ``(-inf, e_0], (e_0, e_1], ..., (e_last, inf)``.
    """

    edges: np.ndarray
    masses: dict[str, np.ndarray]
    scenario: ScenarioSpec

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        object.__setattr__(self, "edges", edges)
        if edges.ndim != 1 or np.any(~np.isfinite(edges)) or np.any(np.diff(edges) <= 0):
            raise InvalidModelError("bin edges must be finite and strictly increasing")
        for key, g in self.masses.items():
            if g.shape != (edges.size + 1,):
                raise InvalidModelError(f"masses for behavior {key} have shape {g.shape}, expected ({edges.size + 1},)")
            if not np.all(g > 0):
                raise InvalidModelError(f"behavior {key} has a bin with zero mass; narrow the binned interval")
            if abs(g.sum() - 1.0) > 1e-10:
                raise InvalidModelError(f"masses for behavior {key} sum to {g.sum()!r}")

    @property
    def n_bins(self) -> int:
        return self.edges.size + 1

    @property
    def h(self) -> np.ndarray:
        return self.masses["1"] - self.masses["0"]

    @property
    def gamma1(self) -> np.ndarray:
        return self.masses["1"]

    @property
    def gamma0(self) -> np.ndarray:
        return self.masses["0"]

    @property
    def gamma_chi(self) -> np.ndarray | None:
        return self.masses.get("chi")

    def bin_weight(self) -> np.ndarray:
        """Largest per-behavior mass of each bin (scale for tolerances)."""
        return np.max(np.stack(list(self.masses.values())), axis=0)

    def rewards(self, P: np.ndarray):
        """Reward probabilities for rows of acceptance vectors ``P``."""
        P = np.asarray(P, dtype=float)
        schi = P @ self.gamma_chi if self.scenario.cheating else None
        return P @ self.gamma1, P @ self.gamma0, schi

    def outcomes(self, P: np.ndarray) -> dict[str, np.ndarray]:
        return outcome_arrays(self.scenario, *self.rewards(P))

    def rule(self, probs) -> Binned:
        return Binned(tuple(self.edges), tuple(float(p) for p in probs))


def build_bins_from_edges(scenario: ScenarioSpec, edges) -> BinnedProblem:
    edges = np.asarray(edges, dtype=float)
    lo = np.concatenate([[-np.inf], edges])
    hi = np.concatenate([edges, [np.inf]])
    masses = {key: np.asarray(d.mass(lo, hi), dtype=float) for key, d in scenario.signals.items()}
    return BinnedProblem(edges, masses, scenario)


def build_bins(scenario: ScenarioSpec, interval: tuple[float, float], n_inner: int) -> BinnedProblem:
    """``n_inner`` equal-width bins on ``interval`` plus the two tail bins."""
    lo, hi = interval
    if not lo < hi:
        raise ValueError("interval must satisfy lo < hi")
    if n_inner < 1:
        raise ValueError("n_inner must be >= 1")
    return build_bins_from_edges(scenario, np.linspace(lo, hi, n_inner + 1))


# --------------------------------------------------------------------------
# first-order structure


@dataclass(frozen=True)
class SwitchingConstants:
    """``W^j = X gamma_1j + Y_chi gamma_chi,j + Y_0 gamma_0j``.

    Without cheating ``Y_chi = 0`` and the usual pair is ``(X, Y)`` with
    ``Y = -Y_0``.
    """

    X: float
    Y_chi: float
    Y_0: float

    def __sub__(self, other: "SwitchingConstants") -> "SwitchingConstants":
        return SwitchingConstants(self.X - other.X, self.Y_chi - other.Y_chi, self.Y_0 - other.Y_0)

    def scaled(self, k: float) -> "SwitchingConstants":
        return SwitchingConstants(k * self.X, k * self.Y_chi, k * self.Y_0)

    def w(self, problem: BinnedProblem) -> np.ndarray:
        out = self.X * problem.gamma1 + self.Y_0 * problem.gamma0
        if problem.gamma_chi is not None:
            out = out + self.Y_chi * problem.gamma_chi
        return out


def switching_constants(
    scenario: ScenarioSpec, s1: float, s0: float, schi: float | None, payoff: DesignerPayoff | None = None
) -> SwitchingConstants:
    """Closed-form gradient constants of the designer's payoff in the ``delta_j``.

    Holds wherever the best-response regime (cheating band present or not)
    is locally constant; on the regime boundary it is the one-sided
    derivative from the side the tie-breaking puts us on.
    """
    P = scenario.payoff if payoff is None else payoff
    F = scenario.cost
    r = scenario.reward
    if not scenario.cheating:
        schi = None
    u1, u0 = (float(u) for u in behavior_cutoffs(s1, s0, schi, r, scenario.kappa))
    F1 = float(F.cdf(u1))
    F0 = float(F.sf(u0))
    Fchi = max(float(F.cdf(u0)) - F1, 0.0)
    P1 = P.A1 * s1 + P.A0 * (1.0 - s1)
    P0 = P.B0 * s0 + P.B1 * (1.0 - s0)
    if schi is None or not u1 < u0:
        xi = r * float(F.pdf(u1)) * (P1 - P0)
        return SwitchingConstants(F1 * (P.A1 - P.A0) + xi, 0.0, F0 * (P.B0 - P.B1) - xi)
    kappa = scenario.kappa
    Pchi = P.B0 * schi + P.B1 * (1.0 - schi)
    a = r * float(F.pdf(u1)) / (1.0 - kappa) if kappa < 1.0 and math.isfinite(u1) else 0.0
    b = r * float(F.pdf(u0)) / kappa if kappa > 0.0 and math.isfinite(u0) else 0.0
    return SwitchingConstants(
        X=F1 * (P.A1 - P.A0) + a * (P1 - Pchi),
        Y_chi=Fchi * (P.B0 - P.B1) - a * (P1 - Pchi) + b * (Pchi - P0),
        Y_0=F0 * (P.B0 - P.B1) - b * (Pchi - P0),
    )


@dataclass(frozen=True)
class WTildeZeros:
    count: int
    locations: tuple[float, ...]


def wtilde(ratios: ExpFamilyRatios, X: float, Y_chi: float, Y_0: float, s) -> np.ndarray:
    """``W~(s) / m(s)`` for a positive scale ``m`` chosen to avoid overflow."""
    s = np.asarray(s, dtype=float)
    t1 = ratios.a * s + ratios.b
    t0 = -ratios.c * s + ratios.d
    m = np.maximum(np.maximum(t1, t0), 0.0)
    return X * np.exp(t1 - m) + Y_chi * np.exp(-m) + Y_0 * np.exp(t0 - m)


def wtilde_zeros(
    ratios: ExpFamilyRatios, X: float, Y_chi: float, Y_0: float, grid: tuple[float, float, int] = (-20.0, 20.0, 4001)
) -> WTildeZeros:
    """Strict sign changes of ``X g1/gchi + Y_chi + Y_0 g0/gchi`` on a grid, each refined by bisection."""
    lo, hi, n = grid
    if not (ratios.a > 0 and ratios.c > 0):
        raise ValueError("wtilde_zeros needs a > 0 and c > 0")
    if n < 100 or not lo < hi:
        raise ValueError("grid needs lo < hi and n >= 100")
    s = np.linspace(lo, hi, int(n))
    vals = wtilde(ratios, X, Y_chi, Y_0, s)

    def fn(x):
        return float(wtilde(ratios, X, Y_chi, Y_0, x))

    roots = tuple(bisect(fn, a, b, tol=1e-10) for a, b in sign_change_brackets(s, vals))
    return WTildeZeros(len(roots), roots)


@dataclass(frozen=True)
class StructureCertificate:
    constants: dict[str, float]
    lam: float
    w: np.ndarray
    sign_pattern: np.ndarray
    sign_changes: int
    interior_bins: int
    orientation: str
    wtilde_zero_count: int | None
    valid: bool
    structured: bool
    violations: tuple[str, ...] = ()
    structure_notes: tuple[str, ...] = ()

    def summary(self) -> str:
        status = "valid" if self.valid else "INVALID"
        shape = "" if self.structured else " (unstructured)"
        return (f"{self.orientation}, {self.sign_changes} sign change(s), "
                f"{self.interior_bins} interior bin(s), {status}{shape}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "constants": self.constants,
            "lambda": self.lam,
            "sign_pattern": self.sign_pattern.tolist(),
            "sign_changes": self.sign_changes,
            "interior_bins": self.interior_bins,
            "orientation": self.orientation,
            "wtilde_zero_count": self.wtilde_zero_count,
            "valid": self.valid,
            "structured": self.structured,
            "violations": list(self.violations),
            "structure_notes": list(self.structure_notes),
        }


def _interior(probs: np.ndarray) -> np.ndarray:
    return (probs > SNAP) & (probs < 1.0 - SNAP)


def _count_changes(signs: np.ndarray) -> tuple[int, list[int]]:
    nz = signs[signs != 0]
    changes = int(np.count_nonzero(np.diff(nz))) if nz.size else 0
    runs = [int(nz[0])] + [int(x) for x, y in zip(nz[1:], nz[:-1]) if x != y] if nz.size else []
    return changes, runs


_ORIENTATION = {
    (): "flat",
    (1,): "accept_all",
    (-1,): "reject_all",
    (-1, 1): "positive",
    (1, -1): "negative",
    (-1, 1, -1): "inner",
    (1, -1, 1): "outer",
}


def _recover_lambda(w_p, w_r, probs, tol, usage, q) -> float:
    if q >= 1.0 or usage < q - 1e-9:
        return 0.0
    inner = _interior(probs)
    if inner.any():
        # the marginal bin is where the penalized gradient vanishes
        k = int(np.flatnonzero(inner)[np.argmax(np.abs(w_r[inner]))])
        if w_r[k] != 0.0:
            return max(w_p[k] / w_r[k], 0.0)
    # smallest lambda >= 0 satisfying all pure-bin conditions
    lo = 0.0
    ones = probs >= 1.0 - SNAP
    need = ones & (w_r < 0)
    zeros = probs <= SNAP
    need |= zeros & (w_r > 0)
    if need.any():
        lo = max(lo, float(np.max((w_p[need] - np.sign(w_r[need]) * tol[need]) / w_r[need])))
    return lo


def verify_structure(
    problem: BinnedProblem, solution: "BinnedSolution | np.ndarray", q: float | None = None, tol: float = 1e-6
) -> StructureCertificate:
    """Check the first-order conditions at a binned solution.

    Recovers the quota multiplier, evaluates ``W^j`` at the solution, and
    checks ``delta_j = 1 => W^j >= -tol_j``, ``delta_j = 0 => W^j <= tol_j``
    and ``|W^j| <= tol_j`` for interior bins, where ``tol_j`` is ``tol``
    times the bin's mass. Any failure makes ``valid`` false.

    ``structured`` separately records whether the solution has the
    threshold shape (at most one sign change and one interior bin) or, with
    cheating, the two-cut shape (at most two ``W~`` zeros). A valid but
    unstructured certificate arises when a binding quota makes
    ``W^j`` vanish in every bin: first-order conditions then place no
    restriction on the shape and the optimum can need two fractional bins.
    """
    scenario = problem.scenario
    q = scenario.quota if q is None else q
    probs = np.asarray(getattr(solution, "probs", solution), dtype=float)
    s1, s0, schi = (None if x is None else float(x) for x in problem.rewards(probs))
    usage = float(outcome_arrays(scenario, s1, s0, schi)["quota"])
    c_p = switching_constants(scenario, s1, s0, schi)
    c_r = switching_constants(scenario, s1, s0, schi, REWARD_SHARE)
    w_p, w_r = c_p.w(problem), c_r.w(problem)
    tol_j = tol * problem.bin_weight()
    lam = _recover_lambda(w_p, w_r, probs, tol_j, usage, q)
    consts = c_p - c_r.scaled(lam)
    w = w_p - lam * w_r

    violations = []
    ones = probs >= 1.0 - SNAP
    zeros = probs <= SNAP
    inner = _interior(probs)
    for j in np.flatnonzero(ones & (w < -tol_j)):
        violations.append(f"bin {j}: accepted but W={w[j]:.3e}")
    for j in np.flatnonzero(zeros & (w > tol_j)):
        violations.append(f"bin {j}: rejected but W={w[j]:.3e}")
    for j in np.flatnonzero(inner & (np.abs(w) > tol_j)):
        violations.append(f"bin {j}: interior ({probs[j]:.6f}) but W={w[j]:.3e}")
    if usage > q + 1e-9:
        violations.append(f"quota violated: {usage} > {q}")

    signs = np.where(np.abs(w) <= tol_j, 0, np.sign(w)).astype(np.int8)
    changes, _ = _count_changes(signs)
    # where W vanishes the rule's own choice decides which side the bin is on
    effective = np.where(signs != 0, signs, np.where(probs > SNAP, 1, -1))
    orientation = _ORIENTATION.get(tuple(_count_changes(effective)[1]), "irregular")
    n_inner = int(np.count_nonzero(inner))

    notes = []
    wz = None
    if scenario.cheating:
        constants = {"X": consts.X, "Y_chi": consts.Y_chi, "Y_0": consts.Y_0}
        try:
            ratios = exp_family_ratios(scenario.signals)
        except UnsupportedFamilyError:
            ratios = None
        if ratios is not None:
            lo, hi = scenario.signals.default_interval(8.0)
            wz = wtilde_zeros(ratios, consts.X, consts.Y_chi, consts.Y_0, (lo, hi, 4001)).count
            if wz > 2:
                notes.append(f"W~ has {wz} zeros")
        if changes > 2:
            notes.append(f"{changes} sign changes in W")
        if n_inner > 2:
            notes.append(f"{n_inner} interior bins")
    else:
        constants = {"X": consts.X, "Y": -consts.Y_0}
        if changes > 1:
            notes.append(f"{changes} sign changes in W")
        if n_inner > 1:
            notes.append(f"{n_inner} interior bins")
    return StructureCertificate(constants, lam, w, signs, changes, n_inner, orientation, wz, not violations,
                                not notes, tuple(violations), tuple(notes))


# --------------------------------------------------------------------------
# solver


@dataclass(frozen=True)
class BinnedSolution:
    probs: np.ndarray
    utility: float
    lam: float
    structure: StructureCertificate
    family: str
    quota_usage: float
    edges: np.ndarray = field(repr=False)

    @property
    def rule(self) -> Binned:
        return Binned(tuple(self.edges), tuple(float(p) for p in self.probs))

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family,
            "utility": self.utility,
            "lambda": self.lam,
            "quota_usage": self.quota_usage,
            "rule": self.rule.to_dict(),
            "structure": self.structure.to_dict(),
        }


def path_probs(family: str, params: np.ndarray, n: int) -> np.ndarray:
    """Acceptance vectors along a structured path; ``params`` has shape ``(m, 1)`` or ``(m, 2)``."""
    params = np.atleast_2d(np.asarray(params, dtype=float))
    j = np.arange(n)[None, :]
    if family == "positive_threshold":
        return np.clip(j + 1 - params[:, :1], 0.0, 1.0)
    if family == "negative_threshold":
        return np.clip(params[:, :1] - j, 0.0, 1.0)
    inner = np.clip(np.minimum(params[:, 1:2], j + 1) - np.maximum(params[:, :1], j), 0.0, 1.0)
    if family == "inner_two_cut":
        return inner
    if family == "outer_two_cut":
        return 1.0 - inner
    raise ValueError(f"unknown path family {family!r}")


class _PathObjective:
    """Vectorized objective along a path, without materializing full vectors."""

    def __init__(self, problem: BinnedProblem, family: str, q: float):
        self.problem = problem
        self.family = family
        self.q = q
        self.n = problem.n_bins
        self.knots = np.arange(self.n + 1, dtype=float)
        self.cum = {k: np.concatenate([[0.0], np.cumsum(g)]) for k, g in problem.masses.items()}

    def _reward(self, key, P):
        C = self.cum[key]
        total = C[-1]
        if self.family == "positive_threshold":
            return total - np.interp(P[:, 0], self.knots, C)
        if self.family == "negative_threshold":
            return np.interp(P[:, 0], self.knots, C)
        inner = np.interp(P[:, 1], self.knots, C) - np.interp(P[:, 0], self.knots, C)
        return inner if self.family == "inner_two_cut" else total - inner

    def outcomes(self, P):
        P = np.atleast_2d(P)
        schi = self._reward("chi", P) if self.problem.scenario.cheating else None
        return outcome_arrays(self.problem.scenario, self._reward("1", P), self._reward("0", P), schi)

    def __call__(self, P):
        P = np.atleast_2d(P)
        o = self.outcomes(P)
        ok = o["quota"] <= self.q + QUOTA_SLACK
        if P.shape[1] == 2:
            ok = ok & (P[:, 0] <= P[:, 1])
        return o["utility"], ok

    def quota_gap(self, t: float) -> float:
        return float(self.outcomes(np.array([[t]]))["quota"][0]) - self.q


def _search_1d(obj: _PathObjective, starts: int, per_bin: int) -> list[np.ndarray]:
    n = obj.n
    t = np.linspace(0.0, n, per_bin * n + 1)
    vals, ok = obj(t[:, None])
    cands = []
    step = np.array([1.0 / per_bin])
    for i in local_maxima_1d(masked(vals, ok), starts):
        x, _ = refine(obj, t[i : i + 1], step, [0.0], [float(n)], tol=1e-12)
        cands.append(x)
    if obj.q < 1.0:
        gap = obj.outcomes(t[:, None])["quota"] - obj.q
        for a, b in sign_change_brackets(t, gap):
            cands.append(np.array([bisect(obj.quota_gap, a, b, tol=1e-15)]))
            # the grid end on the feasible side, in case the root lands a hair outside
            cands.append(np.array([a if obj.quota_gap(a) <= 0 else b]))
    return cands


def _search_2d(obj: _PathObjective, starts: int) -> list[np.ndarray]:
    n = obj.n
    i, j = np.triu_indices(n + 1)
    P = np.column_stack([i, j]).astype(float)
    vals, ok = obj(P)
    grid = np.full((n + 1, n + 1), -np.inf)
    grid[i, j] = masked(vals, ok)
    cands = []
    for a, b in top_candidates_2d(grid, starts, min_sep=1):
        x, _ = refine(obj, np.array([a, b], dtype=float), np.array([1.0, 1.0]), [0.0, 0.0], [float(n), float(n)],
                      points=9, tol=1e-12)
        cands.append(x)
    return cands


def purify(probs: np.ndarray, G: np.ndarray, eps: float = SNAP) -> np.ndarray:
    """Move ``probs`` to a vector with at most ``len(G)`` fractional entries and the same ``G @ probs``.

    Repeatedly takes ``k + 1`` fractional entries, moves along a null
    direction of the corresponding ``k x (k + 1)`` block of ``G`` until one
    entry reaches 0 or 1, and fixes it there.
    """
    d = np.array(probs, dtype=float)
    k = G.shape[0]
    while True:
        frac = np.flatnonzero((d > eps) & (d < 1.0 - eps))
        if frac.size <= k:
            break
        idx = frac[: k + 1]
        z = np.linalg.svd(G[:, idx])[2][-1]
        with np.errstate(divide="ignore"):
            room = np.where(z > 0, (1.0 - d[idx]) / z, np.where(z < 0, -d[idx] / z, np.inf))
        m = int(np.argmin(room))
        d[idx] = np.clip(d[idx] + room[m] * z, 0.0, 1.0)
        d[idx[m]] = 1.0 if z[m] > 0 else 0.0
    return np.where(d < eps, 0.0, np.where(d > 1.0 - eps, 1.0, d))


def _gamma_matrix(problem: BinnedProblem) -> np.ndarray:
    rows = [problem.gamma1, problem.gamma0]
    if problem.scenario.cheating:
        rows.append(problem.gamma_chi)
    return np.stack(rows)


def _quota_curve_candidates(problem: BinnedProblem, q: float, starts: int, points: int = 4001) -> list[np.ndarray]:
    """Baseline optima on the binding quota that may lie strictly inside the ROC region.

    On ``v = q`` the rates are pinned down by the incentive alone:
    ``FPR = q - pi(Delta) Delta`` and ``TPR = FPR + Delta``. Scanning
    ``Delta`` and keeping points between the negative-threshold (lower) and
    positive-threshold (upper) ROC curves covers every achievable point on
    the quota curve.
    """
    scenario = problem.scenario
    knots = np.arange(problem.n_bins + 1, dtype=float)
    C1 = np.concatenate([[0.0], np.cumsum(problem.gamma1)])
    C0 = np.concatenate([[0.0], np.cumsum(problem.gamma0)])
    T1, T0 = C1[-1], C0[-1]
    up_f, up_t = (T0 - C0)[::-1], (T1 - C1)[::-1]

    def rates(D):
        pi = np.asarray(scenario.cost.cdf(scenario.reward * D))
        fpr = q - pi * D
        return fpr + D, fpr

    def f(P):
        D = P[:, 0]
        tpr, fpr = rates(D)
        inside = (fpr >= 0.0) & (fpr <= T0)
        fc = np.clip(fpr, 0.0, T0)
        inside &= (tpr >= np.interp(fc, C0, C1) - 1e-15) & (tpr <= np.interp(fc, up_f, up_t) + 1e-15)
        return outcome_arrays(scenario, tpr, fpr)["utility"], inside

    grid = np.linspace(-1.0, 1.0, points)
    vals, ok = f(grid[:, None])
    out = []
    for i in local_maxima_1d(masked(vals, ok), starts):
        x, best = refine(f, grid[i : i + 1], np.array([grid[1] - grid[0]]), [-1.0], [1.0], tol=1e-14)
        if not np.isfinite(best):
            continue
        tpr, fpr = (float(v) for v in rates(x[0]))
        # mix the upper and lower ROC points at this FPR, then purify
        t_u = float(np.interp(fpr, up_f, knots[::-1]))
        t_l = float(np.interp(fpr, C0, knots))
        hi = path_probs("positive_threshold", [[t_u]], problem.n_bins)[0]
        lo = path_probs("negative_threshold", [[t_l]], problem.n_bins)[0]
        tu, tl = float(hi @ problem.gamma1), float(lo @ problem.gamma1)
        theta = 1.0 if tu == tl else min(max((tpr - tl) / (tu - tl), 0.0), 1.0)
        out.append(purify(theta * hi + (1.0 - theta) * lo, _gamma_matrix(problem)))
    return out


def _mixed_two_cut_candidates(problem: BinnedProblem, q: float, starts: int, positions: int = 41,
                              alphas: int = 21) -> list[np.ndarray]:
    """Cheating optima on the binding quota that may lie inside the achievable set.

    The set of achievable ``(S_1, S_0, S_chi)`` is symmetric about the
    half-acceptance point, and its boundary consists of two-cut vectors, so
    every achievable point is ``alpha b + (1 - alpha)(1 - b)`` for an inner
    two-cut vector ``b``. Searched on a coarse grid and refined in 3D.
    """
    n = problem.n_bins
    obj = _PathObjective(problem, "inner_two_cut", 1.0)
    total = {k: c[-1] for k, c in obj.cum.items()}
    scenario = problem.scenario

    def f(P):
        P = np.atleast_2d(P)
        a = P[:, 2]
        rw = {k: a * obj._reward(k, P[:, :2]) + (1.0 - a) * (total[k] - obj._reward(k, P[:, :2]))
              for k in ("1", "0", "chi")}
        o = outcome_arrays(scenario, rw["1"], rw["0"], rw["chi"])
        return o["utility"], (o["quota"] <= q + QUOTA_SLACK) & (P[:, 0] <= P[:, 1])

    pos = np.linspace(0.0, n, min(n + 1, positions))
    i, j = np.triu_indices(pos.size)
    A = np.linspace(0.0, 1.0, alphas)
    P = np.column_stack([np.repeat(pos[i], A.size), np.repeat(pos[j], A.size), np.tile(A, i.size)])
    vals = masked(*f(P))
    order = np.argsort(-vals, kind="stable")
    step = np.array([pos[1] - pos[0], pos[1] - pos[0], A[1] - A[0]])
    picked: list[np.ndarray] = []
    for k in order:
        if not np.isfinite(vals[k]) or len(picked) >= starts:
            break
        if all(np.any(np.abs(P[k] - p) > 1.5 * step) for p in picked):
            picked.append(P[k])
    out = []
    for x0 in picked:
        x, best = refine(f, x0, step, [0.0, 0.0, 0.0], [float(n), float(n), 1.0], points=7, tol=1e-12)
        if np.isfinite(best):
            b = path_probs("inner_two_cut", x[None, :2], n)[0]
            out.append(purify(x[2] * b + (1.0 - x[2]) * (1.0 - b), _gamma_matrix(problem)))
    return out


def _polish(problem: BinnedProblem, probs: np.ndarray, q: float) -> np.ndarray | None:
    """Local first-order polish with SLSQP, using the closed-form gradients."""
    scenario = problem.scenario

    def parts(d):
        s1, s0, schi = (None if x is None else float(x) for x in problem.rewards(d))
        o = outcome_arrays(scenario, s1, s0, schi)
        return s1, s0, schi, float(o["utility"]), float(o["quota"])

    def fun(d):
        s1, s0, schi, u, _ = parts(d)
        return -u, -switching_constants(scenario, s1, s0, schi).w(problem)

    def con(d):
        return q - parts(d)[4]

    def con_jac(d):
        s1, s0, schi, _, _ = parts(d)
        return -switching_constants(scenario, s1, s0, schi, REWARD_SHARE).w(problem)

    res = sopt.minimize(fun, probs, jac=True, method="SLSQP", bounds=[(0.0, 1.0)] * probs.size,
                        constraints=[{"type": "ineq", "fun": con, "jac": con_jac}],
                        options={"ftol": 1e-15, "maxiter": 300})
    x = np.clip(res.x, 0.0, 1.0)
    if con(x) < 0:
        # pull back toward the (feasible) start until the quota holds
        if con(probs) < 0:
            return None
        lam = bisect(lambda a: con(probs + a * (x - probs)), 0.0, 1.0, tol=1e-15)
        x = probs + lam * (x - probs)
        if con(x) < 0:
            x = probs + (lam - 1e-12) * (x - probs)
    return purify(x, _gamma_matrix(problem))


POLISH_MAX_BINS = 200


def solve_binned(problem: BinnedProblem, q: float | None = None, *, starts: int = 6, per_bin: int = 8,
                 tol: float = 1e-6) -> BinnedSolution:
    """Utility-maximizing per-bin acceptance vector subject to the quota.

    Searches the structured paths (thresholds without cheating, two-cuts
    with cheating). When the quota can bind, the optimum may instead sit
    strictly inside the achievable set of reward probabilities, so those
    points are searched as well and mapped back to a vector with as few
    fractional bins as possible (two without cheating, three with).

    The all-reject vector is the incumbent and is only displaced by a
    strict improvement, so constant objectives return all zeros.
    """
    scenario = problem.scenario
    q = scenario.quota if q is None else q
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    n = problem.n_bins
    families = ("inner_two_cut", "outer_two_cut") if scenario.cheating else ("positive_threshold", "negative_threshold")

    groups: list[tuple[str, np.ndarray]] = []
    for fam in families:
        obj = _PathObjective(problem, fam, q)
        cands = _search_1d(obj, starts, per_bin) if not scenario.cheating else _search_2d(obj, starts)
        if cands:
            groups.append((fam, path_probs(fam, np.stack(cands), n)))
    if q < 1.0:
        extra = (_mixed_two_cut_candidates(problem, q, starts) if scenario.cheating
                 else _quota_curve_candidates(problem, q, starts))
        if extra:
            groups.append(("randomized", np.stack(extra)))

    if q < 1.0 and n <= POLISH_MAX_BINS:
        # a binding quota leaves a curved feasible boundary the grid searches
        # only approach; polish the leading candidates to first-order optimality
        polished = []
        for fam, probs in groups:
            o = problem.outcomes(probs)
            vals = masked(o["utility"], o["quota"] <= q + QUOTA_SLACK)
            for k in np.argsort(-vals)[:2]:
                if np.isfinite(vals[k]):
                    x = _polish(problem, probs[k], q)
                    if x is not None:
                        polished.append(x)
        if polished:
            groups.append(("randomized", np.stack(polished)))

    best_probs = np.zeros(n)
    best_val = float(problem.outcomes(best_probs[None, :])["utility"][0])
    best_family = "reject_all"
    for fam, probs in groups:
        probs = np.where(probs < SNAP, 0.0, np.where(probs > 1.0 - SNAP, 1.0, probs))
        o = problem.outcomes(probs)
        vals = masked(o["utility"], o["quota"] <= q + QUOTA_SLACK)
        k = int(np.argmax(vals))
        if vals[k] > best_val + IMPROVE:
            best_val, best_probs, best_family = float(vals[k]), probs[k], fam

    usage = float(problem.outcomes(best_probs[None, :])["quota"][0])
    cert = verify_structure(problem, best_probs, q, tol)
    return BinnedSolution(best_probs, best_val, cert.lam, cert, best_family, usage, problem.edges)


# --------------------------------------------------------------------------
# refinement


def nested_partitions(scenario: ScenarioSpec, levels: int, center: float | None = None,
                      half_width: float | None = None) -> list[np.ndarray]:
    """Edges of nested partitions: level ``k`` covers ``center +- k eps_1 / 2``
    with bin width ``eps_1 / 2^(k-1)``, i.e. ``k 2^(k-1)`` inner bins.

    Every edge of level ``k`` is an edge of level ``k + 1``, so each level's
    rules are admissible at the next. The last level covers
    ``center +- half_width``; by default the midpoint of the signal means
    and their half-span plus eight standard deviations.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    dists = [d for _, d in scenario.signals.items()]
    centers = [d.center for d in dists]
    if center is None:
        center = 0.5 * (min(centers) + max(centers))
    if half_width is None:
        half_width = 0.5 * (max(centers) - min(centers)) + 8.0 * max(d.spread for d in dists)
    eps1 = 2.0 * half_width / levels
    out = []
    for k in range(1, levels + 1):
        n_inner = k * 2 ** (k - 1)
        h = k * eps1 / 2.0
        out.append(center - h + (eps1 / 2 ** (k - 1)) * np.arange(n_inner + 1))
    return out


@dataclass(frozen=True)
class RefinementLevel:
    level: int
    n_bins: int
    lo: float
    hi: float
    utility: float
    family: str
    structure: str
    valid: bool


@dataclass(frozen=True)
class RefinementReport:
    levels: list[RefinementLevel]
    continuum_utility: float | None = None

    @property
    def utilities(self) -> np.ndarray:
        return np.array([lv.utility for lv in self.levels])

    def nondecreasing(self, tol: float = 1e-9) -> bool:
        return bool(np.all(np.diff(self.utilities) >= -tol))

    @property
    def final_gap(self) -> float | None:
        if self.continuum_utility is None:
            return None
        return abs(self.levels[-1].utility - self.continuum_utility)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "n_bins", "lo", "hi", "V_k", "family", "structure", "valid", "continuum_utility"])
        for lv in self.levels:
            w.writerow([lv.level, lv.n_bins, lv.lo, lv.hi, lv.utility, lv.family, lv.structure, lv.valid,
                        "" if self.continuum_utility is None else self.continuum_utility])
        return buf.getvalue()

    def to_dict(self) -> dict[str, Any]:
        return {
            "levels": [lv.__dict__ for lv in self.levels],
            "continuum_utility": self.continuum_utility,
            "nondecreasing": self.nondecreasing(),
            "final_gap": self.final_gap,
        }


def refinement_study(scenario: ScenarioSpec, q: float | None = None, levels: int = 8, *,
                     compare_continuum: bool = True, search=None) -> RefinementReport:
    """Solve the binned problem on nested partitions and track ``V_k``."""
    if levels < 2:
        raise ValueError("levels must be >= 2")
    q = scenario.quota if q is None else q
    rows = []
    for k, edges in enumerate(nested_partitions(scenario, levels), start=1):
        problem = build_bins_from_edges(scenario, edges)
        sol = solve_binned(problem, q)
        rows.append(RefinementLevel(k, problem.n_bins, float(edges[0]), float(edges[-1]), sol.utility, sol.family,
                                    sol.structure.summary(), sol.structure.valid))
    cont = None
    if compare_continuum:
        cont = optimize(scenario.replace(quota=q), search).outcome.utility
    return RefinementReport(rows, cont)
