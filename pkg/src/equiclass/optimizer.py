"""Designer-optimal rules over the threshold and two-cut families.

Without cheating the optimum over all rules is a (positive or negative)
threshold rule, so a 1D search per orientation suffices. With cheating and
exponential-family signals the optimum is a threshold or a two-cut rule, so
:func:`optimize_two_cut` adds a 2D search over inner and outer two-cuts.

The objective can be multimodal in the cut points (prevalence feeds back
through ``F(r * delta)``), hence coarse multistart grids followed by
shrinking-grid refinement. The quota is handled by restricting to the
feasible set and additionally scoring the exact quota-boundary points found
by bisection.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .distributions import exp_family_ratios
from .equilibrium import EquilibriumOutcome, ScenarioSpec, evaluate, outcome_arrays
from .rules import InnerTwoCut, NegativeThreshold, OuterTwoCut, PositiveThreshold, Rule
from .search import bisect, local_maxima_1d, masked, refine, sign_change_brackets, top_candidates_2d

THRESHOLD_FAMILIES = ("positive_threshold", "negative_threshold")
TWO_CUT_FAMILIES = ("inner_two_cut", "outer_two_cut")
FAMILIES = THRESHOLD_FAMILIES + TWO_CUT_FAMILIES

# Slack allowed on the quota when filtering candidates (floating noise only).
QUOTA_SLACK = 1e-12


@dataclass(frozen=True)
class SearchConfig:
    """Search bounds and effort. ``grid_lo``/``grid_hi`` default to the
    union of per-behavior ``mean +- 8 sd`` intervals."""

    grid_lo: float | None = None
    grid_hi: float | None = None
    coarse_points: int = 2001
    coarse_points_2d: int = 201
    refine_iters: int = 200
    refine_shrink: float = 0.5
    tol_param: float = 1e-9
    tol_value: float = 1e-10
    starts: int = 8

    def __post_init__(self):
        if self.grid_lo is not None and self.grid_hi is not None and not self.grid_lo < self.grid_hi:
            raise ValueError("grid_lo must be < grid_hi")
        if self.coarse_points < 3 or self.coarse_points_2d < 3:
            raise ValueError("coarse grids need at least 3 points")
        if not 0.0 < self.refine_shrink < 1.0:
            raise ValueError("refine_shrink must lie in (0, 1)")
        if self.tol_param <= 0 or self.tol_value <= 0:
            raise ValueError("tolerances must be > 0")

    def bounds(self, scenario: ScenarioSpec) -> tuple[float, float]:
        lo, hi = scenario.signals.default_interval(8.0)
        return (lo if self.grid_lo is None else self.grid_lo, hi if self.grid_hi is None else self.grid_hi)

    def to_dict(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class FamilyBest:
    family: str
    rule: Rule
    outcome: EquilibriumOutcome
    feasible: bool


@dataclass(frozen=True)
class OptimizationResult:
    best_rule: Rule
    outcome: EquilibriumOutcome
    family_comparison: dict[str, FamilyBest]
    feasible: bool

    @property
    def best_family(self) -> str:
        return self.best_rule.variant

    def to_dict(self) -> dict[str, Any]:
        return {
            "best_rule": self.best_rule.to_dict(),
            "feasible": self.feasible,
            "outcome": self.outcome.to_dict(),
            "family_comparison": {
                k: {"rule": v.rule.to_dict(), "feasible": v.feasible, "outcome": v.outcome.to_dict()}
                for k, v in self.family_comparison.items()
            },
        }

    def family_table_csv(self) -> str:
        """Per-family best rules in the layout of a comparison table."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["family", "tau", "tau_low", "tau_high", "accuracy", "utility", "compliance", "cheating",
                    "tp", "fn", "fp", "tn", "quota_usage", "feasible"])
        for fam, fb in self.family_comparison.items():
            d = fb.rule.to_dict()
            o = fb.outcome
            w.writerow([fam, d.get("tau", ""), d.get("tau_low", ""), d.get("tau_high", ""), o.accuracy, o.utility,
                        o.shares.comply, o.shares.cheat, *o.confusion.as_tuple(), o.quota_usage, fb.feasible])
        return buf.getvalue()


@dataclass(frozen=True)
class QuotaRegion:
    """Where a rule family meets the quota.

    For threshold families ``boundaries`` lists the cut points with
    ``quota_usage == q`` and ``feasible_intervals`` the (grid-resolved)
    feasible stretches. For two-cut families ``boundaries`` holds
    ``(tau_low, tau_high)`` pairs on the quota curve.
    """

    family: str
    q: float
    all_feasible: bool
    boundaries: tuple = ()
    feasible_intervals: tuple = ()


# --------------------------------------------------------------------------
# family parameterizations


def family_rule(family: str, params) -> Rule:
    p = np.atleast_1d(np.asarray(params, dtype=float))
    if family == "positive_threshold":
        return PositiveThreshold(float(p[0]))
    if family == "negative_threshold":
        return NegativeThreshold(float(p[0]))
    if family == "inner_two_cut":
        return InnerTwoCut(float(p[0]), float(p[1]))
    if family == "outer_two_cut":
        return OuterTwoCut(float(p[0]), float(p[1]))
    raise ValueError(f"unknown rule family {family!r}")


def _family_reward(family: str, P: np.ndarray, dist):
    if family == "positive_threshold":
        return dist.sf(P[:, 0])
    if family == "negative_threshold":
        return dist.cdf(P[:, 0])
    inner = dist.mass(P[:, 0], P[:, 1])
    if family == "inner_two_cut":
        return inner
    if family == "outer_two_cut":
        return dist.cdf(P[:, 0]) + dist.sf(P[:, 1])
    raise ValueError(f"unknown rule family {family!r}")


def family_outcomes(scenario: ScenarioSpec, family: str, P: np.ndarray) -> dict[str, np.ndarray]:
    """Vectorized outcome arrays for parameter rows ``P`` of a family."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    sig = scenario.signals
    s1 = _family_reward(family, P, sig.comply)
    s0 = _family_reward(family, P, sig.noncomply)
    schi = _family_reward(family, P, sig.cheat) if scenario.cheating else None
    return outcome_arrays(scenario, s1, s0, schi)


def _evaluator(scenario: ScenarioSpec, family: str, q: float):
    two_d = family in TWO_CUT_FAMILIES

    def f(P):
        P = np.atleast_2d(P)
        o = family_outcomes(scenario, family, P)
        ok = o["quota"] <= q + QUOTA_SLACK
        if two_d:
            ok = ok & (P[:, 0] < P[:, 1])
        return o["utility"], ok

    return f


def _quota_fn(scenario: ScenarioSpec, family: str, q: float):
    return lambda t: float(family_outcomes(scenario, family, [[t]])["quota"][0]) - q


# --------------------------------------------------------------------------
# quota boundaries


def quota_project(
    scenario: ScenarioSpec, family: str, q: float | None = None, config: SearchConfig | None = None
) -> QuotaRegion:
    config = config or SearchConfig()
    q = scenario.quota if q is None else q
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    lo, hi = config.bounds(scenario)
    if q >= 1.0:
        return QuotaRegion(family, q, True, (), ((lo, hi),))
    if family in THRESHOLD_FAMILIES:
        grid = np.linspace(lo, hi, config.coarse_points)
        gap = family_outcomes(scenario, family, grid[:, None])["quota"] - q
        fn = _quota_fn(scenario, family, q)
        roots = tuple(bisect(fn, a, b, tol=1e-15) for a, b in sign_change_brackets(grid, gap))
        ok = gap <= QUOTA_SLACK
        intervals = []
        start = None
        for i, flag in enumerate(ok):
            if flag and start is None:
                start = i
            if start is not None and (not flag or i == len(ok) - 1):
                end = i if flag else i - 1
                intervals.append((float(grid[start]), float(grid[end])))
                start = None
        return QuotaRegion(family, q, bool(ok.all()), roots, tuple(intervals))
    if family in TWO_CUT_FAMILIES:
        axis = np.linspace(lo, hi, config.coarse_points_2d)
        points = []
        all_ok = True
        for tl in axis[:-1]:
            th = axis[axis > tl]
            P = np.column_stack([np.full_like(th, tl), th])
            gap = family_outcomes(scenario, family, P)["quota"] - q
            all_ok &= bool(np.all(gap <= QUOTA_SLACK))

            def fn(t, tl=tl):
                return float(family_outcomes(scenario, family, [[tl, t]])["quota"][0]) - q

            for a, b in sign_change_brackets(th, gap):
                points.append((float(tl), bisect(fn, a, b, tol=1e-12)))
        return QuotaRegion(family, q, all_ok, tuple(points))
    raise ValueError(f"unknown rule family {family!r}")


# --------------------------------------------------------------------------
# searches


def _finish(scenario, family, x, feasible) -> FamilyBest:
    rule = family_rule(family, x)
    return FamilyBest(family, rule, evaluate(rule, scenario), feasible)


def _least_infeasible(scenario, family, P) -> FamilyBest:
    quota = family_outcomes(scenario, family, P)["quota"]
    return _finish(scenario, family, P[int(np.argmin(quota))], False)


def optimize_family_1d(scenario: ScenarioSpec, family: str, config: SearchConfig | None = None) -> FamilyBest:
    config = config or SearchConfig()
    q = scenario.quota
    lo, hi = config.bounds(scenario)
    grid = np.linspace(lo, hi, config.coarse_points)
    f = _evaluator(scenario, family, q)
    vals, ok = f(grid[:, None])
    if not ok.any():
        return _least_infeasible(scenario, family, grid[:, None])
    cands = []
    step = np.array([grid[1] - grid[0]])
    for i in local_maxima_1d(masked(vals, ok), config.starts):
        x, v = refine(f, grid[i : i + 1], step, [lo], [hi], shrink=config.refine_shrink,
                      tol=config.tol_param, max_iter=config.refine_iters)
        cands.append((v, float(x[0])))
    if q < 1.0:
        for root in quota_project(scenario, family, q, config).boundaries:
            v, flag = f(np.array([[root]]))
            if flag[0]:
                cands.append((float(v[0]), root))
    v, x = max(cands, key=lambda c: c[0])
    return _finish(scenario, family, x, True)


def optimize_family_2d(scenario: ScenarioSpec, family: str, config: SearchConfig | None = None) -> FamilyBest:
    config = config or SearchConfig()
    q = scenario.quota
    lo, hi = config.bounds(scenario)
    axis = np.linspace(lo, hi, config.coarse_points_2d)
    L, H = np.meshgrid(axis, axis, indexing="ij")
    P = np.column_stack([L.ravel(), H.ravel()])
    f = _evaluator(scenario, family, q)
    vals, ok = f(P)
    if not ok.any():
        return _least_infeasible(scenario, family, P[P[:, 0] < P[:, 1]])
    grid_vals = masked(vals, ok).reshape(L.shape)
    step = np.full(2, axis[1] - axis[0])
    cands = []
    for i, j in top_candidates_2d(grid_vals, config.starts, min_sep=3):
        x, v = refine(f, np.array([axis[i], axis[j]]), step, [lo, lo], [hi, hi], points=9,
                      shrink=config.refine_shrink, tol=config.tol_param, max_iter=config.refine_iters)
        cands.append((v, tuple(x)))
    v, x = max(cands, key=lambda c: c[0])
    return _finish(scenario, family, x, True)


def _pick(comparison: dict[str, FamilyBest], tol_value: float) -> FamilyBest:
    feasible = [fb for fb in comparison.values() if fb.feasible]
    pool = feasible or list(comparison.values())
    top = max(fb.outcome.utility for fb in pool)
    # FAMILIES order puts simpler families first
    for fam in FAMILIES:
        fb = comparison.get(fam)
        if fb is not None and fb in pool and fb.outcome.utility >= top - tol_value:
            return fb
    raise AssertionError("unreachable")


def optimize_threshold(scenario: ScenarioSpec, config: SearchConfig | None = None) -> OptimizationResult:
    """Best positive and negative threshold rules under the scenario's quota."""
    config = config or SearchConfig()
    comparison = {fam: optimize_family_1d(scenario, fam, config) for fam in THRESHOLD_FAMILIES}
    best = _pick(comparison, config.tol_value)
    return OptimizationResult(best.rule, best.outcome, comparison, best.feasible)


def optimize_two_cut(scenario: ScenarioSpec, config: SearchConfig | None = None) -> OptimizationResult:
    """Best rule over thresholds and inner/outer two-cuts.

    Requires a cheating scenario whose signals form an exponential family
    (Gaussian, common variance); otherwise ``UnsupportedFamilyError``.
    """
    config = config or SearchConfig()
    exp_family_ratios(scenario.signals)
    comparison = dict(optimize_threshold(scenario, config).family_comparison)
    for fam in TWO_CUT_FAMILIES:
        comparison[fam] = optimize_family_2d(scenario, fam, config)
    best = _pick(comparison, config.tol_value)
    return OptimizationResult(best.rule, best.outcome, comparison, best.feasible)


def optimize(scenario: ScenarioSpec, config: SearchConfig | None = None) -> OptimizationResult:
    """Two-cut search when the structure result calls for it, thresholds otherwise."""
    if scenario.cheating:
        try:
            exp_family_ratios(scenario.signals)
        except ValueError:
            return optimize_threshold(scenario, config)
        return optimize_two_cut(scenario, config)
    return optimize_threshold(scenario, config)
