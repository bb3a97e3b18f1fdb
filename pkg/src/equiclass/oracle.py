"""Independent checks: exhaustive search on small binned problems and
agent-level Monte Carlo simulation.

Neither path shares solver logic with :mod:`equiclass.binned` or
:mod:`equiclass.optimizer`. Brute force enumerates acceptance vectors on a
regular grid; the simulation draws each agent's cost, applies the best
response, draws a signal and classifies it.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np

from .binned import BinnedProblem
from .equilibrium import BehaviorShares, Confusion, EquilibriumOutcome, ScenarioSpec
from .errors import GridSizeError
from .rules import Rule, reward_probabilities

MAX_GRID_POINTS = 50_000_000
_CHUNK = 1 << 18


@dataclass(frozen=True)
class BruteForceResult:
    probs: np.ndarray
    utility: float
    evaluated: int


def _boundary_points(problem: BinnedProblem, q: float, A: np.ndarray, B: np.ndarray, iters: int = 60) -> np.ndarray:
    """Bisect each segment from feasible ``A`` to infeasible ``B`` onto the quota boundary (feasible side)."""
    lo = np.zeros(len(A))
    hi = np.ones(len(A))
    d = B - A
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        good = problem.outcomes(A + mid[:, None] * d)["quota"] <= q + 1e-12
        lo = np.where(good, mid, lo)
        hi = np.where(good, hi, mid)
    return A + lo[:, None] * d


def brute_force_binned(
    problem: BinnedProblem, q: float | None = None, resolution: float = 0.02, *, max_points: int = MAX_GRID_POINTS
) -> BruteForceResult:
    """Best acceptance vector on the grid ``{0, res, 2 res, ..., 1}^n`` subject to the quota.

    When the quota can bind, every grid edge that crosses the quota
    boundary also contributes its exact crossing point (found by
    bisection), so the oracle is not handicapped by grid points stopping
    short of the boundary. Ties keep the first vector found, which puts the
    all-reject vector first.
    """
    q = problem.scenario.quota if q is None else q
    n = problem.n_bins
    if n > 6:
        raise GridSizeError(f"brute force is limited to 6 bins, got {n}")
    if resolution < 0.01:
        raise GridSizeError(f"resolution must be >= 0.01, got {resolution}")
    k = int(round(1.0 / resolution)) + 1
    if not math.isclose((k - 1) * resolution, 1.0, rel_tol=1e-9):
        raise ValueError(f"resolution must divide 1, got {resolution}")
    total = k**n
    if total > max_points:
        raise GridSizeError(f"grid of {total} points exceeds the limit of {max_points}")
    levels = np.linspace(0.0, 1.0, k)
    # one slab per value of the first coordinate; the rest enumerated in C order
    rest = levels[np.indices((k,) * (n - 1)).reshape(n - 1, -1).T] if n > 1 else np.zeros((1, 0))
    m = rest.shape[0]
    best_val, best = -np.inf, np.zeros(n)

    def consider(P, util, ok):
        nonlocal best_val, best
        vals = np.where(ok, util, -np.inf)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val, best = float(vals[j]), P[j].copy()

    prev_P = prev_ok = None
    for x0 in levels:
        P = np.column_stack([np.full(m, x0), rest])
        o = problem.outcomes(P)
        ok = o["quota"] <= q + 1e-12
        consider(P, o["utility"], ok)
        if q < 1.0:
            pairs = []
            if prev_ok is not None:
                f = np.flatnonzero(prev_ok != ok)
                pairs.append((prev_P[f], P[f], prev_ok[f]))
            for ax in range(n - 1):
                stride = k ** (n - 2 - ax)
                f = np.arange(m)
                f = f[(f // stride) % k < k - 1]
                f = f[ok[f] != ok[f + stride]]
                pairs.append((P[f], P[f + stride], ok[f]))
            for A, B, a_ok in pairs:
                if len(A):
                    Pb = _boundary_points(problem, q, np.where(a_ok[:, None], A, B), np.where(a_ok[:, None], B, A))
                    ob = problem.outcomes(Pb)
                    consider(Pb, ob["utility"], ob["quota"] <= q + 1e-12)
        prev_P, prev_ok = P, ok
    return BruteForceResult(np.array(best), best_val, total)


# --------------------------------------------------------------------------
# Monte Carlo

_CELLS = ("comply", "cheat", "noncomply", "tp", "fn", "fp", "tn")
SIM_CHUNK = 1 << 16


@dataclass(frozen=True)
class SimulationReport:
    n_agents: int
    seed: int
    counts: dict[str, int]

    def fraction(self, cell: str) -> float:
        return self.counts[cell] / self.n_agents

    def standard_error(self, cell: str) -> float:
        p = self.fraction(cell)
        return math.sqrt(p * (1.0 - p) / self.n_agents)

    @property
    def empirical_shares(self) -> BehaviorShares:
        return BehaviorShares(self.fraction("comply"), self.fraction("noncomply"), self.fraction("cheat"))

    @property
    def empirical_confusion(self) -> Confusion:
        return Confusion(*(self.fraction(c) for c in ("tp", "fn", "fp", "tn")))

    @property
    def standard_errors(self) -> dict[str, float]:
        return {c: self.standard_error(c) for c in _CELLS}

    def z_scores(self, outcome: EquilibriumOutcome) -> dict[str, float]:
        """``(empirical - analytic) / SE`` per cell; cells with zero SE and exact agreement score 0."""
        analytic = {
            "comply": outcome.shares.comply,
            "cheat": outcome.shares.cheat,
            "noncomply": outcome.shares.noncomply,
            **dict(zip(("tp", "fn", "fp", "tn"), outcome.confusion.as_tuple())),
        }
        out = {}
        for c in _CELLS:
            diff = self.fraction(c) - analytic[c]
            se = self.standard_error(c)
            if se == 0.0:
                # no draws in (or outside) the cell; the binomial SE at the analytic p is the honest yardstick
                p = analytic[c]
                se = math.sqrt(max(p * (1.0 - p), 0.0) / self.n_agents)
            out[c] = 0.0 if diff == 0.0 else (diff / se if se > 0 else math.inf)
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_agents": self.n_agents,
            "seed": self.seed,
            "empirical_shares": {c: self.fraction(c) for c in ("comply", "cheat", "noncomply")},
            "empirical_confusion": {c: self.fraction(c) for c in ("tp", "fn", "fp", "tn")},
            "standard_errors": self.standard_errors,
            "counts": dict(self.counts),
        }


def _simulate_chunk(rule: Rule, scenario: ScenarioSpec, size: int, seed_seq: np.random.SeedSequence, dump: bool):
    rng = np.random.default_rng(seed_seq)
    rw = reward_probabilities(rule, scenario.signals)
    cost = scenario.cost.rvs(rng, size)
    # each agent compares its own payoffs; ties go to the higher-effort behavior
    r = scenario.reward
    pay1 = r * rw.s1 - cost
    pay0 = np.full(size, r * rw.s0)
    if scenario.cheating:
        paychi = r * rw.schi - scenario.kappa * cost
        comply = (pay1 >= paychi) & (pay1 >= pay0)
        cheat = ~comply & (paychi >= pay0)
    else:
        comply = pay1 >= pay0
        cheat = np.zeros(size, dtype=bool)
    signal = np.empty(size)
    sig = scenario.signals
    groups = [(comply, sig.comply), (~comply & ~cheat, sig.noncomply)]
    if scenario.cheating:
        groups.append((cheat, sig.cheat))
    for mask, dist in groups:
        m = int(mask.sum())
        if m:
            signal[mask] = dist.rvs(rng, m)
    # one uniform per agent; only matters where the acceptance probability is interior
    accepted = rng.random(size) < rule.acceptance(signal)
    counts = {
        "comply": int(comply.sum()),
        "cheat": int(cheat.sum()),
        "noncomply": int(size - comply.sum() - cheat.sum()),
        "tp": int((comply & accepted).sum()),
        "fn": int((comply & ~accepted).sum()),
        "fp": int((~comply & accepted).sum()),
        "tn": int((~comply & ~accepted).sum()),
    }
    rows = None
    if dump:
        behavior = np.where(comply, "1", np.where(cheat, "chi", "0"))
        rows = list(zip(cost.tolist(), behavior.tolist(), signal.tolist(), accepted.astype(int).tolist()))
    return counts, rows


def simulate(
    rule: Rule,
    scenario: ScenarioSpec,
    n_agents: int,
    seed: int,
    *,
    workers: int = 1,
    dump_path: str | None = None,
) -> SimulationReport:
    """Simulate ``n_agents`` agents responding to ``rule``.

    Agents are processed in fixed-size chunks, each with its own child of
    ``SeedSequence(seed)``, so the result depends only on ``seed`` and
    ``n_agents``, not on ``workers``.
    """
    if n_agents < 1:
        raise ValueError("n_agents must be >= 1")
    n_chunks = -(-n_agents // SIM_CHUNK)
    sizes = [min(SIM_CHUNK, n_agents - i * SIM_CHUNK) for i in range(n_chunks)]
    seqs = np.random.SeedSequence(seed).spawn(n_chunks)
    dump = dump_path is not None
    args = [(rule, scenario, s, ss, dump) for s, ss in zip(sizes, seqs)]
    if workers > 1 and n_chunks > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_simulate_chunk, *zip(*args)))
    else:
        results = [_simulate_chunk(*a) for a in args]
    counts = {c: sum(r[0][c] for r in results) for c in _CELLS}
    if dump:
        with open(dump_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cost", "behavior", "signal", "accepted"])
            for _, rows in results:
                w.writerows(rows)
    return SimulationReport(n_agents, seed, counts)
