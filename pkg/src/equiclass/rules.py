"""Classification rules and the reward probabilities they induce.

A rule maps a signal ``s`` to the probability of a positive decision. Five
variants are supported; every one is piecewise constant, so reward
probabilities ``S_beta = integral of g_beta * delta`` have closed forms in
the signal CDF. :func:`quadrature_reward_probability` integrates the same
quantity with adaptive Gauss-Kronrod quadrature as an independent check.

Threshold boundaries follow the usual conventions (``s >= tau`` accepted by
a positive threshold, ``s <= tau`` by a negative one, ``[lo, hi]`` by an
inner two-cut). Boundary points have probability zero under a continuous
signal distribution, so no reported quantity depends on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, ClassVar, NamedTuple, Union

import numpy as np
from scipy import integrate

from .distributions import Distribution, SignalModel
from .errors import IntegrationError, InvalidModelError


@dataclass(frozen=True)
class PositiveThreshold:
    tau: float

    variant: ClassVar[str] = "positive_threshold"

    def __post_init__(self):
        _check_finite(self.tau)

    def acceptance(self, s):
        return (np.asarray(s, dtype=float) >= self.tau).astype(float)

    def reward_probability(self, dist: Distribution) -> float:
        return float(dist.sf(self.tau))

    def pieces(self):
        return [(self.tau, math.inf, 1.0)]

    def to_dict(self):
        return {"variant": self.variant, "tau": self.tau}


@dataclass(frozen=True)
class NegativeThreshold:
    tau: float

    variant: ClassVar[str] = "negative_threshold"

    def __post_init__(self):
        _check_finite(self.tau)

    def acceptance(self, s):
        return (np.asarray(s, dtype=float) <= self.tau).astype(float)

    def reward_probability(self, dist: Distribution) -> float:
        return float(dist.cdf(self.tau))

    def pieces(self):
        return [(-math.inf, self.tau, 1.0)]

    def to_dict(self):
        return {"variant": self.variant, "tau": self.tau}


@dataclass(frozen=True)
class InnerTwoCut:
    """Accept iff ``tau_low <= s <= tau_high``."""

    tau_low: float
    tau_high: float

    variant: ClassVar[str] = "inner_two_cut"

    def __post_init__(self):
        _check_finite(self.tau_low, self.tau_high)
        if not self.tau_low < self.tau_high:
            raise InvalidModelError(f"two-cut rule needs tau_low < tau_high, got ({self.tau_low}, {self.tau_high})")

    def acceptance(self, s):
        s = np.asarray(s, dtype=float)
        return ((s >= self.tau_low) & (s <= self.tau_high)).astype(float)

    def reward_probability(self, dist: Distribution) -> float:
        return float(dist.mass(self.tau_low, self.tau_high))

    def pieces(self):
        return [(self.tau_low, self.tau_high, 1.0)]

    def to_dict(self):
        return {"variant": self.variant, "tau_low": self.tau_low, "tau_high": self.tau_high}


@dataclass(frozen=True)
class OuterTwoCut:
    """Accept iff ``s <= tau_low`` or ``s >= tau_high``."""

    tau_low: float
    tau_high: float

    variant: ClassVar[str] = "outer_two_cut"

    def __post_init__(self):
        _check_finite(self.tau_low, self.tau_high)
        if not self.tau_low < self.tau_high:
            raise InvalidModelError(f"two-cut rule needs tau_low < tau_high, got ({self.tau_low}, {self.tau_high})")

    def acceptance(self, s):
        s = np.asarray(s, dtype=float)
        return ((s <= self.tau_low) | (s >= self.tau_high)).astype(float)

    def reward_probability(self, dist: Distribution) -> float:
        return float(dist.cdf(self.tau_low) + dist.sf(self.tau_high))

    def pieces(self):
        return [(-math.inf, self.tau_low, 1.0), (self.tau_high, math.inf, 1.0)]

    def to_dict(self):
        return {"variant": self.variant, "tau_low": self.tau_low, "tau_high": self.tau_high}


@dataclass(frozen=True)
class Binned:
    """Piecewise-constant rule on the cells ``(-inf, e_0], (e_0, e_1], ..., (e_m, inf)``.

    ``probs`` has one entry per cell, i.e. ``len(edges) + 1`` entries.
    """

    edges: tuple[float, ...]
    probs: tuple[float, ...]

    variant: ClassVar[str] = "binned"

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "probs", probs)
        _check_finite(*edges)
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise InvalidModelError("binned rule edges must be strictly increasing")
        if len(probs) != len(edges) + 1:
            raise InvalidModelError(f"binned rule needs {len(edges) + 1} probabilities, got {len(probs)}")
        if any(not (0.0 <= p <= 1.0) for p in probs):
            raise InvalidModelError("binned rule probabilities must lie in [0, 1]")

    @classmethod
    def constant(cls, p: float) -> "Binned":
        return cls((), (p,))

    def cell_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        e = np.asarray(self.edges, dtype=float)
        return np.concatenate([[-np.inf], e]), np.concatenate([e, [np.inf]])

    def acceptance(self, s):
        idx = np.searchsorted(np.asarray(self.edges, dtype=float), np.asarray(s, dtype=float), side="left")
        return np.asarray(self.probs, dtype=float)[idx]

    def reward_probability(self, dist: Distribution) -> float:
        lo, hi = self.cell_bounds()
        return float(np.dot(np.asarray(self.probs), dist.mass(lo, hi)))

    def pieces(self):
        lo, hi = self.cell_bounds()
        return [(a, b, p) for a, b, p in zip(lo, hi, self.probs) if p > 0]

    def to_dict(self):
        return {"variant": self.variant, "edges": list(self.edges), "probs": list(self.probs)}


Rule = Union[PositiveThreshold, NegativeThreshold, InnerTwoCut, OuterTwoCut, Binned]

_VARIANTS = {cls.variant: cls for cls in (PositiveThreshold, NegativeThreshold, InnerTwoCut, OuterTwoCut, Binned)}


def _check_finite(*xs):
    for x in xs:
        if not math.isfinite(x):
            raise InvalidModelError(f"rule parameters must be finite, got {x}")


def rule_from_dict(d: dict[str, Any]) -> Rule:
    """Inverse of ``rule.to_dict()``."""
    try:
        cls = _VARIANTS[d["variant"]]
    except KeyError as exc:
        raise InvalidModelError(f"unknown or missing rule variant in {d!r}") from exc
    if cls in (PositiveThreshold, NegativeThreshold):
        return cls(float(d["tau"]))
    if cls is Binned:
        return Binned(tuple(d["edges"]), tuple(d["probs"]))
    return cls(float(d["tau_low"]), float(d["tau_high"]))


class RewardProbabilities(NamedTuple):
    s1: float
    s0: float
    schi: float | None = None


class Rates(NamedTuple):
    tpr: float
    fpr: float
    tnr: float
    fnr: float


def reward_probability(rule: Rule, dist: Distribution) -> float:
    """Closed-form probability of a positive decision for a signal drawn from ``dist``."""
    return rule.reward_probability(dist)


def reward_probabilities(rule: Rule, model: SignalModel) -> RewardProbabilities:
    schi = rule.reward_probability(model.cheat) if model.cheat is not None else None
    return RewardProbabilities(rule.reward_probability(model.comply), rule.reward_probability(model.noncomply), schi)


def rates(rule: Rule, model: SignalModel) -> Rates:
    tpr = rule.reward_probability(model.comply)
    fpr = rule.reward_probability(model.noncomply)
    return Rates(tpr, fpr, 1.0 - fpr, 1.0 - tpr)


def quadrature_reward_probability(rule: Rule, dist: Distribution) -> float:
    """Integrate ``dist.pdf * rule`` with adaptive quadrature (QUADPACK).

    Each accepted piece is split at fixed multiples of the distribution's
    spread around its center so the integrator never has to locate the bulk
    of the mass on an unbounded interval by itself.
    """
    anchors = dist.center + dist.spread * np.array([-12.0, -6.0, -3.0, -1.0, 0.0, 1.0, 3.0, 6.0, 12.0])
    total = 0.0
    for lo, hi, weight in rule.pieces():
        if weight == 0.0 or not lo < hi:
            continue
        cuts = [lo] + [a for a in anchors if lo < a < hi] + [hi]
        for a, b in zip(cuts, cuts[1:]):
            res = integrate.quad(dist.pdf, a, b, epsabs=1e-14, epsrel=1e-12, limit=200, full_output=1)
            if len(res) > 3:
                raise IntegrationError(f"quadrature on ({a}, {b}) did not converge: {res[3]}")
            total += weight * res[0]
    return total
