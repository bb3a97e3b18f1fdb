"""Population best response and the designer's equilibrium payoff.

Given a rule, every individual compares the expected payoff of each
behavior. Payoffs are linear in the private cost ``c`` with slopes ``-1``
(comply), ``-kappa`` (cheat) and ``0`` (noncomply), so the best response is
described by two cost cutoffs ``u_comply <= u_cheat``::

    c <= u_comply            -> comply
    u_comply < c <= u_cheat  -> cheat
    c > u_cheat              -> noncomply

In the baseline model, and whenever cheating is never a best response, the
two cutoffs coincide at ``r * (S_1 - S_0)``. Exact payoff ties go to the
more effortful behavior (comply, then cheat, then noncomply).

Everything below the dataclasses is vectorized: reward probabilities may be
arrays of any broadcastable shape, which is what the optimizers feed in.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from typing import Any

import numpy as np

from .distributions import Distribution, SignalModel
from .errors import InvalidModelError
from .rules import RewardProbabilities, Rule, reward_probabilities


@dataclass(frozen=True)
class DesignerPayoff:
    """Designer's value for each confusion-matrix cell.

    ``A1``: complier rewarded (TP), ``A0``: complier punished (FN),
    ``B0``: non-complier rewarded (FP), ``B1``: non-complier punished (TN).
    """

    A1: float
    A0: float
    B0: float
    B1: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.A1, self.A0, self.B0, self.B1])):
            raise InvalidModelError("designer payoffs must be finite")

    def __sub__(self, other: "DesignerPayoff") -> "DesignerPayoff":
        return DesignerPayoff(self.A1 - other.A1, self.A0 - other.A0, self.B0 - other.B0, self.B1 - other.B1)

    def scaled(self, k: float) -> "DesignerPayoff":
        return DesignerPayoff(k * self.A1, k * self.A0, k * self.B0, k * self.B1)

    def to_dict(self):
        return dataclasses.asdict(self)


# Expected share of rewarded individuals, written as a payoff matrix.
REWARD_SHARE = DesignerPayoff(A1=1.0, A0=0.0, B0=1.0, B1=0.0)


def objective_preset(name: str, p: float | None = None) -> DesignerPayoff:
    """Named designer objectives: accuracy, compliance, p_precision, predatory."""
    key = name.lower().replace("-", "_")
    if key == "accuracy":
        return DesignerPayoff(1.0, 0.0, 0.0, 1.0)
    if key == "compliance":
        return DesignerPayoff(1.0, 1.0, 0.0, 0.0)
    if key == "predatory":
        return DesignerPayoff(0.0, 0.0, 0.0, 1.0)
    if key == "p_precision":
        if p is None or not 0.0 < p < 1.0:
            raise ValueError(f"p_precision needs p in (0, 1), got {p}")
        return DesignerPayoff(1.0, p, 0.0, p)
    raise ValueError(f"unknown objective preset {name!r}")


@dataclass(frozen=True)
class ScenarioSpec:
    cost: Distribution
    signals: SignalModel
    reward: float
    payoff: DesignerPayoff
    quota: float = 1.0
    kappa: float | None = None

    def __post_init__(self):
        if not self.reward > 0:
            raise InvalidModelError(f"reward r must be > 0, got {self.reward}")
        if not 0.0 < self.quota <= 1.0:
            raise InvalidModelError(f"quota q must lie in (0, 1], got {self.quota}")
        if self.signals.has_cheat:
            if self.kappa is None or not 0.0 <= self.kappa <= 1.0:
                raise InvalidModelError(f"cheating model needs kappa in [0, 1], got {self.kappa}")
        elif self.kappa is not None:
            raise InvalidModelError("kappa given but the signal model has no cheat distribution")

    @property
    def cheating(self) -> bool:
        return self.signals.has_cheat

    def replace(self, **changes) -> "ScenarioSpec":
        return dataclasses.replace(self, **changes)

    def baseline(self) -> "ScenarioSpec":
        """Same primitives with the cheat option removed."""
        return dataclasses.replace(
            self, signals=SignalModel(self.signals.noncomply, self.signals.comply), kappa=None
        )

    def to_dict(self) -> dict[str, Any]:
        out = {
            "reward": self.reward,
            "cost": self.cost.to_dict(),
            "signals": self.signals.to_dict(),
            "payoff": self.payoff.to_dict(),
            "quota": self.quota,
        }
        if self.kappa is not None:
            out["kappa"] = self.kappa
        return out


class Behavior(str, enum.Enum):
    NONCOMPLY = "0"
    COMPLY = "1"
    CHEAT = "chi"


@dataclass(frozen=True)
class Incentives:
    """Differences in reward probability between behaviors.

    ``delta_10 = S_1 - S_0``; with cheating also ``delta_1chi = S_1 - S_chi``
    and ``delta_chi0 = S_chi - S_0``, and ``delta_10`` is defined as their
    sum so the decomposition holds exactly in floating point.
    """

    delta_10: float
    delta_1chi: float | None = None
    delta_chi0: float | None = None


@dataclass(frozen=True)
class BehaviorShares:
    comply: float
    noncomply: float
    cheat: float = 0.0


@dataclass(frozen=True)
class Confusion:
    """Population fractions in the cells of the confusion matrix.

    Cheaters count as non-compliers (FP / TN row).
    """

    tp: float
    fn: float
    fp: float
    tn: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.tp, self.fn, self.fp, self.tn


@dataclass(frozen=True)
class EquilibriumOutcome:
    rewards: RewardProbabilities
    incentives: Incentives
    shares: BehaviorShares
    confusion: Confusion
    utility: float
    quota_usage: float
    comply_cutoff: float
    cheat_cutoff: float

    @property
    def accuracy(self) -> float:
        return self.confusion.tp + self.confusion.tn

    def to_dict(self) -> dict[str, Any]:
        """Flat record; confusion cells in TP, FN, FP, TN order."""
        r, inc, sh, cm = self.rewards, self.incentives, self.shares, self.confusion
        return {
            "S_1": r.s1,
            "S_0": r.s0,
            "S_chi": r.schi,
            "delta_10": inc.delta_10,
            "delta_1chi": inc.delta_1chi,
            "delta_chi0": inc.delta_chi0,
            "share_comply": sh.comply,
            "share_cheat": sh.cheat,
            "share_noncomply": sh.noncomply,
            "tp": cm.tp,
            "fn": cm.fn,
            "fp": cm.fp,
            "tn": cm.tn,
            "accuracy": self.accuracy,
            "utility": self.utility,
            "quota_usage": self.quota_usage,
            "comply_cutoff": self.comply_cutoff,
            "cheat_cutoff": self.cheat_cutoff,
        }


# --------------------------------------------------------------------------
# vectorized core


def behavior_cutoffs(s1, s0, schi, reward: float, kappa: float | None):
    """Cost cutoffs ``(u_comply, u_cheat)`` of the best response.

    Within ``0 < kappa < 1`` the cheat line is on the upper envelope iff it
    beats the other two where they cross (``c = r * delta_10``), i.e.
    ``delta_chi0 > kappa * delta_10``; its band is then
    ``(r delta_1chi / (1 - kappa), r delta_chi0 / kappa]``. At ``kappa = 0``
    cheating is parallel to noncompliance and at ``kappa = 1`` parallel to
    compliance; those limits are resolved by direct payoff comparison.
    """
    s1 = np.asarray(s1, dtype=float)
    s0 = np.asarray(s0, dtype=float)
    if schi is None:
        u = reward * (s1 - s0)
        return u, u
    schi = np.asarray(schi, dtype=float)
    d1c = s1 - schi
    dc0 = schi - s0
    d10 = d1c + dc0
    base = reward * d10
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        if kappa == 0.0:
            cheat = dc0 >= 0.0
            u1 = np.where(cheat, reward * d1c, base)
            u0 = np.where(cheat, np.inf, base)
        elif kappa == 1.0:
            cheat = d1c < 0.0
            u1 = np.where(cheat, -np.inf, base)
            u0 = np.where(cheat, reward * dc0, base)
        else:
            cheat = dc0 > kappa * d10
            u1 = np.where(cheat, reward * d1c / (1.0 - kappa), base)
            u0 = np.where(cheat, reward * dc0 / kappa, base)
    return u1, u0


def outcome_arrays(scenario: ScenarioSpec, s1, s0, schi=None) -> dict[str, np.ndarray]:
    """Shares, confusion cells, utility and quota usage for reward probabilities."""
    if scenario.cheating and schi is None:
        raise ValueError("cheating scenario needs S_chi")
    if not scenario.cheating:
        schi = None
    s1 = np.asarray(s1, dtype=float)
    s0 = np.asarray(s0, dtype=float)
    u1, u0 = behavior_cutoffs(s1, s0, schi, scenario.reward, scenario.kappa)
    F = scenario.cost
    f1 = np.asarray(F.cdf(u1))
    f0 = np.asarray(F.sf(u0))
    if schi is None:
        fchi = np.zeros_like(f1)
        schi_arr = np.zeros_like(s1)
    else:
        fchi = np.maximum(np.asarray(F.cdf(u0)) - f1, 0.0)
        schi_arr = np.asarray(schi, dtype=float)
    tp = f1 * s1
    fn = f1 * (1.0 - s1)
    fp = fchi * schi_arr + f0 * s0
    tn = fchi * (1.0 - schi_arr) + f0 * (1.0 - s0)
    P = scenario.payoff
    return {
        "u_comply": u1,
        "u_cheat": u0,
        "comply": f1,
        "cheat": fchi,
        "noncomply": f0,
        "tp": tp,
        "fn": fn,
        "fp": fp,
        "tn": tn,
        "utility": P.A1 * tp + P.A0 * fn + P.B0 * fp + P.B1 * tn,
        "quota": tp + fp,
    }


# --------------------------------------------------------------------------
# per-rule operations


def incentives(rule: Rule, scenario: ScenarioSpec) -> Incentives:
    return _incentives(reward_probabilities(rule, scenario.signals))


def _incentives(rw: RewardProbabilities) -> Incentives:
    if rw.schi is None:
        return Incentives(rw.s1 - rw.s0)
    d1c = rw.s1 - rw.schi
    dc0 = rw.schi - rw.s0
    return Incentives(d1c + dc0, d1c, dc0)


def best_response(cost: float, rule: Rule, scenario: ScenarioSpec) -> Behavior:
    rw = reward_probabilities(rule, scenario.signals)
    u1, u0 = behavior_cutoffs(rw.s1, rw.s0, rw.schi if scenario.cheating else None, scenario.reward, scenario.kappa)
    if cost <= u1:
        return Behavior.COMPLY
    if cost <= u0:
        return Behavior.CHEAT
    return Behavior.NONCOMPLY


def behavior_shares(rule: Rule, scenario: ScenarioSpec) -> BehaviorShares:
    return evaluate(rule, scenario).shares


def evaluate(rule: Rule, scenario: ScenarioSpec) -> EquilibriumOutcome:
    rw = reward_probabilities(rule, scenario.signals)
    if not scenario.cheating:
        rw = RewardProbabilities(rw.s1, rw.s0, None)
    return outcome_from_rewards(rw, scenario)


def outcome_from_rewards(rw: RewardProbabilities, scenario: ScenarioSpec) -> EquilibriumOutcome:
    o = {k: float(v) for k, v in outcome_arrays(scenario, rw.s1, rw.s0, rw.schi).items()}
    return EquilibriumOutcome(
        rewards=rw,
        incentives=_incentives(rw),
        shares=BehaviorShares(o["comply"], o["noncomply"], o["cheat"]),
        confusion=Confusion(o["tp"], o["fn"], o["fp"], o["tn"]),
        utility=o["utility"],
        quota_usage=o["quota"],
        comply_cutoff=o["u_comply"],
        cheat_cutoff=o["u_cheat"],
    )
