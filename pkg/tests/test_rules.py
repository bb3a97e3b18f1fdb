import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import mp_norm_cdf
from equiclass.distributions import Gaussian, Logistic, SignalModel
from equiclass.errors import InvalidModelError
from equiclass.rules import (
    Binned,
    InnerTwoCut,
    NegativeThreshold,
    OuterTwoCut,
    PositiveThreshold,
    quadrature_reward_probability,
    rates,
    reward_probabilities,
    reward_probability,
    rule_from_dict,
)

N01 = Gaussian(0, 1)
taus = st.floats(-6, 6)
dists = st.builds(Gaussian, st.floats(-3, 3), st.floats(0.2, 3))


@st.composite
def cuts(draw):
    a = draw(taus)
    b = draw(taus)
    if a == b:
        b = a + 0.5
    return min(a, b), max(a, b)


@st.composite
def binned_rules(draw):
    n = draw(st.integers(0, 6))
    edges = sorted(set(draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n))))
    probs = draw(st.lists(st.floats(0, 1), min_size=len(edges) + 1, max_size=len(edges) + 1))
    return Binned(tuple(edges), tuple(probs))


any_rule = st.one_of(
    st.builds(PositiveThreshold, taus),
    st.builds(NegativeThreshold, taus),
    cuts().map(lambda c: InnerTwoCut(*c)),
    cuts().map(lambda c: OuterTwoCut(*c)),
    binned_rules(),
)


def test_reward_probability_examples():
    assert reward_probability(PositiveThreshold(0.0), N01) == 0.5
    assert reward_probability(NegativeThreshold(-1.55), Gaussian(1, 1)) == pytest.approx(mp_norm_cdf(-2.55),
                                                                                          abs=1e-14)
    assert round(reward_probability(NegativeThreshold(-1.55), Gaussian(1, 1)), 4) == 0.0054
    assert reward_probability(InnerTwoCut(-3, 3), N01) == pytest.approx(0.9973, abs=5e-5)


def test_closed_forms_per_variant():
    g = Gaussian(0.3, 1.7)
    cdf = lambda x: mp_norm_cdf(x, 0.3, 1.7)  # noqa: E731
    assert reward_probability(PositiveThreshold(0.4), g) == pytest.approx(1 - cdf(0.4), abs=1e-14)
    assert reward_probability(NegativeThreshold(0.4), g) == pytest.approx(cdf(0.4), abs=1e-14)
    assert reward_probability(InnerTwoCut(-1, 2), g) == pytest.approx(cdf(2) - cdf(-1), abs=1e-14)
    assert reward_probability(OuterTwoCut(-1, 2), g) == pytest.approx(1 - cdf(2) + cdf(-1), abs=1e-14)
    b = Binned((-1.0, 0.5), (0.2, 1.0, 0.4))
    expect = 0.2 * cdf(-1) + (cdf(0.5) - cdf(-1)) + 0.4 * (1 - cdf(0.5))
    assert reward_probability(b, g) == pytest.approx(expect, abs=1e-14)


def test_rates_examples():
    model = SignalModel(Gaussian(0, 1), Gaussian(1, 1))
    r = rates(PositiveThreshold(-0.26), model)
    assert r.tpr == pytest.approx(0.8962, abs=5e-5)
    assert r.fpr == pytest.approx(0.6026, abs=5e-5)
    assert r.tnr == pytest.approx(1 - r.fpr) and r.fnr == pytest.approx(1 - r.tpr)
    allr = rates(Binned((-1.0, 1.0), (1.0, 1.0, 1.0)), model)
    assert allr.tpr == pytest.approx(1.0, abs=1e-15) and allr.fpr == pytest.approx(1.0, abs=1e-15)


@given(tau=taus)
def test_negative_threshold_complements_positive(tau):
    model = SignalModel(Gaussian(0, 1), Gaussian(1, 1))
    p, n = rates(PositiveThreshold(tau), model), rates(NegativeThreshold(tau), model)
    assert n.tpr == pytest.approx(1 - p.tpr, abs=1e-15)
    assert n.fpr == pytest.approx(1 - p.fpr, abs=1e-15)


def test_quadrature_examples():
    g = Gaussian(1.75, 1)
    expect = 1 - (mp_norm_cdf(-0.47) - mp_norm_cdf(-1.79))
    assert quadrature_reward_probability(OuterTwoCut(-0.04, 1.28), g) == pytest.approx(expect, abs=1e-10)
    assert quadrature_reward_probability(Binned((0.0, 1.0), (0.0, 0.0, 0.0)), g) == 0.0


def test_quadrature_matches_closed_form_on_random_thresholds():
    rng = np.random.default_rng(0)
    for _ in range(100):
        g = Gaussian(rng.uniform(-3, 3), rng.uniform(0.2, 3))
        rule = (PositiveThreshold if rng.random() < 0.5 else NegativeThreshold)(rng.uniform(-6, 6))
        assert abs(quadrature_reward_probability(rule, g) - reward_probability(rule, g)) <= 1e-8


@settings(max_examples=60, deadline=None)
@given(rule=any_rule, g=dists)
def test_quadrature_agrees_for_all_variants(rule, g):
    assert abs(quadrature_reward_probability(rule, g) - reward_probability(rule, g)) <= 1e-8


def test_quadrature_handles_logistic():
    g = Logistic(0.5, 0.8)
    rule = InnerTwoCut(-1.0, 2.5)
    assert quadrature_reward_probability(rule, g) == pytest.approx(reward_probability(rule, g), abs=1e-10)


@given(g=dists, a=taus, b=taus)
def test_threshold_monotonicity(g, a, b):
    lo, hi = min(a, b), max(a, b)
    assert reward_probability(PositiveThreshold(lo), g) >= reward_probability(PositiveThreshold(hi), g)
    assert reward_probability(NegativeThreshold(lo), g) <= reward_probability(NegativeThreshold(hi), g)


@given(m0=st.floats(-3, 3), gap=st.floats(0, 3), std=st.floats(0.2, 3), tau=taus)
def test_mlrp_orders_rates(m0, gap, std, tau):
    model = SignalModel(Gaussian(m0, std), Gaussian(m0 + gap, std))
    p = rates(PositiveThreshold(tau), model)
    n = rates(NegativeThreshold(tau), model)
    assert p.tpr >= p.fpr - 1e-15
    assert n.tpr <= n.fpr + 1e-15


@given(c=cuts(), g=dists)
def test_inner_outer_duality(c, g):
    assert reward_probability(InnerTwoCut(*c), g) + reward_probability(OuterTwoCut(*c), g) == pytest.approx(1.0)


@given(rule=any_rule, g=dists)
def test_probabilities_in_unit_interval(rule, g):
    p = reward_probability(rule, g)
    assert -1e-15 <= p <= 1 + 1e-15


@given(rule=any_rule)
def test_serialization_round_trip(rule):
    assert rule_from_dict(rule.to_dict()) == rule


def test_reward_probabilities_for_three_behaviors():
    model = SignalModel(Gaussian(0, 1), Gaussian(2, 1), Gaussian(1.75, 1))
    rw = reward_probabilities(PositiveThreshold(1.11), model)
    assert rw.s1 == pytest.approx(1 - mp_norm_cdf(-0.89), abs=1e-14)
    assert rw.s0 == pytest.approx(1 - mp_norm_cdf(1.11), abs=1e-14)
    assert rw.schi == pytest.approx(1 - mp_norm_cdf(-0.64), abs=1e-14)
    assert reward_probabilities(PositiveThreshold(1.11), SignalModel(Gaussian(0, 1), Gaussian(2, 1))).schi is None


def test_acceptance_conventions():
    s = np.array([-1.0, 0.0, 1.0])
    assert PositiveThreshold(0.0).acceptance(s).tolist() == [0.0, 1.0, 1.0]
    assert NegativeThreshold(0.0).acceptance(s).tolist() == [1.0, 1.0, 0.0]
    assert InnerTwoCut(-1.0, 0.0).acceptance(s).tolist() == [1.0, 1.0, 0.0]
    assert OuterTwoCut(-1.0, 0.0).acceptance(s).tolist() == [1.0, 1.0, 1.0]
    assert OuterTwoCut(-0.5, 0.5).acceptance(s).tolist() == [1.0, 0.0, 1.0]
    assert Binned((0.0,), (0.25, 0.75)).acceptance(s).tolist() == [0.25, 0.25, 0.75]


@pytest.mark.parametrize(
    "make",
    [
        lambda: InnerTwoCut(1.0, 1.0),
        lambda: OuterTwoCut(2.0, 1.0),
        lambda: PositiveThreshold(float("nan")),
        lambda: Binned((1.0, 0.0), (0.0, 0.0, 0.0)),
        lambda: Binned((0.0,), (0.0, 1.5)),
        lambda: Binned((0.0,), (0.0,)),
        lambda: rule_from_dict({"variant": "sigmoid"}),
    ],
)
def test_invalid_rules_rejected(make):
    with pytest.raises(InvalidModelError):
        make()
