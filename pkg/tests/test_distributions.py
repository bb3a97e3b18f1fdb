import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from _helpers import mp_norm_cdf
from equiclass.distributions import (
    Gaussian,
    Logistic,
    SignalModel,
    check_mlrp,
    distribution_from_dict,
    exp_family_ratios,
    mlrp_violations,
    sample,
)
from equiclass.errors import InvalidModelError, UnsupportedFamilyError

means = st.floats(-5, 5)
stds = st.floats(0.1, 5)


@pytest.mark.parametrize(
    "mean, std, x",
    [(0.0, 1.0, 0.0), (0.5, 0.5, 0.0), (2.0, 1.0, 1.11), (1.0, 1.0, -1.55), (0.0, 1.0, -7.5), (0.0, 1.0, 7.5)],
)
def test_cdf_matches_high_precision_erf(mean, std, x):
    got = Gaussian(mean, std).cdf(x)
    assert got == pytest.approx(mp_norm_cdf(x, mean, std), abs=1e-12)


def test_cdf_examples():
    assert Gaussian(0, 1).cdf(0.0) == 0.5
    assert Gaussian(0.5, 0.5).cdf(0.0) == pytest.approx(0.1587, abs=5e-5)
    assert Gaussian(2, 1).cdf(1.11) == pytest.approx(0.1867, abs=5e-5)


def test_sf_keeps_upper_tail_precision():
    # 1 - cdf would round to 0 here
    assert Gaussian(0, 1).sf(30.0) == pytest.approx(1 - mp_norm_cdf(30.0), rel=1e-10)
    assert Gaussian(0, 1).sf(8.0) == pytest.approx(1 - mp_norm_cdf(8.0), rel=1e-10)


@given(mean=means, std=stds, u=st.floats(-6, 5.5))
def test_quantile_round_trip(mean, std, u):
    d = Gaussian(mean, std)
    x = mean + u * std
    assert d.quantile(d.cdf(x)) == pytest.approx(x, abs=1e-9 * max(1.0, std))


@pytest.mark.xfail(strict=True, reason="cdf near 1 - 1e-9 keeps only ~7 significant digits of the tail mass in "
                                       "binary64, so the round trip cannot reach 1e-9 beyond about +5.5 sigma")
def test_quantile_round_trip_upper_six_sigma():
    d = Gaussian(0.0, 1.0)
    xs = np.linspace(5.5, 6.0, 51)
    err = np.abs(d.quantile(d.cdf(xs)) - xs)
    assert err.max() <= 1e-9


@given(mean=means, std=stds, xs=st.lists(st.floats(-4, 4), min_size=2, max_size=20, unique=True))
def test_cdf_strictly_increasing(mean, std, xs):
    xs = np.sort(mean + std * np.array(xs))
    xs = xs[np.diff(xs, prepend=-np.inf) > 1e-9 * std]
    p = Gaussian(mean, std).cdf(xs)
    assert np.all(np.diff(p) > 0)
    assert np.all((p > 0) & (p < 1))


@settings(max_examples=25, deadline=None)
@given(mean=means, std=stds)
def test_pdf_integrates_to_one(mean, std):
    d = Gaussian(mean, std)
    val, _ = integrate.quad(d.pdf, mean - 8 * std, mean + 8 * std, epsabs=1e-12, epsrel=1e-12)
    assert val == pytest.approx(1.0, abs=1e-6)


def test_logistic_cdf_and_quantile():
    d = Logistic(1.0, 2.0)
    assert d.cdf(1.0) == 0.5
    assert d.quantile(d.cdf(3.7)) == pytest.approx(3.7, abs=1e-12)


def test_variance_interpretation_changes_sincere_compliance():
    std_form = distribution_from_dict({"kind": "gaussian", "mean": 0.5, "scale": 0.5})
    var_form = distribution_from_dict({"kind": "gaussian", "mean": 0.5, "scale": 0.5, "scale_is": "variance"})
    assert std_form.cdf(0.0) == pytest.approx(mp_norm_cdf(0.0, 0.5, 0.5), abs=1e-12)
    assert var_form.cdf(0.0) == pytest.approx(mp_norm_cdf(0.0, 0.5, math.sqrt(0.5)), abs=1e-12)
    assert round(100 * std_form.cdf(0.0)) == 16
    assert round(100 * var_form.cdf(0.0)) == 24


def test_invalid_parameters():
    with pytest.raises(InvalidModelError):
        Gaussian(0.0, 0.0)
    with pytest.raises(InvalidModelError):
        distribution_from_dict({"kind": "gaussian", "scale": 1.0, "scale_is": "width"})
    with pytest.raises(UnsupportedFamilyError):
        distribution_from_dict({"kind": "cauchy"})


# MLRP


def test_mlrp_examples():
    assert check_mlrp(SignalModel(Gaussian(0, 1), Gaussian(1, 1)))
    assert check_mlrp(SignalModel(Gaussian(0, 1), Gaussian(2, 1), Gaussian(1.75, 1)))


def test_mlrp_fails_for_unequal_variance():
    model = SignalModel(Gaussian(0, 1), Gaussian(0, 2))
    # oracle: the log ratio is a quadratic with its minimum at 0, so it falls then rises
    s = np.linspace(-3, 3, 7)
    lr = model.comply.logpdf(s) - model.noncomply.logpdf(s)
    assert np.any(np.diff(lr) < 0) and np.any(np.diff(lr) > 0)
    assert not check_mlrp(model)
    assert mlrp_violations(model) == ["g_1/g_0"]


def test_mlrp_names_the_failing_pair():
    model = SignalModel(Gaussian(0, 1), Gaussian(2, 1), Gaussian(2.5, 1))
    assert mlrp_violations(model) == ["g_1/g_chi"]


@given(m0=means, gap=st.floats(0.01, 5), mchi=st.floats(0.01, 0.99), std=stds)
def test_mlrp_holds_for_common_variance_shifts(m0, gap, mchi, std):
    assert check_mlrp(SignalModel(Gaussian(m0, std), Gaussian(m0 + gap, std), Gaussian(m0 + mchi * gap, std)))


def test_mlrp_grid_checks_validate_arguments():
    with pytest.raises(ValueError):
        check_mlrp(SignalModel(Gaussian(0, 1), Gaussian(1, 1)), 1.0, 0.0)
    with pytest.raises(ValueError):
        check_mlrp(SignalModel(Gaussian(0, 1), Gaussian(1, 1)), n=1)


# exponential-family ratios


@pytest.mark.parametrize("means, a, c", [((0, 1.5, 2), 0.5, 1.5), ((0, 1.75, 2), 0.25, 1.75)])
def test_exp_family_coefficients(means, a, c):
    m0, mchi, m1 = means
    r = exp_family_ratios(SignalModel(Gaussian(m0, 1), Gaussian(m1, 1), Gaussian(mchi, 1)))
    assert r.a == pytest.approx(a, abs=1e-14)
    assert r.c == pytest.approx(c, abs=1e-14)


def test_exp_family_reconstruction_is_exact():
    model = SignalModel(Gaussian(0, 1), Gaussian(1, 1), Gaussian(0.5, 1))
    r = exp_family_ratios(model)
    # b and d are the log ratios at s = 0
    assert r.b == pytest.approx(model.comply.logpdf(0.0) - model.cheat.logpdf(0.0), abs=1e-14)
    assert r.d == pytest.approx(model.noncomply.logpdf(0.0) - model.cheat.logpdf(0.0), abs=1e-14)
    s = np.linspace(-6, 6, 1001)
    direct = model.comply.pdf(s) / model.cheat.pdf(s)
    assert np.max(np.abs(r.comply_over_cheat(s) / direct - 1)) <= 1e-10


@given(m0=means, gap=st.floats(0.1, 4), frac=st.floats(0.05, 0.95), std=st.floats(0.3, 3))
def test_exp_family_round_trip(m0, gap, frac, std):
    model = SignalModel(Gaussian(m0, std), Gaussian(m0 + gap, std), Gaussian(m0 + frac * gap, std))
    r = exp_family_ratios(model)
    assert r.a > 0 and r.c > 0
    s = np.linspace(model.cheat.mean - 6 * std, model.cheat.mean + 6 * std, 201)
    # compare in logs so that both sides stay finite across the grid
    lhs1 = r.a * s + r.b + model.cheat.logpdf(s)
    lhs0 = -r.c * s + r.d + model.cheat.logpdf(s)
    assert np.max(np.abs(np.expm1(lhs1 - model.comply.logpdf(s)))) <= 1e-8
    assert np.max(np.abs(np.expm1(lhs0 - model.noncomply.logpdf(s)))) <= 1e-8


def test_exp_family_rejects_unsupported_models():
    with pytest.raises(UnsupportedFamilyError):
        exp_family_ratios(SignalModel(Gaussian(0, 1), Gaussian(2, 1)))
    with pytest.raises(UnsupportedFamilyError):
        exp_family_ratios(SignalModel(Gaussian(0, 1), Gaussian(2, 1), Gaussian(1, 2)))
    with pytest.raises(UnsupportedFamilyError):
        exp_family_ratios(SignalModel(Logistic(0, 1), Logistic(2, 1), Logistic(1, 1)))


# sampling


def test_sample_mean_and_tail_fraction():
    x = sample(Gaussian(0, 1), 10**6, seed=11)
    assert abs(x.mean()) <= 0.004
    y = sample(Gaussian(0.5, 0.5), 10**6, seed=12)
    assert abs(np.mean(y < 0) - 0.1587) <= 0.0015


def test_sample_is_deterministic():
    a = sample(Gaussian(0, 1), 1000, seed=3)
    b = sample(Gaussian(0, 1), 1000, seed=3)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample(Gaussian(0, 1), 1000, seed=4))
    with pytest.raises(ValueError):
        sample(Gaussian(0, 1), 0, seed=1)
