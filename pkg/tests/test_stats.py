import math

import numpy as np
import pytest
from scipy import stats as sps

from app.exceptions import FitConvergenceError, FitError, SampleSizeError
from app.services import stats


@pytest.mark.parametrize("mu,s", [(11.0, 4.3), (6.17, 3.9)])
def test_logistic_fit_recovers_parameters(mu, s):
    n = 100_000
    # one draw per quantile bin
    u = (np.arange(n) + np.random.default_rng(1).random(n)) / n
    x = sps.logistic.ppf(u, loc=mu, scale=s)
    fit = stats.fit_logistic(x)
    assert fit.family == "logistic"
    assert fit.params["mu"] == pytest.approx(mu, abs=0.05)
    assert fit.params["s"] == pytest.approx(s, abs=0.05)
    assert fit.sample_count == n


def test_logistic_fit_stops_on_the_summed_gradient():
    x = np.random.default_rng(17).logistic(11.0, 4.3, 100_000)
    fit = stats.fit_logistic(x)
    grad, _ = stats._logistic_derivatives(x, fit.params["mu"], fit.params["s"])
    assert np.linalg.norm(grad) < stats.GRADIENT_TOL


def test_logistic_fit_is_a_maximum():
    x = np.random.default_rng(2).logistic(0.0, 1.0, 500)
    fit = stats.fit_logistic(x)
    mu, s = fit.params["mu"], fit.params["s"]
    for dmu, ds in ((0.01, 0), (-0.01, 0), (0, 0.01), (0, -0.01)):
        assert stats._logistic_loglik(x, mu + dmu, s + ds) < fit.loglik


def test_logistic_constant_data():
    with pytest.raises(FitError):
        stats.fit_logistic([3.0] * 20)


def test_too_few_samples():
    with pytest.raises(SampleSizeError) as err:
        stats.fit_logistic([1.0, 2.0, 3.0])
    assert err.value.minimum == stats.MIN_SAMPLES
    with pytest.raises(SampleSizeError):
        stats.fit_weibull([])


def test_non_finite_samples():
    with pytest.raises(FitError):
        stats.fit_logistic([1.0] * 9 + [math.nan])


@pytest.mark.parametrize("a,b", [(100.0, 30.0), (2.0, 1.0), (50.0, 5.0)])
def test_weibull_fit_recovers_parameters(a, b):
    x = a * np.random.default_rng(3).weibull(b, 100_000)
    fit = stats.fit_weibull(x)
    assert fit.params["A"] == pytest.approx(a, rel=0.02)
    assert fit.params["B"] == pytest.approx(b, rel=0.02)


def test_weibull_fit_of_the_path_loss_law():
    x = 100.0 * np.random.default_rng(16).weibull(30.0, 100_000)
    fit = stats.fit_weibull(x)
    assert fit.params["A"] == pytest.approx(100.0, abs=0.5)
    assert fit.params["B"] == pytest.approx(30.0, abs=1.0)


def test_weibull_fit_matches_scipy():
    x = 80.0 * np.random.default_rng(4).weibull(12.0, 2000)
    fit = stats.fit_weibull(x)
    b, _, a = sps.weibull_min.fit(x, floc=0)
    assert fit.params["B"] == pytest.approx(b, rel=1e-3)
    assert fit.params["A"] == pytest.approx(a, rel=1e-3)


def test_weibull_needs_positive_samples():
    with pytest.raises(FitError):
        stats.fit_weibull([1.0] * 9 + [0.0])


def test_weibull_constant_data():
    with pytest.raises(FitConvergenceError):
        stats.fit_weibull([95.0] * 50)


def test_lognormal_fit():
    x = np.random.default_rng(5).lognormal(3.0, 1.0, 100_000)
    fit = stats.fit_lognormal(x)
    assert fit.params["mu"] == pytest.approx(3.0, abs=0.02)
    assert fit.params["sigma"] == pytest.approx(1.0, abs=0.02)
    assert not fit.degenerate


def test_lognormal_zero_spread_is_degenerate():
    fit = stats.fit_lognormal([4.2] * 10)
    assert fit.degenerate
    assert fit.params["sigma"] == 0.0
    assert fit.params["mu"] == pytest.approx(math.log(4.2))


def test_cdfs():
    assert stats.logistic_cdf(2.0, 2.0, 1.5) == pytest.approx(0.5)
    assert stats.weibull_cdf(-1.0, 3.0, 2.0) == 0.0
    assert stats.weibull_cdf(3.0, 3.0, 2.0) == pytest.approx(1 - math.exp(-1))
    assert stats.lognormal_cdf(np.array([0.0, math.e]), 1.0, 0.5).tolist() == pytest.approx([0.0, 0.5])


def test_identical_samples_give_zero_statistic():
    x = np.random.default_rng(6).normal(size=50)
    result = stats.cvm_two_sample(x, x.copy(), n_permutations=199)
    assert result.T == pytest.approx(0.0, abs=1e-15)
    assert result.p_value == 1.0
    assert result.decision == "pass"


def test_shifted_samples_are_rejected():
    rng = np.random.default_rng(7)
    result = stats.cvm_two_sample(rng.normal(0, 1, 500), rng.normal(5, 1, 500), n_permutations=999, seed=1)
    assert result.p_value == pytest.approx(1 / 1000)
    assert result.decision == "reject"


def test_same_law_passes():
    rng = np.random.default_rng(8)
    result = stats.cvm_two_sample(rng.normal(size=400), rng.normal(size=300), n_permutations=999, seed=2)
    assert result.p_value > 0.01
    assert result.passed
    assert (result.x_count, result.y_count) == (400, 300)


def test_statistic_matches_ecdf_definition():
    rng = np.random.default_rng(9)
    x, y = rng.normal(size=60), rng.normal(0.3, 1.2, size=45)
    pooled = np.sort(np.concatenate([x, y]))
    diff = [np.mean(x <= v) - np.mean(y <= v) for v in pooled]
    direct = 60 * 45 / 105**2 * float(np.sum(np.square(diff)))
    assert stats.cvm_statistic(x, y) == pytest.approx(direct, rel=1e-12)


def test_statistic_ignores_monotone_transforms():
    rng = np.random.default_rng(10)
    x, y = rng.exponential(size=80), rng.exponential(1.5, size=70)
    assert stats.cvm_statistic(np.log(x), np.log(y)) == pytest.approx(stats.cvm_statistic(x, y), rel=1e-12)
    assert stats.cvm_statistic(3 * x + 1, 3 * y + 1) == pytest.approx(stats.cvm_statistic(x, y), rel=1e-12)


def test_statistic_is_symmetric():
    rng = np.random.default_rng(11)
    x, y = rng.normal(size=30), rng.normal(size=40)
    assert stats.cvm_statistic(y, x) == pytest.approx(stats.cvm_statistic(x, y), rel=1e-12)


def test_ties_are_evaluated_after_the_whole_group():
    # pooled ECDFs only differ at 1 (x: 1, y: 0.5) and 2 (x: 1, y: 1)
    x = [1.0] * 8
    y = [1.0] * 8 + [2.0] * 8
    expected = 8 * 16 / 24**2 * (16 * (1.0 - 0.5) ** 2)
    assert stats.cvm_statistic(x, y) == pytest.approx(expected, rel=1e-12)


def test_p_value_does_not_depend_on_threads():
    rng = np.random.default_rng(12)
    x, y = rng.normal(size=2000), rng.normal(0.05, 1, size=2000)
    single = stats.cvm_two_sample(x, y, n_permutations=1999, seed=4, threads=1)
    pooled = stats.cvm_two_sample(x, y, n_permutations=1999, seed=4, threads=4)
    assert single.p_value == pooled.p_value
    assert single.T == pooled.T


def test_p_value_depends_on_seed_only_through_permutations():
    rng = np.random.default_rng(13)
    x, y = rng.normal(size=100), rng.normal(0.2, 1, size=100)
    a = stats.cvm_two_sample(x, y, n_permutations=499, seed=1)
    b = stats.cvm_two_sample(x, y, n_permutations=499, seed=1)
    assert a.p_value == b.p_value
    assert 1 / 500 <= a.p_value <= 1.0


def test_cvm_sample_size_checks():
    with pytest.raises(SampleSizeError):
        stats.cvm_two_sample([1.0] * 5, np.arange(20.0))
    with pytest.raises(SampleSizeError):
        stats.cvm_two_sample(np.arange(20.0), np.arange(20.0), n_permutations=0)


def test_fit_gof_accepts_the_true_family():
    x = np.random.default_rng(14).logistic(11.0, 4.3, 2000)
    fit = stats.fit_logistic(x)
    result = stats.fit_gof(x, fit, seed=3, n_permutations=499)
    assert result.label == "logistic fit"
    assert result.passed


def test_fit_gof_rejects_the_wrong_family():
    x = np.random.default_rng(15).exponential(1.0, 2000)
    fit = stats.fit_logistic(x)
    result = stats.fit_gof(x, fit, seed=3, n_permutations=499)
    assert result.decision == "reject"


def test_draw_from_fit_families(rng):
    for fit in (
        stats.fit_logistic(rng.logistic(1.0, 2.0, 500)),
        stats.fit_weibull(3.0 * rng.weibull(2.0, 500)),
        stats.fit_lognormal(rng.lognormal(0.5, 0.3, 500)),
    ):
        draws = stats.draw_from_fit(fit, rng, 100)
        assert draws.shape == (100,)
        assert np.all(np.isfinite(draws))
        cdf = stats.fit_cdf(fit, draws)
        assert np.all((cdf >= 0) & (cdf <= 1))
