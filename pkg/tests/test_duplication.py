import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mdlab.bounds import ChainBudget
from mdlab.duplication import (CGFAccumulator, DuplicationChainSpec, ExpMixture, Gaussian, LogAbsGaussian,
                               constant_budget, empirical_cgf, geometric_budget, sandwich_check,
                               simulate_chain, simulate_level, symmetric_cgf, theoremA_limit_analytic,
                               theoremA_limit_estimate)
from mdlab.errors import BudgetViolation, Degenerate
from mdlab.rng import SeededStream

S = SeededStream(77, 2)
# exact-CGF pipeline value for log|zeta| with C_k = 0.05 * 2^-k, levels 3..5
LIMIT_LOGABS = 0.11176477199545297


def var_se(x):
    # standard error of the sample variance from the fourth central moment
    c = x - x.mean()
    return math.sqrt((np.mean(c**4) - np.mean(c**2) ** 2) / x.size)


def test_zero_budget_variance_doubles():
    spec = DuplicationChainSpec(Gaussian(1.0), constant_budget(0.0), depth=3, samples=20_000)
    x = simulate_level(spec, 4, S)
    assert abs(x.var() - 8) < 5 * var_se(x)


def test_variance_recursion_with_unit_budget():
    spec = DuplicationChainSpec(Gaussian(1.0), constant_budget(1.0), depth=2, samples=20_000)
    levels = simulate_chain(spec, S)
    # var_{k+1} = 2 var_k + 2 C_k: 1 -> 4 -> 10
    for x, want in zip(levels, (1, 4, 10)):
        assert abs(x.var() - want) < 5 * var_se(x)


@pytest.mark.parametrize("law", [Gaussian(1.5), ExpMixture(), LogAbsGaussian(1.0)])
def test_level_means_are_zero(law):
    spec = DuplicationChainSpec(law, geometric_budget(1.0, 0.25), depth=3, samples=5000)
    for x in simulate_chain(spec, S.child(1)):
        assert abs(x.mean()) < 5 * x.std() / math.sqrt(x.size)


def test_levels_are_independent_draws():
    spec = DuplicationChainSpec(Gaussian(), depth=2, samples=1000)
    a, b, c = simulate_chain(spec, S)
    assert abs(np.corrcoef(b, c)[0, 1]) < 0.15


def test_chain_is_reproducible():
    spec = DuplicationChainSpec(ExpMixture(), constant_budget(0.3), depth=3, samples=500)
    a = simulate_chain(spec, S)
    b = simulate_chain(spec, S)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a, b))


def test_budget_violation():
    with pytest.raises(BudgetViolation):
        DuplicationChainSpec(Gaussian(), constant_budget(1.0), noise_factor=10.0)
    DuplicationChainSpec(Gaussian(), constant_budget(1.0), noise_factor=10.0, strict_budget=False)


def test_spec_validation():
    with pytest.raises(ValueError):
        DuplicationChainSpec(Gaussian(), depth=0)
    with pytest.raises(ValueError):
        DuplicationChainSpec(Gaussian(), samples=10)


def test_analytic_cgf_matches_variance_bookkeeping():
    spec = DuplicationChainSpec(Gaussian(1.0), constant_budget(1.0), depth=2)
    lam = 0.3
    assert spec.analytic_cgf(3, lam) == pytest.approx(10 * lam**2 / 2)


# ---------------------------------------------------------- empirical CGF --

def test_gaussian_cgf():
    sigma = 1.7
    x = Gaussian(sigma).sample(S.generator(), 100_000)
    c = empirical_cgf(x, [0.1])
    assert abs(c.estimates[0] - sigma**2 * 0.01 / 2) < 5 * c.standard_errors[0]


def test_zero_lambda_is_exactly_zero():
    c = empirical_cgf(np.random.default_rng(0).standard_normal(1000), [-0.5, 0.0, 0.5])
    assert c.estimates[1] == 0.0


def test_constant_zero_samples():
    c = empirical_cgf(np.zeros(200), np.linspace(-1, 1, 5))
    assert np.all(c.estimates == 0) and c.degenerate
    with pytest.raises(Degenerate):
        empirical_cgf(np.zeros(200), [0.5], allow_degenerate=False)


def test_exponential_mixture_against_analytic_cgf():
    law = ExpMixture((0.3, 0.7), (1.0, 4.0))
    x = law.sample(S.child(3).generator(), 200_000)
    lam = np.linspace(-0.4, 0.4, 10)
    c = empirical_cgf(x, lam)
    assert np.all(np.abs(c.estimates - law.cgf(lam)) < 5 * c.standard_errors)


def test_log_abs_gaussian_cgf():
    law = LogAbsGaussian(1.0)
    x = law.sample(S.child(4).generator(), 200_000)
    lam = np.array([-0.5, 0.5, 1.0])
    c = empirical_cgf(x, lam)
    assert np.all(np.abs(c.estimates - law.cgf(lam)) < 5 * c.standard_errors)
    assert abs(x.var() - math.pi**2 / 24) < 5 * var_se(x)


def test_heavy_tail_warns():
    x = np.random.default_rng(1).standard_cauchy(2000)
    with pytest.warns(RuntimeWarning):
        c = empirical_cgf(x, [5.0])
    assert not c.reliable[0]


def test_large_samples_do_not_overflow():
    c = empirical_cgf(np.array([-1000.0, 0.0, 1000.0]), [1.0])
    assert np.isfinite(c.estimates[0])


@given(st.integers(1, 7), st.integers(100, 2000))
def test_accumulator_split_invariance(parts, n):
    x = np.random.default_rng(n).standard_normal(n)
    lam = np.linspace(-1, 1, 9)
    whole = CGFAccumulator(lam).update(x).result()
    acc = CGFAccumulator(lam)
    for chunk in np.array_split(x, parts):
        acc.merge(CGFAccumulator(lam).update(chunk))
    merged = acc.result()
    assert np.allclose(merged.estimates, whole.estimates, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("law", [Gaussian(1.0), ExpMixture(), LogAbsGaussian(2.0)])
def test_centred_cgf_nonnegative_within_band(law):
    x = law.sample(S.child(5).generator(), 50_000)
    c = empirical_cgf(x - 0.0, np.linspace(-0.5, 0.5, 11))
    assert np.all(c.estimates >= -2 * c.standard_errors - 1e-15)


def test_symmetric_law_cgf_is_even():
    x = Gaussian(1.0).sample(S.child(6).generator(), 100_000)
    lam = np.array([0.1, 0.3, 0.5])
    p = empirical_cgf(x, lam)
    m = empirical_cgf(x, -lam)
    assert np.all(np.abs(p.estimates - m.estimates) < 3 * np.hypot(p.standard_errors, m.standard_errors))


def test_symmetric_cgf_estimator():
    x = Gaussian(2.0).sample(S.child(7).generator(), 50_000)
    est, se = symmetric_cgf(x, 0.2)
    assert abs(est - 2.0 * 0.04) < 5 * se


# ---------------------------------------------------------------- sandwich --

def _sandwich(noise_factor, M=100_000, n=4, strict=True):
    spec = DuplicationChainSpec(Gaussian(1.0), geometric_budget(1.0, 0.25), n, M, noise_factor, strict)
    lam = np.linspace(0.0025, 0.05, 20)
    f1 = empirical_cgf(simulate_level(spec, 1, S.child(8)), lam)
    fn = empirical_cgf(simulate_level(spec, n, S.child(8)), lam)
    return sandwich_check(f1, spec.chain_budget(n, 0.25), fn, n)


def test_sandwich_passes_for_honest_chain():
    rep = _sandwich(1.0)
    assert rep.ok and rep.fraction >= 0.95
    rows = list(rep.rows())
    assert set(rows[0]) == {"lambda", "lower", "empirical", "upper", "se", "pass"}


def test_sandwich_control_fails():
    rep = _sandwich(10.0, strict=False)
    assert not rep.ok
    assert np.any(rep.upper_margin < 0)


def test_sandwich_collapses_without_noise():
    spec = DuplicationChainSpec(Gaussian(1.0), constant_budget(0.0), 3, 20_000)
    lam = np.linspace(0.005, 0.05, 10)
    f1 = empirical_cgf(simulate_level(spec, 1, S.child(9)), lam)
    fn = empirical_cgf(simulate_level(spec, 3, S.child(9)), lam)
    rep = sandwich_check(f1, [0.0, 0.0], fn, 3)
    assert rep.ok
    # with zero budgets the upper envelope stays within a few per cent of 4 f1 at small lambda
    small = rep.lambdas <= 0.02
    assert np.all(rep.upper[small] <= 1.1 * 4 * (f1.estimates + 2 * f1.standard_errors)[small] + 1e-12)


def test_sandwich_budget_length_checked():
    spec = DuplicationChainSpec(Gaussian(1.0), depth=2, samples=1000)
    f = empirical_cgf(simulate_level(spec, 1, S), [0.1])
    with pytest.raises(ValueError):
        sandwich_check(f, ChainBudget((0.0,)), f, 3)


# ------------------------------------------------------------ chain limit --

@pytest.mark.parametrize("sigma, want, tol", [(1.0, 0.25, 0.02), (2.0, 1.0, 0.08)])
def test_limit_gaussian(sigma, want, tol):
    spec = DuplicationChainSpec(Gaussian(sigma), constant_budget(0.0), 1, 100_000)
    est = theoremA_limit_estimate(spec, [3, 4, 5, 6], S.child(10), delta=0.5)
    assert abs(est.limit - want) < tol
    assert theoremA_limit_analytic(spec, [3, 4, 5, 6]).limit == pytest.approx(want, abs=1e-9)


def test_limit_log_abs_gaussian_regression():
    spec = DuplicationChainSpec(LogAbsGaussian(1.0), geometric_budget(0.05, 0.25), 1, 50_000)
    est = theoremA_limit_estimate(spec, [3, 4, 5], S.child(11), delta=0.5)
    ana = theoremA_limit_analytic(spec, [3, 4, 5])
    assert np.isfinite(est.limit)
    # regression baseline for this seed and the exact-CGF path of the same pipeline
    assert ana.limit == pytest.approx(LIMIT_LOGABS, rel=1e-9)
    assert abs(est.limit - ana.limit) < 5 * est.limit_se + 0.02

