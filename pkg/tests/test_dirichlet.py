"""Unit and property tests for the Dirichlet numeric kernel.

Closed forms are checked against frozen Monte-Carlo estimates (1e6 samples,
seed 20260811) and against scipy's independent implementations.
"""

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import dblquad
from scipy.special import digamma as scipy_digamma

from foveal_explorer.dirichlet import (
    EULER_GAMMA,
    DirichletParams,
    clamp_simplex,
    digamma,
    dirichlet_entropy,
    dirichlet_kl,
    dirichlet_log_pdf,
    dirichlet_sample,
    fit_dirichlet_mle,
    inverse_digamma,
    trigamma,
)
from foveal_explorer.errors import ContractError

# Frozen oracle values (see module docstring).
LOGPDF_253_REF = 2.1406542258478254  # scipy.stats.dirichlet.logpdf([.2,.5,.3],[2,5,3])
ENTROPY_MC = {
    (5.0, 2.0): -0.48382380213847975,
    (2.0, 3.0, 4.0): -1.312404740732713,
    (1.5, 1.5, 1.5): -0.788578319057502,
}
KL_MC = {
    ((2.0, 1.0), (1.0, 1.0)): 0.19321937140760267,
    ((2.0, 3.0, 4.0), (1.0, 1.0, 1.0)): 0.6189656794787696,
    ((1.5, 0.5, 2.0), (2.0, 2.0, 2.0)): 1.9925105584636502,
}


class TestDigamma:
    def test_known_identities(self):
        assert digamma(1.0) == pytest.approx(-EULER_GAMMA, abs=1e-12)
        assert digamma(2.0) == pytest.approx(1.0 - EULER_GAMMA, abs=1e-12)
        assert digamma(0.5) == pytest.approx(-EULER_GAMMA - 2.0 * np.log(2.0), abs=1e-12)

    def test_matches_scipy_over_wide_range(self):
        xs = np.logspace(-3, 6, 4000)
        ref = scipy_digamma(xs)
        err = np.abs(digamma(xs) - ref) / np.maximum(np.abs(ref), 1.0)
        assert err.max() < 1e-10

    def test_domain_error(self):
        with pytest.raises(ContractError):
            digamma(0.0)
        with pytest.raises(ContractError):
            digamma(-1.5)
        with pytest.raises(ContractError):
            digamma(np.array([1.0, -2.0]))

    def test_trigamma_is_digamma_derivative(self):
        xs = np.logspace(-2, 3, 200)
        h = 1e-6 * xs
        numeric = (scipy_digamma(xs + h) - scipy_digamma(xs - h)) / (2 * h)
        np.testing.assert_allclose(trigamma(xs), numeric, rtol=1e-4)


class TestInverseDigamma:
    def test_round_trip(self):
        assert inverse_digamma(digamma(3.7)) == pytest.approx(3.7, abs=1e-8)
        assert inverse_digamma(-EULER_GAMMA) == pytest.approx(1.0, abs=1e-8)

    def test_round_trip_log_grid(self):
        xs = np.logspace(-3, 4, 400)
        back = inverse_digamma(digamma(xs))
        assert np.max(np.abs(back - xs) / xs) < 1e-8

    def test_far_negative_argument_against_bisection(self):
        x = inverse_digamma(-10.0)
        assert abs(digamma(x) + 10.0) < 1e-10
        lo, hi = 1e-8, 10.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if scipy_digamma(mid) < -10.0:
                lo = mid
            else:
                hi = mid
        assert x == pytest.approx(0.5 * (lo + hi), rel=1e-9)


class TestDirichletParams:
    def test_rejects_nonpositive(self):
        with pytest.raises(ContractError):
            DirichletParams(np.array([1.0, 0.0]))
        with pytest.raises(ContractError):
            DirichletParams(np.array([1.0, -1.0, 2.0]))

    def test_rejects_scalar_and_short(self):
        with pytest.raises(ContractError):
            DirichletParams(np.array([3.0]))

    def test_mean_sums_to_one(self):
        p = DirichletParams(np.array([2.0, 5.0, 3.0]))
        assert p.mean().sum() == pytest.approx(1.0)
        assert p.dim == 3
        assert p.total == pytest.approx(10.0)


class TestLogPdf:
    def test_uniform_density_is_zero(self):
        assert dirichlet_log_pdf([1.0, 1.0], [0.3, 0.7]) == pytest.approx(0.0, abs=1e-9)

    def test_beta_2_1_at_half(self):
        # Beta(2,1) pdf is 2x, so the density at 0.5 is 1 and its log 0.
        assert dirichlet_log_pdf([2.0, 1.0], [0.5, 0.5]) == pytest.approx(0.0, abs=1e-9)

    def test_against_scipy_reference(self):
        got = dirichlet_log_pdf([2.0, 5.0, 3.0], [0.2, 0.5, 0.3])
        assert got == pytest.approx(LOGPDF_253_REF, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            dirichlet_log_pdf([1.0, 2.0, 3.0], [0.5, 0.5])

    def test_clamps_zero_components(self):
        val = dirichlet_log_pdf([2.0, 3.0], [1.0, 0.0])
        assert np.isfinite(val)

    def test_integrates_to_one_on_2_simplex(self):
        for a in [(1.0, 1.0, 1.0), (2.0, 3.0, 4.0), (5.0, 1.5, 2.0)]:
            def f(y, x, a=np.array(a)):
                z = 1.0 - x - y
                if z <= 1e-9:
                    return 0.0
                return float(np.exp(dirichlet_log_pdf(a, np.array([x, y, z]))))

            val, _ = dblquad(f, 0.0, 1.0, 0.0, lambda x: 1.0 - x, epsabs=1e-9)
            assert val == pytest.approx(1.0, abs=1e-3)


class TestEntropy:
    def test_uniform_cases(self):
        assert dirichlet_entropy([1.0, 1.0]) == pytest.approx(0.0, abs=1e-12)
        assert dirichlet_entropy([1.0, 1.0, 1.0]) == pytest.approx(-np.log(2.0), abs=1e-12)

    @pytest.mark.parametrize("alpha,expected", sorted(ENTROPY_MC.items()))
    def test_matches_monte_carlo(self, alpha, expected):
        assert dirichlet_entropy(np.array(alpha)) == pytest.approx(expected, abs=1e-2)

    def test_symmetric_entropy_peaks_at_one(self):
        # Differential entropy over a bounded support is maximized by the
        # uniform distribution, i.e. the symmetric family (c,...,c) peaks
        # at c = 1.
        cs = np.linspace(0.2, 5.0, 97)
        ents = np.array([dirichlet_entropy([c, c, c]) for c in cs])
        best = cs[np.argmax(ents)]
        assert best == pytest.approx(1.0, abs=cs[1] - cs[0])


class TestKl:
    def test_self_divergence_zero(self):
        assert dirichlet_kl([3.0, 2.0, 4.0], [3.0, 2.0, 4.0]) == 0.0

    @pytest.mark.parametrize("pq,expected", sorted(KL_MC.items()))
    def test_matches_monte_carlo(self, pq, expected):
        p, q = pq
        assert dirichlet_kl(np.array(p), np.array(q)) == pytest.approx(expected, abs=1e-2)

    def test_strictly_positive_for_distinct(self):
        assert dirichlet_kl([1.0, 1.0], [2.0, 2.0]) > 0.0

    def test_nonnegative_random_pairs(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            dim = rng.integers(2, 6)
            p = rng.uniform(0.1, 10.0, dim)
            q = rng.uniform(0.1, 10.0, dim)
            kl = dirichlet_kl(p, q)
            assert kl >= 0.0
            assert dirichlet_kl(p, p) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            dirichlet_kl([1.0, 2.0], [1.0, 2.0, 3.0])


class TestSampling:
    def test_valid_simplex(self):
        rng = np.random.default_rng(0)
        s = dirichlet_sample([0.3, 2.0, 5.0], rng, size=100)
        assert np.all(s >= 0)
        np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)

    def test_concentrated_params(self):
        rng = np.random.default_rng(1)
        s = dirichlet_sample([1000.0, 1000.0], rng, size=200)
        assert np.all(np.abs(s - 0.5) < 0.05)

    def test_deterministic_given_seed(self):
        a = dirichlet_sample([2.0, 3.0], np.random.default_rng(42))
        b = dirichlet_sample([2.0, 3.0], np.random.default_rng(42))
        np.testing.assert_array_equal(a, b)


class TestMleFit:
    def test_recovers_parameters(self):
        rng = np.random.default_rng(3)
        truth = np.array([3.0, 1.0, 0.5])
        samples = dirichlet_sample(truth, rng, size=5000)
        fit = fit_dirichlet_mle(samples)
        assert fit.converged
        np.testing.assert_allclose(fit.params.alpha, truth, rtol=0.10)

    def test_recovers_uniform(self):
        rng = np.random.default_rng(4)
        samples = dirichlet_sample([1.0, 1.0], rng, size=5000)
        fit = fit_dirichlet_mle(samples)
        assert fit.converged
        np.testing.assert_allclose(fit.params.alpha, [1.0, 1.0], rtol=0.10)

    def test_degenerate_data_flags_nonconvergence(self):
        samples = np.full((50, 2), 0.5)
        fit = fit_dirichlet_mle(samples)
        assert not fit.converged
        assert fit.iterations == 1000
        assert np.all(fit.params.alpha > 0)

    def test_rejects_too_few_samples(self):
        with pytest.raises(ContractError):
            fit_dirichlet_mle(np.array([[0.5, 0.5]]))

    def test_rejects_ragged_dimension(self):
        with pytest.raises(ContractError):
            fit_dirichlet_mle([[0.5, 0.5], [0.2, 0.3, 0.5]])

    def test_agrees_with_scipy_loglik_at_optimum(self):
        # The fit should not be improvable by nudging any component.
        rng = np.random.default_rng(5)
        samples = dirichlet_sample([2.0, 6.0, 1.2], rng, size=3000)
        fit = fit_dirichlet_mle(samples)
        base = stats.dirichlet.logpdf(np.asarray(samples).T, fit.params.alpha).sum()
        for k in range(3):
            for bump in (0.98, 1.02):
                alt = fit.params.alpha.copy()
                alt[k] *= bump
                assert stats.dirichlet.logpdf(np.asarray(samples).T, alt).sum() <= base + 1e-6


class TestClamping:
    def test_raises_small_components_and_renormalizes(self):
        out = clamp_simplex([1.0, 0.0])
        assert out[1] == pytest.approx(1e-6, rel=1e-3)
        assert out[1] > 0
        assert out.sum() == pytest.approx(1.0)

    def test_noop_on_clean_vectors(self):
        np.testing.assert_allclose(clamp_simplex([0.25, 0.75]), [0.25, 0.75], atol=1e-12)
