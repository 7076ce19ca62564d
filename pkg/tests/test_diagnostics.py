"""Tests for the limit distribution, KL estimates, selection metrics and exact enumeration."""

import math

import numpy as np
import pytest

from quasi_slab.core.diagnostics import (
    BvmLimit,
    DiagnosticsError,
    DiagnosticsNumericalError,
    bvm_limit_from_fit,
    contraction_epsilon,
    enumerate_exact,
    gaussian_kl,
    kl_to_bvm,
    pinsker_tv_bound,
    selection_report,
    summarize_trace,
    summarize_variational,
)
from quasi_slab.core.config import ExperimentConfig
from quasi_slab.core.model import BinaryModel, GaussianRegressionQL, PriorSpec
from quasi_slab.core.sampler import Trace, conditional_moments, lasso_init, make_rng, run_chain
from quasi_slab.core.simulate import simulate_regression
from quasi_slab.core.varapprox import VariationalState


def make_trace(deltas, thetas=None):
    """Trace with the given stored samples and no chain statistics."""
    deltas = np.asarray(deltas, dtype=bool)
    m, p = deltas.shape
    if thetas is None:
        thetas = np.zeros((m, p))
    return Trace(
        delta_samples=deltas,
        theta_samples=np.asarray(thetas, dtype=float),
        iterations=np.arange(1, m + 1),
        model_sizes=deltas.sum(axis=1),
        acceptance_counts=np.zeros(p, dtype=np.int64),
        proposal_counts=np.zeros(p, dtype=np.int64),
    )


def random_regression(n=30, p=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = X @ np.linspace(1.0, 2.0, p) + rng.standard_normal(n)
    return GaussianRegressionQL(X, y)


# ============================================================================
# Gaussian KL
# ============================================================================


class TestGaussianKl:
    """Test the closed-form Gaussian KL divergence."""

    def test_identical_is_zero(self):
        S = np.array([[2.0, 0.3], [0.3, 1.0]])
        assert gaussian_kl([1.0, 2.0], S, [1.0, 2.0], S) == pytest.approx(0.0, abs=1e-12)

    def test_mean_shift_1d(self):
        assert gaussian_kl(0.0, 1.0, 1.0, 1.0) == pytest.approx(0.5)

    def test_scale_change_2d(self):
        """Σ₁ = I, Σ₂ = 2I: ½log4 + ½ − 1."""
        kl = gaussian_kl(np.zeros(2), np.eye(2), np.zeros(2), 2 * np.eye(2))
        assert kl == pytest.approx(0.5 * math.log(4) + 0.5 - 1, rel=1e-12)
        assert kl == pytest.approx(0.1931, abs=1e-4)

    def test_matches_monte_carlo(self):
        rng = np.random.default_rng(0)
        mu1, S1 = np.array([0.2, -0.1]), np.array([[1.0, 0.4], [0.4, 0.8]])
        mu2, S2 = np.array([0.0, 0.3]), np.array([[1.5, -0.2], [-0.2, 1.1]])
        x = rng.multivariate_normal(mu1, S1, size=200_000)

        def logpdf(x, mu, S):
            d = x - mu
            return -0.5 * np.einsum("ij,jk,ik->i", d, np.linalg.inv(S), d) - 0.5 * np.log(
                np.linalg.det(2 * np.pi * S)
            )

        estimate = float(np.mean(logpdf(x, mu1, S1) - logpdf(x, mu2, S2)))
        assert gaussian_kl(mu1, S1, mu2, S2) == pytest.approx(estimate, abs=0.01)

    def test_non_negative_near_identical(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a = rng.standard_normal((3, 3))
            S = a @ a.T + np.eye(3)
            mu = rng.standard_normal(3)
            assert gaussian_kl(mu, S, mu + 1e-9, S + 1e-9 * np.eye(3)) >= 0.0

    def test_non_pd_rejected(self):
        with pytest.raises(DiagnosticsNumericalError, match="S2"):
            gaussian_kl([0.0], [[1.0]], [0.0], [[-1.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(DiagnosticsError, match="inconsistent"):
            gaussian_kl(np.zeros(2), np.eye(2), np.zeros(3), np.eye(3))


def test_pinsker_bound():
    assert pinsker_tv_bound(0.5) == pytest.approx(0.5)
    assert pinsker_tv_bound(-1e-12) == 0.0


# ============================================================================
# Limit distribution
# ============================================================================


class TestBvmLimit:
    """Test the limit distribution built from a fit."""

    def test_single_orthonormal_column(self):
        X = np.zeros((4, 2))
        X[:, 0] = [0.5, 0.5, 0.5, 0.5]
        X[:, 1] = [1.0, -1.0, 2.0, 0.0]
        y = np.array([1.0, 2.0, 0.0, -1.0])
        ql = GaussianRegressionQL(X, y, sigma2=2.0)
        prior = PriorSpec(rho0=10.0, rho1=1.0, u=2, p=2)
        limit = bvm_limit_from_fit(ql, BinaryModel([1, 0]), prior)
        assert limit.theta_hat[0] == pytest.approx(X[:, 0] @ y)
        assert limit.info[0, 0] == pytest.approx(0.5)

    def test_empty_truth_is_degenerate(self):
        ql = random_regression()
        prior = PriorSpec.default(p=3, n=30)
        limit = bvm_limit_from_fit(ql, BinaryModel.zeros(3), prior)
        assert limit.theta_hat.size == 0
        draws = limit.sample(500, make_rng(0))
        assert draws.shape == (500, 3)
        assert np.std(draws) == pytest.approx(1 / math.sqrt(prior.rho0), rel=0.1)

    def test_theta_hat_matches_least_squares(self):
        ql = random_regression(n=40, p=5, seed=3)
        delta = BinaryModel([1, 0, 1, 1, 0])
        limit = bvm_limit_from_fit(ql, delta, PriorSpec.default(p=5, n=40))
        expected, *_ = np.linalg.lstsq(ql.X[:, delta.active], ql.y, rcond=None)
        np.testing.assert_allclose(limit.theta_hat, expected, atol=1e-10)
        np.testing.assert_allclose(limit.covariance() @ limit.info, np.eye(3), atol=1e-10)

    def test_rank_deficient(self):
        X = np.ones((5, 2))
        ql = GaussianRegressionQL(X, np.arange(5.0))
        with pytest.raises(DiagnosticsNumericalError, match="rank deficient"):
            bvm_limit_from_fit(ql, BinaryModel.ones(2), PriorSpec.default(p=2, n=5))

    def test_sample_moments(self):
        limit = BvmLimit(BinaryModel([0, 1, 1]), np.array([1.0, -2.0]), np.array([[4.0, 1.0], [1.0, 2.0]]), rho0=100.0)
        draws = limit.sample(50_000, make_rng(1))
        np.testing.assert_allclose(draws[:, 1:].mean(axis=0), [1.0, -2.0], atol=0.02)
        np.testing.assert_allclose(np.cov(draws[:, 1:].T), limit.covariance(), atol=0.02)

    def test_asymmetric_info_rejected(self):
        with pytest.raises(DiagnosticsError, match="symmetric"):
            BvmLimit(BinaryModel.ones(2), np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]), rho0=1.0)


# ============================================================================
# KL to the limit
# ============================================================================


class TestKlToBvm:
    """Test the Monte Carlo KL estimate."""

    def test_exact_conjugacy_gives_zero(self):
        """Flat slab and a trace fixed at δ⋆ make the density ratio constant."""
        ql = random_regression()
        prior = PriorSpec(rho0=120.0, rho1=0.0, u=2, p=3)
        truth = BinaryModel.ones(3)
        limit = bvm_limit_from_fit(ql, truth, prior)
        thetas = limit.sample(2000, make_rng(2))
        trace = make_trace(np.ones((2000, 3)), thetas)
        kl = kl_to_bvm(trace, limit, prior, ql, n_draws=1000, seed=3)
        assert abs(kl.value) < 1e-8
        assert kl.n_visits == 2000

    def test_matches_closed_form_on_fixed_model(self):
        """With δ fixed the sampled posterior is Gaussian and the KL is closed form."""
        ql = random_regression(seed=4)
        prior = PriorSpec(rho0=120.0, rho1=2.0, u=2, p=3)
        truth = BinaryModel.ones(3)
        limit = bvm_limit_from_fit(ql, truth, prior)
        mean, cov = conditional_moments(prior, ql, truth)
        thetas = make_rng(5).multivariate_normal(mean, cov, size=20_000)
        kl = kl_to_bvm(make_trace(np.ones((20_000, 3)), thetas), limit, prior, ql, n_draws=20_000, seed=6)
        exact = gaussian_kl(limit.theta_hat, limit.covariance(), mean, cov)
        assert kl.value == pytest.approx(exact, abs=4 * kl.stderr + 1e-3)
        assert kl.stderr > 0
        assert kl.tv_bound == pytest.approx(pinsker_tv_bound(kl.value))

    def test_no_visits(self):
        ql = random_regression()
        prior = PriorSpec.default(p=3, n=30)
        limit = bvm_limit_from_fit(ql, BinaryModel.ones(3), prior)
        with pytest.raises(DiagnosticsError, match="never visits"):
            kl_to_bvm(make_trace(np.zeros((10, 3))), limit, prior, ql)


# ============================================================================
# Contraction rate
# ============================================================================


class TestContractionEpsilon:
    """Test the linear-model contraction rate."""

    def test_substitution(self):
        assert contraction_epsilon(100, 2, 2, 1.0, 1.0, 10.0) == pytest.approx(0.4)

    def test_doubling_n_halves(self):
        a = contraction_epsilon(100, 3, 2, 1.5, 0.7, 4.0)
        assert contraction_epsilon(200, 3, 2, 1.5, 0.7, 4.0) == pytest.approx(a / 2)

    def test_rate_scaling(self):
        """ρ̄ ∝ √(n log p) gives ε ∝ √(log p / n)."""
        p = 1000

        def eps(n):
            return contraction_epsilon(n, 3, 2, 1.0, 1.0, math.sqrt(n * math.log(p)))

        assert eps(400) / eps(100) == pytest.approx(0.5)

    def test_non_positive_rejected(self):
        with pytest.raises(DiagnosticsError, match="vmin"):
            contraction_epsilon(100, 2, 2, 1.0, 0.0, 10.0)


# ============================================================================
# Exact enumeration
# ============================================================================


class TestEnumerateExact:
    """Test the brute-force posterior over models."""

    def test_flat_likelihood_recovers_prior(self):
        ql = GaussianRegressionQL(np.zeros((4, 1)), np.ones(4))
        prior = PriorSpec(rho0=10.0, rho1=0.5, u=2, p=1)
        exact = enumerate_exact(prior, ql)
        assert exact.inclusion_probs[0] == pytest.approx(prior.q)

    def test_probabilities_sum_to_one(self):
        ql = random_regression(n=30, p=8, seed=1)
        exact = enumerate_exact(PriorSpec.default(p=8, n=30), ql)
        assert exact.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert exact.models.shape == (256, 8)

    def test_model_index_convention(self):
        ql = random_regression(n=30, p=4, seed=2)
        exact = enumerate_exact(PriorSpec.default(p=4, n=30), ql)
        index = 1 + 4
        np.testing.assert_array_equal(exact.models[index], [True, False, True, False])
        assert exact.prob_of(BinaryModel([1, 0, 1, 0])) == exact.probs[index]

    def test_orthogonal_design_factorizes(self):
        X = np.array([[1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [1.0, -1.0]])
        y = np.array([2.0, 0.5, 1.5, 0.2])
        ql = GaussianRegressionQL(X, y)
        exact = enumerate_exact(PriorSpec(rho0=40.0, rho1=0.5, u=0.5, p=2), ql)
        joint = exact.prob_of(BinaryModel([1, 1]))
        assert joint == pytest.approx(exact.inclusion_probs[0] * exact.inclusion_probs[1], rel=1e-10)

    def test_permutation_invariance(self):
        ql = random_regression(n=25, p=5, seed=6)
        perm = np.array([3, 0, 4, 1, 2])
        permuted = GaussianRegressionQL(ql.X[:, perm], ql.y)
        prior = PriorSpec.default(p=5, n=25)
        a = enumerate_exact(prior, ql).inclusion_probs
        b = enumerate_exact(prior, permuted).inclusion_probs
        np.testing.assert_allclose(b, a[perm], rtol=1e-10)

    def test_cap_excludes_large_models(self):
        ql = random_regression(n=30, p=4, seed=2)
        exact = enumerate_exact(PriorSpec(rho0=120.0, rho1=0.3, u=2, p=4, cap=2), ql)
        assert np.all(exact.probs[exact.models.sum(axis=1) > 2] == 0.0)

    def test_refuses_large_p(self):
        ql = GaussianRegressionQL(np.ones((3, 21)), np.ones(3))
        with pytest.raises(DiagnosticsError, match="p <= 20"):
            enumerate_exact(PriorSpec.default(p=21, n=3), ql)

    def test_flat_slab_refused(self):
        ql = random_regression()
        with pytest.raises(DiagnosticsError, match="proper slab"):
            enumerate_exact(PriorSpec(rho0=10.0, rho1=0.0, u=2, p=3), ql)


# ============================================================================
# Selection report and summaries
# ============================================================================


class TestSelectionReport:
    """Test model-selection metrics."""

    def test_all_samples_equal_truth(self):
        truth = BinaryModel([1, 0, 1])
        report = selection_report(make_trace(np.tile(truth.bits, (5, 1))), truth)
        assert report.prob_true_model == 1.0
        assert report.fdr == 0.0 and report.fnr == 0.0
        assert report.mode_model == truth

    def test_empty_selection(self):
        report = selection_report(make_trace(np.zeros((4, 3))), BinaryModel.zeros(3))
        assert report.fdr == 0.0
        assert report.fnr == 0.0
        assert report.prob_true_model == 1.0

    def test_hand_counted(self):
        deltas = [
            [1, 1, 0, 0],
            [1, 1, 0, 0],
            [1, 0, 1, 0],
            [1, 1, 1, 0],
        ]
        truth = BinaryModel([1, 0, 0, 1])
        report = selection_report(make_trace(deltas), truth)
        np.testing.assert_allclose(report.inclusion_probs, [1.0, 0.75, 0.5, 0.0])
        assert report.median_model == BinaryModel([1, 1, 0, 0])
        assert report.mode_model == BinaryModel([1, 1, 0, 0])
        assert report.prob_true_model == 0.0
        assert report.fdr == pytest.approx(0.5)
        assert report.fnr == pytest.approx(0.5)
        assert report.median_model_size == 2.0
        assert report.to_dict()["median_model"] == [0, 1]

    def test_length_mismatch(self):
        with pytest.raises(DiagnosticsError, match="length"):
            selection_report(make_trace(np.zeros((2, 3))), BinaryModel.zeros(4))


class TestSummaries:
    """Test posterior summaries of traces and variational fits."""

    def test_summarize_trace(self):
        deltas = [[1, 0], [1, 0], [0, 0], [1, 0]]
        thetas = [[2.0, 5.0], [4.0, 5.0], [9.0, 5.0], [3.0, 5.0]]
        summary = summarize_trace(make_trace(deltas, thetas))
        np.testing.assert_allclose(summary.inclusion_probs, [0.75, 0.0])
        assert summary.means[0] == pytest.approx(9.0 / 4)
        assert summary.cond_means[0] == pytest.approx(3.0)
        assert summary.cond_variances[0] == pytest.approx(2.0 / 3)
        assert math.isnan(summary.cond_means[1])
        assert summary.trace is None
        document = summary.to_dict()
        assert document["cond_means"][1] is None
        assert document["method"] == "mcmc"

    def test_keep_trace(self):
        trace = make_trace([[1, 0]])
        assert summarize_trace(trace, keep_trace=True).trace is trace

    def test_summarize_variational(self):
        state = VariationalState(
            alpha=np.array([0.5, 0.9]),
            mu=np.array([2.0, -1.0]),
            cov_diag=np.array([0.1, 0.2]),
            cov_block=np.zeros((0, 0)),
            support=np.zeros(0, dtype=int),
            iterations=4,
            converged=True,
            elbo_trace=[-3.5],
        )
        summary = summarize_variational(state, "skinny")
        np.testing.assert_allclose(summary.means, [1.0, -0.9])
        np.testing.assert_allclose(summary.variances, [0.5 * 4.1 - 1.0, 0.9 * 1.2 - 0.81])
        assert summary.diagnostics["elbo"] == -3.5
        assert summary.diagnostics["iterations"] == 4.0


# ============================================================================
# Desk-scale run
# ============================================================================


@pytest.mark.slow
def test_posterior_close_to_limit_at_scale():
    """p=1000, n=500, ten strong signals: small KL to the limit and matching marginal moments."""
    cfg = ExperimentConfig(p=1000, n=500, psi=0.0, s_star=10, n_iter=5000, seed=0)
    X, y, theta_star = simulate_regression(cfg, make_rng(cfg.seed))
    ql = GaussianRegressionQL(X, y, sigma2=cfg.sigma2)
    prior = cfg.prior()
    trace = run_chain(prior, ql, lasso_init(ql, cfg.lasso_lambda), cfg.sampler_config())

    delta_star = BinaryModel(theta_star != 0)
    limit = bvm_limit_from_fit(ql, delta_star, prior)
    estimate = kl_to_bvm(trace, limit, prior, ql, seed=1)
    assert estimate.value < 0.5
    assert math.isfinite(estimate.stderr) and estimate.stderr >= 0.0

    active = delta_star.active
    samples = trace.sparsified_thetas()[:, active]
    sd = np.sqrt(np.diag(limit.covariance()))
    assert np.all(np.abs(samples.mean(axis=0) - limit.theta_hat) < 3 * sd)
    np.testing.assert_allclose(samples.var(axis=0), np.diag(limit.covariance()), rtol=0.15)
