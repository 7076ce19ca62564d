"""Tests for sparse principal component estimation."""

import math

import numpy as np
import pytest

from quasi_slab.core.config import ExperimentConfig
from quasi_slab.core.model import PriorSpec
from quasi_slab.core.sampler import SamplerConfig, make_rng
from quasi_slab.core.simulate import simulate_spiked
from quasi_slab.core.spca import SpcaError, fit_spca, pc_response, projection_error


# ============================================================================
# Principal-component response
# ============================================================================


class TestPcResponse:
    """Test the SVD-based regression response."""

    def test_rank_one(self):
        u = np.array([1.0, -2.0, 0.5, 3.0])
        v = np.array([0.0, 3.0, -4.0])
        resp = pc_response(np.outer(u, v))
        np.testing.assert_allclose(np.abs(resp.v1), np.abs(v) / 5.0, atol=1e-12)
        assert resp.v1[np.argmax(np.abs(resp.v1))] > 0
        assert np.linalg.norm(resp.y) == pytest.approx(np.linalg.norm(u) * 5.0)
        assert abs(resp.y @ u) == pytest.approx(np.linalg.norm(resp.y) * np.linalg.norm(u))
        assert not resp.tied

    def test_orthogonal_columns(self):
        """V₁ is the axis of the longest column."""
        X = np.zeros((4, 3))
        X[0, 0], X[1, 1], X[2, 2] = 1.0, 3.0, 2.0
        resp = pc_response(X)
        np.testing.assert_allclose(resp.v1, [0.0, 1.0, 0.0], atol=1e-12)

    def test_xv1_equals_y(self):
        X = np.random.default_rng(0).standard_normal((20, 10))
        resp = pc_response(X)
        np.testing.assert_allclose(X @ resp.v1, resp.y, atol=1e-8)

    def test_tied_singular_values(self):
        resp = pc_response(np.eye(3))
        assert resp.tied

    def test_zero_matrix(self):
        with pytest.raises(SpcaError, match="identically zero"):
            pc_response(np.zeros((3, 2)))

    def test_vector_rejected(self):
        with pytest.raises(SpcaError, match="2-d"):
            pc_response(np.ones(3))


# ============================================================================
# Projection error
# ============================================================================


class TestProjectionError:
    """Test the distance between rank-one projectors."""

    THETA = np.array([0.5, 0.5, 0.0, 0.5, 0.5])

    def test_identical(self):
        assert projection_error(self.THETA, self.THETA) == pytest.approx(0.0, abs=1e-7)

    def test_sign_invariant(self):
        assert projection_error(-self.THETA, self.THETA) == pytest.approx(0.0, abs=1e-7)

    def test_orthogonal(self):
        other = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
        assert projection_error(other, self.THETA) == pytest.approx(1.0)

    def test_scale_invariant(self):
        angle = np.array([1.0, 1.0])
        assert projection_error(3 * angle, [1.0, 0.0]) == pytest.approx(math.sqrt(0.5))

    def test_matches_operator_norm(self):
        rng = np.random.default_rng(3)
        a, b = rng.standard_normal(4), rng.standard_normal(4)
        a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
        diff = np.outer(a, a) - np.outer(b, b)
        assert projection_error(a, b) == pytest.approx(np.linalg.norm(diff, 2))

    def test_zero_vector(self):
        with pytest.raises(SpcaError, match="zero vector"):
            projection_error(np.zeros(5), self.THETA)


# ============================================================================
# fit_spca
# ============================================================================


class TestFitSpca:
    """Test the capped sampler on spiked data."""

    def test_requires_cap(self):
        X = np.random.default_rng(0).standard_normal((10, 6))
        with pytest.raises(SpcaError, match="cap"):
            fit_spca(X, PriorSpec.default(p=6, n=10), config=SamplerConfig(n_iter=5))

    def test_dimension_mismatch(self):
        X = np.random.default_rng(0).standard_normal((10, 6))
        with pytest.raises(SpcaError, match="prior expects p=7"):
            fit_spca(X, PriorSpec.default(p=7, n=10, cap=2), config=SamplerConfig(n_iter=5))

    def test_noiseless_rank_one_stays_on_support(self):
        rng = np.random.default_rng(1)
        theta_star = np.zeros(20)
        theta_star[[2, 5, 11, 17]] = 0.5
        X = np.outer(rng.standard_normal(50), theta_star)
        prior = PriorSpec.default(p=20, n=50, cap=4)
        fit = fit_spca(X, prior, config=SamplerConfig(n_iter=200, burn_in=50))
        off = np.ones(20, dtype=bool)
        off[[2, 5, 11, 17]] = False
        assert np.all(fit.inclusion_probs[off] < 0.05)
        assert fit.trace.stored_model_sizes().min() >= 1

    def test_spiked_model(self):
        """Inclusion mass sits on the spike support and directions are unit, aligned."""
        rng = np.random.default_rng(2)
        p, n, vartheta = 50, 500, 20.0
        theta_star = np.zeros(p)
        theta_star[[0, 1, 3, 4]] = 0.5
        X = rng.standard_normal((n, p)) + math.sqrt(vartheta) * np.outer(rng.standard_normal(n), theta_star)
        prior = PriorSpec.default(p=p, n=n, cap=10)
        fit = fit_spca(X, prior, config=SamplerConfig(n_iter=300, burn_in=100, seed=5), theta_star=theta_star)

        assert np.all(fit.inclusion_probs[[0, 1, 3, 4]] > 0.9)
        assert fit.trace.model_sizes.max() <= 10
        np.testing.assert_allclose(np.linalg.norm(fit.trace.theta_samples, axis=1), 1.0)
        assert np.all(fit.trace.theta_samples @ fit.v1 >= 0)
        assert fit.mean_direction() @ fit.v1 > 0
        assert fit.sign == 1
        assert fit.mean_projection_error < 0.25
        assert fit.proj_error_samples.shape == (len(fit.trace),)

    def test_without_truth_no_errors(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((30, 8))
        fit = fit_spca(X, PriorSpec.default(p=8, n=30, cap=3), config=SamplerConfig(n_iter=20))
        assert fit.mean_projection_error is None

    def test_theta_star_length_checked(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((30, 8))
        with pytest.raises(SpcaError, match="length 8"):
            fit_spca(X, PriorSpec.default(p=8, n=30, cap=3), config=SamplerConfig(n_iter=5), theta_star=np.ones(3))

    def test_unknown_method(self):
        X = np.random.default_rng(0).standard_normal((10, 6))
        with pytest.raises(SpcaError, match="unknown method 'em'"):
            fit_spca(X, PriorSpec.default(p=6, n=10, cap=2), method="em")


def _spiked(seed, p=50, n=500, vartheta=20.0):
    rng = np.random.default_rng(seed)
    theta_star = np.zeros(p)
    theta_star[[0, 1, 3, 4]] = 0.5
    X = rng.standard_normal((n, p)) + math.sqrt(vartheta) * np.outer(rng.standard_normal(n), theta_star)
    return X, theta_star


class TestFitSpcaVariational:
    """Test the CAVI fits of the principal-component regression."""

    @pytest.mark.parametrize("method", ["skinny", "midsize", "full"])
    def test_recovers_spike(self, method):
        X, theta_star = _spiked(2)
        prior = PriorSpec.default(p=50, n=500, cap=10)
        fit = fit_spca(
            X, prior, config=SamplerConfig(seed=5), theta_star=theta_star,
            method=method, template_size=10, n_draws=500,
        )
        assert fit.method == method
        assert fit.trace is None
        assert fit.state is not None
        assert fit.directions.shape == (500, 50)
        np.testing.assert_allclose(np.linalg.norm(fit.directions, axis=1), 1.0)
        assert np.all(fit.directions @ fit.v1 >= 0)
        np.testing.assert_array_equal(fit.inclusion_probs, fit.state.alpha)
        assert np.all(fit.inclusion_probs[[0, 1, 3, 4]] > 0.9)
        assert fit.mean_projection_error < 0.25
        assert fit.proj_error_samples.shape == (500,)

    def test_template_sizes(self):
        X, _ = _spiked(3)
        prior = PriorSpec.default(p=50, n=500, cap=10)
        skinny = fit_spca(X, prior, method="skinny", n_draws=10)
        midsize = fit_spca(X, prior, method="midsize", template_size=7, n_draws=10)
        full = fit_spca(X, prior, method="full", n_draws=10)
        assert skinny.state.support.size == 0
        assert midsize.state.support.size == 7
        assert full.state.support.size == 50

    def test_draws_follow_seed(self):
        X, _ = _spiked(4)
        prior = PriorSpec.default(p=50, n=500, cap=10)
        a = fit_spca(X, prior, config=SamplerConfig(seed=9), method="skinny", n_draws=50)
        b = fit_spca(X, prior, config=SamplerConfig(seed=9), method="skinny", n_draws=50)
        c = fit_spca(X, prior, config=SamplerConfig(seed=10), method="skinny", n_draws=50)
        np.testing.assert_array_equal(a.directions, b.directions)
        assert not np.array_equal(a.directions, c.directions)

    def test_cap_still_required(self):
        X, _ = _spiked(5)
        with pytest.raises(SpcaError, match="cap"):
            fit_spca(X, PriorSpec.default(p=50, n=500), method="full")


# ============================================================================
# Desk-scale run
# ============================================================================


@pytest.mark.slow
def test_recovery_at_scale():
    """p=1000, ϑ=20, n=1000, cap 20: small projection error and the spike support selected."""
    cfg = ExperimentConfig(mode="spca", p=1000, n=1000, vartheta=20.0, cap=20, n_iter=2000, seed=0)
    X, theta_star = simulate_spiked(cfg, make_rng(cfg.seed))
    fit = fit_spca(X, cfg.prior(), sigma2=cfg.sigma2, config=cfg.sampler_config(), theta_star=theta_star)
    assert fit.mean_projection_error < 0.3
    assert np.all(fit.inclusion_probs[[0, 1, 3, 4]] > 0.9)
    assert fit.trace.model_sizes.max() <= 20
