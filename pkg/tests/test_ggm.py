"""Tests for neighbourhood-selection graph estimation."""

import numpy as np
import pytest

from quasi_slab.core.ggm import (
    FitSettings,
    GgmError,
    combine_edges,
    fit_ggm,
    fit_regression,
    node_regression,
    split_node,
)
from quasi_slab.core.model import GaussianRegressionQL, PriorSpec
from quasi_slab.core.sampler import SamplerConfig


def chain_graph_data(width=6, n=500, strength=0.4, seed=0):
    """Samples from a Gaussian with tridiagonal precision (unit diagonal)."""
    precision = np.eye(width)
    for j in range(width - 1):
        precision[j, j + 1] = precision[j + 1, j] = -strength
    rng = np.random.default_rng(seed)
    Z = rng.multivariate_normal(np.zeros(width), np.linalg.inv(precision), size=n)
    return Z, precision


@pytest.fixture
def chain():
    return chain_graph_data()


@pytest.fixture
def settings():
    return FitSettings(sampler=SamplerConfig(n_iter=300, burn_in=100, seed=4))


# ============================================================================
# Regression fits
# ============================================================================


class TestFitRegression:
    """Test the method dispatch shared by all node regressions."""

    @pytest.fixture
    def ql(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((80, 6))
        y = X @ np.array([1.5, 0.0, -1.0, 0.0, 0.0, 0.0]) + rng.standard_normal(80)
        return GaussianRegressionQL(X, y)

    @pytest.mark.parametrize("method", ["mcmc", "skinny", "midsize", "full"])
    def test_methods_agree_on_support(self, ql, settings, method):
        prior = settings.prior_for(6, 80)
        summary = fit_regression(ql, prior, settings, method)
        assert summary.method == method
        selected = np.flatnonzero(summary.inclusion_probs > 0.5)
        assert selected.tolist() == [0, 2]

    def test_unknown_method(self, ql, settings):
        with pytest.raises(GgmError, match="unknown method"):
            fit_regression(ql, settings.prior_for(6, 80), settings, "gibbs")

    def test_keep_trace(self, ql):
        settings = FitSettings(sampler=SamplerConfig(n_iter=20), keep_trace=True)
        summary = fit_regression(ql, settings.prior_for(6, 80), settings, "mcmc")
        assert summary.trace is not None and len(summary.trace) == 20

    def test_mcmc_under_cap(self, ql):
        settings = FitSettings(sampler=SamplerConfig(n_iter=50), cap=1, keep_trace=True)
        summary = fit_regression(ql, settings.prior_for(6, 80), settings, "mcmc")
        assert summary.trace.model_sizes.max() <= 1

    def test_default_prior(self):
        prior = FitSettings().prior_for(p=50, n=200)
        assert prior.rho0 == 800
        assert prior.rho1 == pytest.approx(np.sqrt(np.log(50) / 200))


# ============================================================================
# Node regressions
# ============================================================================


class TestNodeRegression:
    """Test single-node regressions."""

    def test_split_node(self):
        Z = np.arange(12.0).reshape(3, 4)
        y, X, others = split_node(Z, 2)
        np.testing.assert_array_equal(y, Z[:, 2])
        np.testing.assert_array_equal(X, Z[:, [0, 1, 3]])
        assert others.tolist() == [0, 1, 3]

    def test_neighbours_of_chain_node(self, chain, settings):
        Z, _ = chain
        summary = node_regression(Z, 2, settings=settings)
        # predictors of node 2 are columns 0, 1, 3, 4, 5
        assert np.flatnonzero(summary.inclusion_probs > 0.5).tolist() == [1, 2]

    def test_constant_column(self, chain, settings):
        Z, _ = chain
        Z = Z.copy()
        Z[:, 3] = 1.0
        with pytest.raises(GgmError, match="constant"):
            node_regression(Z, 3, settings=settings)

    def test_index_out_of_range(self, chain, settings):
        Z, _ = chain
        with pytest.raises(GgmError, match="out of range"):
            node_regression(Z, 6, settings=settings)

    def test_too_few_observations(self):
        with pytest.raises(GgmError, match="at least 2"):
            node_regression(np.ones((1, 3)), 0)

    def test_prior_dimension_checked(self, chain, settings):
        Z, _ = chain
        with pytest.raises(GgmError, match="prior has p=4"):
            node_regression(Z, 0, prior=PriorSpec.default(p=4, n=500), settings=settings)

    def test_reproducible(self, chain):
        """Same master seed and node give the same chain."""
        Z, _ = chain
        settings = FitSettings(sampler=SamplerConfig(n_iter=30, seed=9), keep_trace=True)
        a = node_regression(Z, 0, settings=settings)
        b = node_regression(Z, 0, settings=settings)
        np.testing.assert_array_equal(a.trace.theta_samples, b.trace.theta_samples)


# ============================================================================
# Graph assembly
# ============================================================================


class TestCombineEdges:
    """Test symmetrization of directed inclusion probabilities."""

    DIRECTED = np.array([[0.0, 0.9, 0.1], [0.3, 0.0, 0.6], [0.2, 0.8, 0.0]])

    @pytest.mark.parametrize("rule", ["max", "min", "mean"])
    def test_symmetric_zero_diagonal(self, rule):
        edges = combine_edges(self.DIRECTED, rule)
        np.testing.assert_array_equal(edges, edges.T)
        np.testing.assert_array_equal(np.diag(edges), 0.0)
        assert np.all((edges >= 0) & (edges <= 1))

    def test_rules(self):
        assert combine_edges(self.DIRECTED, "max")[0, 1] == 0.9
        assert combine_edges(self.DIRECTED, "min")[0, 1] == 0.3
        assert combine_edges(self.DIRECTED, "mean")[0, 1] == pytest.approx(0.6)

    def test_max_bounds_directed(self):
        edges = combine_edges(self.DIRECTED, "max")
        off = ~np.eye(3, dtype=bool)
        assert np.all(edges[off] >= self.DIRECTED[off])

    def test_unknown_rule(self):
        with pytest.raises(GgmError, match="unknown edge rule"):
            combine_edges(self.DIRECTED, "or")


class TestFitGgm:
    """Test whole-graph estimation."""

    def test_recovers_chain(self, chain, settings):
        Z, precision = chain
        fit = fit_ggm(Z, settings=settings)
        true_edges = [(j, j + 1) for j in range(5)]
        assert fit.edges(0.5) == true_edges
        assert fit.edge_probs.shape == (6, 6)
        assert len(fit.node_fits) == 6

    def test_precision_estimate(self, chain, settings):
        """Off-diagonal entries estimate −ϑ_jj θ^(j) with unit diagonal."""
        Z, precision = chain
        fit = fit_ggm(Z, settings=settings, method="skinny")
        est = fit.precision_estimate
        np.testing.assert_array_equal(est, est.T)
        np.testing.assert_array_equal(np.diag(est), 1.0)
        np.testing.assert_allclose(est, precision, atol=0.15)

    def test_supplied_diagonal(self, chain, settings):
        Z, _ = chain
        diag = np.linspace(1.0, 2.0, 6)
        fit = fit_ggm(Z, settings=settings, method="skinny", diag_precision=diag)
        np.testing.assert_allclose(np.diag(fit.precision_estimate), diag)
        with pytest.raises(GgmError, match="length 6"):
            fit_ggm(Z, settings=settings, method="skinny", diag_precision=np.ones(3))

    def test_independent_variables_give_empty_graph(self, settings):
        rng = np.random.default_rng(3)
        Z = rng.standard_normal((600, 5))
        fit = fit_ggm(Z, settings=settings)
        assert fit.edges(0.5) == []
        assert np.all(fit.edge_probs < 0.5)

    def test_workers_do_not_change_output(self, chain):
        Z, _ = chain
        settings = FitSettings(sampler=SamplerConfig(n_iter=60, seed=2))
        serial = fit_ggm(Z, settings=settings, workers=1)
        parallel = fit_ggm(Z, settings=settings, workers=3)
        np.testing.assert_array_equal(serial.edge_probs, parallel.edge_probs)
        np.testing.assert_array_equal(serial.precision_estimate, parallel.precision_estimate)

    def test_relabeling_permutes_edges(self, chain):
        Z, _ = chain
        perm = np.array([4, 2, 0, 5, 1, 3])
        settings = FitSettings(cavi_tol=1e-12, cavi_max_iter=500)
        a = fit_ggm(Z, settings=settings, method="skinny").edge_probs
        b = fit_ggm(Z[:, perm], settings=settings, method="skinny").edge_probs
        np.testing.assert_allclose(b, a[np.ix_(perm, perm)], atol=1e-4)

    def test_node_failure_names_node(self, chain, settings):
        Z, _ = chain
        Z = Z.copy()
        Z[:, 4] = 0.0
        with pytest.raises(GgmError, match="node 4 failed"):
            fit_ggm(Z, settings=settings, method="skinny")

    def test_unknown_edge_rule(self, chain, settings):
        Z, _ = chain
        with pytest.raises(GgmError, match="unknown edge rule"):
            fit_ggm(Z, settings=settings, edge_rule="or")
