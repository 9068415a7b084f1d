"""Systemic risk constructions on random vectors.

Covers the max-scalarization measure, the aggregation measure built from
individual risk profiles, the axioms A1-A4 they inherit, and the ordering
between scalarized and aggregated values.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sysrisk import (AggregationWeights, DiscreteScalarDistribution,
                     DiscreteVectorDistribution, RiskSpec, ScalarizationSet,
                     evaluate_risk, individual_risk_profile, scalarize_max,
                     systemic_risk_aggregated, systemic_risk_linear)

seeds = st.integers(min_value=0, max_value=10_000)


def random_vector_dist(rng, max_dim=4, max_scen=8):
    m = int(rng.integers(1, max_dim + 1))
    s = int(rng.integers(2, max_scen + 1))
    values = rng.normal(0.0, 2.0, (s, m))
    probs = rng.dirichlet(np.ones(s))
    return DiscreteVectorDistribution(values, probs)


def random_scalarizations(rng, dim, max_count=5):
    count = int(rng.integers(1, max_count + 1))
    raw = rng.dirichlet(np.ones(dim), size=count)
    return ScalarizationSet(raw)


def random_spec(rng):
    roll = int(rng.integers(0, 4))
    if roll == 0:
        return RiskSpec("Expectation")
    if roll == 1:
        return RiskSpec("AVaR", alpha=float(rng.uniform(0.1, 1.0)))
    if roll == 2:
        return RiskSpec("MeanSemideviation", order=float(rng.choice([1.0, 2.0])),
                        kappa=float(rng.uniform(0.0, 1.0)))
    return RiskSpec("MeanAvarMix", alpha=float(rng.uniform(0.1, 1.0)),
                    kappa=float(rng.uniform(0.0, 1.0)))


TWO_ATOMS = DiscreteVectorDistribution([[1.0, 3.0], [3.0, 1.0]], [0.5, 0.5])


class TestScalarizeMax:
    def test_unit_vectors_take_componentwise_max(self):
        s = ScalarizationSet([[1.0, 0.0], [0.0, 1.0]])
        dist = scalarize_max(TWO_ATOMS, s)
        assert np.allclose(dist.values, [3.0, 3.0])
        assert np.allclose(dist.probs, [0.5, 0.5])

    def test_singleton_is_plain_scalarization(self):
        s = ScalarizationSet([[0.5, 0.5]])
        dist = scalarize_max(TWO_ATOMS, s)
        assert np.allclose(dist.values, [2.0, 2.0])

    def test_constant_vector(self):
        a = np.array([4.0, -1.0, 2.5])
        c = np.array([0.2, 0.3, 0.5])
        dist = DiscreteVectorDistribution([a], [1.0])
        out = scalarize_max(dist, ScalarizationSet([c]))
        assert out.values[0] == pytest.approx(float(c @ a), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            scalarize_max(TWO_ATOMS, ScalarizationSet([[1.0, 0.0, 0.0]]))

    def test_weights_must_be_a_simplex(self):
        with pytest.raises(ValueError):
            ScalarizationSet([[0.5, 0.6]])
        with pytest.raises(ValueError):
            ScalarizationSet([[-0.1, 1.1]])
        with pytest.raises(ValueError):
            ScalarizationSet(np.zeros((0, 2)))


class TestLinearSystemicRisk:
    def test_expectation_of_max(self):
        s = ScalarizationSet([[1.0, 0.0], [0.0, 1.0]])
        val = systemic_risk_linear(RiskSpec("Expectation"), TWO_ATOMS, s)
        assert val == pytest.approx(3.0, abs=1e-12)

    def test_avar_of_max(self):
        s = ScalarizationSet([[1.0, 0.0], [0.0, 1.0]])
        val = systemic_risk_linear(RiskSpec("AVaR", alpha=0.5), TWO_ATOMS, s)
        assert val == pytest.approx(3.0, abs=1e-12)

    @given(seed=seeds)
    @settings(max_examples=150, deadline=None)
    def test_translation_by_the_ones_vector(self, seed):
        rng = np.random.default_rng(seed)
        dist = random_vector_dist(rng)
        scal = random_scalarizations(rng, dist.dim)
        spec = random_spec(rng)
        a = float(rng.uniform(-2.0, 2.0))
        base = systemic_risk_linear(spec, dist, scal)
        shifted = systemic_risk_linear(
            spec, DiscreteVectorDistribution(dist.values + a, dist.probs), scal)
        ones_risk = systemic_risk_linear(
            spec, DiscreteVectorDistribution(np.ones_like(dist.values), dist.probs), scal)
        assert ones_risk == pytest.approx(1.0, abs=1e-9)
        assert shifted == pytest.approx(base + a * ones_risk, abs=1e-9)

    def test_growing_the_set_grows_the_risk(self):
        rng = np.random.default_rng(41)
        for _ in range(50):
            dist = random_vector_dist(rng, max_dim=3)
            spec = random_spec(rng)
            small = rng.dirichlet(np.ones(dist.dim), size=2)
            extra = rng.dirichlet(np.ones(dist.dim), size=2)
            lo = systemic_risk_linear(spec, dist, ScalarizationSet(small))
            hi = systemic_risk_linear(
                spec, dist, ScalarizationSet(np.vstack([small, extra])))
            assert hi >= lo - 1e-9


class TestAggregatedSystemicRisk:
    def test_profile_of_expectations(self):
        weights = AggregationWeights([0.5, 0.5])
        prof = individual_risk_profile(RiskSpec("Expectation"), TWO_ATOMS, weights)
        assert np.allclose(prof.values, [2.0, 2.0])
        assert np.allclose(prof.probs, [0.5, 0.5])

    def test_profile_of_constant_vector(self):
        dist = DiscreteVectorDistribution([[1.0, 3.0]], [1.0])
        prof = individual_risk_profile(RiskSpec("AVaR", alpha=0.4), dist,
                                       AggregationWeights([0.3, 0.7]))
        assert np.allclose(prof.values, [1.0, 3.0])
        assert np.allclose(prof.probs, [0.3, 0.7])

    def test_single_component_is_single_atom(self):
        dist = DiscreteVectorDistribution([[1.0], [5.0]], [0.5, 0.5])
        prof = individual_risk_profile(RiskSpec("AVaR", alpha=0.5), dist,
                                       AggregationWeights([1.0]))
        assert len(prof) == 1
        assert prof.values[0] == pytest.approx(5.0, abs=1e-12)

    def test_per_component_specs(self):
        specs = [RiskSpec("Expectation"), RiskSpec("AVaR", alpha=0.5)]
        prof = individual_risk_profile(specs, TWO_ATOMS, AggregationWeights([0.5, 0.5]))
        assert np.allclose(prof.values, [2.0, 3.0])
        with pytest.raises(ValueError):
            individual_risk_profile([RiskSpec("Expectation")], TWO_ATOMS,
                                    AggregationWeights([0.5, 0.5]))

    def test_avar_outer_on_profile(self):
        # profile of AVaR_0.5 margins is the two-atom (3, 3); any outer kind
        # built on it evaluates on atoms (rho_1, rho_2) weighted by c
        weights = AggregationWeights([0.5, 0.5])
        inner = RiskSpec("AVaR", alpha=0.5)
        outer_avar = RiskSpec("MeanAvarMix", alpha=0.5, kappa=1.0)
        val = systemic_risk_aggregated(outer_avar, inner, TWO_ATOMS, weights)
        assert val == pytest.approx(3.0, abs=1e-12)
        outer_mean = RiskSpec("MeanAvarMix", alpha=0.5, kappa=0.0)
        val = systemic_risk_aggregated(outer_mean, inner, TWO_ATOMS, weights)
        assert val == pytest.approx(3.0, abs=1e-12)

    def test_semideviation_outer(self):
        # expectation margins give atoms (2, 2); on the degenerate profile the
        # semideviation vanishes for every kappa
        weights = AggregationWeights([0.5, 0.5])
        outer = RiskSpec("MeanSemideviation", order=1.0, kappa=1.0)
        val = systemic_risk_aggregated(outer, RiskSpec("Expectation"),
                                       TWO_ATOMS, weights)
        assert val == pytest.approx(2.0, abs=1e-12)
        # asymmetric atoms (1, 3) with equal mass: mean 2 plus upper
        # semideviation 0.5
        dist = DiscreteVectorDistribution([[1.0, 3.0]], [1.0])
        val = systemic_risk_aggregated(outer, RiskSpec("Expectation"),
                                       dist, weights)
        assert val == pytest.approx(2.5, abs=1e-12)

    def test_weights_must_be_positive(self):
        with pytest.raises(ValueError):
            AggregationWeights([1.0, 0.0])
        with pytest.raises(ValueError):
            AggregationWeights([0.5, 0.4])

    @given(seed=seeds)
    @settings(max_examples=150, deadline=None)
    def test_translation_by_the_ones_vector(self, seed):
        rng = np.random.default_rng(seed)
        dist = random_vector_dist(rng)
        w = rng.dirichlet(np.ones(dist.dim)) + 1e-3
        weights = AggregationWeights(w / w.sum())
        inner = random_spec(rng)
        outer = random_spec(rng)
        a = float(rng.uniform(-2.0, 2.0))
        base = systemic_risk_aggregated(outer, inner, dist, weights)
        shifted = systemic_risk_aggregated(
            outer, inner,
            DiscreteVectorDistribution(dist.values + a, dist.probs), weights)
        assert shifted == pytest.approx(base + a, abs=1e-9)


class TestVectorAxioms:
    """A1 convexity, A2 monotonicity, A3 positive homogeneity, A4
    translation by a multiple of the ones vector, for both constructions."""

    @given(seed=seeds)
    @settings(max_examples=120, deadline=None)
    def test_linear_construction(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(1, 5))
        s = int(rng.integers(2, 9))
        probs = rng.dirichlet(np.ones(s))
        x1 = rng.normal(0.0, 2.0, (s, m))
        x2 = rng.normal(0.0, 2.0, (s, m))
        scal = random_scalarizations(rng, m)
        spec = random_spec(rng)

        def rho(values):
            return systemic_risk_linear(
                spec, DiscreteVectorDistribution(values, probs), scal)

        r1, r2 = rho(x1), rho(x2)
        lam = float(rng.uniform(0.0, 1.0))
        assert rho(lam * x1 + (1 - lam) * x2) <= lam * r1 + (1 - lam) * r2 + 1e-9
        assert rho(x1 + np.abs(rng.normal(0.0, 1.0, (s, m)))) >= r1 - 1e-9
        t = float(rng.uniform(0.1, 3.0))
        assert rho(t * x1) == pytest.approx(t * r1, abs=1e-9 * max(1.0, t * abs(r1)))
        a = float(rng.uniform(-2.0, 2.0))
        assert rho(x1 + a) == pytest.approx(r1 + a * rho(np.ones((s, m))), abs=1e-9)

    @given(seed=seeds)
    @settings(max_examples=120, deadline=None)
    def test_aggregated_construction(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(1, 5))
        s = int(rng.integers(2, 9))
        probs = rng.dirichlet(np.ones(s))
        x1 = rng.normal(0.0, 2.0, (s, m))
        x2 = rng.normal(0.0, 2.0, (s, m))
        w = rng.dirichlet(np.ones(m)) + 1e-3
        weights = AggregationWeights(w / w.sum())
        inner = random_spec(rng)
        outer = random_spec(rng)

        def rho(values):
            return systemic_risk_aggregated(
                outer, inner, DiscreteVectorDistribution(values, probs), weights)

        r1, r2 = rho(x1), rho(x2)
        lam = float(rng.uniform(0.0, 1.0))
        assert rho(lam * x1 + (1 - lam) * x2) <= lam * r1 + (1 - lam) * r2 + 1e-9
        assert rho(x1 + np.abs(rng.normal(0.0, 1.0, (s, m)))) >= r1 - 1e-9
        t = float(rng.uniform(0.1, 3.0))
        assert rho(t * x1) == pytest.approx(t * r1, abs=1e-9 * max(1.0, t * abs(r1)))
        a = float(rng.uniform(-2.0, 2.0))
        assert rho(x1 + a) == pytest.approx(r1 + a * rho(np.ones((s, m))), abs=1e-9)

    def test_law_invariance_under_scenario_permutation(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            m = int(rng.integers(1, 4))
            s = int(rng.integers(2, 7))
            values = rng.normal(0.0, 2.0, (s, m))
            probs = np.full(s, 1.0 / s)
            perm = rng.permutation(s)
            spec = random_spec(rng)
            scal = random_scalarizations(rng, m)
            w = rng.dirichlet(np.ones(m)) + 1e-3
            weights = AggregationWeights(w / w.sum())
            d1 = DiscreteVectorDistribution(values, probs)
            d2 = DiscreteVectorDistribution(values[perm], probs)
            # equal up to float summation order
            a, b = (systemic_risk_linear(spec, d, scal) for d in (d1, d2))
            assert a == pytest.approx(b, rel=1e-12, abs=1e-12)
            a, b = (systemic_risk_aggregated(spec, spec, d, weights)
                    for d in (d1, d2))
            assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


class TestAggregationOrdering:
    """rho[c'X] <= sum_i c_i rho[X_i] <= max_i rho[X_i] for coherent rho and
    simplex weights c."""

    @given(seed=seeds)
    @settings(max_examples=200, deadline=None)
    def test_chain(self, seed):
        rng = np.random.default_rng(seed)
        dist = random_vector_dist(rng)
        spec = random_spec(rng)
        c = rng.dirichlet(np.ones(dist.dim)) + 1e-3
        c = c / c.sum()
        scalarized = systemic_risk_linear(spec, dist, ScalarizationSet([c]))
        per_component = np.array([
            evaluate_risk(spec, dist.margin(i)) for i in range(dist.dim)])
        weighted = float(c @ per_component)
        assert scalarized <= weighted + 1e-9
        assert weighted <= per_component.max() + 1e-9

    def test_chain_via_profile_mean(self):
        rng = np.random.default_rng(77)
        for _ in range(100):
            dist = random_vector_dist(rng)
            spec = random_spec(rng)
            c = rng.dirichlet(np.ones(dist.dim)) + 1e-3
            c = c / c.sum()
            prof = individual_risk_profile(spec, dist, AggregationWeights(c))
            scalarized = systemic_risk_linear(spec, dist, ScalarizationSet([c]))
            assert scalarized <= prof.mean() + 1e-9
            assert prof.mean() <= prof.values.max() + 1e-9
