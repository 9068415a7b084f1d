"""Systemic risk measures for random vectors.

Two constructions over a discrete random vector X with m components:

* linear scalarization:  rho_S[X] = rho[ max_{c in S} c'X ] for a finite set
  S of nonnegative weight vectors summing to one, and
* aggregation:  rho_s[X] = rho0[ profile ] where the profile is the discrete
  scalar distribution that places weight c_i on the individual risk value
  rho_i[X_i].

Both inherit the coherence axioms from the underlying scalar measures.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .distributions import DiscreteScalarDistribution, DiscreteVectorDistribution
from .risk import RiskSpec, evaluate_risk

WEIGHT_TOL = 1e-9


def _clean_weights(w, dim: int, *, positive: bool) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (dim,):
        raise ValueError(f"weight vector must have length {dim}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if positive:
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
    elif np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if abs(total - 1.0) > WEIGHT_TOL:
        raise ValueError(f"weights must sum to one (got {total!r})")
    return w / total


class ScalarizationSet:
    """Finite collection of nonnegative weight vectors, each summing to one."""

    def __init__(self, vectors):
        arr = np.atleast_2d(np.asarray(vectors, dtype=float))
        if arr.size == 0:
            raise ValueError("scalarization set must be nonempty")
        self.vectors = np.stack([_clean_weights(v, arr.shape[1], positive=False)
                                 for v in arr])

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]


class AggregationWeights:
    """Strictly positive weights summing to one; the measure placed on the
    component index when aggregating individual risk values."""

    def __init__(self, weights):
        arr = np.asarray(weights, dtype=float)
        self.weights = _clean_weights(arr, arr.shape[0] if arr.ndim == 1 else -1,
                                      positive=True)

    @property
    def dim(self) -> int:
        return self.weights.size


def scalarize_max(dist: DiscreteVectorDistribution,
                  scalarizations: ScalarizationSet) -> DiscreteScalarDistribution:
    """Distribution of max_{c in S} c'X on the atoms of X."""
    if scalarizations.dim != dist.dim:
        raise ValueError("scalarization dimension does not match the vector")
    values = (dist.values @ scalarizations.vectors.T).max(axis=1)
    return DiscreteScalarDistribution(values, dist.probs)


def systemic_risk_linear(spec: RiskSpec, dist: DiscreteVectorDistribution,
                         scalarizations: ScalarizationSet) -> float:
    return evaluate_risk(spec, scalarize_max(dist, scalarizations))


def individual_risk_profile(specs: RiskSpec | Sequence[RiskSpec],
                            dist: DiscreteVectorDistribution,
                            weights: AggregationWeights) -> DiscreteScalarDistribution:
    """Scalar distribution placing weight c_i on rho_i[X_i]."""
    if weights.dim != dist.dim:
        raise ValueError("weight dimension does not match the vector")
    if isinstance(specs, RiskSpec):
        specs = [specs] * dist.dim
    if len(specs) != dist.dim:
        raise ValueError(f"need one risk spec per component ({dist.dim})")
    values = np.array([evaluate_risk(spec, dist.margin(i))
                       for i, spec in enumerate(specs)])
    return DiscreteScalarDistribution(values, weights.weights)


def systemic_risk_aggregated(outer_spec: RiskSpec,
                             inner_specs: RiskSpec | Sequence[RiskSpec],
                             dist: DiscreteVectorDistribution,
                             weights: AggregationWeights) -> float:
    return evaluate_risk(outer_spec,
                         individual_risk_profile(inner_specs, dist, weights))
