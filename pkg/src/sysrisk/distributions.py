"""Finite discrete distributions of scalar and vector-valued outcomes.

Both classes model a finite probability space: outcome ``s`` occurs with
probability ``probs[s]``.  They are the common currency between the risk
functionals, the comparison measures and the two-stage solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PROB_TOL = 1e-12
RENORM_TOL = 1e-9


def _clean_probs(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probs must be a nonempty 1-d array")
    if np.any(p < 0.0) or not np.all(np.isfinite(p)):
        raise ValueError("probs must be finite and nonnegative")
    total = float(p.sum())
    if abs(total - 1.0) <= PROB_TOL:
        return p
    if abs(total - 1.0) <= RENORM_TOL:
        # silently repair tiny drift from upstream arithmetic
        return p / total
    raise ValueError(f"probs sum to {total!r}, not 1")


@dataclass(frozen=True)
class DiscreteScalarDistribution:
    """A scalar random variable with finitely many equally indexed outcomes."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("values must be a nonempty 1-d array")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        p = _clean_probs(self.probs)
        if v.shape != p.shape:
            raise ValueError("values and probs must have equal length")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return self.values.size

    def mean(self) -> float:
        return float(self.probs @ self.values)


@dataclass(frozen=True)
class DiscreteVectorDistribution:
    """An R^m-valued random vector on a finite probability space.

    ``values`` has shape (S, m): row s is the outcome under scenario s.
    """

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.size == 0:
            raise ValueError("values must be a nonempty (S, m) array")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        p = _clean_probs(self.probs)
        if v.shape[0] != p.shape[0]:
            raise ValueError("values and probs must agree on scenario count")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]

    def margin(self, i: int) -> DiscreteScalarDistribution:
        """The i-th coordinate as a scalar distribution."""
        return DiscreteScalarDistribution(self.values[:, i], self.probs)
