"""Multivariate value-at-risk style comparison measures.

For a discrete random vector X of losses (larger is worse) and level p:

* ``p_efficient_points`` computes the minimal points of the upper level set
  {v : F(v) >= p} of the joint cdf, restricted to the coordinatewise grid of
  realized values, where every minimal point of the full set must live.
* ``mavar`` is the conditional expectation of w'X given that X is dominated
  by some p-efficient point (the multivariate average value at risk).
* ``vmavar_scalarized`` minimizes c'v + (1/p) E[c'(X - v)_+] over vectors v
  satisfying the chance constraint F(v) >= 1 - p, for a tail level p.

Minimality on the candidate grid is checked one coordinate at a time:
stepping any single coordinate down to its grid predecessor must leave the
level set.  For a cdf on the grid this is equivalent to full minimality,
because F is monotone in each coordinate separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import DiscreteVectorDistribution

LEVEL_TOL = 1e-12
GRID_LIMIT = 20_000_000


class DegenerateEventError(ValueError):
    """Conditioning event has probability zero."""


def _grid_cdf(dist: DiscreteVectorDistribution):
    """Per-axis sorted unique values and the joint cdf on their product grid."""
    axes = [np.unique(dist.values[:, j]) for j in range(dist.dim)]
    shape = tuple(len(a) for a in axes)
    if int(np.prod([float(s) for s in shape])) > GRID_LIMIT:
        raise ValueError("candidate grid is too large to enumerate")
    cdf = np.zeros(shape)
    for x, pr in zip(dist.values, dist.probs):
        idx = tuple(np.searchsorted(axes[j], x[j]) for j in range(dist.dim))
        cdf[idx] += pr
    # accumulate along each axis to turn point masses into F(v) = P(X <= v)
    for j in range(dist.dim):
        np.cumsum(cdf, axis=j, out=cdf)
    return axes, cdf


def _minimal_on_grid(axes, cdf, level: float) -> np.ndarray:
    """Lexicographically sorted minimal grid points v with cdf(v) >= level."""
    feasible = cdf >= level - LEVEL_TOL
    minimal = feasible.copy()
    for j in range(len(axes)):
        prev = np.zeros_like(feasible)
        src = [slice(None)] * feasible.ndim
        dst = [slice(None)] * feasible.ndim
        src[j] = slice(None, -1)
        dst[j] = slice(1, None)
        prev[tuple(dst)] = feasible[tuple(src)]
        minimal &= ~prev
    idx = np.argwhere(minimal)
    points = np.column_stack([axes[j][idx[:, j]] for j in range(len(axes))])
    order = np.lexsort(points.T[::-1])
    return points[order]


def p_efficient_points(dist: DiscreteVectorDistribution, p: float) -> np.ndarray:
    """Minimal points of {v : P(X <= v) >= p}, as an (n_points, dim) array."""
    if not 0.0 < p <= 1.0:
        raise ValueError("level p must lie in (0, 1]")
    axes, cdf = _grid_cdf(dist)
    return _minimal_on_grid(axes, cdf, p)


def mavar(dist: DiscreteVectorDistribution, p: float, weights) -> float:
    """E[w'X | X >= v for some p-efficient point v]."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (dist.dim,):
        raise ValueError(f"weights must have length {dist.dim}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be nonnegative and finite")
    points = p_efficient_points(dist, p)
    # scenario belongs to the event iff some efficient point is dominated
    member = (dist.values[:, None, :] >= points[None, :, :] - 0.0).all(axis=2).any(axis=1)
    mass = float(dist.probs[member].sum())
    if mass <= 0.0:
        raise DegenerateEventError(f"conditioning event at level {p} has probability zero")
    scalar = dist.values @ w
    return float((dist.probs[member] * scalar[member]).sum() / mass)


@dataclass(frozen=True)
class VmavarResult:
    value: float
    minimizer: np.ndarray


def vmavar_scalarized(dist: DiscreteVectorDistribution, p: float, scalarization) -> VmavarResult:
    """min c'v + (1/p) E[c'(X - v)_+] over grid points v with F(v) >= 1 - p.

    ``p`` is a tail level in (0, 1); the chance constraint holds at 1 - p.
    The minimum over the full feasible set is attained on the candidate
    grid; ties go to the lexicographically smallest minimizer.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("tail level p must lie in (0, 1)")
    c = np.asarray(scalarization, dtype=float)
    if c.shape != (dist.dim,):
        raise ValueError(f"scalarization must have length {dist.dim}")
    if np.any(c < 0) or not np.all(np.isfinite(c)):
        raise ValueError("scalarization must be nonnegative and finite")

    axes, cdf = _grid_cdf(dist)
    feasible = cdf >= (1.0 - p) - LEVEL_TOL
    idx = np.argwhere(feasible)
    if idx.size == 0:
        raise DegenerateEventError(f"no grid point satisfies the level {1.0 - p}")
    candidates = np.column_stack([axes[j][idx[:, j]] for j in range(dist.dim)])

    def objective(points: np.ndarray) -> np.ndarray:
        vals = points @ c
        # E[c'(X - v)_+] accumulated scenario by scenario to bound memory
        for x, pr in zip(dist.values, dist.probs):
            excess = np.clip(x[None, :] - points, 0.0, None)
            vals = vals + (pr / p) * (excess @ c)
        return vals

    obj = objective(candidates)
    best = float(obj.min())
    ties = candidates[np.abs(obj - best) <= 1e-12 * max(1.0, abs(best))]
    order = np.lexsort(ties.T[::-1])
    minimizer = ties[order[0]]

    # the minimum must also be visible from the level-set frontier
    frontier = _minimal_on_grid(axes, cdf, 1.0 - p)
    front_best = float(objective(frontier).min())
    if not np.isclose(best, front_best, rtol=0, atol=1e-9 * max(1.0, abs(best))):
        raise RuntimeError("frontier scan disagrees with the grid scan")
    return VmavarResult(best, minimizer)
