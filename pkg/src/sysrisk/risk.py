"""Coherent risk functionals on finite scalar distributions.

Five measures are supported, identified by ``RiskSpec.kind``:

- ``Expectation``: plain mean.
- ``AVaR``: average value-at-risk at tail level ``alpha``; evaluated through
  the extremal formula ``min_eta eta + E[(Z - eta)_+] / alpha``, whose
  minimum over a finite distribution is attained at an outcome value.
- ``HigherOrder``: ``min_t t + ||(Z - t)_+||_p / alpha`` with the weighted
  p-norm, ``p = order``.
- ``MeanSemideviation``: ``E[Z] + kappa * ||(Z - E[Z])_+||_p``.
- ``MeanAvarMix``: ``(1 - kappa) * E[Z] + kappa * AVaR_alpha[Z]``.

All of them are coherent for the admissible parameter ranges, so every one
has a dual representation over a set of nonnegative unit-mean densities;
``risk_subgradient`` returns a maximizing density.  ``check_axioms`` is a
randomized harness for the four coherence axioms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import DiscreteScalarDistribution

KINDS = ("Expectation", "AVaR", "HigherOrder", "MeanSemideviation", "MeanAvarMix")

GOLDEN_TOL = 1e-10
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class RiskSpec:
    """Parameter bundle selecting one scalar risk measure.

    ``alpha`` is the tail level in (0, 1], ``kappa`` the mixing/semideviation
    weight in [0, 1] and ``order`` the norm exponent (>= 1).  Parameters not
    used by a kind are carried along untouched.
    """

    kind: str
    alpha: float = 1.0
    kappa: float = 0.0
    order: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown risk kind {self.kind!r}; expected one of {KINDS}")
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not (0.0 <= self.kappa <= 1.0):
            raise ValueError(f"kappa must lie in [0, 1], got {self.kappa}")
        if self.order < 1.0:
            raise ValueError(f"order must be >= 1, got {self.order}")

    def to_json(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "kappa": self.kappa, "order": self.order}

    @classmethod
    def from_json(cls, data: dict) -> "RiskSpec":
        if "kind" not in data:
            raise ValueError("risk spec JSON requires a 'kind' field")
        return cls(
            kind=data["kind"],
            alpha=float(data.get("alpha", 1.0)),
            kappa=float(data.get("kappa", 0.0)),
            order=float(data.get("order", 1.0)),
        )

    @classmethod
    def parse(cls, text: str) -> "RiskSpec":
        """Parse the command-line syntax ``kind[:param[:param]]``.

        ``exp`` | ``avar:<alpha>`` | ``msd:<order>:<kappa>`` |
        ``mix:<kappa>:<alpha>`` | ``higher:<alpha>:<order>``
        """
        parts = text.strip().lower().split(":")
        name, args = parts[0], parts[1:]
        try:
            if name in ("exp", "expectation", "mean"):
                return cls("Expectation")
            if name == "avar" and len(args) == 1:
                return cls("AVaR", alpha=float(args[0]))
            if name == "msd" and len(args) == 2:
                return cls("MeanSemideviation", order=float(args[0]), kappa=float(args[1]))
            if name == "mix" and len(args) == 2:
                return cls("MeanAvarMix", kappa=float(args[0]), alpha=float(args[1]))
            if name == "higher" and len(args) == 2:
                return cls("HigherOrder", alpha=float(args[0]), order=float(args[1]))
        except ValueError as exc:
            if "risk" in str(exc) or "must" in str(exc):
                raise
            raise ValueError(f"bad numeric parameter in risk spec {text!r}") from exc
        raise ValueError(
            f"cannot parse risk spec {text!r}; expected exp, avar:A, msd:P:K, mix:K:A or higher:A:P"
        )


def _weighted_pnorm(u: np.ndarray, probs: np.ndarray, p: float) -> float:
    if p == 1.0:
        return float(probs @ u)
    return float((probs @ u**p) ** (1.0 / p))


def _avar_with_quantile(values: np.ndarray, probs: np.ndarray, alpha: float):
    """Exact AVaR together with the smallest minimizing shift (left quantile)."""
    etas = np.unique(values)
    excess = np.clip(values[None, :] - etas[:, None], 0.0, None)
    phi = etas + (excess @ probs) / alpha
    k = int(np.argmin(phi))
    return float(phi[k]), float(etas[k])


def _golden_min(fun, lo: float, hi: float, tol: float = GOLDEN_TOL):
    """Golden-section minimizer of a unimodal function on [lo, hi]."""
    a, b = float(lo), float(hi)
    if b - a <= tol:
        t = 0.5 * (a + b)
        return t, fun(t)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    while (b - a) > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fun(d)
    t = c if fc <= fd else d
    return t, min(fc, fd)


def _higher_order_bracket(values: np.ndarray, probs: np.ndarray, alpha: float, p: float):
    """Bracket guaranteed to contain the minimizing shift of the higher-order
    objective.  For large alpha the minimizer can lie below min(Z), where the
    derivative bound r(t) >= ((lo - t) / (hi - t))**(p-1) pins it down."""
    lo = float(values.min())
    hi = float(values.max())
    if alpha >= 1.0 or p <= 1.0 or hi == lo:
        return lo, hi
    beta = alpha ** (1.0 / (p - 1.0))
    t_low = (lo - beta * hi) / (1.0 - beta)
    return min(lo, t_low), hi


def _higher_order_value(values: np.ndarray, probs: np.ndarray, alpha: float, p: float):
    lo, hi = _higher_order_bracket(values, probs, alpha, p)

    def phi(t):
        return t + _weighted_pnorm(np.clip(values - t, 0.0, None), probs, p) / alpha

    t_star, val = _golden_min(phi, lo, hi)
    return val, t_star


def evaluate_risk(spec: RiskSpec, dist: DiscreteScalarDistribution) -> float:
    """Value of the risk measure described by ``spec`` on ``dist``."""
    z, pr = dist.values, dist.probs
    if spec.kind == "Expectation":
        return float(pr @ z)
    if spec.kind == "AVaR":
        if spec.alpha == 1.0:
            return float(pr @ z)
        value, _ = _avar_with_quantile(z, pr, spec.alpha)
        return value
    if spec.kind == "MeanAvarMix":
        mean = float(pr @ z)
        if spec.alpha == 1.0:
            return mean
        avar, _ = _avar_with_quantile(z, pr, spec.alpha)
        return (1.0 - spec.kappa) * mean + spec.kappa * avar
    if spec.kind == "MeanSemideviation":
        mean = float(pr @ z)
        dev = _weighted_pnorm(np.clip(z - mean, 0.0, None), pr, spec.order)
        return mean + spec.kappa * dev
    if spec.kind == "HigherOrder":
        if spec.order == 1.0:
            # the p=1 norm collapses the measure to AVaR
            if spec.alpha == 1.0:
                return float(pr @ z)
            value, _ = _avar_with_quantile(z, pr, spec.alpha)
            return value
        if spec.alpha == 1.0:
            # infimum approached as the shift goes to -inf; equals the mean
            return float(pr @ z)
        value, _ = _higher_order_value(z, pr, spec.alpha, spec.order)
        return value
    raise ValueError(f"unsupported risk kind {spec.kind!r}")


def _avar_subgradient(values: np.ndarray, probs: np.ndarray, alpha: float) -> np.ndarray:
    if alpha == 1.0:
        return np.ones_like(values)
    _, eta = _avar_with_quantile(values, probs, alpha)
    above = values > eta
    at = values == eta
    p_above = float(probs[above].sum())
    p_at = float(probs[at].sum())
    xi = np.zeros_like(values)
    xi[above] = 1.0 / alpha
    if p_at > 0.0:
        # split the leftover tail mass proportionally across the quantile atom
        xi[at] = (alpha - p_above) / (alpha * p_at)
    return xi


def _higher_order_subgradient(values: np.ndarray, probs: np.ndarray, alpha: float, p: float) -> np.ndarray:
    lo, hi = _higher_order_bracket(values, probs, alpha, p)

    def excess_mass(t):
        """E[xi_raw(t)] - 1; nonincreasing in t, zero at the optimal shift."""
        u = np.clip(values - t, 0.0, None)
        norm = _weighted_pnorm(u, probs, p)
        if norm == 0.0:
            return -1.0
        return float(probs @ u ** (p - 1.0)) / (alpha * norm ** (p - 1.0)) - 1.0

    if excess_mass(hi - 1e-13 * max(1.0, abs(hi))) > 0.0:
        # minimizer sits at the top outcome: the measure equals max(Z) and the
        # maximizing density is uniform over the top atom
        top = values == values.max()
        xi = np.zeros_like(values)
        xi[top] = 1.0 / float(probs[top].sum())
        return xi

    a, b = lo, hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if excess_mass(mid) > 0.0:
            a = mid
        else:
            b = mid
        if b - a <= 1e-15 * max(1.0, abs(a), abs(b)):
            break
    # candidates: the bisection point plus any outcome inside the final bracket
    # (the optimal shift may coincide with an atom, where the density formula
    # is exact even though the derivative is only Hoelder continuous)
    cands = [0.5 * (a + b)]
    cands.extend(float(v) for v in np.unique(values) if a - 1e-9 <= v <= b + 1e-9)
    t_star = min(cands, key=lambda t: abs(excess_mass(t)))

    u = np.clip(values - t_star, 0.0, None)
    norm = _weighted_pnorm(u, probs, p)
    if norm == 0.0:
        return np.ones_like(values)
    xi = u ** (p - 1.0) / (alpha * norm ** (p - 1.0))
    return xi / float(probs @ xi)


def risk_subgradient(spec: RiskSpec, dist: DiscreteScalarDistribution) -> np.ndarray:
    """A maximizer of the dual representation: a density ``xi >= 0`` with
    ``E[xi] = 1`` attaining ``sum_s probs_s xi_s values_s = evaluate_risk``."""
    z, pr = dist.values, dist.probs
    if spec.kind == "Expectation":
        return np.ones_like(z)
    if spec.kind == "AVaR":
        return _avar_subgradient(z, pr, spec.alpha)
    if spec.kind == "MeanAvarMix":
        xi = _avar_subgradient(z, pr, spec.alpha)
        return (1.0 - spec.kappa) + spec.kappa * xi
    if spec.kind == "MeanSemideviation":
        mean = float(pr @ z)
        u = np.clip(z - mean, 0.0, None)
        norm = _weighted_pnorm(u, pr, spec.order)
        if norm == 0.0:
            return np.ones_like(z)
        if spec.order == 1.0:
            h = spec.kappa * (z > mean).astype(float)
        else:
            h = spec.kappa * u ** (spec.order - 1.0) / norm ** (spec.order - 1.0)
        return 1.0 + h - float(pr @ h)
    if spec.kind == "HigherOrder":
        if spec.order == 1.0:
            return _avar_subgradient(z, pr, spec.alpha)
        if spec.alpha == 1.0:
            return np.ones_like(z)
        return _higher_order_subgradient(z, pr, spec.alpha, spec.order)
    raise ValueError(f"unsupported risk kind {spec.kind!r}")


@dataclass
class AxiomFailure:
    axiom: str
    detail: str
    lhs: float
    rhs: float
    payload: dict


@dataclass
class AxiomCheckResult:
    passed: bool
    trials: int
    failures: list = field(default_factory=list)

    def summary(self) -> str:
        if self.passed:
            return f"all four axioms held on {self.trials} random trials"
        lines = [f"{len(self.failures)} axiom violations in {self.trials} trials:"]
        lines += [f"  {f.axiom}: {f.detail} (lhs={f.lhs:.12g}, rhs={f.rhs:.12g})" for f in self.failures[:10]]
        return "\n".join(lines)


def check_axioms(spec: RiskSpec, trials: int = 200, seed: int = 0, tol: float = 1e-9) -> AxiomCheckResult:
    """Randomized check of convexity, monotonicity, positive homogeneity and
    translation equivariance for the measure described by ``spec``."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    failures = []

    def record(axiom, detail, lhs, rhs, **payload):
        failures.append(AxiomFailure(axiom, detail, float(lhs), float(rhs), payload))

    for _ in range(trials):
        size = int(rng.integers(2, 9))
        probs = rng.dirichlet(np.ones(size))
        scale = float(rng.uniform(0.2, 5.0))
        z1 = rng.normal(0.0, scale, size)
        z2 = rng.normal(0.0, scale, size)
        d1 = DiscreteScalarDistribution(z1, probs)
        d2 = DiscreteScalarDistribution(z2, probs)
        r1 = evaluate_risk(spec, d1)
        r2 = evaluate_risk(spec, d2)

        lam = float(rng.uniform(0.0, 1.0))
        mix = evaluate_risk(spec, DiscreteScalarDistribution(lam * z1 + (1 - lam) * z2, probs))
        if mix > lam * r1 + (1 - lam) * r2 + tol:
            record("convexity", f"lambda={lam:.6f}", mix, lam * r1 + (1 - lam) * r2,
                   values1=z1.tolist(), values2=z2.tolist(), probs=probs.tolist())

        bigger = evaluate_risk(spec, DiscreteScalarDistribution(z1 + np.abs(rng.normal(0, scale, size)), probs))
        if bigger < r1 - tol:
            record("monotonicity", "pointwise larger loss got smaller risk", bigger, r1,
                   values=z1.tolist(), probs=probs.tolist())

        t = float(rng.uniform(0.1, 3.0))
        scaled = evaluate_risk(spec, DiscreteScalarDistribution(t * z1, probs))
        if abs(scaled - t * r1) > tol:
            record("positive homogeneity", f"t={t:.6f}", scaled, t * r1,
                   values=z1.tolist(), probs=probs.tolist())

        a = float(rng.uniform(-2.0, 2.0))
        shifted = evaluate_risk(spec, DiscreteScalarDistribution(z1 + a, probs))
        if abs(shifted - (r1 + a)) > tol:
            record("translation", f"a={a:.6f}", shifted, r1 + a,
                   values=z1.tolist(), probs=probs.tolist())

    return AxiomCheckResult(passed=not failures, trials=trials, failures=failures)
