"""Wireless information-exchange experiment model.

J robots on a square map collect information (a Gaussian field sampled at
their positions) and relay it over rate-limited links toward a chosen
subset of K0 candidate reporting points (the binary first stage, at most
``budget`` active).  Per scenario s the second stage routes flows:

    node variables  v_i = (y_i, T_{i,1..J+K0}, x_i, u_i)
    flow            y_i - sum_j R_ji T_ji + sum_t T_it = r_i
    capacity        sum_j T_ji + sum_t T_it + u_i = a      (slack u_i)
    proportion      sum_i r_i x_i = sum_i sum_k R_{ik} T_{ik}
    consistency     x_i = x_j for neighboring robots
    logical bound   T_{ik} <= M z_k
    0 <= T, y, u;  0 <= x <= 1

and the scenario loss is sum_i w_i (c1 y_i + c2 (1 - x_i)).  The rate
R depends only on pairwise distance: 1 inside the inner radius, 0 beyond
the outer radius, and the C^1 cubic blend in between.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .risk import RiskSpec
from .two_stage import SecondStageScenario, TwoStageInstance
from .adal import DecomposedScenario

PAPER_CANDIDATES = ((0.5, 0.3), (1.5, 0.25), (1.75, 0.5), (1.0, 0.2))
PAPER_SOURCE_MEAN = (0.5, 1.75)
MAX_RESAMPLE = 1000


class ConnectivityError(ValueError):
    """Scenario communication network is not connected."""


@dataclass(frozen=True)
class WirelessConfig:
    num_robots: int
    num_candidates: int
    budget: int
    num_scenarios: int
    map_size: float
    candidate_positions: tuple
    inner_radius: float = 0.3
    outer_radius: float = 0.6
    source_mean: tuple = PAPER_SOURCE_MEAN
    source_cov: tuple = ((0.1225, 0.0), (0.0, 0.1225))
    info_scale: float = 1.0
    capacity: float = 0.6
    loss_weights: tuple = (0.8, 0.2)
    robot_weights: tuple | None = None
    big_m: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.num_robots < 1:
            raise ValueError("num_robots must be at least 1")
        if self.num_scenarios < 1:
            raise ValueError("num_scenarios must be at least 1")
        cand = tuple(tuple(float(c) for c in p) for p in self.candidate_positions)
        if len(cand) != self.num_candidates or any(len(p) != 2 for p in cand):
            raise ValueError("candidate_positions must list num_candidates 2-vectors")
        object.__setattr__(self, "candidate_positions", cand)
        if not 1 <= self.budget < self.num_candidates:
            raise ValueError("budget must satisfy 1 <= K < num_candidates")
        if not 0 < self.inner_radius < self.outer_radius:
            raise ValueError("radii must satisfy 0 < inner < outer")
        if not self.map_size > 0:
            raise ValueError("map_size must be positive")
        if not self.capacity > 0:
            raise ValueError("capacity must be positive")
        if not self.info_scale > 0:
            raise ValueError("info_scale must be positive")
        cov = np.asarray(self.source_cov, dtype=float)
        if cov.shape != (2, 2) or not np.allclose(cov, cov.T):
            raise ValueError("source_cov must be a symmetric 2x2 matrix")
        if np.linalg.det(cov) <= 0 or cov[0, 0] <= 0:
            raise ValueError("source_cov must be positive definite")
        object.__setattr__(self, "source_cov", tuple(map(tuple, cov.tolist())))
        mean = tuple(float(c) for c in self.source_mean)
        if len(mean) != 2:
            raise ValueError("source_mean must be a 2-vector")
        object.__setattr__(self, "source_mean", mean)
        c1, c2 = (float(c) for c in self.loss_weights)
        if c1 <= 0 or c2 <= 0 or abs(c1 + c2 - 1.0) > 1e-9:
            raise ValueError("loss_weights must be positive and sum to one")
        object.__setattr__(self, "loss_weights", (c1, c2))
        if self.robot_weights is not None:
            w = np.asarray(self.robot_weights, dtype=float)
            if w.shape != (self.num_robots,) or np.any(w <= 0) \
                    or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("robot_weights must be positive and sum to one")
            object.__setattr__(self, "robot_weights", tuple(w.tolist()))
        if self.big_m is not None and not self.big_m > 0:
            raise ValueError("big_m must be positive")

    @property
    def weights(self) -> np.ndarray:
        if self.robot_weights is None:
            return np.full(self.num_robots, 1.0 / self.num_robots)
        return np.asarray(self.robot_weights, dtype=float)

    @property
    def effective_big_m(self) -> float:
        # total transmissions per node are capped by the capacity, so the
        # capacity is the tightest universally valid logical bound
        return self.capacity if self.big_m is None else self.big_m

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "WirelessConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


def paper_config(seed: int | None = None, **overrides) -> WirelessConfig:
    """Large experiment shape: 50 robots, 4 candidates, 200 scenarios on a
    2 x 2 map."""
    kw = dict(num_robots=50, num_candidates=4, budget=2, num_scenarios=200,
              map_size=2.0, candidate_positions=PAPER_CANDIDATES,
              source_mean=PAPER_SOURCE_MEAN, seed=seed)
    kw.update(overrides)
    return WirelessConfig(**kw)


def desk_config(seed: int | None = None, **overrides) -> WirelessConfig:
    """Small experiment shape: 20 robots, 4 candidates, 100 scenarios on a
    1.5 x 1.5 map (positions scaled accordingly)."""
    scale = 1.5 / 2.0
    kw = dict(num_robots=20, num_candidates=4, budget=3, num_scenarios=100,
              map_size=1.5,
              candidate_positions=tuple((x * scale, y * scale)
                                        for x, y in PAPER_CANDIDATES),
              source_mean=tuple(c * scale for c in PAPER_SOURCE_MEAN),
              source_cov=((0.1225 * scale**2, 0.0), (0.0, 0.1225 * scale**2)),
              seed=seed)
    kw.update(overrides)
    return WirelessConfig(**kw)


def rate(distance: float, inner: float, outer: float) -> float:
    """Fraction of transmitted information decoded at the given distance."""
    return float(rate_array(np.asarray(distance, dtype=float), inner, outer))


def rate_array(distance: np.ndarray, inner: float, outer: float) -> np.ndarray:
    if not 0 < inner < outer:
        raise ValueError("radii must satisfy 0 < inner < outer")
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    t = np.clip((d - inner) / (outer - inner), 0.0, 1.0)
    # C^1 cubic: value 1, slope 0 at d=inner; value 0, slope 0 at d=outer
    return 2.0 * t**3 - 3.0 * t**2 + 1.0


def info_rate(position, config: WirelessConfig) -> np.ndarray | float:
    """Gaussian information field sampled at one or many positions."""
    cov = np.asarray(config.source_cov, dtype=float)
    det = float(np.linalg.det(cov))
    if det <= 0:
        raise ValueError("source_cov must be invertible")
    inv = np.linalg.inv(cov)
    pos = np.asarray(position, dtype=float)
    single = pos.ndim == 1
    pts = np.atleast_2d(pos) - np.asarray(config.source_mean)
    quad = np.einsum("ni,ij,nj->n", pts, inv, pts)
    vals = config.info_scale / (2.0 * np.pi * np.sqrt(det)) * np.exp(-0.5 * quad)
    return float(vals[0]) if single else vals


@dataclass(frozen=True)
class WirelessScenario:
    positions: np.ndarray
    rate_matrix: np.ndarray
    info: np.ndarray
    probability: float

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        R = np.asarray(self.rate_matrix, dtype=float)
        r = np.asarray(self.info, dtype=float)
        J = pos.shape[0]
        if pos.shape != (J, 2) or R.shape[0] != J or R.shape[1] < J or r.shape != (J,):
            raise ValueError("scenario field shapes disagree")
        if np.any(R < -1e-12) or np.any(R > 1 + 1e-12):
            raise ValueError("rates must lie in [0, 1]")
        if not np.allclose(np.diagonal(R[:, :J]), 1.0):
            raise ValueError("self-rates must equal 1")
        if np.any(r < 0):
            raise ValueError("information must be nonnegative")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "rate_matrix", R)
        object.__setattr__(self, "info", r)

    @property
    def num_robots(self) -> int:
        return self.positions.shape[0]

    @property
    def num_candidates(self) -> int:
        return self.rate_matrix.shape[1] - self.positions.shape[0]


def make_scenario(positions, config: WirelessConfig,
                  probability: float) -> WirelessScenario:
    pos = np.asarray(positions, dtype=float)
    targets = np.vstack([pos, np.asarray(config.candidate_positions, dtype=float)])
    dist = np.linalg.norm(pos[:, None, :] - targets[None, :, :], axis=2)
    R = rate_array(dist, config.inner_radius, config.outer_radius)
    return WirelessScenario(pos, R, np.asarray(info_rate(pos, config)), probability)


def check_connectivity(scenario: WirelessScenario) -> bool:
    """True when the robot graph (edges where R_ij > 0) is connected and at
    least one robot has a positive rate to some candidate."""
    R = scenario.rate_matrix
    J = scenario.num_robots
    if not np.any(R[:, J:] > 0):
        return False
    adj = R[:, :J] > 0
    seen = np.zeros(J, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i] & ~seen):
            seen[j] = True
            stack.append(int(j))
    return bool(seen.all())


def assemble_second_stage(scenario: WirelessScenario,
                          config: WirelessConfig) -> SecondStageScenario:
    """Build the scenario program (and its per-node decomposition) from the
    rate matrix and information vector."""
    if not check_connectivity(scenario):
        raise ConnectivityError("scenario network is disconnected")
    J = scenario.num_robots
    K0 = scenario.num_candidates
    nv = J + K0 + 3
    R = scenario.rate_matrix
    r = scenario.info
    a = config.capacity
    c1, c2 = config.loss_weights
    w = config.weights
    M = config.effective_big_m
    x_idx, u_idx = nv - 2, nv - 1

    A = np.zeros((J, 2 * J + 1, nv))
    for i in range(J):
        # flow row i: y_i - sum_j R_ji T_ji + sum_t T_it = r_i
        A[i, i, 0] = 1.0
        A[i, i, 1:1 + J + K0] += 1.0
        A[:, i, 1 + i] -= R[:, i]
        # capacity row i: sum_j T_ji + sum_t T_it + u_i = a
        A[i, J + i, 1:1 + J + K0] += 1.0
        A[:, J + i, 1 + i] += 1.0
        A[i, J + i, u_idx] = 1.0
        # proportion row: sum_i r_i x_i - sum_i sum_k R_ik T_ik = 0
        A[i, 2 * J, x_idx] = r[i]
        A[i, 2 * J, 1 + J:1 + J + K0] = -R[i, J:]
    b = np.concatenate([r, np.full(J, a), [0.0]])

    cost_lin = np.zeros((J, nv))
    cost_lin[:, 0] = w * c1
    cost_lin[:, x_idx] = -w * c2
    cost_const = w * c2

    lower = np.zeros((J, nv))
    upper = np.full((J, nv), np.inf)
    upper[:, x_idx] = 1.0

    link_ub = tuple((i, 1 + J + k, k, M) for i in range(J) for k in range(K0))
    robot_adj = (R[:, :J] > 0) & ~np.eye(J, dtype=bool)
    edges = np.argwhere(robot_adj)

    decomposition = DecomposedScenario(
        num_nodes=J, node_dim=nv, cost_lin=cost_lin, cost_const=cost_const,
        coupling_A=A, coupling_b=b, lower=lower, upper=upper,
        shared_index=x_idx, edges=edges, link_ub=link_ub)

    flat_link_ub = tuple((i * nv + var, k, coeff) for i, var, k, coeff in link_ub)
    ties = tuple((int(i) * nv + x_idx, int(j) * nv + x_idx)
                 for i, j in edges if i < j)
    return SecondStageScenario(
        probability=scenario.probability,
        cost_lin=cost_lin.ravel(),
        cost_const=float(cost_const.sum()),
        eq_A=A.transpose(1, 0, 2).reshape(2 * J + 1, J * nv),
        eq_b=b,
        lower=lower.ravel(),
        upper=upper.ravel(),
        link_ub=flat_link_ub,
        tie_pairs=ties,
        decomposition=decomposition)


def generate_scenarios(config: WirelessConfig) -> list[WirelessScenario]:
    """Sample connected scenarios (uniform robot positions, bounded
    resampling per scenario); deterministic for a fixed config.seed."""
    if config.seed is None:
        raise ValueError("config.seed must be set before generating")
    rng = np.random.default_rng(config.seed)
    prob = 1.0 / config.num_scenarios
    scenarios = []
    for _ in range(config.num_scenarios):
        for _attempt in range(MAX_RESAMPLE):
            pos = rng.uniform(0.0, config.map_size, size=(config.num_robots, 2))
            sc = make_scenario(pos, config, prob)
            if check_connectivity(sc):
                scenarios.append(sc)
                break
        else:
            raise ValueError("could not sample a connected scenario; "
                             "widen the radii or shrink the map")
    return scenarios


def build_instance(config: WirelessConfig, scenarios,
                   risk_spec: RiskSpec | None = None) -> TwoStageInstance:
    risk_spec = risk_spec or RiskSpec("Expectation")
    return TwoStageInstance(
        num_first_stage=config.num_candidates,
        budget=config.budget,
        risk_spec=risk_spec,
        scenarios=[assemble_second_stage(sc, config) for sc in scenarios])


def generate_instance(config: WirelessConfig, risk_spec: RiskSpec | None = None):
    """Sampled scenarios assembled into a solvable instance; returns the
    instance together with the raw scenario records."""
    scenarios = generate_scenarios(config)
    return build_instance(config, scenarios, risk_spec), scenarios


def instance_to_json(config: WirelessConfig, scenarios) -> dict:
    return {
        "format": "sysrisk-wireless-instance",
        "version": 1,
        "config": config.to_json(),
        "scenarios": [
            {"positions": sc.positions.tolist(),
             "rate": sc.rate_matrix.tolist(),
             "info": sc.info.tolist(),
             "probability": sc.probability}
            for sc in scenarios],
    }


def instance_from_json(data: dict):
    if data.get("format") != "sysrisk-wireless-instance":
        raise ValueError("not a wireless instance file")
    config = WirelessConfig.from_json(data["config"])
    scenarios = [WirelessScenario(np.asarray(sc["positions"], dtype=float),
                                  np.asarray(sc["rate"], dtype=float),
                                  np.asarray(sc["info"], dtype=float),
                                  float(sc["probability"]))
                 for sc in data["scenarios"]]
    return config, scenarios


def unpack_solution(x: np.ndarray, num_robots: int, num_candidates: int) -> dict:
    """Split a stacked scenario solution into named per-robot pieces."""
    nv = num_robots + num_candidates + 3
    blocks = np.asarray(x, dtype=float).reshape(num_robots, nv)
    return {"y": blocks[:, 0].copy(),
            "T": blocks[:, 1:1 + num_robots + num_candidates].copy(),
            "x": blocks[:, nv - 2].copy(),
            "u": blocks[:, nv - 1].copy()}


def per_robot_losses(x: np.ndarray, config: WirelessConfig) -> np.ndarray:
    """q_i = c1 y_i + c2 (1 - x_i) at a stacked scenario solution."""
    parts = unpack_solution(x, config.num_robots, config.num_candidates)
    c1, c2 = config.loss_weights
    return c1 * parts["y"] + c2 * (1.0 - parts["x"])


def delivered_proportion(x: np.ndarray, config: WirelessConfig) -> float:
    parts = unpack_solution(x, config.num_robots, config.num_candidates)
    return float(parts["x"].mean())
