"""Risk-averse two-stage solver: multicut master with risk cuts.

The first stage picks a binary vector z (at most ``budget`` ones out of
``num_first_stage``).  Each scenario then solves a convex second-stage
program whose data may depend on z through equality links
``link_eq_W v = link_eq_h - link_eq_T z`` and through logical upper bounds
``v[j] <= coeff * z[k]``.  The master minimizes eta over the cut model

    eta >= sum_s p_s mu_s q_s          (one row per risk cut mu)
    q_s >= value + <grad, z - anchor>  (objective cuts, folded into bounds)
    q_s >= L0                          (configured floor)

by enumerating all feasible z (small first stage) and solving the cut LP
for each.  The outer loop alternates master solves with exact scenario
solves, appends a risk cut mu^t = risk_subgradient at the scenario value
vector and one objective cut per scenario, and stops when
rho^t - eta^t <= eps_master.  eta^t is a lower bound and rho^t an upper
bound at z^t, so the gap certifies optimality.
"""

from __future__ import annotations

import io
import itertools
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .distributions import DiscreteScalarDistribution, _clean_probs
from .risk import RiskSpec, evaluate_risk, risk_subgradient
from .solver import QpProblem, QpSolution, SolveStatus, solve_lp, solve_qp


class TwoStageIterationError(RuntimeError):
    """Outer loop exhausted its iteration cap; carries the partial trace."""

    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class SecondStageScenario:
    """Data of one scenario's second-stage program.

    Variables v live in R^n with bounds lower <= v <= upper.  Constraints:
    eq_A v = eq_b, ineq_A v <= ineq_b, plus the z-links described in the
    module docstring.  ``tie_pairs`` lists index pairs constrained equal
    (variable copies); the centralized solve merges each tied class into
    one column, which is exact.  ``decomposition`` optionally carries the
    per-node block view consumed by the distributed method.
    """

    probability: float
    cost_lin: np.ndarray
    cost_const: float = 0.0
    cost_quad: np.ndarray | None = None
    eq_A: np.ndarray | None = None
    eq_b: np.ndarray | None = None
    ineq_A: np.ndarray | None = None
    ineq_b: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    link_eq_T: np.ndarray | None = None
    link_eq_W: np.ndarray | None = None
    link_eq_h: np.ndarray | None = None
    link_ub: tuple = ()
    tie_pairs: tuple = ()
    decomposition: object = None

    def __post_init__(self):
        if not self.probability > 0:
            raise ValueError("scenario probability must be positive")
        c = np.asarray(self.cost_lin, dtype=float)
        object.__setattr__(self, "cost_lin", c)
        n = c.size
        links = (self.link_eq_T, self.link_eq_W, self.link_eq_h)
        if any(x is not None for x in links) and any(x is None for x in links):
            raise ValueError("link_eq_T/W/h must be given together")
        if self.link_eq_W is not None:
            W = np.atleast_2d(np.asarray(self.link_eq_W, dtype=float))
            T = np.atleast_2d(np.asarray(self.link_eq_T, dtype=float))
            h = np.atleast_1d(np.asarray(self.link_eq_h, dtype=float))
            if W.shape[0] != T.shape[0] or W.shape[0] != h.size or W.shape[1] != n:
                raise ValueError("link equality shapes disagree")
            object.__setattr__(self, "link_eq_W", W)
            object.__setattr__(self, "link_eq_T", T)
            object.__setattr__(self, "link_eq_h", h)
        for var, k, coeff in self.link_ub:
            if not (0 <= var < n and k >= 0 and np.isfinite(coeff)):
                raise ValueError("invalid logical bound entry")
        for i, j in self.tie_pairs:
            if not (0 <= i < n and 0 <= j < n and i != j):
                raise ValueError("invalid tie pair")

    @property
    def n(self) -> int:
        return self.cost_lin.size

    @property
    def num_first_stage(self) -> int:
        k = 0
        if self.link_eq_T is not None:
            k = self.link_eq_T.shape[1]
        for _, zk, _ in self.link_ub:
            k = max(k, zk + 1)
        return k


@dataclass
class TwoStageInstance:
    num_first_stage: int
    budget: int
    risk_spec: RiskSpec
    scenarios: list
    value_lower_bound: float = 0.0

    def __post_init__(self):
        if not 1 <= self.budget < self.num_first_stage:
            raise ValueError("budget must satisfy 1 <= K < num_first_stage")
        if not self.scenarios:
            raise ValueError("at least one scenario is required")
        probs = np.array([s.probability for s in self.scenarios])
        _clean_probs(probs)
        for s in self.scenarios:
            if s.num_first_stage > self.num_first_stage:
                raise ValueError("scenario links reference more z components "
                                 "than num_first_stage")

    @property
    def probs(self) -> np.ndarray:
        return _clean_probs(np.array([s.probability for s in self.scenarios]))

    def with_risk(self, risk_spec: RiskSpec) -> "TwoStageInstance":
        return replace(self, risk_spec=risk_spec)


@dataclass
class ObjectiveCut:
    anchor: np.ndarray
    values: np.ndarray      # (S,)
    grads: np.ndarray       # (S, K0)


class CutPool:
    """Risk cuts (dual weight vectors) and per-scenario objective cuts."""

    RISK_TOL = 1e-10

    def __init__(self, probs: np.ndarray):
        self.probs = _clean_probs(np.asarray(probs, dtype=float))
        self.risk_cuts: list[np.ndarray] = []
        self.objective_cuts: list[ObjectiveCut] = []

    def add_risk_cut(self, mu) -> bool:
        mu = np.asarray(mu, dtype=float)
        if mu.shape != self.probs.shape:
            raise ValueError("risk cut length must match the scenario count")
        if np.any(mu < -self.RISK_TOL):
            raise ValueError("risk cut must be nonnegative")
        if abs(float(self.probs @ mu) - 1.0) > self.RISK_TOL:
            raise ValueError("risk cut must satisfy sum p_s mu_s = 1")
        mu = np.maximum(mu, 0.0)
        for old in self.risk_cuts:
            if np.max(np.abs(old - mu)) <= 1e-12:
                return False
        self.risk_cuts.append(mu)
        return True

    def add_objective_cut(self, anchor, values, grads):
        self.objective_cuts.append(ObjectiveCut(
            np.asarray(anchor, dtype=float),
            np.asarray(values, dtype=float),
            np.asarray(grads, dtype=float)))

    def scenario_bounds(self, z, floor: float) -> np.ndarray:
        lb = np.full(self.probs.size, floor)
        z = np.asarray(z, dtype=float)
        for cut in self.objective_cuts:
            lb = np.maximum(lb, cut.values + cut.grads @ (z - cut.anchor))
        return lb


@dataclass
class MasterSolution:
    z: np.ndarray
    eta: float
    q: np.ndarray
    objective: float


def feasible_configurations(num_first_stage: int, budget: int):
    """All binary z with sum <= budget, in lexicographic order."""
    for bits in itertools.product((0, 1), repeat=num_first_stage):
        if sum(bits) <= budget:
            yield np.array(bits, dtype=float)


def solve_master(instance: TwoStageInstance, pool: CutPool) -> MasterSolution:
    if not pool.risk_cuts:
        raise ValueError("cut pool must contain at least the initial risk cut")
    S = pool.probs.size
    cost = np.zeros(1 + S)
    cost[0] = 1.0
    rows = np.zeros((len(pool.risk_cuts), 1 + S))
    rows[:, 0] = -1.0
    for t, mu in enumerate(pool.risk_cuts):
        rows[t, 1:] = pool.probs * mu
    best: MasterSolution | None = None
    for z in feasible_configurations(instance.num_first_stage, instance.budget):
        lb = np.concatenate([[-np.inf],
                             pool.scenario_bounds(z, instance.value_lower_bound)])
        sol = solve_lp(cost, ineqA=rows, ineqB=np.zeros(rows.shape[0]), lower=lb)
        if sol.status != SolveStatus.OPTIMAL:
            raise RuntimeError(f"master LP ended with status {sol.status}")
        eta = float(sol.x[0])
        if best is None or eta < best.eta - 1e-12:
            best = MasterSolution(z.astype(int), eta, sol.x[1:].copy(), eta)
    return best


def _fold_ties(n: int, pairs) -> tuple[np.ndarray, int]:
    """Union-find representative positions for tied variable classes."""
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(n)])
    _, pos = np.unique(roots, return_inverse=True)
    return pos, int(pos.max()) + 1


def _fold_cols(mat: np.ndarray, pos: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros((m, mat.shape[0]))
    np.add.at(out, pos, mat.T)
    return out.T


@dataclass
class ScenarioSolution:
    value: float
    subgradient: np.ndarray
    x: np.ndarray
    status: str
    iterations: int


def solve_second_stage_centralized(scenario: SecondStageScenario, z,
                                   tol: float = 1e-10) -> ScenarioSolution:
    """Exact scenario solve; the subgradient in z comes from the duals of
    the z-linked rows (equality links contribute link_eq_T' y, logical
    bounds v <= coeff z_k contribute -coeff * lam per row).

    Variables whose logical cap coincides with their lower bound are fixed
    and removed before the solve; their cap duals are recovered from the
    reduced cost, which keeps the remaining problem strictly feasible and
    the cut slopes tight."""
    z = np.asarray(z, dtype=float)
    n = scenario.n
    pos, m = _fold_ties(n, scenario.tie_pairs)

    cost = np.zeros(m)
    np.add.at(cost, pos, scenario.cost_lin)
    quad = None
    if scenario.cost_quad is not None:
        tmp = np.zeros((m, n))
        np.add.at(tmp, pos, np.asarray(scenario.cost_quad, dtype=float))
        quad = _fold_cols(tmp, pos, m)

    eq_parts, rhs_parts = [], []
    if scenario.eq_A is not None:
        eq_parts.append(_fold_cols(np.atleast_2d(scenario.eq_A), pos, m))
        rhs_parts.append(np.atleast_1d(scenario.eq_b))
    link_rows = slice(0, 0)
    if scenario.link_eq_W is not None:
        start = sum(a.shape[0] for a in eq_parts)
        eq_parts.append(_fold_cols(scenario.link_eq_W, pos, m))
        rhs_parts.append(scenario.link_eq_h - scenario.link_eq_T @ z)
        link_rows = slice(start, start + scenario.link_eq_W.shape[0])
    eqA = np.vstack(eq_parts) if eq_parts else None
    eqB = np.concatenate(rhs_parts) if rhs_parts else None

    lower = np.full(m, -np.inf)
    if scenario.lower is not None:
        np.maximum.at(lower, pos, np.asarray(scenario.lower, dtype=float))
    upper = np.full(m, np.inf)
    if scenario.upper is not None:
        np.minimum.at(upper, pos, np.asarray(scenario.upper, dtype=float))

    # Minimal logical cap per folded position; a position is pinned when
    # its cap lands on the lower bound (caps strictly below stay as rows so
    # an inconsistent instance is still reported infeasible).
    cap: dict[int, tuple[float, int, float]] = {}
    for var, k, coeff in scenario.link_ub:
        p = int(pos[var])
        c = coeff * z[k]
        if p not in cap or c < cap[p][0]:
            cap[p] = (c, k, coeff)
    pinned = np.zeros(m, dtype=bool)
    for p, (c, _, _) in cap.items():
        if abs(c - lower[p]) <= 1e-12:
            pinned[p] = True
    keep = np.flatnonzero(~pinned)
    pin_idx = np.flatnonzero(pinned)
    new_pos = np.full(m, -1)
    new_pos[keep] = np.arange(keep.size)
    x_fix = lower[pin_idx]

    const_shift = float(cost[pin_idx] @ x_fix)
    cost_red = cost[keep].copy()
    quad_red = None
    if quad is not None:
        const_shift += 0.5 * float(x_fix @ quad[np.ix_(pin_idx, pin_idx)] @ x_fix)
        cost_red += quad[np.ix_(keep, pin_idx)] @ x_fix
        quad_red = quad[np.ix_(keep, keep)]
    eqA_red = eqB_red = None
    if eqA is not None:
        eqA_red = eqA[:, keep]
        eqB_red = eqB - eqA[:, pin_idx] @ x_fix

    ineq_parts, ineq_rhs = [], []
    num_general = 0
    if scenario.ineq_A is not None:
        gen = _fold_cols(np.atleast_2d(scenario.ineq_A), pos, m)
        num_general = gen.shape[0]
        ineq_parts.append(gen[:, keep])
        ineq_rhs.append(np.atleast_1d(scenario.ineq_b) - gen[:, pin_idx] @ x_fix)
        gen_cols = gen
    fin_ub = np.flatnonzero(np.isfinite(upper) & ~pinned)
    if fin_ub.size:
        rows = np.zeros((fin_ub.size, keep.size))
        rows[np.arange(fin_ub.size), new_pos[fin_ub]] = 1.0
        ineq_parts.append(rows)
        ineq_rhs.append(upper[fin_ub])
    link_ub_rows = []
    live_caps = [(p, c) for p, c in cap.items() if not pinned[p]]
    if live_caps:
        start = sum(a.shape[0] for a in ineq_parts)
        rows = np.zeros((len(live_caps), keep.size))
        rhs = np.zeros(len(live_caps))
        for r, (p, (c, k, coeff)) in enumerate(live_caps):
            rows[r, new_pos[p]] = 1.0
            rhs[r] = c
            link_ub_rows.append((start + r, k, coeff))
        ineq_parts.append(rows)
        ineq_rhs.append(rhs)
    ineqA = np.vstack(ineq_parts) if ineq_parts else None
    ineqB = np.concatenate(ineq_rhs) if ineq_rhs else None

    if keep.size == 0:
        # Everything is pinned; the residual program is empty. Feasibility
        # of the fixed point is all that is left to check.
        if eqB_red is not None and np.max(np.abs(eqB_red), initial=0.0) > 1e-9:
            raise RuntimeError("second-stage solve ended with status "
                               f"{SolveStatus.INFEASIBLE}")
        if ineqB is not None and np.min(ineqB, initial=0.0) < -1e-9:
            raise RuntimeError("second-stage solve ended with status "
                               f"{SolveStatus.INFEASIBLE}")
        sol = QpSolution(
            SolveStatus.OPTIMAL, np.zeros(0), 0.0,
            np.zeros(0 if eqA_red is None else eqA_red.shape[0]),
            np.zeros(0 if ineqA is None else ineqA.shape[0]),
            np.zeros(0), 0,
            {k: 0.0 for k in ("stationarity", "eq", "ineq", "bound",
                              "complementarity")})
    else:
        prob = QpProblem(quad_red, cost_red, eqA_red, eqB_red, ineqA, ineqB,
                         lower[keep])
        sol = solve_qp(prob, tol=tol)
    if sol.status != SolveStatus.OPTIMAL:
        raise RuntimeError(f"second-stage solve ended with status {sol.status}")

    x_fold = np.empty(m)
    x_fold[keep] = sol.x
    x_fold[pin_idx] = x_fix

    K = max(scenario.num_first_stage, z.size)
    grad = np.zeros(K)
    if scenario.link_eq_W is not None:
        grad[:scenario.link_eq_T.shape[1]] += scenario.link_eq_T.T @ sol.eqDuals[link_rows]
    for row, k, coeff in link_ub_rows:
        grad[k] -= coeff * sol.ineqDuals[row]
    if pin_idx.size:
        # Reduced cost of each pinned variable; its nonnegative part would
        # sit on the lower bound, the rest belongs to the cap row.
        red = cost[pin_idx].copy()
        if quad is not None:
            red += quad[pin_idx] @ x_fold
        if eqA is not None:
            red += eqA[:, pin_idx].T @ sol.eqDuals
        if num_general:
            red += gen_cols[:, pin_idx].T @ sol.ineqDuals[:num_general]
        lam = np.maximum(0.0, -red)
        for p, l in zip(pin_idx, lam):
            _, k, coeff = cap[int(p)]
            grad[k] -= coeff * l

    return ScenarioSolution(sol.objective + const_shift + scenario.cost_const,
                            grad, x_fold[pos], sol.status, sol.iterations)


@dataclass
class TraceRow:
    iteration: int
    eta: float
    rho: float
    z: tuple
    values: np.ndarray


def trace_to_csv(trace, path_or_file):
    """Write the outer-loop trace: iteration, eta, rho, z, scenario values."""
    close = False
    if isinstance(path_or_file, (str, os.PathLike)):
        f = open(path_or_file, "w", encoding="utf-8")
        close = True
    else:
        f = path_or_file
    try:
        S = trace[0].values.size if trace else 0
        cols = ",".join(f"value_{s + 1}" for s in range(S))
        f.write("iteration,eta,rho,z" + ("," + cols if cols else "") + "\n")
        for row in trace:
            zstr = "".join(str(int(b)) for b in row.z)
            vals = ",".join(f"{v:.12g}" for v in row.values)
            f.write(f"{row.iteration},{row.eta:.12g},{row.rho:.12g},{zstr}"
                    + ("," + vals if vals else "") + "\n")
    finally:
        if close:
            f.close()


@dataclass
class TwoStageResult:
    z: np.ndarray
    risk_value: float
    eta: float
    iterations: int
    converged: bool
    trace: list
    scenario_values: np.ndarray
    scenario_solutions: list


def _thread_count() -> int:
    raw = os.environ.get("SYSRISK_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _solve_scenarios_centralized(scenarios, z, tol):
    workers = _thread_count()
    if workers == 1 or len(scenarios) == 1:
        return [solve_second_stage_centralized(s, z, tol=tol) for s in scenarios]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda s: solve_second_stage_centralized(s, z, tol=tol),
                           scenarios))


def solve_two_stage(instance: TwoStageInstance, eps_master: float = 1e-6,
                    mode: str = "centralized", adal_config=None,
                    max_iterations: int = 100,
                    scenario_tol: float = 1e-10,
                    value_cache: dict | None = None) -> TwoStageResult:
    """Outer loop: master over cut model, scenario oracles, stop when the
    upper bound rho^t meets the master lower bound eta^t within eps_master.

    mode "centralized" solves scenarios exactly with solve_qp; "distributed"
    runs the augmented-Lagrangian sweep on each scenario's decomposition
    (warm-started across outer iterations).

    value_cache, if given, maps a z tuple to the list of scenario solutions
    at that configuration; it is consulted and extended, so repeated solves
    of one instance under different risk measures share scenario work.
    """
    if eps_master <= 0:
        raise ValueError("eps_master must be positive")
    mode = mode.lower()
    if mode not in ("centralized", "distributed"):
        raise ValueError(f"unknown mode {mode!r}")
    probs = instance.probs
    pool = CutPool(probs)
    pool.add_risk_cut(np.ones(probs.size))

    if mode == "distributed":
        from . import adal
        decomps = [s.decomposition for s in instance.scenarios]
        if any(d is None for d in decomps):
            raise ValueError("distributed mode requires scenario decompositions")
        warm = [None] * len(decomps)

    cache: dict[tuple, list[ScenarioSolution]]
    cache = value_cache if value_cache is not None else {}
    trace: list[TraceRow] = []
    incumbent = None

    for it in range(1, max_iterations + 1):
        master = solve_master(instance, pool)
        key = tuple(int(b) for b in master.z)
        sols = cache.get(key)
        if sols is None:
            if mode == "centralized":
                sols = _solve_scenarios_centralized(instance.scenarios, master.z,
                                                    scenario_tol)
            else:
                results = adal.run_adal_batch(decomps, adal_config, master.z,
                                              initial_states=warm)
                for s_idx, res in enumerate(results):
                    if res.status != adal.AdalStatus.CONVERGED:
                        err = TwoStageIterationError(
                            f"distributed solve of scenario {s_idx} did not "
                            f"converge at z={key}", trace)
                        err.adal_result = res
                        raise err
                warm = [r.state for r in results]
                sols = [ScenarioSolution(r.value, r.subgradient, r.v.ravel(),
                                         r.status, r.iterations)
                        for r in results]
            cache[key] = sols
        values = np.array([s.value for s in sols])
        dist = DiscreteScalarDistribution(values, probs)
        rho = evaluate_risk(instance.risk_spec, dist)
        trace.append(TraceRow(it, master.eta, rho, key, values))
        if incumbent is None or rho < incumbent[0] - 1e-12:
            incumbent = (rho, master.z.copy(), sols, values)
        if rho - master.eta <= eps_master:
            return TwoStageResult(incumbent[1], incumbent[0], master.eta, it,
                                  True, trace, incumbent[3], incumbent[2])
        pool.add_risk_cut(risk_subgradient(instance.risk_spec, dist))
        grads = np.stack([s.subgradient for s in sols])
        pool.add_objective_cut(master.z, values, grads)

    raise TwoStageIterationError(
        f"no convergence within {max_iterations} master iterations", trace)
