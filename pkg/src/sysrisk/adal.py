"""Distributed second-stage solves by accelerated augmented Lagrangian sweeps.

A scenario is decomposed into per-node blocks v_i in R^nv coupled through

    sum_i A_i v_i = b            (coupling rows, duals lam)
    v_i[shared] = v_j[shared]    (consistency pairs over edges, duals mu)

Each iteration runs a Jacobi sweep: every node minimizes its local
augmented Lagrangian

    cost_i(v) + <lam, A_i v> + (mu-net) * v[shared]
    + (penalty/2) ||A_i v + offset_i||^2
    + penalty * sum_{j in N(i)} (v[shared] - x_j)^2

over its box (plus optional node equality links W v = h - T z), where
offset_i collects the other blocks at the previous iterate.  Primal blocks
are then relaxed by the stepsize, and if the residuals still exceed the
tolerance, duals move by penalty * stepsize times the residual at the
updated iterate.  The objective is reconstructed from the node values as
sum_i localObjective_i - <lam, b>, which converges to the scenario optimum
as the residuals vanish.

The penalty must lie in (0, 1/q) where q is the largest number of blocks
coupled by any single constraint row (consistency pairs couple two); the
stepsize lies in (0, 1], defaulting to 1/q.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .solver import QpProblem, SolveStatus, batch_box_qp, solve_qp


class AdalStatus:
    CONVERGED = "Converged"
    NOT_CONVERGED = "NotConverged"


@dataclass(frozen=True)
class DecomposedScenario:
    """Per-node block data of one scenario.

    ``coupling_A`` stacks each node's block of every coupling row
    (num_nodes, num_rows, node_dim); ``edges`` holds directed neighbor
    pairs (i, j), both directions, for the consistency constraints on the
    ``shared_index`` coordinate.  ``link_ub`` entries (node, var, k, coeff)
    cap a coordinate at coeff * z_k; ``node_link`` optionally gives
    per-node equality links (W, T, h) meaning W v_i = h - T z.
    """

    num_nodes: int
    node_dim: int
    cost_lin: np.ndarray
    cost_const: np.ndarray
    coupling_A: np.ndarray
    coupling_b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    cost_quad: np.ndarray | None = None
    shared_index: int | None = None
    edges: np.ndarray | None = None
    link_ub: tuple = ()
    node_link: tuple | None = None

    def __post_init__(self):
        J, nv = self.num_nodes, self.node_dim
        for name, arr, shape in (("cost_lin", self.cost_lin, (J, nv)),
                                 ("cost_const", self.cost_const, (J,)),
                                 ("lower", self.lower, (J, nv)),
                                 ("upper", self.upper, (J, nv))):
            arr = np.asarray(arr, dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}")
            object.__setattr__(self, name, arr)
        A = np.asarray(self.coupling_A, dtype=float)
        b = np.atleast_1d(np.asarray(self.coupling_b, dtype=float))
        if A.ndim != 3 or A.shape[0] != J or A.shape[2] != nv or A.shape[1] != b.size:
            raise ValueError("coupling_A must be (num_nodes, num_rows, node_dim)")
        object.__setattr__(self, "coupling_A", A)
        object.__setattr__(self, "coupling_b", b)
        if self.cost_quad is not None:
            Q = np.asarray(self.cost_quad, dtype=float)
            if Q.shape != (J, nv, nv):
                raise ValueError("cost_quad must be (num_nodes, node_dim, node_dim)")
            object.__setattr__(self, "cost_quad", Q)
        if self.edges is not None and len(self.edges):
            E = np.asarray(self.edges, dtype=int)
            if E.ndim != 2 or E.shape[1] != 2 or np.any(E[:, 0] == E[:, 1]) \
                    or E.min() < 0 or E.max() >= J:
                raise ValueError("edges must be directed pairs of distinct nodes")
            if self.shared_index is None:
                raise ValueError("consistency edges require a shared_index")
            object.__setattr__(self, "edges", E)
        else:
            object.__setattr__(self, "edges", np.zeros((0, 2), dtype=int))
        for node, var, k, coeff in self.link_ub:
            if not (0 <= node < J and 0 <= var < nv and k >= 0):
                raise ValueError("invalid logical bound entry")
        if self.node_link is not None and len(self.node_link) != J:
            raise ValueError("node_link must have one entry per node")

    @property
    def num_rows(self) -> int:
        return self.coupling_b.size

    def coupling_count(self) -> int:
        """q: the largest number of blocks coupled by one constraint row."""
        touched = np.any(np.abs(self.coupling_A) > 0, axis=2)  # (J, d)
        per_row = touched.sum(axis=0)
        q = int(per_row.max(initial=0))
        if len(self.edges):
            q = max(q, 2)
        return max(q, 1)


@dataclass
class AdalConfig:
    penalty: float | None = None      # default 0.9 / q
    stepsize: float | None = None     # default 1 / q
    residual_tol: float = 1e-5
    max_iterations: int = 20000

    def __post_init__(self):
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class AdalState:
    v: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    iteration: int = 0
    coupling_history: list = field(default_factory=list)
    consistency_history: list = field(default_factory=list)
    objective_history: list = field(default_factory=list)


@dataclass
class AdalResult:
    status: str
    state: AdalState
    value: float
    per_node_values: np.ndarray
    subgradient: np.ndarray
    shared_value: float | None
    iterations: int

    @property
    def v(self) -> np.ndarray:
        return self.state.v

    @property
    def lam(self) -> np.ndarray:
        return self.state.lam

    @property
    def mu(self) -> np.ndarray:
        return self.state.mu


def residual_trace_to_csv(result: AdalResult, path_or_file):
    """Per-iteration residual trace: iteration, coupling residual,
    consistency residual, objective estimate."""
    close = False
    if isinstance(path_or_file, (str, os.PathLike)):
        f = open(path_or_file, "w", encoding="utf-8")
        close = True
    else:
        f = path_or_file
    try:
        st = result.state
        f.write("iteration,coupling_residual,consistency_residual,objective\n")
        rows = zip(st.coupling_history, st.consistency_history, st.objective_history)
        for it, (cp, cs, ob) in enumerate(rows, start=1):
            f.write(f"{it},{cp:.12g},{cs:.12g},{ob:.12g}\n")
    finally:
        if close:
            f.close()


def _resolve(scenario: DecomposedScenario, config: AdalConfig | None):
    config = config or AdalConfig()
    q = scenario.coupling_count()
    penalty = config.penalty if config.penalty is not None else 0.9 / q
    if not 0.0 < penalty < 1.0 / q:
        raise ValueError(f"penalty must lie in (0, 1/q) = (0, {1.0 / q:.6g})")
    stepsize = config.stepsize if config.stepsize is not None else 1.0 / q
    if not 0.0 < stepsize <= 1.0:
        raise ValueError("stepsize must lie in (0, 1]")
    return penalty, stepsize, config.residual_tol, config.max_iterations


class _Work:
    """Mutable per-scenario iteration state shared by all entry points."""

    def __init__(self, scenario: DecomposedScenario, config: AdalConfig | None,
                 z, initial: AdalState | None = None):
        self.scenario = scenario
        self.z = np.asarray(z, dtype=float)
        self.penalty, self.stepsize, self.tol, self.max_iter = _resolve(scenario, config)
        J, nv, d = scenario.num_nodes, scenario.node_dim, scenario.num_rows
        self.A, self.b = scenario.coupling_A, scenario.coupling_b
        self.sh = scenario.shared_index
        self.edges = scenario.edges
        self.deg = np.zeros(J)
        np.add.at(self.deg, self.edges[:, 0], 1.0)

        self.ub = scenario.upper.copy()
        self.z_bound = []            # (node, var, k, coeff) with the z-cap active
        for node, var, k, coeff in scenario.link_ub:
            cap = coeff * self.z[k]
            if cap <= self.ub[node, var]:
                self.ub[node, var] = cap
                self.z_bound.append((node, var, k, coeff))
        self.lb = scenario.lower

        Q = self.penalty * np.einsum("ndi,ndj->nij", self.A, self.A)
        if scenario.cost_quad is not None:
            Q = Q + scenario.cost_quad
        if self.sh is not None:
            Q[:, self.sh, self.sh] += 2.0 * self.penalty * self.deg
        self.Q = Q

        if initial is not None:
            v = np.clip(initial.v, self.lb, self.ub)
            lam = initial.lam.copy()
            mu = initial.mu.copy()
        else:
            v = np.clip(np.zeros((J, nv)), self.lb, self.ub)
            lam = np.zeros(d)
            mu = np.zeros(len(self.edges))
        self.state = AdalState(v, lam, mu)
        self.converged = False
        self.last_per_node = np.zeros(J)
        self.last_value = float("nan")
        self.last_dual_lb = np.zeros((J, nv))
        self.last_dual_ub = np.zeros((J, nv))
        self.last_eq_duals = [None] * J
        # Stall control: a relaxation step above 1/q is usually much
        # faster but not always stable; on divergence or when a long
        # window shows almost no residual improvement the step is halved
        # (never below 1/q) and iteration continues.
        self.step_floor = min(self.stepsize, 1.0 / scenario.coupling_count())
        self._window = 1000
        self._win_min = np.inf
        self._prev_min = None
        self._best = np.inf
        # node solutions of the previous sweep, reused to warm-start the
        # batched box solver (Q and the box are fixed, only c drifts)
        self._box_warm = None

    def assemble(self):
        """Linear and constant terms of every node's augmented Lagrangian
        at the current state."""
        st = self.state
        Av = np.einsum("ndi,ni->nd", self.A, st.v)
        offset = (Av.sum(axis=0) - self.b)[None, :] - Av
        c = self.scenario.cost_lin + np.einsum(
            "ndi,nd->ni", self.A, st.lam[None, :] + self.penalty * offset)
        const = self.scenario.cost_const + 0.5 * self.penalty * (offset**2).sum(axis=1)
        if self.sh is not None and len(self.edges):
            x = st.v[:, self.sh]
            mu_net = np.zeros(len(x))
            np.add.at(mu_net, self.edges[:, 0], st.mu)
            np.add.at(mu_net, self.edges[:, 1], -st.mu)
            nbr_sum = np.zeros(len(x))
            nbr_sq = np.zeros(len(x))
            np.add.at(nbr_sum, self.edges[:, 0], x[self.edges[:, 1]])
            np.add.at(nbr_sq, self.edges[:, 0], x[self.edges[:, 1]] ** 2)
            c[:, self.sh] += mu_net - 2.0 * self.penalty * nbr_sum
            const += self.penalty * nbr_sq
        return c, const

    def residuals(self):
        st = self.state
        coup = 0.0
        if self.b.size:
            resid = np.einsum("ndi,ni->d", self.A, st.v) - self.b
            coup = float(np.abs(resid).max())
        else:
            resid = np.zeros(0)
        cons = 0.0
        if self.sh is not None and len(self.edges):
            x = st.v[:, self.sh]
            cons = float(np.abs(x[self.edges[:, 0]] - x[self.edges[:, 1]]).max())
        return resid, coup, cons

    def finish_sweep(self, v_hat, dual_lb, dual_ub, node_obj, const, eq_duals=None):
        """Primal relaxation, residual bookkeeping, conditional dual step."""
        st = self.state
        per_node = node_obj + const
        self.last_per_node = per_node
        self.last_value = float(per_node.sum() - st.lam @ self.b)
        self.last_dual_lb, self.last_dual_ub = dual_lb, dual_ub
        if eq_duals is not None:
            self.last_eq_duals = eq_duals
        st.v = st.v + self.stepsize * (v_hat - st.v)
        resid, coup, cons = self.residuals()
        st.iteration += 1
        st.coupling_history.append(coup)
        st.consistency_history.append(cons)
        st.objective_history.append(self.last_value)
        if coup <= self.tol and cons <= self.tol:
            self.converged = True
            return True
        st.lam = st.lam + self.penalty * self.stepsize * resid
        if self.sh is not None and len(self.edges):
            x = st.v[:, self.sh]
            st.mu = st.mu + self.penalty * self.stepsize * (
                x[self.edges[:, 0]] - x[self.edges[:, 1]])
        self._stall_control(max(coup, cons))
        return False

    def _stall_control(self, r: float) -> None:
        if self.stepsize <= self.step_floor:
            return
        if r > 1e3 * self._best:
            self.stepsize = max(self.step_floor, 0.5 * self.stepsize)
            self._win_min, self._prev_min = np.inf, None
            return
        self._best = min(self._best, r)
        self._win_min = min(self._win_min, r)
        if self.state.iteration % self._window == 0:
            if self._prev_min is not None and self._win_min > 0.90 * self._prev_min:
                self.stepsize = max(self.step_floor, 0.5 * self.stepsize)
                self._prev_min = None
            else:
                self._prev_min = self._win_min
            self._win_min = np.inf

    def solve_nodes_direct(self, c):
        """Per-node exact solves; required when node equality links exist."""
        J, nv = self.scenario.num_nodes, self.scenario.node_dim
        v_hat = np.zeros((J, nv))
        dual_lb = np.zeros((J, nv))
        dual_ub = np.zeros((J, nv))
        obj = np.zeros(J)
        eq_duals: list = [None] * J
        for i in range(J):
            sol, rows = _solve_node(self, i, c[i])
            v_hat[i] = sol.x
            obj[i] = sol.objective
            dual_lb[i] = sol.boundDuals
            for r, var in rows:
                dual_ub[i, var] = sol.ineqDuals[r]
            if self.scenario.node_link is not None and self.scenario.node_link[i] is not None:
                eq_duals[i] = sol.eqDuals.copy()
        return v_hat, dual_lb, dual_ub, obj, eq_duals

    def subgradient(self) -> np.ndarray:
        g = np.zeros(self.z.size)
        for node, var, k, coeff in self.z_bound:
            g[k] -= coeff * self.last_dual_ub[node, var]
        if self.scenario.node_link is not None:
            for i, link in enumerate(self.scenario.node_link):
                if link is not None and self.last_eq_duals[i] is not None:
                    _, T, _ = link
                    g[:T.shape[1]] += T.T @ self.last_eq_duals[i]
        return g

    def result(self) -> AdalResult:
        status = AdalStatus.CONVERGED if self.converged else AdalStatus.NOT_CONVERGED
        shared = None
        if self.sh is not None:
            shared = float(self.state.v[:, self.sh].mean())
        return AdalResult(status, self.state, self.last_value,
                          self.last_per_node.copy(), self.subgradient(),
                          shared, self.state.iteration)


def _solve_node(work: _Work, node: int, c_node: np.ndarray):
    """Exact node solve through the dense QP path (handles equality links)."""
    nv = work.scenario.node_dim
    fin_ub = np.flatnonzero(np.isfinite(work.ub[node]))
    ineqA = ineqB = None
    rows = []
    if fin_ub.size:
        ineqA = np.zeros((fin_ub.size, nv))
        ineqA[np.arange(fin_ub.size), fin_ub] = 1.0
        ineqB = work.ub[node][fin_ub]
        rows = list(zip(range(fin_ub.size), fin_ub))
    eqA = eqB = None
    if work.scenario.node_link is not None and work.scenario.node_link[node] is not None:
        W, T, h = work.scenario.node_link[node]
        eqA = np.asarray(W, dtype=float)
        eqB = np.asarray(h, dtype=float) - np.asarray(T, dtype=float) @ work.z
    prob = QpProblem(work.Q[node], c_node, eqA, eqB, ineqA, ineqB, work.lb[node])
    sol = solve_qp(prob, tol=1e-10)
    if sol.status != SolveStatus.OPTIMAL:
        raise RuntimeError(f"node {node} subproblem ended with status {sol.status}")
    return sol, rows


@dataclass
class NodeSolve:
    primal: np.ndarray
    shared: float | None
    duals: dict
    objective: float


def local_subproblem(node: int, scenario: DecomposedScenario, state: AdalState,
                     config: AdalConfig | None, z) -> NodeSolve:
    """Exact minimizer of node's augmented Lagrangian at ``state``.

    Returns the primal block, its shared-coordinate copy, the duals of the
    node's linking constraints (logical upper bounds keyed by z-index, and
    equality links when present), and the local objective value.
    """
    work = _Work(scenario, config, z, initial=state)
    c, const = work.assemble()
    sol, rows = _solve_node(work, node, c[node])
    logical = {}
    for r, var in rows:
        for nd, v2, k, coeff in work.z_bound:
            if nd == node and v2 == var:
                logical[k] = logical.get(k, 0.0) + float(sol.ineqDuals[r])
    eq = None
    if scenario.node_link is not None and scenario.node_link[node] is not None:
        eq = sol.eqDuals.copy()
    shared = None if work.sh is None else float(sol.x[work.sh])
    return NodeSolve(sol.x.copy(), shared, {"logical": logical, "equality": eq},
                     float(sol.objective + const[node]))


def _sweep(works: list) -> None:
    """One Jacobi iteration over every active work item; node problems of
    all scenarios without equality links are batched into one box-QP call
    per block dimension."""
    fast = [w for w in works if w.scenario.node_link is None]
    slow = [w for w in works if w.scenario.node_link is not None]
    assembled = {id(w): w.assemble() for w in works}
    by_dim: dict[int, list] = {}
    for w in fast:
        by_dim.setdefault(w.scenario.node_dim, []).append(w)
    for group in by_dim.values():
        Q = np.concatenate([w.Q for w in group])
        c = np.concatenate([assembled[id(w)][0] for w in group])
        lb = np.concatenate([w.lb for w in group])
        ub = np.concatenate([w.ub for w in group])
        warm = None
        if all(w._box_warm is not None for w in group):
            warm = np.concatenate([w._box_warm for w in group])
        x, dlb, dub, obj = batch_box_qp(Q, c, lb, ub, warm=warm)
        ofs = 0
        for w in group:
            J = w.scenario.num_nodes
            sl = slice(ofs, ofs + J)
            ofs += J
            w._box_warm = x[sl].copy()
            w.finish_sweep(x[sl], dlb[sl], dub[sl], obj[sl], assembled[id(w)][1])
    for w in slow:
        c, const = assembled[id(w)]
        v_hat, dual_lb, dual_ub, obj, eq_duals = w.solve_nodes_direct(c)
        w.finish_sweep(v_hat, dual_lb, dual_ub, obj, const, eq_duals)


def adal_iterate(scenario: DecomposedScenario, state: AdalState,
                 config: AdalConfig | None, z) -> AdalState:
    """One full iteration (node solves, primal relaxation, conditional dual
    update) from ``state``; returns the updated state."""
    work = _Work(scenario, config, z, initial=state)
    work.state.coupling_history = list(state.coupling_history)
    work.state.consistency_history = list(state.consistency_history)
    work.state.objective_history = list(state.objective_history)
    work.state.iteration = state.iteration
    _sweep([work])
    return work.state


def run_adal_batch(scenarios, config: AdalConfig | None, z,
                   initial_states=None) -> list[AdalResult]:
    """Run the iteration on many scenarios in lockstep (one batched node
    solve per sweep across all unconverged scenarios)."""
    if initial_states is None:
        initial_states = [None] * len(scenarios)
    works = [_Work(sc, config, z, initial=st)
             for sc, st in zip(scenarios, initial_states)]
    active = list(works)
    max_iter = max(w.max_iter for w in works) if works else 0
    for _ in range(max_iter):
        if not active:
            break
        _sweep(active)
        active = [w for w in active if not w.converged
                  and w.state.iteration < w.max_iter]
    return [w.result() for w in works]


def run_adal(scenario: DecomposedScenario, config: AdalConfig | None, z,
             initial_state: AdalState | None = None) -> AdalResult:
    """Iterate to residual tolerance (or max_iterations, returning status
    NotConverged); on convergence the reconstructed value matches the
    centralized scenario optimum within roughly 10x the residual tolerance."""
    return run_adal_batch([scenario], config, z,
                          initial_states=[initial_state])[0]
