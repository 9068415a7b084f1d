"""Dense convex quadratic and linear programming.

``solve_qp`` handles problems of the form

    minimize    0.5 x'Qx + q'x
    subject to  eqA x = eqB
                ineqA x <= ineqB
                x >= lower        (entries of lower may be -inf)

with Q symmetric positive semidefinite (Q = 0 gives an LP).  The method is a
primal-dual interior point iteration with a Mehrotra predictor-corrector
step.  It is fully deterministic: no randomization, no pivoting choices.

Dual sign convention: stationarity reads

    Qx + q + eqA' y + ineqA' lam - nu = 0,   lam >= 0,  nu >= 0,

so for ``min 0.5(x^2 + y^2) s.t. x + y = 2`` the equality dual is -1, and
the optimal value responds to right-hand-side changes by d(obj)/d(eqB) = -y
and d(obj)/d(ineqB) = -lam.

``batch_box_qp`` solves many independent box-constrained QPs of equal shape
in one vectorized iteration; the distributed subproblem sweep relies on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SolveStatus:
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


_REG = 1e-12
_RATIO_CAP = 1e14
_DIVERGE = 1e12


def _solve_dense(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Linear solve with escalating diagonal regularization on breakdown."""
    scale = max(1.0, float(np.max(np.abs(M))))
    for boost in (0.0, 1e-10, 1e-6):
        try:
            if boost:
                M = M + (boost * scale) * np.eye(M.shape[0])
            return np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            continue
    return np.linalg.lstsq(M, rhs, rcond=None)[0]


@dataclass(frozen=True)
class QpProblem:
    quadratic: np.ndarray | None
    linear: np.ndarray
    eqA: np.ndarray | None = None
    eqB: np.ndarray | None = None
    ineqA: np.ndarray | None = None
    ineqB: np.ndarray | None = None
    lower: np.ndarray | None = None

    def __post_init__(self):
        q = np.asarray(self.linear, dtype=float)
        if q.ndim != 1 or q.size == 0:
            raise ValueError("linear must be a nonempty 1-d array")
        n = q.size
        object.__setattr__(self, "linear", q)

        Q = self.quadratic
        if Q is not None:
            Q = np.asarray(Q, dtype=float)
            if Q.shape != (n, n):
                raise ValueError(f"quadratic must be ({n}, {n})")
            if not np.allclose(Q, Q.T, atol=1e-10):
                raise ValueError("quadratic must be symmetric")
            Q = 0.5 * (Q + Q.T)
        object.__setattr__(self, "quadratic", Q)

        A, b = self.eqA, self.eqB
        if (A is None) != (b is None):
            raise ValueError("eqA and eqB must be given together")
        if A is not None:
            A = np.atleast_2d(np.asarray(A, dtype=float))
            b = np.atleast_1d(np.asarray(b, dtype=float))
            if A.shape != (b.size, n):
                raise ValueError("eqA/eqB shapes disagree")
        object.__setattr__(self, "eqA", A)
        object.__setattr__(self, "eqB", b)

        G, h = self.ineqA, self.ineqB
        if (G is None) != (h is None):
            raise ValueError("ineqA and ineqB must be given together")
        if G is not None:
            G = np.atleast_2d(np.asarray(G, dtype=float))
            h = np.atleast_1d(np.asarray(h, dtype=float))
            if G.shape != (h.size, n):
                raise ValueError("ineqA/ineqB shapes disagree")
        object.__setattr__(self, "ineqA", G)
        object.__setattr__(self, "ineqB", h)

        lb = self.lower
        if lb is None:
            lb = np.full(n, -np.inf)
        else:
            lb = np.asarray(lb, dtype=float)
            if lb.shape != (n,):
                raise ValueError(f"lower must have length {n}")
            if np.any(np.isposinf(lb)) or np.any(np.isnan(lb)):
                raise ValueError("lower bounds must be finite or -inf")
        object.__setattr__(self, "lower", lb)

    @property
    def n(self) -> int:
        return self.linear.size

    def to_json(self) -> dict:
        """Plain-data dump, mainly for debugging failed instances."""
        out = {"linear": self.linear.tolist(), "lower": self.lower.tolist()}
        out["quadratic"] = None if self.quadratic is None else self.quadratic.tolist()
        out["eqA"] = None if self.eqA is None else self.eqA.tolist()
        out["eqB"] = None if self.eqB is None else self.eqB.tolist()
        out["ineqA"] = None if self.ineqA is None else self.ineqA.tolist()
        out["ineqB"] = None if self.ineqB is None else self.ineqB.tolist()
        return out


@dataclass
class QpSolution:
    status: str
    x: np.ndarray
    objective: float
    eqDuals: np.ndarray
    ineqDuals: np.ndarray
    boundDuals: np.ndarray
    iterations: int
    residuals: dict = field(default_factory=dict)


def _kkt_residuals(prob: QpProblem, x, y, lam, nu):
    Q, q, A, b, G, h, lb = (prob.quadratic, prob.linear, prob.eqA, prob.eqB,
                            prob.ineqA, prob.ineqB, prob.lower)
    grad = q.copy()
    if Q is not None:
        grad += Q @ x
    if A is not None:
        grad += A.T @ y
    if G is not None:
        grad += G.T @ lam
    grad -= nu
    stat = float(np.max(np.abs(grad))) if grad.size else 0.0
    eq = float(np.max(np.abs(A @ x - b))) if A is not None and A.size else 0.0
    ineq = 0.0
    comp = 0.0
    if G is not None and G.size:
        slack = h - G @ x
        ineq = float(max(0.0, -slack.min()))
        comp = float(np.max(np.abs(lam * slack)))
    fin = np.isfinite(lb)
    bound = 0.0
    if fin.any():
        gap = x[fin] - lb[fin]
        bound = float(max(0.0, -gap.min()))
        comp = max(comp, float(np.max(np.abs(nu[fin] * gap))))
    return {"stationarity": stat, "eq": eq, "ineq": ineq, "bound": bound,
            "complementarity": comp}


def _polish(prob: QpProblem, x0, lam0, nu0, tol):
    """Active-set refinement of a near-optimal interior-point iterate.

    Bounds and inequality rows are split into active and inactive by
    comparing each pair's gap against its multiplier estimate, the
    equality-constrained problem on the predicted active set is solved
    exactly, and a few pivot rounds repair misclassified pairs.  Returns
    ``(x, y, lam, nu, residuals)`` when the full KKT system holds within
    ``tol`` and None when it does not; callers treat None as "keep the
    interior-point iterate".
    """
    n = prob.n
    Q, q = prob.quadratic, prob.linear
    A = prob.eqA if prob.eqA is not None else np.zeros((0, n))
    b = prob.eqB if prob.eqB is not None else np.zeros(0)
    G = prob.ineqA if prob.ineqA is not None else np.zeros((0, n))
    h = prob.ineqB if prob.ineqB is not None else np.zeros(0)
    lb = prob.lower
    p, m = A.shape[0], G.shape[0]
    fin = np.isfinite(lb)
    flip = 0.1 * tol

    act_b = fin & (nu0 > np.where(fin, x0 - lb, np.inf))
    act_i = lam0 > (h - G @ x0) if m else np.zeros(0, dtype=bool)
    for _ in range(4):
        free = ~act_b
        C = np.vstack([A, G[act_i]])
        r = np.concatenate([b, h[act_i]])
        if np.any(act_b):
            r = r - C[:, act_b] @ lb[act_b]
        nf, nc = int(free.sum()), C.shape[0]
        K = np.zeros((nf + nc, nf + nc))
        rhs = np.zeros(nf + nc)
        if Q is not None:
            K[:nf, :nf] = Q[np.ix_(free, free)]
            if np.any(act_b):
                rhs[:nf] -= Q[np.ix_(free, act_b)] @ lb[act_b]
        K[:nf, nf:] = C[:, free].T
        K[nf:, :nf] = C[:, free]
        rhs[:nf] -= q[free]
        rhs[nf:] = r
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        x = np.where(act_b, lb, 0.0)
        x[free] = sol[:nf]
        mult = sol[nf:]
        y = mult[:p]
        lam = np.zeros(m)
        lam[act_i] = mult[p:]
        grad = q.copy()
        if Q is not None:
            grad += Q @ x
        if p:
            grad += A.T @ y
        if m:
            grad += G.T @ lam
        nu = np.where(act_b, grad, 0.0)

        gap = np.where(fin, x - lb, np.inf)
        slack = h - G @ x if m else np.zeros(0)
        pin = fin & free & (gap < -flip)
        rel = act_b & (nu < -flip)
        add = ~act_i & (slack < -flip)
        drop = act_i & (lam < -flip)
        if not (pin.any() or rel.any() or add.any() or drop.any()):
            # clamping the sub-threshold negatives perturbs the checked
            # residuals by at most ``flip``
            lam = np.maximum(lam, 0.0)
            nu = np.maximum(nu, 0.0)
            res = _kkt_residuals(prob, x, y, lam, nu)
            if max(res.values()) <= tol:
                return x, y, lam, nu, res
            return None
        act_b = (act_b | pin) & ~rel
        act_i = (act_i | add) & ~drop
    return None


def _objective(prob: QpProblem, x) -> float:
    val = float(prob.linear @ x)
    if prob.quadratic is not None:
        val += 0.5 * float(x @ (prob.quadratic @ x))
    return val


def solve_qp(prob: QpProblem, tol: float = 1e-8, max_iter: int | None = None) -> QpSolution:
    """Interior-point solve of ``prob``; see the module docstring for the
    dual sign convention.  On status Optimal every KKT residual
    (stationarity, primal feasibility, complementarity) is <= tol."""
    n = prob.n
    Q, q = prob.quadratic, prob.linear
    A = prob.eqA if prob.eqA is not None else np.zeros((0, n))
    b = prob.eqB if prob.eqB is not None else np.zeros(0)
    G = prob.ineqA if prob.ineqA is not None else np.zeros((0, n))
    h = prob.ineqB if prob.ineqB is not None else np.zeros(0)
    lb = prob.lower
    p, m = A.shape[0], G.shape[0]
    fin = np.isfinite(lb)
    f = int(fin.sum())
    if max_iter is None:
        max_iter = 50 * n

    if p:
        # inconsistent equality systems are infeasible regardless of the
        # objective or the remaining constraints
        x_ls = np.linalg.lstsq(A, b, rcond=None)[0]
        gap = np.abs(A @ x_ls - b).max(initial=0.0)
        if gap > 1e-8 * (1.0 + np.abs(b).max(initial=0.0)):
            return QpSolution(SolveStatus.INFEASIBLE, x_ls, _objective(prob, x_ls),
                              np.zeros(p), np.zeros(m), np.zeros(n), 0)

    diag_q = Q is None or not np.any(Q - np.diag(np.diagonal(Q)))
    q_diag = np.zeros(n) if Q is None else np.diagonal(Q).copy()
    # singleton inequality rows only touch the normal-equation diagonal
    if m:
        nz_count = np.count_nonzero(G, axis=1)
        single = nz_count <= 1
        g_dense = G[~single]
        dense_rows = np.flatnonzero(~single)
        single_rows = np.flatnonzero(single)
        single_var = np.array([int(np.argmax(G[r] != 0)) for r in single_rows], dtype=int)
        single_coef = np.array([G[r, v] for r, v in zip(single_rows, single_var)])
    else:
        g_dense = np.zeros((0, n))
        dense_rows = np.zeros(0, dtype=int)
        single_rows = np.zeros(0, dtype=int)
        single_var = np.zeros(0, dtype=int)
        single_coef = np.zeros(0)
    use_diag = diag_q and g_dense.shape[0] == 0

    def kkt_solve(dvec, M, rx, ry):
        """Solve [[M, A'], [A, 0]] (dx, dy) = (rx, ry); M given either as a
        diagonal vector or a dense matrix (selected by ``use_diag``)."""
        if use_diag:
            inv = 1.0 / dvec
            if p == 0:
                return inv * rx, np.zeros(0)
            AD = A * inv
            S = AD @ A.T
            S[np.diag_indices_from(S)] += _REG
            dy = _solve_dense(S, AD @ rx - ry)
            return inv * (rx - A.T @ dy), dy
        if p == 0:
            return _solve_dense(M, rx), np.zeros(0)
        sol = _solve_dense(M, np.column_stack([rx, A.T]))
        u, V = sol[:, 0], sol[:, 1:]
        S = A @ V
        S[np.diag_indices_from(S)] += _REG
        dy = _solve_dense(S, A @ u - ry)
        return u - V @ dy, dy

    # pure equality-constrained problems collapse to one linear solve
    if m == 0 and f == 0:
        M_diag = q_diag + _REG
        M = None
        if not use_diag:
            M = (Q if Q is not None else np.zeros((n, n))) + _REG * np.eye(n)
        try:
            x, y = kkt_solve(M_diag, M, -q, b if p else np.zeros(0))
        except np.linalg.LinAlgError:
            return QpSolution(SolveStatus.UNBOUNDED, np.zeros(n), -np.inf,
                              np.zeros(p), np.zeros(0), np.zeros(n), 0)
        res = _kkt_residuals(prob, x, y, np.zeros(0), np.zeros(n))
        ok = max(res.values()) <= max(tol, 1e-7 * max(1.0, float(np.abs(x).max(initial=0.0))))
        if not ok or np.abs(x).max(initial=0.0) > _DIVERGE:
            return QpSolution(SolveStatus.UNBOUNDED, x, _objective(prob, x),
                              y, np.zeros(0), np.zeros(n), 1, res)
        return QpSolution(SolveStatus.OPTIMAL, x, _objective(prob, x), y,
                          np.zeros(0), np.zeros(n), 1, res)

    # interior starting point
    x = np.where(fin, np.maximum(lb + 1.0, 0.0), 0.0)
    y = np.zeros(p)
    s = np.maximum(h - G @ x, 1.0) if m else np.zeros(0)
    lam = np.ones(m)
    w = np.maximum(x[fin] - lb[fin], 1.0)
    nu = np.ones(f)
    tiny = 1e-14

    best = None
    blowups = 0
    for it in range(1, max_iter + 1):
        nu_full = np.zeros(n)
        nu_full[fin] = nu
        res = _kkt_residuals(prob, x, y, lam, nu_full)
        worst = max(res.values())
        if best is None or worst < best[0]:
            best = (worst, x.copy(), y.copy(), lam.copy(), nu_full.copy(), it, dict(res))
        if worst <= tol:
            return QpSolution(SolveStatus.OPTIMAL, x, _objective(prob, x), y,
                              lam, nu_full, it, res)
        if best[0] <= 1e-7 and worst > 1e6 * best[0]:
            # numerical breakdown past the double-precision floor; healthy
            # solves may spike once and recover, so only give up when the
            # explosion persists, and then report the near-optimal best
            # iterate instead of the exploded one
            blowups += 1
            if blowups >= 3:
                break
        else:
            blowups = 0
        if np.abs(x).max(initial=0.0) > _DIVERGE and best[0] > 1e-6:
            return QpSolution(SolveStatus.UNBOUNDED, x, _objective(prob, x),
                              y, lam, nu_full, it, res)
        if (max(np.abs(y).max(initial=0.0), lam.max(initial=0.0),
                nu.max(initial=0.0)) > _DIVERGE and best[0] > 1e-6):
            return QpSolution(SolveStatus.INFEASIBLE, x, _objective(prob, x),
                              y, lam, nu_full, it, res)

        # residual vectors for the Newton system
        r_stat = prob.linear.copy()
        if Q is not None:
            r_stat += Q @ x
        if p:
            r_stat += A.T @ y
        if m:
            r_stat += G.T @ lam
        r_stat[fin] -= nu
        r_eq = A @ x - b if p else np.zeros(0)
        r_in = (G @ x + s - h) if m else np.zeros(0)
        r_bd = (x[fin] - lb[fin] - w) if f else np.zeros(0)
        mu = ((s @ lam if m else 0.0) + (w @ nu if f else 0.0)) / max(m + f, 1)

        def build_system():
            d = q_diag + _REG
            dval = np.zeros(n)
            if single_rows.size:
                ratio = np.minimum(lam[single_rows] / np.maximum(s[single_rows], tiny),
                                   _RATIO_CAP)
                np.add.at(dval, single_var, single_coef**2 * ratio)
            if f:
                dval[fin] += np.minimum(nu / np.maximum(w, tiny), _RATIO_CAP)
            if use_diag:
                return d + dval, None
            M = (Q.copy() if Q is not None else np.zeros((n, n)))
            M[np.diag_indices_from(M)] += dval + _REG
            if g_dense.shape[0]:
                dd = np.minimum(lam[dense_rows] / np.maximum(s[dense_rows], tiny),
                                _RATIO_CAP)
                M += (g_dense * dd[:, None]).T @ g_dense
            return None, M

        def direction(comp_s, comp_w):
            """Newton direction; comp_* is the linearized complementarity
            right-hand side (target minus current product)."""
            rx = -r_stat.copy()
            if m:
                rx -= G.T @ ((comp_s + lam * r_in) / np.maximum(s, tiny))
            if f:
                rx[fin] += (comp_w - nu * r_bd) / np.maximum(w, tiny)
            dx, dy = kkt_solve(M_diag, M_dense, rx, -r_eq)
            if m:
                ds = -r_in - G @ dx
                dlam = (comp_s - lam * ds) / np.maximum(s, tiny)
            else:
                ds = np.zeros(0); dlam = np.zeros(0)
            if f:
                dw = dx[fin] + r_bd
                dnu = (comp_w - nu * dw) / np.maximum(w, tiny)
            else:
                dw = np.zeros(0); dnu = np.zeros(0)
            return dx, dy, ds, dlam, dw, dnu

        M_diag, M_dense = build_system()

        def max_step(v, dv):
            neg = dv < 0
            if not np.any(neg):
                return 1.0
            return float(min(1.0, np.min(-v[neg] / dv[neg])))

        # predictor
        dx, dy, ds, dlam, dw, dnu = direction(-s * lam if m else np.zeros(0),
                                              -w * nu if f else np.zeros(0))
        ap = min(max_step(s, ds), max_step(w, dw))
        ad = min(max_step(lam, dlam), max_step(nu, dnu))
        mu_aff = (((s + ap * ds) @ (lam + ad * dlam) if m else 0.0)
                  + ((w + ap * dw) @ (nu + ad * dnu) if f else 0.0)) / max(m + f, 1)
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

        # corrector
        comp_s = sigma * mu - s * lam - ds * dlam if m else np.zeros(0)
        comp_w = sigma * mu - w * nu - dw * dnu if f else np.zeros(0)
        dx, dy, ds, dlam, dw, dnu = direction(comp_s, comp_w)
        tau = max(0.995, 1.0 - mu)
        ap = tau * min(max_step(s, ds), max_step(w, dw))
        ad = tau * min(max_step(lam, dlam), max_step(nu, dnu))
        ap, ad = min(ap, 1.0), min(ad, 1.0)

        x = x + ap * dx
        y = y + ad * dy
        if m:
            s = s + ap * ds
            lam = lam + ad * dlam
        if f:
            w = w + ap * dw
            nu = nu + ad * dnu

    worst, bx, by, blam, bnu, bit, bres = best
    if worst <= 1e-4:
        # the iteration stopped short of tol but identified the optimal
        # face; pinning the predicted active set and solving that system
        # exactly removes the crawl toward degenerate vertices
        pol = _polish(prob, bx, blam, bnu, tol)
        if pol is not None:
            px, py, plam, pnu, pres = pol
            return QpSolution(SolveStatus.OPTIMAL, px, _objective(prob, px),
                              py, plam, pnu, it, pres)
    return QpSolution(SolveStatus.ITERATION_LIMIT, bx, _objective(prob, bx),
                      by, blam, bnu, max_iter, bres)


def solve_lp(linear, eqA=None, eqB=None, ineqA=None, ineqB=None, lower=None,
             tol: float = 1e-8, max_iter: int | None = None) -> QpSolution:
    """LP front end: ``solve_qp`` with a zero quadratic."""
    prob = QpProblem(None, linear, eqA, eqB, ineqA, ineqB, lower)
    return solve_qp(prob, tol=tol, max_iter=max_iter)


def _box_verify(Q, c, lb, ub, pinned, has_lo, has_hi, xw, tol):
    """Active-set solve seeded by a previous solution of the same box QP.

    Coordinates of ``xw`` sitting on a bound are fixed there and the free
    block is solved in one batched linear solve; a few pivot rounds pin
    bound violators and release fixed coordinates with wrong-sign duals.
    Blocks are accepted only when the full KKT system holds within ``tol``.
    Returns (ok, x, dual_lb, dual_ub); entries with ok False are untouched
    input and must be re-solved by the interior-point path.
    """
    B, n = c.shape
    xw = np.clip(xw, np.where(has_lo | pinned, lb, -np.inf),
                 np.where(has_hi | pinned, ub, np.inf))
    scale = 1.0 + np.abs(xw)
    at_lo = ((has_lo & (xw - lb <= 1e-6 * scale)) | pinned)
    at_hi = has_hi & (ub - xw <= 1e-6 * scale) & ~at_lo
    eye = np.eye(n)
    # tiny diagonal shift keeps singular (flat) free blocks solvable;
    # the KKT check rejects any answer the shift degraded
    reg = 1e-10 * (1.0 + np.abs(np.einsum("bii->bi", Q)))

    ok = np.zeros(B, dtype=bool)
    x_out, zl_out, zu_out = xw.copy(), np.zeros((B, n)), np.zeros((B, n))
    idx = np.arange(B)
    Qa, ca, lba, uba, rega = Q, c, lb, ub, reg
    lo_a, hi_a, pin_a = has_lo, has_hi, pinned
    for _ in range(4):
        free = ~(at_lo | at_hi)
        xa = np.where(at_lo, lba, np.where(at_hi, uba, 0.0))
        rhs = np.where(free, -(ca + np.einsum("bij,bj->bi", Qa, xa)), 0.0)
        M = np.where(free[:, :, None] & free[:, None, :], Qa, 0.0)
        M = M + np.where(free, rega, 1.0)[:, :, None] * eye
        try:
            xf = np.linalg.solve(M, rhs[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            break
        x = np.where(free, xf, xa)
        grad = np.einsum("bij,bj->bi", Qa, x) + ca
        zl = np.where(at_lo & ~pin_a, np.maximum(grad, 0.0), 0.0)
        zu = np.where(at_hi, np.maximum(-grad, 0.0), 0.0)
        stat = np.where(pin_a, 0.0, grad - zl + zu)
        pin_lo = lo_a & free & (x < lba)
        pin_hi = hi_a & free & (x > uba)
        rel_lo = at_lo & ~pin_a & (grad < -tol)
        rel_hi = at_hi & (grad > tol)
        pivots = pin_lo | pin_hi | rel_lo | rel_hi
        clean = ~pivots.any(axis=1)
        good = clean & (np.abs(stat).max(axis=1) <= tol)
        good &= np.all(np.isfinite(np.where(free, x, 0.0)), axis=1)
        if np.any(good):
            dst = idx[good]
            x_out[dst], zl_out[dst], zu_out[dst] = x[good], zl[good], zu[good]
            ok[dst] = True
        cont = ~clean
        if not np.any(cont):
            break
        idx = idx[cont]
        at_lo = (at_lo | pin_lo)[cont] & ~rel_lo[cont]
        at_hi = (at_hi | pin_hi)[cont] & ~rel_hi[cont]
        Qa, ca, lba, uba, rega = Qa[cont], ca[cont], lba[cont], uba[cont], rega[cont]
        lo_a, hi_a, pin_a = lo_a[cont], hi_a[cont], pin_a[cont]
    return ok, x_out, zl_out, zu_out


def batch_box_qp(Q: np.ndarray, c: np.ndarray, lb: np.ndarray, ub: np.ndarray,
                 tol: float = 1e-9, max_iter: int = 100, warm=None):
    """Solve B independent problems min 0.5 x'Q_b x + c_b'x, lb_b <= x <= ub_b.

    Bound entries may be infinite; lb == ub pins a coordinate.  Q_b only
    needs to be positive semidefinite: flat directions are resolved by the
    barrier, which lands on a well-defined point of the optimal face.

    warm, if given, is the solution of a previous call with the same Q and
    box and a nearby c; blocks whose previous active set passes a direct
    KKT verification skip the interior-point iteration entirely.

    Returns (x, dual_lb, dual_ub, objective) with stationarity
    Qx + c - dual_lb + dual_ub = 0, both dual arrays >= 0.
    """
    Q = np.asarray(Q, dtype=float)
    c = np.asarray(c, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    B, n = c.shape
    if np.any(ub < lb - 1e-12):
        raise ValueError("box bounds are inconsistent (ub < lb)")

    pinned = (ub - lb) <= 0.0
    has_lo = np.isfinite(lb) & ~pinned
    has_hi = np.isfinite(ub) & ~pinned
    pairs = has_lo.sum(axis=1) + has_hi.sum(axis=1)

    if warm is not None:
        ok, xv, zlv, zuv = _box_verify(Q, c, lb, ub, pinned, has_lo, has_hi,
                                       np.asarray(warm, dtype=float), tol)
        if np.all(ok):
            x_full, zl_full, zu_full = xv, zlv, zuv
        else:
            rest = ~ok
            xr, zlr, zur = _box_ipm(Q[rest], c[rest], lb[rest], ub[rest],
                                    pinned[rest], has_lo[rest], has_hi[rest],
                                    pairs[rest], tol, max_iter)
            x_full, zl_full, zu_full = xv, zlv, zuv
            x_full[rest], zl_full[rest], zu_full[rest] = xr, zlr, zur
    else:
        x_full, zl_full, zu_full = _box_ipm(Q, c, lb, ub, pinned, has_lo,
                                            has_hi, pairs, tol, max_iter)

    # duals on pinned coordinates from the stationarity residual
    grad_full = np.einsum("bij,bj->bi", Q, x_full) + c
    zl_full = np.where(pinned, np.maximum(grad_full, 0.0), zl_full)
    zu_full = np.where(pinned, np.maximum(-grad_full, 0.0), zu_full)
    obj = 0.5 * np.einsum("bi,bij,bj->b", x_full, Q, x_full) + np.einsum(
        "bi,bi->b", c, x_full)
    return x_full, zl_full, zu_full, obj


def _box_ipm(Q, c, lb, ub, pinned, has_lo, has_hi, pairs, tol, max_iter):
    """Batched predictor-corrector barrier iteration for box QPs."""
    B, n = c.shape
    # interior margin shrinks with the box so narrow boxes start feasible
    margin = np.minimum(0.1, 0.25 * (ub - lb))
    start = np.clip(np.zeros((B, n)), np.where(has_lo, lb + margin, -np.inf),
                    np.where(has_hi, ub - margin, np.inf))
    x_full = np.where(pinned, lb, start)
    zl_full = np.where(has_lo, 1.0, 0.0)
    zu_full = np.where(has_hi, 1.0, 0.0)

    active = np.arange(B)
    x, zl, zu = x_full.copy(), zl_full.copy(), zu_full.copy()
    Qa, ca, lba, uba = Q, c, lb, ub
    lo_a, hi_a, pin_a, pairs_a = has_lo, has_hi, pinned, np.maximum(pairs, 1)
    tiny = 1e-14
    eye = np.eye(n)
    # blocks whose error stops shrinking switch from the aggressive
    # corrector to plain centering steps, which cannot cycle
    best_err = np.full(B, np.inf)
    stall = np.zeros(B, dtype=int)
    conserv = np.zeros(B, dtype=bool)

    for it in range(max_iter):
        if active.size == 0:
            break
        grad = np.einsum("bij,bj->bi", Qa, x) + ca
        r_dual = grad - zl + zu
        r_dual[pin_a] = 0.0
        wl = np.where(lo_a, x - lba, 1.0)
        wu = np.where(hi_a, uba - x, 1.0)
        gap = (np.where(lo_a, wl * zl, 0.0).sum(axis=1)
               + np.where(hi_a, wu * zu, 0.0).sum(axis=1)) / pairs_a
        err = np.maximum(np.abs(r_dual).max(axis=1), gap)
        stall = np.where(err < 0.9 * best_err, 0, stall + 1)
        best_err = np.minimum(best_err, err)
        conserv = conserv | (stall >= 10)
        done = (np.abs(r_dual).max(axis=1) <= tol) & (gap <= tol)
        if it >= max_iter - 1:
            done = done | ((np.abs(r_dual).max(axis=1) <= 10 * tol) & (gap <= 10 * tol))
        if np.any(done):
            idx = active[done]
            x_full[idx] = x[done]
            zl_full[idx] = zl[done]
            zu_full[idx] = zu[done]
            keep = ~done
            active = active[keep]
            if active.size == 0:
                break
            x, zl, zu = x[keep], zl[keep], zu[keep]
            Qa, ca, lba, uba = Qa[keep], ca[keep], lba[keep], uba[keep]
            lo_a, hi_a, pin_a, pairs_a = lo_a[keep], hi_a[keep], pin_a[keep], pairs_a[keep]
            grad, r_dual, wl, wu, gap = (grad[keep], r_dual[keep], wl[keep],
                                         wu[keep], gap[keep])
            best_err, stall, conserv = best_err[keep], stall[keep], conserv[keep]

        dl = np.where(lo_a, zl / np.maximum(wl, tiny), 0.0)
        du = np.where(hi_a, zu / np.maximum(wu, tiny), 0.0)
        M = Qa + (dl + du + _REG)[:, :, None] * eye
        # pinned coordinates: identity row/col, zero rhs
        if np.any(pin_a):
            mask = pin_a[:, :, None] | pin_a[:, None, :]
            M = np.where(mask, 0.0, M)
            M = M + np.where(pin_a, 1.0, 0.0)[:, :, None] * eye

        mu = gap

        def newton(comp_l, comp_u):
            rhs = -r_dual + np.where(lo_a, comp_l / np.maximum(wl, tiny), 0.0) \
                          - np.where(hi_a, comp_u / np.maximum(wu, tiny), 0.0)
            rhs = np.where(pin_a, 0.0, rhs)
            dx = np.linalg.solve(M, rhs[:, :, None])[:, :, 0]
            dzl = np.where(lo_a, (comp_l - zl * dx) / np.maximum(wl, tiny), 0.0)
            dzu = np.where(hi_a, (comp_u + zu * dx) / np.maximum(wu, tiny), 0.0)
            return dx, dzl, dzu

        def max_step(v, dv, mask):
            ratio = np.where(mask & (dv < 0), -v / np.where(dv < 0, dv, -1.0), np.inf)
            return np.minimum(1.0, ratio.min(axis=1))

        comp_l0 = np.where(lo_a, -wl * zl, 0.0)
        comp_u0 = np.where(hi_a, -wu * zu, 0.0)
        dx, dzl, dzu = newton(comp_l0, comp_u0)
        ap = np.minimum(max_step(wl, dx, lo_a), max_step(wu, -dx, hi_a))
        ad = np.minimum(max_step(zl, dzl, lo_a), max_step(zu, dzu, hi_a))
        wl_a = wl + ap[:, None] * dx
        wu_a = wu - ap[:, None] * dx
        mu_aff = (np.where(lo_a, wl_a * (zl + ad[:, None] * dzl), 0.0).sum(axis=1)
                  + np.where(hi_a, wu_a * (zu + ad[:, None] * dzu), 0.0).sum(axis=1)) / pairs_a
        sigma = np.where(mu > 0, (mu_aff / np.maximum(mu, tiny)) ** 3, 0.0)
        sigma = np.where(conserv, 0.5, sigma)

        cross_l = np.where(conserv[:, None], 0.0, dx * dzl)
        cross_u = np.where(conserv[:, None], 0.0, dx * dzu)
        comp_l = np.where(lo_a, sigma[:, None] * mu[:, None] - wl * zl - cross_l, 0.0)
        comp_u = np.where(hi_a, sigma[:, None] * mu[:, None] - wu * zu + cross_u, 0.0)
        dx, dzl, dzu = newton(comp_l, comp_u)
        tau = np.where(conserv, 0.9, np.maximum(0.995, 1.0 - mu))
        ap_n = np.minimum(max_step(wl, dx, lo_a), max_step(wu, -dx, hi_a))
        ad_n = np.minimum(max_step(zl, dzl, lo_a), max_step(zu, dzu, hi_a))
        both = np.minimum(ap_n, ad_n)
        ap = (tau * np.where(conserv, both, ap_n))[:, None]
        ad = (tau * np.where(conserv, both, ad_n))[:, None]

        x = x + ap * dx
        zl = np.where(lo_a, zl + ad * dzl, 0.0)
        zu = np.where(hi_a, zu + ad * dzu, 0.0)

    if active.size:
        raise RuntimeError(f"{active.size} box QPs failed to converge in {max_iter} iterations")

    return x_full, zl_full, zu_full
