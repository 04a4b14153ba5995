"""Dense convex QP solver (dual active-set, Goldfarb-Idnani).

Solves::

    minimize    0.5 x'Hx + g'x
    subject to  lb <= x <= ub
                cl <= C x <= cu

Internally every finite bound becomes a one-sided constraint ``n'x >= b``.
The working set is represented by a QR factorisation of ``L^-1 N_W'``
(``H = L L'``) which is updated column by column, so each iteration costs
O(n^2).  A strictly convex problem is solved in one pass; a merely
semidefinite ``H`` is handled with proximal-point outer iterations followed
by an exact polish on the final working set.

Infeasibility is only ever reported together with a Farkas certificate.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)

_INF = np.inf


class QpError(ValueError):
    """Rejected problem data (shape mismatch, non-PSD Hessian, ...)."""


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max_iterations"


@dataclass
class QpSettings:
    tol: float = 1e-6
    max_iter: int = 4000
    feas_tol: float = 1e-9
    psd_tol: float = 1e-8
    prox_rho: float = 1e-6
    max_prox: int = 200


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    C: np.ndarray | None = None
    cl: np.ndarray | None = None
    cu: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.asarray(self.g, dtype=float).ravel()
        n = self.g.size
        if self.H.shape != (n, n):
            raise QpError(f"H has shape {self.H.shape}, expected ({n}, {n})")
        scale = max(1.0, float(np.max(np.abs(self.H)))) if n else 1.0
        if n and np.max(np.abs(self.H - self.H.T)) > 1e-8 * scale:
            raise QpError("H is not symmetric")
        self.lb = _vec(self.lb, n, -_INF, "lb")
        self.ub = _vec(self.ub, n, _INF, "ub")
        if self.C is None:
            self.C = np.zeros((0, n))
        self.C = np.asarray(self.C, dtype=float)
        if self.C.ndim == 1:
            self.C = self.C.reshape(1, -1)
        if self.C.shape[1] != n:
            raise QpError(f"C has {self.C.shape[1]} columns, expected {n}")
        m = self.C.shape[0]
        self.cl = _vec(self.cl, m, -_INF, "cl")
        self.cu = _vec(self.cu, m, _INF, "cu")

    @property
    def n(self) -> int:
        return self.g.size

    @property
    def m(self) -> int:
        return self.C.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.H @ x + self.g @ x)

    def max_violation(self, x) -> float:
        """Largest absolute constraint violation at ``x`` (0 if feasible)."""
        x = np.asarray(x, dtype=float)
        viol = [0.0]
        if self.n:
            viol.append(np.max(np.maximum(self.lb - x, 0.0)))
            viol.append(np.max(np.maximum(x - self.ub, 0.0)))
        if self.m:
            cx = self.C @ x
            viol.append(np.max(np.maximum(self.cl - cx, 0.0)))
            viol.append(np.max(np.maximum(cx - self.cu, 0.0)))
        return float(max(viol))


def _vec(v, size, fill, name):
    if v is None:
        return np.full(size, fill)
    v = np.asarray(v, dtype=float).ravel()
    if v.size != size:
        raise QpError(f"{name} has length {v.size}, expected {size}")
    return v


@dataclass
class QpSolution:
    """Solver output.

    ``y_bounds``/``y_rows`` are signed multipliers: positive when the lower
    side is active, negative for the upper side.  Infeasible results carry a
    :class:`FarkasCertificate` instead.
    """

    x: np.ndarray
    status: Status
    objective: float
    kkt_residual: float
    iterations: int = 0
    y_bounds: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y_rows: np.ndarray = field(default_factory=lambda: np.zeros(0))
    active: tuple = ()
    certificate: FarkasCertificate | None = None

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class HessianFactor:
    """Cholesky factor of a positive definite H, reusable across solves."""

    def __init__(self, H, shift: float = 0.0):
        H = np.asarray(H, dtype=float)
        n = H.shape[0]
        self.shift = shift
        L = np.linalg.cholesky(H + shift * np.eye(n)) if n else np.zeros((0, 0))
        self.Linv = sla.solve_triangular(L, np.eye(n), lower=True, check_finite=False)
        self.LinvT = np.ascontiguousarray(self.Linv.T)

    def solve(self, rhs):
        return self.LinvT @ (self.Linv @ rhs)


def try_factor(H, min_pivot: float = 1e-9) -> HessianFactor | None:
    """Factor H if it is safely positive definite, else None."""
    try:
        fac = HessianFactor(H)
    except np.linalg.LinAlgError:
        return None
    # 1 / max|Linv| bounds the smallest Cholesky pivot from above
    scale = max(1.0, float(np.max(np.abs(H))))
    if fac.Linv.size and np.max(np.abs(fac.Linv)) ** -2 < min_pivot * scale:
        return None
    return fac


# ----------------------------------------------------------------------------
# one-sided constraint representation


@dataclass
class _Constraints:
    N: np.ndarray          # (K, n) normals, constraint is N x >= b
    b: np.ndarray
    norms: np.ndarray
    is_eq: np.ndarray      # bool (K,)
    kind: np.ndarray       # 0 = variable bound, 1 = general row
    index: np.ndarray      # bound / row index
    sign: np.ndarray       # +1 lower side, -1 upper side


def _one_sided(p: QpProblem, eq_tol: float) -> _Constraints:
    n, m = p.n, p.m
    blocks_N, blocks_b, eq, kind, idx, sign = [], [], [], [], [], []

    def add(rows, lo, hi, k):
        both = np.isfinite(lo) & np.isfinite(hi)
        is_eq = both & (np.abs(hi - lo) <= eq_tol * (1.0 + np.abs(lo)))
        lo_i = np.flatnonzero(np.isfinite(lo))
        hi_i = np.flatnonzero(np.isfinite(hi) & ~is_eq)
        blocks_N.append(rows[lo_i])
        blocks_b.append(lo[lo_i])
        eq.append(is_eq[lo_i])
        kind.append(np.full(lo_i.size, k))
        idx.append(lo_i)
        sign.append(np.ones(lo_i.size))
        blocks_N.append(-rows[hi_i])
        blocks_b.append(-hi[hi_i])
        eq.append(np.zeros(hi_i.size, dtype=bool))
        kind.append(np.full(hi_i.size, k))
        idx.append(hi_i)
        sign.append(-np.ones(hi_i.size))

    add(np.eye(n), p.lb, p.ub, 0)
    add(p.C, p.cl, p.cu, 1)
    N = np.vstack(blocks_N) if blocks_N else np.zeros((0, n))
    norms = np.linalg.norm(N, axis=1)
    norms[norms == 0.0] = 1.0
    return _Constraints(
        N=N,
        b=np.concatenate(blocks_b),
        norms=norms,
        is_eq=np.concatenate(eq),
        kind=np.concatenate(kind),
        index=np.concatenate(idx),
        sign=np.concatenate(sign),
    )


def _signed_multipliers(p: QpProblem, cons: _Constraints, W, u):
    y_b = np.zeros(p.n)
    y_r = np.zeros(p.m)
    for k, uk in zip(W, u):
        target = y_b if cons.kind[k] == 0 else y_r
        target[cons.index[k]] += cons.sign[k] * uk
    return y_b, y_r


# ----------------------------------------------------------------------------
# residuals and certificates


def kkt_residual(p: QpProblem, x, y_bounds, y_rows) -> float:
    """Scaled KKT residual: max of stationarity, primal, dual, complementarity."""
    x = np.asarray(x, dtype=float)
    Hx = p.H @ x
    Cty = p.C.T @ y_rows if p.m else np.zeros(p.n)
    stat = Hx + p.g - y_bounds - Cty
    s_scale = 1.0 + max(_amax(Hx), _amax(p.g), _amax(y_bounds), _amax(Cty))
    r_stat = _amax(stat) / s_scale

    cx = p.C @ x if p.m else np.zeros(0)
    r_prim = 0.0
    for val, lo, hi in ((x, p.lb, p.ub), (cx, p.cl, p.cu)):
        if val.size:
            r_prim = max(r_prim, _amax(np.maximum(lo - val, 0.0) / (1.0 + np.abs(np.nan_to_num(lo)))))
            r_prim = max(r_prim, _amax(np.maximum(val - hi, 0.0) / (1.0 + np.abs(np.nan_to_num(hi)))))

    r_dual = 0.0
    r_comp = 0.0
    for val, lo, hi, y in ((x, p.lb, p.ub, y_bounds), (cx, p.cl, p.cu, y_rows)):
        if not val.size:
            continue
        pos, neg = np.maximum(y, 0.0), np.maximum(-y, 0.0)
        # multipliers on an infinite side are dual infeasible
        r_dual = max(r_dual, _amax(np.where(np.isfinite(lo), 0.0, pos)))
        r_dual = max(r_dual, _amax(np.where(np.isfinite(hi), 0.0, neg)))
        slack_lo = np.where(np.isfinite(lo), val - lo, 0.0)
        slack_hi = np.where(np.isfinite(hi), hi - val, 0.0)
        comp = np.maximum(np.abs(pos * slack_lo), np.abs(neg * slack_hi))
        r_comp = max(r_comp, _amax(comp) / (1.0 + _amax(y)))
    return float(max(r_stat, r_prim, r_dual, r_comp))


@dataclass
class FarkasCertificate:
    """Non-negative multipliers on each side of every bound and row.

    Any ``x`` in the constraint set would satisfy ``0 = y'(N x) >= y'b``; a
    zero combination of normals with a strictly positive right-hand side
    therefore proves the set is empty.
    """

    lower_bounds: np.ndarray
    upper_bounds: np.ndarray
    lower_rows: np.ndarray
    upper_rows: np.ndarray

    def evaluate(self, p: QpProblem) -> tuple[float, float]:
        """Return ``(normal_residual, margin)``; infeasible iff ~0 and > 0."""
        yb = self.lower_bounds - self.upper_bounds
        yr = self.lower_rows - self.upper_rows
        resid = yb + (p.C.T @ yr if p.m else 0.0)
        margin = (
            _wdot(self.lower_bounds, p.lb)
            - _wdot(self.upper_bounds, p.ub)
            + _wdot(self.lower_rows, p.cl)
            - _wdot(self.upper_rows, p.cu)
        )
        scale = max(_amax(self.lower_bounds), _amax(self.upper_bounds),
                    _amax(self.lower_rows), _amax(self.upper_rows), 1e-300)
        return _amax(np.atleast_1d(resid)) / scale, margin / scale


def _wdot(w, v):
    mask = w > 0
    return float(np.sum(w[mask] * v[mask])) if mask.any() else 0.0


def _amax(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


# ----------------------------------------------------------------------------
# Goldfarb-Idnani core


class _Infeasible(Exception):
    def __init__(self, y):
        self.y = y


class _ActiveSet:
    """Working set with the QR factors of L^-1 N_W'."""

    def __init__(self, fac: HessianFactor, cons: _Constraints, dep_tol: float):
        n = fac.Linv.shape[0]
        self.fac = fac
        self.cons = cons
        self.dep_tol = dep_tol
        self.Q = np.eye(n)
        self.R = np.zeros((n, 0))
        self.W: list[int] = []
        self.u: list[float] = []

    @property
    def q(self) -> int:
        return len(self.W)

    def directions(self, k):
        """Primal step z and dual step r for adding constraint k."""
        v = self.fac.Linv @ self.cons.N[k]
        d = self.Q.T @ v
        q = self.q
        d2 = d[q:]
        dependent = np.linalg.norm(d2) <= self.dep_tol * max(np.linalg.norm(v), 1e-300)
        z = np.zeros_like(v) if dependent else self.fac.LinvT @ (self.Q[:, q:] @ d2)
        if q:
            r = sla.solve_triangular(self.R[:q, :q], d[:q], check_finite=False)
        else:
            r = np.zeros(0)
        return z, r, dependent, v

    def add(self, k, u_k, v=None):
        if v is None:
            v = self.fac.Linv @ self.cons.N[k]
        self.Q, self.R = sla.qr_insert(self.Q, self.R, v, self.q, which="col", check_finite=False)
        self.W.append(k)
        self.u.append(u_k)

    def drop(self, pos):
        self.Q, self.R = sla.qr_delete(self.Q, self.R, pos, 1, which="col", check_finite=False)
        del self.W[pos]
        del self.u[pos]


def _gi_solve(fac, g, cons, settings, warm_set, it_budget):
    """Run the dual active-set method; returns (x, active_set, iterations)."""
    n = g.size
    K = cons.b.size
    x = -fac.solve(g)
    act = _ActiveSet(fac, cons, dep_tol=1e-10)
    in_W = np.zeros(K, dtype=bool)
    skipped = np.zeros(K, dtype=bool)   # redundant equalities
    iters = 0

    # equalities first, then warm-start guesses
    eq_idx = np.flatnonzero(cons.is_eq)
    for k in eq_idx:
        x = _add_equality(act, x, k, cons, settings, in_W, skipped)
    if warm_set is not None and len(warm_set):
        x = _warm_start(act, x, g, warm_set, cons, in_W)

    while True:
        if iters >= it_budget:
            return x, act, iters, False
        s = cons.N @ x - cons.b if K else np.zeros(0)
        scaled = s / cons.norms
        scaled[in_W | skipped] = _INF
        if K == 0:
            return x, act, iters, True
        p = int(np.argmin(scaled))
        if scaled[p] >= -settings.feas_tol:
            return x, act, iters, True
        u_p = 0.0
        while True:
            iters += 1
            if iters > it_budget:
                return x, act, iters, False
            z, r, dependent, v = act.directions(p)
            t1, l = _INF, -1
            if act.q:
                ineq = ~cons.is_eq[act.W]
                cand = ineq & (r > 1e-14 * max(1.0, _amax(r)))
                if cand.any():
                    u_arr = np.asarray(act.u)
                    ratios = np.full(act.q, _INF)
                    ratios[cand] = u_arr[cand] / r[cand]
                    l = int(np.argmin(ratios))
                    t1 = ratios[l]
            s_p = cons.N[p] @ x - cons.b[p]
            if dependent:
                t2 = _INF
            else:
                zn = z @ cons.N[p]
                t2 = -s_p / zn if zn > 0 else _INF
            t = min(t1, t2)
            if not np.isfinite(t):
                y = np.zeros(K)
                y[p] = 1.0
                if act.q:
                    y[act.W] = -r
                raise _Infeasible(y)
            if act.q:
                u_arr = np.asarray(act.u) - t * r
                act.u = list(u_arr)
            u_p += t
            if not np.isfinite(t2):
                act.drop(l)
                in_W[:] = False
                in_W[act.W] = True
                continue
            x = x + t * z
            if t2 <= t1:
                act.add(p, u_p, v)
                in_W[p] = True
                break
            act.drop(l)
            in_W[:] = False
            in_W[act.W] = True


def _add_equality(act, x, k, cons, settings, in_W, skipped):
    s_k = cons.N[k] @ x - cons.b[k]
    z, r, dependent, v = act.directions(k)
    scale = 1.0 + abs(cons.b[k])
    if dependent:
        if abs(s_k) <= 1e3 * settings.feas_tol * scale * cons.norms[k]:
            skipped[k] = True
            return x
        K = cons.b.size
        y = np.zeros(K)
        sgn = 1.0 if s_k < 0 else -1.0
        y[k] = sgn
        if act.q:
            y[act.W] = -sgn * r
        raise _Infeasible(y)
    zn = z @ cons.N[k]
    t = -s_k / zn
    if act.q:
        act.u = list(np.asarray(act.u) - t * r)
    x = x + t * z
    act.add(k, t, v)
    in_W[k] = True
    return x


def _warm_start(act, x_free, g, warm_set, cons, in_W):
    """Seed the working set with guessed active constraints.

    The seed keeps GI's invariant: x solves the equality-constrained problem on
    the working set and all inequality multipliers are non-negative.
    """
    for k in warm_set:
        if in_W[k] or cons.is_eq[k]:
            continue
        v = act.fac.Linv @ cons.N[k]
        d = act.Q.T @ v
        if np.linalg.norm(d[act.q:]) <= 1e-8 * max(np.linalg.norm(v), 1e-300):
            continue
        act.add(k, 0.0, v)
        in_W[k] = True
    x0 = -act.fac.solve(g)
    while True:
        q = act.q
        if q == 0:
            return x0
        R = act.R[:q, :q]
        rhs = cons.b[act.W] - cons.N[act.W] @ x0
        u = sla.cho_solve((R, False), rhs, check_finite=False)
        neg = ~cons.is_eq[act.W] & (u < 0)
        if not neg.any():
            act.u = list(u)
            Bu = act.Q[:, :q] @ (R @ u)
            return x0 + act.fac.LinvT @ Bu
        j = int(np.argmin(np.where(neg, u, _INF)))
        in_W[act.W[j]] = False
        act.drop(j)


# ----------------------------------------------------------------------------
# public entry point


def solve(
    problem: QpProblem,
    warm_start=None,
    settings: QpSettings | None = None,
    factor: HessianFactor | None = None,
) -> QpSolution:
    """Solve ``problem``; ``factor`` may carry a cached Cholesky factor of H."""
    settings = settings or QpSettings()
    p = problem
    n = p.n
    if n == 0:
        raise QpError("empty problem")
    cons = _one_sided(p, eq_tol=1e-12)

    warm_set = None
    if warm_start is not None:
        xw = np.asarray(warm_start, dtype=float).ravel()
        if xw.size != n:
            raise QpError(f"warm start has length {xw.size}, expected {n}")
        if cons.b.size:
            s = (cons.N @ xw - cons.b) / cons.norms
            warm_set = np.flatnonzero(np.abs(s) <= 1e-7 * (1.0 + np.abs(cons.b)))

    if factor is None:
        factor = try_factor(p.H)
    if factor is not None and factor.shift == 0.0:
        sol = _solve_strict(p, cons, factor, settings, warm_set)
        if sol.status is not Status.OPTIMAL or sol.kkt_residual <= settings.tol:
            return sol
        log.debug("strict solve inaccurate (kkt %.2e), retrying with proximal iterations", sol.kkt_residual)
    _check_psd(p.H, settings)
    return _solve_prox(p, cons, settings, warm_set)


def _check_psd(H, settings):
    w = np.linalg.eigvalsh(H)
    scale = max(1.0, float(np.max(np.abs(w))))
    if w[0] < -settings.psd_tol * scale:
        raise QpError(f"H is not positive semidefinite (min eigenvalue {w[0]:.3e})")


def _solve_strict(p, cons, factor, settings, warm_set):
    try:
        x, act, iters, converged = _gi_solve(factor, p.g, cons, settings, warm_set, settings.max_iter)
    except _Infeasible as exc:
        return _infeasible(p, cons, exc.y, 0)
    return _finish(p, cons, x, act, iters, converged)


def _solve_prox(p, cons, settings, warm_set):
    n = p.n
    scale = max(1.0, float(np.max(np.abs(p.H))))
    rho = settings.prox_rho * scale
    factor = HessianFactor(p.H, shift=rho)
    x_prev = None
    total = 0
    last = None
    for _ in range(settings.max_prox):
        g = p.g if x_prev is None else p.g - rho * x_prev
        try:
            x, act, iters, converged = _gi_solve(
                factor, g, cons, settings, warm_set, settings.max_iter - total
            )
        except _Infeasible as exc:
            return _infeasible(p, cons, exc.y, total)
        total += iters
        if not converged:
            break
        W = list(act.W)
        polished = _polish(p, cons, W, settings)
        if polished is not None:
            polished.iterations = total
            return polished
        last = (x, act)
        if x_prev is not None and np.linalg.norm(x - x_prev) <= 1e-13 * (1.0 + np.linalg.norm(x)):
            break
        x_prev = x
        warm_set = np.asarray(W, dtype=int)
    if last is None:
        return QpSolution(np.zeros(n), Status.MAX_ITERATIONS, np.nan, np.inf, total)
    x, act = last
    y_b, y_r = _signed_multipliers(p, cons, act.W, act.u)
    res = kkt_residual(p, x, y_b, y_r)
    status = Status.OPTIMAL if res <= settings.tol else Status.MAX_ITERATIONS
    return QpSolution(x, status, p.objective(x), res, total, y_b, y_r, tuple(act.W))


def _polish(p, cons, W, settings):
    """Solve the equality problem on working set W with the exact Hessian."""
    n = p.n
    q = len(W)
    NW = cons.N[W] if q else np.zeros((0, n))
    K = np.zeros((n + q, n + q))
    K[:n, :n] = p.H
    K[:n, n:] = -NW.T
    K[n:, :n] = NW
    rhs = np.concatenate([-p.g, cons.b[W] if q else np.zeros(0)])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    x, u = sol[:n], sol[n:]
    if q and np.any(~cons.is_eq[W] & (u < -settings.feas_tol)):
        return None
    if np.max(np.abs(K @ sol - rhs), initial=0.0) > 1e-9 * (1.0 + _amax(rhs)):
        return None
    if cons.b.size:
        s = (cons.N @ x - cons.b) / cons.norms
        if np.min(s) < -settings.feas_tol * 10:
            return None
    u = np.where(cons.is_eq[W], u, np.maximum(u, 0.0)) if q else u
    y_b, y_r = _signed_multipliers(p, cons, W, u)
    res = kkt_residual(p, x, y_b, y_r)
    if res > settings.tol:
        return None
    return QpSolution(x, Status.OPTIMAL, p.objective(x), res, 0, y_b, y_r, tuple(W))


def _finish(p, cons, x, act, iters, converged):
    y_b, y_r = _signed_multipliers(p, cons, act.W, act.u)
    res = kkt_residual(p, x, y_b, y_r)
    if not converged:
        log.debug("QP hit the iteration cap after %d iterations", iters)
        return QpSolution(x, Status.MAX_ITERATIONS, p.objective(x), res, iters, y_b, y_r, tuple(act.W))
    return QpSolution(x, Status.OPTIMAL, p.objective(x), res, iters, y_b, y_r, tuple(act.W))


def _infeasible(p, cons, y, iters):
    # inequality multipliers are >= 0 up to round-off; equalities keep their sign
    y = np.where(cons.is_eq, y, np.maximum(y, 0.0))
    side = cons.sign * np.sign(y)
    mag = np.abs(y)
    parts = []
    for kind, size in ((0, p.n), (1, p.m)):
        lo = np.zeros(size)
        hi = np.zeros(size)
        sel = cons.kind == kind
        np.add.at(lo, cons.index[sel & (side > 0)], mag[sel & (side > 0)])
        np.add.at(hi, cons.index[sel & (side < 0)], mag[sel & (side < 0)])
        parts += [lo, hi]
    cert = FarkasCertificate(*parts)
    return QpSolution(
        np.full(p.n, np.nan), Status.INFEASIBLE, np.nan, np.inf, iters,
        np.zeros(p.n), np.zeros(p.m), (), cert,
    )
