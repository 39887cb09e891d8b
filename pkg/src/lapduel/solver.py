"""Primal-dual interior-point solver for the assembled NLPs.

Standard form: ``min f(x)  s.t.  cE(x) = 0,  cI(x) <= 0,  lb <= x <= ub``.
Inequalities get slack variables and a log barrier; each iteration solves the
condensed symmetric KKT system in (dx, dy) with inertia-free regularization
(a curvature test on the computed direction plus an escalating primal shift),
then takes fraction-to-boundary and Armijo steps on an l1 merit function.

Values, Jacobians and exact Lagrangian Hessians come from the tape kernels in
:mod:`lapduel.tape`; the algorithm is fully deterministic.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ocp import NlpProblem
from .tape import Program

try:
    from cvxopt import cholmod, matrix as _cvxmat, spmatrix as _cvxsp

    _HAVE_CHOLMOD = True
except Exception:  # pragma: no cover
    _HAVE_CHOLMOD = False

__all__ = ["SolverOptions", "SolveResult", "solve", "kkt_residuals"]


class _KktSolver:
    """Factor/solve the condensed KKT system with inertia information.

    Uses CHOLMOD's simplicial LDL^T when available: the sign pattern of D
    gives the exact inertia, so the regularization loop can demand the
    (n_pos, n_neg) = (n, m_eq) signature that guarantees a descent direction.
    Falls back to SuperLU plus a curvature test on the computed step.
    """

    def __init__(self, n: int, m_eq: int):
        self.n = n
        self.m_eq = m_eq
        self._symb = None
        self._pattern_key = None

    def factor(self, M: sp.spmatrix, JE: sp.spmatrix, eq_reg: float):
        n, m = self.n, self.m_eq
        if m:
            K = sp.bmat([[sp.tril(M), None],
                         [JE, -eq_reg * sp.eye(m)]], format="coo")
        else:
            K = sp.tril(M).tocoo()
        if _HAVE_CHOLMOD:
            A = _cvxsp(_cvxmat(K.data), _cvxmat(K.row.astype(np.int32)),
                       _cvxmat(K.col.astype(np.int32)), (n + m, n + m))
            key = hash((K.row.tobytes(), K.col.tobytes()))
            try:
                cholmod.options["supernodal"] = 0
                if self._symb is None or self._pattern_key != key:
                    self._symb = cholmod.symbolic(A)
                    self._pattern_key = key
                cholmod.numeric(A, self._symb)
                # diag of D from the LDL' factor: solve D x = e
                dinv = _cvxmat(np.ones(n + m))
                cholmod.solve(self._symb, dinv, sys=6)
                dinv = np.array(dinv).ravel()
            except ArithmeticError:
                return None, "breakdown"
            if not np.all(np.isfinite(dinv)):
                return None, "zero pivot"
            n_neg = int(np.sum(dinv < 0.0))
            if n_neg != m:
                return None, f"inertia({n_neg} neg)"
            symb = self._symb

            def solve_fn(rhs):
                b = _cvxmat(rhs)
                cholmod.solve(symb, b)
                return np.array(b).ravel()

            return solve_fn, None
        # SuperLU fallback: no inertia, rely on the caller's curvature test
        Kfull = (K + sp.tril(K, -1).T).tocsc()
        try:
            lu = spla.splu(Kfull, permc_spec="COLAMD")
        except Exception:
            return None, "singular"
        return (lambda rhs: lu.solve(rhs)), None


@dataclass
class SolverOptions:
    tol: float = 1e-8
    acceptable_tol: float = 1e-6      # stagnation fallback (IPOPT-style)
    acceptable_stall: int = 40        # iterations without 3% improvement
    max_iter: int = 400
    mu_init: float = 1e-1
    kappa_mu: float = 0.2
    theta_mu: float = 1.5
    kappa_eps: float = 10.0
    reg_init: float = 1e-4
    reg_min: float = 1e-20
    reg_max: float = 1e12
    eq_reg: float = 1e-10
    ftb_min: float = 0.99
    armijo: float = 1e-4
    max_ls: int = 25
    mu_floor_factor: float = 0.1      # mu floor = factor * tol
    mu_strategy: str = "adaptive"     # "adaptive" (default) or "monotone"
    obj_scale: float | None = None    # auto gradient-based when None
    log: object = None                # file-like; one line per iteration

    def validate(self):
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.kappa_mu < 1:
            raise ValueError("barrier schedule must be strictly decreasing")
        return self


@dataclass
class SolveResult:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    zl: np.ndarray
    zu: np.ndarray
    s: np.ndarray
    obj: float
    status: str
    iterations: int
    residuals: dict
    mu: float
    wall_time: float
    history: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status in ("optimal", "acceptable")


class _Workspace:
    """Compiled programs for one NlpProblem (cached on the problem)."""

    def __init__(self, p: NlpProblem):
        size = p.space.size
        self.obj = Program([p.objective], p.decision, size)
        self.eq = Program(p.eq, p.decision, size)
        self.ineq = Program(p.ineq, p.decision, size)


def _workspace(p: NlpProblem) -> _Workspace:
    if p._programs is None:
        p._programs = _Workspace(p)
    return p._programs


def _hessian_csr(n, progs_weights, buf):
    rows, cols, data = [], [], []
    for prog, w in progs_weights:
        if prog.n_rows == 0 or prog.hess_rows.shape[0] == 0:
            continue
        d = prog.weighted_hessian_data(buf, w)
        rows.append(prog.hess_rows)
        cols.append(prog.hess_cols)
        data.append(d)
    if not rows:
        return sp.csr_matrix((n, n))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(data)
    low = sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
    return low + sp.triu(low.T, k=1)


def _ftb_alpha(v: np.ndarray, dv: np.ndarray, tau: float) -> float:
    """Largest alpha in (0,1] keeping v + alpha*dv >= (1-tau)*v (v > 0)."""
    if v.size == 0:
        return 1.0
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))


def solve(problem: NlpProblem, opts: SolverOptions | None = None,
          warm: SolveResult | None = None) -> SolveResult:
    """Solve an NlpProblem; returns multipliers in the problem's own scaling."""
    t_start = time.perf_counter()
    opts = (opts or SolverOptions()).validate()
    ws = _workspace(problem)
    n = problem.n_dec
    m_eq = len(problem.eq)
    m_in = len(problem.ineq)
    lb, ub = problem.lb, problem.ub
    has_l = np.isfinite(lb)
    has_u = np.isfinite(ub)
    log = opts.log

    # strictly interior start; warm starts keep the active-set geometry
    x = (warm.x.copy() if warm is not None else problem.x0.copy())
    kappa_pad = 1e-9 if warm is not None else 1e-2
    if np.any(has_l):
        span = np.where(has_u[has_l], (ub - lb)[has_l], np.inf)
        pad = np.minimum(kappa_pad * np.maximum(1.0, np.abs(lb[has_l])),
                         kappa_pad * span)
        x[has_l] = np.maximum(x[has_l], lb[has_l] + pad)
    if np.any(has_u):
        span = np.where(has_l[has_u], (ub - lb)[has_u], np.inf)
        pad = np.minimum(kappa_pad * np.maximum(1.0, np.abs(ub[has_u])),
                         kappa_pad * span)
        x[has_u] = np.minimum(x[has_u], ub[has_u] - pad)

    buf = problem.buffer_from(x)
    f0, gdata = ws.obj.values_and_jacobian(buf)
    g = np.zeros(n)
    g[ws.obj.jac_indices] = gdata
    if opts.obj_scale is not None:
        sigma_f = float(opts.obj_scale)
    else:
        sigma_f = min(1.0, 100.0 / max(1e-8, float(np.abs(gdata).max(initial=0.0))))

    cE, JE = ws.eq.jacobian_csr(buf)
    cI, JI = ws.ineq.jacobian_csr(buf)

    warm_y = (warm is not None and len(warm.y) == m_eq and bool(np.any(warm.y)))
    if warm is not None:
        s = np.maximum(-cI, 1e-8)
        if len(warm.z) == m_in:
            z = np.clip(warm.z * sigma_f, 1e-10, 1e12)
        else:
            z = np.clip(1e-4 / s, 1e-8, 1e2)
        mu = max(opts.mu_floor_factor * opts.tol,
                 min(opts.mu_init, float(np.mean(s * z)) if m_in else opts.tol))
        if len(warm.zl) == n and (np.any(warm.zl) or np.any(warm.zu)):
            zl = np.where(has_l, np.clip(warm.zl * sigma_f, 1e-12, 1e12), 0.0)
            zu = np.where(has_u, np.clip(warm.zu * sigma_f, 1e-12, 1e12), 0.0)
        else:
            zl = np.where(has_l, np.clip(mu / np.maximum(x - lb, 1e-8), 1e-8, 1e2), 0.0)
            zu = np.where(has_u, np.clip(mu / np.maximum(ub - x, 1e-8), 1e-8, 1e2), 0.0)
    else:
        # a generous slack floor keeps initial duals and z/s weights sane even
        # when the guess violates inequality rows
        s = np.maximum(-cI, 1e-2)
        mu = opts.mu_init
        z = np.clip(mu / s, 1e-6, 1e2)
        zl = np.where(has_l, np.clip(mu / np.maximum(x - lb, 1e-8), 1e-6, 1e2), 0.0)
        zu = np.where(has_u, np.clip(mu / np.maximum(ub - x, 1e-8), 1e-6, 1e2), 0.0)
    if warm_y:
        y = warm.y.copy() * sigma_f
    else:
        y = np.zeros(m_eq)
        if m_eq:
            # least-squares equality duals from the stationarity condition
            Kls = sp.bmat([[sp.eye(n), JE.T], [JE, -1e-8 * sp.eye(m_eq)]],
                          format="csc")
            rhs_ls = np.concatenate([-(sigma_f * g + (JI.T @ z if m_in else 0.0)
                                       - zl + zu), np.zeros(m_eq)])
            try:
                y_est = spla.splu(Kls).solve(rhs_ls)[n:]
                if np.all(np.isfinite(y_est)) and np.abs(y_est).max() <= 1e3:
                    y = y_est
            except Exception:
                pass

    mu_floor = opts.mu_floor_factor * opts.tol
    delta_last = 0.0
    reg_seed = 0.0
    short_steps = 0
    rho = 1.0
    status = "max_iter"
    it = 0
    ls_failures = 0
    history = []
    acceptable_count = 0
    kkt = _KktSolver(n, m_eq)

    def residual_norms(mu_val):
        r_d = sigma_f * g + (JE.T @ y if m_eq else 0.0) \
            + (JI.T @ z if m_in else 0.0) - zl + zu
        r_E = np.abs(cE).max(initial=0.0)
        r_I = np.abs(cI + s).max(initial=0.0)
        comp_terms = []
        if m_in:
            comp_terms.append(np.abs(s * z - mu_val))
        if np.any(has_l):
            comp_terms.append(np.abs((x - lb)[has_l] * zl[has_l] - mu_val))
        if np.any(has_u):
            comp_terms.append(np.abs((ub - x)[has_u] * zu[has_u] - mu_val))
        comp = max((t.max(initial=0.0) for t in comp_terms), default=0.0)
        mult_sum = (np.abs(y).sum() + np.abs(z).sum()
                    + np.abs(zl).sum() + np.abs(zu).sum())
        denom = max(1, m_eq + m_in + int(has_l.sum()) + int(has_u.sum()))
        s_d = max(100.0, mult_sum / denom) / 100.0
        s_c = max(100.0, (np.abs(z).sum() + np.abs(zl).sum() + np.abs(zu).sum())
                  / max(1, m_in + int(has_l.sum()) + int(has_u.sum()))) / 100.0
        return (float(np.abs(r_d).max(initial=0.0)), float(r_E), float(r_I),
                float(comp), s_d, s_c)

    while it < opts.max_iter:
        rd, rE, rI, comp0, s_d, s_c = residual_norms(0.0)
        err0 = max(rd / s_d, rE, rI, comp0 / s_c)
        # termination on the true KKT error: slack consistency (cI + s) is an
        # internal quantity and may lag the actual optimality conditions
        primal_true = max(rE, float(np.maximum(cI, 0.0).max(initial=0.0)))
        comp_true = float(np.abs(z * cI).max(initial=0.0)) if m_in else 0.0
        if np.any(has_l):
            comp_true = max(comp_true,
                            float(np.abs(zl[has_l] * (x - lb)[has_l]).max()))
        if np.any(has_u):
            comp_true = max(comp_true,
                            float(np.abs(zu[has_u] * (ub - x)[has_u]).max()))
        err_true = max(rd / s_d, primal_true, comp_true / s_c)
        if err_true <= opts.tol:
            status = "optimal"
            break
        if err_true <= opts.acceptable_tol:
            acceptable_count += 1
            if acceptable_count >= opts.acceptable_stall:
                status = "acceptable"
                break
        else:
            acceptable_count = 0
        if opts.mu_strategy == "adaptive":
            # centrality-weighted rule: mu tracks the complementarity products
            prods = [s * z] if m_in else []
            if np.any(has_l):
                prods.append((x - lb)[has_l] * zl[has_l])
            if np.any(has_u):
                prods.append((ub - x)[has_u] * zu[has_u])
            if prods:
                prods = np.concatenate(prods)
                avg = float(np.mean(prods))
                if avg > 0:
                    xi = float(np.min(prods)) / avg
                    sigma = 0.1 * min(0.05 * (1.0 - xi) / max(xi, 1e-12), 2.0) ** 3
                    mu = max(mu_floor, min(sigma * avg, 1e2))
        else:
            _, _, _, comp_mu, _, _ = residual_norms(mu)
            err_mu = max(rd / s_d, rE, rI, comp_mu / s_c)
            if err_mu <= opts.kappa_eps * mu and mu > mu_floor:
                mu = max(mu_floor, min(opts.kappa_mu * mu, mu ** opts.theta_mu))

        # assemble condensed KKT pieces
        H = _hessian_csr(n, [(ws.obj, np.array([sigma_f])),
                             (ws.eq, y), (ws.ineq, z)], buf)
        sig_x = np.zeros(n)
        sig_x[has_l] += zl[has_l] / (x - lb)[has_l]
        sig_x[has_u] += zu[has_u] / (ub - x)[has_u]
        r_I_vec = cI + s
        if m_in:
            w_in = z / s
            JIW = JI.T @ sp.diags(w_in) @ JI
        else:
            w_in = np.zeros(0)
            JIW = sp.csr_matrix((n, n))
        rhs_x = -(sigma_f * g) - (JE.T @ y if m_eq else 0.0)
        if m_in:
            rhs_x -= JI.T @ (w_in * r_I_vec + mu / s)
        rhs_x[has_l] += mu / (x - lb)[has_l]
        rhs_x[has_u] -= mu / (ub - x)[has_u]

        base = H + sp.diags(sig_x) + JIW
        rhs = np.concatenate([rhs_x, -cE]) if m_eq else rhs_x
        delta = reg_seed
        dx = dy = None
        while True:
            M = base + sp.diags(np.full(n, delta)) if delta else base
            solve_fn, err = kkt.factor(M, JE, opts.eq_reg)
            if solve_fn is not None:
                sol = solve_fn(rhs)
                ok = np.all(np.isfinite(sol))
                if ok:
                    # guard against factorization instability
                    dx0 = sol[:n]
                    dy0 = sol[n:] if m_eq else np.zeros(0)
                    r1 = M @ dx0 + (JE.T @ dy0 if m_eq else 0.0) - rhs_x
                    rnorm = float(np.abs(r1).max())
                    if m_eq:
                        r2 = JE @ dx0 - opts.eq_reg * dy0 + cE
                        rnorm = max(rnorm, float(np.abs(r2).max()))
                    ok = rnorm <= 1e-6 * max(1.0, float(np.abs(rhs).max()))
                if ok and not _HAVE_CHOLMOD:
                    dx0 = sol[:n]
                    curv = float(dx0 @ (M @ dx0))
                    ok = curv > -1e-12 * max(float(dx0 @ dx0), 1e-12)
                if ok:
                    dx = sol[:n]
                    dy = sol[n:] if m_eq else np.zeros(0)
                    break
            if delta == 0.0:
                delta = opts.reg_init if delta_last == 0.0 \
                    else max(opts.reg_min, delta_last / 3.0)
            else:
                delta *= 10.0
            if delta > opts.reg_max:
                return _finalize(problem, x, y, z, zl, zu, s, sigma_f,
                                 "numerical_failure", it, mu, t_start, history,
                                 ws, buf)
        delta_last = delta

        ds_ = -r_I_vec - (JI @ dx if m_in else np.zeros(0))
        dz = (mu / s - z) - w_in * ds_ if m_in else np.zeros(0)
        dzl = np.zeros(n)
        dzu = np.zeros(n)
        dzl[has_l] = (mu - (x - lb)[has_l] * zl[has_l]
                      - zl[has_l] * dx[has_l]) / (x - lb)[has_l]
        dzu[has_u] = (mu - (ub - x)[has_u] * zu[has_u]
                      + zu[has_u] * dx[has_u]) / (ub - x)[has_u]

        tau = max(opts.ftb_min, 1.0 - mu)
        a_p = min(_ftb_alpha(s, ds_, tau),
                  _ftb_alpha((x - lb)[has_l], dx[has_l], tau),
                  _ftb_alpha((ub - x)[has_u], -dx[has_u], tau))
        a_d = min(_ftb_alpha(z, dz, tau),
                  _ftb_alpha(zl[has_l], dzl[has_l], tau),
                  _ftb_alpha(zu[has_u], dzu[has_u], tau))

        # l1 merit line search
        theta0 = np.abs(cE).sum() + np.abs(r_I_vec).sum()
        grad_term = float(sigma_f * (g @ dx))
        if m_in:
            grad_term -= float(mu * np.sum(ds_ / s))
        grad_term -= float(mu * np.sum(dx[has_l] / (x - lb)[has_l]))
        grad_term += float(mu * np.sum(dx[has_u] / (ub - x)[has_u]))
        # raise the penalty only when needed to make the direction a descent
        # direction for the merit; a tiny theta0 must never inflate rho
        if grad_term > 0.0 and theta0 > 1e-10:
            rho = max(rho, 2.0 * grad_term / theta0 + 1e-4)
        d_phi = grad_term - rho * theta0

        def merit(xv, sv, cEv, cIv):
            if np.any(sv <= 0):
                return math.inf
            bl = (xv - lb)[has_l]
            bu = (ub - xv)[has_u]
            if np.any(bl <= 0) or np.any(bu <= 0):
                return math.inf
            fv = ws.obj.values(problem.buffer_from(xv))[0]
            if not math.isfinite(fv):
                return math.inf
            val = sigma_f * fv - mu * (np.sum(np.log(sv)) if sv.size else 0.0) \
                - mu * np.sum(np.log(bl)) - mu * np.sum(np.log(bu)) \
                + rho * (np.abs(cEv).sum() + np.abs(cIv + sv).sum())
            return float(val)

        phi0 = merit(x, s, cE, cI)
        alpha = a_p
        accepted = False
        soc_tried = False
        step_norm = max(np.abs(dx).max(initial=0.0), np.abs(ds_).max(initial=0.0))
        if step_norm < 1e-16:
            accepted = True
            x_n, s_n, cE_n, JE_n, cI_n, JI_n = x, s, cE, JE, cI, JI
            f_n, g_n = f0, g
        else:
            for _ in range(opts.max_ls):
                x_n = x + alpha * dx
                s_n = s + alpha * ds_
                buf_n = problem.buffer_from(x_n)
                cE_n, cI_n = (ws.eq.values(buf_n), ws.ineq.values(buf_n))
                finite = np.all(np.isfinite(cE_n)) and np.all(np.isfinite(cI_n))
                if finite:
                    phi_n = merit(x_n, s_n, cE_n, cI_n)
                    if phi_n <= phi0 + opts.armijo * alpha * min(d_phi, 0.0):
                        accepted = True
                        break
                if finite and not soc_tried and alpha == a_p and m_eq:
                    # second-order correction: retarget the equality residual
                    # at the trial point, reusing the factorization
                    soc_tried = True
                    sol2 = solve_fn(np.concatenate([rhs_x, -np.asarray(cE_n)]))
                    if np.all(np.isfinite(sol2)):
                        dx_c = alpha * dx + sol2[:n]
                        ds_c = -(np.asarray(cI_n) + s) - (JI @ dx_c if m_in else 0.0)
                        a_c = min(_ftb_alpha(s, ds_c, tau),
                                  _ftb_alpha((x - lb)[has_l], dx_c[has_l], tau),
                                  _ftb_alpha((ub - x)[has_u], -dx_c[has_u], tau))
                        xc = x + a_c * dx_c
                        sc = s + a_c * ds_c
                        buf_c = problem.buffer_from(xc)
                        cE_c, cI_c = (ws.eq.values(buf_c), ws.ineq.values(buf_c))
                        if np.all(np.isfinite(cE_c)) and np.all(np.isfinite(cI_c)):
                            phi_c = merit(xc, sc, cE_c, cI_c)
                            if phi_c <= phi0 + opts.armijo * a_c * min(d_phi, 0.0):
                                accepted = True
                                alpha = a_c
                                x_n, s_n, cE_n, cI_n = xc, sc, cE_c, cI_c
                                break
                alpha *= 0.5
            if not accepted:
                ls_failures += 1
                if ls_failures >= 8:
                    return _finalize(problem, x, y, z, zl, zu, s, sigma_f,
                                     "numerical_failure", it, mu, t_start,
                                     history, ws, buf)
                reg_seed = max(reg_seed, opts.reg_init) * 10.0
                it += 1
                continue
            ls_failures = 0
            # chronic short steps mean the direction overshoots the region
            # where the model is trustworthy; damp the next few mildly
            if alpha < 0.1 * a_p:
                short_steps += 1
                if short_steps >= 3:
                    reg_seed = min(max(10.0 * reg_seed, 1e-8), 1e-6)
                    short_steps = 0
            else:
                short_steps = 0
                reg_seed = reg_seed / 10.0 if reg_seed > 1e-10 else 0.0
            buf = problem.buffer_from(x_n)
            f_vec, gdata = ws.obj.values_and_jacobian(buf)
            f_n = f_vec
            g_n = np.zeros(n)
            g_n[ws.obj.jac_indices] = gdata
            cE_n, JE_n = ws.eq.jacobian_csr(buf)
            cI_n, JI_n = ws.ineq.jacobian_csr(buf)

        x, s = x_n, s_n
        cE, JE, cI, JI = cE_n, JE_n, cI_n, JI_n
        f0, g = f_n, g_n
        # duals advance by the accepted primal fraction (capped by their own
        # fraction-to-boundary) so primal and dual iterates stay consistent
        a_z = min(a_d, alpha)
        y = y + alpha * dy if m_eq else y
        z = z + a_z * dz if m_in else z
        zl = zl + a_z * dzl
        zu = zu + a_z * dzu
        # keep duals within a band of the barrier estimate (IPOPT kappa_Sigma)
        if m_in:
            z = np.clip(z, mu / (1e10 * s), np.maximum(1e10 * mu / s, 1e-12))
        kl = np.zeros(n)
        kl[has_l] = mu / (x - lb)[has_l]
        zl[has_l] = np.clip(zl[has_l], kl[has_l] / 1e10,
                            np.maximum(kl[has_l] * 1e10, 1e-12))
        ku = np.zeros(n)
        ku[has_u] = mu / (ub - x)[has_u]
        zu[has_u] = np.clip(zu[has_u], ku[has_u] / 1e10,
                            np.maximum(ku[has_u] * 1e10, 1e-12))

        it += 1
        history.append((it, float(f0[0] if hasattr(f0, "__len__") else f0),
                        err0, mu, alpha, delta_last))
        if log is not None:
            print(f"iter {it:4d}  obj {float(f0[0]):+.9e}  err {err0:.3e}  "
                  f"mu {mu:.1e}  alpha {alpha:.2e}  a_max {a_p:.2e}  "
                  f"ad {a_d:.2e}  rho {rho:.1e}  th {theta0:.2e}  "
                  f"dphi {d_phi:+.2e}  reg {delta_last:.1e}", file=log)

    if status != "optimal" and it >= opts.max_iter:
        _, rE, rI, _, _, _ = residual_norms(0.0)
        status = "infeasible" if max(rE, rI) > 1e3 * opts.tol else "max_iter"
    return _finalize(problem, x, y, z, zl, zu, s, sigma_f, status, it, mu,
                     t_start, history, ws, buf)


def _finalize(problem, x, y, z, zl, zu, s, sigma_f, status, it, mu, t_start,
              history, ws, buf):
    obj = float(ws.obj.values(problem.buffer_from(x))[0])
    inv = 1.0 / sigma_f
    res = kkt_residuals(problem, x, y * inv, z * inv, zl * inv, zu * inv)
    return SolveResult(
        x=x, y=y * inv, z=z * inv, zl=zl * inv, zu=zu * inv, s=s,
        obj=obj, status=status, iterations=it, residuals=res, mu=mu,
        wall_time=time.perf_counter() - t_start, history=history,
    )


def kkt_residuals(problem: NlpProblem, x: np.ndarray, y: np.ndarray,
                  z: np.ndarray, zl: np.ndarray | None = None,
                  zu: np.ndarray | None = None) -> dict:
    """Scaled infinity norms of the four KKT residual groups at a point."""
    ws = _workspace(problem)
    n = problem.n_dec
    buf = problem.buffer_from(x)
    _, gdata = ws.obj.values_and_jacobian(buf)
    g = np.zeros(n)
    g[ws.obj.jac_indices] = gdata
    cE, JE = ws.eq.jacobian_csr(buf)
    cI, JI = ws.ineq.jacobian_csr(buf)
    zl = np.zeros(n) if zl is None else zl
    zu = np.zeros(n) if zu is None else zu
    r_d = g + (JE.T @ y if len(problem.eq) else 0.0) \
        + (JI.T @ z if len(problem.ineq) else 0.0) - zl + zu
    has_l = np.isfinite(problem.lb)
    has_u = np.isfinite(problem.ub)
    primal = max(
        float(np.abs(cE).max(initial=0.0)),
        float(np.maximum(cI, 0.0).max(initial=0.0)),
        float(np.maximum(problem.lb - x, 0.0)[has_l].max(initial=0.0)),
        float(np.maximum(x - problem.ub, 0.0)[has_u].max(initial=0.0)),
    )
    dual = max(
        float(np.maximum(-z, 0.0).max(initial=0.0)),
        float(np.maximum(-zl, 0.0).max(initial=0.0)),
        float(np.maximum(-zu, 0.0).max(initial=0.0)),
    )
    comp = float(np.abs(z * cI).max(initial=0.0)) if len(problem.ineq) else 0.0
    if np.any(has_l):
        comp = max(comp, float(np.abs(zl[has_l] * (x - problem.lb)[has_l]).max()))
    if np.any(has_u):
        comp = max(comp, float(np.abs(zu[has_u] * (problem.ub - x)[has_u]).max()))
    mult_sum = np.abs(y).sum() + np.abs(z).sum() + np.abs(zl).sum() + np.abs(zu).sum()
    denom = max(1, len(problem.eq) + len(problem.ineq)
                + int(has_l.sum()) + int(has_u.sum()))
    s_d = max(100.0, mult_sum / denom) / 100.0
    return {
        "stationarity": float(np.abs(r_d).max(initial=0.0)) / s_d,
        "primal": primal,
        "dual": dual,
        "complementarity": comp / s_d,
    }
