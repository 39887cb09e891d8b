"""Cross-check of the condensed interior-point step against a dense
full-system Newton solve on a small nonconvex problem."""

import numpy as np
import pytest

from lapduel import exprgraph as eg
from lapduel.ocp import NlpProblem, VariableSpace
from lapduel.solver import _hessian_csr, _workspace


def _small_problem():
    space = VariableSpace()
    ids = space.new_block("x", 4)
    x0, x1, x2, x3 = (eg.var(int(i)) for i in ids)
    obj = (x0 - 1) ** 2 + eg.sin(x1 * x2) + (x3 + 0.5) ** 4 + x0 * x3
    eqs = [x0 + x1 * x1 - 1.5, eg.tanh(x2) + x3 - 0.2]
    ineqs = [x0 * x0 + x1 - 2.0, -x2 + x3 * x3 - 1.0]
    lb = np.array([-2.0, -np.inf, -1.5, -2.0])
    ub = np.array([2.0, 3.0, np.inf, 2.0])
    return NlpProblem(space, ids, lb, ub, obj, eqs, ineqs,
                      np.zeros(4), np.zeros(4))


def test_condensed_step_matches_full_newton_system():
    p = _small_problem()
    ws = _workspace(p)
    n, m_eq, m_in = 4, 2, 2
    lb, ub = p.lb, p.ub
    has_l = np.isfinite(lb)
    has_u = np.isfinite(ub)
    il = np.nonzero(has_l)[0]
    iu = np.nonzero(has_u)[0]
    nl, nu = len(il), len(iu)

    x = np.array([0.3, -0.4, 0.6, -0.1])
    s = np.array([0.8, 1.7])
    y = np.array([0.3, -0.7])
    z = np.array([0.4, 0.2])
    zl = np.where(has_l, 0.3, 0.0)
    zu = np.where(has_u, 0.15, 0.0)
    mu = 1e-2

    buf = p.buffer_from(x)
    _, gd = ws.obj.values_and_jacobian(buf)
    g = np.zeros(n)
    g[ws.obj.jac_indices] = gd
    cE, JE = ws.eq.jacobian_csr(buf)
    cI, JI = ws.ineq.jacobian_csr(buf)
    JEd, JId = JE.toarray(), JI.toarray()
    H = _hessian_csr(n, [(ws.obj, np.array([1.0])), (ws.eq, y),
                         (ws.ineq, z)], buf).toarray()

    # dense Newton on F(x, s, y, z, zl, zu) = 0
    N = n + m_in + m_eq + m_in + nl + nu
    A = np.zeros((N, N))
    F = np.zeros(N)
    o_ds, o_dy, o_dz, o_dzl, o_dzu = (n, n + m_in, n + m_in + m_eq,
                                      n + m_in + m_eq + m_in,
                                      n + m_in + m_eq + m_in + nl)
    A[:n, :n] = H
    A[:n, o_dy:o_dy + m_eq] = JEd.T
    A[:n, o_dz:o_dz + m_in] = JId.T
    for a, i in enumerate(il):
        A[i, o_dzl + a] = -1.0
    for a, i in enumerate(iu):
        A[i, o_dzu + a] = 1.0
    F[:n] = g + JEd.T @ y + JId.T @ z - zl + zu

    r = n
    A[r:r + m_eq, :n] = JEd
    F[r:r + m_eq] = cE
    r += m_eq
    A[r:r + m_in, :n] = JId
    A[r:r + m_in, o_ds:o_ds + m_in] = np.eye(m_in)
    F[r:r + m_in] = cI + s
    r += m_in
    A[r:r + m_in, o_ds:o_ds + m_in] = np.diag(z)
    A[r:r + m_in, o_dz:o_dz + m_in] = np.diag(s)
    F[r:r + m_in] = s * z - mu
    r += m_in
    for a, i in enumerate(il):
        A[r + a, i] = zl[i]
        A[r + a, o_dzl + a] = x[i] - lb[i]
        F[r + a] = (x[i] - lb[i]) * zl[i] - mu
    r += nl
    for a, i in enumerate(iu):
        A[r + a, i] = -zu[i]
        A[r + a, o_dzu + a] = ub[i] - x[i]
        F[r + a] = (ub[i] - x[i]) * zu[i] - mu

    sol = np.linalg.solve(A, -F)
    dx_ref = sol[:n]
    ds_ref = sol[o_ds:o_ds + m_in]
    dy_ref = sol[o_dy:o_dy + m_eq]
    dz_ref = sol[o_dz:o_dz + m_in]
    dzl_ref = np.zeros(n)
    dzl_ref[il] = sol[o_dzl:o_dzl + nl]
    dzu_ref = np.zeros(n)
    dzu_ref[iu] = sol[o_dzu:o_dzu + nu]

    # condensed system as the solver builds it
    sig_x = np.zeros(n)
    sig_x[has_l] += zl[has_l] / (x - lb)[has_l]
    sig_x[has_u] += zu[has_u] / (ub - x)[has_u]
    w_in = z / s
    r_I = cI + s
    M = H + np.diag(sig_x) + JId.T @ np.diag(w_in) @ JId
    rhs_x = -g - JEd.T @ y - JId.T @ (w_in * r_I + mu / s)
    rhs_x[has_l] += mu / (x - lb)[has_l]
    rhs_x[has_u] -= mu / (ub - x)[has_u]
    K = np.block([[M, JEd.T], [JEd, np.zeros((m_eq, m_eq))]])
    kr = np.concatenate([rhs_x, -cE])
    sol2 = np.linalg.solve(K, kr)
    dx = sol2[:n]
    dy = sol2[n:]
    ds = -r_I - JId @ dx
    dz = (mu / s - z) - w_in * ds
    dzl = np.zeros(n)
    dzu = np.zeros(n)
    dzl[has_l] = (mu - (x - lb)[has_l] * zl[has_l]
                  - zl[has_l] * dx[has_l]) / (x - lb)[has_l]
    dzu[has_u] = (mu - (ub - x)[has_u] * zu[has_u]
                  + zu[has_u] * dx[has_u]) / (ub - x)[has_u]

    assert dx == pytest.approx(dx_ref, abs=1e-10)
    assert dy == pytest.approx(dy_ref, abs=1e-10)
    assert ds == pytest.approx(ds_ref, abs=1e-10)
    assert dz == pytest.approx(dz_ref, abs=1e-10)
    assert dzl == pytest.approx(dzl_ref, abs=1e-10)
    assert dzu == pytest.approx(dzu_ref, abs=1e-10)
