"""Flat-tape compiler and numeric kernels for expression rows.

Each expression row (constraint, objective) is flattened into a contiguous
opcode/operand tape that a small VM evaluates against a full variable buffer.
The VM provides:

* row values (forward sweep),
* exact row Jacobians w.r.t. a chosen decision-variable subset
  (one reverse sweep per row),
* the exact weighted Hessian ``sum_j w_j * hess(row_j)`` via
  forward-over-reverse sweeps, emitted as fixed-pattern COO data.

Kernels are numba-compiled when numba is importable and fall back to pure
Python otherwise.  Division by zero and domain violations follow IEEE
semantics (inf/nan propagate); callers reject non-finite results.
"""

from __future__ import annotations

import math

import numpy as np

from . import exprgraph as eg

try:  # pragma: no cover - exercised indirectly
    import numba

    _HAVE_NUMBA = True
except Exception:  # pragma: no cover
    numba = None
    _HAVE_NUMBA = False

_LOAD = eg.VAR  # VAR nodes compile to buffer loads


def _kernel(fn):
    if _HAVE_NUMBA:
        return numba.njit(fn, cache=True, error_model="numpy", fastmath=False)
    return fn


@_kernel
def _forward(ops, a1, a2, cval, lo, hi, buf, v):
    for p in range(lo, hi):
        k = ops[p]
        i = p - lo
        if k == 0:  # CONST
            v[i] = cval[p]
        elif k == 1:  # LOAD
            v[i] = buf[a1[p]]
        elif k == 2:
            v[i] = v[a1[p]] + v[a2[p]]
        elif k == 3:
            v[i] = v[a1[p]] - v[a2[p]]
        elif k == 4:
            v[i] = v[a1[p]] * v[a2[p]]
        elif k == 5:
            v[i] = v[a1[p]] / v[a2[p]]
        elif k == 6:
            v[i] = -v[a1[p]]
        elif k == 7:
            v[i] = v[a1[p]] ** cval[p]
        elif k == 8:
            v[i] = np.sin(v[a1[p]])
        elif k == 9:
            v[i] = np.cos(v[a1[p]])
        elif k == 10:
            v[i] = np.tan(v[a1[p]])
        elif k == 11:
            v[i] = np.exp(v[a1[p]])
        elif k == 12:
            v[i] = np.log(v[a1[p]])
        elif k == 13:
            v[i] = np.sqrt(v[a1[p]])
        else:  # 14 tanh
            v[i] = np.tanh(v[a1[p]])
    return v[hi - 1 - lo]


@_kernel
def _eval_rows(ops, a1, a2, cval, row_ptr, buf, out, work):
    for r in range(row_ptr.shape[0] - 1):
        out[r] = _forward(ops, a1, a2, cval, row_ptr[r], row_ptr[r + 1], buf, work)


@_kernel
def _reverse(ops, a1, a2, cval, lo, hi, v, bar):
    n = hi - lo
    for i in range(n):
        bar[i] = 0.0
    bar[n - 1] = 1.0
    for p in range(hi - 1, lo - 1, -1):
        k = ops[p]
        i = p - lo
        g = bar[i]
        if g == 0.0 or k <= 1:
            continue
        ia = a1[p]
        if k == 2:
            bar[ia] += g
            bar[a2[p]] += g
        elif k == 3:
            bar[ia] += g
            bar[a2[p]] -= g
        elif k == 4:
            bar[ia] += g * v[a2[p]]
            bar[a2[p]] += g * v[ia]
        elif k == 5:
            vb = v[a2[p]]
            bar[ia] += g / vb
            bar[a2[p]] -= g * v[i] / vb
        elif k == 6:
            bar[ia] -= g
        elif k == 7:
            c = cval[p]
            bar[ia] += g * c * v[ia] ** (c - 1.0)
        elif k == 8:
            bar[ia] += g * np.cos(v[ia])
        elif k == 9:
            bar[ia] -= g * np.sin(v[ia])
        elif k == 10:
            bar[ia] += g * (1.0 + v[i] * v[i])
        elif k == 11:
            bar[ia] += g * v[i]
        elif k == 12:
            bar[ia] += g / v[ia]
        elif k == 13:
            bar[ia] += g * 0.5 / v[i]
        else:  # tanh
            bar[ia] += g * (1.0 - v[i] * v[i])


@_kernel
def _eval_jac(ops, a1, a2, cval, row_ptr, jptr, jnode, buf, out, jdata, work, bar):
    for r in range(row_ptr.shape[0] - 1):
        lo = row_ptr[r]
        hi = row_ptr[r + 1]
        out[r] = _forward(ops, a1, a2, cval, lo, hi, buf, work)
        _reverse(ops, a1, a2, cval, lo, hi, work, bar)
        for q in range(jptr[r], jptr[r + 1]):
            jdata[q] = bar[jnode[q]]


@_kernel
def _hvp(ops, a1, a2, cval, lo, hi, seed_node, v, vd, bar, bard):
    """Forward-over-reverse: second derivatives w.r.t. (all loads, seed load)."""
    n = hi - lo
    for i in range(n):
        vd[i] = 0.0
        bar[i] = 0.0
        bard[i] = 0.0
    vd[seed_node] = 1.0
    for p in range(lo, hi):
        k = ops[p]
        i = p - lo
        if k <= 1:
            continue
        ia = a1[p]
        if k == 2:
            vd[i] = vd[ia] + vd[a2[p]]
        elif k == 3:
            vd[i] = vd[ia] - vd[a2[p]]
        elif k == 4:
            vd[i] = vd[ia] * v[a2[p]] + v[ia] * vd[a2[p]]
        elif k == 5:
            vb = v[a2[p]]
            vd[i] = (vd[ia] - v[i] * vd[a2[p]]) / vb
        elif k == 6:
            vd[i] = -vd[ia]
        elif k == 7:
            c = cval[p]
            vd[i] = c * v[ia] ** (c - 1.0) * vd[ia]
        elif k == 8:
            vd[i] = np.cos(v[ia]) * vd[ia]
        elif k == 9:
            vd[i] = -np.sin(v[ia]) * vd[ia]
        elif k == 10:
            vd[i] = (1.0 + v[i] * v[i]) * vd[ia]
        elif k == 11:
            vd[i] = v[i] * vd[ia]
        elif k == 12:
            vd[i] = vd[ia] / v[ia]
        elif k == 13:
            vd[i] = 0.5 * vd[ia] / v[i]
        else:
            vd[i] = (1.0 - v[i] * v[i]) * vd[ia]
    bar[n - 1] = 1.0
    for p in range(hi - 1, lo - 1, -1):
        k = ops[p]
        i = p - lo
        g = bar[i]
        gd = bard[i]
        if (g == 0.0 and gd == 0.0) or k <= 1:
            continue
        ia = a1[p]
        if k == 2:
            bar[ia] += g
            bard[ia] += gd
            bar[a2[p]] += g
            bard[a2[p]] += gd
        elif k == 3:
            bar[ia] += g
            bard[ia] += gd
            bar[a2[p]] -= g
            bard[a2[p]] -= gd
        elif k == 4:
            ib = a2[p]
            bar[ia] += g * v[ib]
            bard[ia] += gd * v[ib] + g * vd[ib]
            bar[ib] += g * v[ia]
            bard[ib] += gd * v[ia] + g * vd[ia]
        elif k == 5:
            ib = a2[p]
            vb = v[ib]
            fa = 1.0 / vb
            fb = -v[i] / vb
            # d(fa) = -vd_b/vb^2 ; d(fb) = -(vd_y*vb - v_y*vd_b)/vb^2... use
            # fab = -1/vb^2, fbb = 2*va/vb^3 = -2*fb/vb
            fab = -1.0 / (vb * vb)
            fbb = 2.0 * v[ia] / (vb * vb * vb)
            bar[ia] += g * fa
            bard[ia] += gd * fa + g * fab * vd[ib]
            bar[ib] += g * fb
            bard[ib] += gd * fb + g * (fab * vd[ia] + fbb * vd[ib])
        elif k == 6:
            bar[ia] -= g
            bard[ia] -= gd
        elif k == 7:
            c = cval[p]
            fa = c * v[ia] ** (c - 1.0)
            faa = c * (c - 1.0) * v[ia] ** (c - 2.0)
            bar[ia] += g * fa
            bard[ia] += gd * fa + g * faa * vd[ia]
        elif k == 8:
            fa = np.cos(v[ia])
            faa = -v[i]
            bar[ia] += g * fa
            bard[ia] += gd * fa + g * faa * vd[ia]
        elif k == 9:
            fa = -np.sin(v[ia])
            faa = -v[i]
            bar[ia] += g * fa
            bard[ia] += gd * fa + g * faa * vd[ia]
        elif k == 10:
            fa = 1.0 + v[i] * v[i]
            faa = 2.0 * v[i] * fa
            bar[ia] += g * fa
            bard[ia] += gd * fa + g * faa * vd[ia]
        elif k == 11:
            fa = v[i]
            bar[ia] += g * fa
            bard[ia] += gd * fa + g * fa * vd[ia]
        elif k == 12:
            fa = 1.0 / v[ia]
            faa = -fa * fa
            bar[ia] += g * fa
            bard[ia] += gd * fa + g * faa * vd[ia]
        elif k == 13:
            fa = 0.5 / v[i]
            faa = -0.5 * fa / v[ia]
            bar[ia] += g * fa
            bard[ia] += gd * fa + g * faa * vd[ia]
        else:
            t = v[i]
            fa = 1.0 - t * t
            faa = -2.0 * t * fa
            bar[ia] += g * fa
            bard[ia] += gd * fa + g * faa * vd[ia]


@_kernel
def _eval_hess(ops, a1, a2, cval, row_ptr, lptr, lnode, hptr, weights, buf,
               hdata, v, vd, bar, bard):
    for r in range(row_ptr.shape[0] - 1):
        w = weights[r]
        nl = lptr[r + 1] - lptr[r]
        if w == 0.0 or nl == 0:
            for q in range(hptr[r], hptr[r + 1]):
                hdata[q] = 0.0
            continue
        lo = row_ptr[r]
        hi = row_ptr[r + 1]
        _forward(ops, a1, a2, cval, lo, hi, buf, v)
        q = hptr[r]
        for d in range(nl):
            seed = lnode[lptr[r] + d]
            _hvp(ops, a1, a2, cval, lo, hi, seed, v, vd, bar, bard)
            for i in range(d, nl):
                hdata[q] = w * bard[lnode[lptr[r] + i]]
                q += 1


class Program:
    """Compiled tape for a list of expression rows over one variable buffer.

    Jacobian columns and Hessian entries are expressed in *decision space*:
    positions within the ``decision_ids`` array given at compile time.
    """

    def __init__(self, rows, decision_ids, buffer_size: int):
        decision_ids = np.asarray(decision_ids, dtype=np.int64)
        dec_pos = {int(g): i for i, g in enumerate(decision_ids)}
        self.n_rows = len(rows)
        self.n_dec = len(decision_ids)
        self.buffer_size = buffer_size

        ops, a1, a2, cval = [], [], [], []
        row_ptr = [0]
        jptr, jnode, jcol = [0], [], []
        lptr, lnode, lcol = [0], [], []
        hptr, hrow, hcol = [0], [], []
        max_nodes = 1
        for row in rows:
            order = eg.topo_order([row])
            local = {}
            loads = []  # (local node idx, decision col)
            for node in order:
                i = len(local)
                local[node._id] = i
                k = node.kind
                ops.append(k)
                if k == eg.CONST:
                    a1.append(-1)
                    a2.append(-1)
                    cval.append(node.payload)
                elif k == eg.VAR:
                    gid = node.payload
                    if gid >= buffer_size:
                        raise ValueError(f"variable x{gid} outside buffer of size {buffer_size}")
                    a1.append(gid)
                    a2.append(-1)
                    cval.append(0.0)
                    col = dec_pos.get(gid)
                    if col is not None:
                        loads.append((i, col))
                else:
                    a1.append(local[node.a._id])
                    a2.append(local[node.b._id] if node.b is not None else -1)
                    cval.append(node.payload if k == eg.POW else 0.0)
            row_ptr.append(len(ops))
            max_nodes = max(max_nodes, len(order))
            loads.sort(key=lambda t: t[1])
            for i, col in loads:
                jnode.append(i)
                jcol.append(col)
                lnode.append(i)
                lcol.append(col)
            jptr.append(len(jnode))
            lptr.append(len(lnode))
            for d in range(len(loads)):
                for i in range(d, len(loads)):
                    hrow.append(max(loads[i][1], loads[d][1]))
                    hcol.append(min(loads[i][1], loads[d][1]))
            hptr.append(len(hrow))

        self.ops = np.asarray(ops, dtype=np.int32)
        self.a1 = np.asarray(a1, dtype=np.int64)
        self.a2 = np.asarray(a2, dtype=np.int64)
        self.cval = np.asarray(cval, dtype=np.float64)
        self.row_ptr = np.asarray(row_ptr, dtype=np.int64)
        self.jac_indptr = np.asarray(jptr, dtype=np.int64)
        self.jac_node = np.asarray(jnode, dtype=np.int64)
        self.jac_indices = np.asarray(jcol, dtype=np.int64)
        self.load_ptr = np.asarray(lptr, dtype=np.int64)
        self.load_node = np.asarray(lnode, dtype=np.int64)
        self.hess_ptr = np.asarray(hptr, dtype=np.int64)
        self.hess_rows = np.asarray(hrow, dtype=np.int64)
        self.hess_cols = np.asarray(hcol, dtype=np.int64)
        self._w = np.empty(max_nodes)
        self._w2 = np.empty(max_nodes)
        self._w3 = np.empty(max_nodes)
        self._w4 = np.empty(max_nodes)

    def values(self, buf: np.ndarray) -> np.ndarray:
        out = np.empty(self.n_rows)
        if self.n_rows:
            _eval_rows(self.ops, self.a1, self.a2, self.cval, self.row_ptr,
                       buf, out, self._w)
        return out

    def values_and_jacobian(self, buf: np.ndarray):
        """Row values plus CSR Jacobian data (pattern is fixed at compile time)."""
        out = np.empty(self.n_rows)
        jdata = np.empty(self.jac_node.shape[0])
        if self.n_rows:
            _eval_jac(self.ops, self.a1, self.a2, self.cval, self.row_ptr,
                      self.jac_indptr, self.jac_node, buf, out, jdata,
                      self._w, self._w2)
        return out, jdata

    def jacobian_csr(self, buf: np.ndarray):
        import scipy.sparse as sp

        vals, jdata = self.values_and_jacobian(buf)
        J = sp.csr_matrix(
            (jdata, self.jac_indices.astype(np.int32), self.jac_indptr),
            shape=(self.n_rows, self.n_dec),
        )
        return vals, J

    def weighted_hessian_data(self, buf: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """COO data for sum_r weights[r] * hess(row_r); pattern in hess_rows/cols."""
        hdata = np.zeros(self.hess_rows.shape[0])
        if self.n_rows and hdata.shape[0]:
            _eval_hess(self.ops, self.a1, self.a2, self.cval, self.row_ptr,
                       self.load_ptr, self.load_node, self.hess_ptr, weights,
                       buf, hdata, self._w, self._w2, self._w3, self._w4)
        return hdata


def warmup():
    """Trigger numba compilation on a tiny program (no-op without numba)."""
    x, y = eg.var(0), eg.var(1)
    e = eg.tanh(x * y + eg.sin(x) / (y + 2.0)) ** 2
    prog = Program([e, x - y], np.array([0, 1]), 2)
    buf = np.array([0.3, 0.7])
    prog.values(buf)
    prog.values_and_jacobian(buf)
    prog.weighted_hessian_data(buf, np.array([1.0, 0.5]))


if not _HAVE_NUMBA:  # pragma: no cover
    def _msg():
        import warnings

        warnings.warn("numba unavailable: tape kernels run in pure Python and are slow")

    _msg()
