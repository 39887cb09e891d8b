"""Scalar computational graph with exact symbolic first derivatives.

Expressions are immutable, hash-consed DAG nodes.  The same node object is
returned for structurally identical subexpressions, so common subexpressions
are shared automatically and identity comparison is cheap.  All algebra used
by the lap-time problems (objectives, dynamics, constraints, KKT stationarity
rows) is assembled from these nodes; numeric evaluation of large expression
sets goes through the tape compiler in :mod:`lapduel.tape`.

Nonsmooth primitives are provided only as smooth surrogates (``smooth_abs``,
``smooth_min``, ``smooth_max``) because every expression must stay twice
differentiable for the interior-point solver.
"""

from __future__ import annotations

import math
from typing import Iterable, Iterator, Sequence, Union

__all__ = [
    "Expr",
    "ExprVector",
    "SparseExprMatrix",
    "EvalDomainError",
    "var",
    "const",
    "sin",
    "cos",
    "tan",
    "exp",
    "log",
    "sqrt",
    "tanh",
    "smooth_abs",
    "smooth_min",
    "smooth_max",
    "balanced_sum",
    "evaluate",
    "gradient",
    "sparse_jacobian",
    "hessian",
    "variables_of",
]

# Node kinds.  Kept as small ints so tapes can reuse them directly.
CONST = 0
VAR = 1
ADD = 2
SUB = 3
MUL = 4
DIV = 5
NEG = 6
POW = 7  # expr ** float constant
SIN = 8
COS = 9
TAN = 10
EXP = 11
LOG = 12
SQRT = 13
TANH = 14

_UNARY = {NEG, SIN, COS, TAN, EXP, LOG, SQRT, TANH}
_BINARY = {ADD, SUB, MUL, DIV}

_KIND_NAMES = {
    CONST: "const", VAR: "var", ADD: "+", SUB: "-", MUL: "*", DIV: "/",
    NEG: "neg", POW: "pow", SIN: "sin", COS: "cos", TAN: "tan",
    EXP: "exp", LOG: "log", SQRT: "sqrt", TANH: "tanh",
}


class EvalDomainError(ArithmeticError):
    """Raised when evaluation hits a non-finite intermediate value."""


Number = Union[int, float]


class Expr:
    """One node of the expression DAG.

    Do not call the constructor directly; use :func:`var`, :func:`const` and
    the overloaded operators, which intern nodes and apply cheap local
    simplifications (constant folding, neutral elements).
    """

    __slots__ = ("kind", "a", "b", "payload", "_id")

    _intern: dict = {}
    _next_id: int = 0

    def __init__(self, kind: int, a, b, payload):
        self.kind = kind
        self.a = a
        self.b = b
        self.payload = payload
        self._id = Expr._next_id
        Expr._next_id += 1

    # -- construction ------------------------------------------------------

    @staticmethod
    def _mk(kind: int, a=None, b=None, payload=None) -> "Expr":
        key = (kind, None if a is None else a._id, None if b is None else b._id, payload)
        node = Expr._intern.get(key)
        if node is None:
            node = Expr(kind, a, b, payload)
            Expr._intern[key] = node
        return node

    # -- python protocol ---------------------------------------------------

    def __hash__(self) -> int:
        return self._id

    def __eq__(self, other) -> bool:  # identity: interning makes this exact
        return self is other

    def __repr__(self) -> str:
        if self.kind == CONST:
            return f"Expr({self.payload!r})"
        if self.kind == VAR:
            return f"Expr(x{self.payload})"
        return f"Expr<{_KIND_NAMES[self.kind]}:{self._id}>"

    @property
    def var_index(self) -> int:
        if self.kind != VAR:
            raise ValueError("not a variable node")
        return self.payload

    @property
    def value(self) -> float:
        if self.kind != CONST:
            raise ValueError("not a constant node")
        return self.payload

    def is_zero(self) -> bool:
        return self.kind == CONST and self.payload == 0.0

    # -- operators ---------------------------------------------------------

    def __add__(self, other) -> "Expr":
        return _add(self, _coerce(other))

    def __radd__(self, other) -> "Expr":
        return _add(_coerce(other), self)

    def __sub__(self, other) -> "Expr":
        return _sub(self, _coerce(other))

    def __rsub__(self, other) -> "Expr":
        return _sub(_coerce(other), self)

    def __mul__(self, other) -> "Expr":
        return _mul(self, _coerce(other))

    def __rmul__(self, other) -> "Expr":
        return _mul(_coerce(other), self)

    def __truediv__(self, other) -> "Expr":
        return _div(self, _coerce(other))

    def __rtruediv__(self, other) -> "Expr":
        return _div(_coerce(other), self)

    def __pow__(self, exponent) -> "Expr":
        if isinstance(exponent, Expr):
            if exponent.kind == CONST:
                exponent = exponent.payload
            else:
                # general power via exp/log keeps the primitive set closed
                return exp(exponent * log(self))
        return _powc(self, float(exponent))

    def __neg__(self) -> "Expr":
        return _neg(self)

    def __pos__(self) -> "Expr":
        return self


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float)):
        return const(float(x))
    raise TypeError(f"cannot use {type(x).__name__} in an expression")


_ZERO: Expr
_ONE: Expr


def const(value: float) -> Expr:
    value = float(value)
    if math.isnan(value):
        raise ValueError("NaN constants are not allowed")
    return Expr._mk(CONST, payload=value)


def var(index: int) -> Expr:
    if index < 0:
        raise ValueError("variable index must be non-negative")
    return Expr._mk(VAR, payload=int(index))


def _add(a: Expr, b: Expr) -> Expr:
    if a.kind == CONST and b.kind == CONST:
        return const(a.payload + b.payload)
    if a.is_zero():
        return b
    if b.is_zero():
        return a
    return Expr._mk(ADD, a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if a.kind == CONST and b.kind == CONST:
        return const(a.payload - b.payload)
    if b.is_zero():
        return a
    if a.is_zero():
        return _neg(b)
    if a is b:
        return _ZERO
    return Expr._mk(SUB, a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if a.kind == CONST and b.kind == CONST:
        return const(a.payload * b.payload)
    if a.is_zero() or b.is_zero():
        return _ZERO
    if a.kind == CONST:
        if a.payload == 1.0:
            return b
        if a.payload == -1.0:
            return _neg(b)
    if b.kind == CONST:
        if b.payload == 1.0:
            return a
        if b.payload == -1.0:
            return _neg(a)
    return Expr._mk(MUL, a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if b.kind == CONST:
        if b.payload == 0.0:
            raise ZeroDivisionError("division by constant zero")
        if a.kind == CONST:
            return const(a.payload / b.payload)
        if b.payload == 1.0:
            return a
    if a.is_zero():
        return _ZERO
    return Expr._mk(DIV, a, b)


def _neg(a: Expr) -> Expr:
    if a.kind == CONST:
        return const(-a.payload)
    if a.kind == NEG:
        return a.a
    return Expr._mk(NEG, a)


def _powc(base: Expr, c: float) -> Expr:
    if c == 0.0:
        return _ONE
    if c == 1.0:
        return base
    if base.kind == CONST:
        return const(base.payload ** c)
    return Expr._mk(POW, base, payload=float(c))


def _unary(kind: int, fn, a) -> Expr:
    a = _coerce(a)
    if a.kind == CONST:
        return const(fn(a.payload))
    return Expr._mk(kind, a)


def sin(a) -> Expr:
    return _unary(SIN, math.sin, a)


def cos(a) -> Expr:
    return _unary(COS, math.cos, a)


def tan(a) -> Expr:
    return _unary(TAN, math.tan, a)


def exp(a) -> Expr:
    return _unary(EXP, math.exp, a)


def log(a) -> Expr:
    return _unary(LOG, math.log, a)


def sqrt(a) -> Expr:
    return _unary(SQRT, math.sqrt, a)


def tanh(a) -> Expr:
    return _unary(TANH, math.tanh, a)


def smooth_abs(a, eps: float = 1e-9) -> Expr:
    """Twice-differentiable |a| surrogate: sqrt(a^2 + eps)."""
    a = _coerce(a)
    return sqrt(a * a + const(eps))


def smooth_max(a, b, eps: float = 1e-9) -> Expr:
    a, b = _coerce(a), _coerce(b)
    return (a + b + smooth_abs(a - b, eps)) * 0.5


def smooth_min(a, b, eps: float = 1e-9) -> Expr:
    a, b = _coerce(a), _coerce(b)
    return (a + b - smooth_abs(a - b, eps)) * 0.5


_ZERO = const(0.0)
_ONE = const(1.0)


def balanced_sum(terms: Sequence[Expr]) -> Expr:
    """Sum a list of expressions with a balanced tree (keeps DAG depth low)."""
    terms = [t for t in terms if not (isinstance(t, Expr) and t.is_zero())]
    if not terms:
        return _ZERO
    work = [_coerce(t) for t in terms]
    while len(work) > 1:
        nxt = []
        for i in range(0, len(work) - 1, 2):
            nxt.append(work[i] + work[i + 1])
        if len(work) % 2:
            nxt.append(work[-1])
        work = nxt
    return work[0]


# -- traversal -------------------------------------------------------------


def topo_order(roots: Iterable[Expr]) -> list[Expr]:
    """Children-first ordering of the sub-DAG reachable from ``roots``."""
    order: list[Expr] = []
    seen: set[int] = set()
    stack: list[tuple[Expr, bool]] = [(r, False) for r in roots]
    while stack:
        node, expanded = stack.pop()
        if node._id in seen:
            continue
        if expanded:
            seen.add(node._id)
            order.append(node)
            continue
        stack.append((node, True))
        if node.b is not None:
            if node.b._id not in seen:
                stack.append((node.b, False))
        if node.a is not None:
            if node.a._id not in seen:
                stack.append((node.a, False))
    return order


_varset_cache: dict[int, frozenset] = {}


def variables_of(e: Expr) -> frozenset:
    """Set of variable indices appearing in ``e`` (memoized over the DAG)."""
    cached = _varset_cache.get(e._id)
    if cached is not None:
        return cached
    for node in topo_order([e]):
        if node._id in _varset_cache:
            continue
        if node.kind == VAR:
            s = frozenset((node.payload,))
        elif node.kind == CONST:
            s = frozenset()
        elif node.b is not None:
            s = _varset_cache[node.a._id] | _varset_cache[node.b._id]
        else:
            s = _varset_cache[node.a._id]
        _varset_cache[node._id] = s
    return _varset_cache[e._id]


# -- evaluation ------------------------------------------------------------


def evaluate(e: Expr, values: Sequence[float]) -> float:
    """Evaluate one expression against a variable-value vector.

    Raises ``IndexError`` for a missing variable binding and
    :class:`EvalDomainError` if any intermediate is non-finite.
    """
    vals: dict[int, float] = {}
    for node in topo_order([e]):
        k = node.kind
        if k == CONST:
            v = node.payload
        elif k == VAR:
            idx = node.payload
            if idx >= len(values):
                raise IndexError(f"no value bound for variable x{idx}")
            v = float(values[idx])
        else:
            a = vals[node.a._id]
            if k == ADD:
                v = a + vals[node.b._id]
            elif k == SUB:
                v = a - vals[node.b._id]
            elif k == MUL:
                v = a * vals[node.b._id]
            elif k == DIV:
                b = vals[node.b._id]
                v = a / b if b != 0.0 else math.inf
            elif k == NEG:
                v = -a
            elif k == POW:
                try:
                    v = a ** node.payload
                except (OverflowError, ValueError):
                    v = math.inf
            elif k == SIN:
                v = math.sin(a)
            elif k == COS:
                v = math.cos(a)
            elif k == TAN:
                v = math.tan(a)
            elif k == EXP:
                try:
                    v = math.exp(a)
                except OverflowError:
                    v = math.inf
            elif k == LOG:
                v = math.log(a) if a > 0.0 else math.inf
            elif k == SQRT:
                v = math.sqrt(a) if a >= 0.0 else math.inf
            elif k == TANH:
                v = math.tanh(a)
            else:  # pragma: no cover
                raise ValueError(f"unknown node kind {k}")
        if not math.isfinite(v):
            raise EvalDomainError(f"non-finite value in {_KIND_NAMES[node.kind]} node")
        vals[node._id] = v
    return vals[e._id]


# -- differentiation -------------------------------------------------------

_diff_cache: dict[tuple[int, int], Expr] = {}


def diff(e: Expr, index: int) -> Expr:
    """Symbolic partial derivative of ``e`` with respect to variable ``index``.

    Variables other than ``index`` are treated as constants.  Returns the
    zero expression when the variable does not appear.
    """
    if index not in variables_of(e):
        return _ZERO
    key = (e._id, index)
    cached = _diff_cache.get(key)
    if cached is not None:
        return cached
    # iterative post-order so deep graphs cannot hit the recursion limit
    stack = [e]
    while stack:
        node = stack.pop()
        nkey = (node._id, index)
        if nkey in _diff_cache:
            continue
        if index not in variables_of(node):
            _diff_cache[nkey] = _ZERO
            continue
        if node.kind == VAR:
            _diff_cache[nkey] = _ONE if node.payload == index else _ZERO
            continue
        deps = [c for c in (node.a, node.b) if c is not None
                and (c._id, index) not in _diff_cache]
        if deps:
            stack.append(node)
            stack.extend(deps)
            continue
        da = _diff_cache.get((node.a._id, index), _ZERO) if node.a is not None else _ZERO
        db = _diff_cache.get((node.b._id, index), _ZERO) if node.b is not None else _ZERO
        k = node.kind
        if k == ADD:
            d = da + db
        elif k == SUB:
            d = da - db
        elif k == MUL:
            d = da * node.b + node.a * db
        elif k == DIV:
            d = (da - node * db) / node.b
        elif k == NEG:
            d = -da
        elif k == POW:
            c = node.payload
            d = const(c) * _powc(node.a, c - 1.0) * da
        elif k == SIN:
            d = cos(node.a) * da
        elif k == COS:
            d = -(sin(node.a) * da)
        elif k == TAN:
            d = (_ONE + node * node) * da
        elif k == EXP:
            d = node * da
        elif k == LOG:
            d = da / node.a
        elif k == SQRT:
            d = da / (const(2.0) * node)
        elif k == TANH:
            d = (_ONE - node * node) * da
        else:  # pragma: no cover
            raise ValueError(f"cannot differentiate node kind {k}")
        _diff_cache[nkey] = d
    return _diff_cache[key]


class ExprVector:
    """Ordered list of expressions with a fixed dimension."""

    __slots__ = ("items",)

    def __init__(self, items: Iterable[Expr]):
        self.items = [_coerce(e) for e in items]

    @property
    def dim(self) -> int:
        return len(self.items)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[Expr]:
        return iter(self.items)

    def __getitem__(self, i) -> Expr:
        return self.items[i]

    def evaluate(self, values: Sequence[float]) -> list[float]:
        return [evaluate(e, values) for e in self.items]


class SparseExprMatrix:
    """Sparse matrix of expressions keyed by (row, col)."""

    __slots__ = ("shape", "entries")

    def __init__(self, shape: tuple[int, int], entries: dict[tuple[int, int], Expr]):
        self.shape = shape
        self.entries = entries

    @property
    def pattern(self) -> set[tuple[int, int]]:
        return set(self.entries)

    def get(self, i: int, j: int) -> Expr:
        return self.entries.get((i, j), _ZERO)

    def evaluate_dense(self, values: Sequence[float]):
        import numpy as np

        out = np.zeros(self.shape)
        for (i, j), e in self.entries.items():
            out[i, j] = evaluate(e, values)
        return out


def gradient(e: Expr, wrt: Sequence[int]) -> ExprVector:
    """Symbolic gradient of ``e`` with respect to the listed variable indices.

    Indices absent from ``e`` yield the zero expression; all other variables
    are held constant.
    """
    return ExprVector([diff(e, i) for i in wrt])


def sparse_jacobian(v: ExprVector | Sequence[Expr], wrt: Sequence[int]) -> SparseExprMatrix:
    """Jacobian of an expression vector; structurally-zero entries are absent."""
    rows = list(v)
    wrt = list(wrt)
    col_of = {idx: j for j, idx in enumerate(wrt)}
    entries: dict[tuple[int, int], Expr] = {}
    for i, row in enumerate(rows):
        for idx in variables_of(row):
            j = col_of.get(idx)
            if j is None:
                continue
            d = diff(row, idx)
            if not d.is_zero():
                entries[(i, j)] = d
    return SparseExprMatrix((len(rows), len(wrt)), entries)


def hessian(e: Expr, wrt: Sequence[int]) -> SparseExprMatrix:
    """Second derivatives obtained by differentiating the gradient once more."""
    wrt = list(wrt)
    grad = gradient(e, wrt)
    entries: dict[tuple[int, int], Expr] = {}
    for i, g in enumerate(grad):
        for idx in variables_of(g):
            try:
                j = wrt.index(idx)
            except ValueError:
                continue
            if j > i:
                continue  # fill lower triangle, mirror below
            d = diff(g, idx)
            if not d.is_zero():
                entries[(i, j)] = d
                if i != j:
                    entries[(j, i)] = d
    return SparseExprMatrix((len(wrt), len(wrt)), entries)
