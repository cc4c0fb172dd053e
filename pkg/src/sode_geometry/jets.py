"""Truncated multivariate Taylor arithmetic ("jets").

A :class:`Jet` holds the Taylor expansion of one or more scalar functions of
``nvars`` real variables about a point, truncated at total degree ``order``.

Coefficient convention: the stored coefficient for multi-index ``alpha`` is the
Taylor coefficient ``d^alpha f / alpha!``.  :meth:`Jet.partial` multiplies the
factorial back in and returns the raw partial derivative.

Monomials are enumerated in graded order (degree first, then the order of
``itertools.combinations_with_replacement``), which is the same for every
truncation order.  Truncating a jet is therefore a prefix slice, and the
derivative of an order ``k`` jet is an order ``k - 1`` jet.

A jet carries an arbitrary batch shape in front of the coefficient axis, so a
vector field evaluated at a point is a single ``Jet`` of shape ``(dim,)`` and a
(1,1) tensor is a ``Jet`` of shape ``(dim, dim)``.  Binary operations
broadcast over batch shapes and truncate to the smaller order.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "Jet",
    "JetSpace",
    "jet_seed",
    "jet_apply",
    "jet_partial",
    "seeds",
    "constant",
    "stack",
    "concatenate",
    "FUNCTIONS",
]

# |cos|, |sin| below this count as a pole of tan/sec/cot/csc
POLE_TOL = 1e-12


class DomainError(ArithmeticError):
    """A function was evaluated outside its domain.

    ``location`` is filled in by the expression evaluator with the source text
    of the offending sub-expression.
    """

    def __init__(self, message: str, location: str | None = None):
        self.bare_message = message
        self.location = location
        super().__init__(f"{message} in `{location}`" if location else message)


class JetSpace:
    """Monomial bookkeeping shared by all jets with the same (nvars, order)."""

    def __init__(self, nvars: int, order: int):
        if nvars < 0 or order < 0:
            raise ValueError("nvars and order must be non-negative")
        self.nvars = nvars
        self.order = order

        multis: list[tuple[int, ...]] = []
        self.sizes: list[int] = []
        for d in range(order + 1):
            for combo in itertools.combinations_with_replacement(range(nvars), d):
                alpha = [0] * nvars
                for v in combo:
                    alpha[v] += 1
                multis.append(tuple(alpha))
            self.sizes.append(len(multis))
        self.size = len(multis)
        self.multi = np.array(multis, dtype=np.int64).reshape(self.size, nvars)
        self.degree = self.multi.sum(axis=1)
        self.index = {m: i for i, m in enumerate(multis)}
        self.factorial = np.array(
            [math.prod(math.factorial(a) for a in m) for m in multis], dtype=float
        )

        # integer keys for vectorised multi-index lookup
        self._base = (order + 1) ** np.arange(nvars, dtype=np.int64)
        keys = self.multi @ self._base
        self._key_order = np.argsort(keys)
        self._sorted_keys = keys[self._key_order]

        self._build_mul_table()
        self._build_deriv_table()

    def lookup(self, multi: np.ndarray) -> np.ndarray:
        keys = multi @ self._base
        pos = np.searchsorted(self._sorted_keys, keys)
        return self._key_order[pos]

    def _build_mul_table(self) -> None:
        pi, pj = [], []
        for i in range(self.size):
            room = self.order - self.degree[i]
            js = np.arange(self.sizes[room])
            pi.append(np.full(js.size, i))
            pj.append(js)
        pi = np.concatenate(pi)
        pj = np.concatenate(pj)
        pk = self.lookup(self.multi[pi] + self.multi[pj])
        perm = np.argsort(pk, kind="stable")
        self.pi, self.pj, pk = pi[perm], pj[perm], pk[perm]
        self.starts = np.flatnonzero(np.r_[True, pk[1:] != pk[:-1]])

    def _build_deriv_table(self) -> None:
        if self.order == 0:
            self.dsrc = self.dfac = None
            return
        low = self.sizes[self.order - 1]
        beta = self.multi[:low]
        src = np.empty((self.nvars, low), dtype=np.int64)
        fac = np.empty((self.nvars, low))
        for v in range(self.nvars):
            shifted = beta.copy()
            shifted[:, v] += 1
            src[v] = self.lookup(shifted)
            fac[v] = beta[:, v] + 1
        self.dsrc, self.dfac = src, fac

    @property
    def lower(self) -> "JetSpace":
        return space_for(self.nvars, self.order - 1)

    def __repr__(self) -> str:
        return f"JetSpace(nvars={self.nvars}, order={self.order})"


@lru_cache(maxsize=None)
def space_for(nvars: int, order: int) -> JetSpace:
    return JetSpace(nvars, order)


def _mul_coeffs(space: JetSpace, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    prod = a[..., space.pi] * b[..., space.pj]
    return np.add.reduceat(prod, space.starts, axis=-1)


class Jet:
    """Array of truncated Taylor expansions.  Treat instances as immutable."""

    __slots__ = ("space", "c")
    __array_priority__ = 1000

    def __init__(self, space: JetSpace, c):
        c = np.asarray(c, dtype=float)
        if c.shape[-1:] != (space.size,):
            raise ValueError(f"coefficient axis must have length {space.size}, got {c.shape}")
        self.space = space
        self.c = c

    # -- basic attributes -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.c.shape[:-1]

    @property
    def ndim(self) -> int:
        return self.c.ndim - 1

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def nvars(self) -> int:
        return self.space.nvars

    @property
    def value(self) -> np.ndarray | float:
        v = self.c[..., 0]
        return float(v) if v.ndim == 0 else v

    def __len__(self) -> int:
        return self.shape[0]

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, nvars={self.nvars}, order={self.order}, value={self.value!r})"

    # -- construction helpers -------------------------------------------
    def _const_like(self, value) -> np.ndarray:
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (self.space.size,))
        c[..., 0] = value
        return c

    def truncate(self, order: int) -> "Jet":
        if order == self.order:
            return self
        if order > self.order or order < 0:
            raise ValueError(f"cannot truncate order {self.order} jet to order {order}")
        space = space_for(self.nvars, order)
        return Jet(space, self.c[..., : space.size])

    def _align(self, other) -> tuple[JetSpace, np.ndarray, np.ndarray | None, np.ndarray | None]:
        """Return (space, a, b_coeffs, b_const); exactly one of the last two is set."""
        if isinstance(other, Jet):
            if other.nvars != self.nvars:
                raise ValueError("jets over different variable counts cannot be combined")
            order = min(self.order, other.order)
            a = self.truncate(order)
            b = other.truncate(order)
            return a.space, a.c, b.c, None
        return self.space, self.c, None, np.asarray(other, dtype=float)

    # -- arithmetic -------------------------------------------------------
    def __neg__(self) -> "Jet":
        return Jet(self.space, -self.c)

    def __pos__(self) -> "Jet":
        return self

    def __add__(self, other) -> "Jet":
        space, a, b, k = self._align(other)
        if b is not None:
            return Jet(space, a + b)
        c = np.array(np.broadcast_to(a, np.broadcast_shapes(a.shape, k.shape + (1,))))
        c[..., 0] += k
        return Jet(space, c)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        return self + (-other)

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        space, a, b, k = self._align(other)
        if b is not None:
            return Jet(space, _mul_coeffs(space, a, b))
        return Jet(space, a * k[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return self * reciprocal(other)
        other = np.asarray(other, dtype=float)
        if np.any(other == 0.0):
            raise DomainError("division by zero")
        return self * (1.0 / other)

    def __rtruediv__(self, other) -> "Jet":
        return reciprocal(self) * other

    def __pow__(self, p) -> "Jet":
        if isinstance(p, (int, np.integer)) or (isinstance(p, float) and p.is_integer()):
            return pow_int(self, int(p))
        raise TypeError("jets support integer powers only")

    def __matmul__(self, other) -> "Jet":
        return _matmul(self, other)

    def __rmatmul__(self, other) -> "Jet":
        return _matmul(other, self)

    # -- batch manipulation ----------------------------------------------
    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        if any(i is Ellipsis for i in idx):
            idx = idx + (slice(None),)
        else:
            idx = idx + (Ellipsis, slice(None))
        return Jet(self.space, self.c[idx])

    def _batch_axis(self, axis: int) -> int:
        if axis < 0:
            axis += self.ndim
        if not 0 <= axis < self.ndim:
            raise ValueError("axis out of range for jet batch shape")
        return axis

    def sum(self, axis: int | None = None) -> "Jet":
        if axis is None:
            return Jet(self.space, self.c.reshape(-1, self.space.size).sum(axis=0))
        return Jet(self.space, self.c.sum(axis=self._batch_axis(axis)))

    def transpose(self, *axes: int) -> "Jet":
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        return Jet(self.space, self.c.transpose(*axes, self.ndim))

    @property
    def T(self) -> "Jet":
        return self.transpose()

    def reshape(self, *shape: int) -> "Jet":
        return Jet(self.space, self.c.reshape(*shape, self.space.size))

    # -- calculus ----------------------------------------------------------
    def deriv(self, var: int) -> "Jet":
        """d/dv_var as a jet of one lower order."""
        if self.order == 0:
            raise ValueError("derivative of an order-0 jet: jet order exhausted")
        if not 0 <= var < self.nvars:
            raise IndexError(f"variable index {var} out of range")
        s = self.space
        return Jet(s.lower, self.c[..., s.dsrc[var]] * s.dfac[var])

    def grad(self) -> "Jet":
        """All first partials, appended as a trailing batch axis of length nvars."""
        if self.order == 0:
            raise ValueError("derivative of an order-0 jet: jet order exhausted")
        s = self.space
        return Jet(s.lower, self.c[..., s.dsrc] * s.dfac)

    def partial(self, alpha: Sequence[int]):
        """Raw partial derivative d^alpha f at the expansion point."""
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.nvars:
            raise ValueError(f"multi-index must have {self.nvars} entries")
        if min(alpha, default=0) < 0:
            raise ValueError("multi-index entries must be non-negative")
        if sum(alpha) > self.order:
            raise ValueError(f"|alpha| = {sum(alpha)} exceeds jet order {self.order}")
        i = self.space.index[alpha]
        out = self.c[..., i] * self.space.factorial[i]
        return float(out) if np.ndim(out) == 0 else out

    def compose(self, inner: "Jet", table: np.ndarray | None = None) -> "Jet":
        """Substitute ``inner`` (shape ``(nvars,)``) for the variables of ``self``.

        ``self`` is read as a polynomial in ``v - v0`` where ``v0`` is
        ``inner.value``; the result lives in the variables of ``inner``.
        ``table`` may be a precomputed :func:`composition_table` for the same
        inner jet and an order at least ``min(self.order, inner.order)``.
        """
        if inner.shape != (self.nvars,):
            raise ValueError(f"inner jet must have shape ({self.nvars},)")
        order = min(self.order, inner.order)
        outer = self.truncate(order)
        h = inner.truncate(order)
        if table is None:
            table = composition_table(h, order)
        table = table[: outer.space.size, : h.space.size]
        return Jet(h.space, outer.c @ table)


def composition_table(inner: Jet, order: int) -> np.ndarray:
    """Rows: coefficients of prod_j (inner_j - value_j)^alpha_j for each
    monomial alpha of total degree <= ``order``."""
    h = inner.truncate(min(order, inner.order))
    hc = h.c.copy()
    hc[:, 0] = 0.0
    return _monomials(space_for(inner.shape[0], h.order), h.space, hc)


def _monomials(outer: JetSpace, inner: JetSpace, hc: np.ndarray) -> np.ndarray:
    """Rows: the inner-space coefficients of prod_j h_j^alpha_j for each outer monomial."""
    monos = np.zeros((outer.size, inner.size))
    monos[0, 0] = 1.0
    for k in range(1, outer.size):
        alpha = outer.multi[k]
        v = int(np.flatnonzero(alpha)[0])
        beta = alpha.copy()
        beta[v] -= 1
        parent = outer.index[tuple(beta)]
        monos[k] = _mul_coeffs(inner, monos[parent], hc[v])
    return monos


def _matmul(a, b) -> Jet:
    """Matrix product over the trailing batch axes (numpy ``@`` semantics
    for a 1-d or 2-d right operand)."""
    a_nd = a.ndim if isinstance(a, Jet) else np.ndim(a)
    b_nd = b.ndim if isinstance(b, Jet) else np.ndim(b)
    if b_nd == 1 and a_nd >= 1:
        return (a * b).sum(-1)
    if a_nd == 1 and b_nd == 2:
        return (a[:, None] * b).sum(0)
    if a_nd >= 2 and b_nd == 2:
        return (a[..., None] * b).sum(-2)
    raise ValueError("jet matmul needs a 1-d or 2-d right operand")


# -- constructors ------------------------------------------------------------

def constant(value, nvars: int, order: int) -> Jet:
    space = space_for(nvars, order)
    value = np.asarray(value, dtype=float)
    c = np.zeros(value.shape + (space.size,))
    c[..., 0] = value
    return Jet(space, c)


def seeds(point: Sequence[float], order: int) -> Jet:
    """The coordinate functions v_0..v_{N-1} about ``point`` as one (N,) jet."""
    point = np.asarray(point, dtype=float)
    n = point.size
    space = space_for(n, order)
    c = np.zeros((n, space.size))
    c[:, 0] = point
    if order >= 1:
        c[np.arange(n), 1 + np.arange(n)] = 1.0
    return Jet(space, c)


def jet_seed(var_index: int, value: float, nvars: int, order: int) -> Jet:
    """Jet of the coordinate function v_{var_index} with the given value."""
    if not 0 <= var_index < nvars:
        raise IndexError(f"var_index {var_index} out of range for nvars={nvars}")
    if order < 1:
        raise ValueError("seed order must be at least 1")
    space = space_for(nvars, order)
    c = np.zeros(space.size)
    c[0] = value
    c[1 + var_index] = 1.0
    return Jet(space, c)


def _as_jets(items: Iterable) -> list[Jet]:
    items = list(items)
    template = next((j for j in items if isinstance(j, Jet)), None)
    if template is None:
        raise ValueError("need at least one jet")
    order = min(j.order for j in items if isinstance(j, Jet))
    out = []
    for j in items:
        if isinstance(j, Jet):
            out.append(j.truncate(order))
        else:
            out.append(constant(j, template.nvars, order))
    return out


def stack(items: Iterable, axis: int = 0) -> Jet:
    jets = _as_jets(items)
    nd = jets[0].ndim + 1
    if axis < 0:
        axis += nd
    return Jet(jets[0].space, np.stack([j.c for j in jets], axis=axis))


def concatenate(items: Iterable, axis: int = 0) -> Jet:
    jets = _as_jets(items)
    if axis < 0:
        axis += jets[0].ndim
    return Jet(jets[0].space, np.concatenate([j.c for j in jets], axis=axis))


# -- univariate series ------------------------------------------------------

def _series_div(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
    for n in range(out.shape[-1]):
        acc = a[..., n] - sum(b[..., k] * out[..., n - k] for k in range(1, n + 1))
        out[..., n] = acc / b[..., 0]
    return out


def _sin_cos_series(x0: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    n = np.arange(K + 1)
    fact = np.array([math.factorial(k) for k in n], dtype=float)
    s = np.sin(x0[..., None] + n * np.pi / 2) / fact
    c = np.cos(x0[..., None] + n * np.pi / 2) / fact
    return s, c


def _apply_series(x: Jet, series: np.ndarray) -> Jet:
    """Horner evaluation of sum_n series[n] * (x - x0)^n."""
    K = x.order
    h = x.c.copy()
    h[..., 0] = 0.0
    space = x.space
    r = np.zeros(series.shape[:-1] + (space.size,))
    r[..., 0] = series[..., K]
    for n in range(K - 1, -1, -1):
        r = _mul_coeffs(space, r, h)
        r[..., 0] += series[..., n]
    return Jet(space, r)


def _x0(x: Jet) -> np.ndarray:
    return np.asarray(x.c[..., 0])


def sin(x: Jet) -> Jet:
    s, _ = _sin_cos_series(_x0(x), x.order)
    return _apply_series(x, s)


def cos(x: Jet) -> Jet:
    _, c = _sin_cos_series(_x0(x), x.order)
    return _apply_series(x, c)


def _check_nonzero(v: np.ndarray, name: str, tol: float) -> None:
    if np.any(np.abs(v) <= tol):
        raise DomainError(f"{name}: pole at the expansion point")


def tan(x: Jet) -> Jet:
    s, c = _sin_cos_series(_x0(x), x.order)
    _check_nonzero(c[..., 0], "tan", POLE_TOL)
    return _apply_series(x, _series_div(s, c))


def cot(x: Jet) -> Jet:
    s, c = _sin_cos_series(_x0(x), x.order)
    _check_nonzero(s[..., 0], "cot", POLE_TOL)
    return _apply_series(x, _series_div(c, s))


def sec(x: Jet) -> Jet:
    _, c = _sin_cos_series(_x0(x), x.order)
    _check_nonzero(c[..., 0], "sec", POLE_TOL)
    one = np.zeros_like(c)
    one[..., 0] = 1.0
    return _apply_series(x, _series_div(one, c))


def csc(x: Jet) -> Jet:
    s, _ = _sin_cos_series(_x0(x), x.order)
    _check_nonzero(s[..., 0], "csc", POLE_TOL)
    one = np.zeros_like(s)
    one[..., 0] = 1.0
    return _apply_series(x, _series_div(one, s))


def exp(x: Jet) -> Jet:
    K = x.order
    fact = np.array([math.factorial(k) for k in range(K + 1)], dtype=float)
    return _apply_series(x, np.exp(_x0(x))[..., None] / fact)


def log(x: Jet) -> Jet:
    x0 = _x0(x)
    if np.any(x0 <= 0):
        raise DomainError("log: argument must be positive")
    K = x.order
    n = np.arange(1, K + 1)
    tail = (-1.0) ** (n + 1) / (n * x0[..., None] ** n)
    return _apply_series(x, np.concatenate([np.log(x0)[..., None], tail], axis=-1))


def sqrt(x: Jet) -> Jet:
    x0 = _x0(x)
    if np.any(x0 <= 0):
        raise DomainError("sqrt: argument must be positive")
    K = x.order
    coeffs = [np.sqrt(x0)]
    binom = 1.0
    for n in range(1, K + 1):
        binom *= (0.5 - (n - 1)) / n
        coeffs.append(binom * x0 ** (0.5 - n))
    return _apply_series(x, np.stack(coeffs, axis=-1))


def reciprocal(x: Jet) -> Jet:
    x0 = _x0(x)
    if np.any(x0 == 0.0):
        raise DomainError("division by zero")
    n = np.arange(x.order + 1)
    return _apply_series(x, (-1.0) ** n / x0[..., None] ** (n + 1))


def arctan(x: Jet) -> Jet:
    x0 = _x0(x)
    K = x.order
    # d/dx arctan = 1 / (1 + x^2); integrate its series term by term
    den = np.zeros(x0.shape + (K + 1,))
    den[..., 0] = 1.0 + x0**2
    if K >= 1:
        den[..., 1] = 2.0 * x0
    if K >= 2:
        den[..., 2] = 1.0
    one = np.zeros_like(den)
    one[..., 0] = 1.0
    d = _series_div(one, den)
    series = np.zeros_like(den)
    series[..., 0] = np.arctan(x0)
    for n in range(1, K + 1):
        series[..., n] = d[..., n - 1] / n
    return _apply_series(x, series)


def pow_int(x: Jet, p: int) -> Jet:
    if p < 0:
        return reciprocal(pow_int(x, -p))
    result = Jet(x.space, x._const_like(np.ones(x.shape)))
    base = x
    while p:
        if p & 1:
            result = result * base
        p >>= 1
        if p:
            base = base * base
    return result


FUNCTIONS = {
    "sin": sin,
    "cos": cos,
    "tan": tan,
    "cot": cot,
    "sec": sec,
    "csc": csc,
    "sqrt": sqrt,
    "exp": exp,
    "log": log,
    "arctan": arctan,
}


def jet_apply(op: str, args: Sequence) -> Jet:
    """Apply ``op`` to jet arguments; mirrors the operator set of the DSL."""
    if op == "+":
        a, b = args
        return a + b
    if op == "-":
        a, b = args
        return a - b
    if op == "*":
        a, b = args
        return a * b
    if op == "/":
        a, b = args
        return a / b
    if op == "neg":
        (a,) = args
        return -a
    if op == "pow_int":
        a, p = args
        return pow_int(a, int(p))
    try:
        fn = FUNCTIONS[op]
    except KeyError:
        raise ValueError(f"unknown jet operation {op!r}") from None
    (a,) = args
    return fn(a)


def jet_partial(j: Jet, alpha: Sequence[int]):
    return j.partial(alpha)


# -- small dense linear algebra over jets -------------------------------------

def _as_jet(x, like: Jet) -> Jet:
    return x if isinstance(x, Jet) else constant(x, like.nvars, like.order)


def solve(A: Jet, b) -> Jet:
    """Solve ``A x = b`` with Gaussian elimination, pivoting on values.

    ``A`` has batch shape (n, n); ``b`` has batch shape (n,) or (n, k).
    """
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("solve needs a square jet matrix")
    b = _as_jet(b, A)
    vector = b.ndim == 1
    if vector:
        b = b.reshape(n, 1)
    order = min(A.order, b.order)
    # augmented rows as (n + k,) jets
    rows = [concatenate([A[i].truncate(order), b[i].truncate(order)]) for i in range(n)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(rows[r].c[col, 0]))
        if rows[piv].c[col, 0] == 0.0:
            raise np.linalg.LinAlgError("singular jet matrix")
        rows[col], rows[piv] = rows[piv], rows[col]
        prow = rows[col] * reciprocal(rows[col][col])
        rows[col] = prow
        for r in range(n):
            if r != col:
                rows[r] = rows[r] - rows[r][col] * prow
    x = stack([row[n:] for row in rows])
    return x.reshape(n) if vector else x


def inv(A: Jet) -> Jet:
    n = A.shape[0]
    return solve(A, constant(np.eye(n), A.nvars, A.order))
