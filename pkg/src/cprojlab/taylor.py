"""Truncated multivariate Taylor arithmetic on numpy arrays.

A :class:`Taylor` holds, for every entry of a tensor, the Taylor coefficients
of a smooth function around a base point up to total degree ``K``.  The
coefficient axis is always the last one.  Products truncate at degree ``K``;
a partial derivative lowers the degree by one.  Everything downstream
(metrics, connections, curvature and their covariant derivatives) is built
from these objects, so derivatives are exact up to rounding.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

_JET_LETTER = "Z"


class Basis:
    """Monomial bookkeeping for ``d`` variables up to total degree ``K``."""

    def __init__(self, d: int, K: int):
        self.d = d
        self.K = K
        monos = []
        for deg in range(K + 1):
            for combo in itertools.combinations_with_replacement(range(d), deg):
                alpha = [0] * d
                for i in combo:
                    alpha[i] += 1
                monos.append(tuple(alpha))
        # degree-major order, so truncation to a lower degree is a prefix slice
        self.monomials = monos
        self.index = {m: k for k, m in enumerate(monos)}
        self.M = len(monos)
        self.sizes = [math.comb(d + k, k) for k in range(K + 1)]
        self.factorial = np.array(
            [math.prod(math.factorial(a) for a in m) for m in monos], dtype=float
        )

        I, J, T = [], [], []
        for a, ma in enumerate(monos):
            da = sum(ma)
            for b, mb in enumerate(monos):
                if da + sum(mb) > K:
                    continue
                I.append(a)
                J.append(b)
                T.append(self.index[tuple(x + y for x, y in zip(ma, mb))])
        self.I = np.array(I)
        self.J = np.array(J)
        S = np.zeros((len(T), self.M))
        S[np.arange(len(T)), T] = 1.0
        self.S = S

        # partial derivative maps onto the basis of degree K-1
        self.dsrc = []
        self.dfac = []
        if K > 0:
            low = monos[: self.sizes[K - 1]]
            for i in range(d):
                src, fac = [], []
                for m in low:
                    up = list(m)
                    up[i] += 1
                    src.append(self.index[tuple(up)])
                    fac.append(up[i])
                self.dsrc.append(np.array(src))
                self.dfac.append(np.array(fac, dtype=float))


@lru_cache(maxsize=None)
def basis(d: int, K: int) -> Basis:
    return Basis(d, K)


class Taylor:
    """Tensor of truncated Taylor series; coefficients on the last axis."""

    __array_priority__ = 100
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, c: np.ndarray, b: Basis):
        self.c = c
        self.b = b

    # -- structure -------------------------------------------------------
    @property
    def shape(self):
        return self.c.shape[:-1]

    @property
    def ndim(self):
        return self.c.ndim - 1

    @property
    def order(self) -> int:
        return self.b.K

    @property
    def value(self) -> np.ndarray:
        return self.c[..., 0]

    def truncate(self, K: int) -> "Taylor":
        if K >= self.b.K:
            return self
        nb = basis(self.b.d, K)
        return Taylor(self.c[..., : nb.M], nb)

    def __getitem__(self, key) -> "Taylor":
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is Ellipsis for k in key):
            raise IndexError("Ellipsis indexing is not supported on Taylor")
        return Taylor(self.c[key], self.b)

    def transpose(self, *axes) -> "Taylor":
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        return Taylor(np.transpose(self.c, tuple(axes) + (self.ndim,)), self.b)

    @property
    def T(self) -> "Taylor":
        return self.transpose()

    def reshape(self, *shape) -> "Taylor":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Taylor(self.c.reshape(tuple(shape) + (self.b.M,)), self.b)

    def sum(self, axis=None) -> "Taylor":
        if axis is None:
            axis = tuple(range(self.ndim))
        return Taylor(self.c.sum(axis=axis), self.b)

    def copy(self) -> "Taylor":
        return Taylor(self.c.copy(), self.b)

    # -- arithmetic ------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Taylor):
            K = min(self.b.K, other.b.K)
            return self.truncate(K), other.truncate(K)
        return self, None

    def __add__(self, other):
        if isinstance(other, Taylor):
            a, o = self._coerce(other)
            return Taylor(a.c + o.c, a.b)
        c = self.c.copy()
        c[..., 0] = c[..., 0] + other
        return Taylor(c, self.b)

    __radd__ = __add__

    def __neg__(self):
        return Taylor(-self.c, self.b)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Taylor):
            a, o = self._coerce(other)
            b = a.b
            prod = a.c[..., b.I] * o.c[..., b.J]
            return Taylor(prod @ b.S, b)
        other = np.asarray(other, dtype=float)
        return Taylor(self.c * other[..., None], self.b)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Taylor):
            return self * reciprocal(other)
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, int) and p >= 0:
            out = ones_like(self)
            for _ in range(p):
                out = out * self
            return out
        return power(self, p)

    def __repr__(self):
        return f"Taylor(shape={self.shape}, order={self.b.K}, value={self.value!r})"


# -- construction ----------------------------------------------------------
def variables(point, K: int) -> list[Taylor]:
    """Coordinate functions x_i = p_i + h_i as degree-K series."""
    point = np.asarray(point, dtype=float)
    d = point.size
    b = basis(d, K)
    out = []
    for i in range(d):
        c = np.zeros(b.M)
        c[0] = point[i]
        if K >= 1:
            e = [0] * d
            e[i] = 1
            c[b.index[tuple(e)]] = 1.0
        out.append(Taylor(c, b))
    return out


def constant(arr, b: Basis) -> Taylor:
    arr = np.asarray(arr, dtype=float)
    c = np.zeros(arr.shape + (b.M,))
    c[..., 0] = arr
    return Taylor(c, b)


def ones_like(a: Taylor) -> Taylor:
    return constant(np.ones(a.shape), a.b)


def zeros_like(a: Taylor) -> Taylor:
    return Taylor(np.zeros_like(a.c), a.b)


def stack(items, axis: int = 0) -> Taylor:
    """Stack Taylor objects (or plain numbers) along a new tensor axis."""
    ref = next((x for x in items if isinstance(x, Taylor)), None)
    if ref is None:
        raise ValueError("stack needs at least one Taylor entry")
    K = min(x.b.K for x in items if isinstance(x, Taylor))
    b = basis(ref.b.d, K)
    cs = []
    for x in items:
        if isinstance(x, Taylor):
            cs.append(x.truncate(K).c)
        else:
            cs.append(constant(np.broadcast_to(x, ref.shape), b).c)
    if axis < 0:
        axis += ref.ndim + 1
    return Taylor(np.stack(cs, axis=axis), b)


def array(nested) -> Taylor:
    """Build a tensor from nested lists of scalar Taylor objects/numbers."""
    if isinstance(nested, (list, tuple)):
        return stack([array(x) if isinstance(x, (list, tuple)) else x for x in nested])
    return nested


# -- univariate functions ----------------------------------------------------
def _compose(a: Taylor, derivs) -> Taylor:
    """sum_m f^(m)(a0)/m! (a - a0)^m, derivs[m] = f^(m)(a0)."""
    K = a.b.K
    h = a.copy()
    h.c[..., 0] = 0.0
    r = constant(derivs[K] / math.factorial(K), a.b)
    for m in range(K - 1, -1, -1):
        r = r * h + derivs[m] / math.factorial(m)
    return r


def exp(a: Taylor) -> Taylor:
    e = np.exp(a.value)
    return _compose(a, [e] * (a.b.K + 1))


def log(a: Taylor) -> Taylor:
    x = a.value
    d = [np.log(x)]
    for m in range(1, a.b.K + 1):
        d.append((-1) ** (m - 1) * math.factorial(m - 1) / x**m)
    return _compose(a, d)


def power(a: Taylor, p: float) -> Taylor:
    x = a.value
    d = []
    coef = 1.0
    for m in range(a.b.K + 1):
        d.append(coef * x ** (p - m))
        coef *= p - m
    return _compose(a, d)


def reciprocal(a: Taylor) -> Taylor:
    return power(a, -1.0)


def sqrt(a: Taylor) -> Taylor:
    return power(a, 0.5)


def sin(a: Taylor) -> Taylor:
    s, c = np.sin(a.value), np.cos(a.value)
    cyc = [s, c, -s, -c]
    return _compose(a, [cyc[m % 4] for m in range(a.b.K + 1)])


def cos(a: Taylor) -> Taylor:
    s, c = np.sin(a.value), np.cos(a.value)
    cyc = [c, -s, -c, s]
    return _compose(a, [cyc[m % 4] for m in range(a.b.K + 1)])


# -- differentiation ---------------------------------------------------------
def partial(a: Taylor, i: int) -> Taylor:
    b = a.b
    if b.K == 0:
        raise ValueError("cannot differentiate a degree-0 series")
    nb = basis(b.d, b.K - 1)
    return Taylor(a.c[..., b.dsrc[i]] * b.dfac[i], nb)


def grad(a: Taylor) -> Taylor:
    """Coordinate gradient; the new derivative index is the first axis."""
    return stack([partial(a, i) for i in range(a.b.d)], axis=0)


def derivative(a: Taylor, alpha) -> np.ndarray:
    """The mixed partial d^alpha of every entry at the base point."""
    k = a.b.index[tuple(alpha)]
    return a.c[..., k] * a.b.factorial[k]


# -- tensor algebra ------------------------------------------------------------
def einsum(spec: str, *ops):
    """np.einsum over tensor indices for a mix of Taylor and plain arrays."""
    ins, out = spec.replace(" ", "").split("->")
    ins = ins.split(",")
    if len(ins) != len(ops):
        raise ValueError("einsum operand count mismatch")
    tay = [(s, o) for s, o in zip(ins, ops) if isinstance(o, Taylor)]
    const = [(s, np.asarray(o, dtype=float)) for s, o in zip(ins, ops) if not isinstance(o, Taylor)]
    if not tay:
        return np.einsum(spec, *[o for _, o in const])
    Z = _JET_LETTER
    K = min(o.b.K for _, o in tay)
    b = basis(tay[0][1].b.d, K)

    def needed(exclude_idx, cur_letters):
        rest = set(out)
        for k, (s, _) in enumerate(tay):
            if k not in exclude_idx:
                rest |= set(s)
        for s, _ in const:
            rest |= set(s)
        return "".join(ch for ch in dict.fromkeys(cur_letters) if ch in rest)

    s0, acc = tay[0][0], tay[0][1].truncate(K).c
    for k in range(1, len(tay)):
        s1, o1 = tay[k]
        o1 = o1.truncate(K).c
        keep = needed(set(range(k + 1)), s0 + s1)
        prod = np.einsum(
            f"{s0}{Z},{s1}{Z}->{keep}{Z}", acc[..., b.I], o1[..., b.J], optimize=True
        )
        acc = prod @ b.S
        s0 = keep
    if const:
        full = ",".join([s0 + Z] + [s for s, _ in const]) + "->" + out + Z
        acc = np.einsum(full, acc, *[o for _, o in const], optimize=True)
    else:
        acc = np.einsum(f"{s0}{Z}->{out}{Z}", acc)
    return Taylor(acc, b)


def matmul(a: Taylor, b) -> Taylor:
    return einsum("ij,jk->ik", a, b)


def inv(a: Taylor) -> Taylor:
    """Inverse of a square matrix series (last two tensor axes)."""
    A0 = np.linalg.inv(a.value)
    N = a.copy()
    N.c[..., 0] = 0.0
    Y = einsum("ij,jk->ik", A0, N)
    term = constant(A0, a.b)
    out = term
    for _ in range(a.b.K):
        term = -einsum("ij,jk->ik", Y, term)
        out = out + term
    return out


def trace(a: Taylor) -> Taylor:
    return einsum("ii->", a)


def det(a: Taylor) -> Taylor:
    """Determinant via det(A0) exp(tr log(1 + A0^{-1} N))."""
    A0 = a.value
    d0 = np.linalg.det(A0)
    N = a.copy()
    N.c[..., 0] = 0.0
    X = einsum("ij,jk->ik", np.linalg.inv(A0), N)
    logm = zeros_like(X)
    P = X
    for k in range(1, a.b.K + 1):
        logm = logm + P * ((-1) ** (k + 1) / k)
        if k < a.b.K:
            P = einsum("ij,jk->ik", P, X)
    return exp(trace(logm)) * d0
