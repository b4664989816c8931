"""Chart-based dense tensor algebra with exact derivatives.

Index conventions used throughout the package:

* ``Gam[a, b, c]`` is the Christoffel symbol with ``nabla_a X^c = d_a X^c + Gam[a, b, c] X^b``.
* ``R[a, b, c, d]`` is ``R_{ab}{}^c{}_d`` with ``[nabla_a, nabla_b] X^c = R_{ab}{}^c{}_d X^d``.
* Lowering uses the third slot: ``R_{abcd} = R_{ab}{}^e{}_d g_{ec}``; ``Ric_{bd} = R_{ab}{}^a{}_d``.
* A covariant derivative adds its index as the first axis.

With these conventions the round sphere has ``R_{abcd} = g_{ac} g_{bd} - g_{bc} g_{ad}``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import taylor as ty
from .taylor import Taylor

LETTERS = "abcdefghijklmnopqrstuvwxy"


class GeometryError(ValueError):
    """Raised for singular metrics, boundary points and similar misuse."""


@dataclass(frozen=True)
class Chart:
    real_dim: int
    domain_box: tuple
    label: str = ""

    def __post_init__(self):
        if self.real_dim < 4 or self.real_dim % 2:
            raise GeometryError("real_dim must be even and at least 4")
        if len(self.domain_box) != self.real_dim:
            raise GeometryError("domain_box needs one interval per coordinate")
        for lo, hi in self.domain_box:
            if not lo < hi:
                raise GeometryError(f"empty interval ({lo}, {hi})")

    @property
    def n(self) -> int:
        return self.real_dim // 2

    def contains(self, p, margin: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float)
        for x, (lo, hi) in zip(p, self.domain_box):
            w = (hi - lo) * margin
            if not lo + w < x < hi - w:
                return False
        return True

    def sub_box(self, frac: float = 0.8):
        out = []
        for lo, hi in self.domain_box:
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * frac
            out.append((mid - half, mid + half))
        return out

    def sample(self, rng: np.random.Generator, count: int, frac: float = 0.8) -> np.ndarray:
        """Uniform samples from the centred sub-box covering ``frac`` of each interval."""
        box = np.array(self.sub_box(frac))
        return box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((count, self.real_dim))


@dataclass(frozen=True)
class Jet:
    point: tuple
    value: np.ndarray
    partials: list = field(default_factory=list)

    def schwarz_residual(self) -> float:
        """Largest asymmetry of mixed partials in the differentiation slots."""
        worst = 0.0
        for k, arr in enumerate(self.partials, start=1):
            for perm in itertools.permutations(range(k)):
                axes = list(perm) + list(range(k, arr.ndim))
                worst = max(worst, float(np.max(np.abs(arr - np.transpose(arr, axes)), initial=0.0)))
        return worst


def jet_from_taylor(t: Taylor, point, order: int) -> Jet:
    d = t.b.d
    partials = []
    for k in range(1, order + 1):
        arr = np.empty((d,) * k + t.shape)
        for idx in itertools.product(range(d), repeat=k):
            alpha = [0] * d
            for i in idx:
                alpha[i] += 1
            arr[idx] = ty.derivative(t, alpha)
        partials.append(arr)
    return Jet(tuple(float(x) for x in point), t.value.copy(), partials)


@dataclass(frozen=True)
class TensorField:
    """A tensor field given by closed-form components on a chart.

    ``func`` maps the list of coordinate series to a :class:`Taylor` (or a plain
    array for constant fields).  ``variance`` is a string over ``u``/``d``
    marking each slot contravariant or covariant.
    """

    variance: str
    func: Callable[[list], object]
    chart: Chart
    max_jet_order: int = 3

    @property
    def valence(self) -> tuple:
        return self.variance.count("u"), self.variance.count("d")

    def taylor(self, p, order: int) -> Taylor:
        if order > self.max_jet_order:
            raise GeometryError(f"jet order {order} exceeds max_jet_order {self.max_jet_order}")
        x = ty.variables(p, order)
        out = self.func(x)
        if not isinstance(out, Taylor):
            out = ty.constant(out, x[0].b)
        return out

    def __call__(self, p) -> np.ndarray:
        return self.taylor(p, 0).value


def jet(f: TensorField, p, order: int) -> Jet:
    if not f.chart.contains(p):
        raise GeometryError(f"point {p} is not interior to the chart")
    if order > min(f.max_jet_order, 3):
        raise GeometryError(f"order {order} too high")
    return jet_from_taylor(f.taylor(p, order), p, order)


# -- index gymnastics --------------------------------------------------------
def _data(t):
    return t.c if isinstance(t, Taylor) else np.asarray(t, dtype=float)


def _wrap(arr, like):
    return Taylor(arr, like.b) if isinstance(like, Taylor) else arr


def _check_subset(variance: str | None, subset: Sequence[int]):
    if variance is not None:
        kinds = {variance[i] for i in subset}
        if len(kinds) > 1:
            raise GeometryError("cannot symmetrise over indices of mixed variance")


def _perm_average(t, subset, signed: bool):
    subset = list(subset)
    data = _data(t)
    acc = np.zeros_like(data)
    count = 0
    for perm in itertools.permutations(range(len(subset))):
        axes = list(range(data.ndim))
        for src, dst in zip(subset, [subset[k] for k in perm]):
            axes[src] = dst
        sign = 1.0
        if signed:
            # parity of the permutation
            inv = sum(1 for i in range(len(perm)) for j in range(i + 1, len(perm)) if perm[i] > perm[j])
            sign = -1.0 if inv % 2 else 1.0
        acc = acc + sign * np.transpose(data, axes)
        count += 1
    return _wrap(acc / count, t)


def symmetrize(t, index_subset, variance: str | None = None):
    """Average over all permutations of ``index_subset`` (weight 1/k!)."""
    if isinstance(t, TensorField):
        _check_subset(t.variance, index_subset)
        return TensorField(t.variance, lambda x: symmetrize(_as_taylor(t, x), index_subset), t.chart, t.max_jet_order)
    _check_subset(variance, index_subset)
    return _perm_average(t, index_subset, signed=False)


def antisymmetrize(t, index_subset, variance: str | None = None):
    """Signed average over all permutations of ``index_subset``."""
    if isinstance(t, TensorField):
        _check_subset(t.variance, index_subset)
        return TensorField(t.variance, lambda x: antisymmetrize(_as_taylor(t, x), index_subset), t.chart, t.max_jet_order)
    _check_subset(variance, index_subset)
    return _perm_average(t, index_subset, signed=True)


def contract(t, index_pair, variance: str | None = None):
    """Sum over one upper and one lower slot."""
    i, j = index_pair
    if isinstance(t, TensorField):
        if t.variance[i] == t.variance[j]:
            raise GeometryError("contraction needs one upper and one lower index")
        rest = "".join(v for k, v in enumerate(t.variance) if k not in (i, j))
        return TensorField(rest, lambda x: contract(_as_taylor(t, x), index_pair), t.chart, t.max_jet_order)
    if variance is not None and variance[i] == variance[j]:
        raise GeometryError("contraction needs one upper and one lower index")
    data = _data(t)
    return _wrap(np.trace(data, axis1=i, axis2=j), t)


def _as_taylor(f: TensorField, x):
    out = f.func(x)
    return out if isinstance(out, Taylor) else ty.constant(out, x[0].b)


# -- connection and curvature on series ------------------------------------------
def christoffel(g: Taylor, ginv: Taylor | None = None) -> Taylor:
    """Levi-Civita symbols Gam[a, b, c] = Gamma_{ab}^c from a metric series."""
    if ginv is None:
        ginv = ty.inv(g)
    dg = ty.grad(g)  # dg[c, a, b] = d_c g_ab
    return ty.einsum("cd,abd->abc", ginv, _koszul(dg)) * 0.5


def _koszul(dg: Taylor) -> Taylor:
    """K[a, b, d] = d_a g_{db} + d_b g_{da} - d_d g_{ab}."""
    t1 = dg.transpose(0, 2, 1)  # [a, b, d] -> d_a g_{d b}: dg[a, d, b]
    t2 = dg.transpose(2, 0, 1)  # [a, b, d] -> d_b g_{d a}: dg[b, d, a]
    t3 = dg.transpose(1, 2, 0)  # [a, b, d] -> d_d g_{a b}: dg[d, a, b]
    return t1 + t2 - t3


def riemann_from_christoffel(Gam: Taylor) -> Taylor:
    """R[a, b, c, d] = R_{ab}^c_d."""
    dG = ty.grad(Gam)  # dG[a, b, d, c] = d_a Gamma_{bd}^c
    lin = dG.transpose(0, 1, 3, 2)  # [a, b, c, d]
    lin = lin - lin.transpose(1, 0, 2, 3)
    quad = ty.einsum("aec,bde->abcd", Gam, Gam)
    quad = quad - quad.transpose(1, 0, 2, 3)
    return lin + quad


def covariant_derivative_series(T, Gam: Taylor, variance: str) -> Taylor:
    """nabla T with the derivative slot first; ``variance`` describes T's slots."""
    if not isinstance(T, Taylor):
        T = ty.constant(T, Gam.b)
    out = ty.grad(T)
    k = len(variance)
    if k == 0:
        return out
    letters = LETTERS[1 : k + 1]
    for s, v in enumerate(variance):
        e = "z"
        if v == "u":
            src = letters[:s] + e + letters[s + 1 :]
            out = out + ty.einsum(f"a{e}{letters[s]},{src}->a{letters}", Gam, T)
        elif v == "d":
            src = letters[:s] + e + letters[s + 1 :]
            out = out - ty.einsum(f"a{letters[s]}{e},{src}->a{letters}", Gam, T)
        else:
            raise GeometryError(f"bad variance letter {v!r}")
    return out


# -- point-level wrappers ---------------------------------------------------
def _metric_series(g: TensorField, p, order: int) -> Taylor:
    if not g.chart.contains(p):
        raise GeometryError(f"point {p} is not interior to the chart")
    gs = g.taylor(p, order)
    w = np.linalg.eigvalsh(0.5 * (gs.value + gs.value.T))
    if np.min(np.abs(w)) < 1e-12 * max(1.0, np.max(np.abs(w))):
        raise GeometryError("metric is singular at the point")
    return gs


def levi_civita(g: TensorField, p) -> np.ndarray:
    return christoffel(_metric_series(g, p, 1)).value


def riemann(g: TensorField, p) -> np.ndarray:
    return riemann_from_christoffel(christoffel(_metric_series(g, p, 2))).value


def covariant_derivative(t: TensorField, g: TensorField, p) -> np.ndarray:
    Gam = christoffel(_metric_series(g, p, 1))
    return covariant_derivative_series(t.taylor(p, 1), Gam, t.variance).value


def metricity_residual(g: TensorField, p) -> float:
    gs = _metric_series(g, p, 1)
    Gam = christoffel(gs)
    return float(np.max(np.abs(covariant_derivative_series(gs, Gam, "dd").value)))


def lower_riemann(R, g):
    return ty.einsum("abed,ec->abcd", R, g) if isinstance(R, Taylor) or isinstance(g, Taylor) else np.einsum("abed,ec->abcd", R, g)


def ricci(R):
    return contract(R, (0, 2))


def finite_difference(f: Callable[[np.ndarray], np.ndarray], p, h: float = 1e-4) -> np.ndarray:
    """Central differences of an array-valued function; derivative index first."""
    p = np.asarray(p, dtype=float)
    out = []
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = h
        out.append((np.asarray(f(p + e)) - np.asarray(f(p - e))) / (2 * h))
    return np.array(out)


def permutation_parity(perm) -> int:
    return (-1) ** sum(1 for i in range(len(perm)) for j in range(i + 1, len(perm)) if perm[i] > perm[j])


__all__ = [
    "Chart",
    "Jet",
    "TensorField",
    "GeometryError",
    "jet",
    "symmetrize",
    "antisymmetrize",
    "contract",
    "christoffel",
    "riemann_from_christoffel",
    "covariant_derivative_series",
    "levi_civita",
    "riemann",
    "covariant_derivative",
    "metricity_residual",
    "finite_difference",
]
