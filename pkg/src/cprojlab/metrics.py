"""Concrete Kähler geometries: flat space, Fubini-Study, products and orthotoric pencils."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import taylor as ty
from .kahler import KahlerStructure, standard_J
from .taylor import Taylor
from .tensorcore import Chart, GeometryError, TensorField

es = ty.einsum


def _const(arr, x):
    return ty.constant(arr, x[0].b)


def _mat(rows, b) -> Taylor:
    """Nested rows of series and plain numbers as one matrix series."""
    return ty.stack([ty.stack([v if isinstance(v, Taylor) else ty.constant(float(v), b) for v in row]) for row in rows])


def flat_metric(n: int, box: float = 1.0) -> KahlerStructure:
    if n < 2:
        raise GeometryError("n must be at least 2")
    chart = Chart(2 * n, tuple((-box, box) for _ in range(2 * n)), f"flat C^{n}")
    return KahlerStructure(chart, lambda x: _const(np.eye(2 * n), x), label="flat")


def fubini_study(n: int, box: float = 1.0) -> KahlerStructure:
    """Affine chart of CP^n with Kähler potential log(1 + |z|^2).

    Coordinates are ordered (x1, y1, ..., xn, yn) with z_a = x_a + i y_a.
    """
    if n < 2:
        raise GeometryError("n must be at least 2")

    def metric(x):
        xs, ys = x[0::2], x[1::2]
        s = 1.0 + sum(u * u + v * v for u, v in zip(xs, ys))
        s1 = ty.reciprocal(s)
        s2 = s1 * s1
        rows = [[None] * (2 * n) for _ in range(2 * n)]
        for a in range(n):
            for b in range(n):
                re = xs[a] * xs[b] + ys[a] * ys[b]
                im = xs[a] * ys[b] - ys[a] * xs[b]
                re_h = -re * s2 + (s1 if a == b else 0.0)
                im_h = -im * s2
                rows[2 * a][2 * b] = re_h
                rows[2 * a + 1][2 * b + 1] = re_h
                rows[2 * a][2 * b + 1] = im_h
                rows[2 * a + 1][2 * b] = -im_h
        return _mat(rows, x[0].b)

    chart = Chart(2 * n, tuple((-box, box) for _ in range(2 * n)), f"CP^{n} affine chart")
    return KahlerStructure(chart, metric, label="fubini_study")


def _block(blocks: Sequence[Taylor]) -> Taylor:
    dims = [b.shape[0] for b in blocks]
    m = sum(dims)
    rows = []
    off = 0
    for blk, d in zip(blocks, dims):
        for i in range(d):
            row = []
            for j in range(m):
                if off <= j < off + d:
                    row.append(blk[i, j - off])
                else:
                    row.append(0.0)
            rows.append(row)
        off += d
    return _mat(rows, blocks[0].b)


def product_metric(factors: Sequence[KahlerStructure], weights: Sequence[float] | None = None) -> KahlerStructure:
    """Block-diagonal Kähler product sum_i c_i g_i (each factor uses standard J)."""
    if weights is None:
        weights = [1.0] * len(factors)
    if len(weights) != len(factors) or not factors:
        raise GeometryError("need one positive weight per factor")
    if any(w <= 0 for w in weights):
        raise GeometryError("weights must be positive")
    for f in factors:
        if f.complex_structure is not None or f.kahler_form is not None:
            raise GeometryError("product factors must use the standard complex structure")
    dims = [f.chart.real_dim for f in factors]
    box = sum((tuple(f.chart.domain_box) for f in factors), ())

    def metric(x):
        blocks, off = [], 0
        for f, w, d in zip(factors, weights, dims):
            blocks.append(f.metric(x[off : off + d]) * float(w))
            off += d
        return _block(blocks)

    chart = Chart(sum(dims), box, " x ".join(f.label for f in factors))
    return KahlerStructure(chart, metric, label="product")


def product_A(dims: Sequence[int], weights: Sequence[float]):
    """Constant endomorphism acting as weights[i] on the i-th factor."""
    return np.diag(np.concatenate([np.full(d, float(w)) for d, w in zip(dims, weights)]))


# -- orthotoric ---------------------------------------------------------------------
def polyval(coeffs, t):
    """Horner evaluation (highest degree first) for numbers or series."""
    acc = 0.0 * t + coeffs[0] if isinstance(t, Taylor) else coeffs[0]
    for c in coeffs[1:]:
        acc = acc * t + c
    return acc


def elementary(vals, r: int):
    """Elementary symmetric polynomial sigma_r of a list of numbers or series."""
    e = [1.0] + [0.0] * len(vals)
    for v in vals:
        for k in range(len(vals), 0, -1):
            e[k] = e[k] + e[k - 1] * v
    return e[r] if r <= len(vals) else 0.0


@dataclass(frozen=True)
class OrthotoricSpec:
    """Pure orthotoric data: one polynomial Theta_j and one interval per eigenvalue.

    ``theta`` holds coefficient lists with the highest degree first.
    ``xi_ranges`` are listed for xi_1, ..., xi_n and must be disjoint.
    """

    n: int
    theta: tuple
    xi_ranges: tuple
    t_range: tuple = (-1.0, 1.0)
    constant_eigenvalues: tuple = ()

    def __post_init__(self):
        if self.n < 2:
            raise GeometryError("n must be at least 2")
        if len(self.theta) != self.n or len(self.xi_ranges) != self.n:
            raise GeometryError("need n Theta polynomials and n intervals")
        if self.constant_eigenvalues:
            raise GeometryError("constant eigenvalues are not supported")
        ivs = sorted(self.xi_ranges)
        for (lo, hi) in ivs:
            if not lo < hi:
                raise GeometryError(f"empty interval ({lo}, {hi})")
        for (a, b), (c, d) in zip(ivs, ivs[1:]):
            if b > c:
                raise GeometryError("xi intervals overlap")
        for j, ((lo, hi), th) in enumerate(zip(self.xi_ranges, self.theta)):
            ts = np.linspace(lo, hi, 203)[1:-1]
            vals = np.polyval(th, ts)
            if np.any(vals == 0) or (vals.min() < 0 < vals.max()):
                raise GeometryError(f"Theta_{j + 1} vanishes on its interval")

    @property
    def common_theta(self) -> bool:
        return all(_same_poly(self.theta[0], th) for th in self.theta[1:])


def _same_poly(p, q, tol: float = 1e-10) -> bool:
    p, q = np.trim_zeros(np.asarray(p, float), "f"), np.trim_zeros(np.asarray(q, float), "f")
    m = max(len(p), len(q))
    p = np.concatenate([np.zeros(m - len(p)), p])
    q = np.concatenate([np.zeros(m - len(q)), q])
    return bool(np.max(np.abs(p - q)) <= tol * max(1.0, np.max(np.abs(p))))


@dataclass(frozen=True)
class PencilGeometry:
    """A Kähler structure with a second compatible solution A of the mobility equation.

    ``A`` maps coordinate series to ``A[a, b] = A_a^b``.  ``eta`` and
    ``eta_tilde`` are the two solutions trivialized by the volume of ``g``,
    i.e. ``g^{-1}`` and ``A g^{-1}`` as contravariant 2-tensors.
    """

    ks: KahlerStructure
    A: Callable
    spec: OrthotoricSpec | None = None
    eigenvalue_funcs: tuple = ()
    label: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.ks.n

    def A_field(self) -> TensorField:
        return TensorField("du", self.A, self.ks.chart, self.ks.max_jet_order)

    def eta(self) -> TensorField:
        return TensorField("uu", lambda x: ty.inv(self.ks.metric(x)), self.ks.chart, self.ks.max_jet_order)

    def eta_tilde(self) -> TensorField:
        def f(x):
            return es("ab,bc->ac", ty.inv(self.ks.metric(x)), self.A(x))

        return TensorField("uu", f, self.ks.chart, self.ks.max_jet_order)

    def eigenvalues(self, p) -> np.ndarray:
        return np.array([float(f(list(np.asarray(p, float)))) for f in self.eigenvalue_funcs])


def _orthotoric_parts(spec: OrthotoricSpec, x):
    n = spec.n
    xi = x[:n]
    hats = [[xi[k] for k in range(n) if k != j] for j in range(n)]
    Delta = []
    for j in range(n):
        d = 1.0
        for k in range(n):
            if k != j:
                d = d * (xi[j] - xi[k])
        Delta.append(d)
    Theta = [polyval(spec.theta[j], xi[j]) for j in range(n)]
    sig = [[elementary(hats[j], r) for r in range(n)] for j in range(n)]
    return xi, Delta, Theta, sig


def orthotoric_metric(spec: OrthotoricSpec):
    n = spec.n

    def metric(x):
        xi, Delta, Theta, sig = _orthotoric_parts(spec, x)
        rows = [[0.0] * (2 * n) for _ in range(2 * n)]
        for j in range(n):
            rows[j][j] = Delta[j] / Theta[j]
        for r in range(n):
            for s in range(n):
                acc = 0.0
                for j in range(n):
                    acc = acc + Theta[j] / Delta[j] * sig[j][r] * sig[j][s]
                rows[n + r][n + s] = acc
        return _mat(rows, x[0].b)

    def kahler_form(x):
        xi, Delta, Theta, sig = _orthotoric_parts(spec, x)
        rows = [[0.0] * (2 * n) for _ in range(2 * n)]
        for j in range(n):
            for r in range(n):
                rows[j][n + r] = sig[j][r]
                rows[n + r][j] = -sig[j][r]
        return _mat(rows, x[0].b)

    return metric, kahler_form


def orthotoric(spec: OrthotoricSpec, validate_samples: int = 200, seed: int = 0) -> PencilGeometry:
    """Pure orthotoric Kähler metric in coordinates (xi_1..xi_n, t_1..t_n).

    ``g = sum Delta_j/Theta_j dxi_j^2 + sum Theta_j/Delta_j (sum_r sigma_{r-1}(xi^_j) dt_r)^2``
    with Kähler form ``sum_r d sigma_r ^ dt_r``.  These coordinates are not
    holomorphic, so J is computed from the Kähler form.
    """
    n = spec.n
    box = tuple(spec.xi_ranges) + tuple(spec.t_range for _ in range(n))
    chart = Chart(2 * n, box, "orthotoric")
    metric, kahler_form = orthotoric_metric(spec)
    ks = KahlerStructure(chart, metric, kahler_form=kahler_form, label="orthotoric")

    def A(x):
        g = metric(x)
        J = es("ac,cb->ab", kahler_form(x), ty.inv(g))
        cols = []
        for j in range(n):
            e = np.zeros(2 * n)
            e[j] = 1.0
            cols.append(ty.constant(e, x[0].b))
            cols.append(es("ab,a->b", J, e))
        V = ty.stack(cols, axis=1)  # columns are vectors
        D = _mat([[x[k // 2] if k == l else 0.0 for l in range(2 * n)] for k in range(2 * n)], x[0].b)
        M = es("ij,jk,kl->il", V, D, ty.inv(V))
        return M.T

    rng = np.random.default_rng(seed)
    for p in chart.sample(rng, validate_samples):
        g = metric(ty.variables(p, 0)).value
        w = np.linalg.eigvalsh(g)
        if w.min() <= 0:
            diag = []
            for j in range(n):
                d = np.prod([p[j] - p[k] for k in range(n) if k != j])
                diag.append(f"Delta_{j + 1}/Theta_{j + 1} = {d / np.polyval(spec.theta[j], p[j]):+.3e}")
            raise GeometryError(f"metric not positive definite at {p}: " + ", ".join(diag))

    eig = tuple((lambda j: (lambda x: x[j]))(j) for j in range(n))
    return PencilGeometry(ks, A, spec, eig, label="orthotoric")


def default_orthotoric(common: bool = True, perturb: float = 0.1, t_range=(-1.0, 1.0)) -> OrthotoricSpec:
    """Theta = t (t - 1) (t - 2) on xi_1 in (2, 3), xi_2 in (1, 2); the metric does not depend on t."""
    theta = [1.0, -3.0, 2.0, 0.0]
    other = list(theta) if common else [1.0, -3.0, 2.0, -perturb]
    return OrthotoricSpec(2, (tuple(theta), tuple(other)), ((2.0, 3.0), (1.0, 2.0)), tuple(t_range))


def compact_orthotoric(t_range=(-1.0, 1.0)) -> OrthotoricSpec:
    """Theta = -t (t - 1) (t - 2) on xi_1 in (1, 2), xi_2 in (0, 1).

    Theta vanishes on every edge of the xi-box, so geodesics with generic
    momentum in the cyclic t-directions stay inside it.
    """
    theta = (-1.0, 3.0, -2.0, 0.0)
    return OrthotoricSpec(2, (theta, theta), ((1.0, 2.0), (0.0, 1.0)), tuple(t_range))


# -- pencil reparametrization ------------------------------------------------------------
def pencil_metric_from_eta(eta: Taylor, n: int) -> Taylor:
    """Metric whose volume-weighted inverse equals ``eta``: g^{-1} = eta (det eta)^{1/2}."""
    return ty.inv(eta) * ty.power(ty.det(eta), -0.5)


def reparametrize_pencil(pg: PencilGeometry, a: float, b: float, c: float, d: float) -> PencilGeometry:
    """Geometry of the metric attached to c*eta_tilde + d*eta, with A~ = (cA + d)^{-1}(aA + b)."""
    det = a * d - b * c
    if det == 0:
        raise GeometryError("ad - bc must be nonzero")
    n = pg.n
    m = 2 * n
    ks0 = pg.ks

    def new_eta(x):
        g = ks0.metric(x)
        ginv = ty.inv(g)
        vol = ty.sqrt(ty.det(g))
        Am = pg.A(x)
        M = Am * c + np.eye(m) * d
        return es("ab,bc->ac", ginv, M) * ty.power(vol, 1.0 / (n + 1))

    def metric(x):
        eta = new_eta(x)
        dv = ty.det(eta).value
        if not np.all(np.isfinite(dv)) or abs(float(dv)) < 1e-300:
            raise GeometryError("c*eta_tilde + d*eta is degenerate")
        G = pencil_metric_from_eta(eta, n)
        return (G + G.T) * 0.5

    def A_new(x):
        Am = pg.A(x)
        M = Am * c + np.eye(m) * d
        N = Am * a + np.eye(m) * b
        return es("ab,bc->ac", N, ty.inv(M))

    ks = KahlerStructure(
        ks0.chart, metric, ks0.complex_structure, ks0.kahler_form, label=ks0.label + " (reparametrized)"
    )
    if ks0.complex_structure is None and ks0.kahler_form is None:
        ks = KahlerStructure(ks0.chart, metric, label=ks0.label + " (reparametrized)")
    elif ks0.kahler_form is not None:
        # keep J fixed: J = Omega0 g0^{-1}, so the new Kähler form is J g_new
        def J_fixed(x):
            return es("ac,cb->ab", ks0.kahler_form(x), ty.inv(ks0.metric(x)))

        ks = KahlerStructure(ks0.chart, metric, complex_structure=J_fixed, label=ks0.label + " (reparametrized)")

    eig = tuple(
        (lambda f: (lambda x: (f(x) * a + b) / (f(x) * c + d)))(f) for f in pg.eigenvalue_funcs
    )
    # Theta changes under the Mobius map, so the spec is not carried over
    return PencilGeometry(ks, A_new, None, eig, label=pg.label + " (reparametrized)", extras={"mobius": (a, b, c, d)})


def mobius_theta(theta: Sequence[float], a: float, b: float, c: float, d: float) -> np.ndarray:
    """Theta after s = (a t + b)/(c t + d): (a - c s)^{n+1} Theta((d s - b)/(a - c s)).

    Coefficients highest degree first, as in ``OrthotoricSpec``; degree n+1 = len(theta) - 1.
    """
    coeffs = np.asarray(theta, dtype=float)
    k = len(coeffs) - 1
    P = np.polynomial.Polynomial
    num, den = P([-b, d]), P([a, -c])
    out = sum((ci * num ** (k - i) * den**i for i, ci in enumerate(coeffs)), P([0.0]))
    res = np.zeros(k + 1)
    res[: len(out.coef)] = out.coef[: k + 1]
    return res[::-1]
