"""Geodesic and J-planar flows, pencil integrals and their brackets.

Phase space is the cotangent bundle with ``H(q, p) = g^{ab}(q) p_a p_b``; the
equations of motion are Hamilton's, so ``dq/dt = 2 g^{-1} p``.  A polynomial
function on T*M is identified with the symmetric contravariant tensor of its
coefficients, and the Poisson bracket ``{F, G} = dF/dp . dG/dq - dF/dq . dG/dp``
matches the Schouten bracket under that identification.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import taylor as ty
from .kahler import KahlerStructure
from .metrics import PencilGeometry
from .mobility import adjugate_complex, complex_elementary, det_pencil
from .taylor import Taylor
from .tensorcore import GeometryError, christoffel, covariant_derivative_series

es = ty.einsum


# -- phase space ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PhaseState:
    q: np.ndarray
    p: np.ndarray


@dataclass
class Trajectory:
    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    truncated: bool = False
    diagnostic: str = ""

    def __len__(self) -> int:
        return len(self.times)

    def state(self, i: int) -> PhaseState:
        return PhaseState(self.q[i], self.p[i])


def _inverse_metric_jet(ks: KahlerStructure, q):
    x = ty.variables(q, 1)
    gi = ty.inv(ks.metric(x))
    return gi.value, ty.grad(gi).value  # grad: [c, a, b] = d_c g^{ab}


def hamiltonian(ks: KahlerStructure, q, p) -> float:
    g = ks.metric(ty.variables(q, 0)).value
    return float(p @ np.linalg.solve(g, p))


def hamilton_rhs(ks: KahlerStructure, q, p):
    gi, dgi = _inverse_metric_jet(ks, q)
    return 2.0 * gi @ p, -np.einsum("cab,a,b->c", dgi, p, p)


def _rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _stormer_step(ks, q, p, h, tol=1e-14, maxit=50):
    """Generalized Stormer-Verlet step for a non-separable Hamiltonian."""
    ph = p.copy()
    for _ in range(maxit):
        _, dp = hamilton_rhs(ks, q, ph)
        new = p + 0.5 * h * dp
        done = np.max(np.abs(new - ph)) < tol * max(1.0, np.max(np.abs(new)))
        ph = new
        if done:
            break
    dq0, _ = hamilton_rhs(ks, q, ph)
    qn = q + h * dq0
    for _ in range(maxit):
        dq1, _ = hamilton_rhs(ks, qn, ph)
        new = q + 0.5 * h * (dq0 + dq1)
        done = np.max(np.abs(new - qn)) < tol * max(1.0, np.max(np.abs(new)))
        qn = new
        if done:
            break
    _, dp1 = hamilton_rhs(ks, qn, ph)
    return qn, ph + 0.5 * h * dp1


def geodesic_flow(ks: KahlerStructure, s0: PhaseState, T: float, dt: float, method: str = "rk4") -> Trajectory:
    """Integrate the cotangent geodesic flow; stops early if the chart is left."""
    if dt <= 0 or dt > T / 100:
        raise ValueError("need 0 < dt <= T/100")
    if method not in ("rk4", "stormer"):
        raise ValueError(f"unknown method {method!r}")
    m = ks.chart.real_dim
    steps = int(round(T / dt))
    qs = np.empty((steps + 1, m))
    ps = np.empty((steps + 1, m))
    qs[0], ps[0] = np.asarray(s0.q, float), np.asarray(s0.p, float)
    if not ks.chart.contains(qs[0]):
        raise GeometryError("initial point is outside the chart")

    def f(y):
        dq, dp = hamilton_rhs(ks, y[:m], y[m:])
        return np.concatenate([dq, dp])

    last, diag = steps, ""
    for i in range(steps):
        try:
            if method == "rk4":
                y = _rk4_step(f, np.concatenate([qs[i], ps[i]]), dt)
                qn, pn = y[:m], y[m:]
            else:
                qn, pn = _stormer_step(ks, qs[i], ps[i], dt)
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            last, diag = i, f"integration failed at step {i}: {exc}"
            break
        if not (np.all(np.isfinite(qn)) and np.all(np.isfinite(pn))):
            last, diag = i, f"non-finite state at step {i + 1}"
            break
        if not ks.chart.contains(qn):
            last, diag = i, f"left the chart at t={(i + 1) * dt:.6g}"
            break
        qs[i + 1], ps[i + 1] = qn, pn
    times = dt * np.arange(last + 1)
    return Trajectory(times, qs[: last + 1], ps[: last + 1], last < steps, diag)


# -- pencil integrals ---------------------------------------------------------------------
def _frame(ks: KahlerStructure, x):
    g = ks.metric(x)
    return g, ty.inv(g), ks._J_series(x, g)


def killing_field(pg: PencilGeometry, t: float) -> Callable:
    """x -> K~(t)^b = J_c^b g^{ca} d_a det_C(A - t)."""
    ks = pg.ks

    def K(x):
        _, gi, J = _frame(ks, x)
        f = det_pencil(complex_elementary(pg.A(x), ks.n), t)
        if not isinstance(f, Taylor):
            return ty.constant(np.zeros(2 * ks.n), x[0].b)
        return es("cb,c->b", J, es("ab,b->a", gi, ty.grad(f)))

    return K


def killing_tensor_up(pg: PencilGeometry, t: float) -> Callable:
    """x -> H~(t)^{ab} = g^{ac} adj_C(A - t)_c^b."""
    ks = pg.ks
    m = 2 * ks.n

    def H(x):
        _, gi, _ = _frame(ks, x)
        return es("ac,cb->ab", gi, adjugate_complex(pg.A(x) - np.eye(m) * t, ks.n))

    return H


def inverse_metric(ks: KahlerStructure) -> Callable:
    return lambda x: ty.inv(ks.metric(x))


def polynomial_value(T: np.ndarray, p) -> float:
    out = np.asarray(T, float)
    for _ in range(out.ndim):
        out = out @ p
    return float(out)


def default_t_grid(pg: PencilGeometry, samples, k: int = 5, gap: float = 0.5) -> np.ndarray:
    """k Chebyshev points in an interval below the sampled spectrum of A."""
    lo = min(float(np.min(pg.eigenvalues(p))) for p in samples) if pg.eigenvalue_funcs else 0.0
    a, b = lo - gap - 1.0, lo - gap
    j = np.arange(k)
    return 0.5 * (a + b) + 0.5 * (b - a) * np.cos((2 * j + 1) * np.pi / (2 * k))


@dataclass
class IntegralRecords:
    times: np.ndarray
    H: np.ndarray
    L: np.ndarray  # [time, t-index]
    I: np.ndarray
    t_values: np.ndarray

    def drifts(self) -> dict:
        def rel(col):
            col = np.asarray(col)
            if len(col) == 0:
                return 0.0
            return float(np.max(np.abs(col - col[0])) / max(abs(col[0]), 1e-300))

        return {
            "H": rel(self.H),
            "L": [rel(self.L[:, i]) for i in range(self.L.shape[1])],
            "I": [rel(self.I[:, i]) for i in range(self.I.shape[1])],
        }

    def max_drift(self) -> float:
        d = self.drifts()
        return max([d["H"], *d["L"], *d["I"]])


def integrals_at(pg: PencilGeometry, q, p, t_values) -> tuple:
    ks = pg.ks
    x = ty.variables(q, 1)
    g, gi, J = _frame(ks, x)
    e = complex_elementary(pg.A(x), ks.n)
    m = 2 * ks.n
    Ls, Is = [], []
    giv = gi.value
    A0 = pg.A(ty.variables(q, 0)).value
    for t in t_values:
        f = det_pencil(e, t)
        if isinstance(f, Taylor):
            K = J.value.T @ (giv @ ty.grad(f).value)
        else:
            K = np.zeros(m)
        Ls.append(float(K @ p))
        Is.append(float(p @ giv @ adjugate_complex(A0 - np.eye(m) * t, ks.n) @ p))
    return float(p @ giv @ p), np.array(Ls), np.array(Is)


def integrals_on_trajectory(pg: PencilGeometry, traj: Trajectory, t_values, every: int = 1) -> IntegralRecords:
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    idx = np.arange(0, len(traj), every)
    if idx[-1] != len(traj) - 1:
        idx = np.append(idx, len(traj) - 1)
    Hs, Ls, Is = [], [], []
    for i in idx:
        h, L, I = integrals_at(pg, traj.q[i], traj.p[i], t_values)
        Hs.append(h)
        Ls.append(L)
        Is.append(I)
    return IntegralRecords(traj.times[idx], np.array(Hs), np.array(Ls), np.array(Is), np.asarray(t_values, float))


# -- Schouten bracket ---------------------------------------------------------------------
def _check_symmetric(T: np.ndarray, name: str):
    for perm in itertools.permutations(range(T.ndim)):
        if np.max(np.abs(T - T.transpose(perm)), initial=0.0) > 1e-10 * max(1.0, np.abs(T).max(initial=0.0)):
            raise GeometryError(f"{name} is not symmetric")


def _sym(T: np.ndarray) -> np.ndarray:
    perms = list(itertools.permutations(range(T.ndim)))
    return sum(T.transpose(pm) for pm in perms) / len(perms) if T.ndim > 1 else T


def schouten_bracket(ks: KahlerStructure, Q: Callable, R: Callable, q, connection: str = "flat") -> np.ndarray:
    """[Q, R] = j Q^{a(..} D_a R^{..)} - k R^{a(..} D_a Q^{..)} at the point q.

    ``connection`` is ``"flat"`` (coordinate derivatives) or ``"levi-civita"``;
    the result does not depend on the choice.
    """
    # order 2 so that fields built from gradients still carry a first derivative
    x = ty.variables(q, 2)
    Qs, Rs = Q(x), R(x)
    Qs = Qs if isinstance(Qs, Taylor) else ty.constant(np.asarray(Qs, float), x[0].b)
    Rs = Rs if isinstance(Rs, Taylor) else ty.constant(np.asarray(Rs, float), x[0].b)
    j, k = Qs.ndim, Rs.ndim
    _check_symmetric(Qs.value, "Q")
    _check_symmetric(Rs.value, "R")
    if connection == "flat":
        dQ, dR = ty.grad(Qs).value, ty.grad(Rs).value
    elif connection == "levi-civita":
        Gam = christoffel(ks.metric(ty.variables(q, 2)))
        dQ = covariant_derivative_series(Qs, Gam, "u" * j).value if j else ty.grad(Qs).value
        dR = covariant_derivative_series(Rs, Gam, "u" * k).value if k else ty.grad(Rs).value
    else:
        raise ValueError(f"unknown connection {connection!r}")
    Qv, Rv = Qs.value, Rs.value
    out = np.zeros((Qv.shape[0],) * (j + k - 1)) if j + k >= 1 else np.zeros(())
    if j:
        out = out + j * np.tensordot(Qv, dR, axes=([0], [0]))
    if k:
        out = out - k * np.moveaxis(np.tensordot(Rv, dQ, axes=([0], [0])), range(k - 1), range(j, j + k - 1))
    return _sym(out)


def poisson_bracket(ks: KahlerStructure, Q: Callable, R: Callable, q, p) -> float:
    return polynomial_value(schouten_bracket(ks, Q, R, q), np.asarray(p, float))


def involution_matrix(pg: PencilGeometry, t_values, q, p) -> np.ndarray:
    """Pairwise brackets among H, L_t and I_t at one phase point."""
    fns = [inverse_metric(pg.ks)]
    fns += [killing_field(pg, t) for t in t_values]
    fns += [killing_tensor_up(pg, t) for t in t_values]
    N = len(fns)
    out = np.zeros((N, N))
    for a in range(N):
        for b in range(a + 1, N):
            out[a, b] = poisson_bracket(pg.ks, fns[a], fns[b], q, p)
            out[b, a] = -out[a, b]
    return out


# -- independence --------------------------------------------------------------------------
def generic_momentum(rng, m: int, min_product: float = 1e-2) -> np.ndarray:
    """Random covector with all pairwise products of components away from zero."""
    while True:
        p = rng.normal(size=m)
        prods = np.abs(np.outer(p, p))[np.triu_indices(m, 1)]
        if prods.min() > min_product:
            return p


def _differentials(pg: PencilGeometry, q, p, t_values):
    """Rows d(L_t) and d(I_t) with respect to (q, p)."""
    ks = pg.ks
    m = 2 * ks.n
    x = ty.variables(q, 2)
    dL, dI = [], []
    for t in t_values:
        K = killing_field(pg, t)(x)
        Hu = killing_tensor_up(pg, t)(x)
        dL.append(np.concatenate([ty.grad(K).value @ p, K.value]))
        dI.append(np.concatenate([np.einsum("cab,a,b->c", ty.grad(Hu).value, p, p), 2 * Hu.value @ p]))
    return np.array(dL).reshape(-1, 2 * m), np.array(dI).reshape(-1, 2 * m)


def numerical_rank(M: np.ndarray, rtol: float = 1e-7) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def independence_count(pg: PencilGeometry, phase_samples: Sequence[PhaseState], t_values=None, rtol: float = 1e-7):
    """(number of independent L_t, number of independent I_t) at generic points.

    The count at each sample is a numerical rank; the reported value is the
    maximum, which is attained on a dense open set.
    """
    if len(phase_samples) < 10:
        raise ValueError("need at least 10 phase samples")
    if t_values is None:
        t_values = default_t_grid(pg, [s.q for s in phase_samples], k=2 * pg.n + 1)
    rl, ri = [], []
    for s in phase_samples:
        dL, dI = _differentials(pg, np.asarray(s.q, float), np.asarray(s.p, float), t_values)
        scale = max(np.abs(dL).max(initial=0.0), np.abs(dI).max(initial=0.0), 1e-300)
        rl.append(numerical_rank(dL, rtol) if np.abs(dL).max(initial=0.0) > rtol * scale else 0)
        ri.append(numerical_rank(dI, rtol))
    return max(rl), max(ri)


def random_phase_samples(ks: KahlerStructure, rng, count: int) -> list:
    m = ks.chart.real_dim
    return [PhaseState(q, generic_momentum(rng, m)) for q in ks.chart.sample(rng, count)]


# -- J-planar curves ----------------------------------------------------------------------
@dataclass
class CurveSpec:
    x0: np.ndarray
    v0: np.ndarray
    alpha: Callable = field(default=lambda s: 0.0)
    beta: Callable = field(default=lambda s: 0.0)


@dataclass
class Curve:
    s: np.ndarray
    x: np.ndarray
    v: np.ndarray
    acc: np.ndarray
    truncated: bool = False


def _gam_J(ks: KahlerStructure, x):
    X = ty.variables(x, 1)
    g = ks.metric(X)
    J = ks._J_series(ty.variables(x, 0), ks.metric(ty.variables(x, 0))).value
    return christoffel(g).value, J, g.value


def jplanar_rhs(ks: KahlerStructure, spec: CurveSpec, s, x, v):
    Gam, J, _ = _gam_J(ks, x)
    a = -np.einsum("abc,a,b->c", Gam, v, v) + spec.alpha(s) * v + spec.beta(s) * (v @ J)
    return a


def jplanar_flow(ks: KahlerStructure, spec: CurveSpec, T: float, dt: float) -> Curve:
    """Integrate nabla_c' c' = alpha c' + beta J c' with RK4."""
    m = ks.chart.real_dim
    steps = int(round(T / dt))

    def f(s, y):
        return np.concatenate([y[m:], jplanar_rhs(ks, spec, s, y[:m], y[m:])])

    ys = [np.concatenate([np.asarray(spec.x0, float), np.asarray(spec.v0, float)])]
    truncated = False
    for i in range(steps):
        s, y, h = i * dt, ys[-1], dt
        k1 = f(s, y)
        k2 = f(s + h / 2, y + h / 2 * k1)
        k3 = f(s + h / 2, y + h / 2 * k2)
        k4 = f(s + h, y + h * k3)
        yn = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not ks.chart.contains(yn[:m]):
            truncated = True
            break
        ys.append(yn)
    ys = np.array(ys)
    ss = dt * np.arange(len(ys))
    acc = np.array([jplanar_rhs(ks, spec, s, y[:m], y[m:]) for s, y in zip(ss, ys)])
    return Curve(ss, ys[:, :m], ys[:, m:], acc, truncated)


def jplanarity_residual_at(ks: KahlerStructure, x, v, a) -> float:
    """Size of nabla_v v off span{v, Jv}, relative to g(v, v)."""
    Gam, J, g = _gam_J(ks, x)
    w = np.asarray(a, float) + np.einsum("abc,a,b->c", Gam, v, v)
    Jv = v @ J
    Bm = np.stack([v, Jv], axis=1)
    G = Bm.T @ g @ Bm
    coef = np.linalg.solve(G, Bm.T @ g @ w)
    r = w - Bm @ coef
    return float(np.sqrt(max(r @ g @ r, 0.0)) / (v @ g @ v))


def curve_residual(ks: KahlerStructure, curve: Curve, stride: int = 1, finite_difference: bool = True) -> float:
    """J-planarity residual along a sampled curve.

    With ``finite_difference`` the acceleration is recomputed from the
    positions with 5-point stencils, so the check does not reuse the ODE.
    """
    h = curve.s[1] - curve.s[0] if len(curve.s) > 1 else 1.0
    worst = 0.0
    idx = range(2, len(curve.s) - 2, stride) if finite_difference else range(0, len(curve.s), stride)
    X = curve.x
    for i in idx:
        if finite_difference:
            v = (-X[i + 2] + 8 * X[i + 1] - 8 * X[i - 1] + X[i - 2]) / (12 * h)
            a = (-X[i + 2] + 16 * X[i + 1] - 30 * X[i] + 16 * X[i - 1] - X[i - 2]) / (12 * h * h)
        else:
            v, a = curve.v[i], curve.acc[i]
        worst = max(worst, jplanarity_residual_at(ks, X[i], v, a))
    return worst


# -- projective action on the affine chart ------------------------------------------------
def _to_complex(x):
    return x[0::2] + 1j * x[1::2]


def _to_real(z):
    out = np.empty(2 * len(z))
    out[0::2], out[1::2] = z.real, z.imag
    return out


def fractional_linear(M: np.ndarray, x: np.ndarray):
    """Image of the chart point x (coordinates x1, y1, x2, y2, ...) under [1:z] -> M[1:z]."""
    z = _to_complex(np.asarray(x, float))
    w = M @ np.concatenate([[1.0], z])
    if abs(w[0]) < 1e-12:
        raise GeometryError("image leaves the affine chart")
    return _to_real(w[1:] / w[0])


def _push_jet(M, x, v, a):
    """Image position, velocity and acceleration of the curve x + v s + a s^2/2."""
    z, zv, za = _to_complex(x), _to_complex(v), _to_complex(a)
    W = M @ np.concatenate([[1.0], z])
    Wv = M[:, 1:] @ zv
    Wa = M[:, 1:] @ za
    w0, w = W[0], W[1:]
    u = w / w0
    du = (Wv[1:] - u * Wv[0]) / w0
    # differentiate du = (w' - u w0') / w0 once more
    d2u = (Wa[1:] - 2 * du * Wv[0] - u * Wa[0]) / w0
    return _to_real(u), _to_real(du), _to_real(d2u)


def random_group_element(rng, n: int, kind: str = "general", size: float = 0.3) -> np.ndarray:
    N = n + 1
    X = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
    if kind == "unitary":
        Hm = (X + X.conj().T) / 2
        return scipy.linalg.expm(1j * size * Hm)
    if kind == "general":
        return np.eye(N) + size * X / np.sqrt(N)
    raise ValueError(f"unknown kind {kind!r}")


def psl_action_check(ks: KahlerStructure, M: np.ndarray, curve: Curve, stride: int = 10) -> dict:
    """J-planarity of the image of a curve under a fractional-linear map, and length distortion."""
    M = np.asarray(M, complex)
    if abs(np.linalg.det(M)) < 1e-12:
        raise GeometryError("group element is singular")
    before = after = length_dev = 0.0
    kept = 0
    truncated = False
    for i in range(0, len(curve.s), stride):
        x, v, a = curve.x[i], curve.v[i], curve.acc[i]
        try:
            y, w, b = _push_jet(M, x, v, a)
        except GeometryError:
            truncated = True
            break
        if not ks.chart.contains(y):
            truncated = True
            break
        kept += 1
        before = max(before, jplanarity_residual_at(ks, x, v, a))
        after = max(after, jplanarity_residual_at(ks, y, w, b))
        g0 = ks.metric(ty.variables(x, 0)).value
        g1 = ks.metric(ty.variables(y, 0)).value
        length_dev = max(length_dev, abs(np.sqrt(w @ g1 @ w) - np.sqrt(v @ g0 @ v)) / np.sqrt(v @ g0 @ v))
    return {"before": before, "after": after, "length_deviation": length_dev, "points": kept, "truncated": truncated}


# -- totally geodesic orbits --------------------------------------------------------------
def orbit_geodesy_check(
    ks: KahlerStructure, fixed_coords: Sequence[int], starts: Sequence[PhaseState], T: float = 5.0, dt: float = 1e-2
) -> dict:
    """Geodesics launched tangent to an orbit should keep ``fixed_coords`` constant."""
    worst = 0.0
    for s in starts:
        tr = geodesic_flow(ks, s, T, dt)
        if fixed_coords:
            worst = max(worst, float(np.abs(tr.q[:, list(fixed_coords)] - tr.q[0, list(fixed_coords)]).max()))
    return {"max_drift": worst, "trajectories": len(starts)}


def drift_order(drifts: Sequence[float], ratio: float = 2.0) -> list:
    """Observed orders log(d_k / d_{k+1}) / log(ratio) for successive step halvings."""
    return [math.log(a / b) / math.log(ratio) for a, b in zip(drifts[:-1], drifts[1:]) if a > 0 and b > 0]
