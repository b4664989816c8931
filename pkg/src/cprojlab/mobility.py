"""Metrisability and mobility operators, pencil Killing objects and the prolongation connection.

Densities are trivialized by the volume of ``g`` throughout, so a solution of
the metrisability equation is an ordinary symmetric J-invariant tensor
``eta^{ab}`` and the solution attached to ``g`` itself is ``g^{-1}``.  A
mobility solution ``A`` is stored as ``A[a, b] = A_a^b``; its contravariant
form is ``A^{bc} = g^{ba} A_a^c``.

Traces: ``lambda = -A_a^a / 2`` uses the real trace, which equals minus the
complex trace.  The pencil potentials ``sigma_k`` are the elementary symmetric
functions of the complex eigenvalues (each real eigenvalue of A appears twice).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import taylor as ty
from .kahler import Geometry, KahlerStructure, project_type
from .taylor import Taylor
from .tensorcore import GeometryError, symmetrize

es = ty.einsum


def _series(f, x):
    out = f(x) if callable(f) else f
    return out if isinstance(out, Taylor) else ty.constant(np.asarray(out, float), x[0].b)


def _max(a) -> float:
    a = a.value if isinstance(a, Taylor) else np.asarray(a)
    return float(np.max(np.abs(a), initial=0.0))


def geometry(ks: KahlerStructure, p, order: int = 3) -> Geometry:
    return ks.geometry(p, order)


# -- solutions -------------------------------------------------------------------------
@dataclass(frozen=True)
class MobilitySolution:
    """A g-Hermitian endomorphism field; Lambda and lambda are derived from it."""

    A: Callable
    label: str = ""

    @classmethod
    def constant(cls, M, label: str = "constant") -> "MobilitySolution":
        M = np.asarray(M, float)
        return cls(lambda x: ty.constant(M, x[0].b), label)

    @classmethod
    def identity(cls, m: int) -> "MobilitySolution":
        return cls.constant(np.eye(m), "identity")


class SolutionAt:
    """Series of A, lambda, Lambda and their derivatives at one point."""

    def __init__(self, geo: Geometry, sol: MobilitySolution):
        self.geo = geo
        self.sol = sol

    @cached_property
    def A(self) -> Taylor:
        return _series(self.sol.A, self.geo.x)

    @cached_property
    def A_up(self) -> Taylor:
        return es("ba,ac->bc", self.geo.ginv, self.A)

    @cached_property
    def A_low(self) -> Taylor:
        """A_{ab} = g_{bc} A_a^c."""
        return es("ac,cb->ab", self.A, self.geo.g)

    @cached_property
    def lam(self) -> Taylor:
        return ty.trace(self.A) * -0.5

    @cached_property
    def dlam(self) -> Taylor:
        return ty.grad(self.lam)

    @cached_property
    def Lam(self) -> Taylor:
        return es("ab,b->a", self.geo.ginv, self.dlam)

    @cached_property
    def JLam(self) -> Taylor:
        return es("eg,e->g", self.geo.J, self.Lam)

    @cached_property
    def nablaA(self) -> Taylor:
        return self.geo.cov(self.A_up, "uu")

    @cached_property
    def nablaLam(self) -> Taylor:
        """[a, b] = nabla_a Lambda^b."""
        return self.geo.cov(self.Lam, "u")

    @cached_property
    def hess_lam(self) -> Taylor:
        """[a, b] = nabla_a nabla_b lambda."""
        return self.geo.cov(self.dlam, "d")


def _geo_sol(ks, sol, p, order):
    geo = ks.geometry(p, order)
    return geo, SolutionAt(geo, sol)


def mobility_terms(S: SolutionAt):
    """nabla_a A^{bc} + delta_a^(b Lambda^c) + J_a^(b J_e^c) Lambda^e as a series."""
    geo = S.geo
    d = geo.delta
    t = es("ab,c->abc", d, S.Lam) + es("ab,c->abc", geo.J, S.JLam)
    return S.nablaA + symmetrize(t, (1, 2))


def mobility_residual(ks: KahlerStructure, sol: MobilitySolution, p) -> float:
    geo, S = _geo_sol(ks, sol, p, 1)
    return _max(mobility_terms(S))


def metrisability_terms(geo: Geometry, eta):
    """Residual series of the metrisability equation and the inferred X."""
    E = _series(eta, geo.x)
    dE = geo.cov(E, "uu")
    X = es("aac->c", dE) * (-1.0 / geo.n)
    JX = es("eg,e->g", geo.J, X)
    t = es("ab,c->abc", geo.delta, X) + es("ab,c->abc", geo.J, JX)
    return dE + symmetrize(t, (1, 2)), X


def metrisability_residual(ks: KahlerStructure, eta, p):
    """(max residual, X) for a volume-trivialized contravariant 2-tensor ``eta``."""
    geo = ks.geometry(p, 1)
    res, X = metrisability_terms(geo, eta)
    return _max(res), X.value


# -- metric pairs ----------------------------------------------------------------------
def solution_from_metric_pair(ks: KahlerStructure, metric_tilde: Callable) -> MobilitySolution:
    """A^{ab} = (vol(g~)/vol(g))^{1/(n+1)} g~^{ab}, with an index lowered by g."""
    n = ks.n

    def A(x):
        g = ks.metric(x)
        gt = _series(metric_tilde, x)
        ratio = ty.sqrt(ty.det(gt)) / ty.sqrt(ty.det(g))
        Aup = ty.inv(gt) * ty.power(ratio, 1.0 / (n + 1))
        return es("ab,bc->ac", g, Aup)

    return MobilitySolution(A, "metric pair")


@dataclass(frozen=True)
class EquivalenceReport:
    solution: MobilitySolution
    max_residual: float
    equivalent: bool
    diagnosis: str


def cproj_equivalence(ks, metric_tilde, samples, tol: float = 1e-8) -> EquivalenceReport:
    sol = solution_from_metric_pair(ks, metric_tilde)
    worst = max(mobility_residual(ks, sol, p) for p in samples)
    ok = worst <= tol
    diag = "c-projectively equivalent" if ok else f"not c-projectively equivalent (mobility residual {worst:.3e})"
    return EquivalenceReport(sol, worst, ok, diag)


# -- pencil objects ---------------------------------------------------------------------
def complex_elementary(A, n: int) -> list:
    """e_0..e_n of the complex eigenvalues of a J-commuting endomorphism.

    Newton identities with complex power sums p_k = tr_R(A^k) / 2.
    """
    is_series = isinstance(A, Taylor)
    powers = []
    P = A
    for k in range(1, n + 1):
        powers.append((ty.trace(P) if is_series else np.trace(P)) * 0.5)
        if k < n:
            P = es("ab,bc->ac", P, A) if is_series else P @ A
    e = [1.0]
    for k in range(1, n + 1):
        acc = 0.0
        for i in range(1, k + 1):
            acc = acc + e[k - i] * powers[i - 1] * ((-1.0) ** (i - 1))
        e.append(acc * (1.0 / k))
    return e


def det_pencil(e: Sequence, t: float):
    """det_C(A - t Id) from the complex elementary functions of A."""
    n = len(e) - 1
    acc = 0.0
    for k in range(n + 1):
        acc = acc + e[k] * ((-t) ** (n - k))
    return acc


def adjugate_complex(B, n: int):
    """adj_C(B) = sum_j (-1)^j e_{n-1-j}(B) B^j (Cayley-Hamilton)."""
    is_series = isinstance(B, Taylor)
    m = B.shape[0]
    e = complex_elementary(B, n)
    I = np.eye(m)
    acc = None
    P = None
    for j in range(n):
        if j == 0:
            P = ty.constant(I, B.b) if is_series else I
        else:
            P = es("ab,bc->ac", P, B) if is_series else P @ B
        term = P * e[n - 1 - j] * ((-1.0) ** j)
        acc = term if acc is None else acc + term
    return acc


@dataclass(frozen=True)
class PencilData:
    sigma: np.ndarray
    Lam_k: np.ndarray
    recursion_residual: float
    printed_recursion_residual: float


def pencil_potentials(ks: KahlerStructure, sol: MobilitySolution, p) -> PencilData:
    """sigma_k and the fields Lambda_(k) = -grad sigma_k, with recursion residuals.

    The residual of ``Lambda_(k+1) = sigma_k Lambda - A Lambda_(k)`` is
    returned together with the residual of the variant
    ``Lambda_(k+1) = A Lambda_(k) + sigma_1 Lambda``.
    """
    geo, S = _geo_sol(ks, sol, p, 1)
    n = geo.n
    e = complex_elementary(S.A, n)
    sig = np.array([float(x.value) if isinstance(x, Taylor) else float(x) for x in e[1:]])
    Lk = []
    for k in range(1, n + 1):
        ek = e[k]
        if not isinstance(ek, Taylor):
            Lk.append(np.zeros(geo.m))
            continue
        Lk.append(-(es("ab,b->a", geo.ginv, ty.grad(ek))).value)
    Lk = np.array(Lk)
    A = S.A.value
    Lam = S.Lam.value
    rec = printed = 0.0
    for k in range(n - 1):
        AL = Lk[k] @ A
        rec = max(rec, float(np.abs(Lk[k + 1] - (sig[k] * Lam - AL)).max()))
        printed = max(printed, float(np.abs(Lk[k + 1] - (AL + sig[0] * Lam)).max()))
    return PencilData(sig, Lk, rec, printed)


def killing_field_series(geo: Geometry, S: SolutionAt, t: float) -> Taylor:
    """K~(t)^b = Omega^{ab} nabla_a det A(t) = J_c^b g^{ca} d_a det A(t)."""
    f = det_pencil(complex_elementary(S.A, geo.n), t)
    grad = es("ab,b->a", geo.ginv, ty.grad(f))
    return es("cb,c->b", geo.J, grad)


def killing_tensor_series(geo: Geometry, S: SolutionAt, t: float) -> Taylor:
    """H~(t)_{ba} = adj_C(A - t)_b^c g_{ca}."""
    B = S.A - np.eye(geo.m) * t
    return es("bc,ca->ba", adjugate_complex(B, geo.n), geo.g)


def canonical_killing_fields(ks, sol, t_samples, p) -> list:
    geo, S = _geo_sol(ks, sol, p, 1)
    return [killing_field_series(geo, S, t).value for t in t_samples]


def canonical_killing_tensors(ks, sol, t_samples, p) -> list:
    geo, S = _geo_sol(ks, sol, p, 0)
    return [killing_tensor_series(geo, S, t).value for t in t_samples]


def holomorphic_killing_terms(geo: Geometry, X: Taylor):
    """(Killing residual, J-commutation residual) of a vector series."""
    N = geo.cov(X, "u")  # [a, c] = nabla_a X^c
    N_low = es("ae,ec->ac", N, geo.g)
    kill = N_low + N_low.transpose(1, 0)
    J = geo.J
    comm = es("ae,ec->ac", N, J) - es("ae,ec->ac", J, N)
    return kill, comm


def holomorphic_killing_residual(ks: KahlerStructure, X, p) -> float:
    geo = ks.geometry(p, 2)
    kill, comm = holomorphic_killing_terms(geo, _series(X, geo.x))
    return max(_max(kill), _max(comm))


def killing_tensor_terms(geo: Geometry, H: Taylor):
    dH = geo.cov(H, "dd")
    kill = symmetrize(dH, (0, 1, 2))
    JH = es("ad,dc->ac", geo.J, H)
    herm = symmetrize(JH, (0, 1))
    return kill, herm


def killing_tensor_residual(ks: KahlerStructure, H, p) -> float:
    geo = ks.geometry(p, 1)
    kill, herm = killing_tensor_terms(geo, _series(H, geo.x))
    return max(_max(kill), _max(herm))


def lie_derivative_2form(X: Taylor, H: Taylor) -> Taylor:
    """(L_X H)_{ab} for a covariant 2-tensor, coordinate formula."""
    dX = ty.grad(X)  # [a, c] = d_a X^c
    dH = ty.grad(H)
    return es("c,cab->ab", X, dH) + es("cb,ac->ab", H, dX) + es("ac,bc->ab", H, dX)


def killing_potential_terms(geo: Geometry, f: Taylor):
    hess = geo.cov(ty.grad(f), "d")
    return project_type(hess.value, "aa", geo.J.value)


def killing_potential_check(ks: KahlerStructure, f, p) -> float:
    geo = ks.geometry(p, 2)
    return _max(killing_potential_terms(geo, _series(f, geo.x)))


def cproj_hessian(ks: KahlerStructure, h, p):
    """(2,0) and (0,2) parts of the c-projective Hessian of h * tau_g."""
    geo = ks.geometry(p, 2)
    f = _series(h, geo.x)
    T = geo.cov(ty.grad(f), "d").value + geo.P.value * f.value
    T = 0.5 * (T + T.T)
    J = geo.J.value
    D = T - 0.5 * (J @ T @ J.T + (J @ T @ J.T).T)
    return _max(project_type(D, "aa", J)), _max(project_type(D, "bb", J))


def commute_check(ks: KahlerStructure, sol: MobilitySolution, p) -> float:
    geo, S = _geo_sol(ks, sol, p, 2)
    A, N = S.A.value, S.nablaLam.value
    return float(np.abs(A @ N - N @ A).max())


def eigenvalue_gradient_check(ks: KahlerStructure, sol: MobilitySolution, mu: Callable, p) -> float:
    """Residual of A_a^b d_b mu = mu d_a mu for an eigenvalue function ``mu`` of the coordinates."""
    geo, S = _geo_sol(ks, sol, p, 1)
    m = _series(mu, geo.x)
    dm = ty.grad(m).value
    return float(np.abs(S.A.value @ dm - m.value * dm).max())


def holomorphic_gradient_check(ks, sol, p) -> float:
    """The barred derivative of Lambda: nabla Lambda must commute with J."""
    geo, S = _geo_sol(ks, sol, p, 2)
    N, J = S.nablaLam.value, geo.J.value
    return float(np.abs(N @ J - J @ N).max())


def cproj_vector_field_residual(ks: KahlerStructure, X, p, h_sign: float = 1.0):
    """Residuals of the two equations characterizing c-projective vector fields.

    (1) the (0,1)-derivative of the (1,0)-part of X, (2) the trace-free part of
    ``nabla_(b nabla_d) X^c + P_(bd) X^c + h_sign * H_{ab}^c_d Xbar^a`` on
    unbarred b, d, c.  ``h_sign = -1`` flips the curvature term, which only
    serves as a negative control.  The W term of higher dimensions is absent:
    its all-unbarred curvature vanishes for a Kähler Levi-Civita connection.
    """
    geo = ks.geometry(p, 3)
    Xs = _series(X, geo.x)
    J = geo.J.value
    N = geo.cov(Xs, "u")
    r1 = _max(project_type(N.value, "ba", J, "du"))
    NN = geo.cov(N, "du").value  # [b, d, c]
    T = 0.5 * (NN + NN.transpose(1, 0, 2))
    P = geo.P.value
    Psym = 0.5 * (P + P.T)
    T = T + np.einsum("bd,c->bdc", Psym, Xs.value)
    H = geo.H.value  # [a, b, c, d]
    Xbar = project_type(Xs.value, "b", J, "u")
    HX = np.einsum("abcd,a->bdc", project_type(H, "baaa", J, "ddud"), Xbar)
    T = project_type(T, "aaa", J, "ddu") + h_sign * project_type(HX, "aaa", J, "ddu")
    n = geo.n
    tr = np.einsum("bdb->d", T)
    Pi = project_type(np.eye(geo.m), "aa", J, "du")
    T0 = T - (np.einsum("bc,d->bdc", Pi, tr) + np.einsum("dc,b->bdc", Pi, tr)) / (n + 1)
    return r1, _max(T0)


def generalized_einstein_check(ks: KahlerStructure, samples, tol: float = 1e-6):
    """(passes, k) for Ric = k g with k constant across samples."""
    ks_vals, worst = [], 0.0
    for p in samples:
        geo = ks.geometry(p, 2)
        g, Ric = geo.g.value, geo.Ric.value
        k = float(geo.Scal.value) / geo.m
        ks_vals.append(k)
        worst = max(worst, float(np.abs(Ric - k * g).max()))
    spread = max(ks_vals) - min(ks_vals)
    return bool(worst < tol and spread < tol), float(np.mean(ks_vals))


# -- the prolongation connection -------------------------------------------------------
@dataclass(frozen=True)
class VSection:
    """Real section (eta^{ab}, X^a, rho) of the metrisability prolongation bundle."""

    eta: np.ndarray
    X: np.ndarray
    rho: float

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.eta).ravel(), self.X, [self.rho]])

    @classmethod
    def from_vector(cls, v, m: int) -> "VSection":
        v = np.asarray(v)
        return cls(v[: m * m].reshape(m, m), v[m * m : m * m + m], float(v[-1]))


def connection_form(geo: Geometry) -> Taylor:
    """omega[g, i, j] with nabla_g s = d_g s + omega_g s on vectors (eta, X, rho).

    Needs geometry order k to return a series of degree k - 3.
    """
    m, n = geo.m, geo.n
    N = m * m + m + 1
    d = geo.delta
    K = geo.order - 3
    if K < 0:
        raise GeometryError("prolongation connection needs geometry order >= 3")
    Gam = geo.Gam.truncate(K)
    J = geo.J.truncate(K)
    P = geo.P.truncate(K)
    H = geo.H.truncate(K)
    C = geo.C.truncate(K)
    b = Gam.b
    # eta -> eta block: Gam_{g e}^a delta^b_f + delta^a_f Gam_{g e}^b  (indices [g, (a b), (e f)])
    EE = es("gea,bf->gabef", Gam, d) + es("ae,gfb->gabef", d, Gam)
    # X -> eta block: sym(delta_g^a delta^b_e + J_g^a J_e^b)
    XE = np.einsum("ga,be->gabe", d, d)
    XE = XE + es("ga,eb->gabe", J, J)
    XE = (XE + XE.transpose(0, 2, 1, 3)) * 0.5
    # X -> X
    XX = Gam.transpose(0, 2, 1)  # [g, a, e] = Gam_{g e}^a
    # eta -> X: -P_{g e} delta^a_f + (1/n) H_{g e}^a_f
    EX = es("ge,af->gaef", P, d) * -1.0 + H.transpose(0, 2, 1, 3) * (1.0 / n)
    # rho -> X: delta_g^a
    RX = ty.constant(d, b)
    # X -> rho: -P_{g e}
    XR = P * -1.0
    # eta -> rho: -(1/n) C_{g e f}
    ER = C * (-1.0 / n)

    zeros = np.zeros((m, N, N) + (b.M,))
    om = zeros
    ie = slice(0, m * m)
    ix = slice(m * m, m * m + m)
    ir = m * m + m
    om[:, ie, ie] = EE.c.reshape(m, m * m, m * m, b.M)
    om[:, ie, ix] = _const_c(XE, b).reshape(m, m * m, m, b.M)
    om[:, ix, ix] = XX.c
    om[:, ix, ie] = EX.c.reshape(m, m, m * m, b.M)
    om[:, ix, ir] = _const_c(RX, b)
    om[:, ir, ix] = XR.c
    om[:, ir, ie] = ER.c.reshape(m, m * m, b.M)
    return Taylor(om, b)


def _const_c(t, b):
    if isinstance(t, Taylor):
        return t.truncate(b.K).c
    return ty.constant(np.asarray(t), b).c


def connection_curvature(geo: Geometry) -> np.ndarray:
    """F[g, h] = d_g omega_h - d_h omega_g + [omega_g, omega_h] at the point."""
    om = connection_form(geo)
    dom = ty.grad(om).value  # [g, h, i, j] = d_g omega_h
    o = om.value
    F = dom - dom.transpose(1, 0, 2, 3)
    F = F + np.einsum("gij,hjk->ghik", o, o) - np.einsum("hij,gjk->ghik", o, o)
    return F


def invariant_subspace(J: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the real sections with J-invariant symmetric eta."""
    m = len(J)
    N = m * m + m + 1
    cons = []
    for i in range(m):
        for j in range(m):
            row = np.zeros(N)
            row[i * m + j] += 1.0
            row[j * m + i] -= 1.0
            cons.append(row)
    # J-invariance of eta^{ab}: (J^T eta J - eta)[i, j] = 0
    for i in range(m):
        for j in range(m):
            row = np.zeros(N)
            row[: m * m] = np.outer(J[:, i], J[:, j]).ravel()
            row[i * m + j] -= 1.0
            cons.append(row)
    C = np.array(cons)
    _, s, vt = np.linalg.svd(C)
    rank = int(np.sum(s > 1e-10 * s.max()))
    return vt[rank:].T


def lift_solution(geo: Geometry, S: SolutionAt) -> VSection:
    """L(eta) for eta = A^{ab}: X = Lambda, rho = (P_{ab} A^{ab} - nabla_a Lambda^a) / (2n)."""
    n = geo.n
    rho = (float(np.einsum("ab,ab->", geo.P.value, S.A_up.value)) - float(np.trace(S.nablaLam.value))) / (2 * n)
    return VSection(S.A_up.value, S.Lam.value, rho)


def lift_eta(geo: Geometry, eta) -> VSection:
    """L(eta) for a general volume-trivialized solution via divergences."""
    n = geo.n
    E = _series(eta, geo.x)
    dE = geo.cov(E, "uu")
    div = es("aac->c", dE)
    X = div * (-1.0 / n)
    ddiv = geo.cov(div, "u")
    rho = (float(np.trace(ddiv.value)) + n * float(np.einsum("ab,ab->", geo.P.value, E.value))) / (2 * n * n)
    return VSection(E.value, X.value, rho)


def _kernel_dim(F: np.ndarray, basis: np.ndarray, tol: float) -> tuple:
    m = F.shape[0]
    blocks = [F[g, h] @ basis for g in range(m) for h in range(g + 1, m)]
    M = np.vstack(blocks)
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s <= tol)), s


def mobility_upper_bound(ks: KahlerStructure, samples, tol: float = 1e-7, return_details: bool = False):
    """Smallest dimension over samples of the kernel of the prolongation curvature on real V.

    Any solution lifts to a parallel section, which lies in every such kernel,
    so the result bounds the mobility from above.
    """
    samples = list(samples)
    if len(samples) < 20:
        raise GeometryError("mobility_upper_bound needs at least 20 samples")
    dims = []
    for p in samples:
        geo = ks.geometry(p, 4)
        F = connection_curvature(geo)
        B = invariant_subspace(geo.J.value)
        scale = max(1.0, float(np.abs(geo.R.value).max()))
        k, _ = _kernel_dim(F, B, tol * scale)
        dims.append(k)
    bound = min(dims)
    return (bound, dims) if return_details else bound


def curvature_on_section(ks: KahlerStructure, p, section: VSection) -> float:
    geo = ks.geometry(p, 4)
    F = connection_curvature(geo)
    v = section.to_vector()
    return float(np.abs(np.einsum("ghij,j->ghi", F, v)).max())


def _omega_at(ks: KahlerStructure, q) -> np.ndarray:
    return connection_form(ks.geometry(q, 3)).value


def prolongation_transport(ks: KahlerStructure, start: VSection, path, steps: int = 32) -> VSection:
    """Parallel transport of ``start`` along the polygon ``path`` by classical RK4."""
    if steps < 16:
        raise GeometryError("at least 16 steps per segment are required")
    path = [np.asarray(q, float) for q in path]
    for q in path:
        if not ks.chart.contains(q):
            raise GeometryError(f"path vertex {q} leaves the chart")
    m = ks.chart.real_dim
    v = start.to_vector().astype(float)
    for a, b in zip(path, path[1:]):
        vel = (b - a)
        h = 1.0 / steps

        def rhs(s, y):
            om = _omega_at(ks, a + s * vel)
            return -np.einsum("g,gij,j->i", vel, om, y)

        s = 0.0
        for _ in range(steps):
            k1 = rhs(s, v)
            k2 = rhs(s + h / 2, v + h / 2 * k1)
            k3 = rhs(s + h / 2, v + h / 2 * k2)
            k4 = rhs(s + h, v + h * k3)
            v = v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            s += h
    return VSection.from_vector(v, m)


def square_loop(center, radius: float, i: int = 0, j: int = 1) -> list:
    """Closed square loop in the (x_i, x_j) coordinate plane."""
    c = np.asarray(center, float)
    out = []
    for di, dj in [(-1, -1), (1, -1), (1, 1), (-1, 1), (-1, -1)]:
        q = c.copy()
        q[i] += di * radius
        q[j] += dj * radius
        out.append(q)
    return out


def is_regular(values: Sequence[float], gradients: Sequence[np.ndarray], sep: float = 1e-4, grad_tol: float = 1e-6) -> bool:
    """Regular point predicate for the pencil: distinct eigenvalues with nonzero differentials."""
    vals = list(values)
    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            if abs(vals[i] - vals[j]) < sep:
                return False
    return all(np.linalg.norm(g) >= grad_tol for g in gradients)
