"""Nullity of the curvature, the special tractor system and the Tanno equation.

``B`` is always measured against the model tensor ``S`` of
:func:`cprojlab.kahler.fs_model`, so CP^n with its standard metric has
``B = 1`` and ``P = 2 B g`` on the nullity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import taylor as ty
from .kahler import KahlerStructure, fs_model, project_type, projectors
from .metrics import PencilGeometry
from .mobility import MobilitySolution, SolutionAt, _max, _series, mobility_terms
from .taylor import Taylor
from .tensorcore import GeometryError

es = ty.einsum

KERNEL_RTOL = 1e-7


class NullityError(GeometryError):
    """Two different values of B both produce a nullity space."""


def _val(t):
    return t.value if isinstance(t, Taylor) else np.asarray(t, float)


def g_tensor(R_low, g, Om, B: float):
    """G = R - B S, all indices down."""
    return R_low - fs_model(g, Om) * B


@dataclass
class NullityResult:
    B: float | None
    nullity_basis: list = field(default_factory=list)
    residual: float = 0.0
    candidates: tuple = ()

    @property
    def dim(self) -> int:
        return len(self.nullity_basis)

    def contains(self, v, tol: float = 1e-6) -> bool:
        v = np.asarray(v, float)
        if not self.nullity_basis:
            return False
        Q = np.array(self.nullity_basis).T
        coef, *_ = np.linalg.lstsq(Q, v, rcond=None)
        return float(np.linalg.norm(Q @ coef - v)) <= tol * max(np.linalg.norm(v), 1e-300)


def _operator(G: np.ndarray) -> np.ndarray:
    m = G.shape[0]
    return G.reshape(m**3, m)


def _rho_eigenvalues(P: np.ndarray, g: np.ndarray, tol: float = 1e-8) -> list:
    w = scipy.linalg.eigh((P + P.T) / 2, g, eigvals_only=True)
    out: list = []
    for x in np.sort(w):
        if not out or abs(x - out[-1]) > tol * max(1.0, abs(x)):
            out.append(float(x))
    return out


def nullity_at(R_low, g, Om, P, rtol: float = KERNEL_RTOL) -> NullityResult:
    R_low, g, Om, P = (_val(t) for t in (R_low, g, Om, P))
    # when G or R vanish their singular values are pure noise; the model tensor S gives a floor
    scale_R = max(np.linalg.norm(_operator(R_low), 2), np.linalg.norm(_operator(fs_model(g, Om)), 2))
    found = []
    cands = tuple(b / 2 for b in _rho_eigenvalues(P, g))
    for B in cands:
        G = g_tensor(R_low, g, Om, B)
        _, s, Vt = np.linalg.svd(_operator(G))
        scale = max(s[0], scale_R, 1e-300)
        null = s < rtol * scale
        if null.any():
            found.append((B, [Vt[i] for i in np.nonzero(null)[0]], float(s[null].max() / scale)))
    if not found:
        return NullityResult(None, [], 0.0, cands)
    if len(found) > 1:
        raise NullityError(f"several values of B have nullity: {[f[0] for f in found]}")
    B, basis, res = found[0]
    return NullityResult(B, basis, res, cands)


def detect_nullity(ks: KahlerStructure, p, rtol: float = KERNEL_RTOL) -> NullityResult:
    geo = ks.geometry(p, 2)
    return nullity_at(geo.R_low.value, geo.g.value, geo.Om.value, geo.P.value, rtol)


def nullity_criteria_crosscheck(ks: KahlerStructure, v, p, tol: float = 1e-7) -> dict:
    """Test v against the harmonic-curvature characterisations of nullity.

    ``mixed``: H_{ab'}^c_d v^d = (2B g_{ab'} - P_{ab'}) v^c for a fitted B.
    ``H``: H_{ab'}^c_d v^a v^d = 0 and H_{ab'}^c_d v^{b'} = 0.
    """
    geo = ks.geometry(p, 2)
    H, g, P, J = geo.H.value, geo.g.value, geo.P.value, geo.J.value
    v = np.asarray(v, float)
    scale = max(np.abs(H).max(), np.abs(P).max(), 1e-300) * max(np.linalg.norm(v), 1e-300)

    lhs = project_type(np.einsum("abcd,d->abc", H, v), "aba", J, "ddu")
    X = project_type(np.einsum("ab,c->abc", g, v), "aba", J, "ddu")
    Y = project_type(np.einsum("ab,c->abc", P, v), "aba", J, "ddu")
    # least-squares B for lhs = 2B X - Y
    B = float(np.real(np.vdot(X, lhs + Y)) / (2 * max(np.real(np.vdot(X, X)), 1e-300)))
    mixed = float(np.abs(lhs - 2 * B * X + Y).max()) / scale

    _, Pu = projectors(J)
    v10 = Pu @ v
    t1 = project_type(np.einsum("abcd,a,d->bc", H, v10, v10), "ba", J, "du")
    t2 = project_type(np.einsum("abcd,b->acd", H, v10.conj()), "aaa", J, "dud")
    hres = float(max(np.abs(t1).max(), np.abs(t2).max())) / scale

    member = detect_nullity(ks, p).contains(v)
    mixed_ok, h_ok = mixed < tol, hres < tol
    return {
        "member": member,
        "mixed_residual": mixed,
        "mixed_B": B,
        "mixed_pass": mixed_ok,
        "H_residual": hres,
        "H_pass": h_ok,
        "agree": member == mixed_ok == h_ok,
    }


# -- special tractor --------------------------------------------------------------------
@dataclass(frozen=True)
class TractorResidual:
    first: float
    second: float
    third: float

    @property
    def max(self) -> float:
        return max(self.first, self.second, self.third)

    def __iter__(self):
        return iter((self.first, self.second, self.third))


def mu_from_trace(S: SolutionAt, B: float) -> Taylor:
    """The mu making the second line trace-free: 2n mu = 2B tr A - div Lambda."""
    n = S.geo.n
    div = ty.trace(S.nablaLam)
    return (ty.trace(S.A) * (2 * B) - div) * (1.0 / (2 * n))


def tractor_terms(S: SolutionAt, B: float, mu=None):
    geo = S.geo
    mu_s = mu_from_trace(S, B) if mu is None else _series(mu, geo.x)
    nablaLam_low = geo.cov(S.dlam, "d")
    second = nablaLam_low + geo.g * mu_s - S.A_low * (2 * B)
    third = ty.grad(mu_s) - S.dlam * (2 * B)
    return mobility_terms(S), second, third


def special_tractor_residual(ks: KahlerStructure, sol: MobilitySolution, B: float, p, mu=None) -> TractorResidual:
    """Residuals of the three lines of the special tractor system.

    ``mu`` may be a callable of the coordinates; by default it is fixed by
    the trace of the second line, which leaves that line's trace-free part
    and the whole third line as genuine tests.
    """
    geo = ks.geometry(p, 3)
    S = SolutionAt(geo, sol)
    a, b, c = tractor_terms(S, B, mu)
    return TractorResidual(_max(a), _max(b), _max(c))


def rho_from_mu(mu: float, P, A_up, g, B: float, n: int) -> float:
    """rho = mu + (1/2n) (P - 2B g)_{ab} A^{ab} (real contraction)."""
    return mu + float(np.einsum("ab,ab->", _val(P) - 2 * B * _val(g), _val(A_up))) / (2 * n)


# -- Tanno ---------------------------------------------------------------------------------
@dataclass
class TannoData:
    lam: Callable
    B: float
    mu: Callable | None = None

    def Lambda(self, x) -> Taylor:
        return ty.grad(_series(self.lam, x))


def tanno_terms(geo, lam: Taylor, B: float) -> Taylor:
    dl = ty.grad(lam)
    third = geo.cov(geo.cov(dl, "d"), "dd")
    g, Om = geo.g, geo.Om
    JL = es("gd,d->g", geo.J, dl)
    t = (
        es("a,bc->abc", dl, g) * 2.0
        + es("ab,c->abc", g, dl)
        + es("ac,b->abc", g, dl)
        - es("ab,c->abc", Om, JL)
        - es("ac,b->abc", Om, JL)
    )
    return third + t * B


def tanno_residual(ks: KahlerStructure, lam, B: float, p) -> float:
    geo = ks.geometry(p, 3)
    return _max(tanno_terms(geo, _series(lam, geo.x), B))


def tanno_nullity_equivalence(ks: KahlerStructure, lam, B: float, samples, tol: float = 1e-6) -> dict:
    """Compare (G Lambda = 0 and nabla_a Lambda_b = 0) with the Tanno equation."""
    first, tanno = [], []
    for p in samples:
        geo = ks.geometry(p, 3)
        lam_s = _series(lam, geo.x)
        dl = ty.grad(lam_s)
        Lam = es("ab,b->a", geo.ginv, dl).value
        G = g_tensor(geo.R_low.value, geo.g.value, geo.Om.value, B)
        hess = geo.cov(dl, "d").value
        r1 = max(np.abs(np.einsum("abcd,d->abc", G, Lam)).max(), np.abs(project_type(hess, "aa", geo.J.value)).max())
        first.append(float(r1))
        tanno.append(_max(tanno_terms(geo, lam_s, B)))
    p1 = max(first, default=0.0) < tol
    p3 = max(tanno, default=0.0) < tol
    out = {
        "nullity_residual": max(first, default=0.0),
        "tanno_residual": max(tanno, default=0.0),
        "nullity_pass": p1,
        "tanno_pass": p3,
        "one_directional": B == 0,
    }
    # with B = 0 only nullity => Tanno is claimed
    out["agree"] = (not p1 or p3) if B == 0 else p1 == p3
    return out


# -- orthotoric criterion ------------------------------------------------------------------
def leading_B(coeffs: Sequence[float], ell: int) -> float:
    """B read from the coefficient of t^(ell+1) of Theta (highest degree first).

    The sign is the one forced by the curvature: for dxi^2/Theta + Theta dt^2
    the Gaussian curvature is -Theta''/2, so a positive leading coefficient
    gives negative holomorphic sectional curvature.
    """
    c = np.trim_zeros(np.asarray(coeffs, float), "f")
    if len(c) - 1 > ell + 1:
        raise GeometryError(f"Theta has degree {len(c) - 1} > {ell + 1}")
    a = c[-(ell + 2)] if len(c) >= ell + 2 else 0.0
    return -float(a) / 4.0


def theta_nullity_check(pg: PencilGeometry, samples: int = 20, seed: int = 0, tol: float = 1e-10):
    """Return (True, B) when all Theta_j coincide as polynomials of degree <= ell + 1.

    The result is cross-checked against :func:`detect_nullity`; a mismatch
    raises, since it would mean the geometry and the criterion disagree.
    """
    spec = pg.spec
    if spec is None:
        raise GeometryError("theta_nullity_check needs an orthotoric pencil")
    ell = spec.n
    polys = [np.trim_zeros(np.asarray(t, float), "f") for t in spec.theta]
    deg_ok = all(len(q) - 1 <= ell + 1 for q in polys)
    L = max(len(q) for q in polys)
    padded = [np.concatenate([np.zeros(L - len(q)), q]) for q in polys]
    same = all(np.max(np.abs(q - padded[0])) <= tol for q in padded[1:])
    if not (same and deg_ok):
        return False, None
    B = leading_B(padded[0], ell)
    rng = np.random.default_rng(seed)
    for p in pg.ks.chart.sample(rng, samples):
        res = detect_nullity(pg.ks, p)
        if res.B is None or abs(res.B - B) > 1e-6:
            raise GeometryError(f"detect_nullity gives B={res.B} at {p}, Theta predicts {B}")
    return True, B


# -- identities from the special tractor system -------------------------------------------
def g_commutation_check(ks: KahlerStructure, sol: MobilitySolution, B: float, p) -> float:
    """max |G_{ab c}^e A_e^d - G_{ab e}^d A_c^e|."""
    geo = ks.geometry(p, 2)
    A = _series(sol.A, geo.x).value
    G = g_tensor(geo.R_low.value, geo.g.value, geo.Om.value, B)
    Gm = np.einsum("abce,ed->abcd", G, geo.ginv.value)
    lhs = np.einsum("abce,ed->abcd", Gm, A)
    rhs = np.einsum("ce,abed->abcd", A, Gm)
    return float(np.abs(lhs - rhs).max())


def crucial_identity_residual(ks: KahlerStructure, sol: MobilitySolution, B: float, p, mu=None) -> float:
    """(1,1)-part of G_{abc}^d Lambda_d + g_{cb}(nabla_a mu - 2B Lambda_a) for constant B."""
    geo = ks.geometry(p, 3)
    S = SolutionAt(geo, sol)
    mu_s = mu_from_trace(S, B) if mu is None else _series(mu, geo.x)
    G = g_tensor(geo.R_low.value, geo.g.value, geo.Om.value, B)
    dm = ty.grad(mu_s).value - 2 * B * S.dlam.value
    t = np.einsum("abcd,d->abc", G, S.Lam.value) + np.einsum("cb,a->abc", geo.g.value, dm)
    return float(np.abs(project_type(t, "aba", geo.J.value)).max())
