"""Batch driver: ``cprojlab verify``, ``cprojlab flow`` and ``cprojlab report-schema``.

Run configurations are INI files.  ``[geometry]`` selects and parametrizes
the geometry, every ``[task.<name>]`` section adds one task (in file order),
and ``[flow]`` configures the trajectory written by ``flow``.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import click
import numpy as np

from . import __version__
from . import dynamics as dyn
from . import kahler as kh
from . import metrics as mt
from . import mobility as mob
from . import nullity as nul
from . import taylor as ty
from .tensorcore import GeometryError

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_GEOMETRY = 0, 1, 2, 3
# reported when a check cannot produce a residual at all (no nullity, truncated flow, ...)
NO_RESULT = 1.0


class ConfigError(ValueError):
    pass


# -- configuration -------------------------------------------------------------------------
@dataclass
class TaskSpec:
    name: str
    options: dict

    def get(self, key, default=None, cast=str):
        if key not in self.options:
            return default
        try:
            return cast(self.options[key])
        except ValueError as exc:
            raise ConfigError(f"task {self.name}: bad value for {key}: {self.options[key]!r}") from exc


@dataclass
class RunConfig:
    geometry: dict
    tasks: list
    seed: int = 0
    flow: dict = field(default_factory=dict)
    source: str = ""


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"expected numbers, got {text!r}") from exc


def _ranges(text: str) -> list:
    out = []
    for part in text.split(";"):
        v = _floats(part)
        if len(v) != 2:
            raise ConfigError(f"expected 'lo hi' pairs separated by ';', got {text!r}")
        out.append(tuple(v))
    return out


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def load_config(path) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if "geometry" not in cp:
        raise ConfigError("missing [geometry] section")
    geometry = dict(cp["geometry"])
    if "kind" not in geometry:
        raise ConfigError("[geometry] needs kind")
    seed = 0
    if "run" in cp and "seed" in cp["run"]:
        try:
            seed = int(cp["run"]["seed"])
        except ValueError as exc:
            raise ConfigError("seed must be an integer") from exc
    tasks = []
    for sec in cp.sections():
        if sec.startswith("task."):
            name = sec[5:]
            if name not in TASKS:
                raise ConfigError(f"unknown task {name!r}")
            opts = dict(cp[sec])
            if "tolerance" in opts:
                try:
                    tol = float(opts["tolerance"])
                except ValueError as exc:
                    raise ConfigError(f"task {name}: tolerance must be a number") from exc
                if not tol > 0:
                    raise ConfigError(f"task {name}: tolerance must be positive")
            if opts.get("expected", "pass") not in ("pass", "fail"):
                raise ConfigError(f"task {name}: expected must be pass or fail")
            tasks.append(TaskSpec(name, opts))
        elif sec not in ("run", "geometry", "flow"):
            raise ConfigError(f"unknown section [{sec}]")
    flow = dict(cp["flow"]) if "flow" in cp else {}
    return RunConfig(geometry, tasks, seed, flow, str(path))


# -- geometry construction ------------------------------------------------------------------
def _orthotoric_spec(geo: dict) -> mt.OrthotoricSpec:
    preset = geo.get("preset")
    t_range = tuple(_floats(geo["t_range"])) if "t_range" in geo else (-1.0, 1.0)
    if preset == "common":
        return mt.default_orthotoric(True, t_range=t_range)
    if preset == "mismatched":
        return mt.default_orthotoric(False, float(geo.get("perturb", 0.1)), t_range=t_range)
    if preset == "compact":
        return mt.compact_orthotoric(t_range)
    if preset is not None:
        raise ConfigError(f"unknown orthotoric preset {preset!r}")
    n = int(geo.get("n", 2))
    thetas = [tuple(_floats(geo[f"theta_{j + 1}"] if f"theta_{j + 1}" in geo else geo["theta"])) for j in range(n)]
    return mt.OrthotoricSpec(n, tuple(thetas), tuple(_ranges(geo["xi_ranges"])), t_range)


def build_geometry(geo: dict) -> mt.PencilGeometry:
    """Kähler structure plus a mobility solution (identity when none is specified)."""
    kind = geo["kind"]
    try:
        if kind == "flat":
            ks = mt.flat_metric(int(geo.get("n", 2)), float(geo.get("box", 1.0)))
        elif kind == "fubini_study":
            ks = mt.fubini_study(int(geo.get("n", 2)), float(geo.get("box", 1.0)))
        elif kind == "product":
            factors = []
            for item in geo.get("factors", "fubini_study:2 flat:2").split():
                nm, _, dim = item.partition(":")
                if nm not in ("fubini_study", "flat"):
                    raise ConfigError(f"unknown product factor {nm!r}")
                make = mt.fubini_study if nm == "fubini_study" else mt.flat_metric
                factors.append(make(int(dim or 2)))
            weights = _floats(geo["weights"]) if "weights" in geo else None
            ks = mt.product_metric(factors, weights)
            if "a_weights" in geo:
                M = mt.product_A([f.chart.real_dim for f in factors], _floats(geo["a_weights"]))
                return mt.PencilGeometry(ks, lambda x, M=M: ty.constant(M, x[0].b), label="product", extras={"pencil": True})
        elif kind in ("orthotoric", "pencil_pair"):
            pg = mt.orthotoric(_orthotoric_spec(geo))
            if kind == "pencil_pair":
                a, b, c, d = _floats(geo.get("mobius", "0 1 1 0"))
                pg = mt.reparametrize_pencil(pg, a, b, c, d)
            return pg
        else:
            raise ConfigError(f"unknown geometry kind {kind!r}")
    except GeometryError:
        raise
    except KeyError as exc:
        raise ConfigError(f"[geometry] is missing {exc.args[0]}") from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[geometry]: {exc}") from exc
    m = ks.chart.real_dim
    return mt.PencilGeometry(ks, lambda x: ty.constant(np.eye(m), x[0].b), label=ks.label)


# -- task context ---------------------------------------------------------------------------
@dataclass
class Context:
    pg: mt.PencilGeometry
    geometry: dict
    rng: np.random.Generator
    parallel: int = 1

    @property
    def ks(self):
        return self.pg.ks

    @property
    def kind(self) -> str:
        return self.geometry["kind"]

    @property
    def has_pencil(self) -> bool:
        return bool(self.pg.eigenvalue_funcs) or bool(self.pg.extras.get("pencil"))

    def samples(self, count: int) -> np.ndarray:
        return self.ks.chart.sample(self.rng, count)

    def map(self, fn: Callable, items) -> list:
        items = list(items)
        if self.parallel > 1 and len(items) > 1:
            with ThreadPoolExecutor(self.parallel) as ex:
                return list(ex.map(fn, items))
        return [fn(x) for x in items]

    def solution(self) -> mob.MobilitySolution:
        return mob.MobilitySolution(self.pg.A, self.pg.label)

    def t_grid(self, spec: TaskSpec, k: int = 5) -> np.ndarray:
        if "t_values" in spec.options:
            return np.array(_floats(spec.options["t_values"]))
        return dyn.default_t_grid(self.pg, self.samples(20), k)


class Skip(Exception):
    pass


@dataclass
class Outcome:
    residual: float
    samples: int


def _lam(pg):
    return lambda x: ty.trace(pg.A(x)) * -0.5


def _need_pencil(ctx):
    if not ctx.has_pencil:
        raise Skip("geometry has no nontrivial mobility solution")


def _B_option(ctx, spec, pts):
    B = spec.get("B", None, float)
    if B is None:
        B = nul.detect_nullity(ctx.ks, pts[0]).B
    return B


# -- tasks ----------------------------------------------------------------------------------
def t_curvature_identity(ctx, spec):
    if ctx.kind not in ("fubini_study", "flat"):
        raise Skip("closed-form curvature known only for flat and fubini_study")
    B = 1.0 if ctx.kind == "fubini_study" else 0.0
    pts = ctx.samples(spec.get("samples", 100, int))

    def one(p):
        geo = ctx.ks.geometry(p, 2)
        S = kh.fs_model(geo.g.value, geo.Om.value)
        R = geo.R_low.value
        return float(np.abs(R - B * S).max() / max(np.abs(S).max(), 1e-300))

    return Outcome(max(ctx.map(one, pts)), len(pts))


def t_kahler_validate(ctx, spec):
    pts = ctx.samples(spec.get("samples", 20, int))
    return Outcome(kh.validate_kahler(ctx.ks, pts)["max"], len(pts))


def t_bochner(ctx, spec):
    pts = ctx.samples(spec.get("samples", 20, int))

    def one(p):
        geo = ctx.ks.geometry(p, 2)
        g, Om, R = geo.g.value, geo.Om.value, geo.R_low.value
        parts = kh.bochner_decompose(R, g, Om, geo.n)
        scale = max(1.0, np.abs(R).max())
        rec = np.abs(parts.assemble(g, Om) - R).max() / scale
        tf = kh.trace_free_residual(parts.U, geo.ginv.value, geo.Om_inv.value) / scale
        return float(max(rec, tf))

    return Outcome(max(ctx.map(one, pts)), len(pts))


def t_classical_decompositions(ctx, spec):
    pts = ctx.samples(spec.get("samples", 10, int))

    def one(p):
        geo = ctx.ks.geometry(p, 2)
        g, gi, R = geo.g.value, geo.ginv.value, geo.R_low.value
        scale = max(1.0, np.abs(R).max())
        W = kh.projective_weyl(R, g)
        r1 = np.abs(np.einsum("ac,abcd->bd", gi, W)).max()
        C = kh.conformal_weyl(R, g)
        r2 = kh.trace_free_residual(C, gi, np.zeros_like(gi))
        _, _, r3 = kh.symplectic_decompose(geo.R.value, geo.Om.value, g)
        return float(max(r1, r2, r3) / scale)

    return Outcome(max(ctx.map(one, pts)), len(pts))


def t_cproj_invariance(ctx, spec):
    pts = ctx.samples(spec.get("samples", 10, int))
    coeffs = [(ctx.rng.normal(size=4), 0.3 * ctx.rng.normal(size=(4, 4))) for _ in pts]
    m = ctx.ks.chart.real_dim

    def one(args):
        p, (c, Q) = args
        c, Q = np.resize(c, m), np.resize(Q, (m, m))

        def f(x):
            return sum(x[i] * c[i] for i in range(m)) + sum(x[i] * x[j] * Q[i, j] for i in range(m) for j in range(m))

        r = kh.cproj_invariance_check(ctx.ks, f, p)
        scale = max(1.0, float(np.abs(ctx.ks.geometry(p, 2).R.value).max()))
        return max(r["H"], r["rho_20"], r["rho_11"]) / scale

    return Outcome(max(ctx.map(one, zip(pts, coeffs))), len(pts))


def _eta_tilde(pg):
    def f(x):
        g = pg.ks.metric(x)
        return ty.einsum("ab,bc->ac", ty.inv(g), pg.A(x))

    return f


def t_metrisability(ctx, spec):
    pts = ctx.samples(spec.get("samples", 20, int))
    etas = [lambda x: ty.inv(ctx.ks.metric(x)), _eta_tilde(ctx.pg)]

    def one(p):
        return max(mob.metrisability_residual(ctx.ks, e, p)[0] for e in etas)

    return Outcome(max(ctx.map(one, pts)), len(pts))


def t_mobility(ctx, spec):
    _need_pencil(ctx)
    pts = ctx.samples(spec.get("samples", 50, int))
    sol = ctx.solution()
    eig = ctx.pg.eigenvalue_funcs

    def one(p):
        r = max(mob.mobility_residual(ctx.ks, sol, p), mob.commute_check(ctx.ks, sol, p))
        for f in eig:
            r = max(r, mob.eigenvalue_gradient_check(ctx.ks, sol, f, p))
        return r

    return Outcome(max(ctx.map(one, pts)), len(pts))


def t_pencil_killing(ctx, spec):
    _need_pencil(ctx)
    pts = ctx.samples(spec.get("samples", 10, int))
    tv = ctx.t_grid(spec)
    sol = ctx.solution()

    def one(p):
        r = max(mob.holomorphic_killing_residual(ctx.ks, dyn.killing_field(ctx.pg, t), p) for t in tv)
        return max(r, mob.pencil_potentials(ctx.ks, sol, p).recursion_residual)

    return Outcome(max(ctx.map(one, pts)), len(pts))


def _killing_tensor_low(pg, t):
    m = 2 * pg.n

    def H(x):
        return ty.einsum("bc,ca->ba", mob.adjugate_complex(pg.A(x) - np.eye(m) * t, pg.n), pg.ks.metric(x))

    return H


def t_killing_tensors(ctx, spec):
    _need_pencil(ctx)
    pts = ctx.samples(spec.get("samples", 10, int))
    tv = ctx.t_grid(spec)

    def one(p):
        return max(mob.killing_tensor_residual(ctx.ks, _killing_tensor_low(ctx.pg, t), p) for t in tv)

    return Outcome(max(ctx.map(one, pts)), len(pts))


def t_hessian(ctx, spec):
    _need_pencil(ctx)
    pts = ctx.samples(spec.get("samples", 10, int))
    tv = ctx.t_grid(spec)
    pg = ctx.pg

    def one(p):
        r = 0.0
        for t in tv:
            h = lambda x, t=t: mob.det_pencil(mob.complex_elementary(pg.A(x), pg.n), t)
            r = max(r, mob.killing_potential_check(ctx.ks, h, p), *mob.cproj_hessian(ctx.ks, h, p))
        return r

    return Outcome(max(ctx.map(one, pts)), len(pts))


def t_prolongation(ctx, spec):
    pts = ctx.samples(spec.get("samples", 5, int))
    sols = [mob.MobilitySolution.identity(ctx.ks.chart.real_dim), ctx.solution()]

    def one(p):
        geo = ctx.ks.geometry(p, 4)
        F = mob.connection_curvature(geo)
        worst = 0.0
        for s in sols:
            v = mob.lift_solution(geo, mob.SolutionAt(geo, s)).to_vector()
            worst = max(worst, float(np.abs(np.einsum("ghij,j->ghi", F, v)).max()))
        return worst

    return Outcome(max(ctx.map(one, pts)), len(pts))


def t_mobility_bound(ctx, spec):
    pts = ctx.samples(max(spec.get("samples", 20, int), 20))
    bound = mob.mobility_upper_bound(ctx.ks, pts)
    expected = spec.get("expected_bound", None, int)
    if expected is not None:
        return Outcome(float(abs(bound - expected)), len(pts))
    minimum = spec.get("minimum", 2 if ctx.has_pencil else 1, int)
    return Outcome(float(max(0, minimum - bound)), len(pts))


def t_nullity(ctx, spec):
    pts = ctx.samples(spec.get("samples", 10, int))
    expected = spec.get("expected_B", None, float)
    sol = ctx.solution()

    def one(p):
        r = nul.detect_nullity(ctx.ks, p)
        if r.B is None:
            return None
        ok = True
        if ctx.pg.eigenvalue_funcs:
            S = mob.SolutionAt(ctx.ks.geometry(p, 2), sol)
            ok = r.contains(S.Lam.value) and r.contains(S.JLam.value)
        return r.B, ok

    res = ctx.map(one, pts)
    if any(r is None or not r[1] for r in res):
        return Outcome(NO_RESULT, len(pts))
    Bs = [r[0] for r in res]
    resid = max(Bs) - min(Bs)
    if expected is not None:
        resid = max(resid, max(abs(b - expected) for b in Bs))
    return Outcome(float(resid), len(pts))


def t_special_tractor(ctx, spec):
    _need_pencil(ctx)
    pts = ctx.samples(spec.get("samples", 10, int))
    B = _B_option(ctx, spec, pts)
    if B is None:
        return Outcome(NO_RESULT, len(pts))
    sol = ctx.solution()
    return Outcome(max(ctx.map(lambda p: nul.special_tractor_residual(ctx.ks, sol, B, p).max, pts)), len(pts))


def t_tanno(ctx, spec):
    _need_pencil(ctx)
    pts = ctx.samples(spec.get("samples", 10, int))
    B = _B_option(ctx, spec, pts)
    if B is None:
        return Outcome(NO_RESULT, len(pts))
    lam = _lam(ctx.pg)
    return Outcome(max(ctx.map(lambda p: nul.tanno_residual(ctx.ks, lam, B, p), pts)), len(pts))


def t_theta_criterion(ctx, spec):
    if ctx.pg.spec is None:
        raise Skip("needs an orthotoric geometry")
    n = spec.get("samples", 20, int)
    ok, B = nul.theta_nullity_check(ctx.pg, samples=n, seed=int(ctx.rng.integers(2**31)))
    if not ok:
        return Outcome(NO_RESULT, n)
    expected = spec.get("expected_B", None, float)
    return Outcome(abs(B - expected) if expected is not None else 0.0, n)


def _start(ctx, spec):
    q = np.array(_floats(spec.options["q"])) if "q" in spec.options else ctx.samples(1)[0]
    p = np.array(_floats(spec.options["p"])) if "p" in spec.options else dyn.generic_momentum(ctx.rng, len(q))
    return dyn.PhaseState(q, p * spec.get("momentum_scale", 1.0, float))


def t_geodesics(ctx, spec):
    s0 = _start(ctx, spec)
    tr = dyn.geodesic_flow(ctx.ks, s0, spec.get("T", 10.0, float), spec.get("dt", 1e-2, float), spec.get("method", "rk4"))
    if tr.truncated:
        return Outcome(NO_RESULT, len(tr))
    if ctx.has_pencil:
        rec = dyn.integrals_on_trajectory(ctx.pg, tr, ctx.t_grid(spec), every=spec.get("every", 10, int))
        return Outcome(rec.max_drift(), len(tr))
    H = [dyn.hamiltonian(ctx.ks, q, p) for q, p in zip(tr.q, tr.p)]
    return Outcome(float(np.max(np.abs(np.array(H) - H[0])) / H[0]), len(tr))


def t_involution(ctx, spec):
    _need_pencil(ctx)
    n = spec.get("samples", 30, int)
    tv = ctx.t_grid(spec)
    phase = dyn.random_phase_samples(ctx.ks, ctx.rng, n)
    return Outcome(max(ctx.map(lambda s: float(np.abs(dyn.involution_matrix(ctx.pg, tv, s.q, s.p)).max()), phase)), n)


def t_independence(ctx, spec):
    n = max(spec.get("samples", 10, int), 10)
    if "expected" in spec.options and spec.options["expected"] not in ("pass", "fail"):
        raise ConfigError("independence: use expected_counts for the counts")
    if "expected_counts" in spec.options:
        exp = tuple(int(v) for v in _floats(spec.options["expected_counts"]))
    elif ctx.pg.spec is not None:
        exp = (ctx.pg.spec.n, ctx.pg.spec.n)
    else:
        raise Skip("expected_counts not given")
    phase = dyn.random_phase_samples(ctx.ks, ctx.rng, n)
    got = dyn.independence_count(ctx.pg, phase, ctx.t_grid(spec, 2 * ctx.pg.n + 1))
    return Outcome(float(abs(got[0] - exp[0]) + abs(got[1] - exp[1])), n)


def t_jplanar(ctx, spec):
    n = spec.get("samples", 3, int)
    T, dt = spec.get("T", 0.5, float), spec.get("dt", 1e-3, float)
    worst = 0.0
    for _ in range(n):
        x0 = ctx.ks.chart.sample(ctx.rng, 1, frac=0.3)[0]
        v0 = ctx.rng.normal(size=len(x0)) * 0.3
        a = ctx.rng.normal(size=3)
        cs = dyn.CurveSpec(x0, v0, lambda s, a=a: a[0] * math.sin(s), lambda s, a=a: a[1] + a[2] * math.cos(s))
        curve = dyn.jplanar_flow(ctx.ks, cs, T, dt)
        worst = max(worst, dyn.curve_residual(ctx.ks, curve, stride=10))
    return Outcome(worst, n)


def t_psl_action(ctx, spec):
    if ctx.kind != "fubini_study":
        raise Skip("the fractional-linear action is defined on the CP^n chart")
    n = spec.get("samples", 10, int)
    ks = mt.fubini_study(ctx.pg.n, float(ctx.geometry.get("box", 1.0)) * 20)
    worst = 0.0
    for i in range(n):
        x0 = ctx.rng.uniform(-0.3, 0.3, size=2 * ctx.pg.n)
        a = ctx.rng.normal(size=3)
        cs = dyn.CurveSpec(x0, ctx.rng.normal(size=2 * ctx.pg.n) * 0.3, lambda s, a=a: a[0] * math.sin(s), lambda s, a=a: a[1] + a[2] * math.cos(s))
        curve = dyn.jplanar_flow(ks, cs, 0.5, 1e-3)
        kind = "unitary" if i % 2 else "general"
        M = dyn.random_group_element(ctx.rng, ctx.pg.n, kind)
        r = dyn.psl_action_check(ks, M, curve)
        worst = max(worst, r["after"], r["length_deviation"] if kind == "unitary" else 0.0)
    return Outcome(worst, n)


def t_einstein_check(ctx, spec):
    pts = ctx.samples(spec.get("samples", 10, int))
    ok, _ = mob.generalized_einstein_check(ctx.ks, pts, spec.get("einstein_tol", 1e-6, float))
    return Outcome(0.0 if ok else NO_RESULT, len(pts))


# registry order is the documentation order; tolerances are the per-task defaults
TASKS: dict = {
    "curvature_identity": (t_curvature_identity, 1e-7),
    "kahler_validate": (t_kahler_validate, 1e-8),
    "bochner": (t_bochner, 1e-8),
    "classical_decompositions": (t_classical_decompositions, 1e-8),
    "cproj_invariance": (t_cproj_invariance, 1e-7),
    "metrisability": (t_metrisability, 1e-8),
    "mobility": (t_mobility, 1e-7),
    "pencil_killing": (t_pencil_killing, 1e-7),
    "killing_tensors": (t_killing_tensors, 1e-7),
    "hessian": (t_hessian, 1e-7),
    "prolongation": (t_prolongation, 1e-7),
    "mobility_bound": (t_mobility_bound, 0.5),
    "nullity": (t_nullity, 1e-6),
    "special_tractor": (t_special_tractor, 1e-7),
    "tanno": (t_tanno, 1e-6),
    "theta_criterion": (t_theta_criterion, 1e-6),
    "geodesics": (t_geodesics, 1e-6),
    "involution": (t_involution, 1e-7),
    "independence": (t_independence, 0.5),
    "jplanar": (t_jplanar, 1e-7),
    "psl_action": (t_psl_action, 1e-6),
    "einstein_check": (t_einstein_check, 0.5),
}


# -- running --------------------------------------------------------------------------------
def run_task(ctx: Context, spec: TaskSpec, tol_scale: float = 1.0) -> dict:
    fn, default_tol = TASKS[spec.name]
    tol = spec.get("tolerance", default_tol, float) * tol_scale
    expected = spec.get("expected", "pass")
    t0 = time.perf_counter()
    reason = None
    try:
        out = fn(ctx, spec)
        residual, samples = float(out.residual), int(out.samples)
        ok = residual <= tol
        if expected == "fail":
            status = "expected-fail" if not ok else "fail"
        else:
            status = "pass" if ok else "fail"
    except Skip as exc:
        residual, samples, status, reason = None, 0, "skip", str(exc)
    except GeometryError as exc:
        residual, samples = None, 0
        status = "expected-fail" if expected == "fail" else "fail"
        reason = str(exc)
    rec = {
        "name": spec.name,
        "status": status,
        "max_residual": residual,
        "tolerance": tol,
        "samples": samples,
        "seconds": time.perf_counter() - t0,
    }
    if reason is not None:
        rec["reason"] = reason
    return rec


def _atomic_write(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_report_json(report: dict, path) -> None:
    _atomic_write(Path(path), json.dumps(report, indent=2) + "\n")


def trajectory_csv_text(records: dyn.IntegralRecords | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if records is None:
        w.writerow(["t", "H"])
        return buf.getvalue()
    k, m = records.L.shape[1] if records.L.ndim == 2 else 0, records.I.shape[1] if records.I.ndim == 2 else 0
    w.writerow(["t", "H"] + [f"L_{i + 1}" for i in range(k)] + [f"I_{i + 1}" for i in range(m)])
    for i, t in enumerate(records.times):
        row = [t, records.H[i], *(records.L[i] if k else []), *(records.I[i] if m else [])]
        w.writerow([format(float(v), ".17g") for v in row])
    return buf.getvalue()


def emit_trajectory_csv(records: dyn.IntegralRecords | None, path) -> None:
    _atomic_write(Path(path), trajectory_csv_text(records))


def build_report(cfg: RunConfig, seed: int, records: list, timings: bool) -> dict:
    tasks = []
    for r in records:
        r = dict(r)
        if not timings:
            r["seconds"] = None
        tasks.append(r)
    return {"version": __version__, "seed": seed, "geometry": dict(cfg.geometry), "tasks": tasks}


def verify_config(cfg: RunConfig, seed: int, tol_scale: float = 1.0, parallel: int = 1, log=None) -> tuple:
    """Run every task; returns (exit code, per-task records)."""
    try:
        pg = build_geometry(cfg.geometry)
    except (GeometryError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise GeometryFailure(str(exc)) from exc
    records = []
    for i, spec in enumerate(cfg.tasks):
        ctx = Context(pg, cfg.geometry, np.random.default_rng([seed, i]), parallel)
        rec = run_task(ctx, spec, tol_scale)
        if log:
            res = "-" if rec["max_residual"] is None else f"{rec['max_residual']:.3e}"
            log(f"{rec['status']:>13}  {spec.name:<25} residual {res}  tol {rec['tolerance']:.1e}")
        records.append(rec)
    code = EXIT_FAIL if any(r["status"] == "fail" for r in records) else EXIT_OK
    return code, records


class GeometryFailure(RuntimeError):
    pass


SCHEMA = {
    "type": "object",
    "required": ["version", "seed", "geometry", "tasks"],
    "properties": {
        "version": {"type": "string"},
        "seed": {"type": "integer"},
        "geometry": {"type": "object", "additionalProperties": {"type": "string"}},
        "tasks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "status", "max_residual", "tolerance", "samples", "seconds"],
                "properties": {
                    "name": {"enum": list(TASKS)},
                    "status": {"enum": ["pass", "fail", "skip", "expected-fail"]},
                    "max_residual": {"type": ["number", "null"]},
                    "tolerance": {"type": "number"},
                    "samples": {"type": "integer"},
                    "seconds": {"type": ["number", "null"]},
                    "reason": {"type": "string"},
                },
            },
        },
    },
}


# -- click ----------------------------------------------------------------------------------
@click.group()
@click.version_option(__version__)
def main():
    """Numerical checks of c-projective Kähler geometry."""


def _common(f):
    f = click.option("--seed", type=int, default=None, help="Override the config seed.")(f)
    f = click.option("--tol-scale", type=float, default=1.0, show_default=True, help="Multiply all tolerances.")(f)
    f = click.option("--parallel", type=int, default=1, show_default=True, help="Worker threads per task.")(f)
    f = click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)(f)
    return f


def _load(config_path):
    try:
        return load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        raise SystemExit(EXIT_PARSE)


@main.command()
@click.argument("config_path", type=click.Path())
@_common
@click.option("--timings", is_flag=True, help="Record wall times in the report (makes it non-reproducible).")
def verify(config_path, seed, tol_scale, parallel, out_dir, timings):
    """Run the tasks of CONFIG_PATH and write <stem>.report.json."""
    cfg = _load(config_path)
    if tol_scale <= 0:
        click.echo("--tol-scale must be positive", err=True)
        raise SystemExit(EXIT_PARSE)
    seed = cfg.seed if seed is None else seed
    try:
        code, records = verify_config(cfg, seed, tol_scale, parallel, log=click.echo)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        raise SystemExit(EXIT_PARSE)
    except GeometryFailure as exc:
        click.echo(f"geometry construction failed: {exc}", err=True)
        raise SystemExit(EXIT_GEOMETRY)
    out = Path(out_dir) / (Path(config_path).stem + ".report.json")
    emit_report_json(build_report(cfg, seed, records, timings), out)
    click.echo(f"report written to {out}")
    raise SystemExit(code)


@main.command()
@click.argument("config_path", type=click.Path())
@_common
def flow(config_path, seed, tol_scale, parallel, out_dir):
    """Integrate the geodesic flow of [flow] and write <stem>.csv."""
    cfg = _load(config_path)
    seed = cfg.seed if seed is None else seed
    try:
        pg = build_geometry(cfg.geometry)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        raise SystemExit(EXIT_PARSE)
    except GeometryError as exc:
        click.echo(f"geometry construction failed: {exc}", err=True)
        raise SystemExit(EXIT_GEOMETRY)
    spec = TaskSpec("geodesics", cfg.flow)
    ctx = Context(pg, cfg.geometry, np.random.default_rng([seed, 0]), parallel)
    try:
        s0 = _start(ctx, spec)
        T, dt = spec.get("T", 10.0, float), spec.get("dt", 1e-2, float)
        tr = dyn.geodesic_flow(pg.ks, s0, T, dt, spec.get("method", "rk4"))
        tv = ctx.t_grid(spec) if ctx.has_pencil else []
        records = dyn.integrals_on_trajectory(pg, tr, tv, every=spec.get("every", 1, int))
    except (ConfigError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        raise SystemExit(EXIT_PARSE)
    except GeometryError as exc:
        click.echo(f"flow failed: {exc}", err=True)
        raise SystemExit(EXIT_GEOMETRY)
    out = Path(out_dir) / (Path(config_path).stem + ".csv")
    emit_trajectory_csv(records, out)
    drift = records.max_drift()
    tol = spec.get("tolerance", 1e-6, float) * tol_scale
    click.echo(f"{len(tr)} steps{' (truncated: ' + tr.diagnostic + ')' if tr.truncated else ''}, max relative drift {drift:.3e}")
    click.echo(f"trajectory written to {out}")
    raise SystemExit(EXIT_OK if drift <= tol and not tr.truncated else EXIT_FAIL)


@main.command("report-schema")
def report_schema():
    """Print the JSON schema of verification reports."""
    click.echo(json.dumps(SCHEMA, indent=2))


if __name__ == "__main__":
    main()
