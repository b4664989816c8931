"""Acceptance suite: one test per acceptance criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from cprojlab import dynamics as dyn
from cprojlab import kahler as kh
from cprojlab import metrics as mt
from cprojlab import mobility as mob
from cprojlab import nullity as nul
from cprojlab import taylor as ty

ROOT = Path(__file__).resolve().parents[1]

_lines: list = []


def _emit(capsys, label: str, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    _lines.append(line)
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)


def _lam(pg):
    return lambda x: ty.trace(pg.A(x)) * -0.5


@pytest.fixture(scope="module")
def fs():
    return mt.fubini_study(2)


@pytest.fixture(scope="module")
def ortho():
    return mt.orthotoric(mt.default_orthotoric(True))


@pytest.fixture(scope="module")
def mismatched():
    return mt.orthotoric(mt.default_orthotoric(False))


def test_c01_fubini_study_curvature(fs, capsys):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for p in fs.chart.sample(rng, 100):
        geo = fs.geometry(p, 2)
        S = kh.fs_model(geo.g.value, geo.Om.value)
        worst = max(worst, float(np.abs(geo.R_low.value - S).max() / np.abs(S).max()))
    dt = time.perf_counter() - t0
    ok = worst < 1e-7 and dt < 10
    _emit(capsys, "1 Fubini-Study curvature", ok, f"max rel err {worst:.2e} in {dt:.1f}s")
    assert ok


def test_c02_flat_model_data(fs, capsys):
    rng = np.random.default_rng(102)
    pts = fs.chart.sample(rng, 20)
    rho = harm = 0.0
    for p in pts:
        geo = fs.geometry(p, 2)
        rho = max(rho, float(np.abs(geo.P.value - 2 * geo.g.value).max()))
        harm = max(harm, float(np.abs(geo.H.value).max()))
    lam = kh.chsc_check(fs, pts)
    ok = rho < 1e-7 and harm < 1e-7 and lam is not None and abs(lam - 1) < 1e-8
    _emit(capsys, "2 flat-model Rho, H, Lambda_hsc", ok, f"|P-2g| {rho:.1e}, |H| {harm:.1e}, Lambda {lam}")
    assert ok


def test_c03_bochner_reconstruction(fs, ortho, mismatched, capsys):
    rng = np.random.default_rng(103)
    prod = mt.product_metric([mt.fubini_study(2), mt.fubini_study(2)], [1.0, 2.0])
    cases = {
        "fubini_study": fs,
        "flat": mt.flat_metric(2),
        "product": prod,
        "orthotoric": ortho.ks,
        "orthotoric_mismatched": mismatched.ks,
    }
    rec = tf = 0.0
    for ks in cases.values():
        for p in ks.chart.sample(rng, 5):
            geo = ks.geometry(p, 2)
            g, Om, R = geo.g.value, geo.Om.value, geo.R_low.value
            parts = kh.bochner_decompose(R, g, Om, geo.n)
            scale = max(1.0, np.abs(R).max())
            rec = max(rec, float(np.abs(parts.assemble(g, Om) - R).max() / scale))
            tf = max(tf, kh.trace_free_residual(parts.U, geo.ginv.value, geo.Om_inv.value) / scale)
    ok = rec < 1e-8 and tf < 1e-8
    _emit(capsys, "3 Bochner reconstruction", ok, f"reassembly {rec:.1e}, U traces {tf:.1e} over {len(cases)} geometries")
    assert ok


def test_c04_cproj_invariance(mismatched, capsys):
    rng = np.random.default_rng(104)
    ks = mismatched.ks
    H = rho = 0.0
    for p in ks.chart.sample(rng, 10):
        c, Q = rng.normal(size=4), 0.3 * rng.normal(size=(4, 4))

        def f(x, c=c, Q=Q):
            return sum(x[i] * c[i] for i in range(4)) + sum(x[i] * x[j] * Q[i, j] for i in range(4) for j in range(4))

        r = kh.cproj_invariance_check(ks, f, p)
        H = max(H, r["H"])
        rho = max(rho, r["rho_20"], r["rho_11"], r["rho_real"])
    ok = H < 1e-7 and rho < 1e-8
    _emit(capsys, "4 c-projective invariance", ok, f"harmonic curvature change {H:.1e}, Rho law {rho:.1e}")
    assert ok


def test_c05_mobility_pipeline(ortho, capsys):
    rng = np.random.default_rng(105)
    sol = mob.MobilitySolution(ortho.A, "orthotoric")
    t0 = time.perf_counter()
    res = com = eig = 0.0
    for p in ortho.ks.chart.sample(rng, 50):
        res = max(res, mob.mobility_residual(ortho.ks, sol, p))
        com = max(com, mob.commute_check(ortho.ks, sol, p))
        for f in ortho.eigenvalue_funcs:
            eig = max(eig, mob.eigenvalue_gradient_check(ortho.ks, sol, f, p))
    dt = time.perf_counter() - t0
    ok = res < 1e-8 and com < 1e-8 and eig < 1e-7 and dt < 30
    _emit(capsys, "5 mobility pipeline", ok, f"mobility {res:.1e}, [A,dLam] {com:.1e}, eigen {eig:.1e} in {dt:.1f}s")
    assert ok


def _flow_drift(pg, s0, dt, tv):
    tr = dyn.geodesic_flow(pg.ks, s0, 10.0, dt)
    assert not tr.truncated, tr.diagnostic
    return dyn.integrals_on_trajectory(pg, tr, tv, every=int(round(0.1 / dt))).max_drift()


def test_c06_killing_objects(ortho, capsys):
    rng = np.random.default_rng(106)
    tv = dyn.default_t_grid(ortho, ortho.ks.chart.sample(rng, 20))
    pts = ortho.ks.chart.sample(rng, 5)
    kf = max(mob.holomorphic_killing_residual(ortho.ks, dyn.killing_field(ortho, t), p) for t in tv for p in pts)

    def H_low(t):
        def f(x):
            adj = mob.adjugate_complex(ortho.A(x) - np.eye(4) * t, 2)
            return ty.einsum("bc,ca->ba", adj, ortho.ks.metric(x))

        return f

    kt = max(mob.killing_tensor_residual(ortho.ks, H_low(t), p) for t in tv for p in pts)
    br = max(
        float(np.abs(dyn.involution_matrix(ortho, tv, s.q, s.p)).max())
        for s in dyn.random_phase_samples(ortho.ks, rng, 30)
    )
    # the trajectory runs on the compact sibling, whose chart is flow-invariant
    cpt = mt.orthotoric(mt.compact_orthotoric((-1e4, 1e4)))
    s0 = dyn.PhaseState(np.array([1.5, 0.5, 0.0, 0.0]), np.array([0.12, -0.21, 0.9, -0.4]))
    tvc = dyn.default_t_grid(cpt, cpt.ks.chart.sample(rng, 20))
    d1 = _flow_drift(cpt, s0, 1e-3, tvc)
    d2 = _flow_drift(cpt, s0, 2e-3, tvc)
    ratio = d2 / d1
    order = float(np.log2(ratio))
    ok = kf < 1e-7 and kt < 1e-7 and br < 1e-7 and d1 < 1e-6 and 3.5 <= order <= 5.0
    _emit(
        capsys,
        "6 Killing objects and integrals",
        ok,
        f"fields {kf:.1e}, tensors {kt:.1e}, brackets {br:.1e}, drift(dt=1e-3) {d1:.1e}, halving ratio {ratio:.1f}",
    )
    assert ok


def test_c07_independence_counts(ortho, capsys):
    m = 4
    ident = mt.PencilGeometry(ortho.ks, lambda x: ty.constant(np.eye(m), x[0].b), label="identity")
    got = []
    for seed in (0, 1, 2):
        rng = np.random.default_rng([107, seed])
        phase = dyn.random_phase_samples(ortho.ks, rng, 10)
        a = dyn.independence_count(ortho, phase)
        b = dyn.independence_count(ident, phase, dyn.default_t_grid(ortho, ortho.ks.chart.sample(rng, 20), 5))
        got.append((a, b))
    ok = all(a == (2, 2) and b == (0, 1) for a, b in got)
    _emit(capsys, "7 independence counts", ok, f"orthotoric/identity over 3 seeds: {got}")
    assert ok


def test_c08_prolongation_bound(fs, ortho, capsys):
    rng = np.random.default_rng(108)
    pts = fs.chart.sample(rng, 20)
    curv = 0.0
    for p in pts[:5]:
        geo = fs.geometry(p, 4)
        # restricted to the Hermitian subspace V on which the connection lives
        F = np.einsum("ghij,jk->ghik", mob.connection_curvature(geo), mob.invariant_subspace(geo.J.value))
        curv = max(curv, float(np.abs(F).max()))
    fs_bound = mob.mobility_upper_bound(fs, pts)
    o_bound = mob.mobility_upper_bound(ortho.ks, ortho.ks.chart.sample(rng, 20))
    lift = 0.0
    eta = lambda x: ty.inv(ortho.ks.metric(x))
    eta_t = lambda x: ty.einsum("ab,bc->ac", ty.inv(ortho.ks.metric(x)), ortho.A(x))
    for p in ortho.ks.chart.sample(rng, 5):
        geo = ortho.ks.geometry(p, 4)
        for e in (eta, eta_t):
            lift = max(lift, mob.curvature_on_section(ortho.ks, p, mob.lift_eta(geo, e)))
    ok = curv < 1e-7 and fs_bound == 9 and o_bound >= 2 and lift < 1e-7
    _emit(capsys, "8 prolongation and mobility bound", ok, f"CP2 curvature {curv:.1e}, bounds {fs_bound}/{o_bound}, lifts {lift:.1e}")
    assert ok


def test_c09_nullity_tanno_tractor(ortho, mismatched, capsys):
    rng = np.random.default_rng(109)
    target = 0.25
    sol = mob.MobilitySolution(ortho.A, "orthotoric")
    pts = ortho.ks.chart.sample(rng, 10)
    Bs, span_ok = [], True
    for p in pts:
        r = nul.detect_nullity(ortho.ks, p)
        Bs.append(r.B)
        S = mob.SolutionAt(ortho.ks.geometry(p, 2), sol)
        span_ok &= r.B is not None and r.contains(S.Lam.value) and r.contains(S.JLam.value)
    B_err = max(abs(b - target) if b is not None else np.inf for b in Bs)
    tr = max(nul.special_tractor_residual(ortho.ks, sol, target, p).max for p in pts)
    tn = max(nul.tanno_residual(ortho.ks, _lam(ortho), target, p) for p in pts)
    ok_pos = B_err < 1e-6 and span_ok and tr < 1e-7 and tn < 1e-6

    msol = mob.MobilitySolution(mismatched.A, "mismatched")
    mpts = mismatched.ks.chart.sample(rng, 5)
    neg_null = all(nul.detect_nullity(mismatched.ks, p).B is None for p in mpts)
    neg_tr = all(nul.special_tractor_residual(mismatched.ks, msol, b, p).max > 1e-7 for p in mpts for b in (target, -target))
    neg_tn = all(nul.tanno_residual(mismatched.ks, _lam(mismatched), b, p) > 1e-6 for p in mpts for b in (target, -target))
    theta_ok, _ = nul.theta_nullity_check(mismatched)
    ok_neg = neg_null and neg_tr and neg_tn and not theta_ok

    ok = ok_pos and ok_neg
    detected = sorted({round(b, 9) for b in Bs if b is not None})
    _emit(
        capsys,
        "9 nullity, Tanno, special tractor",
        ok,
        f"detected B {detected} vs required {target}, span {span_ok}, tractor {tr:.1e}, Tanno {tn:.1e}, "
        f"negative control {'ok' if ok_neg else 'NOT ok'}",
    )
    assert ok


def test_c10_fractional_linear_action(capsys):
    rng = np.random.default_rng(110)
    ks = mt.fubini_study(2, 20.0)
    worst = arc = 0.0
    for i in range(10):
        a = rng.normal(size=3)
        spec = dyn.CurveSpec(
            rng.uniform(-0.3, 0.3, size=4),
            rng.normal(size=4) * 0.3,
            lambda s, a=a: a[0] * np.sin(s),
            lambda s, a=a: a[1] + a[2] * np.cos(s),
        )
        curve = dyn.jplanar_flow(ks, spec, 0.5, 1e-3)
        r = dyn.psl_action_check(ks, dyn.random_group_element(rng, 2, "general"), curve)
        worst = max(worst, r["after"])
        r = dyn.psl_action_check(ks, dyn.random_group_element(rng, 2, "unitary"), curve)
        worst = max(worst, r["after"])
        arc = max(arc, r["length_deviation"])
    ok = worst < 1e-6 and arc < 1e-8
    _emit(capsys, "10 fractional-linear images of J-planar curves", ok, f"J-planarity {worst:.1e}, unitary arclength {arc:.1e}")
    assert ok


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "cprojlab", *args], capture_output=True, text=True, cwd=ROOT)


def test_c11_cli_determinism(tmp_path, capsys):
    cfg = ROOT / "configs" / "orthotoric_full.ini"
    a, b = tmp_path / "a", tmp_path / "b"
    r1, r2 = _cli("verify", str(cfg), "--out-dir", str(a)), _cli("verify", str(cfg), "--out-dir", str(b), "--parallel", "4")
    same = (a / "orthotoric_full.report.json").read_bytes() == (b / "orthotoric_full.report.json").read_bytes()
    t0 = time.perf_counter()
    codes = {}
    for ini in sorted((ROOT / "configs").glob("*.ini")):
        cmd = "flow" if ini.stem.endswith("_flow") else "verify"
        codes[ini.stem] = _cli(cmd, str(ini), "--out-dir", str(tmp_path / "suite")).returncode
    dt = time.perf_counter() - t0
    ok = r1.returncode == 0 and r2.returncode == 0 and same and all(c == 0 for c in codes.values()) and dt < 300
    _emit(capsys, "11 CLI determinism and suite runtime", ok, f"identical {same}, exit codes {codes}, suite {dt:.0f}s")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
