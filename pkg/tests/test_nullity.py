import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cprojlab import kahler as kh
from cprojlab import metrics as mt
from cprojlab import mobility as mob
from cprojlab import nullity as nul
from cprojlab import taylor as ty
from cprojlab.tensorcore import GeometryError


def lam_of(pg):
    return lambda x: ty.trace(pg.A(x)) * -0.5


def test_fubini_study_nullity_is_everything(fs2, rng):
    r = nul.detect_nullity(fs2, fs2.chart.sample(rng, 1)[0])
    assert np.isclose(r.B, 1.0) and r.dim == 4


def test_flat_nullity_constant_zero(rng):
    ks = mt.flat_metric(2)
    r = nul.detect_nullity(ks, ks.chart.sample(rng, 1)[0])
    assert r.B == 0 and r.dim == 4


def test_common_theta_nullity(ortho, rng):
    sol = mob.MobilitySolution(ortho.A)
    for p in ortho.ks.chart.sample(rng, 3):
        r = nul.detect_nullity(ortho.ks, p)
        assert np.isclose(r.B, -0.25, atol=1e-9)
        S = mob.SolutionAt(ortho.ks.geometry(p, 2), sol)
        assert r.contains(S.Lam.value) and r.contains(S.JLam.value)


def test_mismatched_theta_has_no_nullity(mismatched, rng):
    for p in mismatched.ks.chart.sample(rng, 3):
        r = nul.detect_nullity(mismatched.ks, p)
        assert r.B is None and r.dim == 0
        assert not r.contains(np.ones(4))


def test_g_tensor_vanishes_on_model():
    rng = np.random.default_rng(0)
    Q = rng.normal(size=(4, 4))
    g = Q @ Q.T + 4 * np.eye(4)
    J = kh.standard_J(2)
    # make g J-invariant
    g = 0.5 * (g + J.T @ g @ J)
    Om = J @ g
    S = kh.fs_model(g, Om)
    assert np.abs(nul.g_tensor(3.0 * S, g, Om, 3.0)).max() < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_leading_B_reads_cubic_coefficient(c):
    assert nul.leading_B(c, 2) == pytest.approx(-c[0] / 4)


def test_leading_B_rejects_high_degree():
    with pytest.raises(GeometryError):
        nul.leading_B([1, 0, 0, 0, 0], 2)


def test_theta_criterion(ortho, mismatched):
    assert nul.theta_nullity_check(mismatched) == (False, None)
    ok, B = nul.theta_nullity_check(ortho)
    assert ok and B == pytest.approx(-0.25)
    ok, B = nul.theta_nullity_check(mt.orthotoric(mt.compact_orthotoric()))
    assert ok and B == pytest.approx(0.25)


def test_special_tractor_and_tanno_sign(ortho, rng):
    sol = mob.MobilitySolution(ortho.A)
    p = ortho.ks.chart.sample(rng, 1)[0]
    assert nul.special_tractor_residual(ortho.ks, sol, -0.25, p).max < 1e-9
    assert nul.special_tractor_residual(ortho.ks, sol, 0.25, p).max > 1e-2
    assert nul.tanno_residual(ortho.ks, lam_of(ortho), -0.25, p) < 1e-9
    assert nul.tanno_residual(ortho.ks, lam_of(ortho), 0.25, p) > 1e-2


def test_trace_fit_mu_matches_closed_form(ortho, rng):
    sol = mob.MobilitySolution(ortho.A)
    p = ortho.ks.chart.sample(rng, 1)[0]
    S = mob.SolutionAt(ortho.ks.geometry(p, 3), sol)
    mu = float(nul.mu_from_trace(S, -0.25).value)
    # mu = (a_0 + a_{-1} sigma_1) / 2 with Theta = t^3 - 3t^2 + 2t
    assert mu == pytest.approx((p[0] + p[1] - 3) / 2, abs=1e-10)


def test_tanno_nullity_equivalence(ortho, mismatched, rng):
    out = nul.tanno_nullity_equivalence(ortho.ks, lam_of(ortho), -0.25, ortho.ks.chart.sample(rng, 3))
    assert out["nullity_pass"] and out["tanno_pass"] and out["agree"]
    out = nul.tanno_nullity_equivalence(mismatched.ks, lam_of(mismatched), -0.25, mismatched.ks.chart.sample(rng, 3))
    assert not out["nullity_pass"] and not out["tanno_pass"] and out["agree"]


def test_criteria_crosscheck(ortho, rng):
    sol = mob.MobilitySolution(ortho.A)
    p = ortho.ks.chart.sample(rng, 1)[0]
    S = mob.SolutionAt(ortho.ks.geometry(p, 2), sol)
    out = nul.nullity_criteria_crosscheck(ortho.ks, S.Lam.value, p)
    assert out["member"] and out["agree"]
    assert out["mixed_B"] == pytest.approx(-0.25, abs=1e-8)


def test_identities_from_the_tractor_system(ortho, rng):
    sol = mob.MobilitySolution(ortho.A)
    p = ortho.ks.chart.sample(rng, 1)[0]
    assert nul.g_commutation_check(ortho.ks, sol, -0.25, p) < 1e-9
    assert nul.crucial_identity_residual(ortho.ks, sol, -0.25, p) < 1e-9
