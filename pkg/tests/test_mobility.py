import numpy as np
import pytest

from cprojlab import dynamics as dyn
from cprojlab import metrics as mt
from cprojlab import mobility as mob
from cprojlab import taylor as ty
from cprojlab.tensorcore import GeometryError


def test_constant_solutions_on_flat_space(rng):
    ks = mt.flat_metric(2)
    H = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    H = H + H.conj().T
    # real form of a Hermitian matrix commutes with the standard J
    M = np.block([[H.real, -H.imag], [H.imag, H.real]])
    sol = mob.MobilitySolution.constant(M)
    p = ks.chart.sample(rng, 1)[0]
    assert mob.mobility_residual(ks, sol, p) < 1e-12


def test_identity_solves_mobility_everywhere(fs2, ortho, rng):
    for ks in (fs2, ortho.ks):
        sol = mob.MobilitySolution.identity(4)
        for p in ks.chart.sample(rng, 3):
            assert mob.mobility_residual(ks, sol, p) < 1e-10


def test_broken_solution_is_detected(ortho, rng):
    bad = mob.MobilitySolution(lambda x: ortho.A(x) + ty.constant(np.diag([0.3, 0, 0, 0]), x[0].b))
    p = ortho.ks.chart.sample(rng, 1)[0]
    assert mob.mobility_residual(ortho.ks, bad, p) > 1e-3


def test_solution_from_metric_pair_recovers_pencil(ortho, rng):
    other = mt.reparametrize_pencil(ortho, 0, 1, 1, 0)
    sol = mob.solution_from_metric_pair(ortho.ks, other.ks.metric)
    for p in ortho.ks.chart.sample(rng, 3):
        assert mob.mobility_residual(ortho.ks, sol, p) < 1e-8
        x = ty.variables(p, 0)
        # the swapped metric is the one attached to eta_tilde = A g^{-1}
        assert np.allclose(sol.A(x).value, ortho.A(x).value, atol=1e-9)


def test_metrisability_of_eta_and_eta_tilde(ortho, rng):
    p = ortho.ks.chart.sample(rng, 1)[0]
    res, _ = mob.metrisability_residual(ortho.ks, lambda x: ty.inv(ortho.ks.metric(x)), p)
    assert res < 1e-9
    res, _ = mob.metrisability_residual(ortho.ks, lambda x: ty.einsum("ab,bc->ac", ty.inv(ortho.ks.metric(x)), ortho.A(x)), p)
    assert res < 1e-9


def test_pencil_potentials_recursion(ortho, rng):
    sol = mob.MobilitySolution(ortho.A)
    data = mob.pencil_potentials(ortho.ks, sol, ortho.ks.chart.sample(rng, 1)[0])
    assert data.recursion_residual < 1e-9
    # sigma_1, sigma_2 are elementary symmetric functions of the eigenvalues


def test_complex_elementary_and_adjugate(rng):
    vals = np.array([1.5, -0.5])
    M = np.diag(np.repeat(vals, 2))
    e = mob.complex_elementary(M, 2)
    assert np.allclose([float(np.asarray(v)) for v in e], [1.0, vals.sum(), vals.prod()])
    t = 0.7
    adj = mob.adjugate_complex(M - t * np.eye(4), 2)
    assert np.allclose(adj @ (M - t * np.eye(4)), mob.det_pencil(e, t) * np.eye(4))


def test_killing_objects_from_the_pencil(ortho, rng):
    tv = dyn.default_t_grid(ortho, ortho.ks.chart.sample(rng, 20))
    p = ortho.ks.chart.sample(rng, 1)[0]
    for t in tv[:2]:
        assert mob.holomorphic_killing_residual(ortho.ks, dyn.killing_field(ortho, t), p) < 1e-9


def test_killing_residual_detects_non_killing(fs2, rng):
    p = fs2.chart.sample(rng, 1)[0]
    X = lambda x: ty.stack([x[0] * x[0], x[1], x[2], x[3]])
    assert mob.holomorphic_killing_residual(fs2, X, p) > 1e-3


def test_mobility_bound_sample_requirement(fs2, rng):
    with pytest.raises(GeometryError):
        mob.mobility_upper_bound(fs2, fs2.chart.sample(rng, 5))


def test_mobility_bound_generic_metric(mismatched, rng):
    bound = mob.mobility_upper_bound(mismatched.ks, mismatched.ks.chart.sample(rng, 20))
    assert 2 <= bound < 9


def test_prolongation_transport_closes_on_flat_space():
    ks = mt.fubini_study(2)
    geo = ks.geometry(np.zeros(4), 4)
    start = mob.lift_solution(geo, mob.SolutionAt(geo, mob.MobilitySolution.identity(4)))
    loop = mob.square_loop(np.zeros(4), 0.2)
    end = mob.prolongation_transport(ks, start, loop)
    assert np.allclose(end.to_vector(), start.to_vector(), atol=1e-6)


def test_generalized_einstein(fs2, mismatched, rng):
    ok, k = mob.generalized_einstein_check(fs2, fs2.chart.sample(rng, 3))
    assert ok and np.isclose(k, 6.0)
    assert mob.generalized_einstein_check(mt.flat_metric(2), np.zeros((2, 4))) == (True, 0.0)
    # Theta_j differing by a constant still gives a Kähler-Einstein metric
    ok, k = mob.generalized_einstein_check(mismatched.ks, mismatched.ks.chart.sample(rng, 3))
    assert ok and np.isclose(k, -1.5)
    generic = mt.orthotoric(mt.OrthotoricSpec(2, ((1, -3, 2, 0), (1, -3.2, 2, 0)), ((2, 3), (1, 2))))
    assert not mob.generalized_einstein_check(generic.ks, generic.ks.chart.sample(rng, 3))[0]


def test_regularity():
    assert mob.is_regular([0.0, 1.0], [np.ones(2), np.ones(2)])
    assert not mob.is_regular([0.0, 0.0], [np.ones(2), np.ones(2)])


def test_killing_fields_are_cprojective(rng):
    generic = mt.orthotoric(mt.OrthotoricSpec(2, ((1, -3, 2, 0), (1, -3.2, 2, 0)), ((2, 3), (1, 2))))
    X = dyn.killing_field(generic, -1.0)
    p = generic.ks.chart.sample(rng, 1)[0]
    r1, r2 = mob.cproj_vector_field_residual(generic.ks, X, p)
    assert r1 < 1e-10 and r2 < 1e-9
    # flipping the harmonic-curvature term breaks the identity where H != 0
    assert mob.cproj_vector_field_residual(generic.ks, X, p, h_sign=-1.0)[1] > 1e-3


def test_projective_vector_fields_of_cp2(fs2, rng):
    # z -> z / (1 - s z_1) generates the holomorphic field z_1 (z_1, z_2); real coordinates are (x1, y1, x2, y2)
    def X(x):
        x1, y1, x2, y2 = x
        return ty.stack([x1 * x1 - y1 * y1, x1 * y1 * 2.0, x1 * x2 - y1 * y2, x1 * y2 + y1 * x2])

    p = fs2.chart.sample(rng, 1)[0] * 0.5
    r1, r2 = mob.cproj_vector_field_residual(fs2, X, p)
    assert r1 < 1e-9 and r2 < 1e-7
    # a holomorphic but non-projective field fails the second equation
    Y = lambda x: ty.stack([x[0] ** 3 - x[1] * x[1] * x[0] * 3.0, x[0] * x[0] * x[1] * 3.0 - x[1] ** 3, x[2] * 0, x[2] * 0])
    assert mob.cproj_vector_field_residual(fs2, Y, p)[1] > 1e-3
