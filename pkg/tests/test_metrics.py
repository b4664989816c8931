import numpy as np
import pytest

from cprojlab import kahler as kh
from cprojlab import metrics as mt
from cprojlab import mobility as mob
from cprojlab.tensorcore import GeometryError


def test_flat_metric_has_zero_curvature(rng):
    ks = mt.flat_metric(2)
    geo = ks.geometry(ks.chart.sample(rng, 1)[0], 2)
    assert np.abs(geo.R.value).max() == 0


def test_orthotoric_eigenvalues_are_xi(ortho, rng):
    for p in ortho.ks.chart.sample(rng, 3):
        A = ortho.A(mob.ty.variables(p, 0)).value
        w = np.sort(np.linalg.eigvals(A).real)
        assert np.allclose(w, np.repeat(np.sort(p[:2]), 2), atol=1e-10)
        assert np.allclose(ortho.eigenvalues(p), p[:2])


def test_orthotoric_A_is_hermitian(ortho, rng):
    for p in ortho.ks.chart.sample(rng, 3):
        geo = ortho.ks.geometry(p, 0)
        A = ortho.A(geo.x).value
        gA = A @ geo.g.value
        assert np.allclose(gA, gA.T, atol=1e-10)
        assert np.allclose(A @ geo.J.value, geo.J.value @ A, atol=1e-10)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n=1, theta=((1, 0),), xi_ranges=((0, 1),)),
        dict(n=2, theta=((1, 0),), xi_ranges=((0, 1), (2, 3))),
        dict(n=2, theta=((1, 0), (1, 0)), xi_ranges=((0, 2), (1, 3))),
        dict(n=2, theta=((1, -1.5), (1, 0)), xi_ranges=((1, 2), (3, 4))),
    ],
)
def test_orthotoric_spec_rejects_bad_data(kwargs):
    with pytest.raises(GeometryError):
        mt.OrthotoricSpec(**kwargs)


def test_non_positive_orthotoric_rejected():
    # Theta > 0 on both intervals, but Delta_2 < 0 on the lower one
    spec = mt.OrthotoricSpec(2, ((1.0, 0.0, 1.0), (1.0, 0.0, 1.0)), ((2.0, 3.0), (0.0, 1.0)))
    with pytest.raises(GeometryError, match="positive definite"):
        mt.orthotoric(spec)


def test_compact_sibling_is_positive(rng):
    pg = mt.orthotoric(mt.compact_orthotoric())
    for p in pg.ks.chart.sample(rng, 20, frac=0.99):
        assert np.linalg.eigvalsh(pg.ks.geometry(p, 0).g.value).min() > 0


def test_product_blocks(rng):
    ks = mt.product_metric([mt.fubini_study(2), mt.flat_metric(2)], [1.0, 3.0])
    p = ks.chart.sample(rng, 1)[0]
    g = ks.geometry(p, 0).g.value
    assert np.allclose(g[4:, 4:], 3 * np.eye(4))
    assert np.allclose(g[:4, 4:], 0)
    with pytest.raises(GeometryError):
        mt.product_metric([mt.flat_metric(2)], [-1.0])
    A = mt.product_A([4, 4], [1.0, 2.0])
    assert np.allclose(np.diag(A), [1] * 4 + [2] * 4)


def test_reparametrize_identity_and_swap(ortho, rng):
    same = mt.reparametrize_pencil(ortho, 1, 0, 0, 1)
    swap = mt.reparametrize_pencil(ortho, 0, 1, 1, 0)
    sol = mob.MobilitySolution(swap.A)
    for p in ortho.ks.chart.sample(rng, 3):
        g0 = ortho.ks.geometry(p, 0).g.value
        assert np.allclose(same.ks.geometry(p, 0).g.value, g0, atol=1e-12)
        A = ortho.A(mob.ty.variables(p, 0)).value
        assert np.allclose(swap.A(mob.ty.variables(p, 0)).value, np.linalg.inv(A), atol=1e-10)
        assert mob.mobility_residual(swap.ks, sol, p) < 1e-8
    with pytest.raises(GeometryError):
        mt.reparametrize_pencil(ortho, 1, 2, 2, 4)


def test_reparametrized_metric_stays_kahler(ortho, rng):
    pg = mt.reparametrize_pencil(ortho, 1, 0, 1, 1.5)
    assert kh.validate_kahler(pg.ks, pg.ks.chart.sample(rng, 3))["max"] < 1e-8


def test_hessian_of_lambda_for_common_theta(ortho, rng):
    # Theta = a_{-1} t^3 + a_0 t^2 + ...; here a_{-1} = 1, a_0 = -3
    am1, a0 = 1.0, -3.0
    sol = mob.MobilitySolution(ortho.A)
    for p in ortho.ks.chart.sample(rng, 5):
        geo = ortho.ks.geometry(p, 3)
        S = mob.SolutionAt(geo, sol)
        g, gA = geo.g.value, S.A_low.value
        lhs = 2 * S.nablaLam.value @ g
        s1 = p[0] + p[1]
        assert np.allclose(lhs, -(a0 + am1 * s1) * g - am1 * gA, atol=1e-10)
        # the coefficients as usually printed (a_{-1} and a_0 swapped, opposite sign) do not fit
        assert not np.allclose(lhs, (am1 + a0 * s1) * g + am1 * gA, atol=1e-3)


@pytest.mark.parametrize("m", [(1, 0, 1, 1.5), (2, 1, 1, 3), (1, 0, 0, 2), (1, 0, 0.2, 1)])
def test_theta_transformation_law_matches_nullity(ortho, rng, m):
    from cprojlab import nullity as nul

    r = mt.reparametrize_pencil(ortho, *m)
    p = r.ks.chart.sample(rng, 1)[0]
    lead = mt.mobius_theta(ortho.spec.theta[0], *m)[0]
    assert abs(nul.detect_nullity(r.ks, p).B + lead / 4) < 1e-6


def test_mobius_theta_swap():
    assert np.allclose(mt.mobius_theta([1, -3, 2, 0], 0, 1, 1, 0), [0, -2, 3, -1])
