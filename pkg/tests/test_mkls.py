import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sphtransport.errors import ConditioningError, DomainError, StencilError
from sphtransport.geometry import Neighborhood, cap_neighbors, generate_phyllotaxis, spherical_to_cartesian
from sphtransport.harmonics import eval_basis, eval_surface_gradient_basis, tangent_frame
from sphtransport.mkls import (
    CHORDAL,
    GEODESIC,
    gaussian_correlation,
    mkls_advection_row,
    mkls_gradient_shape_functions,
    mkls_shape_functions,
)

from .conftest import random_unit
from .test_gmls import angular_derivatives, nbhd_at

M = 3


def c_of(ps):
    return 20.0 / ps.fill_distance_h


def test_gaussian_correlation():
    assert gaussian_correlation(0.0, 3.0) == 1.0
    assert gaussian_correlation(1.0, 1.0) == pytest.approx(np.exp(-1))
    d = np.linspace(0, 2, 9)
    assert np.all((gaussian_correlation(d, 2.0) > 0) & (gaussian_correlation(d, 2.0) <= 1))
    with pytest.raises(DomainError):
        gaussian_correlation(0.5, 0.0)


def dense_oracle(ps, x, nb, m, c):
    """Direct evaluation of the kriging shape functions with explicit inverses
    in the global harmonic basis (chordal distance)."""
    nodes = ps.xyz[nb.indices]
    D2 = np.sum((nodes[:, None, :] - nodes[None, :, :]) ** 2, axis=-1)
    R = np.exp(-c * D2)
    r = np.exp(-c * np.sum((nodes - x) ** 2, axis=1))
    P = eval_basis(nodes, m)
    Ri = np.linalg.inv(R)
    B = np.linalg.solve(P.T @ Ri @ P, P.T @ Ri)
    return eval_basis(x, m) @ B + r @ Ri @ (np.eye(len(nodes)) - P @ B)


def test_matches_dense_oracle(rng, ps400):
    # wide caps and a moderate c keep the explicit inverses accurate
    delta, m, c = 0.8, 2, 30.0
    for x in random_unit(rng, 5):
        nb = nbhd_at(ps400, x, delta)
        np.testing.assert_allclose(mkls_shape_functions(x, nb, ps400, m, c), dense_oracle(ps400, x, nb, m, c), atol=1e-8)


def test_kronecker_delta_at_all_stencil_nodes(rng, ps1600):
    delta = 12 * ps1600.fill_distance_h
    c = c_of(ps1600)
    worst = 0.0
    for i in rng.choice(len(ps1600), 100, replace=False):
        nb = cap_neighbors(ps1600, i, delta)
        for k, j in enumerate(nb.indices):
            a = mkls_shape_functions(ps1600.xyz[j], nb, ps1600, M, c)
            e = np.zeros(len(nb))
            e[k] = 1.0
            worst = max(worst, np.max(np.abs(a - e)))
    assert worst < 1e-8


def test_partition_of_unity_and_reproduction(rng, ps1600):
    delta = 12 * ps1600.fill_distance_h
    c = c_of(ps1600)
    for x in random_unit(rng, 30):
        nb = nbhd_at(ps1600, x, delta)
        a = mkls_shape_functions(x, nb, ps1600, M, c)
        assert abs(a.sum() - 1) < 1e-8
        Yn = eval_basis(ps1600.xyz[nb.indices], M)
        np.testing.assert_allclose(a @ Yn, eval_basis(x, M), atol=1e-7)
        ga = mkls_gradient_shape_functions(x, nb, ps1600, M, c)
        np.testing.assert_allclose(ga.sum(axis=1), 0.0, atol=1e-8)
        np.testing.assert_allclose(ga @ Yn, eval_surface_gradient_basis(x, M), atol=1e-6)


def test_advection_row_degree_one(rng, ps1600):
    delta = 12 * ps1600.fill_distance_h
    c = c_of(ps1600)
    for _ in range(20):
        lam, theta = rng.uniform(-np.pi, np.pi), rng.uniform(-1.3, 1.3)
        x = spherical_to_cartesian(lam, theta)
        nb = nbhd_at(ps1600, x, delta)
        row = mkls_advection_row(x, nb, ps1600, M, c)
        assert abs(row.g_lambda.sum()) < 1e-8 and abs(row.g_theta.sum()) < 1e-8
        for j in (1, 2, 3):
            u = eval_basis(ps1600.xyz[nb.indices], 1)[:, j]
            dl, dt = angular_derivatives(lambda p: eval_basis(p, 1)[j], lam, theta)
            assert row.g_lambda @ u == pytest.approx(dl, abs=1e-5)
            assert row.g_theta @ u == pytest.approx(dt, abs=1e-5)


@pytest.mark.parametrize("kind", [CHORDAL, GEODESIC])
def test_gradient_matches_finite_difference(rng, ps1600, kind):
    """The stencil is frozen, so differentiate sum_j a_j(x) u_j along a tangent."""
    delta = 12 * ps1600.fill_distance_h
    c = c_of(ps1600)
    for x in random_unit(rng, 5):
        nb = nbhd_at(ps1600, x, delta)
        u = rng.normal(size=len(nb))
        g = mkls_gradient_shape_functions(x, nb, ps1600, M, c, kind) @ u
        for t in tangent_frame(x):
            s = 1e-5
            xp, xm = np.cos(s) * x + np.sin(s) * t, np.cos(s) * x - np.sin(s) * t
            fd = (mkls_shape_functions(xp, nb, ps1600, M, c, kind) @ u - mkls_shape_functions(xm, nb, ps1600, M, c, kind) @ u) / (2 * s)
            assert t @ g == pytest.approx(fd, abs=1e-5 * max(1.0, abs(fd)))


def test_shape_functions_vary_smoothly(rng, ps1600):
    delta = 12 * ps1600.fill_distance_h
    c = c_of(ps1600)
    x = random_unit(rng, 1)[0]
    nb = nbhd_at(ps1600, x, delta)
    t = tangent_frame(x)[0]
    y = np.cos(1e-7) * x + np.sin(1e-7) * t
    diff = mkls_shape_functions(y, nb, ps1600, M, c) - mkls_shape_functions(x, nb, ps1600, M, c)
    assert np.max(np.abs(diff)) <= 1e-4


def test_chordal_and_geodesic_nearly_agree(rng, ps1600):
    delta = 12 * ps1600.fill_distance_h
    c = c_of(ps1600)
    x = random_unit(rng, 1)[0]
    nb = nbhd_at(ps1600, x, delta)
    a1 = mkls_shape_functions(x, nb, ps1600, M, c, CHORDAL)
    a2 = mkls_shape_functions(x, nb, ps1600, M, c, GEODESIC)
    assert np.max(np.abs(a1 - a2)) < 0.1
    with pytest.raises(DomainError):
        mkls_shape_functions(x, nb, ps1600, M, c, "manhattan")


@given(st.integers(0, 399))
def test_rows_at_nodes_are_identity_rows(i):
    ps = generate_phyllotaxis(400)
    nb = cap_neighbors(ps, i, 12 * ps.fill_distance_h)
    row = mkls_advection_row(ps.xyz[i], nb, ps, M, c_of(ps))
    k = int(np.flatnonzero(nb.indices == i)[0])
    e = np.zeros(len(nb))
    e[k] = 1.0
    np.testing.assert_allclose(row.a, e, atol=1e-8)
    assert np.all(np.isfinite(row.g_lambda)) and np.all(np.isfinite(row.g_theta))


def test_pole_rows_finite(ps1600):
    delta = 12 * ps1600.fill_distance_h
    for z in (1.0, -1.0):
        x = np.array([0.0, 0.0, z])
        row = mkls_advection_row(x, nbhd_at(ps1600, x, delta), ps1600, M, c_of(ps1600))
        assert all(np.all(np.isfinite(v)) for v in (row.a, row.g_lambda, row.g_theta))


def test_ill_conditioned_correlation_is_reported(ps1600):
    delta = 12 * ps1600.fill_distance_h
    nb = cap_neighbors(ps1600, 10, delta)
    with pytest.raises(ConditioningError, match="larger c"):
        mkls_shape_functions(ps1600.xyz[10], nb, ps1600, M, 1.0)


def test_stencil_and_parameter_errors(ps400):
    nb = Neighborhood(3, np.array([3, 4]), 0.1)
    with pytest.raises(StencilError):
        mkls_shape_functions(ps400.xyz[3], nb, ps400, M, 400.0)
    with pytest.raises(DomainError):
        mkls_shape_functions(ps400.xyz[3], nb, ps400, M, -1.0)
