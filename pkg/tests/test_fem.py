"""Quadrature, mappings, and field evaluation on the reference machinery."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from egflow.fem import (
    FemSpace,
    REF_VERTICES,
    gauss1d,
    q1_gradients,
    q1_values,
    quadrature_rule,
)
from egflow.mesh import build_trapezoid_mesh, build_uniform_quad_mesh


def monomial_integral(i):
    """Integral of x^i over [-1, 1]."""
    return 0.0 if i % 2 else 2.0 / (i + 1)


@pytest.mark.parametrize("degree", range(1, 14))
def test_gauss1d_exactness(degree):
    x, w = gauss1d(degree)
    for i in range(degree + 1):
        assert np.isclose(np.sum(w * x**i), monomial_integral(i), atol=1e-13)


def test_gauss1d_rejects_out_of_range():
    with pytest.raises(ValueError):
        gauss1d(0)
    with pytest.raises(ValueError):
        gauss1d(14)


def test_cell_rule_exactness():
    pts, w = quadrature_rule("cell", 7)
    for i in range(8):
        for j in range(8):
            exact = monomial_integral(i) * monomial_integral(j)
            got = np.sum(w * pts[:, 0] ** i * pts[:, 1] ** j)
            assert np.isclose(got, exact, atol=1e-12)


def test_quadrature_rule_kind():
    with pytest.raises(ValueError):
        quadrature_rule("face", 3)


def test_q1_kronecker_and_partition():
    vals = q1_values(REF_VERTICES)
    assert np.allclose(vals, np.eye(4), atol=1e-15)
    pts = np.random.default_rng(0).uniform(-1, 1, size=(20, 2))
    assert np.allclose(q1_values(pts).sum(axis=1), 1.0)
    assert np.allclose(q1_gradients(pts).sum(axis=1), 0.0, atol=1e-15)


def test_q1_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.9, 0.9, size=(10, 2))
    delta = 1e-6
    grad = q1_gradients(pts)
    for axis in range(2):
        step = np.zeros(2)
        step[axis] = delta
        fd = (q1_values(pts + step) - q1_values(pts - step)) / (2 * delta)
        assert np.allclose(grad[..., axis], fd, atol=1e-9)


@pytest.fixture(scope="module")
def space():
    return FemSpace(build_trapezoid_mesh(4, 4, distortion=0.3))


def test_dof_counts(space):
    mesh = space.mesh
    assert space.n_u == 2 * mesh.n_vertices + mesh.n_cells
    assert space.n_p == mesh.n_cells
    assert space.n_theta == mesh.n_vertices
    assert space.cell_udofs.shape == (mesh.n_cells, 9)
    assert np.array_equal(space.cell_udofs[:, 8],
                          2 * mesh.n_vertices + np.arange(mesh.n_cells))


def test_jacobians_positive_and_area(space):
    assert np.all(space.detJ > 0.0)
    areas = np.sum(space.wdet, axis=1)
    assert np.allclose(areas, space.mesh.cell_areas())


def test_map_round_trip(space):
    rng = np.random.default_rng(2)
    ref = rng.uniform(-1, 1, size=(6, 2))
    for cell in (0, 5, space.mesh.n_cells - 1):
        x, _, _ = space.map_to_physical(cell, ref)
        back = space.inverse_map(cell, x)
        assert np.allclose(back, ref, atol=1e-11)


def test_inverse_map_rejects_unreachable_points():
    from egflow.mesh import Mesh

    verts = np.array([[0.0, 0.0], [1.0, 0.1], [0.9, 1.2], [-0.1, 0.8]])
    one = FemSpace(Mesh(verts, np.array([[0, 1, 2, 3]])))
    with pytest.raises(ValueError):
        one.inverse_map(0, np.array([[-2.6, -36.0]]))


def test_linear_velocity_is_reproduced(space):
    def exact(pts, t):
        return np.stack([1.0 + 2.0 * pts[:, 0] - pts[:, 1],
                         0.5 * pts[:, 0] + pts[:, 1]], axis=1)

    u = space.interpolate_velocity(exact, t=0.0)
    assert space.velocity_l2_error(u, exact) < 1e-13
    uq = space.velocity_at_quadrature(u)
    ue = exact(space.xq.reshape(-1, 2), 0.0).reshape(uq.shape)
    assert np.allclose(uq, ue, atol=1e-13)


def test_velocity_norm_oracle():
    space = FemSpace(build_uniform_quad_mesh(8, 8))

    def shear(pts, t):
        return np.stack([pts[:, 1], np.zeros(len(pts))], axis=1)

    u = space.interpolate_velocity(shear)
    assert np.isclose(space.velocity_l2_norm(u), 1.0 / np.sqrt(3.0), atol=1e-13)


def test_enrichment_evaluation(space):
    mesh = space.mesh
    cell = 7
    u = np.zeros(space.n_u)
    u[2 * mesh.n_vertices + cell] = 1.5

    centroid = mesh.cell_centroids[cell]
    assert np.allclose(space.evaluate_velocity(u, cell, centroid), 0.0,
                       atol=1e-13)
    probe = centroid + np.array([0.01, -0.02])
    assert np.allclose(space.evaluate_velocity(u, cell, probe),
                       1.5 * (probe - centroid), atol=1e-12)
    uq = space.velocity_at_quadrature(u)
    assert np.allclose(uq[cell], 1.5 * (space.xq[cell] - centroid))
    other = [c for c in range(mesh.n_cells) if c != cell]
    assert np.allclose(uq[other], 0.0)


def test_temperature_fields(space):
    theta = space.mesh.vertices[:, 0] + 2.0 * space.mesh.vertices[:, 1]
    grad = space.temperature_gradient_at_quadrature(theta)
    assert np.allclose(grad[..., 0], 1.0, atol=1e-12)
    assert np.allclose(grad[..., 1], 2.0, atol=1e-12)

    def exact(pts, t):
        return pts[:, 0] + 2.0 * pts[:, 1]

    assert space.temperature_l2_error(theta, exact) < 1e-13
    assert np.isclose(space.evaluate_temperature(theta, 3, space.mesh.cell_centroids[3]),
                      exact(space.mesh.cell_centroids[3:4], 0.0)[0], atol=1e-12)


def test_pressure_error_oracle(space):
    p = np.full(space.n_p, 2.5)
    assert space.pressure_l2_error(p, lambda pts: np.full(len(pts), 2.5)) < 1e-14
    assert np.isclose(space.pressure_l2_error(p, lambda pts: np.zeros(len(pts))),
                      2.5, atol=1e-13)


def test_cg_trace_continuity(space):
    def linear(pts, t):
        return np.stack([pts[:, 0] - 2 * pts[:, 1], pts[:, 1]], axis=1)

    u = space.interpolate_velocity(linear)
    plus = space.velocity_edge_trace(u, 0)
    minus = space.velocity_edge_trace(u, 1)
    interior = space.mesh.interior_edges
    assert np.allclose(plus[interior], minus[interior], atol=1e-13)
    exact = linear(space.exq.reshape(-1, 2), 0.0).reshape(plus.shape)
    assert np.allclose(plus[interior], exact[interior], atol=1e-13)
    boundary = space.mesh.boundary_edges
    assert np.allclose(minus[boundary], 0.0)


def test_enrichment_trace_is_one_sided(space):
    mesh = space.mesh
    e = mesh.interior_edges[0]
    plus_cell, minus_cell = mesh.edge_cells[e]
    u = np.zeros(space.n_u)
    u[2 * mesh.n_vertices + plus_cell] = 1.0
    plus = space.velocity_edge_trace(u, 0)[e]
    minus = space.velocity_edge_trace(u, 1)[e]
    expect = space.exq[e] - mesh.cell_centroids[plus_cell]
    assert np.allclose(plus, expect, atol=1e-13)
    assert np.allclose(minus, 0.0)


@settings(max_examples=25, deadline=None)
@given(
    xi=st.floats(-0.999, 0.999),
    eta=st.floats(-0.999, 0.999),
    cell=st.integers(0, 15),
)
def test_inverse_map_property(space, xi, eta, cell):
    x, _, _ = space.map_to_physical(cell, np.array([[xi, eta]]))
    ref = space.inverse_map(cell, x)
    assert np.allclose(ref, [xi, eta], atol=1e-10)
