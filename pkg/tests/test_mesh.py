import dataclasses
import math
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semflow.errors import GeometryError, ParseError
from semflow.mesh import (BoundarySpec, build_reference_basis, compute_geometric_factors,
                          compute_hmax, compute_wall_distance, face_node_indices,
                          load_plot3d_mesh,
                          mesh_from_vertices, mesh_summary, project_boundary_spline)
from semflow.meshgen import annulus_grid, box_grid, box_mesh, ogrid
from semflow.plot3d import read_plot3d, write_plot3d


# --------------------------------------------------------------------------
# reference basis
# --------------------------------------------------------------------------

def test_basis_n1_two_point_rule():
    b = build_reference_basis(1)
    np.testing.assert_allclose(b.nodes, [-1, 1], atol=1e-15)
    np.testing.assert_allclose(b.weights, [1, 1], atol=1e-15)


def test_basis_n2_weights():
    b = build_reference_basis(2)
    np.testing.assert_allclose(b.nodes, [-1, 0, 1], atol=1e-15)
    np.testing.assert_allclose(b.weights, [1 / 3, 4 / 3, 1 / 3], atol=1e-14)


def test_basis_matches_brute_force_roots():
    # interior GLL nodes are the roots of P_N'; weights 2 / (N (N+1) P_N(x)^2)
    for N in range(2, 13):
        b = build_reference_basis(N)
        dP = np.polynomial.legendre.Legendre.basis(N).deriv()
        inner = np.sort(dP.roots().real)
        np.testing.assert_allclose(b.nodes[1:-1], inner, atol=1e-13)
        PN = np.polynomial.legendre.Legendre.basis(N)(b.nodes)
        np.testing.assert_allclose(b.weights, 2 / (N * (N + 1) * PN ** 2), rtol=1e-12)


def test_derivative_of_cubic_exact():
    b = build_reference_basis(3)
    x = b.nodes
    np.testing.assert_allclose(b.deriv_matrix @ x ** 3, 3 * x ** 2, atol=1e-13)


@given(st.integers(1, 16))
def test_quadrature_exact_to_degree_2n_minus_1(N):
    b = build_reference_basis(N)
    for p in range(2 * N):
        exact = 0.0 if p % 2 else 2.0 / (p + 1)
        assert abs(b.weights @ b.nodes ** p - exact) < 1e-12


# --------------------------------------------------------------------------
# Plot3D import
# --------------------------------------------------------------------------

GRID_3X3 = """1
3 3
0.0 0.5 1.0
0.0 0.5 1.0
0.0 0.5 1.0
0.0 0.0 0.0
0.5 0.5 0.5
1.0 1.0 1.0
"""


def test_hand_written_3x3_block(tmp_path):
    p = tmp_path / "g.p3d"
    p.write_text(GRID_3X3)
    spec = BoundarySpec(faces={(1, s): "wall" for s in ("imin", "imax", "jmin", "jmax")})
    mesh = load_plot3d_mesh(p, spec, 4)
    assert mesh.n_elements == 4
    assert len(mesh.boundary_faces) == 8
    geom = compute_geometric_factors(mesh)
    assert abs(geom.area - 1.0) < 1e-13
    # each side is covered by two faces
    for side, coord in (("x", 0.0), ("x", 1.0), ("y", 0.0), ("y", 1.0)):
        hits = 0
        for bf in mesh.boundary_faces:
            pts = mesh.face_coordinates(bf.element, bf.face)
            k = 0 if side == "x" else 1
            hits += np.allclose(pts[:, k], coord)
        assert hits == 2


def test_truncated_file_is_parse_error(tmp_path):
    p = tmp_path / "bad.p3d"
    p.write_text("1\n3 3\n0 0.5 1 0 0.5\n")
    with pytest.raises(ParseError):
        read_plot3d(p)


def test_plot3d_round_trip(tmp_path, rng):
    X, Y = box_grid(3, 2)
    Y = Y + 0.01 * rng.standard_normal(Y.shape)
    write_plot3d(tmp_path / "a.p3d", [(X, Y), (X + 2, Y)])
    blocks = read_plot3d(tmp_path / "a.p3d")
    assert len(blocks) == 2
    np.testing.assert_array_equal(blocks[0].y, Y)
    np.testing.assert_array_equal(blocks[1].x, X + 2)


def test_ogrid_seam_fused_without_inflow(tmp_path):
    X, Y = annulus_grid(16, 3)
    write_plot3d(tmp_path / "o.p3d", [(X, Y)])
    spec = BoundarySpec(faces={(1, "jmin"): "wall", (1, "jmax"): "inflow_outflow"},
                        seams=[((1, "imin"), (1, "imax"))])
    mesh = load_plot3d_mesh(tmp_path / "o.p3d", spec, 4)
    assert mesh.n_elements == 48
    assert len(mesh.faces_with_tag("wall")) == 16
    assert len(mesh.faces_with_tag("inflow_outflow")) == 16
    assert len(mesh.boundary_faces) == 32
    # the seam shares global nodes: a closed annulus has (16 N) x (3 N + 1) nodes
    assert mesh.n_global == 16 * 4 * (3 * 4 + 1)


def test_inverted_cell_is_geometry_error(tmp_path):
    X, Y = box_grid(2, 2)
    X[1, 1], X[1, 2] = X[1, 2] + 0.5, X[1, 1]
    write_plot3d(tmp_path / "bow.p3d", [(X, Y)])
    with pytest.raises(GeometryError):
        load_plot3d_mesh(tmp_path / "bow.p3d", BoundarySpec(), 3)


# --------------------------------------------------------------------------
# geometric factors and h_max
# --------------------------------------------------------------------------

def _single(x0, x1, y0, y1, N):
    v = np.array([[[x0, y0], [x1, y0], [x1, y1], [x0, y1]]], dtype=float)
    tags = {(0, f): "wall" for f in range(4)}
    return mesh_from_vertices(v, N, tags)


def test_unit_square_jacobian():
    g = compute_geometric_factors(_single(0, 1, 0, 1, 5))
    np.testing.assert_allclose(g.jac, 0.25, atol=1e-15)
    assert abs(g.mass.sum() - 1.0) < 1e-14


def test_rectangle_jacobian_and_area():
    g = compute_geometric_factors(_single(0, 2, 0, 1, 5))
    np.testing.assert_allclose(g.jac, 0.5, atol=1e-15)
    assert abs(g.area - 2.0) < 1e-13


def test_bowtie_is_geometry_error():
    v = np.array([[[0, 0], [1, 1], [1, 0], [0, 1]]], dtype=float)
    with pytest.raises(GeometryError):
        mesh_from_vertices(v, 3, {})


def test_hmax_examples():
    assert abs(compute_hmax(_single(0, 1, 0, 1, 8))[0] - 1 / 8) < 1e-14
    assert abs(compute_hmax(_single(0, 3, 0, 1, 7))[0] - 3 / 7) < 1e-14


def test_hmax_quarter_circle_edge():
    # four elements bounded by quarter arcs of radius 1; wall points snapped to the circle
    N = 12
    mesh = project_boundary_spline(_circle_mesh(N, n=4), "wall")
    bf = mesh.faces_with_tag("wall")[0]
    b = build_reference_basis(N)
    ii, jj = face_node_indices(N, bf.face)
    e = bf.element
    mesh = dataclasses.replace(mesh, x=mesh.x.copy(), y=mesh.y.copy())
    r = np.hypot(mesh.x[e, ii, jj], mesh.y[e, ii, jj])
    mesh.x[e, ii, jj] /= r
    mesh.y[e, ii, jj] /= r
    dx = b.deriv_matrix @ mesh.x[e, ii, jj]
    dy = b.deriv_matrix @ mesh.y[e, ii, jj]
    assert abs(np.hypot(dx, dy) @ b.weights - math.pi / 2) < 1e-8


# --------------------------------------------------------------------------
# spline projection
# --------------------------------------------------------------------------

def _ring_mesh(X, Y, N, breaks=()):
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "ring.p3d"
        write_plot3d(path, [(X, Y)])
        spec = BoundarySpec(faces={(1, "jmin"): "wall", (1, "jmax"): "inflow_outflow"},
                            seams=[((1, "imin"), (1, "imax"))], spline_breaks=breaks)
        return load_plot3d_mesh(path, spec, N)


def _circle_mesh(N, n=16):
    return _ring_mesh(*annulus_grid(n, 2, r_in=1.0, r_out=2.0), N)


def test_circle_projection_radial_deviation():
    mesh = project_boundary_spline(_circle_mesh(7), "wall")
    r = []
    for bf in mesh.faces_with_tag("wall"):
        pts = mesh.face_coordinates(bf.element, bf.face)
        r.append(np.hypot(pts[:, 0], pts[:, 1]))
    assert np.max(np.abs(np.concatenate(r) - 1.0)) < 1e-4


def test_straight_boundary_unchanged():
    mesh = box_mesh(3, 2, 6, tags={"left": "outflow", "right": "outflow", "top": "outflow"})
    out = project_boundary_spline(mesh, "wall")
    np.testing.assert_allclose(out.x, mesh.x, atol=1e-13)
    np.testing.assert_allclose(out.y, mesh.y, atol=1e-13)


def test_spline_break_keeps_corner_and_segments():
    # wedge boundary: two straight segments meeting at (1, 0.5); a break there
    # keeps both segments straight and the corner fixed
    xs = np.linspace(0, 2, 9)
    X, Y = box_grid(8, 2, xs=xs, ys=np.linspace(0, 1, 3))
    yb = 0.5 * (1 - np.abs(X - 1))
    Y = yb + (2 - yb) * Y
    verts = np.array([[[X[j, i], Y[j, i]], [X[j, i + 1], Y[j, i + 1]],
                       [X[j + 1, i + 1], Y[j + 1, i + 1]], [X[j + 1, i], Y[j + 1, i]]]
                      for j in range(2) for i in range(8)])
    tags = {(i, 0): "wall" for i in range(8)}
    tags.update({(e, f): "outflow" for e, f in ((0, 3), (8, 3), (7, 1), (15, 1))})
    tags.update({(e, 2): "outflow" for e in range(8, 16)})
    mesh = mesh_from_vertices(verts, 5, tags)
    out = project_boundary_spline(mesh, "wall", breaks=((1.0, 0.5),))
    for bf in out.faces_with_tag("wall"):
        pts = out.face_coordinates(bf.element, bf.face)
        expect = 0.5 * (1 - np.abs(pts[:, 0] - 1))
        np.testing.assert_allclose(pts[:, 1], expect, atol=1e-12)
    corner = [out.face_coordinates(3, 0)[-1], out.face_coordinates(4, 0)[0]]
    np.testing.assert_allclose(corner, [[1.0, 0.5], [1.0, 0.5]], atol=1e-14)


def test_harmonic_smoothing_keeps_thin_wall_elements_valid():
    mesh = _ring_mesh(*ogrid(24, 8, radius=20.0, first_spacing=1e-4), 3)
    out = project_boundary_spline(mesh, "wall", breaks=((1.0, 0.0),), smoothing="harmonic")
    assert compute_geometric_factors(out).jac.min() > 0


# --------------------------------------------------------------------------
# wall distance
# --------------------------------------------------------------------------

def test_channel_wall_distance():
    mesh = box_mesh(3, 4, 5, 0, 3, 0, 2, tags={"left": "inflow_outflow",
                                                "right": "inflow_outflow"})
    d = compute_wall_distance(mesh)
    np.testing.assert_allclose(d, np.minimum(mesh.y, 2 - mesh.y), atol=1e-10)


def test_single_segment_point_distance():
    v = np.array([[[0, 0], [1, 0], [1, 1], [0, 1]]], dtype=float)
    mesh = mesh_from_vertices(v, 6, {(0, 0): "wall", (0, 1): "outflow", (0, 2): "outflow",
                                     (0, 3): "outflow"})
    d = compute_wall_distance(mesh)
    # any GLL point above the segment is at distance y
    np.testing.assert_allclose(d, mesh.y, atol=1e-12)


def test_curved_wall_distance_matches_dense_sampling():
    mesh = project_boundary_spline(_circle_mesh(5, n=12), "wall")
    d = compute_wall_distance(mesh)
    b = build_reference_basis(mesh.order)
    t = np.linspace(-1, 1, 10_000 // 12 + 2)
    interp = b.interpolation_matrix(t)
    dense = []
    for bf in mesh.faces_with_tag("wall"):
        pts = mesh.face_coordinates(bf.element, bf.face)
        dense.append(np.column_stack([interp @ pts[:, 0], interp @ pts[:, 1]]))
    dense = np.concatenate(dense)
    # exact distance to the densified polyline (chord error ~ h^2 / 8R ~ 5e-8)
    p0, p1 = dense[:-1], dense[1:]
    seg = p1 - p0
    pts = np.column_stack([mesh.x.ravel(), mesh.y.ravel()])
    brute = np.empty(len(pts))
    for k, q in enumerate(pts):
        w = np.clip(((q - p0) * seg).sum(1) / (seg * seg).sum(1), 0, 1)
        brute[k] = np.min(np.hypot(*(p0 + w[:, None] * seg - q).T))
    assert len(dense) >= 10_000
    assert np.max(np.abs(d.ravel() - brute)) < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.05, 2.0))
def test_wall_distance_translation_invariant(dx, dy):
    mesh = box_mesh(2, 2, 4, tags={"left": "outflow", "right": "outflow", "top": "outflow"})
    d0 = compute_wall_distance(mesh)
    moved = dataclasses.replace(mesh, x=mesh.x + dx, y=mesh.y + dy,
                                vertices=mesh.vertices + np.array([dx, dy]))
    np.testing.assert_allclose(compute_wall_distance(moved), d0, atol=1e-12)


def test_mesh_summary_fields():
    info = mesh_summary(box_mesh(2, 2, 3))
    assert info["elements"] == 4 and info["order"] == 3
    assert abs(info["area"] - 1.0) < 1e-13
