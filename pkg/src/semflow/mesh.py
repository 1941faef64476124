"""Reference GLL bases, curvilinear quadrilateral spectral-element meshes, and
the geometric data (metrics, wall distance, element scales) derived from them.

Element-local arrays use the layout ``(E, N+1, N+1)`` with the second axis
running along the first reference coordinate ``r`` and the third along ``s``.
Element vertices are stored counter-clockwise starting at ``(r, s) = (-1, -1)``;
face ``f`` joins vertex ``f`` to vertex ``f + 1`` so the faces are, in order,
``s = -1``, ``r = +1``, ``s = +1`` and ``r = -1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import NamedTuple

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.interpolate import CubicSpline
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import ConfigurationError, GeometryError, ParameterError, SplineError
from .plot3d import read_plot3d

BOUNDARY_TAGS = ("wall", "inflow_outflow", "symmetry", "periodic", "dirichlet", "outflow")
BLOCK_SIDES = ("imin", "imax", "jmin", "jmax")


# --------------------------------------------------------------------------
# reference element
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReferenceBasis:
    """GLL nodes, quadrature weights and nodal differentiation matrix."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray
    deriv_matrix: np.ndarray

    @property
    def nq(self):
        return self.order + 1

    @cached_property
    def vandermonde(self):
        """``V[i, k] = P_k(x_i)``: maps Legendre coefficients to nodal values."""
        return npleg.legvander(self.nodes, self.order)

    @cached_property
    def inverse_vandermonde(self):
        return np.linalg.inv(self.vandermonde)

    @cached_property
    def barycentric_weights(self):
        x = self.nodes
        diff = x[:, None] - x[None, :]
        np.fill_diagonal(diff, 1.0)
        return 1.0 / diff.prod(axis=1)

    def interpolation_matrix(self, points):
        """Lagrange interpolation matrix from the GLL nodes to ``points``."""
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        x = self.nodes
        lam = self.barycentric_weights
        diff = pts[:, None] - x[None, :]
        exact = np.isclose(diff, 0.0, rtol=0.0, atol=1e-15)
        diff[exact] = 1.0
        terms = lam[None, :] / diff
        mat = terms / terms.sum(axis=1, keepdims=True)
        rows = exact.any(axis=1)
        mat[rows] = exact[rows].astype(float)
        return mat


def _legendre(n, x):
    c = np.zeros(n + 1)
    c[n] = 1.0
    return npleg.legval(x, c)


def build_reference_basis(N):
    """Gauss-Lobatto-Legendre basis of polynomial order ``N`` (1 <= N <= 16)."""
    if not isinstance(N, (int, np.integer)) or not 1 <= N <= 16:
        raise ParameterError(f"polynomial order must be an integer in [1, 16], got {N!r}")
    N = int(N)
    if N == 1:
        nodes = np.array([-1.0, 1.0])
    else:
        coef = np.zeros(N + 1)
        coef[N] = 1.0
        dcoef = npleg.legder(coef)
        interior = np.sort(npleg.legroots(dcoef).real)
        # Newton polish on P'_N
        d2coef = npleg.legder(dcoef)
        for _ in range(3):
            interior = interior - npleg.legval(interior, dcoef) / npleg.legval(interior, d2coef)
        interior = 0.5 * (interior - interior[::-1])  # enforce symmetry
        nodes = np.concatenate(([-1.0], interior, [1.0]))
    pn = _legendre(N, nodes)
    weights = 2.0 / (N * (N + 1) * pn**2)

    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (pn[:, None] / pn[None, :]) / diff
    np.fill_diagonal(D, 0.0)
    # negative-sum trick: exact null space for constants
    np.fill_diagonal(D, -D.sum(axis=1))
    for arr in (nodes, weights, D):
        arr.setflags(write=False)
    return ReferenceBasis(N, nodes, weights, D)


def face_node_indices(N, face):
    """Local ``(i, j)`` index arrays of a face, ordered from vertex ``face`` to ``face+1``."""
    k = np.arange(N + 1)
    if face == 0:
        return k, np.zeros_like(k)
    if face == 1:
        return np.full_like(k, N), k
    if face == 2:
        return k[::-1], np.full_like(k, N)
    if face == 3:
        return np.zeros_like(k), k[::-1]
    raise ValueError(f"face index {face} out of range")


def vertex_node_index(N, vertex):
    return ((0, 0), (N, 0), (N, N), (0, N))[vertex]


# --------------------------------------------------------------------------
# mesh container
# --------------------------------------------------------------------------

class BoundaryFace(NamedTuple):
    element: int
    face: int
    tag: str


@dataclass(frozen=True, eq=False)
class SpectralMesh:
    """Conforming quadrilateral spectral-element mesh with GLL point clouds."""

    vertices: np.ndarray        # (E, 4, 2)
    order: int
    x: np.ndarray               # (E, N+1, N+1)
    y: np.ndarray
    global_ids: np.ndarray      # (E, N+1, N+1) int
    n_global: int
    boundary_faces: tuple = ()
    chord: float = 1.0
    curved_tags: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def n_elements(self):
        return self.vertices.shape[0]

    @property
    def nq(self):
        return self.order + 1

    def faces_with_tag(self, *tags):
        return [bf for bf in self.boundary_faces if bf.tag in tags]

    @property
    def tags(self):
        return sorted({bf.tag for bf in self.boundary_faces})

    def face_coordinates(self, element, face):
        ii, jj = face_node_indices(self.order, face)
        return np.column_stack([self.x[element, ii, jj], self.y[element, ii, jj]])

    def face_global_ids(self, element, face):
        ii, jj = face_node_indices(self.order, face)
        return self.global_ids[element, ii, jj]

    def boundary_node_mask(self, *tags):
        """Boolean mask over global nodes lying on faces with any of ``tags``."""
        mask = np.zeros(self.n_global, dtype=bool)
        for bf in self.faces_with_tag(*tags):
            mask[self.face_global_ids(bf.element, bf.face)] = True
        return mask

    def valence(self):
        return np.bincount(self.global_ids.ravel(), minlength=self.n_global)


def _bilinear_fill(vertices, nodes):
    r = nodes[:, None]
    s = nodes[None, :]
    shape = ((1 - r) * (1 - s) / 4, (1 + r) * (1 - s) / 4,
             (1 + r) * (1 + s) / 4, (1 - r) * (1 + s) / 4)
    x = sum(vertices[:, k, 0, None, None] * shape[k] for k in range(4))
    y = sum(vertices[:, k, 1, None, None] * shape[k] for k in range(4))
    return x, y


def _corner_jacobians(vertices):
    """Cross products at the four corners; all positive for a valid CCW quad."""
    v = vertices
    nxt = np.roll(v, -1, axis=1)
    prv = np.roll(v, 1, axis=1)
    a = nxt - v
    b = prv - v
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _number_nodes(x, y, links, tol):
    pts = np.column_stack([x.ravel(), y.ravel()])
    n = pts.shape[0]
    tree = cKDTree(pts)
    edges = [tree.query_pairs(tol, output_type="ndarray")]
    for idx_a, idx_b, shift in links:
        tb = cKDTree(pts[idx_b])
        dist, j = tb.query(pts[idx_a] + shift)
        if np.any(dist > tol):
            raise GeometryError("periodic/seam faces do not match point-for-point")
        edges.append(np.column_stack([idx_a, idx_b[j]]))
    e = np.vstack(edges) if edges else np.zeros((0, 2), dtype=int)
    graph = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    ncomp, labels = connected_components(graph, directed=False)
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty(ncomp, dtype=np.int64)
    remap[order] = np.arange(ncomp)
    return remap[labels].reshape(x.shape), ncomp


def mesh_from_vertices(vertices, order, face_tags=None, periodic_pairs=(), chord=1.0,
                       meta=None):
    """Build a linear-geometry mesh from element vertex quadruples.

    Parameters
    ----------
    vertices : (E, 4, 2) array
        Counter-clockwise element vertices.
    order : int
        Polynomial order ``N``.
    face_tags : dict
        ``(element, face) -> tag`` for every boundary face.
    periodic_pairs : sequence of (faces_a, faces_b)
        Face lists identified with each other up to a rigid translation
        (zero translation for O-grid wrap seams).
    """
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim != 3 or vertices.shape[1:] != (4, 2):
        raise ParameterError("vertices must have shape (E, 4, 2)")
    face_tags = dict(face_tags or {})
    corner = _corner_jacobians(vertices)
    bad = np.flatnonzero((corner <= 0).any(axis=1))
    if bad.size:
        raise GeometryError(f"element {bad[0]} is degenerate or not counter-clockwise",
                            element=int(bad[0]))
    basis = build_reference_basis(order)
    x, y = _bilinear_fill(vertices, basis.nodes)
    N = order
    nq = N + 1
    edge_len = np.linalg.norm(np.roll(vertices, -1, axis=1) - vertices, axis=2)
    tol = 1e-7 * edge_len.min() / N

    def flat_face_idx(faces):
        out = []
        for e, f in faces:
            ii, jj = face_node_indices(N, f)
            out.append(e * nq * nq + ii * nq + jj)
        return np.concatenate(out) if out else np.zeros(0, dtype=int)

    links = []
    for faces_a, faces_b in periodic_pairs:
        ia, ib = flat_face_idx(faces_a), flat_face_idx(faces_b)
        pa = np.column_stack([x.ravel()[ia], y.ravel()[ia]])
        pb = np.column_stack([x.ravel()[ib], y.ravel()[ib]])
        shift = pb.mean(axis=0) - pa.mean(axis=0)
        if np.linalg.norm(shift) < tol:
            continue  # wrap seam: coincident points are merged anyway
        links.append((ia, ib, shift))
    ids, ng = _number_nodes(x, y, links, tol)

    counts = {}
    for e in range(vertices.shape[0]):
        for f in range(4):
            ii, jj = face_node_indices(N, f)
            key = tuple(sorted(ids[e, ii, jj].tolist()))
            counts.setdefault(key, []).append((e, f))
    boundary = []
    interior_faces = set()
    for key, owners in counts.items():
        if len(owners) == 1:
            boundary.append(owners[0])
        else:
            interior_faces.update(owners)
    for ef, tag in face_tags.items():
        if tag not in BOUNDARY_TAGS:
            raise ConfigurationError(f"unknown boundary tag {tag!r} on face {ef}")
        if ef in interior_faces and tag != "periodic":
            raise ConfigurationError(f"face {ef} tagged {tag!r} is an interior face")
    faces = []
    for ef in sorted(boundary):
        tag = face_tags.get(ef)
        if tag is None:
            raise ConfigurationError(f"boundary face (element {ef[0]}, face {ef[1]}) has no tag")
        if tag == "periodic":
            raise ConfigurationError(f"face {ef} tagged periodic has no matching partner")
        faces.append(BoundaryFace(ef[0], ef[1], tag))
    for arr in (vertices, x, y, ids):
        arr.setflags(write=False)
    return SpectralMesh(vertices, N, x, y, ids, int(ng), tuple(faces), float(chord),
                        (), dict(meta or {}))


# --------------------------------------------------------------------------
# Plot3D import
# --------------------------------------------------------------------------

@dataclass
class BoundarySpec:
    """Tag assignment for an imported structured grid.

    ``faces`` maps ``(block, side)`` (1-based block, side in imin/imax/jmin/jmax)
    to a tag; ``seams`` lists pairs of block sides to fuse (O-grid wrap seams
    or translated periodic sides); ``spline_breaks`` are vertex coordinates
    where projected splines must not be smooth (e.g. a closed trailing edge).
    """

    faces: dict = field(default_factory=dict)
    seams: list = field(default_factory=list)
    coarsen: tuple = (1, 1)
    spline_tags: tuple = ()
    spline_breaks: tuple = ()
    chord: float = 1.0


def load_plot3d_mesh(path, boundary_spec, order):
    """Import an ASCII 2D Plot3D grid as a linear-geometry spectral-element mesh."""
    blocks = read_plot3d(path)
    spec = boundary_spec
    fi, fj = (int(c) for c in spec.coarsen)
    if fi < 1 or fj < 1:
        raise ConfigurationError(f"coarsening factors must be positive, got {spec.coarsen}")
    verts = []
    side_faces = {}
    for b, blk in enumerate(blocks, start=1):
        nj, ni = blk.shape
        if (ni - 1) % fi or (nj - 1) % fj:
            raise ConfigurationError(
                f"block {b}: {ni - 1}x{nj - 1} cells not divisible by coarsening {fi}x{fj}")
        I = np.arange(0, ni - 1, fi)
        J = np.arange(0, nj - 1, fj)
        jj, ii = np.meshgrid(J, I, indexing="ij")
        ii = ii.ravel()
        jj = jj.ravel()
        idx = np.stack([np.column_stack([ii, jj]), np.column_stack([ii + fi, jj]),
                        np.column_stack([ii + fi, jj + fj]), np.column_stack([ii, jj + fj])],
                       axis=1)  # (nel, 4, 2) structured (i, j) of each vertex
        v = np.stack([blk.x[idx[..., 1], idx[..., 0]], blk.y[idx[..., 1], idx[..., 0]]], axis=-1)
        corner = _corner_jacobians(v)
        if np.all(corner < 0):
            v = v[:, [1, 0, 3, 2]]
            idx = idx[:, [1, 0, 3, 2]]
            corner = _corner_jacobians(v)
        bad = np.flatnonzero((corner <= 0).any(axis=1))
        if bad.size:
            c = bad[0]
            raise GeometryError(
                f"block {b}: degenerate or inconsistently oriented cell at "
                f"(i, j) = {tuple(int(t) for t in idx[c, 0])}", element=int(c))
        offset = sum(len(a) for a in verts)
        for e in range(len(v)):
            for f in range(4):
                a, c = idx[e, f], idx[e, (f + 1) % 4]
                for side, axis, val in (("imin", 0, 0), ("imax", 0, ni - 1),
                                        ("jmin", 1, 0), ("jmax", 1, nj - 1)):
                    if a[axis] == val and c[axis] == val:
                        side_faces.setdefault((b, side), []).append((offset + e, f))
        verts.append(v)
    vertices = np.concatenate(verts, axis=0)

    face_tags = {}
    for key, tag in spec.faces.items():
        block, side = key
        if side not in BLOCK_SIDES or not 1 <= block <= len(blocks):
            raise ConfigurationError(f"boundary spec refers to unknown block side {block}.{side}")
        for ef in side_faces.get((block, side), []):
            face_tags[ef] = tag
    pairs = []
    for a, b in spec.seams:
        for key in (a, b):
            if key[1] not in BLOCK_SIDES or not 1 <= key[0] <= len(blocks):
                raise ConfigurationError(f"seam refers to unknown block side {key[0]}.{key[1]}")
        pairs.append((side_faces[tuple(a)], side_faces[tuple(b)]))
        for key in (a, b):
            for ef in side_faces[tuple(key)]:
                face_tags.pop(ef, None)
    return mesh_from_vertices(vertices, order, face_tags, pairs, chord=spec.chord,
                              meta={"source": str(path), "blocks": len(blocks)})


# --------------------------------------------------------------------------
# boundary chains and spline projection
# --------------------------------------------------------------------------

@dataclass
class BoundaryChain:
    faces: list      # [(element, face)] in traversal order
    closed: bool


def boundary_chains(mesh, tags):
    """Group boundary faces carrying ``tags`` into connected, ordered polylines."""
    if isinstance(tags, str):
        tags = (tags,)
    N = mesh.order
    faces = [(bf.element, bf.face) for bf in mesh.boundary_faces if bf.tag in tags]
    ends = {}
    starts = {}
    for k, (e, f) in enumerate(faces):
        a = mesh.global_ids[e][vertex_node_index(N, f)]
        b = mesh.global_ids[e][vertex_node_index(N, (f + 1) % 4)]
        if a in starts or b in ends:
            raise GeometryError("boundary faces do not form simple polylines")
        starts[a] = k
        ends[b] = k

    def start_of(k):
        e, f = faces[k]
        return mesh.global_ids[e][vertex_node_index(N, f)]

    def end_of(k):
        e, f = faces[k]
        return mesh.global_ids[e][vertex_node_index(N, (f + 1) % 4)]

    seen = np.zeros(len(faces), dtype=bool)
    chains = []
    for k0 in range(len(faces)):
        if seen[k0]:
            continue
        # walk back to the first face of an open chain
        k = k0
        closed = False
        while True:
            prev = ends.get(start_of(k))
            if prev is None:
                break
            if prev == k0:
                closed = True
                break
            k = prev
        first = k0 if closed else k
        order_ = [first]
        seen[first] = True
        k = first
        while True:
            nxt = starts.get(end_of(k))
            if nxt is None or nxt == first:
                break
            order_.append(nxt)
            seen[nxt] = True
            k = nxt
        chains.append(BoundaryChain([faces[i] for i in order_], closed))
    return chains


def _gordon_hall_nodes(x, nodes=None):
    """Transfinite interpolation of element interiors from their four edges."""
    nq = x.shape[-1]
    if nodes is None:
        nodes = build_reference_basis(nq - 1).nodes
    r = nodes[:, None]
    s = nodes[None, :]
    e0 = x[:, :, 0][:, :, None]
    e2 = x[:, :, -1][:, :, None]
    e3 = x[:, 0, :][:, None, :]
    e1 = x[:, -1, :][:, None, :]
    c00 = x[:, 0, 0][:, None, None]
    cn0 = x[:, -1, 0][:, None, None]
    cnn = x[:, -1, -1][:, None, None]
    c0n = x[:, 0, -1][:, None, None]
    return ((1 - s) / 2 * e0 + (1 + s) / 2 * e2 + (1 - r) / 2 * e3 + (1 + r) / 2 * e1
            - ((1 - r) * (1 - s) / 4 * c00 + (1 + r) * (1 - s) / 4 * cn0
               + (1 + r) * (1 + s) / 4 * cnn + (1 - r) * (1 + s) / 4 * c0n))


def _harmonic_extension(mesh, basis, x, y, tag):
    """Extend the displacement of the ``tag`` boundary nodes harmonically."""
    from .linsolve import jacobi, pcg
    from .sem_ops import SEMSpace

    sp = SEMSpace(mesh, basis)
    moved = mesh.boundary_node_mask(tag)
    fixed = np.zeros(mesh.n_global, dtype=bool)
    for bf in mesh.boundary_faces:
        fixed[mesh.face_global_ids(bf.element, bf.face)] = True
    mask = (~fixed).astype(float)
    stiff = float(sp.geom.jac.min()) / sp.geom.jac
    diag = sp.gather(sp.helmholtz_diagonal(stiff))
    out = []
    for new, old in ((x, mesh.x), (y, mesh.y)):
        dg = np.zeros(mesh.n_global)
        dg[mesh.global_ids.ravel()] = (new - old).ravel()
        dg[~moved] = 0.0
        rhs = -mask * sp.gather(sp.helmholtz_apply(sp.scatter(dg), stiff))

        def A(v):
            return mask * sp.gather(sp.helmholtz_apply(sp.scatter(mask * v), stiff))

        sol, rep = pcg(A, rhs, jacobi(diag, mask), tol=1e-12, maxit=20000)
        if not rep.converged:
            raise GeometryError(f"harmonic mesh smoothing did not converge "
                                f"({rep.iterations} iterations)")
        out.append(np.array(old + sp.scatter(mask * sol + dg)))
    return out[0], out[1]


def project_boundary_spline(mesh, tag, basis=None, breaks=(), smoothing="gordon-hall"):
    """Move boundary GLL points onto a cubic spline through the element vertices.

    Each chain of faces tagged ``tag`` is split at the declared ``breaks``
    (vertex coordinates) into smooth segments. Closed chains without breaks use
    a periodic spline; all other segments use a chord-length parameterised
    natural spline. Vertices do not move.

    With ``smoothing="gordon-hall"`` only the elements touching the boundary
    are re-blended. ``smoothing="harmonic"`` spreads the boundary displacement
    through the whole mesh as a harmonic field with stiffness ``1/J``, so thin
    wall elements are translated almost rigidly instead of being squashed by
    the spline bulge (needed for high-Reynolds-number wall grids).
    """
    if smoothing not in ("gordon-hall", "harmonic"):
        raise ParameterError(f"unknown smoothing {smoothing!r}")
    basis = basis or build_reference_basis(mesh.order)
    N = mesh.order
    x = np.array(mesh.x)
    y = np.array(mesh.y)
    breaks = np.asarray(breaks, dtype=float).reshape(-1, 2)
    touched = set()
    for chain in boundary_chains(mesh, (tag,)):
        starts = np.array([mesh.vertices[e, f] for e, f in chain.faces])
        last_e, last_f = chain.faces[-1]
        pts = np.vstack([starts, mesh.vertices[last_e, (last_f + 1) % 4]])
        seg_len = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        tol = 1e-6 * seg_len.min()
        is_break = np.zeros(len(pts), dtype=bool)
        for bp in breaks:
            is_break |= np.linalg.norm(pts - bp, axis=1) < tol
        nfaces = len(chain.faces)
        if chain.closed and not is_break[:-1].any():
            segments = [(np.arange(nfaces), True)]
        else:
            if chain.closed:
                shift = int(np.flatnonzero(is_break[:-1])[0])
                order_ = np.roll(np.arange(nfaces), -shift)
                brk = np.roll(is_break[:-1], -shift)
            else:
                order_ = np.arange(nfaces)
                brk = is_break[:-1].copy()
                brk[0] = True
            cut = list(np.flatnonzero(brk)) + [nfaces]
            segments = [(order_[a:b], False) for a, b in zip(cut[:-1], cut[1:])]
        for face_ids, periodic in segments:
            fv = [mesh.vertices[chain.faces[k][0], chain.faces[k][1]] for k in face_ids]
            e_end, f_end = chain.faces[face_ids[-1]]
            fv.append(mesh.vertices[e_end, (f_end + 1) % 4])
            P = np.array(fv)
            if len(P) < 4:
                raise SplineError(
                    f"spline segment on {tag!r} has {len(P)} vertices; at least 4 are needed")
            t = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(P, axis=0), axis=1))])
            if periodic:
                P[-1] = P[0]
            spline = CubicSpline(t, P, bc_type="periodic" if periodic else "natural")
            for k, fid in enumerate(face_ids):
                e, f = chain.faces[fid]
                tk = t[k] + (t[k + 1] - t[k]) * (1 + basis.nodes) / 2
                new = spline(tk)
                new[0] = P[k]
                new[-1] = P[k + 1]
                ii, jj = face_node_indices(N, f)
                x[e, ii, jj] = new[:, 0]
                y[e, ii, jj] = new[:, 1]
                touched.add(e)
    if touched and smoothing == "harmonic":
        x, y = _harmonic_extension(mesh, basis, x, y, tag)
    elif touched:
        el = np.array(sorted(touched))
        x[el] = _gordon_hall_nodes(x[el], basis.nodes)
        y[el] = _gordon_hall_nodes(y[el], basis.nodes)
    x.setflags(write=False)
    y.setflags(write=False)
    curved = tuple(sorted(set(mesh.curved_tags) | {tag}))
    out = replace(mesh, x=x, y=y, curved_tags=curved)
    compute_geometric_factors(out, basis)
    return out


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GeometricFactors:
    jac: np.ndarray
    rx: np.ndarray
    ry: np.ndarray
    sx: np.ndarray
    sy: np.ndarray
    mass: np.ndarray          # J * w_i * w_j
    normals: np.ndarray       # (E, 4, N+1, 2), outward
    face_jac: np.ndarray      # (E, 4, N+1), |dx/dxi| along the face
    face_weights: np.ndarray  # (E, 4, N+1), face_jac * w

    @property
    def area(self):
        return float(self.mass.sum())


def compute_geometric_factors(mesh, basis=None):
    basis = basis or build_reference_basis(mesh.order)
    D = basis.deriv_matrix
    w = basis.weights
    N = mesh.order
    xr = D @ mesh.x
    xs = mesh.x @ D.T
    yr = D @ mesh.y
    ys = mesh.y @ D.T
    jac = xr * ys - xs * yr
    if not np.all(jac > 0):
        flat = int(np.argmin(jac))
        e, i, j = np.unravel_index(flat, jac.shape)
        raise GeometryError(
            f"nonpositive Jacobian {jac[e, i, j]:.3e} in element {e} at reference point "
            f"(r, s) = ({basis.nodes[i]:.4f}, {basis.nodes[j]:.4f})", element=int(e))
    rx = ys / jac
    ry = -xs / jac
    sx = -yr / jac
    sy = xr / jac
    mass = jac * w[:, None] * w[None, :]
    E = mesh.n_elements
    normals = np.empty((E, 4, N + 1, 2))
    fjac = np.empty((E, 4, N + 1))
    for f in range(4):
        ii, jj = face_node_indices(N, f)
        if f in (0, 2):
            tx, ty = xr[:, ii, jj], yr[:, ii, jj]
        else:
            tx, ty = xs[:, ii, jj], ys[:, ii, jj]
        sgn = 1.0 if f in (0, 1) else -1.0
        mag = np.hypot(tx, ty)
        normals[:, f, :, 0] = sgn * ty / mag
        normals[:, f, :, 1] = -sgn * tx / mag
        fjac[:, f] = mag
    return GeometricFactors(jac, rx, ry, sx, sy, mass, normals, fjac, fjac * w[None, None, :])


def compute_hmax(mesh, basis=None):
    """Longest element edge (quadrature arc length) divided by ``N``."""
    basis = basis or build_reference_basis(mesh.order)
    N = mesh.order
    lengths = np.empty((mesh.n_elements, 4))
    for f in range(4):
        ii, jj = face_node_indices(N, f)
        dx = mesh.x[:, ii, jj] @ basis.deriv_matrix.T
        dy = mesh.y[:, ii, jj] @ basis.deriv_matrix.T
        lengths[:, f] = np.hypot(dx, dy) @ basis.weights
    return lengths.max(axis=1) / N


# --------------------------------------------------------------------------
# wall distance
# --------------------------------------------------------------------------

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def compute_wall_distance(mesh, basis=None, tags=("wall",), neighbours=12, samples=None,
                          iterations=60):
    """Distance from every GLL point to the nearest point of the wall curves.

    The wall is the union of degree-``N`` face polynomials. Candidate faces
    come from the ``neighbours`` nearest wall GLL points (plus the faces
    adjacent to those along the wall), then each candidate is minimised by a
    dense parametric scan followed by golden-section refinement.
    """
    basis = basis or build_reference_basis(mesh.order)
    wall = mesh.faces_with_tag(*tags)
    if not wall:
        raise ConfigurationError("wall distance requested but the mesh has no wall faces")
    N = mesh.order
    face_pts = np.stack([mesh.face_coordinates(bf.element, bf.face) for bf in wall])
    nf = len(wall)
    cloud = face_pts.reshape(-1, 2)
    owner = np.repeat(np.arange(nf), N + 1)

    # adjacency along the wall through shared end vertices
    endpoint = {}
    for k, bf in enumerate(wall):
        gids = mesh.face_global_ids(bf.element, bf.face)
        for g in (gids[0], gids[-1]):
            endpoint.setdefault(int(g), []).append(k)
    adj = [set() for _ in range(nf)]
    for ks in endpoint.values():
        for a in ks:
            adj[a].update(ks)

    q = np.column_stack([mesh.x.ravel(), mesh.y.ravel()])
    kq = min(neighbours, len(cloud))
    tree = cKDTree(cloud)
    dist0, nn = tree.query(q, k=kq)
    nn = nn.reshape(len(q), -1)
    best = np.asarray(dist0).reshape(len(q), -1)[:, 0].copy()

    cand_faces = owner[nn]  # (P, kq)
    pt_idx, fc_idx = [], []
    for p in range(len(q)):
        fs = set(cand_faces[p].tolist())
        for f in list(fs):
            fs.update(adj[f])
        pt_idx.extend([p] * len(fs))
        fc_idx.extend(fs)
    pt_idx = np.asarray(pt_idx)
    fc_idx = np.asarray(fc_idx)

    m = samples or (8 * N + 1)
    xi_s = np.linspace(-1.0, 1.0, m)
    Is = basis.interpolation_matrix(xi_s)
    face_samples = np.einsum("mk,fkd->fmd", Is, face_pts)  # (nf, m, 2)
    d2 = ((face_samples[fc_idx] - q[pt_idx, None, :]) ** 2).sum(axis=-1)
    kmin = np.argmin(d2, axis=1)
    a = xi_s[np.clip(kmin - 1, 0, m - 1)]
    b = xi_s[np.clip(kmin + 1, 0, m - 1)]

    fp = face_pts[fc_idx]
    qp = q[pt_idx]

    def dist2(xi):
        L = basis.interpolation_matrix(xi)
        pos = np.einsum("pk,pkd->pd", L, fp)
        return ((pos - qp) ** 2).sum(axis=1)

    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = dist2(c)
    fd = dist2(d)
    for _ in range(iterations):
        left = fc < fd  # minimum lies in [a, d]
        a_new = np.where(left, a, c)
        b_new = np.where(left, d, b)
        c_new = np.where(left, b_new - _GOLDEN * (b_new - a_new), d)
        d_new = np.where(left, c, a_new + _GOLDEN * (b_new - a_new))
        f_eval = dist2(np.where(left, c_new, d_new))
        fc, fd = np.where(left, f_eval, fd), np.where(left, fc, f_eval)
        a, b, c, d = a_new, b_new, c_new, d_new
    refined = np.sqrt(np.minimum.reduce([dist2(0.5 * (a + b)), fc, fd]))
    np.minimum.at(best, pt_idx, refined)

    out = best.reshape(mesh.x.shape)
    on_wall = mesh.boundary_node_mask(*tags)[mesh.global_ids]
    out[on_wall] = 0.0
    return out


# --------------------------------------------------------------------------
# reporting
# --------------------------------------------------------------------------

def mesh_summary(mesh, basis=None):
    basis = basis or build_reference_basis(mesh.order)
    geom = compute_geometric_factors(mesh, basis)
    hmax = compute_hmax(mesh, basis)
    info = {
        "elements": mesh.n_elements,
        "order": mesh.order,
        "global_nodes": mesh.n_global,
        "area": geom.area,
        "jacobian_min": float(geom.jac.min()),
        "jacobian_max": float(geom.jac.max()),
        "hmax_min": float(hmax.min()),
        "hmax_max": float(hmax.max()),
        "tags": ",".join(mesh.tags),
    }
    if mesh.faces_with_tag("wall"):
        d = compute_wall_distance(mesh, basis)
        info["wall_spacing_min"] = float(d[d > 0].min())
    return info


def format_summary(info):
    return "\n".join(f"{k}: {v:.6g}" if isinstance(v, float) else f"{k}: {v}"
                     for k, v in info.items())
