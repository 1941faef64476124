"""Small structured-grid generators: boxes, annuli and airfoil O-grids.

Grids are returned as point arrays ``(nj, ni)`` so they can be written to
Plot3D or turned directly into spectral-element meshes.
"""

from __future__ import annotations

import numpy as np

from .mesh import mesh_from_vertices


def stretched(n, ratio=1.0):
    """``n`` cells on [0, 1] with geometric growth ``ratio`` between neighbours."""
    if abs(ratio - 1.0) < 1e-12:
        return np.linspace(0.0, 1.0, n + 1)
    h = ratio ** np.arange(n)
    return np.concatenate([[0.0], np.cumsum(h)]) / h.sum()


def grid_elements(X, Y):
    """Vertex quadruples of all cells of a structured grid ``(nj, ni)``."""
    v = np.stack([
        np.stack([X[:-1, :-1], Y[:-1, :-1]], -1),
        np.stack([X[:-1, 1:], Y[:-1, 1:]], -1),
        np.stack([X[1:, 1:], Y[1:, 1:]], -1),
        np.stack([X[1:, :-1], Y[1:, :-1]], -1),
    ], axis=2)  # (nj-1, ni-1, 4, 2)
    return v.reshape(-1, 4, 2)


def box_grid(nx, ny, x0=0.0, x1=1.0, y0=0.0, y1=1.0, xs=None, ys=None):
    xs = np.linspace(x0, x1, nx + 1) if xs is None else np.asarray(xs)
    ys = np.linspace(y0, y1, ny + 1) if ys is None else np.asarray(ys)
    X, Y = np.meshgrid(xs, ys)
    return X, Y


def box_mesh(nx, ny, order, x0=0.0, x1=1.0, y0=0.0, y1=1.0, tags=None,
             periodic_x=False, periodic_y=False, xs=None, ys=None):
    """Rectangular mesh; ``tags`` maps left/right/bottom/top to boundary tags."""
    X, Y = box_grid(nx, ny, x0, x1, y0, y1, xs, ys)
    nx, ny = X.shape[1] - 1, X.shape[0] - 1
    vertices = grid_elements(X, Y)
    tags = dict(tags or {})
    default = "wall"
    eid = np.arange(nx * ny).reshape(ny, nx)
    sides = {
        "bottom": [(int(e), 0) for e in eid[0, :]],
        "right": [(int(e), 1) for e in eid[:, -1]],
        "top": [(int(e), 2) for e in eid[-1, :]],
        "left": [(int(e), 3) for e in eid[:, 0]],
    }
    face_tags = {}
    pairs = []
    if periodic_x:
        pairs.append((sides["left"], sides["right"]))
    if periodic_y:
        pairs.append((sides["bottom"], sides["top"]))
    for side, faces in sides.items():
        if (periodic_x and side in ("left", "right")) or (periodic_y and side in ("bottom", "top")):
            continue
        for ef in faces:
            face_tags[ef] = tags.get(side, default)
    return mesh_from_vertices(vertices, order, face_tags, pairs)


def naca4_thickness(x, t=0.12):
    """Symmetric NACA 4-digit half thickness with closed trailing edge."""
    return 5 * t * (0.2969 * np.sqrt(x) - 0.1260 * x - 0.3516 * x**2
                    + 0.2843 * x**3 - 0.1036 * x**4)


def airfoil_surface(n, t=0.12):
    """Closed-TE symmetric airfoil, ``n`` points clockwise from TE over the top.

    Points are cosine-clustered at both edges; the trailing edge is point 0
    (not repeated).
    """
    if n % 2:
        raise ValueError("airfoil surface point count must be even")
    half = n // 2
    beta = np.linspace(0.0, np.pi, half + 1)
    xc = 0.5 * (1 + np.cos(beta))        # 1 -> 0
    upper = np.column_stack([xc, naca4_thickness(xc, t)])
    lower = np.column_stack([xc[::-1], -naca4_thickness(xc[::-1], t)])
    pts = np.vstack([upper, lower[1:-1]])
    return pts


def ogrid(n_around, n_radial, radius=40.0, first_spacing=1e-3, t=0.12, center=(0.5, 0.0)):
    """Algebraic O-grid around a NACA 00xx profile.

    Returns point arrays ``(nj, ni)`` with ``i`` running around the airfoil
    (first and last circumferential lines coincide) and ``j`` pointing
    outward; ``j = 0`` is the airfoil surface.
    """
    surf = airfoil_surface(n_around, t)
    surf = np.vstack([surf, surf[:1]])
    cx, cy = center
    # matching outer circle points by surface angle
    ang = np.arctan2(surf[:, 1] - cy, surf[:, 0] - cx)
    ang = np.unwrap(ang)
    outer = np.column_stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang)])
    # geometric radial distribution
    total = radius
    ratio = 1.0
    lo, hi = 1.0, 2.0
    for _ in range(200):
        ratio = 0.5 * (lo + hi)
        h = first_spacing * (ratio ** n_radial - 1) / (ratio - 1)
        if h > total:
            hi = ratio
        else:
            lo = ratio
    s = first_spacing * (ratio ** np.arange(n_radial + 1) - 1) / (ratio - 1)
    s = s / s[-1]
    X = surf[None, :, 0] + s[:, None] * (outer[None, :, 0] - surf[None, :, 0])
    Y = surf[None, :, 1] + s[:, None] * (outer[None, :, 1] - surf[None, :, 1])
    X[:, -1] = X[:, 0]
    Y[:, -1] = Y[:, 0]
    return X, Y


def annulus_grid(n_around, n_radial, r_in=1.0, r_out=2.0):
    theta = np.linspace(0.0, 2 * np.pi, n_around + 1)
    r = np.linspace(r_in, r_out, n_radial + 1)
    X = r[:, None] * np.cos(theta)[None, :]
    Y = r[:, None] * np.sin(theta)[None, :]
    X[:, -1] = X[:, 0]
    Y[:, -1] = Y[:, 0]
    return X, Y
