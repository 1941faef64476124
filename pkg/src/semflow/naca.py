"""NACA 0012 O-mesh RANS case at Re = 6e6 (the extended validation case)."""

from __future__ import annotations

import tempfile
from pathlib import Path

from .flow_solver import CaseConfig, run_case
from .mesh import BoundarySpec, load_plot3d_mesh, project_boundary_spline
from .meshgen import ogrid
from .plot3d import write_plot3d

NACA_SPEC = BoundarySpec(faces={(1, "jmin"): "wall", (1, "jmax"): "inflow_outflow"},
                         seams=[((1, "imin"), (1, "imax"))], spline_tags=("wall",),
                         spline_breaks=((1.0, 0.0),))


def write_naca_grid(path, n_around=64, n_radial=32, radius=50.0, first_spacing=1.5e-5):
    """Write an O-grid around NACA 0012 as single-block Plot3D (vertex grid)."""
    X, Y = ogrid(n_around, n_radial, radius=radius, first_spacing=first_spacing)
    write_plot3d(path, [(X, Y)])
    return Path(path)


def naca_mesh(order=3, n_around=64, n_radial=32, radius=50.0, first_spacing=1.5e-5, path=None):
    """O-mesh of ``n_around x n_radial`` elements with the wall projected on a spline."""
    if path is None:
        tmp = tempfile.NamedTemporaryFile(suffix=".p3d", delete=False)
        tmp.close()
        path = tmp.name
    write_naca_grid(path, n_around, n_radial, radius, first_spacing)
    mesh = load_plot3d_mesh(path, NACA_SPEC, order)
    return project_boundary_spline(mesh, "wall", breaks=NACA_SPEC.spline_breaks,
                                   smoothing="harmonic")


def run_naca_rans(aoa=10.0, re=6e6, t_final=30.0, order=3, writer=None, callback=None,
                  max_steps=None, mesh=None):
    """k-tau SST RANS around NACA 0012; the summary gains final Cl and Cd."""
    mesh = mesh or naca_mesh(order)
    cfg = CaseConfig(re=re, aoa=aoa, model="rans_ktau", cfl=0.5, order=2, t_final=t_final,
                     dt_max=0.01, dt_initial=1e-5, max_steps=max_steps, p_tol=1e-6,
                     v_tol=1e-8, s_tol=1e-8, maxit=800, preconditioner="direct",
                     name=f"naca0012_aoa{aoa:g}")
    res = run_case(cfg, mesh, writer=writer, callback=callback)
    last = res.rows[-1] if res.rows else {"cl": float("nan"), "cd": float("nan")}
    res.summary["cl_final"] = float(last["cl"])
    res.summary["cd_final"] = float(last["cd"])
    return res
