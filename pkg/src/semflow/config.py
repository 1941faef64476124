"""INI case files.

Example::

    [case]
    name = naca0012
    re = 6e6
    aoa = 10
    model = rans_ktau
    cfl = 0.5
    t_final = 20

    [discretization]
    order = 3            ; polynomial order N
    scheme_order = 2     ; BDF/EXT order

    [mesh]
    path = naca0012.p3d
    seams = 1.imin:1.imax
    spline = wall
    smoothing = harmonic   ; or gordon-hall (default)

    [boundary]
    1.jmin = wall
    1.jmax = inflow_outflow

    [output]
    directory = runs/naca
    fields_every = 100

Relative paths are resolved against the directory of the case file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError, ParameterError
from .flow_solver import CaseConfig
from .mesh import BLOCK_SIDES, BOUNDARY_TAGS, BoundarySpec

# section -> {key: (CaseConfig field or None, converter)}
_FLOAT, _INT, _STR, _BOOL = float, int, str, "bool"
SCHEMA = {
    "case": {"name": ("name", _STR), "re": ("re", _FLOAT), "aoa": ("aoa", _FLOAT),
             "model": ("model", _STR), "cfl": ("cfl", _FLOAT), "t_final": ("t_final", _FLOAT),
             "max_steps": ("max_steps", _INT), "dt": ("dt", _FLOAT),
             "dt_max": ("dt_max", _FLOAT), "dt_initial": ("dt_initial", _FLOAT),
             "body_force": ("body_force", "pair"), "restart": (None, _STR)},
    "discretization": {"order": (None, _INT), "scheme_order": ("order", _INT),
                       "filter_modes": ("filter_modes", _INT), "chi": ("chi", _FLOAT),
                       "dealias": ("dealias", _BOOL)},
    "freestream": {"k_inf": ("k_inf", _FLOAT), "tau_inf": ("tau_inf", _FLOAT),
                   "mut_ratio": ("mut_ratio_inf", _FLOAT)},
    "solvers": {"p_tol": ("p_tol", _FLOAT), "v_tol": ("v_tol", _FLOAT),
                "s_tol": ("s_tol", _FLOAT), "maxit": ("maxit", _INT),
                "restart": ("restart", _INT), "preconditioner": ("preconditioner", _STR)},
    "mesh": {"path": (None, _STR), "seams": (None, _STR), "coarsen": (None, "pair"),
             "spline": (None, _STR), "spline_breaks": (None, _STR), "chord": (None, _FLOAT),
             "smoothing": (None, _STR)},
    "output": {"directory": ("output_dir", _STR), "fields_every": ("output_every", _INT),
               "checkpoint_every": ("checkpoint_every", _INT), "plots": (None, _BOOL)},
}
REQUIRED = (("case", "re"), ("case", "model"), ("case", "t_final"),
            ("discretization", "order"), ("mesh", "path"))


@dataclass
class RunSpec:
    """Everything ``semflow run`` needs, parsed from a case file."""

    case: CaseConfig
    mesh_path: Path
    order: int
    boundary: BoundarySpec
    restart: Path | None = None
    plots: bool = True
    smoothing: str = "gordon-hall"
    source: Path | None = None
    extra: dict = field(default_factory=dict)


def _convert(kind, raw, where):
    try:
        if kind is _BOOL:
            low = raw.strip().lower()
            if low in ("1", "yes", "true", "on"):
                return True
            if low in ("0", "no", "false", "off"):
                return False
            raise ValueError
        if kind == "pair":
            vals = [float(t) for t in raw.replace(",", " ").split()]
            if len(vals) != 2:
                raise ValueError
            return tuple(vals)
        return kind(raw.strip())
    except ValueError:
        raise ParameterError(f"invalid value {raw!r} for {where}") from None


def _side(token, where):
    try:
        block, side = token.strip().split(".")
        block = int(block)
    except ValueError:
        raise ParameterError(f"{where}: expected <block>.<side>, got {token!r}") from None
    if side not in BLOCK_SIDES:
        raise ParameterError(f"{where}: side must be one of {', '.join(BLOCK_SIDES)}")
    return block, side


def _points(raw, where):
    pts = []
    for item in raw.split(";"):
        if item.strip():
            xy = _convert("pair", item, where)
            pts.append(xy)
    return tuple(pts)


def parse_case(text, base=Path("."), source=None):
    """Parse case-file text into a :class:`RunSpec`.

    Unknown sections or keys and missing required keys raise
    :class:`ParameterError` naming every offending key.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=str(source or "<case>"))
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse case file: {exc}") from None
    problems = []
    for sec in cp.sections():
        if sec == "boundary":
            continue
        if sec not in SCHEMA:
            problems.append(f"unknown section [{sec}]")
            continue
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                problems.append(f"unknown key [{sec}].{key}")
    for sec, key in REQUIRED:
        if not cp.has_option(sec, key):
            problems.append(f"missing key [{sec}].{key}")
    if problems:
        raise ParameterError("invalid case file: " + "; ".join(problems))

    kwargs, extra = {}, {}
    for sec, keys in SCHEMA.items():
        if not cp.has_section(sec):
            continue
        for key, (target, kind) in keys.items():
            if cp.has_option(sec, key):
                val = _convert(kind, cp[sec][key], f"[{sec}].{key}")
                if target is None:
                    extra[(sec, key)] = val
                else:
                    kwargs[target] = val
    base = Path(base)

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    if "output_dir" in kwargs:
        kwargs["output_dir"] = str(resolve(kwargs["output_dir"]))
    case = CaseConfig(**kwargs)

    faces = {}
    if cp.has_section("boundary"):
        for key, tag in cp["boundary"].items():
            tag = tag.strip()
            if tag not in BOUNDARY_TAGS:
                raise ParameterError(f"[boundary].{key}: unknown tag {tag!r}; "
                                     f"choose from {', '.join(BOUNDARY_TAGS)}")
            faces[_side(key, f"[boundary].{key}")] = tag
    seams = []
    for item in str(extra.get(("mesh", "seams"), "")).replace(",", " ").split():
        a, _, b = item.partition(":")
        seams.append((_side(a, "[mesh].seams"), _side(b, "[mesh].seams")))
    spline = tuple(str(extra.get(("mesh", "spline"), "")).replace(",", " ").split())
    coarsen = tuple(int(c) for c in extra.get(("mesh", "coarsen"), (1, 1)))
    boundary = BoundarySpec(faces=faces, seams=seams, coarsen=coarsen, spline_tags=spline,
                            spline_breaks=_points(str(extra.get(("mesh", "spline_breaks"), "")),
                                                  "[mesh].spline_breaks"),
                            chord=float(extra.get(("mesh", "chord"), 1.0)))
    order = extra[("discretization", "order")]
    if order < 2:
        raise ParameterError("[discretization].order must be at least 2")
    smoothing = extra.get(("mesh", "smoothing"), "gordon-hall").strip()
    if smoothing not in ("gordon-hall", "harmonic"):
        raise ParameterError(f"[mesh].smoothing must be gordon-hall or harmonic, "
                             f"got {smoothing!r}")
    restart = extra.get(("case", "restart"))
    return RunSpec(case=case, mesh_path=resolve(extra[("mesh", "path")]), order=order,
                   boundary=boundary, restart=resolve(restart) if restart else None,
                   plots=extra.get(("output", "plots"), True), smoothing=smoothing,
                   source=source)


def load_case(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read case file {path}: {exc.strerror}") from None
    return parse_case(text, base=path.parent, source=path)
