"""Scenario text files: loading, validation, canonical printing, output.

The format is INI-like with six sections ([solver] optional)::

    [grid]    dim, xmin, xmax, h          (+ ymin, ymax when dim = 2)
    [time]    T, slices, substeps
    [domain]  type = moving_intervals (left, right, jumps?) | implicit (phi)
    [flux]    type, p, eps_reg?; custom adds a1 (a2), c, alpha, b?, d?, C_z?, omega?
    [data]    u0, psi, source?
    [solver]  newton_tol?, max_newton?, max_picard?
    [output]  dir, frames?

'#' starts a comment, values may be double-quoted, unknown sections or
keys are errors.  Loading validates everything it can reach and raises a
single :class:`ScenarioError` listing every problem found.
"""

import hashlib
import os

import numpy as np

from .errors import GeometryError, NumericEvalError, ScenarioError, SlabflowError
from .expressions import Num, parse_expr, to_source
from .flux import FluxModel
from .geometry import Grid, IntervalTrack, TimeDomain, TrackSegment, build_slice_plan
from .slice_solver import BoundaryData, SolverConfig, eval_on_points
from .stitcher import OutputConfig, Scenario

_SECTIONS = {
    "grid": {"dim", "xmin", "xmax", "ymin", "ymax", "h"},
    "time": {"T", "slices", "substeps"},
    "domain": {"type", "left", "right", "jumps", "phi"},
    "flux": {"type", "p", "eps_reg", "a1", "a2", "c", "alpha", "b", "d", "C_z", "omega"},
    "data": {"u0", "psi", "source"},
    "solver": {"newton_tol", "max_newton", "max_picard"},
    "output": {"dir", "frames"},
}
_REQUIRED_SECTIONS = ("grid", "time", "domain", "flux", "data", "output")


def _strip_comment(line):
    in_quote = False
    for i, ch in enumerate(line):
        if ch == '"':
            in_quote = not in_quote
        elif ch == "#" and not in_quote:
            return line[:i]
    return line


def _unquote(value):
    if len(value) >= 2 and value.startswith('"') and value.endswith('"'):
        return value[1:-1]
    return value


def _parse_sections(text, issues):
    """-> {section: {key: (value, line_no)}}"""
    sections = {}
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SECTIONS:
                issues.append(f"line {no}: unknown section [{name}]")
                current = None
                continue
            if name in sections:
                issues.append(f"line {no}: duplicate section [{name}]")
            current = sections.setdefault(name, {})
            continue
        if "=" not in line:
            issues.append(f"line {no}: expected 'key = value', got {line!r}")
            continue
        if current is None:
            issues.append(f"line {no}: key outside any section")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        section_name = next(n for n, s in sections.items() if s is current)
        if key not in _SECTIONS[section_name]:
            issues.append(f"[{section_name}] line {no}: unknown key {key!r}")
            continue
        if key in current:
            issues.append(f"[{section_name}] line {no}: duplicate key {key!r}")
            continue
        current[key] = (_unquote(value), no)
    return sections


class _SectionReader:
    def __init__(self, name, entries, issues):
        self.name = name
        self.entries = dict(entries)
        self.issues = issues

    def _take(self, key, conv, kind, required, default):
        if key not in self.entries:
            if required:
                self.issues.append(f"[{self.name}] missing required key {key!r}")
            return default
        value, line = self.entries.pop(key)
        try:
            return conv(value)
        except ValueError:
            self.issues.append(f"[{self.name}] line {line}: {key!r} must be {kind}, got {value!r}")
            return default

    def number(self, key, required=True, default=None):
        return self._take(key, float, "a number", required, default)

    def integer(self, key, required=True, default=None):
        def conv(v):
            f = float(v)
            if f != int(f):
                raise ValueError(v)
            return int(f)

        return self._take(key, conv, "an integer", required, default)

    def word(self, key, required=True, default=None):
        return self._take(key, str, "a word", required, default)

    def expression(self, key, variables, required=True, default=None):
        if key not in self.entries:
            if required:
                self.issues.append(f"[{self.name}] missing required key {key!r}")
            return default
        value, line = self.entries.pop(key)
        try:
            return parse_expr(value, variables)
        except SlabflowError as exc:
            self.issues.append(f"[{self.name}] line {line} ({key}): {exc}")
            return default

    def reject_leftovers(self, context):
        for key, (_, line) in self.entries.items():
            self.issues.append(f"[{self.name}] line {line}: key {key!r} is {context}")
        self.entries.clear()


def parse_scenario_text(text):
    """Parse and validate scenario text; raises ScenarioError on problems."""
    issues = []
    sections = _parse_sections(text, issues)
    for name in _REQUIRED_SECTIONS:
        if name not in sections:
            issues.append(f"missing required section [{name}]")
    if issues:
        raise ScenarioError(issues)

    # ---- grid
    g = _SectionReader("grid", sections["grid"], issues)
    dim = g.integer("dim")
    xmin = g.number("xmin")
    xmax = g.number("xmax")
    h = g.number("h")
    if dim not in (1, 2):
        issues.append(f"[grid] dim must be 1 or 2, got {dim}")
        dim = 1
    if dim == 2:
        ymin = g.number("ymin")
        ymax = g.number("ymax")
    else:
        ymin = ymax = None
        g.reject_leftovers("only valid when dim = 2")

    grid = None
    if not issues:
        spans = [(xmin, xmax)] + ([(ymin, ymax)] if dim == 2 else [])
        counts, origin = [], []
        for lo, hi in spans:
            if h <= 0:
                issues.append(f"[grid] h must be positive, got {h}")
                break
            if hi <= lo:
                issues.append(f"[grid] axis range [{lo}, {hi}] is empty")
                break
            n = (hi - lo) / h
            if abs(n - round(n)) > 1e-9 * max(1.0, abs(n)):
                issues.append(f"[grid] h={h} must evenly divide [{lo}, {hi}]")
                break
            counts.append(int(round(n)))
            origin.append(lo)
        else:
            try:
                grid = Grid(dim=dim, origin=tuple(origin), spacing=(h,) * dim, counts=tuple(counts))
            except GeometryError as exc:
                issues.append(f"[grid] {exc}")

    # ---- time
    tsec = _SectionReader("time", sections["time"], issues)
    horizon = tsec.number("T")
    n_slices = tsec.integer("slices")
    substeps = tsec.integer("substeps")
    if horizon is not None and horizon <= 0:
        issues.append(f"[time] T must be positive, got {horizon}")
    if n_slices is not None and n_slices < 1:
        issues.append(f"[time] slices must be >= 1, got {n_slices}")
    if substeps is not None and substeps < 1:
        issues.append(f"[time] substeps must be >= 1, got {substeps}")

    # ---- domain
    d = _SectionReader("domain", sections["domain"], issues)
    dom_type = d.word("type")
    domain = None
    if dom_type == "moving_intervals":
        if dim != 1:
            issues.append("[domain] moving_intervals requires dim = 1")
        left = d.expression("left", ("t",))
        right = d.expression("right", ("t",))
        jumps_raw = d.word("jumps", required=False)
        d.reject_leftovers("only valid for type = implicit")
        segments = []
        if left is not None and right is not None:
            segments.append(TrackSegment(start=0.0, left=left, right=right))
        if jumps_raw:
            for piece in jumps_raw.split(";"):
                piece = piece.strip()
                if not piece:
                    continue
                try:
                    when, values = piece.split(":", 1)
                    lval, rval = values.split(",", 1)
                    t_jump = float(when)
                    segments.append(
                        TrackSegment(
                            start=t_jump,
                            left=parse_expr(lval.strip(), ("t",)),
                            right=parse_expr(rval.strip(), ("t",)),
                        )
                    )
                except (ValueError, SlabflowError) as exc:
                    issues.append(f"[domain] bad jump entry {piece!r}: {exc}")
        if segments and horizon is not None:
            bad = [s.start for s in segments[1:] if not (0.0 < s.start < horizon)]
            if bad:
                issues.append(f"[domain] jump times must lie strictly inside (0, T): {bad}")
            else:
                try:
                    domain = TimeDomain.moving_intervals(
                        [IntervalTrack(segments=tuple(segments))], horizon
                    )
                except GeometryError as exc:
                    issues.append(f"[domain] {exc}")
    elif dom_type == "implicit":
        variables = ("t", "x", "y") if dim == 2 else ("t", "x")
        phi = d.expression("phi", variables)
        d.reject_leftovers("only valid for type = moving_intervals")
        if phi is not None and grid is not None and horizon is not None:
            domain = TimeDomain.implicit(phi, grid.box, horizon, dim=dim)
    elif dom_type is not None:
        issues.append(f"[domain] unknown type {dom_type!r}")

    # ---- flux
    fsec = _SectionReader("flux", sections["flux"], issues)
    flux_type = fsec.word("type")
    p = fsec.number("p")
    eps_reg = fsec.number("eps_reg", required=False, default=1e-8)
    flux = None
    if p is not None and p <= 1:
        issues.append(f"[flux] p: p must exceed 1, got {p}")
    elif flux_type in ("p_laplacian", "linear_diffusion", "z_modulated"):
        fsec.reject_leftovers("only valid for type = custom")
        if flux_type == "linear_diffusion" and p is not None and p != 2:
            issues.append(f"[flux] linear_diffusion requires p = 2, got {p}")
        elif p is not None:
            maker = {
                "p_laplacian": lambda: FluxModel.p_laplacian(p, dim=dim, eps_reg=eps_reg),
                "linear_diffusion": lambda: FluxModel.linear_diffusion(dim=dim),
                "z_modulated": lambda: FluxModel.z_modulated(p, dim=dim, eps_reg=eps_reg),
            }[flux_type]
            try:
                flux = maker()
            except SlabflowError as exc:
                issues.append(f"[flux] {exc}")
    elif flux_type == "custom":
        flux_vars = ("t", "x", "y", "z", "xi1", "xi2")
        a1 = fsec.expression("a1", flux_vars)
        a2 = fsec.expression("a2", flux_vars, required=(dim == 2)) if dim == 2 else None
        if dim == 1 and "a2" in fsec.entries:
            fsec.entries.pop("a2")
            issues.append("[flux] a2 only valid when dim = 2")
        growth_c = fsec.number("c")
        alpha = fsec.number("alpha")
        lower_b = fsec.number("b", required=False, default=0.0)
        lower_d = fsec.number("d", required=False, default=0.0)
        z_lip = fsec.number("C_z", required=False, default=0.0)
        omega = fsec.expression("omega", ("r",), required=False)
        comps = [c for c in (a1, a2) if c is not None]
        if p is not None and growth_c is not None and alpha is not None and len(comps) == dim:
            try:
                flux = FluxModel.custom(
                    comps, p, dim=dim, eps_reg=eps_reg, growth_c=growth_c,
                    coercivity_alpha=alpha, lower_b=lower_b, lower_d=lower_d,
                    z_lipschitz=z_lip, time_modulus=omega,
                )
            except SlabflowError as exc:
                issues.append(f"[flux] {exc}")
    elif flux_type is not None:
        issues.append(f"[flux] unknown type {flux_type!r}")

    # ---- data
    data = _SectionReader("data", sections["data"], issues)
    space_vars = ("x", "y") if dim == 2 else ("x",)
    txy_vars = ("t",) + space_vars
    u0 = data.expression("u0", space_vars)
    psi = data.expression("psi", txy_vars)
    source = data.expression("source", txy_vars, required=False, default=Num(0.0))

    # ---- solver
    cfg = SolverConfig()
    if "solver" in sections:
        s = _SectionReader("solver", sections["solver"], issues)
        newton_tol = s.number("newton_tol", required=False, default=cfg.newton_tol)
        max_newton = s.integer("max_newton", required=False, default=cfg.max_newton)
        max_picard = s.integer("max_picard", required=False, default=cfg.max_picard)
        if newton_tol is not None and newton_tol <= 0:
            issues.append(f"[solver] newton_tol must be positive, got {newton_tol}")
        if max_newton is not None and max_newton < 1:
            issues.append(f"[solver] max_newton must be >= 1, got {max_newton}")
        if max_picard is not None and max_picard < 0:
            issues.append(f"[solver] max_picard must be >= 0, got {max_picard}")
        if not issues:
            cfg = SolverConfig(newton_tol=newton_tol, max_newton=max_newton, max_picard=max_picard)

    # ---- output
    out = _SectionReader("output", sections["output"], issues)
    out_dir = out.word("dir")
    frames_mode = out.word("frames", required=False, default="knots")
    if frames_mode not in ("knots", "all"):
        issues.append(f"[output] frames must be 'knots' or 'all', got {frames_mode!r}")

    # ---- cross-cutting eager checks
    plan = None
    if not issues and None not in (grid, domain, flux, u0, psi):
        try:
            plan = build_slice_plan(domain, grid, n_slices)
        except GeometryError as exc:
            issues.append(f"geometry: {exc}")
    if plan is not None:
        boundary = BoundaryData(psi=psi)
        try:
            vals = eval_on_points(u0, 0.0, plan.masks[0].active_points())
            if not np.all(np.isfinite(vals)):
                issues.append("[data] u0 is not finite on the initial section")
        except NumericEvalError as exc:
            issues.append(f"[data] u0 does not evaluate on the initial section: {exc}")
        nodes = grid.node_coords()
        for t in plan.knots:
            try:
                vals = boundary.values(float(t), nodes)
                if not np.all(np.isfinite(vals)):
                    issues.append(f"[data] psi is not finite on the grid at t={t}")
                    break
            except NumericEvalError as exc:
                issues.append(f"[data] psi does not evaluate at t={t}: {exc}")
                break

    if issues:
        raise ScenarioError(issues)
    return Scenario(
        grid=grid,
        domain=domain,
        n_slices=n_slices,
        substeps=substeps,
        flux=flux,
        boundary=BoundaryData(psi=psi),
        u0=u0,
        source=source,
        config=cfg,
        output=OutputConfig(directory=out_dir, frames_mode=frames_mode),
    )


def load_scenario(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError([f"cannot read scenario file: {exc}"]) from exc
    return parse_scenario_text(text)


def bundled_scenario_paths():
    """name -> path of the scenario files shipped with the package."""
    folder = os.path.join(os.path.dirname(__file__), "scenarios")
    return {
        name[:-4]: os.path.join(folder, name)
        for name in sorted(os.listdir(folder))
        if name.endswith(".cfg")
    }


# ---------------------------------------------------------------------------
# canonical printing


def _fmt(x):
    return repr(float(x))


def format_scenario(scenario):
    """Canonical text for a scenario; reloading yields an equivalent one
    (equal expression trees, bit-equal numbers)."""
    grid = scenario.grid
    if len(set(grid.spacing)) != 1:
        raise ValueError("the file format carries a single spacing h for all axes")
    lines = ["[grid]", f"dim = {grid.dim}"]
    lines.append(f"xmin = {_fmt(grid.origin[0])}")
    lines.append(f"xmax = {_fmt(grid.origin[0] + grid.counts[0] * grid.spacing[0])}")
    if grid.dim == 2:
        lines.append(f"ymin = {_fmt(grid.origin[1])}")
        lines.append(f"ymax = {_fmt(grid.origin[1] + grid.counts[1] * grid.spacing[1])}")
    lines.append(f"h = {_fmt(grid.spacing[0])}")

    lines += [
        "",
        "[time]",
        f"T = {_fmt(scenario.domain.horizon)}",
        f"slices = {scenario.n_slices}",
        f"substeps = {scenario.substeps}",
    ]

    dom = scenario.domain
    lines += ["", "[domain]"]
    if dom.kind == "moving_intervals":
        if len(dom.tracks) != 1:
            raise ValueError("the file format carries a single moving interval track")
        segs = dom.tracks[0].segments
        lines.append("type = moving_intervals")
        lines.append(f'left = "{to_source(segs[0].left)}"')
        lines.append(f'right = "{to_source(segs[0].right)}"')
        if len(segs) > 1:
            jumps = "; ".join(
                f"{_fmt(s.start)}: {to_source(s.left)}, {to_source(s.right)}" for s in segs[1:]
            )
            lines.append(f'jumps = "{jumps}"')
    else:
        lines.append("type = implicit")
        lines.append(f'phi = "{to_source(dom.phi)}"')

    flux = scenario.flux
    lines += ["", "[flux]", f"type = {flux.kind}", f"p = {_fmt(flux.p)}"]
    lines.append(f"eps_reg = {_fmt(flux.eps_reg)}")
    if flux.kind == "custom":
        lines.append(f'a1 = "{to_source(flux.components[0])}"')
        if flux.dim == 2:
            lines.append(f'a2 = "{to_source(flux.components[1])}"')
        lines.append(f"c = {_fmt(flux.growth_c)}")
        lines.append(f"alpha = {_fmt(flux.coercivity_alpha)}")
        lines.append(f"b = {_fmt(flux.lower_b)}")
        lines.append(f"d = {_fmt(flux.lower_d)}")
        lines.append(f"C_z = {_fmt(flux.z_lipschitz)}")
        if flux.time_modulus is not None:
            lines.append(f'omega = "{to_source(flux.time_modulus)}"')

    lines += ["", "[data]", f'u0 = "{to_source(scenario.u0)}"']
    lines.append(f'psi = "{to_source(scenario.boundary.psi)}"')
    source = scenario.source if scenario.source is not None else Num(0.0)
    lines.append(f'source = "{to_source(source)}"')

    cfg = scenario.config
    lines += [
        "",
        "[solver]",
        f"newton_tol = {_fmt(cfg.newton_tol)}",
        f"max_newton = {cfg.max_newton}",
        f"max_picard = {cfg.max_picard}",
    ]

    out = scenario.output or OutputConfig(directory="out")
    lines += ["", "[output]", f"dir = {out.directory}", f"frames = {out.frames_mode}", ""]
    return "\n".join(lines)


def scenario_hash(scenario):
    return hashlib.sha256(format_scenario(scenario).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# frame output


def _selected_stamps(field, mode):
    if mode == "all":
        return list(range(field.n_stamps))
    picks = [int(field.stamps_of_slice(k)[0]) for k in range(field.plan.n_slices)]
    picks.append(field.n_stamps - 1)
    return picks


def write_frames(field, out_dir, mode="knots", scenario_digest=""):
    """Write one text file per selected stamp plus a manifest.

    Columns: t, x (and y in 2D), u (NaN outside active + ghost), the
    active flag (1 active / 0 ghost / -1 outside) and the total extension.
    Everything prints with 17 significant digits; output is
    byte-reproducible for identical runs.
    """
    os.makedirs(out_dir, exist_ok=True)
    coords = field.plan.masks[0].grid.node_coords()
    dim = coords.shape[1]
    header = "# t x" + (" y" if dim == 2 else "") + " u active u_ext"
    paths = []
    manifest_rows = []
    for j, i in enumerate(_selected_stamps(field, mode)):
        mask = field.mask_at(i)
        flags = np.where(mask.active.ravel(), 1, np.where(mask.ghost.ravel(), 0, -1))
        t = float(field.times[i])
        u = field.frames[i].ravel()
        ue = field.extended[i].ravel()
        name = f"frame_{j:05d}.txt"
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for n in range(len(u)):
                cells = [f"{t:.17g}"] + [f"{c:.17g}" for c in coords[n]]
                cells += [f"{u[n]:.17g}", str(int(flags[n])), f"{ue[n]:.17g}"]
                fh.write(" ".join(cells) + "\n")
        paths.append(path)
        manifest_rows.append(f"{j} {int(field.slice_index[i])} {t:.17g} {name}")
    manifest = os.path.join(out_dir, "manifest.txt")
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write(f"scenario_hash {scenario_digest or 'unknown'}\n")
        fh.write(f"delta {field.plan.delta:.17g}\n")
        fh.write("knots " + " ".join(f"{k:.17g}" for k in field.plan.knots) + "\n")
        fh.write("frames:\n")
        for row in manifest_rows:
            fh.write(row + "\n")
    paths.append(manifest)
    return paths
