"""Implicit time stepping of one frozen-domain slice.

On a slice the domain is a fixed node mask, Dirichlet data psi lives on
the ghost ring, and each substep solves backward Euler

    (u - u_in) / tau - div A(t_freeze, x, u, grad u) - f(t_to, x) = 0

on the active nodes.  The divergence is face-centred: per axis, the
normal gradient component is the one-sided difference across the face,
the solution slot z is the arithmetic mean of the endpoints, and (2D)
the transverse component is the average of the endpoints' central
differences (one-sided or zero where the frame is undefined).  With a
linear flux this collapses to the standard (2d+1)-point Laplacian.

The nonlinear systems run damped Newton (residual-norm backtracking,
shrink 0.5 down to steps of 2^-20) with the stencil Jacobian taken in
the face-normal and z slots; if Newton stalls, a lagged-coefficient
(secant diffusivity) fixed-point iteration takes over.  Exhausting both
raises :class:`SolverStallError` with the residual history.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix, identity
from scipy.sparse.linalg import spsolve

from .errors import NumericInputError, SolverStallError
from .expressions import evaluate as eval_expr
from .flux import _diag_jacobian_many, _dz_many, evaluate_many


def eval_on_points(expr, t, points):
    """Evaluate an expression of (t, x[, y]) on (n, dim) points."""
    points = np.atleast_2d(points)
    env = {"t": t, "x": points[:, 0]}
    if points.shape[1] > 1:
        env["y"] = points[:, 1]
    out = eval_expr(expr, env)
    return np.broadcast_to(np.asarray(out, dtype=float), (len(points),)).copy()


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-10
    max_newton: int = 50
    max_picard: int = 200
    line_search_shrink: float = 0.5
    min_line_step: float = 2.0**-20


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet extension data psi(t, x) with optional analytic
    derivatives; missing ones fall back to central differences."""

    psi: object
    psi_t: object = None
    grad_psi: tuple = None
    fd_step: float = 1e-6

    def values(self, t, points):
        return eval_on_points(self.psi, t, points)

    def time_derivative(self, t, points):
        if self.psi_t is not None:
            return eval_on_points(self.psi_t, t, points)
        dt = self.fd_step * (1.0 + abs(t))
        return (self.values(t + dt, points) - self.values(t - dt, points)) / (2.0 * dt)

    def gradient(self, t, points):
        points = np.atleast_2d(points)
        dim = points.shape[1]
        if self.grad_psi is not None:
            return np.column_stack([eval_on_points(g, t, points) for g in self.grad_psi])
        out = np.empty_like(points)
        for a in range(dim):
            step = self.fd_step * (1.0 + np.abs(points[:, a]).max(initial=0.0))
            hi = points.copy()
            hi[:, a] += step
            lo = points.copy()
            lo[:, a] -= step
            out[:, a] = (self.values(t, hi) - self.values(t, lo)) / (2.0 * step)
        return out


@dataclass(frozen=True)
class SliceProblem:
    """One frozen-domain slice: mask, flux (time argument frozen at
    ``freeze_time``), span to integrate over, data and solver knobs."""

    mask: object
    flux: object
    freeze_time: float
    span: tuple
    substeps: int
    boundary: BoundaryData
    initial: np.ndarray
    source: object = None
    config: SolverConfig = SolverConfig()


@dataclass
class StepStats:
    newton_iterations: int
    picard_iterations: int
    residual: float
    history: list = field(default_factory=list)


@dataclass
class SliceSolution:
    problem: SliceProblem
    times: np.ndarray
    frames: list
    stats: list


# ---------------------------------------------------------------------------
# Face stencil machinery


class _Stencil:
    """Static face indexing for one mask; reused across substeps/iterations."""

    def __init__(self, mask, flux):
        self.mask = mask
        self.flux = flux
        grid = mask.grid
        self.grid = grid
        self.shape = grid.shape
        self.dim = grid.dim
        self.defined = mask.defined
        self.active = mask.active
        self.active_flat = np.flatnonzero(mask.active.ravel())
        self.n_active = len(self.active_flat)
        rank = np.full(grid.n_nodes, -1, dtype=np.int64)
        rank[self.active_flat] = np.arange(self.n_active)
        self.rank = rank
        self.active_points = grid.node_coords()[self.active_flat]
        self.ghost_flat = np.flatnonzero(mask.ghost.ravel())
        self.ghost_points = grid.node_coords()[self.ghost_flat]

        self.axes = []
        coords = [grid.axis_nodes(a) for a in range(self.dim)]
        for a in range(self.dim):
            h = grid.spacing[a]
            if self.dim == 1:
                ok = self.defined[1:] & self.defined[:-1]
                fidx = np.nonzero(ok)
                lo_flat = fidx[0]
                hi_flat = fidx[0] + 1
                mids = np.column_stack([coords[0][fidx[0]] + 0.5 * h])
            else:
                if a == 0:
                    ok = self.defined[1:, :] & self.defined[:-1, :]
                    fidx = np.nonzero(ok)
                    mids = np.column_stack(
                        [coords[0][fidx[0]] + 0.5 * h, coords[1][fidx[1]]]
                    )
                    lo_flat = fidx[0] * self.shape[1] + fidx[1]
                    hi_flat = (fidx[0] + 1) * self.shape[1] + fidx[1]
                else:
                    ok = self.defined[:, 1:] & self.defined[:, :-1]
                    fidx = np.nonzero(ok)
                    mids = np.column_stack(
                        [coords[0][fidx[0]], coords[1][fidx[1]] + 0.5 * h]
                    )
                    lo_flat = fidx[0] * self.shape[1] + fidx[1]
                    hi_flat = fidx[0] * self.shape[1] + fidx[1] + 1
            self.axes.append(
                {
                    "h": h,
                    "fidx": fidx,
                    "mids": mids,
                    "lo": lo_flat,
                    "hi": hi_flat,
                    "lo_rank": rank[lo_flat],
                    "hi_rank": rank[hi_flat],
                }
            )

    # -- face field values ---------------------------------------------------

    def _node_transverse(self, u, axis, h):
        """Average of the available one-sided differences along ``axis`` at
        every node (central where both neighbours are defined)."""
        d = np.zeros(self.shape)
        w = np.zeros(self.shape)
        if axis == 0:
            valid = self.defined[1:, :] & self.defined[:-1, :]
            diff = np.where(valid, (u[1:, :] - u[:-1, :]) / h, 0.0)
            d[:-1, :] += diff
            w[:-1, :] += valid
            d[1:, :] += diff
            w[1:, :] += valid
        else:
            valid = self.defined[:, 1:] & self.defined[:, :-1]
            diff = np.where(valid, (u[:, 1:] - u[:, :-1]) / h, 0.0)
            d[:, :-1] += diff
            w[:, :-1] += valid
            d[:, 1:] += diff
            w[:, 1:] += valid
        return np.where(w > 0, d / np.maximum(w, 1), 0.0)

    def face_fields(self, u):
        """Per axis: (xi_full, z, normal_xi) at the defined faces."""
        out = []
        for a, ax in enumerate(self.axes):
            h = ax["h"]
            fidx = ax["fidx"]
            if self.dim == 1:
                xi_n = ((u[1:] - u[:-1]) / h)[fidx]
                z = (0.5 * (u[1:] + u[:-1]))[fidx]
                xi = xi_n[:, None]
            else:
                other = 1 - a
                ndt = self._node_transverse(u, other, self.grid.spacing[other])
                if a == 0:
                    xi_n = ((u[1:, :] - u[:-1, :]) / h)[fidx]
                    z = (0.5 * (u[1:, :] + u[:-1, :]))[fidx]
                    tv = (0.5 * (ndt[1:, :] + ndt[:-1, :]))[fidx]
                    xi = np.column_stack([xi_n, tv])
                else:
                    xi_n = ((u[:, 1:] - u[:, :-1]) / h)[fidx]
                    z = (0.5 * (u[:, 1:] + u[:, :-1]))[fidx]
                    tv = (0.5 * (ndt[:, 1:] + ndt[:, :-1]))[fidx]
                    xi = np.column_stack([tv, xi_n])
            out.append((xi, z, xi_n))
        return out

    def divergence(self, t_freeze, u):
        """div A at the active nodes (compact array, active order)."""
        fields = self.face_fields(u)
        div = np.zeros(self.n_active)
        for a, ax in enumerate(self.axes):
            xi, z, _ = fields[a]
            F = evaluate_many(self.flux, t_freeze, ax["mids"], z, xi)[:, a]
            h = ax["h"]
            lo_r, hi_r = ax["lo_rank"], ax["hi_rank"]
            sel = lo_r >= 0
            np.add.at(div, lo_r[sel], F[sel] / h)
            sel = hi_r >= 0
            np.subtract.at(div, hi_r[sel], F[sel] / h)
        return div

    def jacobian_entries(self, t_freeze, u):
        """COO data of d(div)/d(u_active).

        Differentiates each face flux in its normal-gradient and z slots
        (transverse coupling is dropped -- exact for 1D and for any flux
        whose component depends only on its own slot, quasi-Newton else).
        """
        fields = self.face_fields(u)
        rows, cols, vals = [], [], []
        for a, ax in enumerate(self.axes):
            xi, z, _ = fields[a]
            h = ax["h"]
            dA = _diag_jacobian_many(self.flux, t_freeze, ax["mids"], z, xi, a)
            dz = _dz_many(self.flux, t_freeze, ax["mids"], z, xi, a)
            dF_lo = -dA / h + 0.5 * dz
            dF_hi = dA / h + 0.5 * dz
            lo_r, hi_r = ax["lo_rank"], ax["hi_rank"]
            for row, sign in ((lo_r, 1.0), (hi_r, -1.0)):
                r_ok = row >= 0
                for col, dF in ((lo_r, dF_lo), (hi_r, dF_hi)):
                    sel = r_ok & (col >= 0)
                    rows.append(row[sel])
                    cols.append(col[sel])
                    vals.append(sign * dF[sel] / h)
        return (
            np.concatenate(rows) if rows else np.empty(0, dtype=np.int64),
            np.concatenate(cols) if cols else np.empty(0, dtype=np.int64),
            np.concatenate(vals) if vals else np.empty(0),
        )

    def newton_matrix(self, t_freeze, u, tau):
        rows, cols, vals = self.jacobian_entries(t_freeze, u)
        jdiv = coo_matrix((vals, (rows, cols)), shape=(self.n_active, self.n_active))
        return (identity(self.n_active) / tau - jdiv).tocsc()

    def lagged_matrix_and_div(self, t_freeze, u):
        """Linearised operator with per-face secant diffusivities: the face
        flux is replaced by c_f * (normal difference), c_f >= 0 frozen at
        the current iterate."""
        fields = self.face_fields(u)
        rows, cols, vals = [], [], []
        div = np.zeros(self.n_active)
        for a, ax in enumerate(self.axes):
            xi, z, xi_n = fields[a]
            h = ax["h"]
            F = evaluate_many(self.flux, t_freeze, ax["mids"], z, xi)[:, a]
            dA = _diag_jacobian_many(self.flux, t_freeze, ax["mids"], z, xi, a)
            with np.errstate(divide="ignore", invalid="ignore"):
                c = np.where(np.abs(xi_n) > 1e-30, F / xi_n, dA)
            c = np.maximum(c, 0.0)
            lo_r, hi_r = ax["lo_rank"], ax["hi_rank"]
            Flin = c * xi_n
            sel = lo_r >= 0
            np.add.at(div, lo_r[sel], Flin[sel] / h)
            sel = hi_r >= 0
            np.subtract.at(div, hi_r[sel], Flin[sel] / h)
            dF_lo, dF_hi = -c / h, c / h
            for row, sign in ((lo_r, 1.0), (hi_r, -1.0)):
                r_ok = row >= 0
                for col, dF in ((lo_r, dF_lo), (hi_r, dF_hi)):
                    sel = r_ok & (col >= 0)
                    rows.append(row[sel])
                    cols.append(col[sel])
                    vals.append(sign * dF[sel] / h)
        jdiv = coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_active, self.n_active),
        )
        return jdiv, div


def discrete_flux_divergence(mask, flux, t_freeze, frame):
    """Face-centred divergence of the flux at the active nodes.

    ``frame`` is a full-grid array defined on active + ghost nodes; the
    result is a compact array in active (C-order) node order.
    """
    return _Stencil(mask, flux).divergence(t_freeze, frame)


# ---------------------------------------------------------------------------
# Implicit stepping


def _source_values(problem, stencil, t):
    if problem.source is None:
        return np.zeros(stencil.n_active)
    return eval_on_points(problem.source, t, stencil.active_points)


def _implicit_step_impl(problem, stencil, frame_in, t_from, t_to):
    cfg = problem.config
    tau = t_to - t_from
    if tau <= 0:
        raise ValueError(f"step must advance time, got [{t_from}, {t_to}]")
    u = frame_in.copy()
    if len(stencil.ghost_flat):
        u.ravel()[stencil.ghost_flat] = problem.boundary.values(t_to, stencil.ghost_points)
    u_in_act = frame_in.ravel()[stencil.active_flat]
    f_act = _source_values(problem, stencil, t_to)

    def residual(v):
        vact = v.ravel()[stencil.active_flat]
        return (vact - u_in_act) / tau - stencil.divergence(problem.freeze_time, v) - f_act

    def with_update(v, delta, lam):
        out = v.copy()
        out.ravel()[stencil.active_flat] += lam * delta
        return out

    r = residual(u)
    r_inf = float(np.max(np.abs(r))) if len(r) else 0.0
    history = [r_inf]
    newton = 0
    stalled = False
    while newton < cfg.max_newton:
        J = stencil.newton_matrix(problem.freeze_time, u, tau)
        delta = spsolve(J, -r)
        r_two = float(np.linalg.norm(r))
        lam = 1.0
        accepted = False
        while lam >= cfg.min_line_step:
            u_try = with_update(u, delta, lam)
            r_try = residual(u_try)
            r_try_inf = float(np.max(np.abs(r_try))) if len(r_try) else 0.0
            if (
                float(np.linalg.norm(r_try)) <= r_two * (1.0 - 1e-4 * lam)
                or r_try_inf <= cfg.newton_tol
            ):
                u, r, r_inf = u_try, r_try, r_try_inf
                accepted = True
                break
            lam *= cfg.line_search_shrink
        newton += 1
        if accepted:
            history.append(r_inf)
            if r_inf <= cfg.newton_tol:
                break
        else:
            stalled = True
            break

    picard = 0
    if r_inf > cfg.newton_tol:
        while picard < cfg.max_picard:
            jdiv, divlin = stencil.lagged_matrix_and_div(problem.freeze_time, u)
            M = (identity(stencil.n_active) / tau - jdiv).tocsc()
            uact = u.ravel()[stencil.active_flat]
            g_lin = (uact - u_in_act) / tau - divlin - f_act
            u = with_update(u, spsolve(M, -g_lin), 1.0)
            r = residual(u)
            r_inf = float(np.max(np.abs(r))) if len(r) else 0.0
            picard += 1
            history.append(r_inf)
            if r_inf <= cfg.newton_tol:
                break
        if r_inf > cfg.newton_tol:
            raise SolverStallError(
                f"no convergence on [{t_from}, {t_to}]: residual {r_inf:.3e} "
                f"after {newton} Newton + {picard} fallback iterations"
                + (" (Newton line search stalled)" if stalled else ""),
                residual_history=history,
            )
    return u, StepStats(
        newton_iterations=newton, picard_iterations=picard, residual=r_inf, history=history
    )


def implicit_step(problem, frame_in, t_from, t_to):
    """One backward-Euler substep; returns (frame_out, stats).

    ``frame_out`` keeps the input's undefined nodes untouched, carries
    psi(t_to) on the ghost ring and the implicit solution on the active set.
    """
    stencil = _Stencil(problem.mask, problem.flux)
    return _implicit_step_impl(problem, stencil, frame_in, t_from, t_to)


def solve_slice(problem):
    """Integrate the slice over its span with uniform substeps."""
    t0, t1 = problem.span
    if not (t1 > t0):
        raise ValueError(f"empty slice span {problem.span}")
    if problem.substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {problem.substeps}")
    stencil = _Stencil(problem.mask, problem.flux)
    init = problem.initial
    if not np.all(np.isfinite(init.ravel()[np.flatnonzero(problem.mask.defined.ravel())])):
        raise NumericInputError("initial frame has non-finite values on active/ghost nodes")
    times = np.linspace(t0, t1, problem.substeps + 1)
    frames = [init.copy()]
    stats = []
    for m in range(problem.substeps):
        frame, st = _implicit_step_impl(problem, stencil, frames[-1], float(times[m]), float(times[m + 1]))
        frames.append(frame)
        stats.append(st)
    return SliceSolution(problem=problem, times=times, frames=frames, stats=stats)
