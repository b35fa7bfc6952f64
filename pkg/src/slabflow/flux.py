"""Nonlinear flux models A(t, x, z, xi) and their structural checks.

Builtin kinds (all with the gradient regularised through
s = |xi|^2 + eps_reg^2):

    p_laplacian       A = s^((p-2)/2) * xi
    linear_diffusion  A = xi                     (p = 2)
    z_modulated       A = (1 + sin(z)^2 / 2) * s^((p-2)/2) * xi

plus ``custom`` fluxes given as one expression per component over
t, x, y, z, xi1, xi2.  Builtins carry their structural constants
(growth, coercivity, offsets, z-Lipschitz bound, time modulus); custom
fluxes declare them and ``check_structure`` samples whether the declared
inequalities actually hold.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import JacobianSingularError, NumericInputError, SlabflowError
from .expressions import evaluate as eval_expr

STRUCTURE_TOLERANCE = 1e-12  # slack for roundoff + O(eps_reg^(p-1)) regularisation


@dataclass(frozen=True)
class FluxModel:
    """A flux together with the constants of its structure conditions."""

    kind: str
    p: float
    dim: int = 1
    eps_reg: float = 1e-8
    growth_c: float = 1.0
    coercivity_alpha: float = 1.0
    lower_b: float = 0.0
    lower_d: float = 0.0
    z_lipschitz: float = 0.0
    time_modulus: object = None  # expression in r, or None for 0
    components: tuple = ()  # custom only: expression per component
    fd_step: float = 1e-6

    def __post_init__(self):
        if self.kind not in ("p_laplacian", "linear_diffusion", "z_modulated", "custom"):
            raise SlabflowError(f"unknown flux kind {self.kind!r}")
        if not self.p > 1:
            raise SlabflowError(f"p must exceed 1, got {self.p}")
        if self.dim not in (1, 2):
            raise SlabflowError(f"dim must be 1 or 2, got {self.dim}")
        if self.eps_reg < 0:
            raise SlabflowError(f"eps_reg must be >= 0, got {self.eps_reg}")
        if self.kind == "custom" and len(self.components) != self.dim:
            raise SlabflowError(
                f"custom flux needs {self.dim} component expression(s), got {len(self.components)}"
            )

    # -- constructors -------------------------------------------------------

    @staticmethod
    def p_laplacian(p, dim=1, eps_reg=1e-8):
        return FluxModel(kind="p_laplacian", p=float(p), dim=dim, eps_reg=float(eps_reg))

    @staticmethod
    def linear_diffusion(dim=1):
        return FluxModel(kind="linear_diffusion", p=2.0, dim=dim, eps_reg=0.0)

    @staticmethod
    def z_modulated(p, dim=1, eps_reg=1e-8):
        # modulation m(z) = 1 + sin(z)^2/2 in [1, 3/2], |m'| <= 1
        return FluxModel(
            kind="z_modulated", p=float(p), dim=dim, eps_reg=float(eps_reg),
            growth_c=1.5, coercivity_alpha=1.0, z_lipschitz=1.0,
        )

    @staticmethod
    def custom(components, p, dim=1, eps_reg=1e-8, growth_c=1.0, coercivity_alpha=1.0,
               lower_b=0.0, lower_d=0.0, z_lipschitz=0.0, time_modulus=None, fd_step=1e-6):
        return FluxModel(
            kind="custom", p=float(p), dim=dim, eps_reg=float(eps_reg),
            growth_c=float(growth_c), coercivity_alpha=float(coercivity_alpha),
            lower_b=float(lower_b), lower_d=float(lower_d),
            z_lipschitz=float(z_lipschitz), time_modulus=time_modulus,
            components=tuple(components), fd_step=float(fd_step),
        )

    @property
    def is_builtin(self):
        return self.kind != "custom"

    def modulus(self, r):
        """Continuity-in-(t, x) modulus omega(r); identically 0 by default."""
        r = np.asarray(r, dtype=float)
        if self.time_modulus is None:
            return np.zeros_like(r)
        return np.asarray(eval_expr(self.time_modulus, {"r": r}), dtype=float)


def _modulation(flux, z):
    if flux.kind == "z_modulated":
        return 1.0 + 0.5 * np.sin(z) ** 2
    return 1.0 if np.isscalar(z) else np.ones_like(np.asarray(z, dtype=float))


def _custom_env(flux, t, x, z, xi):
    env = {"t": t, "x": x[..., 0], "z": z, "xi1": xi[..., 0]}
    if flux.dim == 2:
        env["y"] = x[..., 1]
        env["xi2"] = xi[..., 1]
    else:
        env["y"] = np.zeros_like(env["x"])
        env["xi2"] = np.zeros_like(env["xi1"])
    return env


def evaluate_many(flux, t, x, z, xi):
    """Vectorised flux evaluation.

    ``x``, ``xi``: (n, dim); ``z``: (n,); ``t``: scalar or (n,).
    Returns (n, dim).  The gradient slot is total for every p > 1: at
    s = 0 the continuous extension A = 0 is used.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if flux.kind == "custom":
        out = [
            np.asarray(eval_expr(comp, _custom_env(flux, t, x, z, xi)), dtype=float)
            for comp in flux.components
        ]
        return np.stack(np.broadcast_arrays(*out, z * 0.0)[: flux.dim], axis=-1)
    if flux.kind == "linear_diffusion":
        return xi.copy()
    s = np.sum(xi * xi, axis=-1) + flux.eps_reg**2
    expo = 0.5 * (flux.p - 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(s > 0.0, s**expo, 0.0)
    # s == 0 only happens without regularisation; |xi|^(p-1) -> 0 there
    g = np.where(s > 0.0, g, 0.0)
    return (_modulation(flux, z) * g)[..., None] * xi


def evaluate_flux(flux, t, x, z, xi):
    """Single-point flux evaluation; validates inputs are finite."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    vals = np.concatenate([[t], x, [z], xi])
    if not np.all(np.isfinite(vals)):
        raise NumericInputError(f"non-finite flux arguments: t={t}, x={x}, z={z}, xi={xi}")
    return evaluate_many(flux, float(t), x[None, :], np.array([float(z)]), xi[None, :])[0]


def jacobian_xi(flux, t, x, z, xi):
    """Derivative of the flux in its gradient slot, shape (dim, dim).

    Analytic for builtins; symmetric central differences (step
    fd_step * (1 + |xi|)) for custom fluxes.  Without regularisation the
    derivative blows up at xi = 0 when p < 2; that raises.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if flux.kind == "custom":
        step = flux.fd_step * (1.0 + float(np.linalg.norm(xi)))
        jac = np.empty((flux.dim, flux.dim))
        for j in range(flux.dim):
            dxi = np.zeros(flux.dim)
            dxi[j] = step
            hi = evaluate_flux(flux, t, x, z, xi + dxi)
            lo = evaluate_flux(flux, t, x, z, xi - dxi)
            jac[:, j] = (hi - lo) / (2.0 * step)
        return jac
    if flux.kind == "linear_diffusion":
        return np.eye(flux.dim)
    s = float(np.dot(xi, xi)) + flux.eps_reg**2
    m = float(_modulation(flux, float(z)))
    if s == 0.0:
        if flux.p < 2.0:
            raise JacobianSingularError(
                f"gradient Jacobian singular at xi=0 for p={flux.p} without regularisation"
            )
        if flux.p == 2.0:
            return m * np.eye(flux.dim)
        return np.zeros((flux.dim, flux.dim))
    g = s ** (0.5 * (flux.p - 2.0))
    gprime_2 = (flux.p - 2.0) * s ** (0.5 * (flux.p - 4.0))  # 2 * g'(s)
    return m * (g * np.eye(flux.dim) + gprime_2 * np.outer(xi, xi))


def _diag_jacobian_many(flux, t, x, z, xi, axis):
    """d(A_axis)/d(xi_axis) at many points (used for the Newton stencil)."""
    if flux.kind == "custom":
        step = flux.fd_step * (1.0 + np.abs(xi[:, axis]))
        hi = xi.copy()
        hi[:, axis] += step
        lo = xi.copy()
        lo[:, axis] -= step
        fhi = evaluate_many(flux, t, x, z, hi)[:, axis]
        flo = evaluate_many(flux, t, x, z, lo)[:, axis]
        return (fhi - flo) / (2.0 * step)
    if flux.kind == "linear_diffusion":
        return np.ones(len(xi))
    s = np.sum(xi * xi, axis=-1) + flux.eps_reg**2
    m = _modulation(flux, z)
    out = np.zeros(len(xi))
    pos = s > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(pos, s ** (0.5 * (flux.p - 2.0)), 0.0)
        gp2 = np.where(pos, (flux.p - 2.0) * s ** (0.5 * (flux.p - 4.0)), 0.0)
    out = m * (g + gp2 * xi[:, axis] ** 2)
    if flux.p < 2.0 and np.any(~pos):
        raise JacobianSingularError(
            f"gradient Jacobian singular at xi=0 for p={flux.p} without regularisation"
        )
    return np.where(pos, out, m * (1.0 if flux.p == 2.0 else 0.0) * np.ones(len(xi)))


def _dz_many(flux, t, x, z, xi, axis):
    """d(A_axis)/dz at many points (z enters the stencil via face means)."""
    if flux.kind == "custom":
        step = flux.fd_step * (1.0 + np.abs(z))
        fhi = evaluate_many(flux, t, x, z + step, xi)[:, axis]
        flo = evaluate_many(flux, t, x, z - step, xi)[:, axis]
        return (fhi - flo) / (2.0 * step)
    if flux.kind != "z_modulated":
        return np.zeros(len(xi))
    s = np.sum(xi * xi, axis=-1) + flux.eps_reg**2
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(s > 0.0, s ** (0.5 * (flux.p - 2.0)), 0.0)
    return np.sin(z) * np.cos(z) * g * xi[:, axis]


# ---------------------------------------------------------------------------
# Structure checking


@dataclass(frozen=True)
class ConditionResult:
    margin: float
    passed: bool
    worst: dict = field(compare=False, default_factory=dict)


@dataclass(frozen=True)
class StructureReport:
    """Sampled worst-case margins of the flux structure conditions.

    A margin is how far the inequality held at its worst sample
    (nonnegative = satisfied); ``passed`` allows roundoff slack of
    ``tolerance``.  Deterministic for a fixed seed.
    """

    kind: str
    p: float
    samples: int
    seed: int
    box: dict
    tolerance: float
    conditions: dict

    @property
    def passed(self):
        return all(c.passed for c in self.conditions.values())

    def summary_lines(self):
        lines = []
        for name, cond in self.conditions.items():
            status = "PASS" if cond.passed else "FAIL"
            lines.append(f"{status} {name:16s} margin={cond.margin: .6e}")
        return lines


DEFAULT_SAMPLE_BOX = {"t": (0.0, 1.0), "x": (-1.0, 1.0), "z": (-2.0, 2.0), "xi": (-2.0, 2.0)}


def _worst(margins, idx_args):
    i = int(np.argmin(margins))
    return float(margins[i]), {k: (v[i].copy() if hasattr(v[i], "copy") else v[i]) for k, v in idx_args.items()}


def check_structure(flux, samples=10000, seed=0, box=None, tolerance=STRUCTURE_TOLERANCE):
    """Sample the structure conditions over a box of arguments.

    Checked, each at ``samples`` seeded draws:

    - growth:        |A| <= c |xi|^(p-1) + b
    - coercivity:    A . xi >= alpha |xi|^p - d
    - monotonicity:  (A(xi) - A(eta)) . (xi - eta) >= 0
    - continuity:    |A(t,x,z,xi) - A(s,y,w,xi)| <= (omega(|t-s| + |x-y|) + C |z-w|) |xi|^(p-1)
    - zero_at_zero:  A(.,.,.,0) = 0
    - nonneg_pairing: A . xi >= 0
    """
    box = {**DEFAULT_SAMPLE_BOX, **(box or {})}
    rng = np.random.default_rng(seed)
    n, d = samples, flux.dim

    def draw(key, shape):
        lo, hi = box[key]
        return rng.uniform(lo, hi, shape)

    t1, t2 = draw("t", n), draw("t", n)
    x1, x2 = draw("x", (n, d)), draw("x", (n, d))
    z1, z2 = draw("z", n), draw("z", n)
    xi1, xi2 = draw("xi", (n, d)), draw("xi", (n, d))

    a1 = evaluate_many(flux, t1, x1, z1, xi1)
    mag1 = np.linalg.norm(a1, axis=-1)
    nrm1 = np.linalg.norm(xi1, axis=-1)
    pairing = np.sum(a1 * xi1, axis=-1)

    conditions = {}

    def record(name, margins, **args):
        margin, worst = _worst(margins, args)
        conditions[name] = ConditionResult(margin=margin, passed=margin >= -tolerance, worst=worst)

    record(
        "growth",
        flux.growth_c * nrm1 ** (flux.p - 1.0) + flux.lower_b - mag1,
        t=t1, x=x1, z=z1, xi=xi1,
    )
    record(
        "coercivity",
        pairing - flux.coercivity_alpha * nrm1**flux.p + flux.lower_d,
        t=t1, x=x1, z=z1, xi=xi1,
    )
    a_other = evaluate_many(flux, t1, x1, z1, xi2)
    record(
        "monotonicity",
        np.sum((a1 - a_other) * (xi1 - xi2), axis=-1),
        t=t1, x=x1, z=z1, xi=xi1, eta=xi2,
    )
    a_moved = evaluate_many(flux, t2, x2, z2, xi1)
    r = np.abs(t1 - t2) + np.linalg.norm(x1 - x2, axis=-1)
    allowance = (flux.modulus(r) + flux.z_lipschitz * np.abs(z1 - z2)) * nrm1 ** (flux.p - 1.0)
    record(
        "continuity",
        allowance - np.linalg.norm(a1 - a_moved, axis=-1),
        t=t1, s=t2, x=x1, y_pt=x2, z=z1, w=z2, xi=xi1,
    )
    a_zero = evaluate_many(flux, t1, x1, z1, np.zeros((n, d)))
    record("zero_at_zero", -np.linalg.norm(a_zero, axis=-1), t=t1, x=x1, z=z1)
    record("nonneg_pairing", pairing, t=t1, x=x1, z=z1, xi=xi1)

    return StructureReport(
        kind=flux.kind, p=flux.p, samples=n, seed=seed, box=box,
        tolerance=tolerance, conditions=conditions,
    )
