"""Backward finite-difference solver for the linearized marginal-value equation.

In (x, y) = (ln K, ln N) the marginal value lambda solves

    lam_t + b_x lam_x + b_y lam_y + eps^2/2 lam_xx + sigma^2/2 lam_yy + r lam = 0,
    b_x = -e^(y-x) j(psi) + A e^((1-beta)(y-x)) + eps^2/2,
    b_y = f(e^y)/e^y - sigma^2/2,
    r   = A beta e^((1-beta)(y-x)),

with lam(T) = e^(gamma (y-x)).  Convection is upwinded on the sign of the
drift.  The reaction factor is applied exactly, lam <- lam * exp(r dt), which
keeps every slice positive whatever the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import solve_banded

from savings_hjb.model import (
    BoundConstants,
    ModelParams,
    compute_bound_constants,
    drift_f_over_x,
    lower_envelope_log,
    upper_envelope_log,
)
from savings_hjb.pde.grid import Field, Grid2D
from savings_hjb.pde.kernels import explicit_step

SCHEMES = ("explicit_upwind", "adi_semi_implicit")
BOUNDARIES = ("linear_extrapolation", "envelope_dirichlet")
FORMULATIONS = ("lambda", "w")


class CFLError(ValueError):
    def __init__(self, message, suggested_dt):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class NonFiniteFieldError(ArithmeticError):
    def __init__(self, message, slice_index):
        super().__init__(message)
        self.slice_index = slice_index


@dataclass(frozen=True)
class SolverConfig:
    """Discretisation and iteration settings.

    ``n_slices`` time slices are stored (uniform in [0, T]); the internal step
    is the largest stable one that divides the slice spacing, unless ``dt_pde``
    is given explicitly.
    """

    scheme: str = "explicit_upwind"
    cfl_safety: float = 0.9
    theta_weight: float = 0.1
    max_picard_iters: int = 50
    picard_tol: float = 1e-6
    damping: float = 1.0
    max_damping_halvings: int = 3
    boundary: str = "linear_extrapolation"
    formulation: str = "lambda"
    n_slices: int = 101
    dt_pde: Optional[float] = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}")
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ValueError("cfl_safety must lie in (0,1]")
        if not self.theta_weight > 0.0:
            raise ValueError("theta_weight must be > 0")
        if self.max_picard_iters < 1:
            raise ValueError("max_picard_iters must be >= 1")
        if not self.picard_tol > 0.0:
            raise ValueError("picard_tol must be > 0")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0,1]")
        if self.n_slices < 2:
            raise ValueError("n_slices must be >= 2")
        if self.dt_pde is not None and not self.dt_pde > 0.0:
            raise ValueError("dt_pde must be > 0")

    def replace(self, **kw) -> "SolverConfig":
        return dc_replace(self, **kw)


def terminal_condition(grid: Grid2D, params: ModelParams) -> np.ndarray:
    """u2'(K/N) on the grid, i.e. exp(gamma (y - x))."""
    X, Y = grid.mesh()
    return np.exp(params.gamma * (Y - X))


def value_terminal_condition(grid: Grid2D, params: ModelParams) -> np.ndarray:
    """N u2(K/N) = exp(y + (1-gamma)(x-y)) / (1-gamma)."""
    X, Y = grid.mesh()
    g = params.gamma
    return np.exp(Y + (1.0 - g) * (X - Y)) / (1.0 - g)


def clamp_to_envelopes(values: np.ndarray, grid: Grid2D, constants: BoundConstants):
    """Project onto [lower, upper]; returns (clamped, fraction of entries moved)."""
    X, Y = grid.mesh()
    lo = lower_envelope_log(Y - X, constants)
    hi = upper_envelope_log(Y - X, constants)
    out = np.clip(values, lo, hi)
    moved = np.count_nonzero(out != values) / values.size
    return out, moved


# ---------------------------------------------------------------------------
# coefficients and time stepping


@dataclass
class _Operator:
    """Frozen-in-time parts of a backward convection-diffusion-reaction operator."""

    grid: Grid2D
    bx0: np.ndarray          # psi-independent x-drift, shape (nx, ny)
    by: np.ndarray           # y-drift, shape (ny,)
    Dx: float
    Dy: float
    r: np.ndarray            # reaction rate, (nx, ny) or scalar
    jmax: float              # bound on the psi-dependent part |e^(y-x) j(psi)|
    jcoef: Optional[np.ndarray] = None  # multiplies -e^(y-x) j(psi) in b_x (w form)

    def cfl_dt(self, safety: float) -> float:
        g = self.grid
        bx_max = float(np.max(np.abs(self.bx0))) + self.jmax
        by_max = float(np.max(np.abs(self.by)))
        rate = bx_max / g.hx + by_max / g.hy + 2.0 * self.Dx / g.hx**2 + 2.0 * self.Dy / g.hy**2
        return safety / rate if rate > 0 else math.inf

    def conv_rate(self) -> float:
        g = self.grid
        return (float(np.max(np.abs(self.bx0))) + self.jmax) / g.hx + float(np.max(np.abs(self.by))) / g.hy


def _lambda_operator(grid: Grid2D, params: ModelParams, constants: BoundConstants, with_j: bool):
    X, Y = grid.mesh()
    z = Y - X
    prod = params.A * np.exp((1.0 - params.beta) * z)
    bx0 = prod + 0.5 * params.eps**2
    by = drift_f_over_x(np.exp(grid.y), params) - 0.5 * params.sigma**2
    r = params.beta * prod
    jmax = 0.0
    if with_j:
        jmax = float(np.max(np.exp(z) * lower_envelope_log(z, constants) ** (-1.0 / params.gamma)))
    return _Operator(grid, bx0, np.asarray(by, dtype=float), 0.5 * params.eps**2, 0.5 * params.sigma**2,
                     r, jmax)


def _rho_parts(grid: Grid2D, params: ModelParams, theta: float):
    """rho, rho_z/rho and rho_zz/rho for rho = e^((beta+theta) z) + e^(gamma z)."""
    X, Y = grid.mesh()
    z = Y - X
    a1, a2 = params.beta + theta, params.gamma
    e1, e2 = np.exp(a1 * z), np.exp(a2 * z)
    rho = e1 + e2
    return rho, (a1 * e1 + a2 * e2) / rho, (a1**2 * e1 + a2**2 * e2) / rho


def _w_operator(grid: Grid2D, params: ModelParams, constants: BoundConstants, theta: float, with_j: bool):
    """Operator for w = lam / rho; rho depends on z = y - x only."""
    op = _lambda_operator(grid, params, constants, with_j)
    rho, rz, rzz = _rho_parts(grid, params, theta)
    eps2, sig2 = params.eps**2, params.sigma**2
    # lam_x = rho (w_x - rz w), lam_y = rho (w_y + rz w), lam_xx = rho (w_xx - 2 rz w_x + rzz w), ...
    bx0 = op.bx0 - eps2 * rz
    by2 = op.by[None, :] + sig2 * rz
    r = op.r - op.bx0 * rz + op.by[None, :] * rz + 0.5 * (eps2 + sig2) * rzz
    out = _Operator(grid, bx0, by2, op.Dx, op.Dy, r, op.jmax, jcoef=rz)
    out.rho = rho
    return out


def _extrapolate(u: np.ndarray, log_form: bool):
    """Zero second difference across each edge, in log(u) when ``log_form``."""
    if log_form:
        u[0, 1:-1] = u[1, 1:-1] ** 2 / u[2, 1:-1]
        u[-1, 1:-1] = u[-2, 1:-1] ** 2 / u[-3, 1:-1]
        u[:, 0] = u[:, 1] ** 2 / u[:, 2]
        u[:, -1] = u[:, -2] ** 2 / u[:, -3]
    else:
        u[0, 1:-1] = 2.0 * u[1, 1:-1] - u[2, 1:-1]
        u[-1, 1:-1] = 2.0 * u[-2, 1:-1] - u[-3, 1:-1]
        u[:, 0] = 2.0 * u[:, 1] - u[:, 2]
        u[:, -1] = 2.0 * u[:, -2] - u[:, -3]


def _set_edges(u: np.ndarray, edge_values: np.ndarray):
    u[0, :], u[-1, :] = edge_values[0, :], edge_values[-1, :]
    u[:, 0], u[:, -1] = edge_values[:, 0], edge_values[:, -1]


def _upwind(u, bx, by, hx, hy):
    c = u[1:-1, 1:-1]
    dxf = (u[2:, 1:-1] - c) / hx
    dxb = (c - u[:-2, 1:-1]) / hx
    dyf = (u[1:-1, 2:] - c) / hy
    dyb = (c - u[1:-1, :-2]) / hy
    return (np.maximum(bx, 0.0) * dxf + np.minimum(bx, 0.0) * dxb
            + np.maximum(by, 0.0) * dyf + np.minimum(by, 0.0) * dyb)


def _implicit_sweep(u: np.ndarray, D: float, h: float, dt: float, axis: int):
    """Solve (I - dt D delta^2) u_new = u on interior lines along ``axis``; edges held."""
    if not D:
        return u
    a = dt * D / h**2
    v = u if axis == 0 else u.T
    m = v.shape[0] - 2
    ab = np.empty((3, m))
    ab[0, :], ab[1, :], ab[2, :] = -a, 1.0 + 2.0 * a, -a
    rhs = v[1:-1, 1:-1].copy()
    rhs[0, :] += a * v[0, 1:-1]
    rhs[-1, :] += a * v[-1, 1:-1]
    out = v.copy()
    out[1:-1, 1:-1] = solve_banded((1, 1), ab, rhs)
    return out if axis == 0 else out.T


def _time_mesh(T: float, n_slices: int, dt_max: float, dt_fixed: Optional[float]):
    gap = T / (n_slices - 1)
    if dt_fixed is not None:
        sub = max(1, int(round(gap / dt_fixed)))
        if not math.isclose(sub * dt_fixed, gap, rel_tol=1e-9):
            raise ValueError(f"dt_pde={dt_fixed:g} must divide the slice spacing {gap:g}")
        return sub, dt_fixed
    sub = max(1, math.ceil(gap / dt_max * (1.0 - 1e-12)))
    return sub, gap / sub


@dataclass
class _March:
    """Everything needed to run one backward solve."""

    op: _Operator
    terminal: np.ndarray
    jslices: Optional[np.ndarray]           # e^(y-x) j(psi) at each stored slice
    source: Optional[Callable[[float], np.ndarray]]
    log_boundary: bool
    edge_values: Optional[np.ndarray]


def _march(m: _March, T: float, cfg: SolverConfig, quantity: str) -> Field:
    op, g = m.op, m.op.grid
    times = np.linspace(0.0, T, cfg.n_slices)
    explicit = cfg.scheme == "explicit_upwind"
    if explicit:
        dt_max = op.cfl_dt(cfg.cfl_safety)
    else:
        rate = op.conv_rate()
        dt_max = cfg.cfl_safety / rate if rate > 0 else math.inf
    if cfg.dt_pde is not None and cfg.dt_pde > dt_max * (1.0 + 1e-12):
        raise CFLError(f"dt_pde={cfg.dt_pde:g} violates the stability limit; use dt_pde <= {dt_max:.6g}",
                       dt_max)
    sub, dt = _time_mesh(T, cfg.n_slices, dt_max, cfg.dt_pde)
    values = np.empty((cfg.n_slices, g.nx, g.ny))
    u = m.terminal.astype(float).copy()
    values[-1] = u
    if explicit:
        _march_explicit(m, values, times, sub, dt)
    else:
        _march_adi(m, values, times, sub, dt)
    return Field(g, times, values, quantity, dt)


def _full(a, shape):
    return np.ascontiguousarray(np.broadcast_to(np.asarray(a, dtype=float), shape))


def _march_explicit(m: _March, values, times, sub, dt):
    op, g = m.op, m.op.grid
    shape = (g.nx, g.ny)
    bx0 = _full(op.bx0, shape)
    by = _full(op.by[None, :] if op.by.ndim == 1 else op.by, shape)
    growth = _full(np.exp(dt * np.asarray(op.r, dtype=float)), shape)
    wform = op.jcoef is not None
    jcoef = _full(op.jcoef if wform else 0.0, shape)
    use_j = m.jslices is not None
    zeros = np.zeros(shape)
    u = values[-1].copy()
    for k in range(len(times) - 1, 0, -1):
        J0 = m.jslices[k] if use_j else zeros
        J1 = m.jslices[k - 1] if use_j else zeros
        for s in range(sub):
            t = times[k] - s * dt
            src = zeros if m.source is None else _full(m.source(t), shape)
            new = np.empty_like(u)
            explicit_step(u, new, bx0, by, growth, J0, J1, s / sub, jcoef, src, op.Dx, op.Dy,
                          g.hx, g.hy, dt, use_j, m.source is not None, wform)
            _close(new, m)
            u = new
        _store(values, k - 1, u)


def _store(values, k, u):
    if not np.all(np.isfinite(u)):
        raise NonFiniteFieldError(f"non-finite values in time slice {k}", k)
    values[k] = u


def _march_adi(m: _March, values, times, sub, dt):
    """Explicit upwind convection, then implicit diffusion line solves in x and y."""
    op, g = m.op, m.op.grid
    hx, hy = g.hx, g.hy
    inner = (slice(1, -1), slice(1, -1))
    bx0 = op.bx0[inner]
    by = op.by[None, 1:-1] if op.by.ndim == 1 else op.by[inner]
    growth = np.exp(dt * op.r[inner]) if np.ndim(op.r) else math.exp(dt * op.r)
    u = values[-1].copy()
    for k in range(len(times) - 1, 0, -1):
        for s in range(sub):
            t = times[k] - s * dt
            bx = bx0
            extra = 1.0
            if m.jslices is not None:
                w = s / sub
                jt = (1.0 - w) * m.jslices[k][inner] + w * m.jslices[k - 1][inner]
                bx = bx0 - jt
                if op.jcoef is not None:
                    # in w form the j term also contributes +jt * rz to the reaction
                    extra = np.exp(dt * jt * op.jcoef[inner])
            incr = _upwind(u, bx, by, hx, hy)
            if m.source is not None:
                incr = incr + m.source(t)[inner]
            new = u.copy()
            new[inner] = u[inner] + dt * incr
            _close(new, m)
            new = _implicit_sweep(new, op.Dx, hx, dt, 0)
            new = _implicit_sweep(new, op.Dy, hy, dt, 1)
            new[inner] *= growth * extra
            _close(new, m)
            u = new
        _store(values, k - 1, u)


def _close(u, m: _March):
    if m.edge_values is not None:
        _set_edges(u, m.edge_values)
    else:
        _extrapolate(u, m.log_boundary)


def _jslices(psi: Field, grid: Grid2D, params: ModelParams, constants: BoundConstants):
    X, Y = grid.mesh()
    ez = np.exp(Y - X)
    lo = lower_envelope_log(Y - X, constants)
    hi = upper_envelope_log(Y - X, constants)
    return ez[None] * np.clip(psi.values, lo[None], hi[None]) ** (-1.0 / params.gamma)


SourceLike = Union[None, Field, Callable[[float, np.ndarray, np.ndarray], np.ndarray]]


def _source_fn(source: SourceLike, grid: Grid2D):
    if source is None:
        return None
    if isinstance(source, Field):
        return source.slice_at
    X, Y = grid.mesh()
    return lambda t: np.asarray(source(t, X, Y), dtype=float) * np.ones_like(X)


def solve_linearized(psi: Optional[Field], grid: Grid2D, params: ModelParams,
                     solver_config: SolverConfig = SolverConfig(), source: SourceLike = None,
                     constants: Optional[BoundConstants] = None) -> Field:
    """Solve the linear lambda-equation with j evaluated at the envelope-clamped ``psi``.

    ``psi=None`` removes the consumption term (the psi -> infinity limit).
    ``source(t, X, Y)`` or a source Field q is added as lam_t + L lam + q = 0.
    """
    cfg = solver_config
    constants = constants or compute_bound_constants(params)
    if psi is not None:
        if psi.grid != grid:
            raise ValueError("psi must live on the solver grid")
        if not np.all(psi.values > 0.0):
            raise ValueError("psi must be strictly positive")
        if psi.nt != cfg.n_slices or not math.isclose(psi.times[-1], params.T):
            raise ValueError("psi time slices must match solver_config.n_slices on [0, T]")
    jsl = None if psi is None else _jslices(psi, grid, params, constants)
    term = terminal_condition(grid, params)
    X, Y = grid.mesh()
    edges = None
    if cfg.boundary == "envelope_dirichlet":
        z = Y - X
        edges = np.sqrt(lower_envelope_log(z, constants) * upper_envelope_log(z, constants))
    if cfg.formulation == "lambda":
        op = _lambda_operator(grid, params, constants, psi is not None)
        src = _source_fn(source, grid)
        m = _March(op, term, jsl, src, True, edges)
        return _march(m, params.T, cfg, "lambda")
    op = _w_operator(grid, params, constants, cfg.theta_weight, psi is not None)
    rho = op.rho
    base = _source_fn(source, grid)
    src = None if base is None else (lambda t: base(t) / rho)
    m = _March(op, term / rho, jsl, src, True, None if edges is None else edges / rho)
    w = _march(m, params.T, cfg, "w")
    return Field(grid, w.times, w.values * rho[None], "lambda", w.dt_pde)


def stable_dt(grid: Grid2D, params: ModelParams, solver_config: SolverConfig = SolverConfig(),
              constants: Optional[BoundConstants] = None) -> float:
    """Largest internal step the chosen scheme accepts for the lambda solve."""
    constants = constants or compute_bound_constants(params)
    op = _lambda_operator(grid, params, constants, True)
    if solver_config.scheme == "explicit_upwind":
        return op.cfl_dt(solver_config.cfl_safety)
    return solver_config.cfl_safety / op.conv_rate()


def reconstruct_value(lam: Field, grid: Grid2D, params: ModelParams,
                      solver_config: SolverConfig = SolverConfig()) -> Field:
    """Backward solve for v given lambda; the consumption enters through c = j(lambda)."""
    cfg = solver_config
    if lam.grid != grid or lam.nt != cfg.n_slices:
        raise ValueError("lambda must be on the solver grid and time mesh")
    X, Y = grid.mesh()
    g = params.gamma
    eY = np.exp(Y)
    prodw = params.A * np.exp(params.beta * X + (1.0 - params.beta) * Y)
    # N u1(c) - N lam c + A K^beta N^(1-beta) lam with c = lam^(-1/gamma):
    # N c^(1-gamma) gamma/(1-gamma) + A K^beta N^(1-beta) lam
    q_slices = eY[None] * lam.values ** (1.0 - 1.0 / g) * g / (1.0 - g) + prodw[None] * lam.values
    n = cfg.n_slices
    times = lam.times

    def q(t):
        k = min(int(np.searchsorted(times, t, side="right") - 1), n - 2)
        w = (t - times[k]) / (times[k + 1] - times[k])
        return (1.0 - w) * q_slices[k] + w * q_slices[k + 1]

    op = _Operator(grid, np.full(X.shape, -0.5 * params.eps**2),
                   np.asarray(drift_f_over_x(np.exp(grid.y), params) - 0.5 * params.sigma**2, dtype=float),
                   0.5 * params.eps**2, 0.5 * params.sigma**2, 0.0, 0.0)
    m = _March(op, value_terminal_condition(grid, params), None, q, True, None)
    return _march(m, params.T, cfg, "v")
