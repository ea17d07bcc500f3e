"""Projected Picard iteration psi -> Gamma(psi) for the nonlinear lambda-equation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from savings_hjb.model import BoundConstants, ModelParams, compute_bound_constants
from savings_hjb.pde.diagnostics import spacetime_norm
from savings_hjb.pde.grid import Field, Grid2D
from savings_hjb.pde.solver import SolverConfig, clamp_to_envelopes, solve_linearized, terminal_condition

log = logging.getLogger(__name__)


@dataclass
class SolveReport:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    clamp_fractions: list = field(default_factory=list)
    dampings: list = field(default_factory=list)
    boundary_influence: float = float("nan")
    converged: bool = False
    dt_pde: float = float("nan")

    def to_text(self) -> str:
        lines = [f"converged: {str(self.converged).lower()}",
                 f"iterations: {self.iterations}",
                 f"dt_pde: {self.dt_pde:.6g}",
                 f"boundary_influence: {self.boundary_influence:.6g}",
                 "iter residual clamp_fraction damping"]
        for k, (r, c, d) in enumerate(zip(self.residuals, self.clamp_fractions, self.dampings), 1):
            lines.append(f"{k} {r:.6e} {c:.6e} {d:g}")
        return "\n".join(lines) + "\n"


def initial_psi(grid: Grid2D, params: ModelParams, n_slices: int) -> Field:
    """Terminal profile held constant in time."""
    term = terminal_condition(grid, params)
    times = np.linspace(0.0, params.T, n_slices)
    return Field(grid, times, np.broadcast_to(term, (n_slices,) + term.shape).copy(), "psi")


def fixed_point_solve(grid: Grid2D, params: ModelParams, solver_config: SolverConfig = SolverConfig(),
                      constants: Optional[BoundConstants] = None, psi0: Optional[Field] = None,
                      measure_boundary: bool = False):
    """Iterate psi^{k+1} = clamp_S(d lam^k + (1-d) psi^k) with lam^k = Gamma(psi^k).

    The residual of iteration k is |lam^k - lam^{k-1}| / |lam^k| in the
    phi-weighted space-time L2 norm (lam^{-1} := psi^0).  The damping d is
    halved when the residual grows, at most ``max_damping_halvings`` times.
    Returns (lam, report); non-convergence is reported, not raised.
    """
    cfg = solver_config
    constants = constants or compute_bound_constants(params)
    psi = psi0 if psi0 is not None else initial_psi(grid, params, cfg.n_slices)
    times = psi.times
    damping = cfg.damping
    halvings = 0
    report = SolveReport()
    prev = psi.values
    lam = None
    for k in range(1, cfg.max_picard_iters + 1):
        lam = solve_linearized(psi, grid, params, cfg, constants=constants)
        report.dt_pde = lam.dt_pde
        res = spacetime_norm(lam.values - prev, grid, times) / spacetime_norm(lam.values, grid, times)
        if report.residuals and res > report.residuals[-1] and halvings < cfg.max_damping_halvings:
            damping *= 0.5
            halvings += 1
        report.residuals.append(res)
        report.dampings.append(damping)
        report.iterations = k
        mixed = damping * lam.values + (1.0 - damping) * psi.values
        clamped, frac = clamp_to_envelopes(mixed, grid, constants)
        report.clamp_fractions.append(frac)
        log.debug("picard %d residual %.3e clamp %.3e damping %g", k, res, frac, damping)
        if res < cfg.picard_tol:
            report.converged = True
            break
        prev = lam.values
        psi = Field(grid, times, clamped, "psi")
    if measure_boundary:
        report.boundary_influence = boundary_influence(psi, grid, params, cfg, constants, lam)
    return lam, report


def boundary_influence(psi: Field, grid: Grid2D, params: ModelParams, cfg: SolverConfig,
                       constants: BoundConstants, lam: Field, interior_margin: float = 0.2) -> float:
    """Max interior relative change of Gamma(psi) at t=0 when the edge closure is swapped."""
    other = "envelope_dirichlet" if cfg.boundary == "linear_extrapolation" else "linear_extrapolation"
    alt = solve_linearized(psi, grid, params, cfg.replace(boundary=other), constants=constants)
    mask = grid.interior_mask(interior_margin)
    return float(np.max(np.abs(alt.values[0][mask] - lam.values[0][mask]) / lam.values[0][mask]))


def apply_map(lam: Field, params: ModelParams, solver_config: SolverConfig = SolverConfig(),
              constants: Optional[BoundConstants] = None) -> Field:
    """One application of Gamma to the clamped field."""
    constants = constants or compute_bound_constants(params)
    clamped, _ = clamp_to_envelopes(lam.values, lam.grid, constants)
    return solve_linearized(Field(lam.grid, lam.times, clamped, "psi"), lam.grid, params, solver_config,
                            constants=constants)
