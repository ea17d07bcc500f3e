"""Finite-difference machinery for the marginal value and the value function."""

from savings_hjb.pde.grid import Field, Grid2D, build_grid, read_field_csv
from savings_hjb.pde.solver import (
    CFLError,
    NonFiniteFieldError,
    SolverConfig,
    clamp_to_envelopes,
    reconstruct_value,
    solve_linearized,
    stable_dt,
    terminal_condition,
    value_terminal_condition,
)
from savings_hjb.pde.diagnostics import (
    BoundReport,
    check_bounds,
    compatibility_check,
    compatibility_errors,
    spacetime_norm,
    weighted_norm,
)
from savings_hjb.pde.fixed_point import SolveReport, apply_map, boundary_influence, fixed_point_solve, initial_psi
