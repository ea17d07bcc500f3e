"""Weighted norms, envelope checks and the v_K = lambda compatibility metric."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from savings_hjb.model import BoundConstants, ModelParams, lower_envelope_log, upper_envelope_log
from savings_hjb.pde.grid import Field, Grid2D

NORM_KINDS = ("phi", "phi_tilde", "phi_K2", "phi_N2")


def _log_rational(s, a, b):
    """log(e^(a s) / (e^(b s) + 1)), overflow-free."""
    return a * s - np.logaddexp(b * s, 0.0)


def log_weight(grid: Grid2D, kind: str = "phi", params: Optional[ModelParams] = None) -> np.ndarray:
    """Log of the spatial weight times the Jacobian e^(x+y) of (K, N) -> (x, y)."""
    if kind not in NORM_KINDS:
        raise ValueError(f"kind must be one of {NORM_KINDS}")
    X, Y = grid.mesh()
    lw = _log_rational(X, 6.0, 10.0) + _log_rational(Y, 2.0, 10.0) + X + Y
    if kind == "phi_K2":
        lw = lw + 2.0 * X
    elif kind == "phi_N2":
        lw = lw + 2.0 * Y
    elif kind == "phi_tilde":
        if params is None:
            raise ValueError("phi_tilde needs model parameters")
        b = params.beta
        e = b if b >= params.gamma else params.gamma
        z = Y - X
        lw = lw + np.logaddexp((4.0 - 4.0 * b) * z, (2.0 + 2.0 * e) * z)
    return lw


def weighted_norm(values: np.ndarray, grid: Grid2D, kind: str = "phi",
                  params: Optional[ModelParams] = None) -> float:
    """sqrt of the trapezoidal integral of values^2 * weight dK dN over the box."""
    w = np.exp(log_weight(grid, kind, params))
    integrand = np.asarray(values, dtype=float) ** 2 * w
    return float(np.sqrt(trapezoid(trapezoid(integrand, dx=grid.hy, axis=1), dx=grid.hx)))


def spacetime_norm(values: np.ndarray, grid: Grid2D, times: np.ndarray, kind: str = "phi") -> float:
    """L2 in time of the spatial weighted norm, for (nt, nx, ny) stacks."""
    w = np.exp(log_weight(grid, kind))
    sq = trapezoid(trapezoid(values**2 * w[None], dx=grid.hy, axis=2), dx=grid.hx, axis=1)
    if len(times) < 2:
        return float(np.sqrt(sq[0]))
    return float(np.sqrt(trapezoid(sq, times)))


@dataclass(frozen=True)
class BoundReport:
    """Worst normalised envelope violations over interior nodes and time slices.

    ``interior_margin`` is the fraction of each coordinate range excluded next
    to every edge.
    """

    min_lower_gap: float      # min of (lam - lower)/lower
    max_upper_gap: float      # max of (lam - upper)/upper
    violations: int
    checked: int
    interior_margin: float

    def within(self, tol: float) -> bool:
        return self.min_lower_gap >= -tol and self.max_upper_gap <= tol

    def to_text(self) -> str:
        return (f"interior_margin={self.interior_margin:g} checked={self.checked} "
                f"violations={self.violations} min_lower_gap={self.min_lower_gap:.6g} "
                f"max_upper_gap={self.max_upper_gap:.6g}")


def check_bounds(lam: Field, constants: BoundConstants, interior_margin: float = 0.2) -> BoundReport:
    g = lam.grid
    X, Y = g.mesh()
    mask = g.interior_mask(interior_margin)
    z = (Y - X)[mask]
    lo = lower_envelope_log(z, constants)
    hi = upper_envelope_log(z, constants)
    V = lam.values[:, mask]
    lower_gap = (V - lo) / lo
    upper_gap = (V - hi) / hi
    bad = (V < lo) | (V > hi)
    return BoundReport(float(lower_gap.min()), float(upper_gap.max()), int(bad.sum()), int(V.size),
                       interior_margin)


def compatibility_errors(v: Field, lam: Field, interior_margin: float = 0.2) -> np.ndarray:
    """|dv/dK - lam|/lam per slice and interior node, dv/dK = e^(-x) * central difference in x."""
    if v.grid != lam.grid or v.nt != lam.nt:
        raise ValueError("v and lambda must share grid and time slices")
    g = v.grid
    X, _ = g.mesh()
    dv = np.full(v.values.shape, np.nan)
    dv[:, 1:-1, :] = (v.values[:, 2:, :] - v.values[:, :-2, :]) / (2.0 * g.hx)
    dv = dv * np.exp(-X)[None]
    mask = g.interior_mask(interior_margin)
    mask[0, :] = mask[-1, :] = False
    return np.abs(dv[:, mask] - lam.values[:, mask]) / np.abs(lam.values[:, mask])


def compatibility_check(v: Field, lam: Field, interior_margin: float = 0.2) -> float:
    """Max relative error of v_K against lambda on the interior, all time slices."""
    return float(compatibility_errors(v, lam, interior_margin).max())
