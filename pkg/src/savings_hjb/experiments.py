"""Population and capital studies, transient classification and PDE/MC cross validation."""

from __future__ import annotations

import csv
import enum
import math
import os
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from savings_hjb.feynman_kac import N_SIGMA, fk_estimate_lambda
from savings_hjb.model import ModelParams
from savings_hjb.pde.grid import Field, Grid2D
from savings_hjb.pde.fixed_point import fixed_point_solve
from savings_hjb.pde.solver import SolverConfig
from savings_hjb.sde import Policy, SimConfig, TrajectoryEnsemble, simulate_controlled
from savings_hjb.streams import DEFAULT_SEED
from savings_hjb.svg import emit_svg

PATH_HEADER = ["path", "step", "t", "K", "N", "c"]
FK_PATH_HEADER = ["path", "step", "t", "X1", "X2"]
SUMMARY_HEADER = ["name", "N0", "A", "eps", "sigma", "class", "extremum_t", "extremum_K"]
POP_SUMMARY_HEADER = ["name", "N0", "sigma", "terminal_mean", "abs_error"]

BASE_CELLS = ((1.4, 10.0), (1.4, 1.0), (3.0, 10.0), (3.0, 1.0))
BASE_EPS = (0.0, 0.01, 0.02, 0.03, 0.04, 0.05)


def transient_params(**kw) -> ModelParams:
    """Parameters of the growth study: beta = gamma = 0.5, alpha = 0.5, M = 3, Nbar = 2, T = 5, sigma = 0."""
    base = dict(A=1.0, beta=0.5, gamma=0.5, eps=0.0, sigma=0.0, T=5.0, alpha_f=0.5, M_f=3.0, Nbar=2.0)
    base.update(kw)
    return ModelParams(**base)


# ---------------------------------------------------------------------------
# transient classification


class TransientKind(str, enum.Enum):
    monotone_up = "monotone_up"
    monotone_down = "monotone_down"
    undershoot = "undershoot"
    overshoot = "overshoot"
    indeterminate = "indeterminate"


@dataclass(frozen=True)
class TransientClass:
    kind: TransientKind
    extremum_time: Optional[float] = None
    extremum_value: Optional[float] = None
    noise_ratio: float = 0.0


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; the window shrinks symmetrically at the ends."""
    v = np.asarray(values, dtype=float)
    n = v.size
    half = max(0, (int(window) - 1) // 2)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(n)
    h = np.minimum(np.minimum(idx, n - 1 - idx), half)
    return (c[idx + h + 1] - c[idx - h]) / (2 * h + 1)


def noise_scale(values: np.ndarray, dt: float) -> float:
    """Difference-based volatility of log(values): std of second differences / sqrt(2 dt).

    Smooth drift contributes O(dt^2) per second difference, so the estimate
    isolates the Brownian part of the path.
    """
    L = np.log(np.asarray(values, dtype=float))
    if L.size < 3:
        return 0.0
    return float(np.std(np.diff(L, 2)) / math.sqrt(2.0 * dt))


def detect_transient(series, dt: float, band: float = 0.02, window: int = 25, n_sigma: float = N_SIGMA,
                     reversion_fraction: float = 0.25) -> TransientClass:
    """Classify a capital path.

    Everything is measured in log(K), so the result does not change when the
    series is rescaled.  A leg from K(0) to the smoothed global interior
    extremum is resolved when it exceeds the detection band and n_sigma noise
    scales accumulated over its duration.  The reverting leg must exceed the
    band and give back at least ``reversion_fraction`` of the excursion.
    Monotone requires a resolved net change and no counter-move beyond
    max(band, reversion_fraction * |net|).  The reported extremum value is the
    raw sample at the smoothed extremum.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 3:
        raise ValueError("series needs at least 3 points")
    if not np.all(x > 0.0) or not np.all(np.isfinite(x)):
        raise ValueError("series must be positive and finite")
    if not dt > 0.0:
        raise ValueError("dt must be > 0")
    S = np.log(moving_average(x, window))
    L0 = math.log(x[0])
    n = S.size
    horizon = (n - 1) * dt
    sig = noise_scale(x, dt)
    spread = float(S.max() - S.min())
    ratio = (sig * math.sqrt(horizon) / spread) if spread > 0 else (math.inf if sig > 0 else 0.0)
    drop_band = -math.log1p(-band)
    rise_band = math.log1p(band)

    def resolved(move, tau, thresh):
        return move >= thresh and move >= n_sigma * sig * math.sqrt(tau)

    found = []
    imin = int(np.argmin(S))
    if 0 < imin < n - 1:
        dip = L0 - S[imin]
        rec = float(S[imin:].max() - S[imin])
        if resolved(dip, imin * dt, drop_band) and rec >= max(rise_band, reversion_fraction * dip):
            found.append(TransientClass(TransientKind.undershoot, imin * dt, float(x[imin]), ratio))
    imax = int(np.argmax(S))
    if 0 < imax < n - 1:
        peak = S[imax] - L0
        fall = float(S[imax] - S[imax:].min())
        if resolved(peak, imax * dt, rise_band) and fall >= max(drop_band, reversion_fraction * peak):
            found.append(TransientClass(TransientKind.overshoot, imax * dt, float(x[imax]), ratio))
    if len(found) == 1:
        return found[0]
    if len(found) > 1:
        return TransientClass(TransientKind.indeterminate, None, None, ratio)
    net = float(S[-1] - L0)
    drawdown = float(np.max(np.maximum.accumulate(S) - S))
    drawup = float(np.max(S - np.minimum.accumulate(S)))
    if net > 0 and resolved(net, horizon, rise_band) and drawdown <= max(drop_band, reversion_fraction * net):
        return TransientClass(TransientKind.monotone_up, None, None, ratio)
    if net < 0 and resolved(-net, horizon, drop_band) and drawup <= max(rise_band, -reversion_fraction * net):
        return TransientClass(TransientKind.monotone_down, None, None, ratio)
    return TransientClass(TransientKind.indeterminate, None, None, ratio)


# ---------------------------------------------------------------------------
# specs and CSV plumbing


@dataclass(frozen=True)
class ExperimentSpec:
    """One study: base parameters, initial data, sweeps and output location.

    Capital studies sweep ``cells`` x ``eps_values`` (x ``sigma_values``);
    population studies sweep ``N0_values`` x ``sigma_values``.
    """

    name: str = "capital_grid"
    params: ModelParams = field(default_factory=transient_params)
    policy: str = "proportional"
    K0: float = 2.0
    N0_values: tuple = (1.4, 3.0)
    cells: tuple = BASE_CELLS
    eps_values: tuple = BASE_EPS
    sigma_values: tuple = (0.0,)
    sim_config: SimConfig = field(default_factory=lambda: SimConfig(dt=0.002, n_steps=2500, n_paths=1))
    out_dir: str = "out"
    band: float = 0.02
    window: int = 25
    write_paths: bool = True

    def __post_init__(self):
        for name in ("N0_values", "cells", "eps_values", "sigma_values"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must be non-empty")
        if not self.K0 > 0.0:
            raise ValueError("K0 must be > 0")
        self.sim_config.check_horizon(self.params.T)


def capital_grid_spec(**kw) -> ExperimentSpec:
    return ExperimentSpec(**kw)


def population_spec(**kw) -> ExperimentSpec:
    kw.setdefault("name", "population")
    kw.setdefault("sigma_values", (0.0, 0.05, 0.1))
    return ExperimentSpec(**kw)


def _f(v) -> str:
    return repr(float(v))


def write_paths_csv(path, ens: TrajectoryEnsemble, coords: Sequence[str] = ("K", "N", "c")):
    """One row per (path, step); header ``path,step,t,<coords>``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(["path", "step", "t", *coords]) + "\n")
        cols = [ens[c] for c in coords]
        for i in range(ens.n_paths):
            rows = []
            for k, t in enumerate(ens.times):
                rows.append(",".join([str(i), str(k), _f(t)] + [_f(col[i, k]) for col in cols]))
            fh.write("\n".join(rows) + "\n")
    return path


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _cell_tag(**kv) -> str:
    return "_".join(f"{k}{v:g}" for k, v in kv.items())


def _policy(spec: ExperimentSpec, lambda_field=None) -> Policy:
    if spec.policy == "feedback_field":
        return Policy("feedback_field", lambda_field)
    return Policy(spec.policy)


# ---------------------------------------------------------------------------
# studies


@dataclass
class StudyResult:
    rows: list
    artifacts: list
    classes: dict = field(default_factory=dict)
    clamp_counts: dict = field(default_factory=dict)


def logistic_solution(t, N0: float, params: ModelParams):
    """Closed form of dN = alpha N (Nbar - N) dt, valid while N stays below M."""
    a, nb = params.alpha_f, params.Nbar
    e = np.exp(a * nb * np.asarray(t, dtype=float))
    return nb * N0 * e / (nb + N0 * (e - 1.0))


def run_population_study(spec: ExperimentSpec) -> StudyResult:
    """Simulate N for each (N0, sigma); write per-cell path CSVs, a series CSV and a summary."""
    os.makedirs(spec.out_dir, exist_ok=True)
    rows, artifacts, series = [], [], []
    clamps = {}
    for N0 in spec.N0_values:
        for sig in spec.sigma_values:
            p = spec.params.replace(sigma=sig, eps=0.0, A=0.0)
            ens = simulate_controlled(p, Policy("zero"), spec.K0, N0, spec.sim_config)
            clamps[(N0, sig)] = ens.clamp_counts
            if spec.write_paths:
                artifacts.append(write_paths_csv(os.path.join(spec.out_dir, f"{spec.name}_{_cell_tag(N0=N0, sigma=sig)}"
                                                              "_paths.csv"), ens))
            mean_path = ens["N"].mean(axis=0)
            series.extend([_f(t), _f(N0), _f(sig), _f(v)] for t, v in zip(ens.times, mean_path))
            term = float(mean_path[-1])
            rows.append([spec.name, _f(N0), _f(sig), _f(term), _f(abs(term - p.Nbar))])
    ser = _write_rows(os.path.join(spec.out_dir, f"{spec.name}_series.csv"), ["t", "N0", "sigma", "N"], series)
    summ = _write_rows(os.path.join(spec.out_dir, f"{spec.name}_summary.csv"), POP_SUMMARY_HEADER, rows)
    svg = os.path.join(spec.out_dir, f"{spec.name}.svg")
    emit_svg(ser, ("t", "N"), svg, group_by=("N0", "sigma"), title="population")
    artifacts += [ser, summ, svg]
    return StudyResult(rows, artifacts, clamp_counts=clamps)


def classify_ensemble(ens: TrajectoryEnsemble, spec: ExperimentSpec):
    """Per-path classes and the modal class with its median extremum."""
    dt = spec.sim_config.dt
    per = [detect_transient(ens["K"][i], dt, spec.band, spec.window) for i in range(ens.n_paths)]
    counts = Counter(c.kind for c in per)
    kind = max(counts, key=lambda k: (counts[k], -list(TransientKind).index(k)))
    ext = [c for c in per if c.kind is kind and c.extremum_time is not None]
    if ext:
        t_med = float(np.median([c.extremum_time for c in ext]))
        k_med = float(np.median([c.extremum_value for c in ext]))
        return per, TransientClass(kind, t_med, k_med, float(np.median([c.noise_ratio for c in per])))
    return per, TransientClass(kind, None, None, float(np.median([c.noise_ratio for c in per])))


def run_capital_study(spec: ExperimentSpec, lambda_field=None) -> StudyResult:
    """Run the (N0, A) x eps x sigma grid and classify every capital path."""
    os.makedirs(spec.out_dir, exist_ok=True)
    rows, artifacts, series = [], [], []
    classes, clamps = {}, {}
    for N0, A in spec.cells:
        for sig in spec.sigma_values:
            for eps in spec.eps_values:
                p = spec.params.replace(A=A, eps=eps, sigma=sig)
                ens = simulate_controlled(p, _policy(spec, lambda_field), spec.K0, N0, spec.sim_config)
                key = (N0, A, eps, sig)
                clamps[key] = ens.clamp_counts
                per, modal = classify_ensemble(ens, spec)
                classes[key] = per
                if spec.write_paths:
                    tag = _cell_tag(N0=N0, A=A, eps=eps, sigma=sig)
                    artifacts.append(write_paths_csv(os.path.join(spec.out_dir, f"{spec.name}_{tag}_paths.csv"), ens))
                series.extend([_f(t), _f(N0), _f(A), _f(eps), _f(sig), _f(v)]
                              for t, v in zip(ens.times, ens["K"][0]))
                rows.append([spec.name, _f(N0), _f(A), _f(eps), _f(sig), modal.kind.value,
                             "" if modal.extremum_time is None else _f(modal.extremum_time),
                             "" if modal.extremum_value is None else _f(modal.extremum_value)])
    summ = _write_rows(os.path.join(spec.out_dir, f"{spec.name}_summary.csv"), SUMMARY_HEADER, rows)
    ser = _write_rows(os.path.join(spec.out_dir, f"{spec.name}_series.csv"),
                      ["t", "N0", "A", "eps", "sigma", "K"], series)
    artifacts += [summ, ser]
    for N0, A in spec.cells:
        sub = os.path.join(spec.out_dir, f"{spec.name}_{_cell_tag(N0=N0, A=A)}_series.csv")
        with open(ser, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        keep = [lines[0]] + [ln for ln in lines[1:] if _match(ln, N0, A)]
        with open(sub, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(keep) + "\n")
        svg = sub.replace("_series.csv", ".svg")
        emit_svg(sub, ("t", "K"), svg, group_by=("eps",), title=f"capital N0={N0:g} A={A:g}")
        artifacts += [sub, svg]
    return StudyResult(rows, artifacts, classes, clamps)


def _match(line: str, N0: float, A: float) -> bool:
    parts = line.split(",")
    return float(parts[1]) == N0 and float(parts[2]) == A


# ---------------------------------------------------------------------------
# PDE versus Monte Carlo


@dataclass(frozen=True)
class CrossValidationRow:
    t: float
    K: float
    N: float
    mc_mean: float
    std_err: float
    pde: float
    pde_coarse: float
    grid_budget: float
    clamp_count: int = 0

    @property
    def diff(self) -> float:
        return self.mc_mean - self.pde

    @property
    def z(self) -> float:
        """Difference in units of the combined allowance; |z| <= 3 is a pass."""
        scale = self.std_err + self.grid_budget / N_SIGMA
        if scale == 0.0:
            return 0.0 if self.diff == 0.0 else math.copysign(math.inf, self.diff)
        return self.diff / scale

    @property
    def passed(self) -> bool:
        return abs(self.diff) <= N_SIGMA * self.std_err + self.grid_budget + 1e-12 * abs(self.pde)


@dataclass
class CrossValidationReport:
    rows: list
    solve_reports: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_text(self) -> str:
        out = ["t,K,N,mc_mean,std_err,pde,pde_coarse,grid_budget,z,pass"]
        for r in self.rows:
            out.append(",".join([f"{r.t:g}", f"{r.K:g}", f"{r.N:g}", f"{r.mc_mean:.10g}", f"{r.std_err:.4g}",
                                 f"{r.pde:.10g}", f"{r.pde_coarse:.10g}", f"{r.grid_budget:.4g}",
                                 f"{r.z:.3f}", "PASS" if r.passed else "FAIL"]))
        return "\n".join(out) + "\n"


# Safety factor on the two-grid error estimate when the observed order matches
# the formal order (verified by the manufactured-solution study).
RICHARDSON_SAFETY = 1.25
DEFAULT_POINTS = ((0.0, 1.0, 1.0), (0.0, 2.0, 1.0), (0.0, 1.0, 2.0), (0.5, 1.5, 0.8), (0.0, 0.7, 1.3))


def coarse_grid(grid: Grid2D) -> Grid2D:
    if (grid.nx - 1) % 2 or (grid.ny - 1) % 2:
        raise ValueError("grid node counts must be odd to coarsen by two")
    return Grid2D(grid.x_min, grid.x_max, grid.y_min, grid.y_max, (grid.nx + 1) // 2, (grid.ny + 1) // 2)


def richardson_budget(fine: float, coarse: float, order: float = 1.0) -> float:
    return RICHARDSON_SAFETY * abs(fine - coarse) / (2.0**order - 1.0)


def cross_validate(params: ModelParams, grid: Grid2D, solver_config: SolverConfig = SolverConfig(),
                   sample_points=DEFAULT_POINTS, sim_config: Optional[SimConfig] = None,
                   lam_fine: Optional[Field] = None, lam_coarse: Optional[Field] = None,
                   perturb: Optional[dict] = None) -> CrossValidationReport:
    """Compare Monte Carlo lambda (psi = solved field) with the PDE at each (t, K, N).

    The grid budget is the safety-scaled two-resolution Richardson estimate
    from ``grid`` and the grid with twice the spacing.  ``perturb`` maps a
    point index to a multiplicative factor applied to the PDE value, to
    exercise the metric.
    """
    sim_config = sim_config or SimConfig(dt=0.002, n_paths=100_000, seed=DEFAULT_SEED)
    reports = {}
    if lam_fine is None:
        lam_fine, reports["fine"] = fixed_point_solve(grid, params, solver_config)
    if lam_coarse is None:
        lam_coarse, reports["coarse"] = fixed_point_solve(coarse_grid(grid), params, solver_config)
    ev = lam_fine.evaluator()
    rows = []
    for k, (t, K, N) in enumerate(sample_points):
        pde = float(lam_fine.interpolate(t, math.log(K), math.log(N)))
        pc = float(lam_coarse.interpolate(t, math.log(K), math.log(N)))
        if perturb and k in perturb:
            pde *= perturb[k]
        est = fk_estimate_lambda(params, ev, t, K, N, sim_config)
        rows.append(CrossValidationRow(t, K, N, est.mean, est.std_err, pde, pc, richardson_budget(pde, pc)
                                       if not (perturb and k in perturb) else
                                       richardson_budget(pde / perturb[k], pc), est.clamp_count))
    return CrossValidationReport(rows, reports)
