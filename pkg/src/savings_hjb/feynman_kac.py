"""Monte Carlo estimates built on the Feynman-Kac pair (X1, X2).

The marginal value has the representation

    lambda(t, K, N) = E[ exp(int_t^T A beta (X2/X1)^(1-beta) ds) * u2'(X1(T)/X2(T)) ],

and the envelope constants come from comparison bounds on a family of
processes that share the exponent integral.  With R = X2/X1 and
I(s) = int_t^s A beta R^(1-beta):

    G   = e^I R^gamma                 h  = e^(gamma I / beta) R^gamma
    h1  = e^I R^beta                  h2 = e^(I / p) R^(beta / p)
    ratio_pow = R^(beta - 1)          Y  = e^I lambda(s, X1, X2)
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from savings_hjb.model import (
    BoundConstants,
    ModelParams,
    compute_bound_constants,
    lower_envelope,
    u2_prime,
    upper_envelope,
)
from savings_hjb.sde import SimConfig, fk_pair_chunks

N_SIGMA = 3.0


class ProcessKind(str, enum.Enum):
    G = "G"
    Y = "Y"
    h = "h"
    h1 = "h1"
    h2 = "h2"
    ratio_pow = "ratio_pow"


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_err: float
    n_paths: int
    clamp_count: int = 0

    def __post_init__(self):
        if not math.isfinite(self.mean):
            raise ArithmeticError("Monte Carlo mean is not finite")


def _reduce(samples: np.ndarray, strict: bool) -> tuple[float, float]:
    n = samples.size
    if strict:
        mean = math.fsum(samples.tolist()) / n
        var = math.fsum(((samples - mean) ** 2).tolist()) / max(n - 1, 1)
    else:
        mean = float(np.mean(samples))
        var = float(np.var(samples, ddof=1)) if n > 1 else 0.0
    return mean, math.sqrt(var / n)


def _estimate(samples: np.ndarray, clamps: int, strict: bool) -> McEstimate:
    if not np.all(np.isfinite(samples)):
        bad = int(np.argmax(~np.isfinite(samples)))
        raise ArithmeticError(f"non-finite sample on path {bad}")
    mean, se = _reduce(samples, strict)
    return McEstimate(mean, se, int(samples.size), clamps)


def _config_for(params: ModelParams, t: float, s: float, sim_config: SimConfig) -> SimConfig:
    n = int(round((s - t) / sim_config.dt))
    if not math.isclose(n * sim_config.dt, s - t, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"s - t = {s - t:g} is not a multiple of dt = {sim_config.dt:g}")
    return replace(sim_config, n_steps=n)


def _check_times(params: ModelParams, t: float, s: float):
    if not (0.0 <= t <= s <= params.T + 1e-12):
        raise ValueError(f"need 0 <= t <= s <= T, got t={t:g}, s={s:g}, T={params.T:g}")


def _process_values(kind: ProcessKind, params: ModelParams, X1, X2, expo, s, lam_eval=None,
                    p_lower: float = math.nan):
    R = X2 / X1
    b, g = params.beta, params.gamma
    if kind is ProcessKind.G:
        return np.exp(expo) * R**g
    if kind is ProcessKind.h:
        return np.exp(expo * g / b) * R**g
    if kind is ProcessKind.h1:
        return np.exp(expo) * R**b
    if kind is ProcessKind.h2:
        return np.exp(expo / p_lower) * R ** (b / p_lower)
    if kind is ProcessKind.ratio_pow:
        return R ** (b - 1.0)
    if kind is ProcessKind.Y:
        return np.exp(expo) * lam_eval(s, X1, X2)
    raise ValueError(f"unknown process kind {kind!r}")


def _simulate(params, psi_evaluator, t, s, K, N, sim_config, record_steps=None):
    cfg = _config_for(params, t, s, sim_config)
    parts, rec = fk_pair_chunks(params, psi_evaluator, t, K, N, cfg, record_steps)
    cat = {k: np.concatenate([p[k] for p in parts]) for k in ("X1", "X2", "expo")}
    return cat, rec, sum(p["clamps"] for p in parts), cfg


def estimate_process(kind, params: ModelParams, psi_evaluator, t: float, s: float, K: float, N: float,
                     sim_config: SimConfig, lambda_field=None, strict_reduction: bool = False) -> McEstimate:
    """Monte Carlo mean of process ``kind`` at time s, started from (t, K, N)."""
    kind = ProcessKind(kind)
    _check_times(params, t, s)
    if not (K > 0.0 and N > 0.0):
        raise ValueError("K and N must be positive")
    lam_eval = None
    if kind is ProcessKind.Y:
        if lambda_field is None:
            raise ValueError("process Y needs a lambda field")
        lam_eval = lambda tt, a, c: lambda_field.interpolate(tt, np.log(a), np.log(c))
    pl = compute_bound_constants(params).p_lower if kind is ProcessKind.h2 else math.nan
    if kind is ProcessKind.h2 and not math.isfinite(pl):
        raise ValueError("h2 is defined for beta < gamma only")
    if s - t < 0.5 * sim_config.dt:
        one = np.array([[float(K)]]), np.array([[float(N)]]), np.zeros((1, 1))
        v = _process_values(kind, params, *one, s, lam_eval, pl)
        return McEstimate(float(v.ravel()[0]), 0.0, sim_config.n_paths, 0)
    cat, rec, clamps, cfg = _simulate(params, psi_evaluator, t, s, K, N, sim_config,
                                       [cfg_end(sim_config, t, s)])
    v = _process_values(kind, params, cat["X1"][:, -1], cat["X2"][:, -1], cat["expo"][:, -1], s, lam_eval, pl)
    return _estimate(v, clamps, strict_reduction)


def cfg_end(sim_config: SimConfig, t: float, s: float) -> int:
    return int(round((s - t) / sim_config.dt))


def fk_estimate_lambda(params: ModelParams, psi_evaluator, t: float, K: float, N: float,
                       sim_config: SimConfig, strict_reduction: bool = False,
                       terminal_scale: float = 1.0) -> McEstimate:
    """Mean and standard error of G(T); ``terminal_scale`` multiplies u2'."""
    _check_times(params, t, params.T)
    if not (K > 0.0 and N > 0.0):
        raise ValueError("K and N must be positive")
    if params.T - t < 0.5 * sim_config.dt:
        return McEstimate(terminal_scale * float(u2_prime(K / N, params)), 0.0, sim_config.n_paths, 0)
    n = cfg_end(sim_config, t, params.T)
    cat, _, clamps, _ = _simulate(params, psi_evaluator, t, params.T, K, N, sim_config, [n])
    X1, X2, expo = cat["X1"][:, -1], cat["X2"][:, -1], cat["expo"][:, -1]
    v = terminal_scale * np.exp(expo) * u2_prime(X1 / X2, params)
    return _estimate(np.asarray(v, dtype=float), clamps, strict_reduction)


# ---------------------------------------------------------------------------
# comparison bounds


@dataclass(frozen=True)
class InequalityCheck:
    name: str
    regime: str
    direction: str        # "ge" (mc >= bound) or "le"
    s: float
    mc_mean: float
    std_err: float
    bound: float
    clamp_count: int = 0

    @property
    def slack_in_std_errs(self) -> float:
        diff = self.mc_mean - self.bound if self.direction == "ge" else self.bound - self.mc_mean
        if self.std_err == 0.0:
            return math.inf if diff >= 0 else -math.inf
        return diff / self.std_err

    @property
    def passed(self) -> bool:
        diff = self.mc_mean - self.bound if self.direction == "ge" else self.bound - self.mc_mean
        return diff >= -N_SIGMA * self.std_err - 1e-12 * abs(self.bound)

    def line(self) -> str:
        op = ">=" if self.direction == "ge" else "<="
        return (f"{self.name} regime={self.regime} s={self.s:g} mc_mean={self.mc_mean:.8g} "
                f"std_err={self.std_err:.3g} {op} bound={self.bound:.8g} "
                f"slack_se={self.slack_in_std_errs:.3g} {'PASS' if self.passed else 'FAIL'}")


@dataclass
class InequalityReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_text(self) -> str:
        return "\n".join(c.line() for c in self.checks) + "\n"


def _bound_lines(params: ModelParams, c: BoundConstants, t: float, s: float, K: float, N: float):
    """(name, kind, direction, bound) for every comparison bound valid in the regime."""
    r = N / K
    s2 = params.sigma**2 + params.eps**2
    b = params.beta
    d = s - t
    out = []
    if c.regime != "beta_lt_gamma":
        out.append(("G_lower", ProcessKind.G, "ge", params.a2 * math.exp(c.atilde * d) * r**params.gamma))
        out.append(("h_upper", ProcessKind.h, "le", params.a3 * math.exp(c.a_const * d) * r**params.gamma))
        b3 = params.Cf * b + params.a1 * b / c.c0 + 0.5 * b * (b - 1.0) * s2
        out.append(("h1_upper", ProcessKind.h1, "le", math.exp(b3 * d) * r**b))
    else:
        out.append(("h2_lower", ProcessKind.h2, "ge", math.exp(c.b5 * d) * r ** (b / c.p_lower)))
    growth = params.A * (1.0 - b) * (math.expm1(c.b * d) / c.b if c.b else d)
    out.append(("ratio_pow_upper", ProcessKind.ratio_pow, "le", math.exp(c.b * d) * r ** (b - 1.0) + growth))
    return out


def lower_envelope_psi(params: ModelParams, constants: Optional[BoundConstants] = None) -> Callable:
    """psi(t, K, N) equal to the regime's lower envelope."""
    c = constants or compute_bound_constants(params)
    return lambda t, K, N: lower_envelope(K, N, c)


def verify_process_inequalities(params: ModelParams, t: float, K: float, N: float, sim_config: SimConfig,
                                checkpoints=None, psi_evaluator=None,
                                strict_reduction: bool = False) -> InequalityReport:
    """Check each comparison bound of the active regime by Monte Carlo.

    One ensemble from (t, K, N) serves all processes and checkpoints; psi
    defaults to the lower envelope.  At s = T the envelopes themselves are
    checked against E[G(T)] too.
    """
    c = compute_bound_constants(params)
    psi = psi_evaluator or lower_envelope_psi(params, c)
    horizon = params.T - t
    checkpoints = sorted(set(checkpoints or (t + 0.5 * horizon, params.T)))
    for s in checkpoints:
        _check_times(params, t, s)
    steps = [cfg_end(sim_config, t, s) for s in checkpoints]
    cat, rec, clamps, _ = _simulate(params, psi, t, params.T, K, N, sim_config, steps)
    report = InequalityReport()
    for s, n in zip(checkpoints, steps):
        col = int(np.searchsorted(rec, n))
        X1, X2, expo = cat["X1"][:, col], cat["X2"][:, col], cat["expo"][:, col]
        for name, kind, direction, bound in _bound_lines(params, c, t, s, K, N):
            est = _estimate(_process_values(kind, params, X1, X2, expo, s, None, c.p_lower), clamps,
                            strict_reduction)
            report.checks.append(InequalityCheck(name, c.regime, direction, s, est.mean, est.std_err, bound,
                                                 clamps))
        if math.isclose(s, params.T):
            est = _estimate(_process_values(ProcessKind.G, params, X1, X2, expo, s), clamps, strict_reduction)
            lo = float(lower_envelope(K, N, c))
            hi = float(upper_envelope(K, N, c))
            report.checks.append(InequalityCheck("envelope_lower", c.regime, "ge", s, est.mean, est.std_err, lo,
                                                 clamps))
            report.checks.append(InequalityCheck("envelope_upper", c.regime, "le", s, est.mean, est.std_err, hi,
                                                 clamps))
    return report


# ---------------------------------------------------------------------------
# martingale check


@dataclass(frozen=True)
class MartingalePoint:
    s: float
    mean: float
    std_err: float
    target: float
    budget: float

    @property
    def passed(self) -> bool:
        return abs(self.mean - self.target) <= N_SIGMA * self.std_err + self.budget


@dataclass
class MartingaleReport:
    points: list = field(default_factory=list)
    clamp_count: int = 0

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.points)

    def to_text(self) -> str:
        rows = [f"Y s={p.s:g} mean={p.mean:.8g} std_err={p.std_err:.3g} target={p.target:.8g} "
                f"budget={p.budget:.3g} {'PASS' if p.passed else 'FAIL'}" for p in self.points]
        return "\n".join(rows) + "\n"


def martingale_check(params: ModelParams, psi_evaluator, lambda_field, t: float, K: float, N: float,
                     checkpoints, sim_config: SimConfig, budget: float = 0.0,
                     strict_reduction: bool = False) -> MartingaleReport:
    """E[Y(s)] at each checkpoint against Y(t) = lambda(t, K, N).

    ``budget`` is an absolute allowance for the discretisation error of
    ``lambda_field`` (interpolation and grid error).
    """
    checkpoints = sorted(set(float(s) for s in checkpoints))
    for s in checkpoints:
        if not (t - 1e-12 <= s <= params.T + 1e-12):
            raise ValueError(f"checkpoint {s:g} outside [{t:g}, {params.T:g}]")
    lam = lambda tt, a, c: lambda_field.interpolate(tt, np.log(a), np.log(c))
    target = float(lam(t, np.array([K]), np.array([N]))[0])
    report = MartingaleReport()
    steps = [cfg_end(sim_config, t, s) for s in checkpoints]
    if max(steps) == 0:
        report.points = [MartingalePoint(s, target, 0.0, target, budget) for s in checkpoints]
        return report
    cat, rec, clamps, _ = _simulate(params, psi_evaluator, t, max(checkpoints), K, N, sim_config, steps)
    report.clamp_count = clamps
    for s, n in zip(checkpoints, steps):
        col = int(np.searchsorted(rec, n))
        if n == 0:
            report.points.append(MartingalePoint(s, target, 0.0, target, budget))
            continue
        v = np.exp(cat["expo"][:, col]) * lam(s, cat["X1"][:, col], cat["X2"][:, col])
        est = _estimate(v, clamps, strict_reduction)
        report.points.append(MartingalePoint(s, est.mean, est.std_err, target, budget))
    return report
