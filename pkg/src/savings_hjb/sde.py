"""Euler-Maruyama simulation of the controlled economy and of the
Feynman-Kac pair (X1, X2).

Population-type coordinates (N and X2) use a drift-corrected log-Euler step by
default, which is exact for the geometric noise and keeps them positive.  The
plain Euler step is available as ``pop_scheme="euler"``.  X1 is advanced
through Z = X1^(1-beta), for which the production term enters additively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

from savings_hjb.model import ModelParams, drift_f_over_x
from savings_hjb.streams import DEFAULT_SEED, chunk_ranges, map_chunks, path_normals

K_FLOOR = 1e-12
Z_FLOOR = 1e-300


class SimulationError(RuntimeError):
    """Non-finite state in a simulated path."""

    def __init__(self, message, path=None, step=None):
        super().__init__(message)
        self.path = path
        self.step = step


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.002
    n_steps: int = 500
    n_paths: int = 1
    seed: int = DEFAULT_SEED
    antithetic: bool = False
    pop_scheme: str = "log_euler"
    threads: int = 1

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError("dt must be > 0")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.pop_scheme not in ("log_euler", "euler"):
            raise ValueError("pop_scheme must be 'log_euler' or 'euler'")

    @classmethod
    def for_horizon(cls, horizon: float, dt: float = 0.002, **kw) -> "SimConfig":
        return cls(dt=dt, n_steps=max(1, int(round(horizon / dt))), **kw)

    def check_horizon(self, horizon: float):
        if self.dt * self.n_steps > horizon + 0.5 * self.dt:
            raise ValueError(f"dt*n_steps = {self.dt * self.n_steps:g} exceeds horizon {horizon:g}")


@dataclass
class TrajectoryEnsemble:
    """Simulated paths; ``states`` maps a coordinate name to an (n_paths, n_times) array."""

    times: np.ndarray
    states: dict
    seed: int
    config: SimConfig
    clamp_counts: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return next(iter(self.states.values())).shape[0]

    def __getitem__(self, name) -> np.ndarray:
        return self.states[name]


@dataclass
class Policy:
    """Consumption rule c(t, K, N).

    ``proportional`` is c = K/N; ``feedback_field`` is c = j(lambda(t, K, N))
    from a solved lambda field, floored at ``floor``.
    """

    kind: str = "proportional"
    field: Optional[object] = None
    floor: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "proportional", "feedback_field"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "feedback_field" and self.field is None:
            raise ValueError("feedback_field policy needs a lambda field")

    def consumption(self, t, K, N, params: ModelParams):
        if self.kind == "zero":
            c = np.zeros_like(K)
        elif self.kind == "proportional":
            c = K / N
        else:
            lam = self.field.interpolate(t, np.log(K), np.log(N))
            c = np.maximum(lam, 1e-300) ** (-1.0 / params.gamma)
        return np.maximum(c, self.floor)


def _pop_step(X, z, params: ModelParams, dt: float, scheme: str):
    sq = math.sqrt(dt)
    if scheme == "log_euler":
        g = drift_f_over_x(X, params) - 0.5 * params.sigma**2
        return X * np.exp(g * dt + params.sigma * sq * z)
    return X + X * drift_f_over_x(X, params) * dt + params.sigma * X * sq * z


def simulate_controlled(params: ModelParams, policy: Policy, K0: float, N0: float,
                        sim_config: SimConfig) -> TrajectoryEnsemble:
    """Simulate (K, N) under ``policy``; returns paths of K, N and c."""
    if not (K0 > 0.0 and N0 > 0.0):
        raise ValueError("K0 and N0 must be positive")
    cfg = sim_config
    n, dt = cfg.n_steps, cfg.dt
    sq = math.sqrt(dt)
    times = dt * np.arange(n + 1)

    def run(lo, hi):
        m = hi - lo
        Z = path_normals(cfg.seed, np.arange(lo, hi), n, 2, cfg.antithetic)
        K = np.empty((m, n + 1))
        N = np.empty((m, n + 1))
        C = np.empty((m, n + 1))
        K[:, 0], N[:, 0] = K0, N0
        clamps = {"K": 0, "N": 0}
        for k in range(n):
            Kk, Nk = K[:, k], N[:, k]
            c = policy.consumption(times[k], Kk, Nk, params)
            C[:, k] = c
            F = params.A * Kk**params.beta * Nk ** (1.0 - params.beta)
            Kn = Kk + (F - Nk * c) * dt + params.eps * Kk * sq * Z[k, :, 0]
            Nn = _pop_step(Nk, Z[k, :, 1], params, dt, cfg.pop_scheme)
            bad = ~np.isfinite(Kn) | ~np.isfinite(Nn)
            if bad.any():
                p = lo + int(np.argmax(bad))
                raise SimulationError(f"non-finite state on path {p} at step {k + 1}", p, k + 1)
            low = Kn < K_FLOOR
            clamps["K"] += int(low.sum())
            K[:, k + 1] = np.where(low, K_FLOOR, Kn)
            lowN = Nn <= 0.0
            clamps["N"] += int(lowN.sum())
            N[:, k + 1] = np.where(lowN, K_FLOOR, Nn)
        C[:, n] = policy.consumption(times[n], K[:, n], N[:, n], params)
        return K, N, C, clamps

    # overflow is detected and reported per path below, not warned about
    run = np.errstate(over="ignore", invalid="ignore")(run)
    parts = map_chunks(run, chunk_ranges(cfg.n_paths, n), cfg.threads)
    clamps = {"K": sum(p[3]["K"] for p in parts), "N": sum(p[3]["N"] for p in parts)}
    states = {
        "K": np.concatenate([p[0] for p in parts]),
        "N": np.concatenate([p[1] for p in parts]),
        "c": np.concatenate([p[2] for p in parts]),
    }
    return TrajectoryEnsemble(times, states, cfg.seed, cfg, clamps)


PsiEvaluator = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


def fk_pair_chunks(params: ModelParams, psi_evaluator: Optional[PsiEvaluator], t0: float,
                   K: float, N: float, sim_config: SimConfig, record_steps=None):
    """Core (X1, X2) engine shared by the ensemble builder and the estimators.

    Returns a list of per-chunk dicts holding X1, X2 and the running exponent
    integral int A beta (X2/X1)^(1-beta) ds (trapezoidal) at ``record_steps``,
    plus the X1 clamp count.  ``psi_evaluator=None`` switches the consumption
    term off (j(psi) = 0), which exposes closed-form dynamics.
    """
    if not (K > 0.0 and N > 0.0):
        raise ValueError("K and N must be positive")
    cfg = sim_config
    cfg.check_horizon(params.T - t0)
    n, dt = cfg.n_steps, cfg.dt
    sq = math.sqrt(dt)
    b, A, eps = params.beta, params.A, params.eps
    om = 1.0 - b
    rec = np.arange(n + 1) if record_steps is None else np.asarray(sorted(set(record_steps)), dtype=int)
    if rec.size and (rec.min() < 0 or rec.max() > n):
        raise ValueError("record steps outside [0, n_steps]")
    slot = {int(s): i for i, s in enumerate(rec)}

    def run(lo, hi):
        m = hi - lo
        W = path_normals(cfg.seed, np.arange(lo, hi), n, 2, cfg.antithetic)
        X1 = np.full(m, float(K))
        X2 = np.full(m, float(N))
        Zs = X1**om
        expo = np.zeros(m)
        rate = A * b * (X2 / X1) ** om
        out = {"X1": np.empty((m, rec.size)), "X2": np.empty((m, rec.size)), "expo": np.empty((m, rec.size))}
        clamps = 0

        def store(k):
            i = slot.get(k)
            if i is not None:
                out["X1"][:, i], out["X2"][:, i], out["expo"][:, i] = X1, X2, expo

        store(0)
        for k in range(n):
            s = t0 + k * dt
            if psi_evaluator is None:
                jterm = 0.0
            else:
                psi = np.asarray(psi_evaluator(s, X1, X2), dtype=float)
                if np.any(~(psi > 0.0)):
                    p = lo + int(np.argmax(~(psi > 0.0)))
                    raise SimulationError(f"psi evaluator returned a non-positive value on path {p}", p, k)
                jterm = (X2 / X1) * psi ** (-1.0 / params.gamma)
            drift = om * (A * X2**om - Zs * jterm + eps**2 * Zs) - 0.5 * om * b * eps**2 * Zs
            Zn = Zs + drift * dt + om * eps * Zs * sq * W[k, :, 0]
            X2 = _pop_step(X2, W[k, :, 1], params, dt, cfg.pop_scheme)
            low = Zn < Z_FLOOR
            clamps += int(low.sum())
            Zs = np.where(low, Z_FLOOR, Zn)
            X1 = Zs ** (1.0 / om)
            new_rate = A * b * (X2 / X1) ** om
            expo = expo + 0.5 * dt * (rate + new_rate)
            rate = new_rate
            if not (np.all(np.isfinite(X1)) and np.all(np.isfinite(X2)) and np.all(np.isfinite(expo))):
                bad = ~(np.isfinite(X1) & np.isfinite(X2) & np.isfinite(expo))
                p = lo + int(np.argmax(bad))
                raise SimulationError(f"non-finite state on path {p} at step {k + 1}", p, k + 1)
            store(k + 1)
        out["clamps"] = clamps
        return out

    run = np.errstate(over="ignore", invalid="ignore")(run)
    return map_chunks(run, chunk_ranges(cfg.n_paths, n), cfg.threads), rec


def simulate_fk_pair(params: ModelParams, psi_evaluator: Optional[PsiEvaluator], t0: float,
                     K: float, N: float, sim_config: SimConfig) -> TrajectoryEnsemble:
    """Simulate the Feynman-Kac pair from (t0, K, N) over ``sim_config.n_steps`` steps."""
    parts, rec = fk_pair_chunks(params, psi_evaluator, t0, K, N, sim_config)
    times = t0 + sim_config.dt * rec
    states = {key: np.concatenate([p[key] for p in parts]) for key in ("X1", "X2", "expo")}
    return TrajectoryEnsemble(times, states, sim_config.seed, sim_config,
                              {"X1": sum(p["clamps"] for p in parts), "X2": 0})


def config_dict(cfg: SimConfig) -> dict:
    return asdict(cfg)
