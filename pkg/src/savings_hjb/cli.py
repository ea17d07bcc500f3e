"""Command-line front end.

Configuration files are INI-style (``configparser``)::

    [model]      A beta gamma eps sigma T alpha_f M_f Nbar
    [grid]       x_min x_max y_min y_max nx ny
    [solver]     scheme cfl_safety theta_weight max_picard_iters picard_tol damping
                 max_damping_halvings boundary formulation n_slices dt_pde time_stride
    [sim]        dt n_steps n_paths seed antithetic pop_scheme threads
    [point]      t K N K0 N0 policy psi
    [experiment] name horizon K0 policy band window eps_values sigma_values N0_values cells
    [crossval]   points n_paths

Lists are comma separated; ``cells`` and ``points`` use ``;`` between tuples
and ``:`` inside them (``1.4:10; 3:1``).  Unknown sections or keys are
rejected with their line number.  Command-line overrides such as ``--eps 0.03``
take precedence over the file.

Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import re
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Optional

import numpy as np

from savings_hjb import __version__
from savings_hjb.experiments import (BASE_CELLS, BASE_EPS, ExperimentSpec, cross_validate, run_capital_study,
                                     run_population_study, write_paths_csv)
from savings_hjb.feynman_kac import fk_estimate_lambda, lower_envelope_psi, verify_process_inequalities
from savings_hjb.model import ModelParams, compute_bound_constants, lipschitz_constant
from savings_hjb.pde import (CFLError, Grid2D, NonFiniteFieldError, SolverConfig, check_bounds,
                             compatibility_check, fixed_point_solve, reconstruct_value)
from savings_hjb.sde import Policy, SimConfig, SimulationError, simulate_controlled
from savings_hjb.streams import DEFAULT_SEED

log = logging.getLogger("savings_hjb")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
COMMANDS = ("solve", "simulate", "fk", "bounds", "experiment", "crossval")


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none", "auto") else float(s)


def _floats(s: str) -> tuple:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _tuples(s: str) -> tuple:
    return tuple(tuple(float(v) for v in part.split(":")) for part in s.split(";") if part.strip())


# section -> key -> (parser, default)
SCHEMA = {
    "model": {"A": (float, 1.0), "beta": (float, 0.5), "gamma": (float, 0.5), "eps": (float, 0.01),
              "sigma": (float, 0.1), "T": (float, 1.0), "alpha_f": (float, 0.5), "M_f": (float, 3.0),
              "Nbar": (float, 2.0)},
    "grid": {"x_min": (float, -4.0), "x_max": (float, 4.0), "y_min": (float, -4.0), "y_max": (float, 4.0),
             "nx": (int, 201), "ny": (int, 201)},
    "solver": {"scheme": (str, "explicit_upwind"), "cfl_safety": (float, 0.9), "theta_weight": (float, 0.1),
               "max_picard_iters": (int, 50), "picard_tol": (float, 1e-6), "damping": (float, 1.0),
               "max_damping_halvings": (int, 3), "boundary": (str, "linear_extrapolation"),
               "formulation": (str, "lambda"), "n_slices": (int, 101), "dt_pde": (_opt_float, None),
               "time_stride": (int, 10)},
    "sim": {"dt": (float, 0.002), "n_steps": (int, 0), "n_paths": (int, 1000), "seed": (int, DEFAULT_SEED),
            "antithetic": (_bool, False), "pop_scheme": (str, "log_euler"), "threads": (int, 1)},
    "point": {"t": (float, 0.0), "K": (float, 1.0), "N": (float, 1.0), "K0": (float, 2.0), "N0": (float, 1.4),
              "policy": (str, "proportional"), "psi": (str, "lower_envelope")},
    "experiment": {"name": (str, "capital_grid"), "horizon": (float, 5.0), "K0": (float, 2.0),
                   "policy": (str, "proportional"), "band": (float, 0.02), "window": (int, 25),
                   "eps_values": (_floats, BASE_EPS), "sigma_values": (_floats, None),
                   "N0_values": (_floats, (1.4, 3.0)), "cells": (_tuples, BASE_CELLS),
                   "n_paths": (int, 1)},
    "crossval": {"points": (_tuples, ((0.0, 1.0, 1.0), (0.0, 2.0, 1.0), (0.0, 1.0, 2.0), (0.5, 1.5, 0.8),
                                      (0.0, 0.7, 1.3))),
                 "n_paths": (int, 100_000)},
}

# flags that do not follow the --<key> pattern, or whose key is ambiguous across sections
FLAG_ALIASES = {("sim", "seed"): "seed", ("sim", "threads"): "threads", ("experiment", "name"): "name",
                ("experiment", "K0"): "exp-K0", ("experiment", "policy"): "exp-policy",
                ("experiment", "n_paths"): "exp-n-paths", ("crossval", "n_paths"): "cv-n-paths"}


class ConfigError(ValueError):
    """Invalid configuration; ``lineno`` is set when the problem has a file location."""

    def __init__(self, message, lineno: Optional[int] = None):
        super().__init__(message if lineno is None else f"line {lineno}: {message}")
        self.lineno = lineno


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number; sections map under (section, None)."""
    where, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), no)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", s)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip()), no)
    return where


def parse_config(path: Optional[str] = None, overrides: Optional[dict] = None, text: Optional[str] = None) -> dict:
    """Return ``{section: {key: value}}`` fully defaulted and type-converted.

    ``overrides`` maps (section, key) to already-typed values and wins over
    the file.  Cross-field validation happens in :func:`resolve`.
    """
    if text is None and path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    text = text or ""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=path or "<config>")
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any [section]", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0] if exc.errors else (None, "")
        raise ConfigError(f"cannot parse {str(line).strip().strip(chr(39)).removesuffix(chr(92) + 'n')}", lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(exc.message, exc.lineno) from None
    where = _line_index(text)
    out = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", where.get((sec, None)))
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", where.get((sec, key)))
            conv = SCHEMA[sec][key][0]
            try:
                out[sec][key] = conv(raw)
            except ValueError:
                raise ConfigError(f"{key}: cannot convert {raw!r}", where.get((sec, key))) from None
    for (sec, key), val in (overrides or {}).items():
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigError(f"unknown override {sec}.{key}")
        out[sec][key] = val
    return out


@dataclass
class Resolved:
    """Validated objects built from a configuration dictionary."""

    raw: dict
    params: ModelParams
    grid: Grid2D
    solver: SolverConfig
    sim: SimConfig
    time_stride: int


def _sim_config(sim: dict, horizon: float, n_paths: Optional[int] = None) -> SimConfig:
    n_steps = sim["n_steps"] or max(1, int(round(horizon / sim["dt"])))
    cfg = SimConfig(dt=sim["dt"], n_steps=n_steps, n_paths=n_paths or sim["n_paths"], seed=sim["seed"],
                    antithetic=sim["antithetic"], pop_scheme=sim["pop_scheme"], threads=sim["threads"])
    cfg.check_horizon(horizon)
    return cfg


def resolve(raw: dict) -> Resolved:
    """Build and validate the typed objects; errors name the offending section."""
    def build(sec, fn):
        try:
            return fn()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{sec}] {exc}") from None

    params = build("model", lambda: ModelParams(**raw["model"]))
    grid = build("grid", lambda: Grid2D(**raw["grid"]))
    sol = {k: v for k, v in raw["solver"].items() if k != "time_stride"}
    solver = build("solver", lambda: SolverConfig(**sol))
    sim = build("sim", lambda: _sim_config(raw["sim"], params.T))
    if raw["solver"]["time_stride"] < 1:
        raise ConfigError("[solver] time_stride must be >= 1")
    return Resolved(raw, params, grid, solver, sim, raw["solver"]["time_stride"])


# ---------------------------------------------------------------------------
# manifest


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    started: str
    tool_version: str = __version__
    finished: str = ""
    exit_code: int = 0
    artifacts: list = field(default_factory=list)

    def add(self, path):
        self.artifacts.append({"path": os.path.abspath(path), "sha256": sha256_file(path)})

    def verify(self) -> bool:
        return all(os.path.exists(a["path"]) and sha256_file(a["path"]) == a["sha256"] for a in self.artifacts)

    def write(self, out_dir) -> str:
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
        return path


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    return str(o)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# commands


class NumericalFailure(RuntimeError):
    pass


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def cmd_bounds(res: Resolved, args, out_dir, manifest):
    c = compute_bound_constants(res.params)
    lines = [f"regime {c.regime}", f"Cf {lipschitz_constant(res.params):.12g}"]
    lines += [f"{name} {value:.12g}" for name, value in c.table()]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    rows = "name,value\n" + "".join(f"{n},{v!r}\n" for n, v in c.table())
    manifest.add(_write_text(os.path.join(out_dir, "bounds.csv"), rows))


def _solve(res: Resolved):
    lam, rep = fixed_point_solve(res.grid, res.params, res.solver, measure_boundary=True)
    return lam, rep


def cmd_solve(res: Resolved, args, out_dir, manifest):
    lam, rep = _solve(res)
    c = compute_bound_constants(res.params)
    v = reconstruct_value(lam, res.grid, res.params, res.solver)
    br = check_bounds(lam, c)
    comp = compatibility_check(v, lam)
    summary = rep.to_text() + f"bounds: {br.to_text()}\ncompatibility_max_rel_error: {comp:.6g}\n"
    print(summary, end="")
    manifest.add(_write_text(os.path.join(out_dir, "solve_report.txt"), summary))
    lam_path = os.path.join(out_dir, "lambda.csv")
    lam.to_csv(lam_path, res.time_stride)
    manifest.add(lam_path)
    v_path = os.path.join(out_dir, "value.csv")
    v.to_csv(v_path, res.time_stride)
    manifest.add(v_path)
    if not rep.converged:
        raise NumericalFailure(f"fixed point did not converge in {rep.iterations} iterations "
                               f"(last residual {rep.residuals[-1]:.3e})")


def cmd_simulate(res: Resolved, args, out_dir, manifest):
    pt = res.raw["point"]
    if pt["policy"] == "feedback_field":
        lam, rep = _solve(res)
        policy = Policy("feedback_field", lam)
    else:
        policy = Policy(pt["policy"])
    ens = simulate_controlled(res.params, policy, pt["K0"], pt["N0"], res.sim)
    path = write_paths_csv(os.path.join(out_dir, "paths.csv"), ens)
    manifest.add(path)
    print(f"paths {ens.n_paths} steps {res.sim.n_steps} clamps K={ens.clamp_counts['K']} N={ens.clamp_counts['N']}")


def cmd_fk(res: Resolved, args, out_dir, manifest):
    pt = res.raw["point"]
    if pt["psi"] == "solve":
        lam, _ = _solve(res)
        psi = lam.evaluator()
    elif pt["psi"] == "lower_envelope":
        psi = lower_envelope_psi(res.params)
    else:
        raise ConfigError(f"[point] psi must be 'lower_envelope' or 'solve', got {pt['psi']!r}")
    sim = _sim_config(res.raw["sim"], res.params.T - pt["t"])
    est = fk_estimate_lambda(res.params, psi, pt["t"], pt["K"], pt["N"], sim, args.strict_reduction)
    row = f"{pt['t']!r},{pt['K']!r},{pt['N']!r},{est.mean!r},{est.std_err!r},{est.n_paths},{est.clamp_count}\n"
    manifest.add(_write_text(os.path.join(out_dir, "fk.csv"), "t,K,N,mean,std_err,n_paths,clamps\n" + row))
    print(f"lambda_mc {est.mean:.10g} std_err {est.std_err:.3g} clamps {est.clamp_count}")
    if pt["psi"] == "lower_envelope":
        rep = verify_process_inequalities(res.params, pt["t"], pt["K"], pt["N"], sim,
                                          strict_reduction=args.strict_reduction)
        print(rep.to_text(), end="")
        manifest.add(_write_text(os.path.join(out_dir, "fk_inequalities.txt"), rep.to_text()))
        if not rep.passed:
            raise NumericalFailure("a comparison bound was violated")


def experiment_spec(res: Resolved, out_dir) -> ExperimentSpec:
    e = res.raw["experiment"]
    params = res.params.replace(T=e["horizon"], sigma=0.0)
    sim = _sim_config(res.raw["sim"], e["horizon"], e["n_paths"])
    if e["name"] == "capital_grid":
        sig = e["sigma_values"] or (0.0,)
    elif e["name"] == "population":
        sig = e["sigma_values"] or (0.0, 0.05, 0.1)
    else:
        raise ConfigError(f"[experiment] name must be 'capital_grid' or 'population', got {e['name']!r}")
    try:
        return ExperimentSpec(name=e["name"], params=params, policy=e["policy"], K0=e["K0"],
                              N0_values=e["N0_values"], cells=e["cells"], eps_values=e["eps_values"],
                              sigma_values=sig, sim_config=sim, out_dir=out_dir, band=e["band"],
                              window=e["window"])
    except ValueError as exc:
        raise ConfigError(f"[experiment] {exc}") from None


def cmd_experiment(res: Resolved, args, out_dir, manifest):
    spec = experiment_spec(res, out_dir)
    if spec.name == "population":
        study = run_population_study(spec)
    else:
        lam = None
        if spec.policy == "feedback_field":
            # the field must cover the experiment horizon
            horizon = res.raw["experiment"]["horizon"]
            lam, _ = fixed_point_solve(res.grid, res.params.replace(T=horizon), res.solver)
        study = run_capital_study(spec, lam)
    for path in study.artifacts:
        manifest.add(path)
    for row in study.rows:
        print(",".join(str(v) for v in row))


def cmd_crossval(res: Resolved, args, out_dir, manifest):
    cv = res.raw["crossval"]
    sim = _sim_config(res.raw["sim"], res.params.T, cv["n_paths"])
    for p in cv["points"]:
        if len(p) != 3:
            raise ConfigError("[crossval] points must be t:K:N triples")
    rep = cross_validate(res.params, res.grid, res.solver, tuple(tuple(p) for p in cv["points"]), sim)
    text = rep.to_text()
    print(text, end="")
    manifest.add(_write_text(os.path.join(out_dir, "crossval.csv"), text))
    if not rep.passed:
        raise NumericalFailure("Monte Carlo and PDE values disagree beyond the error budget")


HANDLERS = {"solve": cmd_solve, "simulate": cmd_simulate, "fk": cmd_fk, "bounds": cmd_bounds,
            "experiment": cmd_experiment, "crossval": cmd_crossval}


# ---------------------------------------------------------------------------
# argument parsing


def _flag(section: str, key: str) -> str:
    return FLAG_ALIASES.get((section, key), key.replace("_", "-"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="savings-hjb", description="Stochastic optimal-savings HJB engine.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="INI configuration file")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--strict-reduction", action="store_true",
                    help="order-independent exact summation of Monte Carlo samples")
    ap.add_argument("-v", "--verbose", action="store_true")
    seen = set()
    for sec, keys in SCHEMA.items():
        grp = ap.add_argument_group(sec)
        for key, (conv, _) in keys.items():
            flag = _flag(sec, key)
            if flag in seen:
                raise RuntimeError(f"duplicate flag --{flag}")
            seen.add(flag)
            grp.add_argument(f"--{flag}", dest=f"{sec}.{key}", type=conv, default=None, metavar=key.upper())
    return ap


def _overrides(args) -> dict:
    out = {}
    for name, val in vars(args).items():
        if "." in name and val is not None:
            sec, key = name.split(".", 1)
            out[(sec, key)] = val
    return out


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = parse_config(args.config, _overrides(args))
        res = resolve(raw)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if res.sim.threads > 1:
        import numba
        numba.set_num_threads(min(res.sim.threads, numba.config.NUMBA_NUM_THREADS))
    manifest = RunManifest(args.command, raw, res.sim.seed, _now())
    code = EXIT_OK
    try:
        os.makedirs(args.out, exist_ok=True)
        HANDLERS[args.command](res, args, args.out, manifest)
    except (ConfigError, CFLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INVALID
    except (NumericalFailure, NonFiniteFieldError, SimulationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_INVALID
    manifest.finished = _now()
    manifest.exit_code = code
    try:
        manifest.write(args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
