"""Batch front-end: run single solves or (kappa, beta) sweeps from JSON
configs and emit tables, field snapshots, and a run manifest.

Usage:
    densopt run CONFIG.json [--out DIR] [--jobs K] [--dry-run]
    densopt list-builtins

Configs either name a built-in experiment (with optional overrides) or give
the full problem inline with expression strings for the input functions.
Set DENSOPT_LOG=INFO (or DEBUG) for solver progress on stderr.

Exit codes: 0 success, 2 bad config, 3 every cell failed, 4 some cells
failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .expressions import ExpressionError, compile_expression
from .experiments import BUILTINS, describe_builtins
from .grids import Interval1D, build_grid_1d, build_grid_2d, build_time_grid
from .integrate import DivergedSolveError, IntegratorConfig
from .interaction import assemble, gaussian_gradient_kernel
from .model import ControlKind, ControlProblem, Dirichlet, NoFlux
from .optimize import OptimizerConfig, fixed_point_solve

__all__ = [
    "main",
    "ConfigError",
    "RunConfig",
    "resolve_config",
    "run",
    "render_table",
    "load_snapshot",
]

logger = logging.getLogger("densopt.cli")

_KNOWN_KEYS = {
    "experiment",
    "control",
    "bc",
    "bc_value",
    "domain",
    "T",
    "N",
    "n",
    "kappa",
    "beta",
    "lambda",
    "opt_tol",
    "ode_tol",
    "max_iter",
    "rho_hat",
    "rho0",
    "f",
    "v_ext",
    "kernel",
}


class ConfigError(ValueError):
    """Invalid run configuration; message names the offending field."""


@dataclass
class RunConfig:
    """Fully resolved, picklable description of one sweep."""

    experiment: Optional[str]
    control: str
    bc: str
    bc_value: float
    domain: tuple
    T: float
    N: tuple
    n_steps: int
    kappas: tuple
    betas: tuple
    mixing: float
    opt_tol: float
    ode_tol: float
    max_iter: int
    expressions: dict

    @property
    def dim(self) -> int:
        return len(self.domain)

    def build_problem(self, kappa: float, beta: float) -> ControlProblem:
        if self.dim == 1:
            (a, b), = self.domain
            grid = build_grid_1d(Interval1D(a, b), self.N[0])
            space_vars = ("x",)
        else:
            (a1, b1), (a2, b2) = self.domain
            grid = build_grid_2d(
                (Interval1D(a1, b1), Interval1D(a2, b2)), self.N[0], self.N[1]
            )
            space_vars = ("x1", "x2")
        timegrid = build_time_grid(self.T, self.n_steps)
        op = assemble(grid, gaussian_gradient_kernel(self.dim), kappa)
        coords = tuple(grid.nodes[:, d] for d in range(self.dim))

        if self.experiment is not None:
            exp = BUILTINS[self.experiment]
            rho_hat_fn = exp.rho_hat
            rho0 = np.asarray(exp.rho0(*coords), dtype=float)
            v_ext = None if exp.v_ext is None else np.asarray(
                exp.v_ext(*coords), dtype=float
            )
            f_eval = None

            def rho_hat(t):
                return np.broadcast_to(
                    np.asarray(rho_hat_fn(*coords, t), dtype=float), (grid.ndof,)
                ).copy()

        else:
            env_space = dict(zip(space_vars, coords))

            def _nodal(src, with_time):
                variables = space_vars + ("t",) if with_time else space_vars
                expr = compile_expression(src, variables)

                def evaluate(t=None):
                    env = dict(env_space)
                    if with_time:
                        env["t"] = t
                    return np.broadcast_to(
                        np.asarray(expr(env), dtype=float), (grid.ndof,)
                    ).copy()

                return evaluate

            rho_hat_t = _nodal(self.expressions["rho_hat"], True)
            rho_hat = rho_hat_t
            rho0 = _nodal(self.expressions["rho0"], False)()
            f_src = self.expressions.get("f")
            f_eval = None if f_src in (None, "0") else _nodal(f_src, True)
            v_src = self.expressions.get("v_ext")
            v_ext = None if v_src in (None, "0") else _nodal(v_src, False)()

        return ControlProblem(
            grid=grid,
            timegrid=timegrid,
            kind=ControlKind.FLOW if self.control == "flow" else ControlKind.SOURCE,
            bc=Dirichlet(self.bc_value) if self.bc == "dirichlet" else NoFlux(),
            kappa=kappa,
            beta=beta,
            rho_hat=rho_hat,
            rho0=rho0,
            f=f_eval,
            v_ext=v_ext,
            interaction=op,
        )

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            mixing=self.mixing, opt_tol=self.opt_tol, max_iter=self.max_iter
        )

    def integrator_config(self) -> IntegratorConfig:
        return IntegratorConfig(rel_tol=self.ode_tol, abs_tol=self.ode_tol)

    def summary(self) -> str:
        lines = [
            f"experiment: {self.experiment or '(inline)'}",
            f"control={self.control} bc={self.bc}"
            + (f"(c={self.bc_value:g})" if self.bc == "dirichlet" else ""),
            f"domain={list(map(list, self.domain))} T={self.T:g} "
            f"N={list(self.N)} n={self.n_steps}",
            f"kappa={list(self.kappas)} beta={list(self.betas)}",
            f"lambda={self.mixing:g} opt_tol={self.opt_tol:g} "
            f"ode_tol={self.ode_tol:g} max_iter={self.max_iter}",
            f"cells: {len(self.kappas) * len(self.betas)}",
        ]
        for name, src in self.expressions.items():
            if src is not None:
                lines.append(f"{name} = {src}")
        return "\n".join(lines)


def _as_float_list(raw, name) -> tuple:
    if not isinstance(raw, (list, tuple)) or not raw:
        raise ConfigError(f"field {name!r} must be a non-empty list of numbers")
    try:
        return tuple(float(v) for v in raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field {name!r}: {exc}") from exc


def resolve_config(raw: dict) -> RunConfig:
    """Normalize a config dict, applying built-in defaults when named."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")

    exp = None
    if "experiment" in raw:
        key = raw["experiment"]
        if key not in BUILTINS:
            raise ConfigError(
                f"unknown experiment {key!r}; available: {sorted(BUILTINS)}"
            )
        exp = BUILTINS[key]

    if raw.get("kernel", "gaussian") != "gaussian":
        raise ConfigError("field 'kernel': only the 'gaussian' kernel is built in")

    def pick(field, default):
        return raw.get(field, default)

    if exp is not None:
        control = pick("control", exp.control)
        bc = pick("bc", exp.bc)
        bc_value = float(pick("bc_value", exp.bc_value))
        domain = tuple(tuple(map(float, iv)) for iv in pick("domain", exp.domain))
        T = float(pick("T", exp.T))
        N = tuple(int(v) for v in pick("N", exp.N))
        n_steps = int(pick("n", exp.n_steps))
        kappas = _as_float_list(pick("kappa", exp.kappas), "kappa")
        betas = _as_float_list(pick("beta", exp.betas), "beta")
        mixing = float(pick("lambda", exp.mixing))
        expressions = {}
    else:
        for required in ("control", "bc", "domain", "rho_hat", "rho0"):
            if required not in raw:
                raise ConfigError(f"missing required field {required!r}")
        control = raw["control"]
        bc = raw["bc"]
        bc_value = float(raw.get("bc_value", 0.0))
        domain = tuple(tuple(map(float, iv)) for iv in raw["domain"])
        T = float(raw.get("T", 1.0))
        default_n = (30,) * len(domain)
        N = tuple(int(v) for v in raw.get("N", default_n))
        n_steps = int(raw.get("n", 20))
        kappas = _as_float_list(raw.get("kappa", [0.0]), "kappa")
        betas = _as_float_list(raw.get("beta", [1e-3]), "beta")
        mixing = float(raw.get("lambda", 0.01))
        expressions = {
            "rho_hat": raw["rho_hat"],
            "rho0": raw["rho0"],
            "f": raw.get("f"),
            "v_ext": raw.get("v_ext"),
        }

    if control not in ("flow", "source"):
        raise ConfigError(f"field 'control' must be 'flow' or 'source', got {control!r}")
    if bc not in ("noflux", "dirichlet"):
        raise ConfigError(f"field 'bc' must be 'noflux' or 'dirichlet', got {bc!r}")
    if len(domain) not in (1, 2):
        raise ConfigError("field 'domain' must list 1 or 2 intervals")
    if len(N) != len(domain):
        raise ConfigError("field 'N' must give one point count per dimension")

    cfg = RunConfig(
        experiment=exp.key if exp is not None else None,
        control=control,
        bc=bc,
        bc_value=bc_value,
        domain=domain,
        T=T,
        N=N,
        n_steps=n_steps,
        kappas=kappas,
        betas=betas,
        mixing=mixing,
        opt_tol=float(raw.get("opt_tol", 1e-4)),
        ode_tol=float(raw.get("ode_tol", 1e-8)),
        max_iter=int(raw.get("max_iter", 20000)),
        expressions=expressions,
    )
    if cfg.expressions:
        # Surface expression syntax errors at config time, not mid-sweep.
        space_vars = ("x",) if cfg.dim == 1 else ("x1", "x2")
        for name, src in cfg.expressions.items():
            if src in (None, "0"):
                continue
            variables = space_vars + ("t",) if name in ("rho_hat", "f") else space_vars
            try:
                compile_expression(src, variables)
            except ExpressionError as exc:
                raise ConfigError(f"field {name!r}: {exc}") from exc
    return cfg


# -- execution ---------------------------------------------------------------


def _cell_tag(kappa: float, beta: float) -> str:
    return f"kappa{kappa:g}_beta{beta:g}"


def _run_one_cell(args):
    cfg_dict, kappa, beta = args
    cfg = RunConfig(**cfg_dict)
    started = time.perf_counter()
    try:
        prob = cfg.build_problem(kappa, beta)
        run_result = fixed_point_solve(
            prob, cfg.optimizer_config(), cfg.integrator_config()
        )
        return {
            "kappa": kappa,
            "beta": beta,
            "J_uc": run_result.J_uc,
            "J_c": run_result.J_c,
            "iterations": run_result.iterations,
            "converged": run_result.converged,
            "error": None,
            "wall_time_s": time.perf_counter() - started,
            "fields": {
                "rho": run_result.P.values,
                "w": run_result.W.values,
                "q": run_result.Q.values,
            },
        }
    except DivergedSolveError as exc:
        return {
            "kappa": kappa,
            "beta": beta,
            "J_uc": float("nan"),
            "J_c": float("nan"),
            "iterations": 0,
            "converged": False,
            "error": str(exc),
            "wall_time_s": time.perf_counter() - started,
            "fields": None,
        }


def _write_table(path: Path, cells: list[dict]):
    # Stored truth: full double precision.  render_table is for eyes only.
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kappa", "beta", "J_uc", "J_c", "iterations", "converged"])
        for cell in cells:
            writer.writerow(
                [
                    f"{cell['kappa']:.17g}",
                    f"{cell['beta']:.17g}",
                    f"{cell['J_uc']:.17g}",
                    f"{cell['J_c']:.17g}",
                    str(cell["iterations"]),
                    str(bool(cell["converged"])).lower(),
                ]
            )


def render_table(cells: list[dict], decimals: int = 4) -> str:
    """Rounded human-readable view of the sweep results."""
    header = f"{'kappa':>8} {'beta':>10} {'J_uc':>10} {'J_c':>10} {'iter':>7} {'status':>12}"
    lines = [header, "-" * len(header)]
    for cell in cells:
        if cell["error"]:
            status = "failed"
        else:
            status = "converged" if cell["converged"] else "unconverged"
        lines.append(
            f"{cell['kappa']:>8g} {cell['beta']:>10g} "
            f"{cell['J_uc']:>10.{decimals}f} {cell['J_c']:>10.{decimals}f} "
            f"{cell['iterations']:>7d} {status:>12}"
        )
    return "\n".join(lines)


def _write_snapshot(path: Path, field_name: str, cell: dict, cfg: RunConfig, times):
    header = json.dumps(
        {
            "field": field_name,
            "kappa": cell["kappa"],
            "beta": cell["beta"],
            "dim": cfg.dim,
            "points_per_dim": list(cfg.N),
            "domain": [list(iv) for iv in cfg.domain],
            "times": list(times),
            "rows": cell["fields"][field_name].shape[0],
            "columns": cell["fields"][field_name].shape[1],
        }
    )
    np.savetxt(path, cell["fields"][field_name], fmt="%.17g", header=header, comments="# ")


def load_snapshot(path) -> tuple[dict, np.ndarray]:
    """Read a field snapshot back; values round-trip exactly."""
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# "):
        raise ValueError(f"{path} is not a snapshot file")
    header = json.loads(first[2:])
    data = np.loadtxt(path, skiprows=1).reshape(header["rows"], header["columns"])
    return header, data


def run(config_path, out_dir, jobs: int = 1, dry_run: bool = False) -> int:
    """Execute a config: sweep all cells, write table.csv, snapshots, and
    manifest.json into out_dir.  Returns the process exit code."""
    try:
        with open(config_path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(
            f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}",
            file=sys.stderr,
        )
        return 2
    try:
        cfg = resolve_config(raw)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if dry_run:
        print(cfg.summary())
        return 0

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells_in = [(k, b) for k in cfg.kappas for b in cfg.betas]
    cfg_dict = asdict(cfg)
    args = [(cfg_dict, k, b) for k, b in cells_in]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_one_cell, args))
    else:
        cells = [_run_one_cell(a) for a in args]

    times = list(build_time_grid(cfg.T, cfg.n_steps).times)
    _write_table(out / "table.csv", cells)
    manifest_cells = []
    for cell in cells:
        tag = _cell_tag(cell["kappa"], cell["beta"])
        artifacts = {}
        if cell["fields"] is not None:
            for name in ("rho", "w", "q"):
                snap = out / f"{tag}_{name}.dat"
                _write_snapshot(snap, name, cell, cfg, times)
                artifacts[name] = snap.name
        entry = {k: v for k, v in cell.items() if k != "fields"}
        entry["artifacts"] = artifacts
        manifest_cells.append(entry)
        status = "failed" if cell["error"] else ("ok" if cell["converged"] else "unconverged")
        logger.info("cell %s: %s", tag, status)

    manifest = {
        "version": __version__,
        "config": raw,
        "resolved": cfg.summary().splitlines(),
        "table": "table.csv",
        "cells": manifest_cells,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    print(render_table(cells))

    failures = sum(1 for c in cells if c["error"])
    if failures == len(cells):
        return 3
    if failures:
        return 4
    return 0


def main(argv=None) -> int:
    level = os.environ.get("DENSOPT_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = argparse.ArgumentParser(
        prog="densopt",
        description="Optimal control sweeps for non-local particle dynamics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a sweep from a JSON config")
    p_run.add_argument("config", help="path to the JSON config file")
    p_run.add_argument("--out", default="densopt-out", help="output directory")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    p_run.add_argument(
        "--dry-run",
        action="store_true",
        help="validate the config and print the resolved problem, writing nothing",
    )
    sub.add_parser("list-builtins", help="list the built-in experiments")

    opts = parser.parse_args(argv)
    if opts.command == "list-builtins":
        print(describe_builtins(), end="")
        return 0
    return run(opts.config, opts.out, jobs=opts.jobs, dry_run=opts.dry_run)


if __name__ == "__main__":
    sys.exit(main())
