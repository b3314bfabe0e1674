"""Command-line entry point.

Usage::

    smoothcontact run <file.scn> [section.key=value ...] [--verbose] [--out-dir=DIR]
    smoothcontact compare <file.scn> --formulations=NTS,IPC,IMLS [...]
    smoothcontact schema

Exit codes: 0 on success, 1 on a configuration error, 2 on a solver failure.
Each run prints one JSON line to stdout. ``SMOOTHCONTACT_OUT`` overrides the
output directory.
"""
from __future__ import annotations

import argparse
import io
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .contact.formulation import Kind
from .errors import ConfigError, InfeasibleStateError, SolverError
from .geometry import line_polyline
from .inverse import Annulus, DesignProblem
from .scenario_file import (build_formulation, build_simulation, build_solver_config,
                            describe_schema, load_scenario)
from .scenarios import (SlidingBlock, Table, annulus_forward, annulus_inverse,
                        energy_wall_scan, format_float, sliding_block, wall_metrics,
                        write_atomic)
from .elasticity import Material
from .simulation import centroid, implicit_euler_step

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


@dataclass
class RunOutcome:
    """What a scenario produced before anything is written."""

    formulation: str
    tables: dict  # output suffix ("" for the main file) -> Table
    iterations: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    failure: str | None = None


@dataclass
class RunReport:
    scenario: str
    formulation: str
    wall_clock_s: float
    newton_iterations_total: int
    newton_iterations_per_step: float
    flags: dict
    outputs: list
    status: str = "ok"
    error: str | None = None

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


# -- scenario runners ----------------------------------------------------------

def _run_wall_scan(cfg, form, stream):
    poly = line_polyline(0.0, cfg.get("scan", "length"), cfg.get("scan", "segments"))
    d_hat = form.barrier.d_hat
    height = cfg.get("scan", "height") or 0.5 * d_hat
    if not 0.0 < height < d_hat:
        raise ConfigError("scan.height must lie in (0, d_hat)", cfg.lines.get(("scan", "height")))
    x_min, x_max = cfg.get("scan", "x_min"), cfg.get("scan", "x_max")
    x_range = None
    if x_min is not None or x_max is not None:
        if x_min is None or x_max is None or not x_min < x_max:
            raise ConfigError("scan.x_min and scan.x_max must both be set with x_min < x_max",
                              cfg.lines.get(("scan", None)))
        x_range = (x_min, x_max)
    n = cfg.get("scan", "samples")
    if n < 3:
        raise ConfigError("scan.samples must be at least 3", cfg.lines.get(("scan", "samples")))
    table = energy_wall_scan(poly, height, form, n, x_range)
    m = wall_metrics(table, poly.vertices[:, 0])
    dx = float(np.diff(table.column("x"))[0])
    flags = {
        "energy_wall": bool(m["energy_ratio"] > 1.5 and m["n_peaks"] > 0
                            and m["peak_offset"] <= dx),
        "tangential_free": bool(m["tangential_ratio"] < 1e-6),
        "work_energy": bool(m["work_error"] < 1e-3),
    }
    for key in ("energy_ratio", "tangential_ratio", "n_peaks"):
        table.meta[key] = format_float(m[key]) if isinstance(m[key], float) else str(m[key])
    return RunOutcome(form.kind.value, {"": table}, [], flags)


def _run_sliding_block(cfg, kind, stream):
    try:
        material = Material(cfg.get("block", "youngs_modulus"), cfg.get("block", "poisson_ratio"),
                            cfg.get("block", "density"))
    except ValueError as exc:
        raise ConfigError(f"[block]: {exc}", cfg.lines.get(("block", None))) from None
    kappa = cfg.get("formulation", "kappa")
    setup = SlidingBlock(
        size=cfg.get("block", "size"), cells=max(1, cfg.get("block", "cells")),
        start_x=cfg.get("block", "start_x"), floor_length=cfg.get("floor", "length"),
        floor_segments=max(1, cfg.get("floor", "segments")),
        d_hat=cfg.get("formulation", "d_hat"), kappa=None if kappa == "auto" else kappa,
        support_radius=cfg.get("formulation", "R"), gravity=cfg.get("load", "gravity"),
        h=cfg.get("schedule", "h"), material=material)
    form = build_formulation(cfg, kind, setup.kappa)
    force = cfg.get("load", "lateral_force")
    solver = build_solver_config(cfg, setup.forces(force))
    result = sliding_block(form, force, cfg.get("schedule", "steps"), setup, solver, stream)
    flags = {"completed": result.failure is None}
    if result.failure is None and len(result.displacement) > 2:
        flags["free_slide_20pct"] = bool(result.free_slide_error() < 0.2) if force else None
        flags["halted"] = bool(result.halt_ratio() < 0.05) if force else None
    return RunOutcome(form.kind.value, {"": result.table}, result.iterations, flags, result.failure)


def _annulus(cfg):
    try:
        return Annulus(cfg.get("annulus", "r1"), cfg.get("annulus", "r2"),
                       cfg.get("annulus", "spring_stiffness"),
                       max(1, cfg.get("annulus", "segments_per_quarter")),
                       cfg.get("annulus", "guard_segments"),
                       cfg.get("formulation", "d_hat"), cfg.get("formulation", "R"))
    except ValueError as exc:
        raise ConfigError(f"[annulus]: {exc}", cfg.lines.get(("annulus", None))) from None


def _run_annulus_forward(cfg, kind, stream):
    model = _annulus(cfg)
    form = build_formulation(cfg, kind, model.kappa)
    thetas = np.linspace(cfg.get("sweep", "theta_start"), cfg.get("sweep", "theta_end"),
                         cfg.get("sweep", "samples"))
    solver = build_solver_config(cfg, [model.spring_stiffness * (model.r2 - model.r1)])
    result = annulus_forward(form, thetas, model, solver, stream)
    iterations = [int(i) for i in result.table.column("iterations") if np.isfinite(i)]
    err = result.max_error()
    flags = {"completed": not result.failures, "accurate_1e-2": bool(err < 1e-2)}
    result.table.meta["max_error"] = format_float(err)
    failure = None
    if result.failures:
        th, msg = result.failures[0]
        failure = f"{len(result.failures)} sample(s) failed; first at theta_B={th!r}: {msg}"
    return RunOutcome(form.kind.value, {"": result.table}, iterations, flags, failure)


def _run_annulus_inverse(cfg, kind, stream):
    model = _annulus(cfg)
    form = build_formulation(cfg, kind, model.kappa)
    try:
        problem = DesignProblem(cfg.get("design", "theta_B"), cfg.get("design", "target_theta_A"),
                                model.r1, model.r2, model.spring_stiffness,
                                cfg.get("design", "lr"), cfg.get("design", "max_steps"),
                                cfg.get("design", "obj_tol"))
    except ValueError as exc:
        raise ConfigError(f"[design]: {exc}", cfg.lines.get(("design", None))) from None
    result, table = annulus_inverse(form, problem, model)
    flags = {"converged": bool(result.converged)}
    table.meta["final_objective"] = format_float(result.objectives[-1])
    return RunOutcome(form.kind.value, {"": table}, [], flags)


def _run_simulate(cfg, kind, stream):
    sim = build_simulation(cfg)
    scene = sim.scene
    form = build_formulation(cfg, kind)
    state = scene.initial_state(velocities=sim.velocities)
    try:
        scene.contact_energy(state.positions, form, 0)
        scene.elastic_energy(state.positions, 0)
    except InfeasibleStateError as exc:
        raise ConfigError(f"initial configuration is infeasible: {exc}") from None
    f = scene.gravity_force(tuple(sim.gravity))
    solver = build_solver_config(cfg, f)
    h, steps = cfg.get("schedule", "h"), cfg.get("schedule", "steps")

    def sample(st):
        out = []
        for probe, name, idx in sim.probes:
            if probe == "centroid":
                out.append(tuple(centroid(scene, st, name)))
            elif probe == "vertex":
                body = next(b for b in scene.bodies if b.name == name)
                k = 2 * (body.offset + idx)
                out.append((st.positions[k], st.positions[k + 1]))
            else:
                v = st.velocities
                out.append((0.5 * float(v @ (scene.mass * v)),
                            scene.elastic_energy(st.positions, 0).value,
                            scene.contact_energy(st.positions, form, 0).value))
        return out

    rows = [sample(state)]
    times = [state.time]
    iterations, failure = [], None
    for k in range(steps):
        step_stream = None
        if stream is not None:
            step_stream = _Prefixed(stream, k)
        try:
            state, stats = implicit_euler_step(scene, state, h, f, form, solver, step_stream)
        except SolverError as exc:
            failure = f"step {k}: {exc}"
            break
        iterations.append(stats.iterations)
        rows.append(sample(state))
        times.append(state.time)
    tables = {}
    for j, (probe, name, idx) in enumerate(sim.probes):
        data = [(t,) + r[j] for t, r in zip(times, rows)]
        meta = {"formulation": form.kind.value, "h": format_float(h)}
        if probe == "energy":
            tables["energy"] = Table(["t", "kinetic", "elastic", "contact"],
                                     ["s", "J", "J", "J"], data, meta)
        else:
            suffix = f"{probe}_{name}" + ("" if idx is None else f"_{idx}")
            tables[suffix] = Table(["t", "x", "y"], ["s", "m", "m"], data, meta)
    return RunOutcome(form.kind.value, tables, iterations, {"completed": failure is None}, failure)


class _Prefixed:
    def __init__(self, stream, step):
        self.stream, self.step = stream, step

    def write(self, text):
        self.stream.write(f"{self.step},{text}")


RUNNERS = {
    "wall_scan": lambda cfg, kind, stream: _run_wall_scan(cfg, build_formulation(cfg, kind), stream),
    "sliding_block": _run_sliding_block,
    "annulus_forward": _run_annulus_forward,
    "annulus_inverse": _run_annulus_inverse,
    "simulate": _run_simulate,
}

SOLVER_LOG_HEADER = {
    "wall_scan": None,
    "sliding_block": "step,iteration,energy,grad_norm,alpha,mu",
    "annulus_forward": "sample,iteration,energy,grad_norm,alpha,mu",
    "annulus_inverse": None,
    "simulate": "step,iteration,energy,grad_norm,alpha,mu",
}


def execute(cfg, kind=None, stream=None):
    """Run a parsed scenario with an optional formulation override."""
    return RUNNERS[cfg.type](cfg, kind, stream)


# -- output --------------------------------------------------------------------

def output_path(out_dir, name, suffix, tag=""):
    parts = [name] + [p for p in (suffix, tag) if p]
    return Path(out_dir) / ("_".join(parts) + ".csv")


def merge_tables(tables, labels):
    """Outer-join tables on their first column; other columns get a label suffix."""
    key = tables[0].columns[0]
    unit = tables[0].units[0]
    abscissa = sorted(set().union(*(t.data[:, 0].tolist() for t in tables)))
    index = {v: i for i, v in enumerate(abscissa)}
    columns, units, blocks = [key], [unit], [np.asarray(abscissa)[:, None]]
    for t, label in zip(tables, labels):
        block = np.full((len(abscissa), len(t.columns) - 1), np.nan)
        for row in t.data:
            block[index[row[0]]] = row[1:]
        columns += [f"{c}_{label}" for c in t.columns[1:]]
        units += t.units[1:]
        blocks.append(block)
    meta = {}
    for t, label in zip(tables, labels):
        meta.update({f"{k}_{label}": v for k, v in t.meta.items() if k != "formulation"})
    meta["formulations"] = ",".join(labels)
    return Table(columns, units, np.hstack(blocks), meta)


def _summary(outcome):
    it = outcome.iterations
    total = int(sum(it))
    return total, (total / len(it) if it else 0.0)


def _resolve_out_dir(arg):
    env = os.environ.get("SMOOTHCONTACT_OUT")
    return Path(env or arg or ".")


def cmd_run(path, overrides, out_dir, verbose, out=None):
    out = out or sys.stdout
    cfg = load_scenario(path, overrides)
    log = io.StringIO() if verbose and SOLVER_LOG_HEADER[cfg.type] else None
    t0 = time.perf_counter()
    outcome = execute(cfg, None, log)
    elapsed = time.perf_counter() - t0
    written = []
    complete = outcome.failure is None or cfg.type == "annulus_forward"
    if complete:
        for suffix, table in outcome.tables.items():
            written.append(str(write_atomic(output_path(out_dir, cfg.name, suffix),
                                            table.to_csv())))
    if log is not None:
        text = SOLVER_LOG_HEADER[cfg.type] + "\n" + log.getvalue()
        written.append(str(write_atomic(output_path(out_dir, cfg.name, "solver"), text)))
    total, per_step = _summary(outcome)
    report = RunReport(cfg.name, outcome.formulation, round(elapsed, 6), total, per_step,
                       outcome.flags, written,
                       "ok" if outcome.failure is None else "solver_failure", outcome.failure)
    print(report.to_json(), file=out)
    return EXIT_OK if outcome.failure is None else EXIT_SOLVER


def cmd_compare(path, formulations, overrides, out_dir, verbose, out=None):
    out = out or sys.stdout
    kinds = [k.strip() for k in formulations.split(",") if k.strip()] if formulations else []
    if not kinds:
        raise ConfigError("compare needs a non-empty --formulations list")
    try:
        kinds = [Kind.parse(k).value for k in kinds]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if len(set(kinds)) != len(kinds):
        raise ConfigError("duplicate entries in --formulations")
    if len(kinds) == 1:
        return cmd_run(path, list(overrides) + [f"formulation.kind={kinds[0]}"], out_dir,
                       verbose, out)
    cfg = load_scenario(path, overrides)
    outcomes, reports = [], []
    code = EXIT_OK
    for kind in kinds:
        log = io.StringIO() if verbose and SOLVER_LOG_HEADER[cfg.type] else None
        t0 = time.perf_counter()
        outcome = execute(cfg, kind, log)
        elapsed = time.perf_counter() - t0
        outputs = []
        if log is not None:
            text = SOLVER_LOG_HEADER[cfg.type] + "\n" + log.getvalue()
            outputs.append(str(write_atomic(output_path(out_dir, cfg.name, "solver", kind), text)))
        total, per_step = _summary(outcome)
        reports.append(RunReport(cfg.name, kind, round(elapsed, 6), total, per_step,
                                 outcome.flags, outputs,
                                 "ok" if outcome.failure is None else "solver_failure",
                                 outcome.failure))
        outcomes.append(outcome)
        if outcome.failure is not None:
            code = EXIT_SOLVER
    usable = all(o.failure is None for o in outcomes) or cfg.type == "annulus_forward"
    if usable:
        for suffix in outcomes[0].tables:
            merged = merge_tables([o.tables[suffix] for o in outcomes], kinds)
            name = "_".join(p for p in (suffix, "compare") if p)
            written = str(write_atomic(output_path(out_dir, cfg.name, name), merged.to_csv()))
            for r in reports:
                r.outputs.append(written)
    for r in reports:
        print(r.to_json(), file=out)
    return code


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not solver failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="smoothcontact", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = _Parser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="write a per-iteration solver CSV")
    common.add_argument("--out-dir", default=None, help="output directory (default: cwd)")
    p = sub.add_parser("run", parents=[common], help="run one scenario")
    p.add_argument("scenario")
    p.add_argument("overrides", nargs="*", metavar="section.key=value")
    p = sub.add_parser("compare", parents=[common], help="run once per formulation and merge")
    p.add_argument("scenario")
    p.add_argument("overrides", nargs="*", metavar="section.key=value")
    p.add_argument("--formulations", required=True, help="comma-separated list, e.g. NTS,IPC,IMLS")
    sub.add_parser("schema", help="print the scenario file schema")
    return parser


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    # overrides may follow options; argparse leaves those behind
    unknown = [a for a in extra if a.startswith("-") or not hasattr(args, "overrides")]
    if unknown:
        parser.error(f"unrecognized arguments: {' '.join(unknown)}")
    if extra:
        args.overrides = list(args.overrides) + extra
    if args.command == "schema":
        print(describe_schema())
        return EXIT_OK
    out_dir = _resolve_out_dir(args.out_dir)
    try:
        if args.command == "run":
            return cmd_run(args.scenario, args.overrides, out_dir, args.verbose)
        return cmd_compare(args.scenario, args.formulations, args.overrides, out_dir,
                           args.verbose)
    except ConfigError as exc:
        where = f"{args.scenario}: " if args.scenario else ""
        print(f"error: {where}{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(json.dumps({"scenario": args.scenario, "status": "solver_failure",
                          "error": str(exc)}, sort_keys=True))
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
