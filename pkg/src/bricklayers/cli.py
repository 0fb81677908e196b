"""Command-line front end: ``bricklayers <subcommand> [--config FILE] [flags]``.

Every run writes its data files plus ``summary.json`` (inputs echoed, seed,
outputs, checks) into the output directory: ``--output``, else the
``BRICKLAYERS_OUTPUT_DIR`` environment variable, else the working directory.
The summary is also printed to stdout.

Exit codes: 0 when every configured check passes, 1 on a failed check or a
runtime error, 2 on a malformed configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .engine import gillespie_step, iid_lattice
from .experiments import (
    KINDS,
    ConfigError,
    ExperimentConfig,
    ebl_rate_doc,
    output_dir,
    run_convexity_report,
    run_equilibrium,
    run_shock_profile,
    run_tracer_experiment,
    run_verify_stationary,
    run_verify_theorem,
)
from .gibbs import build_marginal

STOCHASTIC = {"equilibrium", "shock", "tracer"}

_FLAGS = [
    # (flag, config field, type)
    ("--seed", "seed", int),
    ("--theta-left", "theta_left", float),
    ("--theta-right", "theta_right", float),
    ("--n-sites", "n_sites", int),
    ("--window", "window", int),
    ("--t-end", "t_end", float),
    ("--replicas", "replicas", int),
    ("--block", "block", int),
    ("--sample-every", "sample_every", float),
    ("--n-samples", "n_samples", int),
    ("--spacing", "spacing", float),
    ("--m", "m", int),
    ("--grid", "grid", int),
    ("--workers", "workers", int),
    ("--output", "output", str),
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bricklayers", description="Bricklayers' model experiments")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", type=Path, help="JSON configuration file")
        p.add_argument("--beta", type=float, help="use the exponential rates with this beta")
        p.add_argument("--rate", type=Path, help="JSON rate-function document")
        for flag, dest, typ in _FLAGS:
            p.add_argument(flag, dest=dest, type=typ)
        if kind == "equilibrium":
            p.add_argument("--event-log", type=int, default=0, help="also log the first N events")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    doc: dict = {}
    if args.config is not None:
        try:
            doc = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", str(exc)) from exc
        if not isinstance(doc, dict):
            raise ConfigError("config", "top level must be a mapping")
    if doc.get("kind", args.kind) != args.kind:
        raise ConfigError("kind", f"config says {doc['kind']!r} but subcommand is {args.kind!r}")
    doc["kind"] = args.kind
    if args.beta is not None:
        doc["rate"] = ebl_rate_doc(args.beta)
    if args.rate is not None:
        try:
            doc["rate"] = json.loads(args.rate.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("rate", str(exc)) from exc
    for _, dest, _ in _FLAGS:
        v = getattr(args, dest)
        if v is not None:
            doc[dest] = v
    if "theta_range" in doc:
        doc["theta_range"] = tuple(doc["theta_range"])
    if doc.get("seed") is None and args.kind not in STOCHASTIC:
        doc["seed"] = 0
    return ExperimentConfig.from_dict(doc)


def _checks(checks) -> dict:
    return {k: c.as_dict() for k, c in checks.items()}


def _rf_header(cfg: ExperimentConfig) -> dict:
    rf = cfg.rate_function()
    return {"kind": rf.kind, "beta": rf.beta, "seed": cfg.seed}


def _run(cfg: ExperimentConfig, args) -> dict:
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    files: list[str] = []

    def table(name, header, cols, rows):
        io.write_table(out / name, header, cols, rows)
        files.append(name)

    rf = cfg.rate_function()
    results: dict
    if cfg.kind == "marginal":
        theta = 0.0 if cfg.theta_left is None else cfg.theta_left
        m = build_marginal(rf, theta)
        io.export_marginal(out / "marginal.csv", m)
        io.save_rate_function(out / "rate.json", rf)
        files += ["marginal.csv", "rate.json"]
        ok = m.tail_bound <= cfg.tolerances.get("tail_bound", 1e-15)
        results = {"theta": theta, "log_Z": m.log_Z, "mean": m.mean, "variance": m.variance,
                   "support": [m.z_min, m.z_max], "tail_bound": m.tail_bound}
        checks = {"tail_bound": {"value": m.tail_bound, "tolerance": 1e-15, "pass": ok}}
    elif cfg.kind == "equilibrium":
        r = run_equilibrium(cfg)
        theta = 0.0 if cfg.theta_left is None else cfg.theta_left
        t_end = 50.0 if cfg.t_end is None else cfg.t_end
        header = {**_rf_header(cfg), "n_sites": cfg.n_sites, "theta": theta, "boundary": "ring", "t": t_end}
        io.export_histogram(out / "histogram.csv", r.counts, header)
        files.append("histogram.csv")
        if getattr(args, "event_log", 0):
            log: list = []
            rng = np.random.default_rng(cfg.seed)
            st = iid_lattice(rf, cfg.n_sites, rng, theta)
            while len(log) < args.event_log and st.time < t_end:
                rec = gillespie_step(st, rng, t_stop=t_end)
                if rec is None:
                    break
                log.append(rec)
            table("events.csv", header, ["time", "bond", "pre_left", "pre_right", "post_left", "post_right"],
                  [(e.time, e.bond, *e.pre, *e.post) for e in log])
        results = {"tv": r.tv, "n_samples": r.n_samples, "rejections": r.rejections, "events": r.events}
        checks = _checks(r.checks)
    elif cfg.kind == "shock":
        r = run_shock_profile(cfg)
        header = {**_rf_header(cfg), "n_sites": cfg.n_sites, "theta_left": cfg.theta_left,
                  "theta_right": cfg.theta_right, "block": cfg.block, "replicas": cfg.replicas,
                  "boundary": "ghost"}
        table("profile.csv", header, ["t", "x_block", "u_hat", "stderr"],
              [(p.t, p.x, p.u_hat, p.stderr) for p in r.records()])
        if r.s is not None:
            table("front.csv", header, ["t", "front"], zip(r.front_times.tolist(), r.front_positions.tolist()))
        results = {"u_left": r.u_left, "u_right": r.u_right, "rh_speed": r.s, "front_speed": r.front_speed,
                   "profile_l1": r.profile_l1, "profile_l1_noise": r.profile_l1_noise,
                   "far_field_max_z": r.far_field_max_z, "rejections": r.rejections, "events": r.events}
        checks = _checks(r.checks)
    elif cfg.kind == "tracer":
        r = run_tracer_experiment(cfg)
        tl = 1.0 if cfg.theta_left is None else cfg.theta_left
        tr = cfg.theta_right if cfg.theta_right is not None else tl - rf.beta
        header = {**_rf_header(cfg), "theta_left": tl, "theta_right": tr, "K": cfg.window}
        table("trajectory.csv", header, ["time", "displacement"], zip(r.times.tolist(), r.displacements.tolist()))
        io.export_histogram(out / "marginal_left.csv", r.hist_left, {**header, "site": -1})
        io.export_histogram(out / "marginal_origin.csv", r.hist_origin, {**header, "site": 0})
        files += ["marginal_left.csv", "marginal_origin.csv"]
        s = r.shift
        results = {"v_hat": r.v_hat, "stderr": r.stderr, "analytic_speed": r.analytic_speed,
                   "rh_speed": r.rh_speed, "stationary_measure": str(r.stationary_verdict),
                   "stationary_residual": r.stationary_residual, "left_jumps": r.left_jumps,
                   "right_jumps": r.right_jumps,
                   "tv_left_vs_shifted_origin": s.tv_left_vs_shifted_right, "tv_left_exact": s.tv_left_exact,
                   "tv_origin_exact": s.tv_right_exact, "corr_far": s.corr_far, "corr_far_stderr": s.corr_far_stderr}
        checks = _checks(r.checks)
    elif cfg.kind == "verify-stationary":
        r = run_verify_stationary(cfg)
        results = {"translation_invariant_max": r.translation_max, "translation_invariant": str(r.translation_verdict),
                   "tracer_frame_max": r.tracer_max,
                   "tracer_frame": None if r.tracer_verdict is None else str(r.tracer_verdict)}
        checks = _checks(r.checks)
    elif cfg.kind == "verify-theorem":
        r = run_verify_theorem(cfg)
        table("scan.csv", {**_rf_header(cfg), "m": cfg.m, "grid": cfg.grid}, ["theta_l", "theta_r", "residual"],
              r.scan.rows())
        results = {"verdict": r.verdict, "argmin": list(r.scan.argmin), "minimum": r.scan.minimum,
                   "consistent_offsets": r.consistent_offsets,
                   "max_noise_floor": float(np.nanmax(r.scan.noise_floor))}
        checks = _checks(r.checks)
    elif cfg.kind == "convexity":
        r = run_convexity_report(cfg)
        table("convexity.csv", _rf_header(cfg), ["theta", "u", "J", "d2J_du2"], r.table.tolist())
        results = {"interval": list(r.interval)}
        checks = _checks(r.checks)
    else:  # pragma: no cover - argparse restricts the choices
        raise ConfigError("kind", "unknown")
    return {
        "experiment": cfg.kind,
        "seed": cfg.seed,
        "inputs": cfg.as_dict(),
        "outputs": files + ["summary.json"],
        "results": results,
        "checks": checks,
        "pass": all(c["pass"] for c in checks.values()),
    }


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"configuration error in field '{exc.field}': {exc}", file=sys.stderr)
        return 2
    try:
        summary = _run(cfg, args)
    except ConfigError as exc:
        print(f"configuration error in field '{exc.field}': {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure: report and exit 1
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    io.write_json(output_dir(cfg) / "summary.json", summary)
    print(io.dumps(summary))
    return 0 if summary["pass"] else 1


if __name__ == "__main__":
    sys.exit(main())
