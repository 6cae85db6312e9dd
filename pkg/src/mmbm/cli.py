"""Command line front end.

Every subcommand writes into ``--out DIR`` (created if needed) and leaves a
``manifest.json`` next to its outputs. States are numbered from 1 in files
and flags. Exit codes: 0 success, 2 bad input, 3 numerical failure; errors
are reported as one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from . import closed_forms as cf
from .decomposition import compute_partition, forcing_constants, projection_maps
from .dividend import make_dividend_model, solve_value_function
from .errors import InputError, MmbmError, NumericalError
from .model import validate_model
from .simulator import (SimConfig, empirical_dividend, empirical_regeneration, empirical_stationary,
                        simulate_path)
from .stationary import regeneration, solve_stationary

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _fmt(x):
    return "%.17g" % x


def write_csv(path, header, rows):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) if isinstance(v, (int, np.integer)) else _fmt(v) for v in row) + "\n")


def write_json(path, obj):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _read_json_arg(text):
    """JSON given inline or as a path to a file."""
    p = Path(text)
    try:
        if p.is_file():
            return json.loads(p.read_text(encoding="utf-8")), p.read_bytes()
        return json.loads(text), text.encode()
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read JSON from {text!r}: {exc}") from exc


def _load_model_file(path):
    try:
        raw_bytes = Path(path).read_bytes()
        raw = json.loads(raw_bytes)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read model file {path!r}: {exc}") from exc
    return raw, raw_bytes


def _cdf_rows(dist, grid):
    rows = []
    for i in range(dist.model.n_states):
        vals = dist.cdf(grid, i)
        dens = dist.derivative(grid, i, 1)
        rows.extend((i + 1, z, v, d) for z, v, d in zip(grid, vals, dens))
    return rows


def _value_rows(vf, grid):
    rows = []
    for j in range(vf.model.n_states):
        zs = grid[grid <= vf.model.b[j]]
        rows.extend((j + 1, z, v, d) for z, v, d in zip(zs, vf.value(zs, j), vf.value(zs, j, 1)))
    return rows


class Run:
    """Output directory plus manifest bookkeeping for one invocation."""

    def __init__(self, args, input_bytes=b"", seeds=()):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.input_hash = hashlib.sha256(input_bytes).hexdigest()
        self.seeds = list(seeds)
        self.started = time.perf_counter()
        self.stamp = datetime.now(timezone.utc).isoformat()
        self.files = []

    def path(self, name):
        self.files.append(name)
        return self.out / name

    def finish(self):
        config = {k: v for k, v in sorted(vars(self.args).items()) if k != "func"}
        write_json(self.out / "manifest.json", {
            "subcommand": self.args.command,
            "config": config,
            "tool_version": _version(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "input_sha256": self.input_hash,
            "seeds": self.seeds,
            "outputs": sorted(self.files),
            "started_utc": self.stamp,
            "wall_clock_seconds": time.perf_counter() - self.started,
        })


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args):
    raw, data = _load_model_file(args.model)
    model = validate_model(raw, for_solver=not args.simulation_only)
    cls = model.classification
    report = {
        "valid": True,
        "n_states": model.n_states,
        "pi": model.pi.tolist(),
        "kappa": model.kappa,
        "e_plus": sorted(i + 1 for i in cls.e_plus),
        "e_minus": sorted(i + 1 for i in cls.e_minus),
        "deterministic_of_j": model.deterministic,
    }
    if args.out:
        run = Run(args, data)
        write_json(run.path("validation.json"), report)
        run.finish()
    print(json.dumps(report, sort_keys=True))


def cmd_decompose(args):
    raw, data = _load_model_file(args.model)
    model = validate_model(raw)
    part = compute_partition(model)
    info = part.to_dict()
    proj = projection_maps(part, model.classification)
    for k, entry in enumerate(info["intervals"]):
        entry["forcing"] = forcing_constants(part, model, k).tolist()
        entry["rows"] = {name: [i + 1 for i in getattr(proj[k], name)]
                         for name in ("d_bar_plus", "u_bar_minus", "u", "u_tilde")}
    run = Run(args, data)
    write_json(run.path("partition.json"), info)
    run.finish()


def cmd_stationary(args):
    raw, data = _load_model_file(args.model)
    dist = solve_stationary(validate_model(raw))
    run = Run(args, data)
    write_csv(run.path("cdf.csv"), ["state", "z", "cdf", "density"], _cdf_rows(dist, dist.grid(args.grid)))
    write_json(run.path("atoms.json"), [a.to_dict() for a in dist.atoms])
    write_json(run.path("diagnostics.json"), dist.diagnostics())
    run.finish()


ORACLES = ("common", "regeneration", "nodiff1", "nodiff2", "single", "dividend")


def _build_oracle(kind, p):
    try:
        if kind in ("common", "regeneration"):
            return cf.CommonTwoState(cf.TwoStateCommonParams(**p))
        if kind == "nodiff1":
            return cf.NoDiffusionState1(cf.TwoStateParams(**p))
        if kind == "nodiff2":
            return cf.NoDiffusionState2(cf.TwoStateParams(**p))
        if kind == "single":
            return cf.SingleState(**p)
        p = dict(p)
        p["mu"], p["sigma"] = tuple(p["mu"]), tuple(p["sigma"])
        return cf.DividendTwoState(cf.DividendTwoStateParams(**p))
    except TypeError as exc:
        raise InputError(f"bad parameters for {kind}: {exc}") from exc


def _write_regen(run, reg_eta, H, lower, upper, n, extra=None):
    zs = np.linspace(lower, upper, n)
    write_csv(run.path("regen.csv"), ["z", "H"], zip(zs, H(zs)))
    diag = {"eta": reg_eta, "mean_cycle_length": 1.0 / reg_eta if reg_eta > 0 else float("inf")}
    diag.update(extra or {})
    write_json(run.path("diagnostics.json"), diag)


def cmd_oracle(args):
    params, data = _read_json_arg(args.params)
    obj = _build_oracle(args.kind, params)
    run = Run(args, data)
    if args.kind == "dividend":
        write_csv(run.path("value.csv"), ["state", "z", "value", "derivative"], _value_rows(obj, obj.grid(args.grid)))
        gaps = obj.gluing_gaps()
        write_json(run.path("diagnostics.json"), {
            "roots": obj.roots.real.tolist(),
            "k": [complex(k).real for k in obj.k] + [obj.k3],
            "ode_residual": obj.residual(),
            "continuity_gap_b1": gaps[0],
            "smoothness_gap_b1": gaps[1],
            "quartic_residual": obj.quartic_residual(),
        })
    elif args.kind == "regeneration":
        reg = obj.regeneration()
        _write_regen(run, reg.eta, reg.H, obj.params.b1, obj.params.b2, args.grid)
    else:
        write_csv(run.path("cdf.csv"), ["state", "z", "cdf", "density"], _cdf_rows(obj, obj.grid(args.grid)))
        write_json(run.path("atoms.json"), [a.to_dict() for a in obj.atoms])
        write_json(run.path("diagnostics.json"), {"balance_residual": obj.balance_residual()})
    run.finish()


def cmd_regen(args):
    raw, data = _load_model_file(args.model)
    model = validate_model(raw)
    target = args.target - 1
    if not 0 <= target < model.n_states:
        raise InputError(f"--target must lie in 1..{model.n_states}")
    reg = regeneration(solve_stationary(model), target)
    if not reg.upper > reg.lower or not reg.eta > 0:
        raise InputError("no clamping down-jumps into the target state: its upper barrier is the highest")
    run = Run(args, data)
    _write_regen(run, reg.eta, reg.H, reg.lower, reg.upper, args.grid, {"target_state": args.target})
    run.finish()


def _sim_config(args, model):
    z0 = args.z0
    return SimConfig(dt=args.dt, horizon=args.horizon, burn_in=args.burn_in, replications=args.reps,
                     seed=args.seed, z0=z0, j0=args.j0 - 1, scheme=args.scheme, threads=args.threads,
                     grid_points=args.grid).validate(model)


def cmd_simulate(args):
    raw, data = _load_model_file(args.model)
    if args.mode == "dividend":
        delta = args.delta if args.delta is not None else raw.get("delta")
        dmodel = make_dividend_model(raw, delta)
        model = dmodel.model
    else:
        model = validate_model(raw, for_solver=False)
    config = _sim_config(args, model)
    run = Run(args, data, seeds=[config.seed])
    if args.mode == "dividend":
        if args.z0 is not None:
            points = [(config.j0, float(args.z0))]
        else:
            points = [(j, float(z)) for j in range(model.n_states)
                      for z in np.linspace(0.0, model.b[j], 7)[1:-1]]
        rows, diag = [], []
        for j, z in points:
            est = empirical_dividend(model, dmodel.delta, z, j, config)
            rows.append((j + 1, z, est.mean, est.stderr, est.ruin_fraction))
            diag.append({"state": j + 1, "z": z, **est.to_dict()})
        write_csv(run.path("value.csv"), ["state", "z", "value", "stderr", "ruin_fraction"], rows)
        write_json(run.path("diagnostics.json"), {"points": diag, "scheme": config.scheme_for("bridge")})
        run.finish()
        return
    est = simulate_path(model, config)
    diag = {
        "elapsed": est.elapsed,
        "scheme": config.scheme_for("bridge"),
        "occupancy": est.occupancy_fraction.tolist(),
        "atoms_lower": est.atom_masses["lower"].tolist(),
        "atoms_upper": est.atom_masses["upper"].tolist(),
        "lower_regulator": est.lower_regulator.tolist(),
        "upper_regulator": est.upper_regulator.tolist(),
        "jump_up": est.jump_up.tolist(),
        "jump_down": est.jump_down.tolist(),
        "events": int(est.event_levels.size),
        "event_overflow": est.event_overflow,
    }
    if args.mode == "regen":
        target = args.target - 1
        reg = empirical_regeneration(est, target=target, min_cycles=args.min_cycles)
        diag.update({"eta": reg.eta, "eta_half_width": reg.eta_half_width, "cycles": reg.n_cycles,
                     "H_half_width": reg.h_half_width, "target_state": args.target})
        zs = np.linspace(reg.lower, reg.upper, args.grid)
        write_csv(run.path("regen.csv"), ["z", "H", "H_half_width"],
                  ((z, h, reg.h_half_width) for z, h in zip(zs, reg.H(zs))))
    else:
        emp = empirical_stationary(est)
        se = _replication_stderr(model, config, est) if config.replications > 1 else None
        rows = []
        for i in range(model.n_states):
            for m, z in enumerate(est.grid):
                rows.append((i + 1, z, emp[i, m], se[i, m] if se is not None else float("nan")))
        write_csv(run.path("cdf.csv"), ["state", "z", "cdf", "stderr"], rows)
    write_json(run.path("diagnostics.json"), diag)
    run.finish()


def _replication_stderr(model, config, pooled):
    """Spread of the per-replication CDFs, each replication run on its own."""
    from dataclasses import replace

    from .simulator import _run_path

    per = []
    for r in range(config.replications):
        occ = _run_path(model, replace(config, replications=1), pooled.grid, r)[0]
        per.append(np.cumsum(occ[:, :-1], axis=1) / (config.horizon - config.burn_in))
    per = np.array(per)
    return per.std(axis=0, ddof=1) / np.sqrt(config.replications)


def cmd_dividend(args):
    raw, data = _load_model_file(args.model)
    delta = args.delta if args.delta is not None else raw.get("delta")
    if delta is None:
        raise InputError("a discount rate is required: pass --delta or put 'delta' in the model file")
    vf = solve_value_function(make_dividend_model(raw, delta))
    run = Run(args, data)
    write_csv(run.path("value.csv"), ["state", "z", "value", "derivative"], _value_rows(vf, vf.grid(args.grid)))
    write_json(run.path("diagnostics.json"), vf.diagnostics())
    run.finish()


def cmd_selftest(args):
    from .acceptance import run_all

    results = run_all(only=args.only, verbose=True)
    if args.out:
        run = Run(args)
        write_json(run.path("selftest.json"), [r.to_dict() for r in results])
        run.finish()
    if not all(r.passed for r in results):
        return 1
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mmbm",
        description="Stationary laws, dividend values and Monte Carlo for reflected modulated Brownian motion.")
    parser.add_argument("--version", action="version", version=_version())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file")
    p.add_argument("model")
    p.add_argument("--simulation-only", action="store_true",
                   help="accept models only the simulator can handle")
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("decompose", help="barrier intervals, active states and forcing")
    p.add_argument("model")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("stationary", help="stationary CDFs, atoms and diagnostics")
    p.add_argument("model")
    p.add_argument("--grid", type=int, default=400)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stationary)

    p = sub.add_parser("oracle", help="closed-form special cases")
    p.add_argument("kind", choices=ORACLES)
    p.add_argument("--params", required=True, help="JSON object or path to a JSON file")
    p.add_argument("--grid", type=int, default=400)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("regen", help="rate and pre-jump law of clamping down-jumps")
    p.add_argument("model")
    p.add_argument("--target", type=int, default=1, help="state jumped into (1-based)")
    p.add_argument("--grid", type=int, default=400)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_regen)

    p = sub.add_parser("simulate", help="seeded Monte Carlo")
    p.add_argument("model")
    p.add_argument("--mode", choices=("stationary", "regen", "dividend"), default="stationary")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=2e4)
    p.add_argument("--burn-in", type=float, default=1e3)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--z0", type=float)
    p.add_argument("--j0", type=int, default=1)
    p.add_argument("--delta", type=float)
    p.add_argument("--target", type=int, default=1)
    p.add_argument("--min-cycles", type=int, default=200)
    p.add_argument("--scheme", choices=("euler", "bridge"))
    p.add_argument("--threads", type=int)
    p.add_argument("--grid", type=int, default=2001)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dividend", help="expected discounted dividends")
    p.add_argument("model")
    p.add_argument("--delta", type=float)
    p.add_argument("--grid", type=int, default=400)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dividend)

    p = sub.add_parser("selftest", help="run the acceptance criteria")
    p.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    p.add_argument("--out")
    p.set_defaults(func=cmd_selftest)
    return parser


def _report(exc, code):
    payload = exc.to_dict() if isinstance(exc, MmbmError) else {"error": type(exc).__name__, "message": str(exc)}
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def cli_main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rc = args.func(args)
    except InputError as exc:
        return _report(exc, EXIT_INPUT)
    except NumericalError as exc:
        return _report(exc, EXIT_NUMERICAL)
    except (np.linalg.LinAlgError, FloatingPointError, AssertionError) as exc:
        return _report(exc, EXIT_NUMERICAL)
    return EXIT_OK if rc is None else rc


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
