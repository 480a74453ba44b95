"""Command-line entry point: ``qlbsim <command> ...``.

Exit codes: 0 success, 1 tolerance violation or infeasible request,
2 bad input.  Outputs default to ``$QLBSIM_OUTPUT_DIR`` (or the current
directory) when ``--out`` is omitted.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments, lbm
from .errors import ConfigError, CutoffError, InfeasibleGammaError, QLBError, ValidationError
from .hybrid import write_field_csv
from .protocol import config_header, parse_protocol, run_protocol, write_herald_csv, write_moments_csv

OUTPUT_ENV = "QLBSIM_OUTPUT_DIR"

EXIT_OK, EXIT_TOLERANCE, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _out_path(arg, default_name):
    if arg:
        return Path(arg)
    return Path(os.environ.get(OUTPUT_ENV, ".")) / default_name


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def cmd_decompose(args):
    doc = _load_json(args.omega)
    if not isinstance(doc, dict) or "m" not in doc:
        raise InputError("schema error: omega file must be an object with a 'm' matrix")
    extra = set(doc) - {"m", "dt"}
    if extra:
        raise InputError(f"schema error: unknown keys {sorted(extra)}")
    try:
        m = np.array(doc["m"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"schema error: 'm' is not a numeric matrix ({exc})") from exc
    dt = args.dt if args.dt is not None else doc.get("dt")
    if dt is None:
        raise InputError("schema error: no dt given (file or --dt)")
    gamma = "auto" if args.gamma in (None, "auto") else float(args.gamma)
    try:
        report = experiments.decomposition_report(m, float(dt), gamma)
    except ValidationError as exc:
        raise InputError(f"schema error: {exc}") from exc
    except InfeasibleGammaError as exc:
        lo, hi = exc.window if exc.window is not None else (float("nan"),) * 2
        print(f"infeasible: {exc}\nwindow: [{lo:.9g}, {hi:.9g}]", file=sys.stderr)
        return EXIT_TOLERANCE
    _write(_out_path(args.out, "decomposition.json"), json.dumps(report, indent=2) + "\n")
    print(f"gamma={report['gamma']:.9g} window=[{report['window'][0]:.9g}, "
          f"{report['window'][1]:.9g}] p_fail={report['p_fail']:.6g} residual={report['residual']:.3e}")
    return EXIT_OK


def cmd_fig2(args):
    rows, _ = experiments.fig2_rows(args.seed, args.dim, args.n_max, args.instances)
    cfg = {"command": "fig2", "dim": args.dim, "seed": args.seed, "n_max": args.n_max,
           "instances": args.instances, "spectral_radius": experiments.FIG2_SPECTRAL_RADIUS}
    _write(_out_path(args.out, "fig2.csv"), experiments.csv_text(experiments.FIG2_COLUMNS, rows, cfg))
    return EXIT_OK


def cmd_fig3(args):
    rows = experiments.fig3_rows(args.diffusivity, args.dt_max, args.samples)
    cfg = {"command": "fig3", "diffusivity": args.diffusivity, "dt_max": args.dt_max,
           "samples": args.samples}
    _write(_out_path(args.out, "fig3.csv"), experiments.csv_text(experiments.FIG3_COLUMNS, rows, cfg))
    return EXIT_OK


def cmd_lb_run(args):
    cfg = _load_json(args.config)
    sc = lbm.parse_scenario(cfg)
    traj = lbm.run(sc.initial_field(), sc.model, sc.steps, sc.sample_every)
    _write(_out_path(args.out, "lb_moments.csv"),
           experiments.csv_text(lbm.Trajectory.COLUMNS, traj.rows(), cfg))
    if args.dump:
        rho = traj.final.rho
        rows = [(x, y, rho[x, y]) for x in range(sc.nx) for y in range(sc.ny)]
        _write(Path(args.dump), experiments.csv_text(("x", "y", "rho"), rows, cfg))
    return EXIT_OK


def cmd_qsim_run(args):
    cfg = _load_json(args.config)
    qcfg = parse_protocol(cfg)
    result = run_protocol(qcfg)
    out = Path(args.out_dir) if args.out_dir else Path(os.environ.get(OUTPUT_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    header = config_header(cfg)
    with open(out / "herald.csv", "w", newline="") as fh:
        write_herald_csv(result.record, fh, header)
    with open(out / "moments.csv", "w", newline="") as fh:
        write_moments_csv(result, fh, header)
    for step, sample in result.fields:
        with open(out / f"field_{step:06d}.csv", "w", newline="") as fh:
            fh.write(header)
            write_field_csv(sample, fh)
    if result.halted:
        print("herald failure: trajectory halted", file=sys.stderr)
    return EXIT_OK


def cmd_compare(args):
    sc = lbm.parse_scenario(_load_json(args.lb))
    qcfg = parse_protocol(_load_json(args.qsim))
    report = experiments.compare_report(sc, qcfg)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    _write(_out_path(args.out, "compare.json"), text)
    print(text, end="")
    return EXIT_OK if report["passed"] else EXIT_TOLERANCE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qlbsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("decompose", help="split exp(m dt) into two weighted unitaries")
    d.add_argument("--omega", required=True, help="JSON file with fields m (and optionally dt)")
    d.add_argument("--dt", type=float)
    d.add_argument("--gamma", default="auto", help="weight, or 'auto' for the optimum")
    d.add_argument("--out")
    d.set_defaults(func=cmd_decompose)

    f2 = sub.add_parser("fig2", help="success probability versus substeps and gamma")
    f2.add_argument("--dim", type=int, default=4)
    f2.add_argument("--seed", type=int, default=0)
    f2.add_argument("--n-max", type=int, default=10)
    f2.add_argument("--instances", type=int, default=5)
    f2.add_argument("--out")
    f2.set_defaults(func=cmd_fig2)

    f3 = sub.add_parser("fig3", help="collision spectrum and gamma window versus dt")
    f3.add_argument("--diffusivity", type=float, default=0.05)
    f3.add_argument("--dt-max", type=float, default=4.0)
    f3.add_argument("--samples", type=int, default=200)
    f3.add_argument("--out")
    f3.set_defaults(func=cmd_fig3)

    lb = sub.add_parser("lb", help="classical lattice Boltzmann reference")
    lbs = lb.add_subparsers(dest="lb_command", required=True)
    lr = lbs.add_parser("run")
    lr.add_argument("--config", required=True)
    lr.add_argument("--out")
    lr.add_argument("--dump", help="optional final density CSV")
    lr.set_defaults(func=cmd_lb_run)

    q = sub.add_parser("qsim", help="heralded quantum protocol")
    qs = q.add_subparsers(dest="qsim_command", required=True)
    qr = qs.add_parser("run")
    qr.add_argument("--config", required=True)
    qr.add_argument("--out-dir")
    qr.set_defaults(func=cmd_qsim_run)

    c = sub.add_parser("compare", help="quantum versus classical report")
    c.add_argument("--lb", required=True)
    c.add_argument("--qsim", required=True)
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("dim", "n_max", "instances", "samples"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            print(f"error: --{name.replace('_', '-')} must be positive", file=sys.stderr)
            return EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, ConfigError, ValidationError, CutoffError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except QLBError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
