"""Command-line entry point: simulate, sweep, verify, report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analysis import (
    InsufficientDataError,
    SweepSpec,
    rows_from_csv,
    scenario_report,
    sweep,
    write_sweep,
)
from .engine import SimConfig, UnstableRunError, run, verify_identity

EXIT_OK, EXIT_VERDICT, EXIT_INPUT = 0, 1, 2
TOLERANCE = 0.05


class InputError(Exception):
    pass


def _load_json(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path} must hold a JSON object")
    return data


def _sim_config(path) -> SimConfig:
    try:
        return SimConfig.from_dict(_load_json(path))
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def cmd_simulate(args) -> int:
    cfg = _sim_config(args.config)
    try:
        metrics = run(cfg)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    print(metrics.to_json())
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _sim_config(args.config)
    try:
        metrics = run(cfg)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out = {"eta_hat": metrics.eta_hat, "k_hat": metrics.k_hat, "ey_hat": metrics.ey_hat,
           "stable": metrics.stable, "tolerance": TOLERANCE}
    try:
        res = verify_identity(metrics)
    except (UnstableRunError, ValueError) as exc:
        out.update(residual=None, ok=False, reason=str(exc))
        print(json.dumps(out, indent=2))
        return EXIT_VERDICT
    out.update(residual=res, ok=res <= TOLERANCE)
    print(json.dumps(out, indent=2))
    return EXIT_OK if res <= TOLERANCE else EXIT_VERDICT


def cmd_sweep(args) -> int:
    try:
        spec = SweepSpec.from_dict(_load_json(args.config))
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    rows = sweep(spec, workers=args.workers)
    for r in rows:
        if not r.ok:
            print(f"point value={r.value:g} seed={r.seed} failed: {r.error}", file=sys.stderr)
    rep = write_sweep(args.out, spec, rows)
    if rep is None:
        print("too few stable points for a fit", file=sys.stderr)
        return EXIT_VERDICT
    print(rep.table())
    return EXIT_OK if rep.verdict == "pass" else EXIT_VERDICT


def cmd_report(args) -> int:
    d = Path(args.in_dir)
    try:
        key, _, rows = rows_from_csv((d / "sweep.csv").read_text())
    except OSError as exc:
        raise InputError(f"cannot read sweep.csv in {d}: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    spec = {}
    if (d / "fit.json").exists():
        spec = _load_json(d / "fit.json").get("spec", {})
    try:
        rep = scenario_report(rows, key, spec.get("aggregate", "mean"),
                              spec.get("fit_min"), spec.get("fit_max"))
    except InsufficientDataError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VERDICT
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    (d / "scaling.dat").write_text(rep.scaling_dat())
    print(rep.table())
    return EXIT_OK if rep.verdict == "pass" else EXIT_VERDICT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netcap", description="Wireless network capacity simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", help="one run, JSON metrics on stdout")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_simulate)
    s = sub.add_parser("sweep", help="parameter sweep with slope fit")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)
    s = sub.add_parser("verify", help="check eta = E(Y) W / k on one run")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_verify)
    s = sub.add_parser("report", help="table and scaling.dat from a sweep directory")
    s.add_argument("--in", dest="in_dir", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
