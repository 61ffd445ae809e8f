"""Command-line entry point.

Exit codes: 0 success, 2 bad arguments or configuration, 3 simulation
diverged, 4 output could not be written, 5 selftest failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import dump_config, load_config
from .errors import ConfigError, OutputError, SimulationDivergence
from .io import emit_csv, emit_summary, emit_tap
from .scenario import run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_OUTPUT, EXIT_SELFTEST = 0, 2, 3, 4, 5


def _fmt(x, spec):
    return "n/a" if x is None else format(x, spec)


def _report(summary):
    print(f"speed {summary.speed_rpm:g} rpm, mode {summary.mode}, {len(summary.windows)} injection window(s)")
    for w in summary.windows:
        print(f"  window {w.index} [{w.start_s:g}, {w.end_s:g}) s: R_hf {_fmt(w.R_hf_mean, '.4f')} ohm "
              f"(plant {_fmt(w.R_true_mean, '.4f')}), T_r est {_fmt(w.T_r_est_mean, '.2f')} C "
              f"vs {_fmt(w.T_r_true_mean, '.2f')} C, settle {_fmt(w.settling_time_s, '.2f')} s")


def _prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = _prepare_out(args.out)
    runlog, summary = run_scenario(cfg)
    emit_csv(runlog, out / "run.csv")
    if runlog.tap is not None:
        emit_tap(runlog, out / "dsp_tap.csv")
    emit_summary(summary, out / "summary.json")
    try:
        (out / "config_effective.ini").write_text(dump_config(cfg))
    except OSError as exc:
        raise OutputError(f"cannot write {out / 'config_effective.ini'}: {exc.strerror}") from None
    _report(summary)
    return EXIT_OK


def _speeds(text):
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated speeds, got {text!r}") from None
    if any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("speeds must be > 0")
    return vals


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    out = _prepare_out(args.out)
    summaries = []
    for rpm in args.speeds:
        runlog, summary = run_scenario(cfg.with_run(speed_setpoint_rpm=rpm))
        emit_csv(runlog, out / f"run_{rpm:g}rpm.csv")
        if runlog.tap is not None:
            emit_tap(runlog, out / f"dsp_tap_{rpm:g}rpm.csv")
        summaries.append(summary)
        _report(summary)
    emit_summary(summaries, out / "summary.json")
    return EXIT_OK


def cmd_selftest(_args) -> int:
    from .selftest import run_selftest

    return EXIT_OK if run_selftest() else EXIT_SELFTEST


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ipmtherm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress and warnings")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario")
    s.add_argument("--config", required=True, help="INI scenario file")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="run the scenario at several speeds")
    w.add_argument("--config", required=True, help="INI scenario file")
    w.add_argument("--speeds", required=True, type=_speeds, help="comma-separated rpm list, e.g. 600,900,1200")
    w.add_argument("--out", required=True, help="output directory")
    w.set_defaults(func=cmd_sweep)

    t = sub.add_parser("selftest", help="run the built-in invariant checks")
    t.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationDivergence as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OutputError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT


if __name__ == "__main__":
    sys.exit(main())
