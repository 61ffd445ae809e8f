"""CSV and JSON output of runs and summaries."""

from __future__ import annotations

import dataclasses
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import OutputError
from .kernel import LOG_COLUMNS, TAP_COLUMNS
from .scenario import RunLog, Summary

HEADER = ",".join(LOG_COLUMNS)


def _fail(path, exc):
    raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from None


def emit_csv(runlog: RunLog, path) -> Path:
    """Write the log as CSV.

    A comment line records the decimation factor and control period; the
    next line is the fixed column header. Floats use 9 significant digits.
    """
    path = Path(path)
    meta = f"# decimation={runlog.decimation} control_period_s={runlog.control_period!r}"
    try:
        with open(path, "w", newline="") as f:
            f.write(meta + "\n" + HEADER + "\n")
            if len(runlog):
                np.savetxt(f, runlog.data, fmt="%.9g", delimiter=",")
    except OSError as exc:
        _fail(path, exc)
    return path


def emit_tap(runlog: RunLog, path) -> Path:
    """Write the DSP tap rows (raw and bandpassed pipeline inputs) as CSV."""
    path = Path(path)
    if runlog.tap is None:
        raise OutputError("run has no DSP tap; set dsp.tap = true")
    try:
        with open(path, "w", newline="") as f:
            f.write(",".join(TAP_COLUMNS) + "\n")
            if len(runlog.tap):
                np.savetxt(f, runlog.tap, fmt="%.9g", delimiter=",")
    except OSError as exc:
        _fail(path, exc)
    return path


def read_csv(path) -> RunLog:
    """Parse a file written by :func:`emit_csv`."""
    path = Path(path)
    with open(path) as f:
        meta = f.readline()
        header = f.readline().strip()
        if header != HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        kv = dict(item.split("=") for item in meta.lstrip("# ").split())
        body = f.read()
    if body.strip():
        data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    else:
        data = np.zeros((0, len(LOG_COLUMNS)))
    return RunLog(data, int(kv["decimation"]), float(kv["control_period_s"]))


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return _clean(obj.item())
    return obj


def summary_to_dict(summary: Summary) -> dict:
    return _clean(dataclasses.asdict(summary))


def emit_summary(summary, path) -> Path:
    """Write one summary, or a list of summaries, as JSON."""
    path = Path(path)
    if isinstance(summary, (list, tuple)):
        payload = [summary_to_dict(s) for s in summary]
    else:
        payload = summary_to_dict(summary)
    try:
        path.write_text(json.dumps(payload, indent=2, sort_keys=False) + "\n")
    except OSError as exc:
        _fail(path, exc)
    return path
