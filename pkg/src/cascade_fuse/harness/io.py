"""Result persistence and replay-log loading.

Floats are written with ``%.17g`` so CSV files round-trip exactly and two
runs with the same configuration produce identical bytes.
"""

from __future__ import annotations

import csv
import json
import subprocess
from pathlib import Path

import numpy as np

from .config import ConfigError

IMU_COLUMNS = ("t", "gx", "gy", "gz", "ax", "ay", "az", "mx", "my", "mz")
UWB_COLUMNS = ("t", "px", "py", "pz")

RMSE_NOTE = (
    "square root of the mean squared error-vector norm over all evaluation "
    "steps and unflagged trials; attitude errors are rotation vectors in the "
    "tangent space, so their norm is the geodesic angle in radians"
)
NEES_NOTE = (
    "fraction_within is the share of evaluation steps whose trial-averaged "
    "NEES lies inside the two-sided 95% chi-square band; this artifact "
    "treats >= 0.9 (linear) and >= 0.85 (nonlinear) as passing"
)


def _fmt(x) -> str:
    return "%.17g" % x


def git_describe() -> str:
    """``git describe`` of the source tree, or ``"unknown"`` outside git."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def write_nees_csv(path, steps, series):
    with open(path, "w", newline="") as fh:
        fh.write("step,epsilon_bar,lower,upper\n")
        lo, hi = _fmt(series.lower), _fmt(series.upper)
        for k, e in zip(steps, series.epsilon_bar):
            fh.write(f"{int(k)},{_fmt(e)},{lo},{hi}\n")


def write_errors_csv(path, components, rows):
    trials, steps = rows["trial"], rows["step"]
    err, sig = rows["error"], rows["sigma"]
    with open(path, "w", newline="") as fh:
        fh.write("trial,step,component,error,sigma\n")
        for i, t in enumerate(trials):
            for j, k in enumerate(steps):
                for c, name in enumerate(components):
                    fh.write(f"{int(t)},{int(k)},{name},{_fmt(err[i, j, c])},{_fmt(sig[i, j, c])}\n")


def write_series_csv(path, header, steps, values):
    with open(path, "w", newline="") as fh:
        fh.write(f"step,{header}\n")
        for k, v in zip(steps, values):
            fh.write(f"{int(k)},{_fmt(v)}\n")


def summary_dict(result) -> dict:
    est = result.estimators
    nees = {}
    for name, s in est.items():
        if s.nees is None:
            continue
        nees[name] = {
            "dof": s.nees.dof,
            "lower": s.nees.lower,
            "upper": s.nees.upper,
            "mean": float(np.mean(s.nees.epsilon_bar)),
            "fraction_within": s.nees.fraction_within(),
        }
    return {
        "scenario": result.config.scenario,
        "n_trials": result.n_trials,
        "n_used": result.n_used,
        "flagged_count": len(result.flagged),
        "flagged": result.flagged,
        "run_failed": result.failed,
        "rmse": {name: s.rmse for name, s in est.items()},
        "rmse_note": RMSE_NOTE,
        "coverage": {name: s.coverage for name, s in est.items()},
        "nees": nees,
        "nees_note": NEES_NOTE,
        "kl_median": {
            name: float(np.median(s.kl)) for name, s in est.items() if s.kl is not None
        },
        "mean_deflations_per_trial": {
            name: float(np.sum(s.deflations)) for name, s in est.items() if s.deflations is not None
        },
        "git_describe": git_describe(),
        "config": result.config.to_dict(),
    }


def write_run(result, out_dir) -> Path:
    """Write one directory per estimator plus ``summary.json``.

    Each estimator directory holds ``nees.csv`` and ``errors.csv`` and, when
    available, ``kl.csv`` (divergence from the full filter) and
    ``deflations.csv`` (mean deflation count per time step).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, s in result.estimators.items():
        d = out / name
        d.mkdir(exist_ok=True)
        if s.nees is None:
            continue
        write_nees_csv(d / "nees.csv", s.eval_steps, s.nees)
        write_errors_csv(d / "errors.csv", s.components, s.error_rows)
        if s.kl is not None:
            write_series_csv(d / "kl.csv", "kl", s.eval_steps, s.kl)
        if s.deflations is not None:
            write_series_csv(
                d / "deflations.csv", "mean_count", np.arange(s.deflations.shape[0]), s.deflations
            )
    with open(out / "summary.json", "w") as fh:
        json.dump(summary_dict(result), fh, indent=2)
        fh.write("\n")
    return out


def read_summary(in_dir) -> dict:
    path = Path(in_dir) / "summary.json"
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None


class ReplayInputError(ConfigError):
    """A replay log is malformed."""


def _load_log(path, columns):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != columns:
                raise ReplayInputError(f"{path}: expected header {','.join(columns)}")
            rows = [r for r in reader if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise ReplayInputError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise ReplayInputError(f"{path}: no data rows")
    try:
        data = np.array(rows, dtype=np.float64)
    except ValueError:
        raise ReplayInputError(f"{path}: rows must hold {len(columns)} numeric fields") from None
    if data.ndim != 2 or data.shape[1] != len(columns):
        raise ReplayInputError(f"{path}: rows must hold {len(columns)} numeric fields")
    if not np.all(np.isfinite(data)):
        raise ReplayInputError(f"{path}: non-finite values")
    if np.any(np.diff(data[:, 0]) <= 0):
        raise ReplayInputError(f"{path}: timestamps must be strictly increasing")
    return data


def load_imu_csv(path) -> np.ndarray:
    """IMU log as an ``(n, 10)`` array: time, gyro, accel, magnetometer."""
    return _load_log(path, IMU_COLUMNS)


def load_uwb_csv(path) -> np.ndarray:
    """UWB log as an ``(m, 4)`` array: time and tag position."""
    return _load_log(path, UWB_COLUMNS)


def write_table_csv(path, header, data):
    """Numeric table with a header row."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in np.atleast_2d(data):
            fh.write(",".join(_fmt(v) for v in row) + "\n")
