"""CSV/TOML persistence for series, spectra, VPT reports, models and search history.

Every file starts with ``#`` metadata comment lines (package version and,
when known, the config hash); loaders skip them.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import __version__
from .cmaes import Evaluation
from .dynamics import TimeSeries
from .errors import InvalidArgumentError
from .evaluation import ClimateStats, VptReport
from .invariants import LyapunovSpectrum
from .reservoir import ReservoirParams, Standardizer, TrainedModel, build_reservoir

FLOAT_FMT = "%.17g"


def metadata_lines(config_hash: str | None = None, **extra) -> list[str]:
    lines = [f"# rcinvariants_version: {__version__}"]
    if config_hash:
        lines.append(f"# config_sha256: {config_hash}")
    lines += [f"# {k}: {v}" for k, v in extra.items()]
    return lines


def read_metadata(path) -> dict[str, str]:
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
    return meta


def _fmt(x: float) -> str:
    return repr(float(x))


def _write(path, lines: list[str]) -> None:
    Path(path).write_text("\n".join(lines) + "\n")


def _data_rows(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    return rows


def save_timeseries(series: TimeSeries, path, config_hash: str | None = None) -> None:
    header = ",".join(["t"] + [f"u{i + 1}" for i in range(series.D)])
    buf = io.StringIO()
    table = np.column_stack([series.times, series.data])
    np.savetxt(buf, table, fmt=FLOAT_FMT, delimiter=",")
    lines = metadata_lines(config_hash, dt=_fmt(series.dt)) + [header]
    Path(path).write_text("\n".join(lines) + "\n" + buf.getvalue())


def load_timeseries(path) -> TimeSeries:
    rows = _data_rows(path)
    if not rows or rows[0][0] != "t":
        raise InvalidArgumentError(f"{path}: expected header row 't,u1,...'")
    D = len(rows[0]) - 1
    data = np.array(rows[1:], dtype=np.float64).reshape(-1, D + 1)
    meta = read_metadata(path)
    if "dt" in meta:
        dt = float(meta["dt"])
    elif data.shape[0] >= 2:
        dt = float(data[1, 0] - data[0, 0])
    else:
        raise InvalidArgumentError(f"{path}: cannot infer dt")
    return TimeSeries(dt, data[:, 1:])


def save_spectrum(spectrum: LyapunovSpectrum, path, config_hash: str | None = None) -> None:
    lines = metadata_lines(config_hash, n_steps=spectrum.n_steps_used, dt=_fmt(spectrum.dt))
    lines.append("index,lambda")
    lines += [f"{i + 1},{_fmt(v)}" for i, v in enumerate(spectrum.exponents)]
    _write(path, lines)


def load_spectrum(path) -> LyapunovSpectrum:
    meta = read_metadata(path)
    rows = _data_rows(path)[1:]
    return LyapunovSpectrum(np.array([float(r[1]) for r in rows]),
                            int(meta.get("n_steps", 0)), float(meta.get("dt", 1.0)))


def save_vpt_report(report: VptReport, path, config_hash: str | None = None) -> None:
    lines = metadata_lines(config_hash, epsilon=_fmt(report.epsilon),
                           lambda1=_fmt(report.lambda1))
    lines.append("ic_index,vpt_lyapunov_times,censored")
    lines += [f"{i},{_fmt(v)},{int(c)}"
              for i, (v, c) in enumerate(zip(report.vpt_values, report.censored))]
    lines.append(f"# summary: mean={_fmt(report.mean)} median={_fmt(report.median)} "
                 f"n={len(report.vpt_values)} censored={report.n_censored}")
    _write(path, lines)


def load_vpt_report(path) -> VptReport:
    meta = read_metadata(path)
    rows = _data_rows(path)[1:]
    return VptReport(np.array([float(r[1]) for r in rows]),
                     np.array([r[2] == "1" for r in rows], dtype=bool),
                     float(meta["epsilon"]), float(meta["lambda1"]))


def save_matrix(M: np.ndarray, path, config_hash: str | None = None) -> None:
    buf = io.StringIO()
    np.savetxt(buf, np.atleast_2d(M), fmt=FLOAT_FMT, delimiter=",")
    meta = metadata_lines(config_hash, shape=f"{M.shape[0]}x{M.shape[1]}")
    Path(path).write_text("\n".join(meta) + "\n" + buf.getvalue())


def load_matrix(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", comments="#"))


HISTORY_COLUMNS = ("generation", "candidate_index", "loss", "rho_A", "rho_SR", "sigma",
                   "sigma_b", "leak_rate", "log10_beta")


def save_history(history: list[Evaluation], names: list[str], path,
                 config_hash: str | None = None) -> None:
    """Search history; ``beta`` is written as its log10."""
    idx = {n: i for i, n in enumerate(names)}
    lines = metadata_lines(config_hash) + [",".join(HISTORY_COLUMNS)]
    for ev in history:
        vals = [ev.point[idx[n]] for n in ("rho_A", "rho_SR", "sigma", "sigma_b", "leak_rate")]
        vals.append(np.log10(ev.point[idx["beta"]]))
        lines.append(",".join([str(ev.generation), str(ev.candidate_index), _fmt(ev.loss)]
                              + [_fmt(v) for v in vals]))
    _write(path, lines)


def _toml(v) -> str:
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_toml(x) for x in v) + "]"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def save_model(model: TrainedModel, directory, *, dt: float, lambda1: float | None = None,
               climate: ClimateStats | None = None, config_hash: str | None = None) -> None:
    """Model directory: ``model.toml`` (params, seed, normalization) + ``w_out.csv``.

    The reservoir itself is rebuilt from (params, seed) on load.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    info = {
        "seed": model.reservoir.seed,
        "input_dim": model.reservoir.D,
        "dt": dt,
        "normalization_mean": model.standardizer.mean,
        "normalization_scale": model.standardizer.scale,
        "r_final": model.r_final,
    }
    if lambda1 is not None:
        info["lambda1"] = lambda1
    if climate is not None:
        info["climate_mean"] = climate.mean
        info["climate_sigma"] = climate.sigma
    lines = metadata_lines(config_hash)
    lines += [f"{k} = {_toml(v)}" for k, v in info.items()]
    lines.append("[params]")
    lines += [f"{k} = {_toml(v)}" for k, v in model.reservoir.params.as_dict().items()]
    _write(d / "model.toml", lines)
    save_matrix(model.W_out, d / "w_out.csv", config_hash)


def load_model(directory) -> tuple[TrainedModel, dict]:
    """Rebuild a saved model; the second value holds dt, lambda1 and climate stats."""
    d = Path(directory)
    info = tomllib.loads((d / "model.toml").read_text())
    params = ReservoirParams(**info.pop("params"))
    res = build_reservoir(params, int(info["input_dim"]), int(info["seed"]))
    std = Standardizer(np.array(info["normalization_mean"]), np.array(info["normalization_scale"]))
    W_out = load_matrix(d / "w_out.csv")
    if W_out.shape != (res.D, res.N):
        raise InvalidArgumentError(f"w_out.csv has shape {W_out.shape}, expected {(res.D, res.N)}")
    model = TrainedModel(res, np.ascontiguousarray(W_out), std, np.array(info["r_final"]))
    extra = {"dt": float(info["dt"]), "lambda1": info.get("lambda1")}
    if "climate_sigma" in info:
        extra["climate"] = ClimateStats(np.array(info["climate_mean"]),
                                        np.array(info["climate_sigma"]))
    return model, extra


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")

