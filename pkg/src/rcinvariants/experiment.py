"""Experiment pipeline: data -> split -> truth invariants -> CMA-ES search ->
retrain -> test-set evaluation -> artifacts on disk.

All randomness derives from ``experiment.master_seed`` through named
sub-seeds, so adding candidates or variants never perturbs the data.
"""

from __future__ import annotations

import contextlib
import dataclasses
import logging
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _backend
from . import io as rio
from .config import ExperimentConfig, save_config
from .dynamics import TimeSeries, generate_trajectory, random_initial_condition
from .errors import StageError
from .evaluation import ClimateStats, VptReport, compare_invariants, vpt_distribution
from .invariants import (LeConfig, LyapunovSpectrum, kaplan_yorke_dimension,
                         largest_le_from_data, lyapunov_spectrum_ode)
from .reservoir import TrainedModel, train_model
from .training import InvariantTargets, SearchResult, search_hyperparameters, split_data

log = logging.getLogger(__name__)

RC_SPECTRUM_STEPS = 10_000
RC_SPECTRUM_TRANSIENT = 1_000
ATTRACTOR_BOUND = 20.0


def derive_seed(master: int, *path) -> int:
    """Stable 32-bit seed for a named stage, e.g. ``derive_seed(7, "cma", 3)``."""
    key = tuple(zlib.crc32(str(p).encode()) for p in path)
    ss = np.random.SeedSequence(entropy=master, spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def parse_variant(variant) -> tuple[str, int]:
    """``"none"``, ``"k_les:3"``, ``"fractal_dimension"``, ``"both:1"`` -> (provided, k)."""
    if isinstance(variant, tuple):
        return variant
    name, _, k = str(variant).partition(":")
    return name, int(k) if k else 1


def variant_label(provided: str, k: int) -> str:
    if provided == "none":
        return "k0"
    if provided == "k_les":
        return f"k{k}"
    if provided == "fractal_dimension":
        return "ky"
    return f"k{k}_ky"


@dataclass
class ExperimentData:
    train: TimeSeries
    val: TimeSeries
    test: TimeSeries
    climate: ClimateStats
    truth_spectrum: LyapunovSpectrum
    data_lambda1: float | None = None

    @property
    def lambda1(self) -> float:
        return self.truth_spectrum.largest


@dataclass
class ExperimentReport:
    best_params: dict
    best_loss: float
    vpt_report: VptReport
    rc_spectrum: LyapunovSpectrum
    truth_spectrum: LyapunovSpectrum
    invariant_diff: dict
    attractor: dict
    summary: dict
    timings: dict = field(default_factory=dict)
    model: TrainedModel | None = field(default=None, repr=False)
    search: SearchResult | None = field(default=None, repr=False)


@contextlib.contextmanager
def _stage(name: str, out_dir: Path | None, timings: dict):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "FAILED").write_text(f"stage: {name}\n{type(exc).__name__}: {exc}\n")
        raise StageError(name, exc) from exc
    finally:
        timings[name] = round(time.perf_counter() - t0, 3)


def prepare_data(config: ExperimentConfig) -> ExperimentData:
    """Generate the trajectory, split it, and compute the truth invariants."""
    spec = config.system
    master = config["experiment.master_seed"]
    integ = config.integration
    u0 = random_initial_condition(spec, derive_seed(master, "data"))
    series = generate_trajectory(spec, u0, integ)
    n = series.T
    train, val, test = split_data(series, config["data.train_steps"] / n,
                                  config["data.val_steps"] / n)

    clim_cfg = dataclasses.replace(integ, n_steps=config["data.climate_steps"])
    climate_run = generate_trajectory(
        spec, random_initial_condition(spec, derive_seed(master, "climate")), clim_cfg)
    climate = ClimateStats.from_series(climate_run)

    le_cfg = LeConfig(n_steps=config["invariants.le_steps"],
                      qr_interval=config["invariants.qr_interval"], dt=integ.dt,
                      seed=derive_seed(master, "truth_le"))
    truth = lyapunov_spectrum_ode(spec, train.data[0], le_cfg)
    data_l1 = largest_le_from_data(train) if config["invariants.source"] == "data" else None
    return ExperimentData(train, val, test, climate, truth, data_l1)


def build_targets(data: ExperimentData, provided: str, k: int) -> InvariantTargets:
    les = None
    ky = None
    if provided in ("k_les", "both"):
        les = data.truth_spectrum.exponents[:k].copy()
        if data.data_lambda1 is not None:
            les[0] = data.data_lambda1
    if provided in ("fractal_dimension", "both"):
        ky = kaplan_yorke_dimension(data.truth_spectrum)
    return InvariantTargets(les, ky)


def _executor(threads: int):
    if threads > 1:
        return ThreadPoolExecutor(max_workers=threads)
    return contextlib.nullcontext(None)


def run_experiment(config: ExperimentConfig, *, init: int = 0, variant=None,
                   out_dir=None, threads: int = 1, data: ExperimentData | None = None,
                   progress=None) -> ExperimentReport:
    """Run one (variant, RC initialization) through the whole pipeline.

    ``variant`` defaults to the config's ``invariants.provided``/``invariants.k``.
    Artifacts are written to ``out_dir`` when given.
    """
    provided, k = (parse_variant(variant) if variant is not None
                   else (config["invariants.provided"], config["invariants.k"]))
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "FAILED").unlink(missing_ok=True)
    master = config["experiment.master_seed"]
    rc_seed = derive_seed(master, "rc", init)
    cma_seed = derive_seed(master, "cma", init)
    chash = config.sha256()
    timings: dict[str, float] = {}

    with _stage("data", out, timings):
        if data is None:
            data = prepare_data(config)
    dt = data.train.dt
    lam1 = data.lambda1

    with _stage("targets", out, timings):
        targets = build_targets(data, provided, k)
        loss_cfg = config.loss(lam1)

    with _stage("search", out, timings):
        cma_cfg = dataclasses.replace(config.cma, seed=cma_seed)

        def report_generation(gen, res):
            if progress is not None:
                progress(f"[{variant_label(provided, k)} init {init}] generation {gen + 1}/"
                         f"{cma_cfg.max_generations} best loss {res.best_loss:.6g}")

        with _executor(threads) as pool:
            search = search_hyperparameters(
                data.train, data.val, targets, loss_cfg, config.search_space, cma_cfg,
                config.N, rc_seed, map_fn=pool.map if pool else map,
                callback=report_generation)

    with _stage("retrain", out, timings):
        model = train_model(search.best_params, data.train, rc_seed,
                            config["reservoir.washout"])

    with _stage("evaluate", out, timings), _executor(threads) as pool:
        vpt = vpt_distribution(model, data.test, config["evaluation.n_ics"],
                               config["evaluation.sync_len"], config["evaluation.horizon"],
                               float(config["evaluation.epsilon"]), lam1, data.climate,
                               map_fn=pool.map if pool else map)
        rc_spec = model.lyapunov_spectrum(model.r_final, LeConfig(
            n_steps=RC_SPECTRUM_STEPS, n_transient=RC_SPECTRUM_TRANSIENT,
            n_exponents=min(config.system.dimension, config.N), dt=dt,
            seed=derive_seed(master, "rc_le", init)))
        diff = compare_invariants(rc_spec, data.truth_spectrum)
        attractor_run = model.forecast(model.r_final, config["evaluation.attractor_steps"], dt)
        sigma_ratio = attractor_run.data.std(axis=0) / data.climate.sigma
        max_abs = float(np.max(np.abs(attractor_run.data)))

    invariant_diff = {
        "lambda1_rc": rc_spec.largest,
        "lambda1_truth": lam1,
        "lambda1_relative_error": diff.lambda1_relative_error,
        "ky_dimension_rc": diff.ky_dimension_rc,
        "ky_dimension_truth": diff.ky_dimension_truth,
        "ky_dimension_error": diff.ky_dimension_error,
        "exponent_errors": diff.exponent_errors.tolist(),
    }
    attractor = {
        "steps": config["evaluation.attractor_steps"],
        "max_abs": max_abs,
        "bounded": bool(max_abs < ATTRACTOR_BOUND),
        "sigma_ratio": sigma_ratio.tolist(),
        "max_sigma_relative_error": float(np.max(np.abs(sigma_ratio - 1.0))),
    }
    summary = {
        "metadata": {"rcinvariants_version": __version__, "config_sha256": chash,
                     "kernel_backend": _backend.NAME},
        "variant": {"provided": provided, "k": k, "label": variant_label(provided, k)},
        "init": init,
        "seeds": {"master": master, "reservoir": rc_seed, "cma": cma_seed},
        "targets": {
            "leading_les": None if targets.leading_les is None else targets.leading_les.tolist(),
            "fractal_dimension": targets.fractal_dimension,
        },
        "loss": {"t_i": loss_cfg.t_i, "t_f": loss_cfg.t_f, "M": loss_cfg.M,
                 "epsilon1": loss_cfg.epsilon1,
                 "epsilon2": "auto" if loss_cfg.epsilon2 is None else loss_cfg.epsilon2},
        "data": {"train_steps": data.train.T, "val_steps": data.val.T,
                 "test_steps": data.test.T, "dt": dt,
                 "input_normalization": "per-component zero mean, unit variance"},
        "best_params": search.best_params.as_dict(),
        "best_loss": search.best_loss,
        "n_evaluations": search.cma.n_evaluations,
        "vpt": {"mean": vpt.mean, "median": vpt.median, "n": int(vpt.vpt_values.size),
                "n_censored": vpt.n_censored, "epsilon": vpt.epsilon, "lambda1": lam1},
        "truth_spectrum": data.truth_spectrum.exponents.tolist(),
        "rc_spectrum": rc_spec.exponents.tolist(),
        "invariant_diff": invariant_diff,
        "attractor": attractor,
    }
    report = ExperimentReport(search.best_params.as_dict(), search.best_loss, vpt, rc_spec,
                              data.truth_spectrum, invariant_diff, attractor, summary,
                              timings, model, search)

    if out is not None:
        with _stage("persist", out, timings):
            save_config(config, out / "config.toml")
            rio.write_json(summary, out / "report.json")
            rio.save_vpt_report(vpt, out / "vpt.csv", chash)
            rio.save_spectrum(rc_spec, out / "rc_spectrum.csv", chash)
            rio.save_spectrum(data.truth_spectrum, out / "truth_spectrum.csv", chash)
            rio.save_history(search.cma.history, search.space.names, out / "history.csv", chash)
            rio.save_model(model, out / "model", dt=dt, lambda1=lam1, climate=data.climate,
                           config_hash=chash)
            if config["experiment.save_data"]:
                for name, s in (("train", data.train), ("val", data.val), ("test", data.test)):
                    rio.save_timeseries(s, out / f"{name}.csv", chash)
        rio.write_json(timings, out / "timings.json")
    return report


COMPARISON_COLUMNS = ("variant", "init", "mean_vpt", "median_vpt", "n_censored",
                      "lambda1_rc", "lambda1_truth", "lambda1_relative_error",
                      "ky_dimension_rc", "best_loss")


@dataclass
class ComparisonResult:
    rows: list[dict]
    reports: dict[tuple[str, int], ExperimentReport]

    def summary(self, label: str) -> dict:
        return next(r for r in self.rows if r["variant"] == label and r["init"] == "summary")

    def per_init(self, label: str) -> list[dict]:
        return [r for r in self.rows if r["variant"] == label and r["init"] != "summary"]


def run_comparison(base_config: ExperimentConfig, variants, n_rc_inits: int, *,
                   out_dir=None, threads: int = 1, progress=None) -> ComparisonResult:
    """Each variant x each RC initialization, paired seeds across variants.

    Summary rows report the mean of per-init means (equal to the pooled mean)
    and the median of the pooled VPT distribution.
    """
    if n_rc_inits < 1:
        raise ValueError("n_rc_inits must be >= 1")
    out = Path(out_dir) if out_dir is not None else None
    data = prepare_data(base_config)
    rows, reports = [], {}
    for v in variants:
        provided, k = parse_variant(v)
        label = variant_label(provided, k)
        pooled = []
        per = []
        for i in range(n_rc_inits):
            run_dir = out / label / f"init_{i}" if out is not None else None
            rep = run_experiment(base_config, init=i, variant=(provided, k), out_dir=run_dir,
                                 threads=threads, data=data, progress=progress)
            reports[(label, i)] = rep
            pooled.append(rep.vpt_report.vpt_values)
            row = {
                "variant": label, "init": i, "mean_vpt": rep.vpt_report.mean,
                "median_vpt": rep.vpt_report.median, "n_censored": rep.vpt_report.n_censored,
                "lambda1_rc": rep.invariant_diff["lambda1_rc"],
                "lambda1_truth": rep.invariant_diff["lambda1_truth"],
                "lambda1_relative_error": rep.invariant_diff["lambda1_relative_error"],
                "ky_dimension_rc": rep.invariant_diff["ky_dimension_rc"],
                "best_loss": rep.best_loss,
            }
            per.append(row)
            if progress is not None:
                progress(f"[{label} init {i}] mean VPT {row['mean_vpt']:.3f} "
                         f"rc lambda1 {row['lambda1_rc']:.3f}")
        allv = np.concatenate(pooled)
        rows.extend(per)
        rows.append({
            "variant": label, "init": "summary",
            "mean_vpt": float(np.mean([r["mean_vpt"] for r in per])),
            "median_vpt": float(np.median(allv)),
            "n_censored": int(sum(r["n_censored"] for r in per)),
            "lambda1_rc": float(np.mean([r["lambda1_rc"] for r in per])),
            "lambda1_truth": per[0]["lambda1_truth"],
            "lambda1_relative_error": float(np.mean([r["lambda1_relative_error"] for r in per])),
            "ky_dimension_rc": float(np.mean([r["ky_dimension_rc"] for r in per])),
            "best_loss": float(np.mean([r["best_loss"] for r in per])),
        })
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_comparison(rows, out / "comparison.csv", base_config.sha256())
        save_config(base_config, out / "config.toml")
    return ComparisonResult(rows, reports)


def save_comparison(rows: list[dict], path, config_hash: str | None = None) -> None:
    lines = rio.metadata_lines(config_hash) + [",".join(COMPARISON_COLUMNS)]
    for r in rows:
        cells = []
        for c in COMPARISON_COLUMNS:
            v = r[c]
            cells.append(rio._fmt(v) if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def load_comparison(path) -> list[dict]:
    import csv
    with open(path, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        rows = []
        for r in reader:
            row = {"variant": r["variant"],
                   "init": r["init"] if r["init"] == "summary" else int(r["init"])}
            for c in COLUMNS_NUMERIC:
                row[c] = float(r[c])
            row["n_censored"] = int(r["n_censored"])
            rows.append(row)
    return rows


COLUMNS_NUMERIC = ("mean_vpt", "median_vpt", "lambda1_rc", "lambda1_truth",
                   "lambda1_relative_error", "ky_dimension_rc", "best_loss")
