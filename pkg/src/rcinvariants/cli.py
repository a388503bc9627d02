"""Command-line entry point: ``rcinv <subcommand> [flags]``.

Subcommands: generate, invariants, train, compare, evaluate. Exit status is
0 on success, 2 for configuration errors and 1 for any other failure; the
stderr message is prefixed with the failing stage in brackets.
"""

from __future__ import annotations

import argparse
import dataclasses
import importlib.resources
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as rio
from .config import ExperimentConfig, load_config, loads
from .dynamics import generate_trajectory, random_initial_condition
from .errors import ConfigError, StageError
from .evaluation import ClimateStats, vpt_distribution
from .experiment import derive_seed, run_comparison, run_experiment
from .invariants import (LeConfig, kaplan_yorke_dimension, largest_le_from_data,
                         lyapunov_spectrum_ode)

DEFAULT_CONFIG = "lorenz96_limited.toml"


def default_config() -> ExperimentConfig:
    text = (importlib.resources.files("rcinvariants") / "configs" / DEFAULT_CONFIG).read_text()
    return loads(text)


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg = cfg.replace(experiment__master_seed=args.seed)
    return cfg


def _out(args, cfg: ExperimentConfig, name: str) -> Path:
    out = Path(args.out) if args.out else Path(cfg["experiment.output_dir"]) / name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg, file=sys.stderr, flush=True)


def cmd_generate(args) -> None:
    cfg = _config(args)
    spec = cfg.system
    integ = cfg.integration
    if args.steps is not None:
        integ = dataclasses.replace(integ, n_steps=args.steps)
    u0 = random_initial_condition(spec, derive_seed(cfg["experiment.master_seed"], "data"))
    series = generate_trajectory(spec, u0, integ)
    out = _out(args, cfg, "generate")
    rio.save_timeseries(series, out / "trajectory.csv", cfg.sha256())
    _say(args, f"wrote {series.T} steps x {series.D} components to {out / 'trajectory.csv'}")


def cmd_invariants(args) -> None:
    cfg = _config(args)
    out = _out(args, cfg, "invariants")
    chash = cfg.sha256()
    if args.input:
        series = rio.load_timeseries(args.input)
        lam1 = largest_le_from_data(series)
        summary = {"source": "data", "input": str(args.input), "lambda1": lam1}
        _say(args, f"largest LE from data: {lam1:.6g}")
    else:
        spec = cfg.system
        master = cfg["experiment.master_seed"]
        u0 = random_initial_condition(spec, derive_seed(master, "data"))
        le_cfg = LeConfig(n_steps=args.steps or cfg["invariants.le_steps"],
                          n_transient=cfg["integration.n_transient"],
                          qr_interval=cfg["invariants.qr_interval"],
                          dt=float(cfg["integration.dt"]), seed=derive_seed(master, "truth_le"))
        spectrum = lyapunov_spectrum_ode(spec, u0, le_cfg)
        ky = kaplan_yorke_dimension(spectrum)
        rio.save_spectrum(spectrum, out / "spectrum.csv", chash)
        summary = {"source": "model", "lambda1": spectrum.largest,
                   "exponents": spectrum.exponents.tolist(), "ky_dimension": ky,
                   "sum": float(spectrum.exponents.sum())}
        _say(args, "spectrum: " + " ".join(f"{x:.4f}" for x in spectrum.exponents))
        _say(args, f"Kaplan-Yorke dimension: {ky:.4f}")
    summary["metadata"] = {"rcinvariants_version": __version__, "config_sha256": chash}
    rio.write_json(summary, out / "invariants.json")


def cmd_train(args) -> None:
    cfg = _config(args)
    out = _out(args, cfg, "train")
    progress = None if args.quiet else (lambda m: _say(args, m))
    rep = run_experiment(cfg, init=args.init, variant=args.variant, out_dir=out,
                         threads=args.threads, progress=progress)
    _say(args, f"mean VPT {rep.vpt_report.mean:.3f} LT (median {rep.vpt_report.median:.3f}); "
               f"RC lambda1 {rep.rc_spectrum.largest:.4f}; artifacts in {out}")


def cmd_compare(args) -> None:
    cfg = _config(args)
    out = _out(args, cfg, "compare")
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    progress = None if args.quiet else (lambda m: _say(args, m))
    res = run_comparison(cfg, variants, args.inits, out_dir=out, threads=args.threads,
                         progress=progress)
    for row in res.rows:
        if row["init"] == "summary":
            _say(args, f"{row['variant']}: mean VPT {row['mean_vpt']:.3f}, "
                       f"median {row['median_vpt']:.3f}, RC lambda1 {row['lambda1_rc']:.4f}")


def cmd_evaluate(args) -> None:
    cfg = _config(args)
    out = _out(args, cfg, "evaluate")
    model, extra = rio.load_model(args.model)
    series = rio.load_timeseries(args.series)
    lam1 = args.lambda1 if args.lambda1 is not None else extra.get("lambda1")
    if lam1 is None:
        raise ConfigError("no lambda1 stored with the model; pass --lambda1")
    stats = extra.get("climate") or ClimateStats.from_series(series)
    n_ics = args.n_ics or cfg["evaluation.n_ics"]
    sync_len = cfg["evaluation.sync_len"]
    horizon = cfg["evaluation.horizon"]
    n_ics = min(n_ics, series.T // (sync_len + 1 + horizon))
    report = vpt_distribution(model, series, n_ics, sync_len, horizon,
                              float(cfg["evaluation.epsilon"]), float(lam1), stats)
    rio.save_vpt_report(report, out / "vpt.csv", cfg.sha256())
    _say(args, f"{n_ics} ICs: mean VPT {report.mean:.3f} LT, median {report.median:.3f}, "
               f"{report.n_censored} censored")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (TOML); default: packaged "
                        + DEFAULT_CONFIG)
    common.add_argument("--seed", type=int, help="override experiment.master_seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    p = argparse.ArgumentParser(prog="rcinv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="integrate the system to CSV")
    g.add_argument("--steps", type=int, help="number of steps (default: train+val+test)")
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("invariants", parents=[common],
                       help="Lyapunov spectrum and dimension of the system or a CSV series")
    i.add_argument("--input", help="trajectory CSV; estimates the largest LE from data")
    i.add_argument("--steps", type=int, help="tangent-integration steps")
    i.set_defaults(func=cmd_invariants)

    t = sub.add_parser("train", parents=[common], help="run one experiment")
    t.add_argument("--variant", help="override invariants, e.g. none, k_les:1, both:2")
    t.add_argument("--init", type=int, default=0, help="RC initialization index")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("compare", parents=[common], help="variants x RC initializations")
    c.add_argument("--variants", default="none,k_les:1", help="comma-separated variants")
    c.add_argument("--inits", type=int, default=10, help="RC initializations per variant")
    c.set_defaults(func=cmd_compare)

    e = sub.add_parser("evaluate", parents=[common], help="VPT of a saved model")
    e.add_argument("--model", required=True, help="model directory written by train")
    e.add_argument("--series", required=True, help="trajectory CSV")
    e.add_argument("--n-ics", type=int, help="number of forecast windows")
    e.add_argument("--lambda1", type=float, help="largest LE used to scale VPT")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("[cli] --threads must be >= 1", file=sys.stderr)
        return 2
    np.seterr(over="ignore", invalid="ignore")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"[config] {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"[{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
