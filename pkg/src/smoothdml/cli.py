"""Command-line driver: ``smoothdml {estimate,simulate,tune,bias-bound,replay}``.

Settings come from built-in defaults, then an optional YAML file
(``--config``), then command-line flags; later sources win. Unknown keys in
the file are errors. Every report carries the fully resolved configuration,
so ``smoothdml replay REPORT`` reruns it.
"""
from __future__ import annotations

import argparse
import copy
import json
import os
import re
import sys
from dataclasses import replace

import yaml

from . import io
from .bias import bias_bound_closed, bias_bound_no_margin, bias_bound_quadrature, even_order
from .data import Family, SmoothingConfig, make_fold_plan, validate_dataset
from .errors import ConfigError, SmoothDMLError
from .estimator import EstimatorConfig, Penalties, cate_plugins, estimate
from .features import DictionarySpec, get_preset
from .lasso import SolverOptions
from .simulation import TRUE_THETA, DgpConfig, emit_sampling_distribution, run_replications, summaries
from .tuning import CateMoments, choose_smoothing, estimate_cate_moments

COMMANDS = ("estimate", "simulate", "tune", "bias-bound")

DEFAULTS = {
    "command": None,
    "data": None,
    "spec": "sim1",
    "smoothing": {
        "family": "sigmoid",
        "s": None,
        "alpha4": 1.0,
        "c4": None,
        "c6": None,
        "c8": None,
        "margin_assumed": True,
    },
    "estimator": {
        "n_folds": 5,
        "seed": 0,
        "design_seed": 0,
        "level": 0.95,
        "penalty_multiplier": 1.0,
        "riesz_penalty_multiplier": 1.0,
        "naive": True,
    },
    "solver": {"coef_tol": 1e-9, "kkt_tol": 1e-7, "max_iter": 100_000},
    "simulation": {
        "n": 2000,
        "p0": 6,
        "extra_covariates": 0,
        "noise_sd": 0.1,
        "propensity": 0.5,
        "reps": 200,
        "seed": 0,
        "workers": 1,
    },
    "tune": {"known_truth": False, "n": None},
    "output": {"report": None, "dir": "reports", "plot_data": None},
}


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads exponent floats such as 1e-9 as numbers."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*\.?[0-9_]*(?:[eE][-+]?[0-9]+)?|\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |\.(?:inf|Inf|INF)|\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))

_SPEC_KEYS = {"include_intercept", "power_terms", "interactions", "noise_columns", "standardize"}


def merge(base: dict, update: dict, where: str = "") -> dict:
    """Deep-merge ``update`` into a copy of ``base``; unknown keys raise ConfigError."""
    out = copy.deepcopy(base)
    for key, value in update.items():
        path = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key {path!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path!r} must be a mapping")
            out[key] = merge(base[key], value, path + ".")
        else:
            out[key] = value
    return out


def load_config_file(path) -> dict:
    """YAML config, or a JSON report whose provenance block holds a config."""
    try:
        with open(os.fspath(path)) as fh:
            doc = yaml.load(fh, Loader=_Loader)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping")
    if "provenance" in doc and "schema_version" in doc:
        return doc["provenance"]["config"]
    return doc


def resolve_spec(spec) -> DictionarySpec:
    if isinstance(spec, str):
        return get_preset(spec)
    if isinstance(spec, dict):
        unknown = set(spec) - _SPEC_KEYS
        if unknown:
            raise ConfigError(f"unknown dictionary keys {sorted(unknown)}")
        return DictionarySpec(**{k: (tuple(map(tuple, v)) if k in ("power_terms", "interactions")
                                     else v) for k, v in spec.items()})
    raise ConfigError("spec must be a preset name or a mapping")


def smoothing_config(cfg: dict) -> SmoothingConfig:
    sm = cfg["smoothing"]
    try:
        return SmoothingConfig(family=Family(sm["family"]), s=sm["s"], alpha4=float(sm["alpha4"]),
                               c4=sm["c4"], c6=sm["c6"], c8=sm["c8"],
                               margin_assumed=bool(sm["margin_assumed"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def estimator_config(cfg: dict, known_moments=None) -> EstimatorConfig:
    e, s = cfg["estimator"], cfg["solver"]
    return EstimatorConfig(
        smoothing=smoothing_config(cfg),
        n_folds=int(e["n_folds"]),
        seed=int(e["seed"]),
        design_seed=int(e["design_seed"]),
        penalties=Penalties(float(e["penalty_multiplier"]), float(e["riesz_penalty_multiplier"])),
        solver=SolverOptions(float(s["coef_tol"]), float(s["kkt_tol"]), int(s["max_iter"])),
        level=float(e["level"]),
        known_moments=known_moments,
        compute_naive=bool(e["naive"]),
    )


def _hashed_config(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k != "output"}


def _report_path(cfg: dict, stem: str):
    out = cfg["output"]
    if out["report"]:
        return out["report"]
    return io.timestamped_path(out["dir"], stem)


def _emit(cfg, kind, record, seed, always=True):
    print(json.dumps(io.to_plain(record), indent=2, sort_keys=True))
    if always or cfg["output"]["report"]:
        path = io.write_report(kind, record, _report_path(cfg, kind), _hashed_config(cfg), seed)
        print(f"report written to {path}", file=sys.stderr)
        return path
    return None


def _run_estimate(cfg):
    if not cfg["data"]:
        raise ConfigError("estimate needs a data file (--data)")
    ds = io.read_csv(cfg["data"])
    report = estimate(ds, resolve_spec(cfg["spec"]), estimator_config(cfg))
    _emit(cfg, "estimate", io.estimate_record(report), cfg["estimator"]["seed"])


def _run_simulate(cfg):
    sim = cfg["simulation"]
    dgp = DgpConfig(n=int(sim["n"]), p0=int(sim["p0"]),
                    extra_covariates=int(sim["extra_covariates"]),
                    noise_sd=float(sim["noise_sd"]), propensity=float(sim["propensity"]),
                    seed=int(sim["seed"]))
    est_cfg = estimator_config(cfg, CateMoments.known_truth())
    if est_cfg.smoothing.c4 is None:
        est_cfg = replace(est_cfg, smoothing=replace(est_cfg.smoothing, c4=0.25))
    spec_name = cfg["spec"] if isinstance(cfg["spec"], str) else "custom"
    results = run_replications(dgp, resolve_spec(cfg["spec"]), int(sim["reps"]), int(sim["seed"]),
                               est_cfg, spec_name, int(sim["workers"]))
    record = {kind.value: io.to_plain(summary) for kind, summary in summaries(results).items()}
    record["true_theta"] = TRUE_THETA
    path = _emit(cfg, "simulate", record, sim["seed"])
    plot = cfg["output"]["plot_data"] or os.path.splitext(path)[0] + "-sampling.csv"
    emit_sampling_distribution(results, plot)
    print(f"sampling distribution written to {plot}", file=sys.stderr)


def _run_tune(cfg):
    sm = smoothing_config(cfg)
    if cfg["tune"]["known_truth"]:
        if not cfg["tune"]["n"]:
            raise ConfigError("tune with known_truth needs a sample size (--n)")
        moments, n = CateMoments.known_truth(), int(cfg["tune"]["n"])
    elif cfg["data"]:
        ds = io.read_csv(cfg["data"])
        e = estimator_config(cfg)
        validate_dataset(ds, e.n_folds)
        plan = make_fold_plan(ds.n, e.n_folds, e.seed)
        tau = cate_plugins(ds, plan, resolve_spec(cfg["spec"]), e.penalties, e.solver,
                           e.design_seed)
        moments, n = estimate_cate_moments(tau), ds.n
    else:
        raise ConfigError("tune needs --data or --known-truth with --n")
    choice = choose_smoothing(moments, n, sm.alpha4, sm.c4, sm.margin_assumed)
    _emit(cfg, "tune", {"moments": moments, "choice": choice}, cfg["estimator"]["seed"],
          always=False)


def _run_bias_bound(cfg):
    sm = smoothing_config(cfg)
    if sm.s is None:
        raise ConfigError("bias-bound needs a smoothing parameter (--s)")
    record = {}
    if not sm.margin_assumed:
        record["no_margin"] = bias_bound_no_margin(sm.s)
    else:
        if sm.c4 is None:
            raise ConfigError("bias-bound under the margin condition needs --c4")
        if even_order(sm.alpha4) is not None:
            record["closed_form"] = bias_bound_closed(sm.c4, sm.alpha4, sm.s, sm.c6, sm.c8)
        record["quadrature"] = bias_bound_quadrature(sm.c4, sm.alpha4, sm.s, sm.c6, sm.c8)
    for name, bound in record.items():
        print(f"{name}: {bound.upper:.8g}")
    _emit(cfg, "bias-bound", record, None, always=False)


_RUNNERS = {"estimate": _run_estimate, "simulate": _run_simulate, "tune": _run_tune,
            "bias-bound": _run_bias_bound}


def run(config: dict) -> int:
    """Run a resolved configuration; returns the process exit status."""
    try:
        cfg = merge(DEFAULTS, config)
        if cfg["command"] not in _RUNNERS:
            raise ConfigError(f"command must be one of {COMMANDS}, got {cfg['command']!r}")
        _RUNNERS[cfg["command"]](cfg)
    except SmoothDMLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


# flag name -> (config path, type)
_FLAGS = {
    "data": (("data",), str),
    "spec": (("spec",), str),
    "family": (("smoothing", "family"), str),
    "s": (("smoothing", "s"), float),
    "alpha4": (("smoothing", "alpha4"), float),
    "c4": (("smoothing", "c4"), float),
    "c6": (("smoothing", "c6"), float),
    "c8": (("smoothing", "c8"), float),
    "margin": (("smoothing", "margin_assumed"), _bool),
    "folds": (("estimator", "n_folds"), int),
    "level": (("estimator", "level"), float),
    "penalty_mult": (("estimator", "penalty_multiplier"), float),
    "riesz_mult": (("estimator", "riesz_penalty_multiplier"), float),
    "design_seed": (("estimator", "design_seed"), int),
    "naive": (("estimator", "naive"), _bool),
    "reps": (("simulation", "reps"), int),
    "p0": (("simulation", "p0"), int),
    "noise_sd": (("simulation", "noise_sd"), float),
    "propensity": (("simulation", "propensity"), float),
    "extra_covariates": (("simulation", "extra_covariates"), int),
    "workers": (("simulation", "workers"), int),
    "out": (("output", "report"), str),
    "out_dir": (("output", "dir"), str),
    "plot_data": (("output", "plot_data"), str),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file (or a report to rerun)")
    for name, (_, typ) in _FLAGS.items():
        common.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    common.add_argument("--seed", type=int, default=None,
                        help="fold seed for estimate/tune, master seed for simulate")
    common.add_argument("--n", type=int, default=None,
                        help="sample size for simulate, or for tune --known-truth")
    common.add_argument("--known-truth", action="store_true", default=None,
                        help="tune with the Logistic(0, 1) CATE moments")
    parser = argparse.ArgumentParser(prog="smoothdml",
                                     description="Smoothed debiased estimation of maximal welfare gain")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        sub.add_parser(cmd, parents=[common])
    rp = sub.add_parser("replay", help="rerun the configuration stored in a report")
    rp.add_argument("report")
    rp.add_argument("--out", default=None)
    return parser


def config_from_args(args) -> dict:
    if args.command == "replay":
        cfg = load_config_file(args.report)
        if not isinstance(cfg, dict) or "command" not in cfg:
            raise ConfigError(f"{args.report} holds no replayable configuration")
        cfg = merge(DEFAULTS, cfg)
        if args.out:
            cfg["output"]["report"] = args.out
        return cfg
    cfg = merge(DEFAULTS, load_config_file(args.config)) if args.config else copy.deepcopy(DEFAULTS)
    cfg["command"] = args.command
    for name, (path, _) in _FLAGS.items():
        value = getattr(args, name)
        if value is not None:
            node = cfg
            for key in path[:-1]:
                node = node[key]
            node[path[-1]] = value
    if args.seed is not None:
        cfg["simulation" if args.command == "simulate" else "estimator"]["seed"] = args.seed
    if args.n is not None:
        cfg["simulation" if args.command == "simulate" else "tune"]["n"] = args.n
    if args.known_truth:
        cfg["tune"]["known_truth"] = True
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except SmoothDMLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
