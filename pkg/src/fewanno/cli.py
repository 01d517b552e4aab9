"""Experiment runner.

Parses an INI-style config, dispatches one of the named experiments per
seed, and writes one CSV of per-step metrics per seed plus a summary.json.
Identical config + seed gives byte-identical CSV output. Also hosts the
annotation carbon-footprint estimator.

Exit codes: 0 success, 2 unreadable/invalid config, 3 training divergence.
"""
from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import meta, rng as rngmod, teachstudent as ts
from .errors import ConfigError, InvalidInput, TrainingDiverged
from .losses import ContrastConfig
from .matching import CostWeights

OUT_DIR_ENV = "FEWANNO_OUT_DIR"
EXPERIMENTS = ("protonet", "maml-linreg", "prop44", "proseco", "mtdetr", "carbon")


# ---------------------------------------------------------------------------
# carbon estimator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CarbonInputs:
    worker_hours: float
    watts_per_worker: float
    shares: tuple          # regional fractions, sum to 1
    intensities: tuple     # gCO2eq per kWh per region

    def __post_init__(self):
        vals = (self.worker_hours, self.watts_per_worker) + tuple(self.shares) + tuple(self.intensities)
        if any((not math.isfinite(v)) or v < 0 for v in vals):
            raise InvalidInput("carbon inputs must be finite and non-negative")
        if len(self.shares) != len(self.intensities):
            raise InvalidInput("shares and intensities must pair up")
        if abs(sum(self.shares) - 1.0) > 1e-9:
            raise InvalidInput(f"regional shares must sum to 1, got {sum(self.shares)}")


def carbon_estimate(c: CarbonInputs) -> float:
    """kgCO2eq of worker_hours of annotation at watts_per_worker, weighted by
    the regional electricity carbon intensities."""
    kwh = c.worker_hours * c.watts_per_worker / 1000.0
    grams_per_kwh = sum(s * i for s, i in zip(c.shares, c.intensities))
    return kwh * grams_per_kwh / 1000.0


# ---------------------------------------------------------------------------
# config schema
# ---------------------------------------------------------------------------

def _parse_bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("true", "yes", "1", "on"):
        return True
    if s in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _parse_int_list(s: str):
    return [int(x) for x in s.replace(",", " ").split()]


def _parse_float_list(s: str):
    return [float(x) for x in s.replace(",", " ").split()]


_RUN_SCHEMA = {"experiment": str, "seeds": _parse_int_list, "out_dir": str}

_SCENE_KEYS = {
    "n_classes": int, "d_f": int, "n_tokens": int,
    "n_objects_min": int, "n_objects_max": int,
    "class_spread": float, "noise_std": float, "bg_std": float,
}

_AUG_KEYS = {"weak_noise": float, "strong_noise": float, "mask_prob": float}

_SCHEMAS = {
    "protonet": {
        "d": int, "n_way": int, "k_shot": int, "q_queries": int,
        "class_spread": float, "noise_std": float,
        "episodes": int, "variant": str, "lr": float, "embed_dim": int,
        "batch_episodes": int, "entropy_lambda": float,
    },
    "maml-linreg": {"iterations": int, "alpha": float, "beta": float, "d": int, "mode": str},
    "prop44": {"epsilon": float, "dim": int, "sweep": _parse_float_list},
    "proseco": {
        **_SCENE_KEYS, **_AUG_KEYS,
        "steps": int, "n_scenes": int, "batch_scenes": int,
        "lr": float, "embed_dim": int, "n_regions": int,
        "jitter_std": float, "bg_ratio": float,
        "lambda_contrast": float, "ema_alpha": float,
        "tau": float, "tau_t": float, "lambda_sce": float, "delta": float,
        "lambda_sim": float, "lambda_coord": float, "lambda_giou": float,
    },
    "mtdetr": {
        **_SCENE_KEYS, **_AUG_KEYS,
        "steps": int, "n_scenes": int, "labeled_fraction": float,
        "batch_scenes": int, "burnin_steps": int,
        "lr": float, "embed_dim": int,
        "lambda_class": float, "lambda_l1": float, "lambda_giou": float, "lambda_u": float,
        "alpha_start": float, "alpha_end": float, "total_epochs": int,
        "use_nms": _parse_bool, "nms_iou": float,
        "confidence_threshold": float, "hard_labels": _parse_bool,
        "eval_scenes": int, "eval_every": int,
    },
    "carbon": {
        "worker_hours": float, "watts_per_worker": float,
        "shares": _parse_float_list, "intensities": _parse_float_list,
    },
}

_DEFAULTS = {
    "protonet": {
        "d": 16, "n_way": 5, "k_shot": 1, "q_queries": 15,
        "class_spread": 4.0, "noise_std": 0.5,
        "episodes": 400, "variant": "normalized", "lr": 0.05, "embed_dim": 8,
        "batch_episodes": 4, "entropy_lambda": 1.0,
    },
    "maml-linreg": {"iterations": 200, "alpha": 0.01, "beta": 0.5, "d": 8, "mode": "colinear"},
    "prop44": {"epsilon": 0.02, "dim": 3, "sweep": [1e-1, 1e-2, 1e-3, 1e-4]},
    "proseco": {
        "n_classes": 3, "d_f": 16, "n_tokens": 16, "n_objects_min": 1, "n_objects_max": 3,
        "class_spread": 6.0, "noise_std": 0.5, "bg_std": 0.5,
        "weak_noise": 0.05, "strong_noise": 0.2, "mask_prob": 0.15,
        "steps": 200, "n_scenes": 32, "batch_scenes": 4,
        "lr": 0.01, "embed_dim": 8, "n_regions": 8,
        "jitter_std": 0.02, "bg_ratio": 0.25,
        "lambda_contrast": 2.0, "ema_alpha": 0.999,
        "tau": 0.1, "tau_t": 0.07, "lambda_sce": 0.5, "delta": 0.5,
        "lambda_sim": 2.0, "lambda_coord": 5.0, "lambda_giou": 2.0,
    },
    "mtdetr": {
        "n_classes": 3, "d_f": 16, "n_tokens": 16, "n_objects_min": 1, "n_objects_max": 3,
        "class_spread": 6.0, "noise_std": 0.5, "bg_std": 0.5,
        "weak_noise": 0.05, "strong_noise": 0.2, "mask_prob": 0.15,
        "steps": 200, "n_scenes": 40, "labeled_fraction": 0.05,
        "batch_scenes": 4, "burnin_steps": 300,
        "lr": 0.01, "embed_dim": 8,
        "lambda_class": 2.0, "lambda_l1": 5.0, "lambda_giou": 2.0, "lambda_u": 4.0,
        "alpha_start": 0.9996, "alpha_end": 1.0, "total_epochs": 10,
        "use_nms": False, "nms_iou": 0.5,
        "confidence_threshold": None, "hard_labels": False,
        "eval_scenes": 16, "eval_every": 25,
    },
    "carbon": {
        "worker_hours": 2000.0, "watts_per_worker": 300.0,
        "shares": [0.47, 0.34, 0.19], "intensities": [379.0, 633.0, 442.0],
    },
}


@dataclass
class ExperimentConfig:
    experiment: str
    seeds: list
    out_dir: str
    params: dict


def parse_config(path: str, experiment: str | None = None) -> ExperimentConfig:
    """Read and validate an experiment config; unknown sections or keys are
    hard errors."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")

    known_sections = {"run", *EXPERIMENTS}
    for section in parser.sections():
        if section not in known_sections:
            raise ConfigError(f"unknown config section [{section}]")

    run = dict(parser["run"]) if parser.has_section("run") else {}
    for key in run:
        if key not in _RUN_SCHEMA:
            raise ConfigError(f"unknown key {key!r} in [run]")
    name = run.get("experiment", experiment)
    if experiment is not None:
        if "experiment" in run and run["experiment"] != experiment:
            raise ConfigError(
                f"config names experiment {run['experiment']!r} but {experiment!r} was requested"
            )
        name = experiment
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; known: {EXPERIMENTS}")

    seeds = _parse_int_list(run["seeds"]) if "seeds" in run else [1]
    if not seeds:
        raise ConfigError("seeds list is empty")
    out_dir = run.get("out_dir", "out")

    schema = _SCHEMAS[name]
    params = dict(_DEFAULTS[name])
    for section in parser.sections():
        if section in ("run",) or section not in EXPERIMENTS:
            continue
        if section != name:
            raise ConfigError(f"config section [{section}] does not match experiment {name!r}")
        for key, raw in parser[section].items():
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                params[key] = schema[key](raw)
            except ConfigError:
                raise
            except Exception as exc:  # int()/float() failures
                raise ConfigError(f"bad value for {key!r} in [{section}]: {exc}") from exc
    return ExperimentConfig(experiment=name, seeds=seeds, out_dir=out_dir, params=params)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isfinite(f):
            return f
        return "inf" if f > 0 else ("-inf" if f < 0 else "nan")
    return v


def write_summary(out_dir: str, experiment: str, seeds, per_seed: dict) -> dict:
    metrics = sorted({k for d in per_seed.values() for k in d})
    aggregate = {}
    for m in metrics:
        vals = [per_seed[s][m] for s in per_seed if m in per_seed[s] and per_seed[s][m] is not None]
        vals = [float(v) for v in vals]
        if vals:
            aggregate[m] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
    summary = {
        "experiment": experiment,
        "seeds": list(seeds),
        "prng": rngmod.ALGORITHM,
        "per_seed": {str(s): per_seed[s] for s in per_seed},
        "aggregate": aggregate,
    }
    with open(os.path.join(out_dir, "summary.json"), "w", newline="") as f:
        json.dump(_jsonable(summary), f, indent=2, sort_keys=True)
        f.write("\n")
    return summary


# ---------------------------------------------------------------------------
# experiment bodies (one CSV per seed, final metrics returned)
# ---------------------------------------------------------------------------

def _scene_config(p: dict, seed: int) -> ts.SceneConfig:
    base = ts.SceneConfig(
        n_classes=p["n_classes"], d_f=p["d_f"], n_tokens=p["n_tokens"],
        n_objects=(p["n_objects_min"], p["n_objects_max"]),
        class_spread=p["class_spread"], noise_std=p["noise_std"], bg_std=p["bg_std"],
    )
    means = ts.make_class_means(base, rngmod.substream(seed, "class-means"))
    return ts.SceneConfig(
        n_classes=base.n_classes, d_f=base.d_f, n_tokens=base.n_tokens,
        n_objects=base.n_objects, class_spread=base.class_spread,
        noise_std=base.noise_std, bg_std=base.bg_std, class_means=means,
    )


def _run_protonet(p: dict, seed: int, csv_path: str) -> dict:
    cfg = meta.TaskGenConfig(
        d=p["d"], n_way=p["n_way"], k_shot=p["k_shot"], q_queries=p["q_queries"],
        class_spread=p["class_spread"], noise_std=p["noise_std"], seed=seed,
    )
    log = meta.train_protonet(
        cfg, p["episodes"], p["variant"], p["lr"], rngmod.substream(seed, "protonet"),
        embed_dim=p["embed_dim"], batch_episodes=p["batch_episodes"],
        entropy_lambda=p["entropy_lambda"],
    )
    write_csv(csv_path, ["step", "loss", "kappa_wn", "frob_wn", "accuracy"], log.rows())
    return {
        "final_loss": log.loss[-1],
        "final_kappa_wn": log.kappa_wn[-1],
        "initial_frob_wn": log.frob_wn[0],
        "final_frob_wn": log.frob_wn[-1],
        "final_accuracy": log.accuracy[-1],
        "final_kappa_full": log.final_kappa_full,
    }


def _run_maml(p: dict, seed: int, csv_path: str) -> dict:
    traj = meta.maml_linreg_sim(
        p["iterations"], p["alpha"], p["beta"], p["d"], p["mode"],
        rngmod.substream(seed, "maml-linreg"),
    )
    rows = [(i + 1, k) for i, k in enumerate(traj.kappas)]
    write_csv(csv_path, ["step", "kappa"], rows)
    diffs = np.diff(traj.kappas)
    non_decreasing = bool(np.all(np.isnan(diffs) | (diffs >= -1e-9)))
    return {"final_kappa": float(traj.kappas[-1]), "kappa_non_decreasing": non_decreasing}


def _run_prop44(p: dict, seed: int, csv_path: str) -> dict:
    res = meta.prop44_example(p["epsilon"], p["dim"])
    rows = []
    for eps in p["sweep"]:
        r = meta.prop44_example(eps, p["dim"])
        rows.append((eps, r.kappa_star, r.kappa_hat))
    write_csv(csv_path, ["epsilon", "kappa_star", "kappa_hat"], rows)
    return {
        "kappa_star": res.kappa_star,
        "kappa_hat": res.kappa_hat,
        "kappa_star_svd": res.kappa_star_svd,
        "kappa_hat_svd": res.kappa_hat_svd,
        "max_residual": res.max_residual,
    }


def _run_proseco(p: dict, seed: int, csv_path: str) -> dict:
    scene_cfg = _scene_config(p, seed)
    cfg = ts.ProsecoConfig(
        scene=scene_cfg,
        weights=CostWeights(lambda_sim=p["lambda_sim"], lambda_coord=p["lambda_coord"],
                            lambda_giou=p["lambda_giou"]),
        contrast=ContrastConfig(tau=p["tau"], tau_t=p["tau_t"],
                                lambda_sce=p["lambda_sce"], delta=p["delta"]),
        aug=ts.AugmentConfig(p["weak_noise"], p["strong_noise"], p["mask_prob"]),
        lambda_contrast=p["lambda_contrast"], ema_alpha=p["ema_alpha"], lr=p["lr"],
        embed_dim=p["embed_dim"], n_regions=p["n_regions"],
        jitter_std=p["jitter_std"], bg_ratio=p["bg_ratio"], batch_scenes=p["batch_scenes"],
    )
    scenes = [ts.gen_scene(scene_cfg, rngmod.substream(seed, "scenes", i)) for i in range(p["n_scenes"])]
    state = ts.init_proseco(cfg, seed)
    rows = []
    first = last = None
    for step in range(p["steps"]):
        batch = [scenes[(step * cfg.batch_scenes + j) % len(scenes)] for j in range(cfg.batch_scenes)]
        m = ts.proseco_step(state, batch, cfg)
        rows.append((step, m["loss"], m["contrast_loss"], m["box_loss"]))
        last = m
        if first is None:
            first = m
    write_csv(csv_path, ["step", "loss", "contrast_loss", "box_loss"], rows)
    return {
        "initial_loss": first["loss"], "final_loss": last["loss"],
        "initial_box_loss": first["box_loss"], "final_box_loss": last["box_loss"],
    }


def _run_mtdetr(p: dict, seed: int, csv_path: str) -> dict:
    scene_cfg = _scene_config(p, seed)
    cfg = ts.MtDetrConfig(
        scene=scene_cfg,
        weights=CostWeights(lambda_class=p["lambda_class"], lambda_l1=p["lambda_l1"],
                            lambda_giou=p["lambda_giou"]),
        aug=ts.AugmentConfig(p["weak_noise"], p["strong_noise"], p["mask_prob"]),
        lr=p["lr"], embed_dim=p["embed_dim"],
    )
    flags = ts.PseudoLabelFlags(
        use_nms=p["use_nms"], nms_iou=p["nms_iou"],
        confidence_threshold=p["confidence_threshold"], hard_labels=p["hard_labels"],
    )
    sched = ts.EmaSchedule(p["alpha_start"], p["alpha_end"], p["total_epochs"])
    scenes = [ts.gen_scene(scene_cfg, rngmod.substream(seed, "scenes", i)) for i in range(p["n_scenes"])]
    eval_scenes = [ts.gen_scene(scene_cfg, rngmod.substream(seed, "eval-scenes", i))
                   for i in range(p["eval_scenes"])]
    n_labeled = max(1, int(round(p["labeled_fraction"] * p["n_scenes"])))
    labeled = scenes[:n_labeled]
    state = ts.init_mtdetr(cfg, labeled, seed, burnin_steps=p["burnin_steps"])
    rows = []
    current_map = ts.evaluate_map(state.student, eval_scenes)
    last = {"loss": float("nan"), "sup_loss": float("nan"), "unsup_loss": float("nan")}
    for step in range(p["steps"]):
        epoch = step * p["total_epochs"] / max(1, p["steps"])
        batch = [scenes[(step * p["batch_scenes"] + j) % len(scenes)] for j in range(p["batch_scenes"])]
        m = ts.mtdetr_step(state, labeled, batch, flags, p["lambda_u"], epoch, sched)
        if (step + 1) % p["eval_every"] == 0 or step == p["steps"] - 1:
            current_map = ts.evaluate_map(state.student, eval_scenes)
        rows.append((step, m["loss"], m["sup_loss"], m["unsup_loss"], current_map))
        last = m
    write_csv(csv_path, ["step", "loss", "sup_loss", "unsup_loss", "map"], rows)
    return {"final_loss": last["loss"], "final_map": current_map}


def _run_carbon(p: dict, seed: int, csv_path: str) -> dict:
    inputs = CarbonInputs(p["worker_hours"], p["watts_per_worker"],
                          tuple(p["shares"]), tuple(p["intensities"]))
    kg = carbon_estimate(inputs)
    write_csv(csv_path, ["worker_hours", "watts_per_worker", "kg_co2eq"],
              [(inputs.worker_hours, inputs.watts_per_worker, kg)])
    return {"kg_co2eq": kg}


_RUNNERS = {
    "protonet": _run_protonet,
    "maml-linreg": _run_maml,
    "prop44": _run_prop44,
    "proseco": _run_proseco,
    "mtdetr": _run_mtdetr,
    "carbon": _run_carbon,
}


def run_experiment(cfg: ExperimentConfig) -> dict:
    os.makedirs(cfg.out_dir, exist_ok=True)
    per_seed = {}
    stem = cfg.experiment.replace("-", "_")
    for seed in cfg.seeds:
        csv_path = os.path.join(cfg.out_dir, f"{stem}_seed{seed}.csv")
        per_seed[seed] = _RUNNERS[cfg.experiment](cfg.params, seed, csv_path)
    return write_summary(cfg.out_dir, cfg.experiment, cfg.seeds, per_seed)


def run(config_path: str, experiment: str | None = None, seeds=None, out_dir: str | None = None) -> int:
    """Execute an experiment config; returns a process exit code."""
    try:
        cfg = parse_config(config_path, experiment)
        if seeds:
            cfg.seeds = list(seeds)
        env_out = os.environ.get(OUT_DIR_ENV)
        if env_out:
            cfg.out_dir = env_out
        if out_dir:
            cfg.out_dir = out_dir
        run_experiment(cfg)
    except (ConfigError, InvalidInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fewanno", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run a named experiment from a config file")
    runp.add_argument("experiment", help=f"one of {', '.join(EXPERIMENTS)}")
    runp.add_argument("--config", required=True, help="path to the INI config")
    runp.add_argument("--seed", action="append", type=int, default=None,
                      help="override config seeds (repeatable)")
    runp.add_argument("--out", default=None, help="output directory override")

    carb = sub.add_parser("carbon", help="annotation carbon-footprint estimate")
    carb.add_argument("--hours", required=True, type=float)
    carb.add_argument("--watts", required=True, type=float)
    carb.add_argument("--shares", required=True, help="comma-separated regional fractions")
    carb.add_argument("--intensities", required=True, help="comma-separated gCO2eq/kWh")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return run(args.config, experiment=args.experiment, seeds=args.seed, out_dir=args.out)
    if args.command == "carbon":
        try:
            inputs = CarbonInputs(
                args.hours, args.watts,
                tuple(_parse_float_list(args.shares)),
                tuple(_parse_float_list(args.intensities)),
            )
        except InvalidInput as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"{carbon_estimate(inputs):.3f} kgCO2eq")
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
