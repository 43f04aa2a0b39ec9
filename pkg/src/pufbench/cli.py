"""``pufbench`` command line driver.

Subcommands: gen, eval, metrics, validate, attack.  Every run prints (or
writes with ``--out``) one JSON report that embeds the resolved configuration
and root seed; ``--config report.json`` re-runs from such a report.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, metrics
from .attacks import (CmaesConfig, HybridConfig, LrConfig, MlpConfig, cmaes_reliability_attack, converged_members,
                      hybrid_attack, lr_attack, mlp_attack)
from .config import METHODS, ExperimentConfig, load_config_file, resolve_config
from .crp import CrpDataset, collect_crps, collect_reliability, generate_challenges, load_dataset, save_dataset
from .errors import DatasetError, InvalidParameterError
from .experiments import ber_sweep, uniformity_table
from .puf import OaxPuf, format_topology
from .rng import RngSeed

log = logging.getLogger("pufbench")

TABLE_COLUMNS = ["Num.APUFs", "x,y,z", "Training CRPs", "Test CRPs", "Epochs", "Batch_size", "Trials",
                 "Best Pred.Acc", "Training Time"]
EXIT_CONFIG = 2
EXIT_IO = 3

DEFAULT_REPEATS = {"lr": 0, "mlp": 0, "cmaes": 11, "hybrid": 10}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def build_instance(cfg: ExperimentConfig) -> OaxPuf:
    return OaxPuf.sample(cfg.topology, cfg.stages, cfg.sigma_noise, RngSeed(cfg.seed).substream("puf"))


def build_training_set(cfg: ExperimentConfig, p: OaxPuf, repeats: int):
    """Challenges and responses for training; repeats > 0 adds one-counts (majority response)."""
    root = RngSeed(cfg.seed)
    cs = generate_challenges(cfg.crps, cfg.stages, root.substream("train-challenges"))
    noise = root.substream("train-noise")
    if repeats:
        data, _ = collect_reliability(p, cs, repeats, noise, seed=cfg.seed)
        return data
    return collect_crps(p, cs, noisy=bool(np.any(p.sigma_noise > 0)), rng=noise, seed=cfg.seed)


def build_test_set(cfg: ExperimentConfig, p: OaxPuf) -> CrpDataset:
    root = RngSeed(cfg.seed)
    cs = generate_challenges(cfg.test_crps, cfg.stages, root.substream("test-challenges"))
    return collect_crps(p, cs, noisy=False, seed=cfg.seed)


def cmd_gen(cfg: ExperimentConfig) -> dict:
    p = build_instance(cfg)
    data = build_training_set(cfg, p, cfg.repeats or 0)
    out = Path(cfg.out or "crps.crpb")
    save_dataset(data, out)
    log.info("wrote %d records to %s (seed %d)", len(data), out, cfg.seed)
    return {"command": "gen", "path": str(out), "records": len(data), "repeats": data.repeats,
            "topology": format_topology(cfg.topology)}


def cmd_eval(cfg: ExperimentConfig) -> dict:
    p = build_instance(cfg)
    root = RngSeed(cfg.seed)
    m = cfg.repeats or 11
    return {
        "command": "eval",
        "ber": metrics.measure_ber(p, cfg.crps, 1, root.substream("eval-ber")).as_dict(),
        "member_ber": [e.as_dict() for e in metrics.measure_member_ber(p, cfg.crps, 1, root.substream("eval-mber"))],
        "instability": metrics.measure_instability(p, cfg.crps, m, root.substream("eval-instability")).as_dict(),
        "uniformity": metrics.measure_block_uniformity(p, cfg.crps, root.substream("eval-uniformity")).as_dict(),
        "instability_repeats": m,
    }


def cmd_metrics(cfg: ExperimentConfig) -> dict:
    x, y, z = cfg.topology
    out = {"command": "metrics", "beta": cfg.beta, "analytic": metrics.block_ber(x, y, z, cfg.beta).as_dict(),
           "uniformity": metrics.uniformity_profile(x, y, z).as_dict()}
    if max(cfg.topology) <= 6:
        out["exact_oracle_beta_oax"] = metrics.exact_beta_oax(x, y, z, cfg.beta)
    return out


def _sweep_checks(rows) -> dict:
    by_top = {r.topology: r for r in rows}
    checks = {}
    for axis, index in (("z", 2), ("x", 0), ("y", 1)):
        tops = sorted((t for t in by_top if all(t[i] == 2 for i in range(3) if i != index)), key=lambda t: t[index])
        vals = [by_top[t].empirical for t in tops]
        if axis == "z":
            ok = all(b.value > a.value for a, b in zip(vals, vals[1:]))
        else:
            ok = all(b.value <= a.value + 3 * np.hypot(a.standard_error, b.standard_error)
                     for a, b in zip(vals, vals[1:]))
        checks[f"{axis}_sweep_{'increasing' if axis == 'z' else 'non_increasing'}"] = bool(ok)
    return checks


def cmd_validate(cfg: ExperimentConfig) -> dict:
    rows = ber_sweep(cfg.beta, cfg.stages, cfg.crps, RngSeed(cfg.seed).substream("validate-ber"))
    samples = int(cfg.extra.get("uniformity_samples", 10_000))
    urows = uniformity_table(cfg.stages, samples, RngSeed(cfg.seed).substream("validate-uniformity"))
    table = [{"x,y,z": format_topology(r.topology), "analytic": r.analytic, "empirical": r.empirical.value,
              "ci95_low": r.empirical.interval()[0], "ci95_high": r.empirical.interval()[1],
              "exact_oracle": r.exact} for r in rows]
    table += [{"x,y,z": format_topology(r.topology), "u0_analytic": r.analytic.u0, "u0_empirical": r.empirical.u0}
              for r in urows]
    return {"command": "validate", "ber_rows": [r.as_dict() for r in rows],
            "uniformity_rows": [r.as_dict() for r in urows],
            "checks": {**_sweep_checks(rows),
                       "uniformity_within_0.02": all(abs(r.empirical.u0 - 0.5) <= 0.02 for r in urows)},
            "_table": table}


def _dataset_for_attack(cfg: ExperimentConfig, p: OaxPuf, repeats: int) -> CrpDataset:
    if not cfg.dataset:
        return build_training_set(cfg, p, repeats)
    data = load_dataset(cfg.dataset)
    if data.stage_count != cfg.stages or (data.topology is not None and data.topology != cfg.topology):
        raise InvalidParameterError(
            f"dataset ({data.stage_count} stages, topology {data.topology}) does not match "
            f"configuration ({cfg.stages} stages, topology {cfg.topology})")
    if repeats and not data.repeats:
        raise InvalidParameterError(f"method {cfg.method} needs a dataset with repeated measurements")
    return data


def cmd_attack(cfg: ExperimentConfig) -> dict:
    if cfg.method not in METHODS:
        raise InvalidParameterError(f"unknown attack method {cfg.method!r}")
    p = build_instance(cfg)
    repeats = cfg.repeats if cfg.repeats is not None else DEFAULT_REPEATS[cfg.method]
    train = _dataset_for_attack(cfg, p, repeats)
    test = build_test_set(cfg, p)
    rng = RngSeed(cfg.seed).substream("attack", cfg.method)
    opt = {k: v for k, v in (("epochs", cfg.epochs), ("batch_size", cfg.batch_size),
                             ("learning_rate", cfg.learning_rate)) if v is not None}
    out = {"command": "attack", "method": cfg.method, "training_crps": len(train), "test_crps": len(test),
           "repeats": train.repeats}
    if cfg.method == "lr":
        lcfg = LrConfig(restarts=cfg.trials or LrConfig.restarts,
                        max_iterations=cfg.max_iterations or LrConfig.max_iterations)
        _, rep = lr_attack(train, cfg.topology, lcfg, test, rng)
        reports, hyper = [rep], {"trials": lcfg.restarts, "epochs": None, "batch_size": None}
    elif cfg.method == "mlp":
        mcfg = MlpConfig(trials=cfg.trials or 1, **opt)
        model, rep = mlp_attack(train, cfg.topology, mcfg, test, rng)
        out["model"] = model.summary()
        reports, hyper = [rep], {"trials": mcfg.trials, "epochs": mcfg.epochs, "batch_size": mcfg.batch_size}
    elif cfg.method == "hybrid":
        hcfg = HybridConfig(trials=cfg.trials or HybridConfig.trials, **opt)
        _, rep = hybrid_attack(train, None, cfg.topology, hcfg, test, rng)
        reports, hyper = [rep], {"trials": hcfg.trials, "epochs": hcfg.epochs, "batch_size": hcfg.batch_size}
    else:
        ccfg = CmaesConfig(max_iterations=cfg.max_iterations or CmaesConfig.max_iterations)
        results = cmaes_reliability_attack(train, None, cfg.runs, ccfg, truth=p, rng=rng)
        reports = [rep for _, rep in results]
        out["converged_members"] = converged_members(results)
        out["converged_blocks"] = sorted({p.block_of(i) for i in out["converged_members"]})
        hyper = {"trials": cfg.runs, "epochs": None, "batch_size": None}
    best = max(reports, key=lambda r: max(r.accuracy, 1 - r.accuracy) if cfg.method == "cmaes" else r.accuracy)
    out["runs"] = [r.as_dict() for r in reports]
    out["accuracy"] = best.accuracy
    out["converged"] = best.converged
    out["wall_time"] = sum(r.wall_time for r in reports)
    out["_table"] = [{
        "Num.APUFs": sum(cfg.topology), "x,y,z": format_topology(cfg.topology), "Training CRPs": len(train),
        "Test CRPs": len(test), "Epochs": hyper["epochs"], "Batch_size": hyper["batch_size"],
        "Trials": hyper["trials"], "Best Pred.Acc": round(100 * best.accuracy, 2),
        "Training Time": round(out["wall_time"], 2)}]
    return out


COMMANDS = {"gen": cmd_gen, "eval": cmd_eval, "metrics": cmd_metrics, "validate": cmd_validate, "attack": cmd_attack}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pufbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pufbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file or a previous report")
        sp.add_argument("--stages", type=int)
        sp.add_argument("--topology", help="x,y,z block sizes")
        sp.add_argument("--sigma-noise", type=float, dest="sigma_noise")
        sp.add_argument("--crps", type=int)
        sp.add_argument("--test-crps", type=int, dest="test_crps")
        sp.add_argument("--repeats", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--method")
        sp.add_argument("--runs", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--batch-size", type=int, dest="batch_size")
        sp.add_argument("--learning-rate", type=float, dest="learning_rate")
        sp.add_argument("--max-iterations", type=int, dest="max_iterations")
        sp.add_argument("--beta", type=float)
        sp.add_argument("--dataset", help="CRPB1 file to attack instead of generating one")
        sp.add_argument("--out", help="output path (dataset for gen, report otherwise)")
        sp.add_argument("--table", help="write the flat table export (TSV) here")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def write_table(rows: list[dict], path) -> None:
    columns = TABLE_COLUMNS if rows and set(TABLE_COLUMNS) <= set(rows[0]) else list(
        dict.fromkeys(k for row in rows for k in row))
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, columns, delimiter="\t", extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        file_values = load_config_file(args.config) if args.config else {}
        cfg = resolve_config(file_values, **flags)
        result = COMMANDS[args.command](cfg)
        table = result.pop("_table", None)
        report = _jsonable({"pufbench_version": __version__, "seed": cfg.seed, "config": cfg.as_dict(), **result})
        text = json.dumps(report, indent=2, sort_keys=True) + "\n"
        if args.command != "gen" and cfg.out:
            Path(cfg.out).write_text(text)
        else:
            sys.stdout.write(text)
        if table is not None and cfg.table:
            write_table(table, cfg.table)
    except (InvalidParameterError, DatasetError) as exc:
        print(f"pufbench: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"pufbench: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
