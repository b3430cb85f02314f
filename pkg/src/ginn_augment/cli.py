"""Command-line entry point: ``ginn-augment {train,impute,augment,benchmark}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import datasets as bundled
from .augment import ORIGINAL, AugmentConfig, augment
from .benchmark import run_benchmark, summarize_wins, wins_to_csv
from .classifiers import KINDS, ClassifierConfig
from .dataset import (NUMERICAL, EncodedMatrix, Schema, TabularDataset, compute_global, decode,
                      fit_layout, format_value, load_csv, transform, write_csv)
from .graph import LABELED, UNLABELED, build_similarity, propagation_operator, two_step_prune, \
    write_edge_list
from .model import TrainConfig, load_checkpoint, save_checkpoint, train

log = logging.getLogger("ginn_augment")

CONFIG_SECTIONS = {"seed", "train", "augment", "classifier", "benchmark"}
BENCHMARK_KEYS = {"datasets", "factors", "trials", "jobs", "train_frac", "label_frac", "data_dir"}


class CliError(Exception):
    pass


def load_run_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    extra = set(doc) - CONFIG_SECTIONS
    if extra:
        raise CliError(f"{path}: unknown config sections {sorted(extra)}")
    _check_keys(doc.get("train", {}), {f.name for f in fields(TrainConfig)}, "train")
    _check_keys(doc.get("augment", {}), {f.name for f in fields(AugmentConfig)}, "augment")
    _check_keys(doc.get("classifier", {}), {f.name for f in fields(ClassifierConfig)} - {"kind"},
                "classifier")
    _check_keys(doc.get("benchmark", {}), BENCHMARK_KEYS, "benchmark")
    return doc


def _check_keys(section, allowed, name):
    extra = set(section) - allowed
    if extra:
        raise CliError(f"unknown keys in config section {name!r}: {sorted(extra)}")


def _out_path(path, force) -> Path:
    p = Path(path)
    if p.exists() and not force:
        raise CliError(f"{p} exists; pass --force to overwrite")
    return p


def _seeds(seed: int) -> tuple[int, int]:
    train_seed, aug_seed = np.random.SeedSequence(seed).generate_state(2)
    return int(train_seed), int(aug_seed)


def _train_config(args, cfg: dict) -> TrainConfig:
    tc = TrainConfig.from_dict(cfg.get("train", {}))
    if args.epochs is not None:
        tc = replace(tc, max_epochs=args.epochs)
    if args.no_adversarial:
        tc = replace(tc, adversarial=False)
    return tc


def _seed(args, cfg):
    return args.seed if args.seed is not None else int(cfg.get("seed", 0))


def _fit(data: TabularDataset, tc: TrainConfig, seed: int, graph_dump=None):
    layout = fit_layout(data)
    x, mask = transform(data, layout)
    tags = [UNLABELED if y is None else LABELED for y in data.labels]
    adj = two_step_prune(build_similarity(x.values, mask), tags)
    if graph_dump:
        write_edge_list(graph_dump, adj)
    g = compute_global(x.values, mask)
    model = train(x.values, mask, propagation_operator(adj, True), propagation_operator(adj, False),
                  g, layout, replace(tc, seed=seed))
    return model, adj, x.values, mask


def _graph_for(data, model):
    x, mask = transform(data, model.layout)
    tags = [UNLABELED if y is None else LABELED for y in data.labels]
    adj = two_step_prune(build_similarity(x.values, mask), tags)
    return adj, x.values, mask


def cmd_train(args, cfg):
    out = _out_path(args.out, args.force)
    data = load_csv(args.data, Schema.load(args.schema))
    model, _, _, _ = _fit(data, _train_config(args, cfg), _seeds(_seed(args, cfg))[0], args.graph_dump)
    save_checkpoint(out, model)
    r = model.report
    print(f"trained {len(data)} rows: stop epoch {r.stop_epoch} ({r.stop_reason}), "
          f"best L_A {r.reconstruction[r.best_epoch - 1]:.6f}")


def cmd_impute(args, cfg):
    out = _out_path(args.out, args.force)
    schema = Schema.load(args.schema)
    data = load_csv(args.data, schema)
    model = load_checkpoint(args.checkpoint)
    if model.layout.schema.to_dict()["columns"] != schema.to_dict()["columns"]:
        raise CliError("schema does not match the checkpoint")
    adj, x, mask = _graph_for(data, model)
    filled = model.impute(x, mask, propagation_operator(adj, True), propagation_operator(adj, False))
    decoded = decode(EncodedMatrix(filled, model.layout))
    li = schema.label_index
    feats = schema.features
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([c.name for c in schema.columns])
        for i, raw in enumerate(data.raw):
            cells = list(raw)
            for a, col in enumerate(feats):
                k = a if a < li else a + 1
                if data.rows[i][a] is None:
                    cells[k] = format_value(decoded.rows[i][a])
            w.writerow(cells)
    n_missing = sum(v is None for row in data.rows for v in row)
    print(f"imputed {n_missing} missing cells in {len(data)} rows")


def cmd_augment(args, cfg):
    out = _out_path(args.out, args.force)
    schema = Schema.load(args.schema)
    data = load_csv(args.data, schema)
    seed = _seed(args, cfg)
    train_seed, aug_seed = _seeds(seed)
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
        adj, x, mask = _graph_for(data, model)
    else:
        model, adj, x, mask = _fit(data, _train_config(args, cfg), train_seed)
    acfg = dict(cfg.get("augment", {}))
    if args.factor is not None:
        acfg["factor"] = args.factor
    if args.damage_rate is not None:
        acfg["damage_rate"] = args.damage_rate
    acfg["seed"] = aug_seed
    acfg = AugmentConfig(**acfg)
    positions = data.labeled_indices
    if positions.size == 0:
        raise CliError("input has no labeled rows")
    result = augment(model, adj, x, mask, positions, data.subset(positions), acfg,
                     source_ids=positions.tolist())
    extra = None
    if args.provenance:
        extra = {"__label__": result.data.labels, "__provenance__": result.provenance}
    write_csv(out, result.data, extra)
    n_gen = sum(p != ORIGINAL for p in result.provenance)
    print(f"wrote {len(result)} labeled rows ({n_gen} generated) to {out}")


def cmd_benchmark(args, cfg):
    bcfg = dict(cfg.get("benchmark", {}))
    names = args.datasets.split(",") if args.datasets else bcfg.get("datasets", ["ionosphere"])
    factors = [int(f) for f in args.factors.split(",")] if args.factors else bcfg.get("factors", [2, 5, 10])
    trials = args.trials if args.trials is not None else int(bcfg.get("trials", 5))
    jobs = args.jobs if args.jobs is not None else int(bcfg.get("jobs", 1))
    data_dir = args.data_dir or bcfg.get("data_dir")
    kinds = args.classifiers.split(",") if args.classifiers else list(KINDS)
    seed = _seed(args, cfg)
    tc = _train_config(args, cfg)
    base_clf = cfg.get("classifier", {})
    classifiers = [ClassifierConfig(kind=k, **base_clf) for k in kinds]

    out_dir = Path(args.out_dir)
    targets = [out_dir / n for n in ("report.csv", "wins.csv", "table.txt", "config.json")]
    if any(t.exists() for t in targets) and not args.force:
        raise CliError(f"{out_dir} already holds a report; pass --force to overwrite")
    loaded = []
    for name in names:
        csv_path, schema_path = bundled.resolve(name, data_dir)
        loaded.append((name, load_csv(csv_path, Schema.load(schema_path))))
    kw = {k: bcfg[k] for k in ("train_frac", "label_frac") if k in bcfg}
    report = run_benchmark(loaded, factors, trials, seed, tc, classifiers, jobs, **kw)
    wins = summarize_wins(report)
    effective = {
        "seed": seed, "train": tc.to_dict(), "classifier": [asdict(c) for c in classifiers],
        "benchmark": {"datasets": names, "factors": factors, "trials": trials, **kw},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    targets[0].write_text(report.to_csv())
    targets[1].write_text(wins_to_csv(wins))
    targets[2].write_text(report.to_table())
    targets[3].write_text(json.dumps(effective, indent=2, sort_keys=True) + "\n")
    print(report.to_table(), end="")
    print("wins: " + ", ".join(f"{v}={c:g}" for v, c in wins.items()))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ginn-augment", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--config", help="JSON run config with per-module sections")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if data:
            sp.add_argument("--data", required=True, help="input CSV with header row")
            sp.add_argument("--schema", required=True, help="JSON schema sidecar")

    def training(sp):
        sp.add_argument("--epochs", type=int, help="override max_epochs")
        sp.add_argument("--no-adversarial", action="store_true", help="train without the critic")

    sp = sub.add_parser("train", help="fit the imputation model and write a checkpoint")
    common(sp)
    training(sp)
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--graph-dump", help="write the similarity graph as an edge list")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("impute", help="fill missing cells using a checkpoint")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_impute)

    sp = sub.add_parser("augment", help="emit the labeled rows plus generated ones")
    common(sp)
    training(sp)
    sp.add_argument("--checkpoint", help="reuse a trained model instead of fitting one")
    sp.add_argument("--factor", type=int)
    sp.add_argument("--damage-rate", type=float)
    sp.add_argument("--provenance", action="store_true",
                    help="append __label__ and __provenance__ columns")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("benchmark", help="baseline vs augmented accuracy over trials")
    common(sp, data=False)
    training(sp)
    sp.add_argument("--datasets", help="comma-separated dataset names")
    sp.add_argument("--factors", help="comma-separated augmentation factors")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--classifiers", help=f"comma-separated subset of {','.join(KINDS)}")
    sp.add_argument("--jobs", type=int, help="parallel trial processes")
    sp.add_argument("--data-dir", help=f"dataset directory (default: ${bundled.ENV_VAR} or bundled)")
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_benchmark)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args.config)
        args.func(args, cfg)
    except (CliError, OSError, ValueError, RuntimeError) as exc:
        print(f"ginn-augment {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())
