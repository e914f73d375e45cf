"""Command-line entry points: train, gradcheck, costmodel, bramplan, synth-data.

Every subcommand is deterministic under a fixed seed: output files are
byte-identical across reruns. Timing is reported on stderr; the metrics
CSV records wall_time as 0.0 unless --timing is passed (which makes that
column, and only that column, nondeterministic).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bram, costmodel
from .checkpoint import save_checkpoint
from .config import ConfigError, TrainConfig, load_config, seed_streams
from .data import generate_synthetic, read_jsonl, write_jsonl
from .gradcheck import check_model_grads
from .model import ActivationStore, TensorTransformer, compression_summary, factor_inventory
from .train import metrics_csv, train_model

__all__ = ["main"]


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _load_cfg(args) -> TrainConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "epochs", None) is not None:
        cfg.epochs = args.epochs
    if getattr(args, "threads", None) is not None:
        cfg.parallel_btt = args.threads > 1
    if getattr(args, "spill_activations", False):
        cfg.spill_activations = True
    return cfg


def _dataset_for(cfg: TrainConfig) -> list[dict]:
    if cfg.dataset:
        data = read_jsonl(cfg.dataset)
        if not data:
            raise ConfigError(f"{cfg.dataset}: dataset is empty")
        return data
    return generate_synthetic(cfg.synthetic.count, cfg.seq_len, cfg.synthetic.classes,
                              cfg.vocab_size, cfg.seed, num_slots=cfg.num_slots)


def _attention_layer_config(cfg: TrainConfig) -> costmodel.LayerConfig:
    return costmodel.LayerConfig(cfg.hidden_out_modes, cfg.hidden_in_modes, cfg.tt_ranks,
                                 workload=cfg.batch_size * cfg.seq_len)


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    dataset = _dataset_for(cfg)
    os.makedirs(args.out, exist_ok=True)
    streams = seed_streams(cfg.seed)
    store = ActivationStore(os.path.join(args.out, "spill")) if cfg.spill_activations else None
    model = TensorTransformer(cfg, streams["init"], store=store)
    history = train_model(model, dataset, cfg, shuffle_rng=streams["shuffle"],
                          timing=args.timing, log=lambda s: print(s, file=sys.stderr))
    _write(os.path.join(args.out, "metrics.csv"), metrics_csv(history))
    save_checkpoint(os.path.join(args.out, "checkpoint.ttc"), model.parameters())

    report = costmodel.compare_report(_attention_layer_config(cfg))
    _write(os.path.join(args.out, "cost_report.csv"), costmodel.report_csv(report))
    plan = bram.optimize(factor_inventory(model))
    _write(os.path.join(args.out, "bram_plan.json"), bram.plan_to_json(plan))
    _write(os.path.join(args.out, "bram_summary.csv"), bram.plan_summary_csv(plan))
    summary = compression_summary(model)
    _write(os.path.join(args.out, "compression.json"),
           json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write(os.path.join(args.out, "config.json"),
           json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"trained {cfg.epochs} epochs on {len(dataset)} examples; "
          f"compression {summary['ratio']:.1f}x", file=sys.stderr)
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _load_cfg(args)
    streams = seed_streams(cfg.seed)
    model = TensorTransformer(cfg, streams["init"], dtype=np.float64)
    n_params = sum(arr.size for _, arr in model.parameters())
    if n_params > args.max_params:
        print(f"gradcheck model has {n_params} parameters (> {args.max_params}); "
              f"use a smaller config", file=sys.stderr)
        return 1
    example = generate_synthetic(1, min(cfg.seq_len, 4), cfg.synthetic.classes,
                                 cfg.vocab_size, cfg.seed, num_slots=cfg.num_slots)[0]
    report = check_model_grads(model, example, h=args.h)
    print(f"max relative error {report.max_rel_err:.3e} over {report.n_params} "
          f"parameters (worst: {report.worst_param})")
    return 0 if report.ok(args.threshold) else 1


def cmd_costmodel(args) -> int:
    cfg = _load_cfg(args)
    os.makedirs(args.out, exist_ok=True)
    layer_cfg = _attention_layer_config(cfg)
    report = costmodel.compare_report(layer_cfg, args.train_multiplier)
    _write(os.path.join(args.out, "cost_report.csv"), costmodel.report_csv(report))
    k_values = [8, 16, 32, 64, 128, 256, 512]
    k_sweep = costmodel.sweep(layer_cfg, "K", k_values, args.train_multiplier)
    _write(os.path.join(args.out, "sweep_workload.json"), costmodel.sweep_json("K", k_sweep))
    _write(os.path.join(args.out, "sweep_workload.csv"), costmodel.sweep_csv("K", k_sweep))
    r_values = list(range(1, 49))
    r_sweep = costmodel.sweep(layer_cfg, "rank", r_values, args.train_multiplier)
    _write(os.path.join(args.out, "sweep_rank.json"), costmodel.sweep_json("rank", r_sweep))
    _write(os.path.join(args.out, "sweep_rank.csv"), costmodel.sweep_csv("rank", r_sweep))
    print(costmodel.report_csv(report), end="")
    return 0


def cmd_bramplan(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.manifest:
        with open(args.manifest, "r", encoding="utf-8") as fh:
            arrays = bram.arrays_from_manifest(fh.read())
    else:
        if not args.config:
            raise ConfigError("bramplan needs --config or --manifest")
        cfg = _load_cfg(args)
        model = TensorTransformer(cfg, seed_streams(cfg.seed)["init"])
        arrays = factor_inventory(model)
        _write(os.path.join(args.out, "factor_manifest.json"), bram.arrays_to_manifest(arrays))
    plan = bram.optimize(arrays)
    _write(os.path.join(args.out, "bram_plan.json"), bram.plan_to_json(plan))
    _write(os.path.join(args.out, "bram_summary.csv"), bram.plan_summary_csv(plan))
    print(f"{plan.total_blocks} blocks ({plan.strategy}, W={plan.width}, g={plan.group_size}), "
          f"ideal {plan.ideal_blocks}, efficiency {plan.efficiency:.3f}")
    return 0


def cmd_synthdata(args) -> int:
    examples = generate_synthetic(args.count, args.length, args.classes, args.vocab,
                                  args.seed, num_slots=args.slots)
    write_jsonl(args.out, examples)
    print(f"wrote {len(examples)} examples to {args.out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ttedge", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON config file")
        sp.add_argument("--seed", type=int, default=None, help="override config seed")
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("train", help="train a tensor-compressed transformer")
    common(sp)
    sp.add_argument("--epochs", type=int, default=None, help="override config epochs")
    sp.add_argument("--threads", type=int, default=1,
                    help=">1 runs the two contraction chains on worker threads")
    sp.add_argument("--spill-activations", action="store_true",
                    help="stage inter-block activations through files")
    sp.add_argument("--timing", action="store_true",
                    help="record real wall_time in metrics.csv (nondeterministic)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("gradcheck", help="finite-difference check of a small model")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--threshold", type=float, default=1e-3)
    sp.add_argument("--h", type=float, default=1e-5)
    sp.add_argument("--max-params", type=int, default=20000)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("costmodel", help="emit per-scheme cost reports and sweeps")
    common(sp)
    sp.add_argument("--train-multiplier", type=int, default=1,
                    help="scale multiplications by the training factor (e.g. 3)")
    sp.set_defaults(func=cmd_costmodel)

    sp = sub.add_parser("bramplan", help="plan factor placement into memory blocks")
    common(sp, config_required=False)
    sp.add_argument("--manifest", default=None, help="factor manifest JSON instead of a config")
    sp.set_defaults(func=cmd_bramplan)

    sp = sub.add_parser("synth-data", help="write a synthetic JSONL dataset")
    sp.add_argument("--classes", type=int, default=2)
    sp.add_argument("--length", type=int, default=32)
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--vocab", type=int, default=1000)
    sp.add_argument("--slots", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synthdata)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
