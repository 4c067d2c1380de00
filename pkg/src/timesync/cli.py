"""Command-line entry point: generate -> preprocess -> train -> evaluate/ablate.

Every stage stamps its artifacts with the config hash and the hashes of its
output files; downstream stages refuse to run on artifacts from a different
config or files that changed on disk. Exit codes: 0 success, 1 runtime
failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import journey as J
from . import pipeline as P
from .config import (ConfigError, LineageError, config_hash, load_config,
                     model_overrides, split_times, verify_stage,
                     write_stage_manifest)
from .evaluate import (default_workers, format_ablation_table,
                       format_ladder_table, run_ablation, run_ladder,
                       save_report)
from .model import ModelConfig, TimesyncModel, save_checkpoint
from .train import TrainingDiverged, run_training


def cmd_generate(cfg, cfg_hash, out: Path) -> int:
    data_dir = out / "data"
    events, intents, _ = J.generate_journeys(cfg.generator, seed=cfg.seed)
    J.save_journeys(data_dir, cfg.generator, events, intents)
    write_stage_manifest(data_dir, "generate", cfg_hash, inputs={},
                         output_files=["events.jsonl", "intents.jsonl", "rules.json"])
    print(f"generate: {len(events)} events, {len(intents)} intents -> {data_dir}")
    return 0


def cmd_preprocess(cfg, cfg_hash, out: Path) -> int:
    data_dir = out / "data"
    upstream = verify_stage(data_dir, "generate", cfg_hash)
    events, intents, gen_cfg = J.load_journeys(data_dir)
    t1, t2 = split_times(cfg)
    prep = P.prepare(events, intents, gen_cfg.products, t1=t1, t2=t2,
                     n_bins=cfg.pipeline.n_bins,
                     max_enc_len=cfg.pipeline.max_enc_len)
    prep_dir = out / "prep"
    P.save_prepared(prep_dir, prep, extra_manifest={"config_hash": cfg_hash})
    write_stage_manifest(prep_dir, "preprocess", cfg_hash,
                         inputs={f"data/{k}": v for k, v in upstream.items()},
                         output_files=["train.jsonl", "validation.jsonl",
                                       "test.jsonl", "manifest.json"])
    counts = {k: len(v) for k, v in prep.splits.items()}
    print(f"preprocess: samples {counts} -> {prep_dir}")
    return 0


def cmd_train(cfg, cfg_hash, out: Path) -> int:
    prep_dir = out / "prep"
    upstream = verify_stage(prep_dir, "preprocess", cfg_hash)
    prep = P.load_prepared(prep_dir)
    mcfg = ModelConfig.for_data(prep, **model_overrides(cfg))
    model = TimesyncModel(mcfg)
    train_prep = model.prepare(prep.splits["train"])
    val_prep = model.prepare(prep.splits["validation"])
    train_dir = out / "train"
    train_dir.mkdir(parents=True, exist_ok=True)
    result = run_training(model, train_prep, val_prep, cfg.train,
                          ks=tuple(cfg.eval.ks),
                          log_path=train_dir / "metrics.jsonl")
    save_checkpoint(train_dir / "checkpoint", result.best_params, manifest={
        "config_hash": cfg_hash, "steps": result.steps_run,
        "best_validation_recall1": result.best_recall1,
        "vocab_hash": upstream.get("manifest.json", "")})
    write_stage_manifest(train_dir, "train", cfg_hash,
                         inputs={f"prep/{k}": v for k, v in upstream.items()},
                         output_files=["metrics.jsonl", "checkpoint/params.bin",
                                       "checkpoint/params.idx",
                                       "checkpoint/manifest.json"])
    print(f"train: {result.steps_run} steps, "
          f"best validation recall@1 = {result.best_recall1:.4f} -> {train_dir}")
    return 0


def _load_eval_inputs(cfg, cfg_hash, out: Path):
    data_hashes = verify_stage(out / "data", "generate", cfg_hash)
    prep_hashes = verify_stage(out / "prep", "preprocess", cfg_hash)
    events, intents, gen_cfg = J.load_journeys(out / "data")
    prep = P.load_prepared(out / "prep")
    inputs = {f"data/{k}": v for k, v in data_hashes.items()}
    inputs.update({f"prep/{k}": v for k, v in prep_hashes.items()})
    return events, intents, gen_cfg, prep, inputs


def cmd_evaluate(cfg, cfg_hash, out: Path, ks) -> int:
    events, intents, gen_cfg, prep, inputs = _load_eval_inputs(cfg, cfg_hash, out)
    report = run_ladder(prep, events, cfg.eval.seeds, cfg.train, ks=ks,
                        model_overrides=model_overrides(cfg),
                        workers=default_workers())
    t2 = split_times(cfg)[1]
    report["bayes_recall_bound"] = {
        str(k): J.bayes_recall_bound(gen_cfg, events, intents, k,
                                     time_range=(t2, math.inf)) for k in ks}
    eval_dir = out / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    save_report(eval_dir / "ladder.json", report)
    table = format_ladder_table(report)
    (eval_dir / "ladder.txt").write_text(table)
    write_stage_manifest(eval_dir, "evaluate", cfg_hash, inputs=inputs,
                         output_files=["ladder.json", "ladder.txt"])
    print(table, end="")
    bounds = ", ".join(f"@{k}={report['bayes_recall_bound'][str(k)]:.4f}" for k in ks)
    print(f"oracle recall bound: {bounds}")
    return 0


def cmd_ablate(cfg, cfg_hash, out: Path, ks) -> int:
    _events, _intents, _gen_cfg, prep, inputs = _load_eval_inputs(cfg, cfg_hash, out)
    report = run_ablation(prep, cfg.eval.seeds, cfg.train, ks=ks,
                          model_overrides=model_overrides(cfg),
                          workers=default_workers())
    eval_dir = out / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    save_report(eval_dir / "ablation.json", report)
    table = format_ablation_table(report, k=ks[0])
    (eval_dir / "ablation.txt").write_text(table)
    write_stage_manifest(eval_dir, "ablate", cfg_hash, inputs=inputs,
                         output_files=["ablation.json", "ablation.txt"])
    print(table, end="")
    return 0


def _parse_ks(raw: str | None, cfg) -> tuple[int, ...]:
    if raw is None:
        return tuple(cfg.eval.ks)
    try:
        ks = tuple(int(x) for x in raw.split(",") if x)
    except ValueError:
        raise ConfigError(f"--k expects a comma-separated integer list, got {raw!r}")
    if not ks or any(k < 1 for k in ks):
        raise ConfigError(f"--k values must be positive integers, got {raw!r}")
    return ks


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="timesync",
        description="Next-intent prediction experiments over synthetic "
                    "multi-domain journeys.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "preprocess", "train", "evaluate", "ablate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", required=True, help="artifact root directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's global seed")
        if name in ("evaluate", "ablate"):
            p.add_argument("--k", default=None,
                           help="comma-separated recall cutoffs, e.g. 1,5,10")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, seed_override=args.seed)
        cfg_hash = config_hash(cfg)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "generate":
            return cmd_generate(cfg, cfg_hash, out)
        if args.command == "preprocess":
            return cmd_preprocess(cfg, cfg_hash, out)
        if args.command == "train":
            return cmd_train(cfg, cfg_hash, out)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, cfg_hash, out, _parse_ks(args.k, cfg))
        return cmd_ablate(cfg, cfg_hash, out, _parse_ks(args.k, cfg))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (LineageError, TrainingDiverged, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
