"""Recall@k evaluation, the four-row baseline ladder, and the
feature-ablation harness, with paired-seed statistics.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .baselines import (FeatureExtractor, SasrecEncoderModel, SasrecModel,
                        SasrecTabularModel, fit_feature_stats)
from .model import ABLATION_ROWS, ModelConfig, TimesyncModel
from .train import TrainConfig, run_training

LADDER_VARIANTS = ("sasrec", "sasrec_tabular", "sasrec_encoder", "timesync")


def rank_intents(scores: np.ndarray) -> np.ndarray:
    """Permutation of intent ids by descending score, ties by intent id."""
    n = len(scores)
    return np.lexsort((np.arange(n), -scores))


def recall_at_k(rankings, truths, k: int) -> float:
    """Fraction of positions whose true intent sits in the top k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(rankings) == 0:
        raise ValueError("recall_at_k: empty position set")
    hits = sum(1 for ranking, truth in zip(rankings, truths)
               if truth in ranking[:k])
    return hits / len(rankings)


def evaluate_recall(model, params, prepared, ks=(1, 5, 10)) -> dict[int, float]:
    """Recall over every supervised position of the prepared samples."""
    rankings = []
    truths = []
    for ps in prepared:
        if ps.n_supervised == 0:
            continue
        logits = model.forward(params, ps, train_mode=False).data
        for pos in np.flatnonzero(ps.supervised):
            rankings.append(rank_intents(logits[pos]))
            truths.append(int(ps.targets[pos]))
    return {k: recall_at_k(rankings, truths, k) for k in ks}


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("TIMESYNC_THREADS", "1")))
    except ValueError:
        return 1


def build_ladder_models(prep, events, model_overrides=None) -> dict[str, object]:
    """The four ladder variants over one prepared dataset."""
    overrides = dict(model_overrides or {})
    extractor = FeatureExtractor(events, prep.product_order)
    stats = fit_feature_stats(extractor, prep.splits["train"])
    cfg = ModelConfig.for_data(prep, **overrides)
    return {
        "sasrec": SasrecModel(cfg),
        "sasrec_tabular": SasrecTabularModel(cfg, extractor, stats),
        "sasrec_encoder": SasrecEncoderModel(cfg, extractor, stats),
        "timesync": TimesyncModel(cfg),
    }


def _train_and_test(model, prepared_splits, tcfg: TrainConfig, seed: int, ks):
    result = run_training(model, prepared_splits["train"],
                          prepared_splits["validation"],
                          replace(tcfg, seed=seed), ks=ks)
    test = evaluate_recall(model, result.best_params, prepared_splits["test"], ks)
    return {"test": test, "val_best_recall1": result.best_recall1,
            "steps": result.steps_run}


def _mean_std(xs):
    arr = np.asarray(xs, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def run_ladder(prep, events, seeds, tcfg: TrainConfig, ks=(1, 5, 10),
               model_overrides=None, workers: int | None = None) -> dict:
    """Train all four variants per seed (paired) and report recalls and
    relative lifts over the intent-only baseline and over the prior row."""
    models = build_ladder_models(prep, events, model_overrides)
    prepared = {name: {split: m.prepare(prep.splits[split])
                       for split in ("train", "validation", "test")}
                for name, m in models.items()}
    jobs = [(name, seed) for name in LADDER_VARIANTS for seed in seeds]
    workers = default_workers() if workers is None else workers

    def run_job(job):
        name, seed = job
        return job, _train_and_test(models[name], prepared[name], tcfg, seed, ks)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(run_job, jobs))
    else:
        results = dict(map(run_job, jobs))

    report = {"seeds": list(seeds), "ks": list(ks), "variants": {}}
    for name in LADDER_VARIANTS:
        per_k = {k: [results[(name, s)]["test"][k] for s in seeds] for k in ks}
        report["variants"][name] = {
            "recall": {str(k): dict(zip(("mean", "std"), _mean_std(per_k[k])),
                                    per_seed=per_k[k]) for k in ks},
            "steps": [results[(name, s)]["steps"] for s in seeds],
        }
    for name in LADDER_VARIANTS:
        lifts, prior = {}, {}
        prev = LADDER_VARIANTS[LADDER_VARIANTS.index(name) - 1] if name != "sasrec" else None
        for k in ks:
            base = [results[("sasrec", s)]["test"][k] for s in seeds]
            mine = [results[(name, s)]["test"][k] for s in seeds]
            pair = [100.0 * (m - b) / max(b, 1e-12) for m, b in zip(mine, base)]
            lifts[str(k)] = dict(zip(("mean", "std"), _mean_std(pair)), per_seed=pair)
            if prev is not None:
                pb = [results[(prev, s)]["test"][k] for s in seeds]
                pp = [100.0 * (m - b) / max(b, 1e-12) for m, b in zip(mine, pb)]
                prior[str(k)] = dict(zip(("mean", "std"), _mean_std(pp)), per_seed=pp)
        report["variants"][name]["lift_vs_sasrec_pct"] = lifts
        if prev is not None:
            report["variants"][name]["lift_vs_prior_row_pct"] = prior
    return report


def run_ablation(prep, seeds, tcfg: TrainConfig, ks=(1, 5, 10),
                 model_overrides=None, workers: int | None = None) -> dict:
    """Full model plus the eight single-feature-off rows, paired by seed."""
    overrides = dict(model_overrides or {})
    full_cfg = ModelConfig.for_data(prep, **overrides)
    rows = [("full", None)] + [(flag, flag) for _site, flag in ABLATION_ROWS]
    models = {}
    for row_name, flag in rows:
        cfg = full_cfg if flag is None else replace(
            full_cfg, flags=full_cfg.flags.with_off(flag))
        models[row_name] = TimesyncModel(cfg)
    prepared = {name: {split: m.prepare(prep.splits[split])
                       for split in ("train", "validation", "test")}
                for name, m in models.items()}
    jobs = [(name, seed) for name, _ in rows for seed in seeds]
    workers = default_workers() if workers is None else workers

    def run_job(job):
        name, seed = job
        return job, _train_and_test(models[name], prepared[name], tcfg, seed, ks)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(run_job, jobs))
    else:
        results = dict(map(run_job, jobs))

    sites = dict((flag, site) for site, flag in ABLATION_ROWS)
    report = {"seeds": list(seeds), "ks": list(ks), "rows": {}}
    full = {k: [results[("full", s)]["test"][k] for s in seeds] for k in ks}
    report["rows"]["full"] = {
        "site": "", "recall": {str(k): dict(zip(("mean", "std"), _mean_std(full[k])),
                                            per_seed=full[k]) for k in ks}}
    for row_name, flag in rows[1:]:
        row = {"site": sites[flag], "recall": {}, "delta_pct": {}}
        for k in ks:
            mine = [results[(row_name, s)]["test"][k] for s in seeds]
            deltas = [100.0 * (m - f) / max(f, 1e-12)
                      for m, f in zip(mine, full[k])]
            mean, std = _mean_std(deltas)
            se = std / np.sqrt(len(seeds)) if len(seeds) > 1 else 0.0
            row["recall"][str(k)] = dict(zip(("mean", "std"), _mean_std(mine)),
                                         per_seed=mine)
            row["delta_pct"][str(k)] = {"mean": mean, "std": std, "se": float(se),
                                        "per_seed": deltas}
        report["rows"][row_name] = row
    return report


# ---------------------------------------------------------------------------
# report formatting
# ---------------------------------------------------------------------------

def format_ladder_table(report: dict) -> str:
    ks = report["ks"]
    header = f"{'method':<18}" + "".join(f"{'Recall@' + str(k):>12}" for k in ks) \
        + "".join(f"{'lift@' + str(k) + '%':>12}" for k in ks)
    lines = [header, "-" * len(header)]
    for name in LADDER_VARIANTS:
        row = report["variants"][name]
        cells = [f"{row['recall'][str(k)]['mean']:.4f}" for k in ks]
        lifts = [f"{row['lift_vs_sasrec_pct'][str(k)]['mean']:+.2f}" for k in ks] \
            if name != "sasrec" else ["+0.00"] * len(ks)
        lines.append(f"{name:<18}" + "".join(f"{c:>12}" for c in cells)
                     + "".join(f"{c:>12}" for c in lifts))
    return "\n".join(lines) + "\n"


def format_ablation_table(report: dict, k: int = 1) -> str:
    header = f"{'site':<10}{'row':<28}{'Recall@' + str(k):>12}{'delta%':>10}{'se':>8}"
    lines = [header, "-" * len(header)]
    full = report["rows"]["full"]["recall"][str(k)]["mean"]
    lines.append(f"{'':<10}{'full':<28}{full:>12.4f}{'':>10}{'':>8}")
    for name, row in report["rows"].items():
        if name == "full":
            continue
        d = row["delta_pct"][str(k)]
        lines.append(f"{row['site']:<10}{'w/o ' + name:<28}"
                     f"{row['recall'][str(k)]['mean']:>12.4f}"
                     f"{d['mean']:>+10.3f}{d['se']:>8.3f}")
    return "\n".join(lines) + "\n"


def save_report(path, report: dict) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
