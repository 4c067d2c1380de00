"""Dev-only: measure ladder ordering and the oracle gap on the default data."""

import math
import sys
import time

from timesync import journey as J
from timesync import pipeline as P
from timesync.evaluate import format_ladder_table, run_ladder
from timesync.train import TrainConfig

n_users = int(sys.argv[1]) if len(sys.argv) > 1 else 200
seeds = [int(s) for s in (sys.argv[2].split(",") if len(sys.argv) > 2 else ["101", "102"])]
max_steps = int(sys.argv[3]) if len(sys.argv) > 3 else 700

cfg = J.default_generator_config(n_users=n_users)
t_gen = time.time()
events, intents, _ = J.generate_journeys(cfg, seed=7)
print(f"generated {len(events)} events / {len(intents)} intents in {time.time()-t_gen:.1f}s")
t1, t2 = int(0.7 * cfg.days) * 86400, int(0.85 * cfg.days) * 86400
prep = P.prepare(events, intents, cfg.products, t1=t1, t2=t2, n_bins=10, max_enc_len=160)
print("splits:", {k: len(v) for k, v in prep.splits.items()},
      "enc len max:", max(len(s.enc_t) for s in prep.splits["test"]),
      "dec len max:", max(len(s.dec_t) for s in prep.splits["test"]))
bound = J.bayes_recall_bound(cfg, events, intents, k=1, time_range=(t2, math.inf))
bound5 = J.bayes_recall_bound(cfg, events, intents, k=5, time_range=(t2, math.inf))
print(f"bayes bound: recall@1={bound:.4f} recall@5={bound5:.4f}")

tcfg = TrainConfig(learning_rate=3e-4, batch_size=8, max_steps=max_steps,
                   eval_every=40, early_stop_patience=6)
overrides = dict(d_model=32, n_heads=4, n_encoder_layers=2, n_decoder_layers=2,
                 ffn_dim=64, dropout_rate=0.1)
t0 = time.time()
report = run_ladder(prep, events, seeds, tcfg, model_overrides=overrides, workers=2)
print(f"ladder wall time: {time.time()-t0:.0f}s  (seeds={seeds})")
print(format_ladder_table(report))
for name, row in report["variants"].items():
    print(name, "steps:", row["steps"], "r@1 per seed:",
          [round(x, 4) for x in row["recall"]["1"]["per_seed"]])
print(f"timesync r1 mean={report['variants']['timesync']['recall']['1']['mean']:.4f} "
      f"vs bound {bound:.4f} (gap {bound - report['variants']['timesync']['recall']['1']['mean']:+.4f})")
