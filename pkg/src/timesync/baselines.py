"""Baseline ladder: intent-only recommender and its context-fed variants.

sasrec: causal self-attention over the intent sequence with learned
positional embeddings, blind to context and time. sasrec_tabular fuses
hand-engineered trailing-window features (aligned to each intent's
timestamp) with the recommender output. sasrec_encoder instead feeds the
sequence of those feature snapshots through an encoder that the decoder
cross-attends into under a time mask.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import multihead_attend, temporal_causal_mask
from .journey import ENROLLMENT_DOMAIN
from .model import ModelConfig
from .pipeline import TokenizedSample
from .rng import make_rng
from .tensor import Tensor

TRAILING_WINDOW_DAYS = (7, 30, 90)


class FeatureExtractor:
    """Point-in-time tabular context features.

    Per domain: event counts over trailing 7/30/90-day windows; per numeric
    field: value means over the same windows; plus current product
    ownership. Only events strictly before the query timestamp count.
    """

    def __init__(self, events, product_order, windows=TRAILING_WINDOW_DAYS):
        self.windows = tuple(windows)
        self.product_order = list(product_order)
        domains = set()
        numeric_fields = set()
        self._times: dict[tuple[str, str], list[int]] = {}
        self._values: dict[tuple[str, str, str], tuple[list[int], list[float]]] = {}
        self._enroll: dict[tuple[str, str], int] = {}
        for ev in events:
            if ev.domain == ENROLLMENT_DOMAIN:
                key = (ev.user_id, ev.product)
                self._enroll[key] = min(ev.timestamp, self._enroll.get(key, ev.timestamp))
                continue
            domains.add(ev.domain)
            self._times.setdefault((ev.user_id, ev.domain), []).append(ev.timestamp)
            if not isinstance(ev.field_value, str):
                numeric_fields.add((ev.domain, ev.field_name))
                ts, vals = self._values.setdefault(
                    (ev.user_id, ev.domain, ev.field_name), ([], []))
                ts.append(ev.timestamp)
                vals.append(float(ev.field_value))
        self.domains = sorted(domains)
        self.numeric_fields = sorted(numeric_fields)
        for times in self._times.values():
            times.sort()
        self._prefix: dict[tuple[str, str, str], tuple[list[int], np.ndarray]] = {}
        for key, (ts, vals) in self._values.items():
            order = np.argsort(np.asarray(ts), kind="stable")
            sorted_ts = [ts[i] for i in order]
            csum = np.concatenate([[0.0], np.cumsum(np.asarray(vals)[order])])
            self._prefix[key] = (sorted_ts, csum)

    @property
    def dim(self) -> int:
        return (len(self.domains) + len(self.numeric_fields)) * len(self.windows) \
            + len(self.product_order)

    def feature_names(self) -> list[str]:
        names = [f"count:{d}:{w}d" for d in self.domains for w in self.windows]
        names += [f"mean:{d}/{f}:{w}d" for d, f in self.numeric_fields
                  for w in self.windows]
        names += [f"own:{p}" for p in self.product_order]
        return names

    def features(self, user_id: str, t: int) -> np.ndarray:
        out = np.zeros(self.dim)
        i = 0
        for domain in self.domains:
            times = self._times.get((user_id, domain), [])
            hi = bisect.bisect_left(times, t)
            for w in self.windows:
                lo = bisect.bisect_left(times, t - w * 86400)
                out[i] = hi - lo
                i += 1
        for domain, fname in self.numeric_fields:
            ts, csum = self._prefix.get((user_id, domain, fname), ([], None))
            hi = bisect.bisect_left(ts, t)
            for w in self.windows:
                lo = bisect.bisect_left(ts, t - w * 86400)
                out[i] = (csum[hi] - csum[lo]) / (hi - lo) if hi > lo else 0.0
                i += 1
        for prod in self.product_order:
            t_e = self._enroll.get((user_id, prod))
            out[i] = 1.0 if t_e is not None and t_e < t else 0.0
            i += 1
        return out


def tabular_context_features(extractor: FeatureExtractor, user_id: str,
                             intent_timestamp: int) -> np.ndarray:
    return extractor.features(user_id, intent_timestamp)


@dataclass
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray

    def normalize(self, feats: np.ndarray) -> np.ndarray:
        return (feats - self.mean) / self.std


def fit_feature_stats(extractor: FeatureExtractor,
                      samples: list[TokenizedSample]) -> FeatureStats:
    rows = [extractor.features(s.user_id, int(t))
            for s in samples for t in s.dec_t]
    stacked = np.asarray(rows) if rows else np.zeros((1, extractor.dim))
    std = stacked.std(axis=0)
    return FeatureStats(mean=stacked.mean(axis=0),
                        std=np.where(std > 1e-12, std, 1.0))


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

@dataclass
class BaselinePrepared:
    user_id: str
    dec_in: np.ndarray
    targets: np.ndarray
    n_supervised: int
    pos_ids: np.ndarray
    pos_mask: np.ndarray          # positional causal mask [m, m]
    time_mask: np.ndarray         # inclusive timestamp mask [m, m]
    feats: np.ndarray | None
    supervised: np.ndarray
    dec_t: np.ndarray


def _decoder_inputs(sample: TokenizedSample):
    m = len(sample.dec_t)
    dec_in = np.empty(m, dtype=np.int64)
    dec_in[0] = 1  # BOS
    dec_in[1:] = sample.dec_y[:-1]
    targets = np.where(sample.dec_supervised, sample.dec_y, T.IGNORE_INDEX)
    return dec_in, targets


class SasrecModel:
    """Self-attentive next-intent recommender, context-blind."""

    name = "sasrec"

    def __init__(self, config: ModelConfig, use_positions: bool = True):
        self.config = config
        self.use_positions = use_positions

    def init_params(self, seed: int) -> dict[str, Tensor]:
        cfg = self.config
        rng = make_rng(seed, 2)
        bound = 1.0 / np.sqrt(cfg.d_model)

        def u(*shape):
            return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)

        p: dict[str, Tensor] = {}
        p["intent_emb"] = u(cfg.intent_vocab_size, cfg.d_model)
        p["pos_emb"] = u(cfg.max_dec_len, cfg.d_model)
        for i in range(cfg.n_decoder_layers):
            for ln in ("ln1", "ln2"):
                p[f"l{i}.{ln}_g"] = Tensor(np.ones(cfg.d_model), requires_grad=True)
                p[f"l{i}.{ln}_b"] = Tensor(np.zeros(cfg.d_model), requires_grad=True)
            for w in ("wq", "wk", "wv", "wo"):
                p[f"l{i}.{w}"] = u(cfg.d_model, cfg.d_model)
            p[f"l{i}.ffn_w1"] = u(cfg.d_model, cfg.ffn_dim)
            p[f"l{i}.ffn_b1"] = u(cfg.ffn_dim)
            p[f"l{i}.ffn_w2"] = u(cfg.ffn_dim, cfg.d_model)
            p[f"l{i}.ffn_b2"] = u(cfg.d_model)
        p["out_ln_g"] = Tensor(np.ones(cfg.d_model), requires_grad=True)
        p["out_ln_b"] = Tensor(np.zeros(cfg.d_model), requires_grad=True)
        p["head_w"] = u(cfg.d_model, cfg.intent_vocab_size)
        p["head_b"] = u(cfg.intent_vocab_size)
        self._extend_params(p, u)
        return p

    def _extend_params(self, p, u):
        pass

    def prepare(self, samples: list[TokenizedSample]) -> list[BaselinePrepared]:
        out = []
        for s in samples:
            dec_in, targets = _decoder_inputs(s)
            m = len(dec_in)
            out.append(BaselinePrepared(
                user_id=s.user_id, dec_in=dec_in, targets=targets,
                n_supervised=int(s.dec_supervised.sum()),
                pos_ids=np.arange(m, dtype=np.intp),
                pos_mask=np.tril(np.ones((m, m), dtype=bool)),
                time_mask=temporal_causal_mask(s.dec_t, s.dec_t, strict=False),
                feats=self._sample_feats(s),
                supervised=s.dec_supervised.copy(),
                dec_t=s.dec_t))
        return out

    def _sample_feats(self, sample: TokenizedSample):
        return None

    def _body(self, params, ps, rate, rng):
        cfg = self.config
        x = T.embedding(params["intent_emb"], ps.dec_in)
        if self.use_positions:
            x = T.add(x, T.embedding(params["pos_emb"], ps.pos_ids))
        x = T.dropout(x, rate, rng)
        for i in range(cfg.n_decoder_layers):
            h = T.layer_norm(x, params[f"l{i}.ln1_g"], params[f"l{i}.ln1_b"])
            a = multihead_attend(T.matmul(h, params[f"l{i}.wq"]),
                                 T.matmul(h, params[f"l{i}.wk"]),
                                 T.matmul(h, params[f"l{i}.wv"]),
                                 n_heads=cfg.n_heads, mask=ps.pos_mask)
            x = T.add(x, T.dropout(T.matmul(a, params[f"l{i}.wo"]), rate, rng))
            h = T.layer_norm(x, params[f"l{i}.ln2_g"], params[f"l{i}.ln2_b"])
            f = T.add(T.matmul(T.relu(T.add(T.matmul(h, params[f"l{i}.ffn_w1"]),
                                            params[f"l{i}.ffn_b1"])),
                               params[f"l{i}.ffn_w2"]), params[f"l{i}.ffn_b2"])
            x = T.add(x, T.dropout(f, rate, rng))
        return T.layer_norm(x, params["out_ln_g"], params["out_ln_b"])

    def forward(self, params, ps: BaselinePrepared, train_mode: bool = False,
                rng=None) -> Tensor:
        rate = self.config.dropout_rate if train_mode else 0.0
        h = self._body(params, ps, rate, rng)
        return T.add(T.matmul(h, params["head_w"]), params["head_b"])


class SasrecTabularModel(SasrecModel):
    """SASRec output fused with point-in-time engineered features."""

    name = "sasrec_tabular"

    def __init__(self, config: ModelConfig, extractor: FeatureExtractor,
                 stats: FeatureStats):
        super().__init__(config)
        self.extractor = extractor
        self.stats = stats

    def _extend_params(self, p, u):
        d = self.config.d_model
        p["feat_w"] = u(self.extractor.dim, d)
        p["feat_b"] = u(d)
        p["fuse_proj"] = u(2 * d, d)
        p["fuse_proj_b"] = u(d)

    def _sample_feats(self, sample: TokenizedSample):
        rows = np.stack([self.extractor.features(sample.user_id, int(t))
                         for t in sample.dec_t])
        return self.stats.normalize(rows)

    def forward(self, params, ps, train_mode=False, rng=None):
        rate = self.config.dropout_rate if train_mode else 0.0
        h = self._body(params, ps, rate, rng)
        ctx = T.add(T.matmul(Tensor(ps.feats), params["feat_w"]), params["feat_b"])
        fused = T.add(T.matmul(T.concat_lastdim(h, ctx), params["fuse_proj"]),
                      params["fuse_proj_b"])
        return T.add(T.matmul(fused, params["head_w"]), params["head_b"])


class SasrecEncoderModel(SasrecModel):
    """Encoder over feature snapshots, cross-attended by the recommender.

    Snapshots sit at intent timestamps and contain strictly-past
    information, so the cross mask is inclusive (a query may read the
    snapshot aligned with its own timestamp).
    """

    name = "sasrec_encoder"

    def __init__(self, config: ModelConfig, extractor: FeatureExtractor,
                 stats: FeatureStats):
        super().__init__(config)
        self.extractor = extractor
        self.stats = stats

    def _extend_params(self, p, u):
        cfg = self.config
        d = cfg.d_model
        p["feat_in_w"] = u(self.extractor.dim, d)
        p["feat_in_b"] = u(d)
        for i in range(cfg.n_encoder_layers):
            for ln in ("ln1", "ln2"):
                p[f"e{i}.{ln}_g"] = Tensor(np.ones(d), requires_grad=True)
                p[f"e{i}.{ln}_b"] = Tensor(np.zeros(d), requires_grad=True)
            for w in ("wq", "wk", "wv", "wo"):
                p[f"e{i}.{w}"] = u(d, d)
            p[f"e{i}.ffn_w1"] = u(d, cfg.ffn_dim)
            p[f"e{i}.ffn_b1"] = u(cfg.ffn_dim)
            p[f"e{i}.ffn_w2"] = u(cfg.ffn_dim, d)
            p[f"e{i}.ffn_b2"] = u(d)
        p["enc_ln_g"] = Tensor(np.ones(d), requires_grad=True)
        p["enc_ln_b"] = Tensor(np.zeros(d), requires_grad=True)
        for i in range(cfg.n_decoder_layers):
            p[f"l{i}.xln_g"] = Tensor(np.ones(d), requires_grad=True)
            p[f"l{i}.xln_b"] = Tensor(np.zeros(d), requires_grad=True)
            for w in ("wq", "wk", "wv", "wo"):
                p[f"l{i}.x{w}"] = u(d, d)

    def _sample_feats(self, sample: TokenizedSample):
        rows = np.stack([self.extractor.features(sample.user_id, int(t))
                         for t in sample.dec_t])
        return self.stats.normalize(rows)

    def forward(self, params, ps, train_mode=False, rng=None):
        cfg = self.config
        rate = cfg.dropout_rate if train_mode else 0.0
        e = T.add(T.matmul(Tensor(ps.feats), params["feat_in_w"]),
                  params["feat_in_b"])
        e = T.dropout(e, rate, rng)
        for i in range(cfg.n_encoder_layers):
            h = T.layer_norm(e, params[f"e{i}.ln1_g"], params[f"e{i}.ln1_b"])
            a = multihead_attend(T.matmul(h, params[f"e{i}.wq"]),
                                 T.matmul(h, params[f"e{i}.wk"]),
                                 T.matmul(h, params[f"e{i}.wv"]),
                                 n_heads=cfg.n_heads, mask=ps.time_mask)
            e = T.add(e, T.dropout(T.matmul(a, params[f"e{i}.wo"]), rate, rng))
            h = T.layer_norm(e, params[f"e{i}.ln2_g"], params[f"e{i}.ln2_b"])
            f = T.add(T.matmul(T.relu(T.add(T.matmul(h, params[f"e{i}.ffn_w1"]),
                                            params[f"e{i}.ffn_b1"])),
                               params[f"e{i}.ffn_w2"]), params[f"e{i}.ffn_b2"])
            e = T.add(e, T.dropout(f, rate, rng))
        enc_out = T.layer_norm(e, params["enc_ln_g"], params["enc_ln_b"])

        x = T.add(T.embedding(params["intent_emb"], ps.dec_in),
                  T.embedding(params["pos_emb"], ps.pos_ids))
        x = T.dropout(x, rate, rng)
        for i in range(cfg.n_decoder_layers):
            h = T.layer_norm(x, params[f"l{i}.ln1_g"], params[f"l{i}.ln1_b"])
            a = multihead_attend(T.matmul(h, params[f"l{i}.wq"]),
                                 T.matmul(h, params[f"l{i}.wk"]),
                                 T.matmul(h, params[f"l{i}.wv"]),
                                 n_heads=cfg.n_heads, mask=ps.pos_mask)
            x = T.add(x, T.dropout(T.matmul(a, params[f"l{i}.wo"]), rate, rng))
            h = T.layer_norm(x, params[f"l{i}.xln_g"], params[f"l{i}.xln_b"])
            a = multihead_attend(T.matmul(h, params[f"l{i}.xwq"]),
                                 T.matmul(enc_out, params[f"l{i}.xwk"]),
                                 T.matmul(enc_out, params[f"l{i}.xwv"]),
                                 n_heads=cfg.n_heads, mask=ps.time_mask)
            x = T.add(x, T.dropout(T.matmul(a, params[f"l{i}.xwo"]), rate, rng))
            h = T.layer_norm(x, params[f"l{i}.ln2_g"], params[f"l{i}.ln2_b"])
            f = T.add(T.matmul(T.relu(T.add(T.matmul(h, params[f"l{i}.ffn_w1"]),
                                            params[f"l{i}.ffn_b1"])),
                               params[f"l{i}.ffn_w2"]), params[f"l{i}.ffn_b2"])
            x = T.add(x, T.dropout(f, rate, rng))
        h = T.layer_norm(x, params["out_ln_g"], params["out_ln_b"])
        return T.add(T.matmul(h, params["head_w"]), params["head_b"])
