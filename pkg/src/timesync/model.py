"""The full intent-prediction network.

Encoder input fuses field-value, field-name, product, and calendar-time
embeddings; both stacks use time-biased attention under timestamp causal
masks; the decoder cross-attends into the encoded context and its output is
fused with point-in-time product ownership before classification. Every
feature is individually toggleable for the ablation harness.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from . import tensor as T
from .attention import TimeAliBiConfig, default_slopes, multihead_attend, \
    temporal_causal_mask, time_delta_matrix
from .pipeline import PreparedData, TokenizedSample
from .rng import make_rng
from .tensor import Tensor
from .timecal import calendar_components

TIME_TABLE_SIZES = (7, 5, 24)


@dataclass
class AblationFlags:
    decoder_time_encoder: bool = True
    decoder_timealibi_self: bool = True
    decoder_timealibi_cross: bool = True
    decoder_product_fusion: bool = True
    encoder_field_name_emb: bool = True
    encoder_time_encoder: bool = True
    encoder_timealibi_self: bool = True
    encoder_product_emb: bool = True

    def with_off(self, name: str) -> "AblationFlags":
        if name not in {f.name for f in dc_fields(self)}:
            raise ValueError(f"unknown ablation flag {name!r}")
        kw = {f.name: getattr(self, f.name) for f in dc_fields(self)}
        kw[name] = False
        return AblationFlags(**kw)

    @classmethod
    def all_off(cls) -> "AblationFlags":
        return cls(**{f.name: False for f in dc_fields(cls)})


ABLATION_ROWS = (
    ("decoder", "decoder_time_encoder"),
    ("decoder", "decoder_timealibi_self"),
    ("decoder", "decoder_timealibi_cross"),
    ("decoder", "decoder_product_fusion"),
    ("encoder", "encoder_field_name_emb"),
    ("encoder", "encoder_time_encoder"),
    ("encoder", "encoder_timealibi_self"),
    ("encoder", "encoder_product_emb"),
)


@dataclass
class ModelConfig:
    fv_vocab_size: int
    fn_vocab_size: int
    intent_vocab_size: int
    product_vocab_size: int
    n_products: int
    d_model: int = 64
    n_heads: int = 4
    n_encoder_layers: int = 2
    n_decoder_layers: int = 2
    ffn_dim: int = 128
    dropout_rate: float = 0.1
    max_enc_len: int = 256
    max_dec_len: int = 128
    time_table_sizes: tuple[int, int, int] = TIME_TABLE_SIZES
    alibi: TimeAliBiConfig = None
    flags: AblationFlags = field(default_factory=AblationFlags)

    def __post_init__(self):
        if self.alibi is None:
            self.alibi = TimeAliBiConfig(n_heads=self.n_heads,
                                         slopes=default_slopes(self.n_heads))
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError(f"dropout_rate {self.dropout_rate} not in [0, 1)")
        if self.alibi.n_heads != self.n_heads:
            raise ValueError("time-bias config head count disagrees with model")

    @classmethod
    def for_data(cls, prep: PreparedData, **overrides) -> "ModelConfig":
        max_dec = max((len(s.dec_t) for split in prep.splits.values()
                       for s in split), default=8) + 1
        kw = dict(
            fv_vocab_size=prep.vocabs.field_values.size,
            fn_vocab_size=prep.vocabs.field_names.size,
            intent_vocab_size=prep.vocabs.intents.size,
            product_vocab_size=prep.vocabs.products.size,
            n_products=len(prep.product_order),
            max_enc_len=prep.max_enc_len,
            max_dec_len=max_dec)
        kw.update(overrides)
        return cls(**kw)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def init_params(config: ModelConfig, seed: int) -> dict[str, Tensor]:
    """Uniform(-1/sqrt(d), 1/sqrt(d)) tables and weights; identity norms."""
    rng = make_rng(seed, 2)
    d, f = config.d_model, config.ffn_dim
    bound = 1.0 / math.sqrt(d)

    def u(*shape):
        return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)

    def norm_pair(params, name):
        params[f"{name}_g"] = Tensor(np.ones(d), requires_grad=True)
        params[f"{name}_b"] = Tensor(np.zeros(d), requires_grad=True)

    p: dict[str, Tensor] = {}
    p["fv_emb"] = u(config.fv_vocab_size, d)
    p["fn_emb"] = u(config.fn_vocab_size, d)
    p["prod_emb"] = u(config.product_vocab_size, d)
    p["intent_emb"] = u(config.intent_vocab_size, d)
    for name, size in zip(("dow_emb", "wom_emb", "hod_emb"), config.time_table_sizes):
        p[name] = u(size, d)
    for i in range(config.n_encoder_layers):
        norm_pair(p, f"enc{i}.ln1")
        for w in ("wq", "wk", "wv", "wo"):
            p[f"enc{i}.attn_{w}"] = u(d, d)
        norm_pair(p, f"enc{i}.ln2")
        p[f"enc{i}.ffn_w1"] = u(d, f)
        p[f"enc{i}.ffn_b1"] = u(f)
        p[f"enc{i}.ffn_w2"] = u(f, d)
        p[f"enc{i}.ffn_b2"] = u(d)
    norm_pair(p, "enc_out_ln")
    for i in range(config.n_decoder_layers):
        norm_pair(p, f"dec{i}.ln1")
        for w in ("wq", "wk", "wv", "wo"):
            p[f"dec{i}.self_{w}"] = u(d, d)
        norm_pair(p, f"dec{i}.ln2")
        for w in ("wq", "wk", "wv", "wo"):
            p[f"dec{i}.cross_{w}"] = u(d, d)
        norm_pair(p, f"dec{i}.ln3")
        p[f"dec{i}.ffn_w1"] = u(d, f)
        p[f"dec{i}.ffn_b1"] = u(f)
        p[f"dec{i}.ffn_w2"] = u(f, d)
        p[f"dec{i}.ffn_b2"] = u(d)
    norm_pair(p, "dec_out_ln")
    p["fuse_w"] = u(config.n_products, d)
    p["fuse_b"] = u(d)
    p["fuse_proj"] = u(2 * d, d)
    p["fuse_proj_b"] = u(d)
    p["head_w"] = u(d, config.intent_vocab_size)
    p["head_b"] = u(config.intent_vocab_size)
    return p


# ---------------------------------------------------------------------------
# per-sample constants (masks, time deltas, calendar indices, targets)
# ---------------------------------------------------------------------------

@dataclass
class PreparedSample:
    user_id: str
    enc_fv: np.ndarray
    enc_fn: np.ndarray
    enc_p: np.ndarray
    dec_in: np.ndarray
    targets: np.ndarray
    n_supervised: int
    enc_time_idx: tuple[np.ndarray, np.ndarray, np.ndarray]
    enc_time_mask: np.ndarray  # [n, 1]; zero at the BOS sentinel
    dec_time_idx: tuple[np.ndarray, np.ndarray, np.ndarray]
    enc_mask: np.ndarray
    dec_mask: np.ndarray
    cross_mask: np.ndarray
    enc_delta: np.ndarray
    dec_delta: np.ndarray
    cross_delta: np.ndarray
    ownership: np.ndarray
    dec_t: np.ndarray
    supervised: np.ndarray


def _calendar_idx(ts: np.ndarray):
    finite = np.where(np.isfinite(ts), ts, 0.0).astype(np.int64)
    return calendar_components(finite)


def prepare_sample(sample: TokenizedSample, config: ModelConfig) -> PreparedSample:
    m = len(sample.dec_t)
    dec_in = np.empty(m, dtype=np.int64)
    dec_in[0] = 1  # BOS
    dec_in[1:] = sample.dec_y[:-1]
    targets = np.where(sample.dec_supervised, sample.dec_y, T.IGNORE_INDEX)
    ab = config.alibi
    enc_t, dec_t = sample.enc_t, sample.dec_t
    return PreparedSample(
        user_id=sample.user_id,
        enc_fv=sample.enc_fv, enc_fn=sample.enc_fn, enc_p=sample.enc_p,
        dec_in=dec_in, targets=targets,
        n_supervised=int(sample.dec_supervised.sum()),
        enc_time_idx=_calendar_idx(enc_t),
        enc_time_mask=np.isfinite(enc_t).astype(np.float64)[:, None],
        dec_time_idx=_calendar_idx(dec_t),
        enc_mask=temporal_causal_mask(enc_t, enc_t, strict=False),
        dec_mask=temporal_causal_mask(dec_t, dec_t, strict=False),
        cross_mask=temporal_causal_mask(dec_t, enc_t, strict=True),
        enc_delta=time_delta_matrix(enc_t, enc_t, ab.delta_transform,
                                    ab.time_unit_seconds),
        dec_delta=time_delta_matrix(dec_t, dec_t, ab.delta_transform,
                                    ab.time_unit_seconds),
        cross_delta=time_delta_matrix(dec_t, enc_t, ab.delta_transform,
                                      ab.time_unit_seconds),
        ownership=sample.dec_product_onehot,
        dec_t=dec_t,
        supervised=sample.dec_supervised.copy())


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def time_encode(params: dict[str, Tensor], timestamp: float | int,
                d_model: int) -> Tensor:
    """Calendar embedding sum for one timestamp; sentinel maps to zeros."""
    if not math.isfinite(timestamp):
        return Tensor(np.zeros(d_model))
    dow, wom, hod = calendar_components(np.array([int(timestamp)]))
    v = T.add(T.add(T.embedding(params["dow_emb"], dow),
                    T.embedding(params["wom_emb"], wom)),
              T.embedding(params["hod_emb"], hod))
    return T.reshape(v, (d_model,))


def _time_vec(params, idx3, mask=None) -> Tensor:
    dow, wom, hod = idx3
    v = T.add(T.add(T.embedding(params["dow_emb"], dow),
                    T.embedding(params["wom_emb"], wom)),
              T.embedding(params["hod_emb"], hod))
    if mask is not None:
        v = T.mul(v, Tensor(mask))
    return v


def _mha(params, prefix, q_in, kv_in, n_heads, delta, slopes, mask, bias_after):
    out = multihead_attend(
        T.matmul(q_in, params[f"{prefix}_wq"]),
        T.matmul(kv_in, params[f"{prefix}_wk"]),
        T.matmul(kv_in, params[f"{prefix}_wv"]),
        n_heads=n_heads, delta=delta, slopes=slopes, mask=mask,
        bias_after_scale=bias_after)
    return T.matmul(out, params[f"{prefix}_wo"])


def _ffn(params, prefix, x):
    h = T.add(T.matmul(x, params[f"{prefix}_w1"]), params[f"{prefix}_b1"])
    return T.add(T.matmul(T.relu(h), params[f"{prefix}_w2"]), params[f"{prefix}_b2"])


def _ln(params, name, x):
    return T.layer_norm(x, params[f"{name}_g"], params[f"{name}_b"])


def encode_context(params, config: ModelConfig, ps: PreparedSample,
                   dropout_rate: float = 0.0, rng=None) -> Tensor:
    flags = config.flags
    x = T.embedding(params["fv_emb"], ps.enc_fv)
    if flags.encoder_field_name_emb:
        x = T.add(x, T.embedding(params["fn_emb"], ps.enc_fn))
    if flags.encoder_product_emb:
        x = T.add(x, T.embedding(params["prod_emb"], ps.enc_p))
    if flags.encoder_time_encoder:
        x = T.add(x, _time_vec(params, ps.enc_time_idx, ps.enc_time_mask))
    x = T.dropout(x, dropout_rate, rng)
    delta = ps.enc_delta if flags.encoder_timealibi_self else None
    slopes = config.alibi.slopes if flags.encoder_timealibi_self else None
    for i in range(config.n_encoder_layers):
        h = _ln(params, f"enc{i}.ln1", x)
        a = _mha(params, f"enc{i}.attn", h, h, config.n_heads,
                 delta, slopes, ps.enc_mask, config.alibi.bias_after_scale)
        x = T.add(x, T.dropout(a, dropout_rate, rng))
        f = _ffn(params, f"enc{i}.ffn", _ln(params, f"enc{i}.ln2", x))
        x = T.add(x, T.dropout(f, dropout_rate, rng))
    return _ln(params, "enc_out_ln", x)


def decode_intents(params, config: ModelConfig, ps: PreparedSample,
                   encoder_out: Tensor, dropout_rate: float = 0.0,
                   rng=None) -> Tensor:
    flags = config.flags
    y = T.embedding(params["intent_emb"], ps.dec_in)
    if flags.decoder_time_encoder:
        y = T.add(y, _time_vec(params, ps.dec_time_idx))
    y = T.dropout(y, dropout_rate, rng)
    self_delta = ps.dec_delta if flags.decoder_timealibi_self else None
    self_slopes = config.alibi.slopes if flags.decoder_timealibi_self else None
    cross_delta = ps.cross_delta if flags.decoder_timealibi_cross else None
    cross_slopes = config.alibi.slopes if flags.decoder_timealibi_cross else None
    for i in range(config.n_decoder_layers):
        h = _ln(params, f"dec{i}.ln1", y)
        a = _mha(params, f"dec{i}.self", h, h, config.n_heads,
                 self_delta, self_slopes, ps.dec_mask,
                 config.alibi.bias_after_scale)
        y = T.add(y, T.dropout(a, dropout_rate, rng))
        a = _mha(params, f"dec{i}.cross", _ln(params, f"dec{i}.ln2", y),
                 encoder_out, config.n_heads, cross_delta, cross_slopes,
                 ps.cross_mask, config.alibi.bias_after_scale)
        y = T.add(y, T.dropout(a, dropout_rate, rng))
        f = _ffn(params, f"dec{i}.ffn", _ln(params, f"dec{i}.ln3", y))
        y = T.add(y, T.dropout(f, dropout_rate, rng))
    return _ln(params, "dec_out_ln", y)


def fuse_product(params, config: ModelConfig, decoder_out: Tensor,
                 ownership: np.ndarray) -> Tensor:
    """Dense(ownership) concatenated with the decoder output, projected back."""
    if not config.flags.decoder_product_fusion:
        return decoder_out
    own = T.add(T.matmul(Tensor(ownership), params["fuse_w"]), params["fuse_b"])
    fused = T.concat_lastdim(decoder_out, own)
    return T.add(T.matmul(fused, params["fuse_proj"]), params["fuse_proj_b"])


def predict_logits(params, config: ModelConfig, ps: PreparedSample,
                   train_mode: bool = False, rng=None) -> Tensor:
    rate = config.dropout_rate if train_mode else 0.0
    enc = encode_context(params, config, ps, rate, rng)
    dec = decode_intents(params, config, ps, enc, rate, rng)
    out = fuse_product(params, config, dec, ps.ownership)
    return T.add(T.matmul(out, params["head_w"]), params["head_b"])


class TimesyncModel:
    """Forward interface shared with the baseline ladder."""

    name = "timesync"

    def __init__(self, config: ModelConfig):
        self.config = config

    def init_params(self, seed: int) -> dict[str, Tensor]:
        return init_params(self.config, seed)

    def prepare(self, samples: list[TokenizedSample]) -> list[PreparedSample]:
        return [prepare_sample(s, self.config) for s in samples]

    def forward(self, params, ps: PreparedSample, train_mode: bool = False,
                rng=None) -> Tensor:
        return predict_logits(params, self.config, ps, train_mode, rng)


# ---------------------------------------------------------------------------
# checkpoints: flat binary parameter blob + plain-text index + manifest
# ---------------------------------------------------------------------------

def save_checkpoint(out_dir, params: dict[str, Tensor], manifest: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    offset = 0
    index_lines = []
    with open(out / "params.bin", "wb") as fh:
        for name in sorted(params):
            arr = params[name].data
            raw = arr.astype("<f8").tobytes()
            fh.write(raw)
            shape = ",".join(str(x) for x in arr.shape) or "scalar"
            index_lines.append(f"{name} {offset} {arr.size} {shape}")
            offset += len(raw)
    (out / "params.idx").write_text("\n".join(index_lines) + "\n")
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(ckpt_dir) -> tuple[dict[str, Tensor], dict]:
    ckpt = Path(ckpt_dir)
    blob = (ckpt / "params.bin").read_bytes()
    params: dict[str, Tensor] = {}
    for line in (ckpt / "params.idx").read_text().splitlines():
        name, offset, size, shape = line.split()
        offset, size = int(offset), int(size)
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
        if shape != "scalar":
            arr = arr.reshape(tuple(int(x) for x in shape.split(",")))
        params[name] = Tensor(arr.copy(), requires_grad=True)
    with open(ckpt / "manifest.json") as fh:
        manifest = json.load(fh)
    return params, manifest
