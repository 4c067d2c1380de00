"""Raw journeys -> model-ready token sequences.

Numeric fields are quantile-discretized into string tokens, every (event,
field) observation becomes one encoder position, positions are sorted by
timestamp across domains, and users are split temporally so that the
binner and vocabularies only ever see the training window.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .journey import ENROLLMENT_DOMAIN, ConfigError, ContextEvent, IntentRecord

PAD_ID, BOS_ID, UNK_ID = 0, 1, 2
PAD_TOKEN, BOS_TOKEN, UNK_TOKEN = "<pad>", "<bos>", "<unk>"
RESERVED_TOKENS = (PAD_TOKEN, BOS_TOKEN, UNK_TOKEN)

DEFAULT_N_BINS = 10
DEFAULT_MAX_ENC_LEN = 256


class Vocabulary:
    """Dense string->id map with fixed PAD/BOS/UNK ids 0/1/2."""

    def __init__(self, tokens=()):
        extra = sorted(set(tokens) - set(RESERVED_TOKENS))
        self.id_to_token = list(RESERVED_TOKENS) + extra
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}

    def encode(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def decode(self, idx: int) -> str:
        return self.id_to_token[idx]

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token


@dataclass
class VocabBundle:
    field_values: Vocabulary
    field_names: Vocabulary
    intents: Vocabulary
    products: Vocabulary


@dataclass
class QuantileBinner:
    n_bins: int
    edges: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)

    def bin_of(self, domain: str, field_name: str, value: float) -> int | None:
        e = self.edges.get((domain, field_name))
        if e is None:
            return None
        # right-closed: a value sitting exactly on an edge goes up
        return int(np.searchsorted(e, value, side="right"))


def fit_binner(events, n_bins: int) -> QuantileBinner:
    """Edges at empirical quantiles i/n_bins over training-window values.

    Duplicate edges collapse, so heavy-tailed or constant fields may end up
    with fewer effective bins. Fields with no numeric observations are
    omitted and discretize to the unknown token.
    """
    if n_bins < 1:
        raise ConfigError(f"n_bins must be >= 1, got {n_bins}")
    per_field: dict[tuple[str, str], list[float]] = {}
    for ev in events:
        if not isinstance(ev.field_value, str):
            per_field.setdefault((ev.domain, ev.field_name), []).append(
                float(ev.field_value))
    binner = QuantileBinner(n_bins=n_bins)
    for key, values in per_field.items():
        values.sort()
        n = len(values)
        idx = [min(n - 1, math.ceil(i * n / n_bins) - 1) for i in range(1, n_bins)]
        edges = np.unique(np.array([values[j] for j in idx], dtype=np.float64))
        binner.edges[key] = edges
    return binner


def discretize(binner: QuantileBinner, domain: str, field_name: str, value) -> str:
    """Token string for one field observation: `<domain>/<field>=...`."""
    if isinstance(value, str):
        return f"{domain}/{field_name}={value}"
    k = binner.bin_of(domain, field_name, float(value))
    if k is None:
        return UNK_TOKEN
    return f"{domain}/{field_name}=bin{k}"


def field_name_token(field_name: str, domain: str) -> str:
    return f"{field_name}_+_{domain}"


def flatten_context(events, binner: QuantileBinner, vocabs: VocabBundle,
                    max_len: int | None = None):
    """One user's events -> four aligned encoder arrays, sentinel first.

    One position per (event, field) observation, ordered by timestamp with
    (domain, field_name, insertion order) breaking ties. When max_len is
    given, only the most recent max_len - 1 observations are kept.
    """
    entries = sorted(
        ((ev.timestamp, ev.domain, ev.field_name, i, ev) for i, ev in enumerate(events)),
        key=lambda x: x[:4])
    if max_len is not None and len(entries) > max_len - 1:
        entries = entries[-(max_len - 1):]
    n = len(entries) + 1
    enc_t = np.empty(n, dtype=np.float64)
    enc_fn = np.empty(n, dtype=np.int64)
    enc_fv = np.empty(n, dtype=np.int64)
    enc_p = np.empty(n, dtype=np.int64)
    enc_t[0] = -np.inf
    enc_fn[0] = BOS_ID
    enc_fv[0] = BOS_ID
    enc_p[0] = BOS_ID
    for pos, (_, _, _, _, ev) in enumerate(entries, start=1):
        enc_t[pos] = ev.timestamp
        enc_fn[pos] = vocabs.field_names.encode(field_name_token(ev.field_name, ev.domain))
        enc_fv[pos] = vocabs.field_values.encode(
            discretize(binner, ev.domain, ev.field_name, ev.field_value))
        enc_p[pos] = vocabs.products.encode(ev.product)
    return enc_t, enc_fn, enc_fv, enc_p


@dataclass
class RawSample:
    """Per-user slice of one temporal split, before tokenization."""
    user_id: str
    events: list[ContextEvent]
    intents: list[IntentRecord]
    sup_lo: float  # supervised positions have sup_lo <= t < sup_hi
    sup_hi: float


def temporal_split(events, intents, t1: int, t2: int) -> dict[str, list[RawSample]]:
    """Per-user temporal split of supervision targets.

    Intents before t1 are training supervision, [t1, t2) validation,
    >= t2 test. Each sample keeps the user's full intent history up to its
    window end (teacher-forcing context) and only the events that can
    legally be attended (strictly before the last supervised intent).
    """
    if t1 >= t2:
        raise ConfigError(f"need t1 < t2, got {t1} >= {t2}")
    ev_by_user: dict[str, list[ContextEvent]] = {}
    for ev in events:
        ev_by_user.setdefault(ev.user_id, []).append(ev)
    in_by_user: dict[str, list[IntentRecord]] = {}
    for rec in intents:
        in_by_user.setdefault(rec.user_id, []).append(rec)

    windows = {"train": (-math.inf, float(t1)),
               "validation": (float(t1), float(t2)),
               "test": (float(t2), math.inf)}
    splits: dict[str, list[RawSample]] = {name: [] for name in windows}
    for uid in sorted(in_by_user):
        user_intents = in_by_user[uid]
        user_events = ev_by_user.get(uid, [])
        for name, (lo, hi) in windows.items():
            supervised = [r for r in user_intents if lo <= r.timestamp < hi]
            if not supervised:
                continue
            history = [r for r in user_intents if r.timestamp < hi]
            last_sup = max(r.timestamp for r in supervised)
            context = [e for e in user_events if e.timestamp < last_sup]
            splits[name].append(RawSample(uid, context, history, lo, hi))
    for name in ("validation", "test"):
        if not splits[name]:
            raise ConfigError(f"temporal split produced an empty {name} set "
                              f"(t1={t1}, t2={t2})")
    return splits


def build_vocab(train_samples: list[RawSample], binner: QuantileBinner,
                products) -> VocabBundle:
    """Vocabularies over tokens observed in the training split."""
    fv, fn, it = set(), set(), set()
    for sample in train_samples:
        for ev in sample.events:
            fv.add(discretize(binner, ev.domain, ev.field_name, ev.field_value))
            fn.add(field_name_token(ev.field_name, ev.domain))
        for rec in sample.intents:
            it.add(rec.intent)
    return VocabBundle(field_values=Vocabulary(fv), field_names=Vocabulary(fn),
                       intents=Vocabulary(it), products=Vocabulary(products))


@dataclass
class TokenizedSample:
    """Per-user parallel sequences, ready for the model.

    Encoder arrays share length n and start with the BOS sentinel at
    timestamp -inf; decoder arrays share length m. dec_product_onehot holds
    point-in-time ownership (multi-hot over the product registry) at each
    intent's timestamp; dec_supervised marks loss positions.
    """
    user_id: str
    enc_t: np.ndarray
    enc_fn: np.ndarray
    enc_fv: np.ndarray
    enc_p: np.ndarray
    dec_t: np.ndarray
    dec_y: np.ndarray
    dec_product_onehot: np.ndarray
    dec_supervised: np.ndarray

    def __post_init__(self):
        n = len(self.enc_t)
        assert len(self.enc_fn) == len(self.enc_fv) == len(self.enc_p) == n
        m = len(self.dec_t)
        assert len(self.dec_y) == m and len(self.dec_supervised) == m
        assert self.dec_product_onehot.shape[0] == m


def tokenize_sample(raw: RawSample, binner: QuantileBinner, vocabs: VocabBundle,
                    product_order: list[str], max_enc_len: int) -> TokenizedSample:
    enc_t, enc_fn, enc_fv, enc_p = flatten_context(raw.events, binner, vocabs,
                                                   max_enc_len)
    m = len(raw.intents)
    dec_t = np.array([r.timestamp for r in raw.intents], dtype=np.float64)
    dec_y = np.array([vocabs.intents.encode(r.intent) for r in raw.intents],
                     dtype=np.int64)
    sup = np.array([raw.sup_lo <= r.timestamp < raw.sup_hi for r in raw.intents],
                   dtype=bool)
    enroll_at: dict[str, int] = {}
    for ev in raw.events:
        if ev.domain == ENROLLMENT_DOMAIN:
            enroll_at[ev.product] = min(ev.timestamp,
                                        enroll_at.get(ev.product, ev.timestamp))
    own = np.zeros((m, len(product_order)), dtype=np.float64)
    for j, prod in enumerate(product_order):
        t_e = enroll_at.get(prod)
        if t_e is not None:
            own[:, j] = dec_t > t_e
    return TokenizedSample(raw.user_id, enc_t, enc_fn, enc_fv, enc_p,
                           dec_t, dec_y, own, sup)


def detokenize_sample(sample: TokenizedSample, vocabs: VocabBundle):
    """Multiset of (domain, field, value-or-bin, product, timestamp)."""
    items = []
    for pos in range(1, len(sample.enc_t)):
        tok = vocabs.field_values.decode(int(sample.enc_fv[pos]))
        head, _, value = tok.partition("=")
        domain, _, fname = head.partition("/")
        items.append((domain, fname, value,
                      vocabs.products.decode(int(sample.enc_p[pos])),
                      int(sample.enc_t[pos])))
    return sorted(items)


@dataclass
class PreparedData:
    splits: dict[str, list[TokenizedSample]]
    binner: QuantileBinner
    vocabs: VocabBundle
    product_order: list[str]
    t1: int
    t2: int
    max_enc_len: int
    n_bins: int


def prepare(events, intents, products, t1: int, t2: int,
            n_bins: int = DEFAULT_N_BINS,
            max_enc_len: int = DEFAULT_MAX_ENC_LEN) -> PreparedData:
    """Full preprocessing: split, fit binner/vocab on train, tokenize all."""
    raw = temporal_split(events, intents, t1, t2)
    train_events = [e for e in events if e.timestamp < t1]
    binner = fit_binner(train_events, n_bins)
    product_order = sorted(products)
    vocabs = build_vocab(raw["train"], binner, product_order)
    splits = {name: [tokenize_sample(s, binner, vocabs, product_order, max_enc_len)
                     for s in samples]
              for name, samples in raw.items()}
    return PreparedData(splits=splits, binner=binner, vocabs=vocabs,
                        product_order=product_order, t1=t1, t2=t2,
                        max_enc_len=max_enc_len, n_bins=n_bins)


# ---------------------------------------------------------------------------
# artifact serialization
# ---------------------------------------------------------------------------

def _sample_to_dict(s: TokenizedSample) -> dict:
    return {
        "user_id": s.user_id,
        "enc_t": [None if math.isinf(t) else int(t) for t in s.enc_t],
        "enc_fn": s.enc_fn.tolist(),
        "enc_fv": s.enc_fv.tolist(),
        "enc_p": s.enc_p.tolist(),
        "dec_t": [int(t) for t in s.dec_t],
        "dec_y": s.dec_y.tolist(),
        "own": s.dec_product_onehot.tolist(),
        "sup": [int(x) for x in s.dec_supervised],
    }


def _sample_from_dict(d: dict) -> TokenizedSample:
    return TokenizedSample(
        user_id=d["user_id"],
        enc_t=np.array([-np.inf if t is None else float(t) for t in d["enc_t"]]),
        enc_fn=np.array(d["enc_fn"], dtype=np.int64),
        enc_fv=np.array(d["enc_fv"], dtype=np.int64),
        enc_p=np.array(d["enc_p"], dtype=np.int64),
        dec_t=np.array(d["dec_t"], dtype=np.float64),
        dec_y=np.array(d["dec_y"], dtype=np.int64),
        dec_product_onehot=np.array(d["own"], dtype=np.float64),
        dec_supervised=np.array(d["sup"], dtype=bool))


def save_prepared(out_dir, prep: PreparedData, extra_manifest: dict | None = None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, samples in prep.splits.items():
        with open(out / f"{name}.jsonl", "w") as fh:
            for s in samples:
                fh.write(json.dumps(_sample_to_dict(s), sort_keys=True) + "\n")
    manifest = {
        "t1": prep.t1, "t2": prep.t2,
        "n_bins": prep.n_bins, "max_enc_len": prep.max_enc_len,
        "products": prep.product_order,
        "binner": {f"{d}/{f}": e.tolist() for (d, f), e in
                   sorted(prep.binner.edges.items())},
        "vocab": {
            "field_values": prep.vocabs.field_values.id_to_token,
            "field_names": prep.vocabs.field_names.id_to_token,
            "intents": prep.vocabs.intents.id_to_token,
            "products": prep.vocabs.products.id_to_token,
        },
        "counts": {name: len(samples) for name, samples in prep.splits.items()},
    }
    manifest.update(extra_manifest or {})
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_prepared(prep_dir) -> PreparedData:
    prep_dir = Path(prep_dir)
    with open(prep_dir / "manifest.json") as fh:
        man = json.load(fh)
    binner = QuantileBinner(n_bins=man["n_bins"])
    for key, edges in man["binner"].items():
        domain, _, fname = key.partition("/")
        binner.edges[(domain, fname)] = np.array(edges, dtype=np.float64)

    def vocab_from(tokens):
        v = Vocabulary()
        v.id_to_token = list(tokens)
        v.token_to_id = {t: i for i, t in enumerate(v.id_to_token)}
        return v

    vocabs = VocabBundle(*(vocab_from(man["vocab"][k]) for k in
                           ("field_values", "field_names", "intents", "products")))
    splits = {}
    for name in ("train", "validation", "test"):
        samples = []
        with open(prep_dir / f"{name}.jsonl") as fh:
            for line in fh:
                samples.append(_sample_from_dict(json.loads(line)))
        splits[name] = samples
    return PreparedData(splits=splits, binner=binner, vocabs=vocabs,
                        product_order=list(man["products"]), t1=man["t1"],
                        t2=man["t2"], max_enc_len=man["max_enc_len"],
                        n_bins=man["n_bins"])
