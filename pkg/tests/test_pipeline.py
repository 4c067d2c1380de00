import bisect
import json
import math

import numpy as np
import pytest

from timesync import journey as J
from timesync import pipeline as P
from timesync.rng import make_rng


def _ev(uid, domain, product, t, fname, fval):
    return J.ContextEvent(uid, domain, product, t, fname, fval)


def _numeric_events(values, domain="transactions", fname="amount"):
    return [_ev("u0", domain, "card_a", i + 1, fname, float(v))
            for i, v in enumerate(values)]


def test_binner_single_bin_has_no_edges():
    binner = P.fit_binner(_numeric_events([3.0, 9.0, 1.0]), n_bins=1)
    assert binner.edges[("transactions", "amount")].size == 0
    assert binner.bin_of("transactions", "amount", 1e9) == 0


def test_binner_on_1_to_100():
    binner = P.fit_binner(_numeric_events(range(1, 101)), n_bins=4)
    assert binner.bin_of("transactions", "amount", 10.0) == 0
    assert binner.bin_of("transactions", "amount", 99.0) == 3


def test_binner_identical_values_collapse():
    binner = P.fit_binner(_numeric_events([7.0] * 20), n_bins=5)
    assert binner.edges[("transactions", "amount")].size == 1
    # every non-edge value still lands in a single usable bin
    assert binner.bin_of("transactions", "amount", 3.0) == 0
    assert binner.bin_of("transactions", "amount", 9.0) == 1


def test_binner_rejects_zero_bins():
    with pytest.raises(J.ConfigError):
        P.fit_binner(_numeric_events([1.0]), n_bins=0)


def _oracle_edges(values, n_bins):
    """Sort-and-split oracle: edge i is the smallest value whose cumulative
    count covers the first i chunks of ceil(i*n/n_bins) values."""
    s = sorted(values)
    n = len(s)
    edges = []
    for i in range(1, n_bins):
        need = math.ceil(i * n / n_bins)
        best = s[-1]
        for x in sorted(set(s)):
            if bisect.bisect_right(s, x) >= need:
                best = x
                break
        edges.append(best)
    return np.unique(np.array(edges, dtype=np.float64))


def test_binner_matches_sort_and_split_oracle_on_1000_distributions():
    rng = make_rng(77)
    for trial in range(1000):
        kind = trial % 5
        n = int(rng.integers(1, 60))
        if kind == 0:
            values = rng.normal(size=n) * 10
        elif kind == 1:
            values = np.exp(rng.normal(size=n))
        elif kind == 2:
            values = rng.integers(0, 5, size=n).astype(float)
        elif kind == 3:
            values = np.full(n, float(rng.integers(0, 9)))
        else:
            values = rng.uniform(-1, 1, size=n)
        n_bins = int(rng.integers(1, 9))
        binner = P.fit_binner(_numeric_events(values), n_bins)
        got = binner.edges[("transactions", "amount")]
        want = (_oracle_edges(values, n_bins) if n_bins > 1
                else np.array([], dtype=np.float64))
        assert np.array_equal(got, want), (trial, values[:5], n_bins)


def test_discretize_string_passthrough():
    binner = P.QuantileBinner(n_bins=4)
    tok = P.discretize(binner, "transactions", "merchant", "grocer_7")
    assert tok == "transactions/merchant=grocer_7"


def test_discretize_edge_value_goes_to_higher_bin():
    binner = P.fit_binner(_numeric_events(range(1, 101)), n_bins=4)
    edges = binner.edges[("transactions", "amount")]
    k_at_edge = binner.bin_of("transactions", "amount", float(edges[0]))
    k_below = binner.bin_of("transactions", "amount", float(edges[0]) - 1e-9)
    assert k_at_edge == k_below + 1
    assert P.discretize(binner, "transactions", "amount", float(edges[0])) == \
        f"transactions/amount=bin{k_at_edge}"


def test_discretize_unknown_field_is_unk():
    binner = P.QuantileBinner(n_bins=4)
    assert P.discretize(binner, "transactions", "amount", 5.0) == P.UNK_TOKEN


def _vocabs_for(events, binner, products=("card_a",)):
    samples = [P.RawSample("u0", list(events), [], -math.inf, math.inf)]
    return P.build_vocab(samples, binner, sorted(products))


def test_flatten_one_event_two_fields():
    events = [_ev("u0", "transactions", "card_a", 50, "amount", 12.0),
              _ev("u0", "transactions", "card_a", 50, "channel", "pos")]
    binner = P.fit_binner(events, 4)
    vocabs = _vocabs_for(events, binner)
    enc_t, enc_fn, enc_fv, enc_p = P.flatten_context(events, binner, vocabs)
    assert len(enc_t) == 3
    assert np.isneginf(enc_t[0]) and enc_fn[0] == P.BOS_ID and enc_fv[0] == P.BOS_ID


def test_flatten_interleaves_domains_by_timestamp():
    events = [_ev("u0", "payments", "card_a", 100, "method", "autopay"),
              _ev("u0", "transactions", "card_a", 50, "channel", "pos"),
              _ev("u0", "payments", "card_a", 10, "method", "manual"),
              _ev("u0", "transactions", "card_a", 70, "channel", "atm")]
    binner = P.QuantileBinner(n_bins=4)
    vocabs = _vocabs_for(events, binner)
    enc_t, _, enc_fv, _ = P.flatten_context(events, binner, vocabs)
    assert enc_t[1:].tolist() == [10.0, 50.0, 70.0, 100.0]
    toks = [vocabs.field_values.decode(i) for i in enc_fv[1:]]
    assert toks[0].startswith("payments/") and toks[1].startswith("transactions/")


def test_flatten_tie_break_is_deterministic():
    events = [_ev("u0", "transactions", "card_a", 10, "channel", "pos"),
              _ev("u0", "payments", "card_a", 10, "method", "autopay"),
              _ev("u0", "payments", "card_a", 10, "amount", 44.0),
              _ev("u0", "payments", "card_a", 10, "amount", 2.0)]
    binner = P.fit_binner(events, 2)
    vocabs = _vocabs_for(events, binner)
    first = P.flatten_context(events, binner, vocabs)
    again = P.flatten_context(events, binner, vocabs)
    for a, b in zip(first, again):
        assert np.array_equal(a, b)
    toks = [vocabs.field_values.decode(i) for i in first[2][1:]]
    # ties sort by (domain, field_name, insertion order)
    assert toks[0].startswith("payments/amount=")
    assert toks[1].startswith("payments/amount=")
    assert toks[2] == "payments/method=autopay"
    assert toks[3] == "transactions/channel=pos"
    # insertion order preserved between the two equal-key amount rows
    b44 = P.discretize(binner, "payments", "amount", 44.0)
    assert toks[0] == b44


def test_flatten_truncates_to_most_recent():
    events = [_ev("u0", "transactions", "card_a", t, "channel", "pos")
              for t in range(1, 21)]
    binner = P.QuantileBinner(n_bins=2)
    vocabs = _vocabs_for(events, binner)
    enc_t, _, _, _ = P.flatten_context(events, binner, vocabs, max_len=8)
    assert len(enc_t) == 8
    assert enc_t[1:].tolist() == [14.0, 15.0, 16.0, 17.0, 18.0, 19.0, 20.0]


def _split_fixture():
    events, intents = [], []
    for u in range(4):
        uid = f"u{u}"
        for t in (5, 20, 35, 50, 65, 80):
            events.append(_ev(uid, "transactions", "card_a", t, "channel", "pos"))
        for t in (10, 30, 55, 75, 90):
            intents.append(J.IntentRecord(uid, t, "make_payment"))
    return events, intents


def test_temporal_split_boundaries():
    events, intents = _split_fixture()
    splits = P.temporal_split(events, intents, t1=55, t2=80)
    train = splits["train"][0]
    assert [r.timestamp for r in train.intents] == [10, 30]
    val = splits["validation"][0]
    # intent exactly at t1 goes to validation; history includes earlier intents
    assert [r.timestamp for r in val.intents if val.sup_lo <= r.timestamp < val.sup_hi] == [55, 75]
    assert [r.timestamp for r in val.intents] == [10, 30, 55, 75]
    test = splits["test"][0]
    assert [r.timestamp for r in test.intents if r.timestamp >= 80] == [90]


def test_temporal_split_rejects_empty_sets():
    events, intents = _split_fixture()
    with pytest.raises(J.ConfigError):
        P.temporal_split(events, intents, t1=1000, t2=2000)
    with pytest.raises(J.ConfigError):
        P.temporal_split(events, intents, t1=60, t2=50)


def test_no_context_event_at_or_after_its_supervised_intents():
    cfg = J.default_generator_config(n_users=12, days=28)
    events, intents, _ = J.generate_journeys(cfg, seed=21)
    t1, t2 = 18 * 86400, 23 * 86400
    splits = P.temporal_split(events, intents, t1, t2)
    for samples in splits.values():
        for s in samples:
            last_sup = max(r.timestamp for r in s.intents
                           if s.sup_lo <= r.timestamp < s.sup_hi)
            for ev in s.events:
                assert ev.timestamp < last_sup


def test_build_vocab_counts_and_unknowns():
    events = [_ev("u0", "transactions", "card_a", 1, "channel", "pos"),
              _ev("u0", "transactions", "card_a", 2, "channel", "atm"),
              _ev("u0", "transactions", "card_a", 3, "channel", "pos")]
    binner = P.QuantileBinner(n_bins=2)
    samples = [P.RawSample("u0", events, [J.IntentRecord("u0", 4, "make_payment")],
                           -math.inf, math.inf)]
    vocabs = P.build_vocab(samples, binner, ["card_a"])
    assert vocabs.field_values.size == 2 + 3  # two distinct tokens + reserved
    assert vocabs.field_names.size == 1 + 3
    assert vocabs.intents.size == 1 + 3
    assert vocabs.field_values.encode("transactions/channel=online") == P.UNK_ID
    again = P.build_vocab(samples, binner, ["card_a"])
    assert again.field_values == vocabs.field_values


def test_prepare_roundtrips_event_multiset():
    cfg = J.default_generator_config(n_users=6, days=28)
    events, intents, _ = J.generate_journeys(cfg, seed=31)
    prep = P.prepare(events, intents, cfg.products, t1=18 * 86400, t2=23 * 86400,
                     n_bins=6, max_enc_len=100000)
    by_user = {}
    for ev in events:
        by_user.setdefault(ev.user_id, []).append(ev)
    for s in prep.splits["train"]:
        last_sup = max(t for t, ok in zip(s.dec_t, s.dec_supervised) if ok)
        expected = sorted(
            (ev.domain, ev.field_name,
             P.discretize(prep.binner, ev.domain, ev.field_name,
                          ev.field_value).split("=", 1)[1],
             ev.product, ev.timestamp)
            for ev in by_user[s.user_id] if ev.timestamp < last_sup)
        assert P.detokenize_sample(s, prep.vocabs) == expected


def test_prepare_is_deterministic_and_serializable(tmp_path):
    cfg = J.default_generator_config(n_users=5, days=28)
    events, intents, _ = J.generate_journeys(cfg, seed=41)
    kw = dict(t1=18 * 86400, t2=23 * 86400, n_bins=5, max_enc_len=64)
    prep1 = P.prepare(events, intents, cfg.products, **kw)
    prep2 = P.prepare(events, intents, cfg.products, **kw)
    P.save_prepared(tmp_path / "a", prep1)
    P.save_prepared(tmp_path / "b", prep2)
    for name in ("train.jsonl", "validation.jsonl", "test.jsonl", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    loaded = P.load_prepared(tmp_path / "a")
    assert loaded.vocabs.field_values == prep1.vocabs.field_values
    for name in prep1.splits:
        for s1, s2 in zip(prep1.splits[name], loaded.splits[name]):
            assert s1.user_id == s2.user_id
            assert np.array_equal(s1.enc_t, s2.enc_t)
            assert np.array_equal(s1.enc_fv, s2.enc_fv)
            assert np.array_equal(s1.dec_y, s2.dec_y)
            assert np.array_equal(s1.dec_product_onehot, s2.dec_product_onehot)
            assert np.array_equal(s1.dec_supervised, s2.dec_supervised)


def test_ownership_is_point_in_time():
    events = [
        _ev("u0", J.ENROLLMENT_DOMAIN, "card_a", 0, "action", "enroll"),
        _ev("u0", J.ENROLLMENT_DOMAIN, "deposit", 500, "action", "enroll"),
        _ev("u0", "transactions", "card_a", 100, "channel", "pos"),
        _ev("u0", "transactions", "card_a", 900, "channel", "pos"),
    ]
    intents = [J.IntentRecord("u0", 400, "make_payment"),
               J.IntentRecord("u0", 600, "make_payment"),
               J.IntentRecord("u0", 950, "make_payment")]
    raw = P.RawSample("u0", events, intents, -math.inf, math.inf)
    binner = P.QuantileBinner(n_bins=2)
    vocabs = _vocabs_for(events, binner, products=("card_a", "card_b", "deposit"))
    s = P.tokenize_sample(raw, binner, vocabs, ["card_a", "card_b", "deposit"], 64)
    assert s.dec_product_onehot.tolist() == [
        [1.0, 0.0, 0.0], [1.0, 0.0, 1.0], [1.0, 0.0, 1.0]]
