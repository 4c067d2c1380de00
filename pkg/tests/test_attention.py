import numpy as np
import pytest

from timesync import attention as A
from timesync import tensor as T
from timesync.gradcheck import grad_check
from timesync.rng import make_rng


def test_zero_slope_gives_zero_bias():
    bias = A.time_alibi_bias([1.0, 5.0], [0.0, 3.0], slope=0.0)
    assert np.all(bias == 0.0)


def test_bias_hand_case():
    bias = A.time_alibi_bias([2.0], [0.0, 2.0], slope=-1.0,
                             delta_transform="linear", time_unit=1.0)
    assert bias.tolist() == [[-2.0, 0.0]]


def test_bias_depends_only_on_deltas():
    t_q = np.array([10.0, 400.0, 86400.0])
    t_k = np.array([0.0, 86400.0 * 3])
    for c in (12345.0, -999.0):
        b0 = A.time_alibi_bias(t_q, t_k, -0.5, "log1p", 86400.0)
        b1 = A.time_alibi_bias(t_q + c, t_k + c, -0.5, "log1p", 86400.0)
        assert np.array_equal(b0, b1)


def test_bias_zero_at_sentinel():
    bias = A.time_alibi_bias([-np.inf, 5.0], [-np.inf, 3.0], slope=-1.0)
    assert bias[0, 0] == 0.0 and bias[0, 1] == 0.0 and bias[1, 0] == 0.0
    assert bias[1, 1] == -2.0


def test_mask_inclusive_and_strict():
    inclusive = A.temporal_causal_mask([5.0], [3.0, 5.0, 7.0], strict=False)
    assert inclusive.tolist() == [[True, True, False]]
    strict = A.temporal_causal_mask([5.0], [3.0, 5.0, 7.0], strict=True)
    assert strict.tolist() == [[True, False, False]]


def test_mask_sentinel_always_allowed():
    strict = A.temporal_causal_mask([1.0], [-np.inf, 1.0, 2.0], strict=True)
    assert strict.tolist() == [[True, False, False]]


def test_mask_matches_bruteforce_oracle():
    rng = make_rng(17)
    t_q = rng.integers(0, 50, size=9).astype(float)
    t_k = rng.integers(0, 50, size=13).astype(float)
    t_k[0] = -np.inf
    for strict in (False, True):
        mask = A.temporal_causal_mask(t_q, t_k, strict)
        for i in range(9):
            for j in range(13):
                if np.isneginf(t_k[j]):
                    want = True
                elif strict:
                    want = t_k[j] < t_q[i]
                else:
                    want = t_k[j] <= t_q[i]
                assert mask[i, j] == want


def test_attend_single_key_returns_value_row():
    rng = make_rng(19)
    q = T.Tensor(rng.normal(size=(3, 4)))
    k = T.Tensor(rng.normal(size=(1, 4)))
    v = T.Tensor(rng.normal(size=(1, 4)))
    out = A.attend(q, k, v, bias=np.full((3, 1), -7.0))
    assert np.abs(out.data - v.data[0]).max() < 1e-15


def test_attend_hand_weights():
    # zero q.k scores, bias [-2, 0], d_k = 1 -> weights [0.1192, 0.8808]
    q = T.Tensor([[0.0]])
    k = T.Tensor([[0.0], [0.0]])
    v = T.Tensor([[1.0], [0.0]])
    out = A.attend(q, k, v, bias=np.array([[-2.0, 0.0]]))
    assert abs(out.data[0, 0] - 0.1192) < 1e-4


def test_attend_mask_blocking_all_but_one():
    rng = make_rng(29)
    q = T.Tensor(rng.normal(size=(2, 4)))
    k = T.Tensor(rng.normal(size=(5, 4)))
    v = T.Tensor(rng.normal(size=(5, 4)))
    mask = np.zeros((2, 5), dtype=bool)
    mask[0, 3] = True
    mask[1, 1] = True
    out = A.attend(q, k, v, mask=mask)
    assert np.abs(out.data[0] - v.data[3]).max() < 1e-15
    assert np.abs(out.data[1] - v.data[1]).max() < 1e-15


def test_attend_bias_placement_flag_changes_result():
    rng = make_rng(31)
    q = T.Tensor(rng.normal(size=(2, 4)))
    k = T.Tensor(rng.normal(size=(3, 4)))
    v = T.Tensor(rng.normal(size=(3, 4)))
    bias = rng.normal(size=(2, 3))
    inside = A.attend(q, k, v, bias=bias, bias_after_scale=False)
    after = A.attend(q, k, v, bias=bias, bias_after_scale=True)
    assert np.abs(inside.data - after.data).max() > 1e-6


def test_multihead_single_head_equals_attend():
    rng = make_rng(37)
    q = T.Tensor(rng.normal(size=(4, 6)))
    k = T.Tensor(rng.normal(size=(5, 6)))
    v = T.Tensor(rng.normal(size=(5, 6)))
    delta = rng.normal(size=(4, 5))
    got = A.multihead_attend(q, k, v, n_heads=1, delta=delta,
                             slopes=np.array([1.0]))
    want = A.attend(q, k, v, bias=delta)
    assert np.array_equal(got.data, want.data)


def test_distinct_slopes_make_heads_differ():
    rng = make_rng(39)
    half = rng.normal(size=(4, 3))
    q = T.Tensor(np.concatenate([half, half], axis=1))
    k = T.Tensor(np.tile(rng.normal(size=(6, 3)), (1, 2)))
    v = T.Tensor(np.tile(rng.normal(size=(6, 3)), (1, 2)))
    t_q = np.array([10.0, 20.0, 30.0, 40.0])
    t_k = np.array([1.0, 5.0, 9.0, 15.0, 25.0, 35.0])
    delta = A.time_delta_matrix(t_q, t_k, "linear", 1.0)
    mask = A.temporal_causal_mask(t_q, t_k, strict=False)
    out = A.multihead_attend(q, k, v, n_heads=2, delta=delta,
                             slopes=np.array([-0.1, -1.0]), mask=mask)
    assert np.abs(out.data[:, :3] - out.data[:, 3:]).max() > 1e-6


def test_multi_head_wrapper_matches_manual_composition():
    rng = make_rng(43)
    cfg = A.TimeAliBiConfig(n_heads=2, slopes=np.array([-0.25, -0.0625]),
                            delta_transform="linear", time_unit_seconds=1.0)
    x = T.Tensor(rng.normal(size=(5, 8)))
    wq, wk, wv, wo = (T.Tensor(rng.normal(size=(8, 8))) for _ in range(4))
    t = np.array([1.0, 2.0, 5.0, 5.0, 9.0])
    got = A.multi_head(x, x, x, t, t, cfg, False, wq, wk, wv, wo)
    delta = A.time_delta_matrix(t, t, "linear", 1.0)
    mask = A.temporal_causal_mask(t, t, strict=False)
    inner = A.multihead_attend(T.matmul(x, wq), T.matmul(x, wk), T.matmul(x, wv),
                               n_heads=2, delta=delta, slopes=cfg.slopes, mask=mask)
    want = T.matmul(inner, wo)
    assert np.array_equal(got.data, want.data)


def test_time_shift_leaves_attention_bit_identical():
    rng = make_rng(47)
    q = T.Tensor(rng.normal(size=(4, 8)))
    k = T.Tensor(rng.normal(size=(6, 8)))
    v = T.Tensor(rng.normal(size=(6, 8)))
    t_q = np.array([100.0, 2000.0, 86000.0, 90000.0])
    t_k = np.array([-np.inf, 50.0, 1500.0, 3000.0, 87000.0, 95000.0])

    def run(shift):
        delta = A.time_delta_matrix(t_q + shift, np.where(np.isneginf(t_k), t_k, t_k + shift),
                                    "log1p", 3600.0)
        mask = A.temporal_causal_mask(t_q + shift,
                                      np.where(np.isneginf(t_k), t_k, t_k + shift),
                                      strict=True)
        return A.multihead_attend(q, k, v, n_heads=2, delta=delta,
                                  slopes=np.array([-0.3, -0.7]), mask=mask).data

    assert np.array_equal(run(0.0), run(777777.0))


def test_zero_slope_matches_vanilla_masked_attention():
    rng = make_rng(53)
    q = T.Tensor(rng.normal(size=(5, 8)))
    k = T.Tensor(rng.normal(size=(7, 8)))
    v = T.Tensor(rng.normal(size=(7, 8)))
    t_q = np.arange(5.0) * 10
    t_k = np.arange(7.0) * 7
    delta = A.time_delta_matrix(t_q, t_k, "log1p", 1.0)
    mask = A.temporal_causal_mask(t_q, t_k, strict=False)
    biased = A.multihead_attend(q, k, v, n_heads=2, delta=delta,
                                slopes=np.zeros(2), mask=mask)
    vanilla = A.multihead_attend(q, k, v, n_heads=2, mask=mask)
    assert np.abs(biased.data - vanilla.data).max() < 1e-9


def test_causality_exhaustive_perturbation():
    rng = make_rng(59)
    n_q, n_k, d = 6, 8, 4
    q = rng.normal(size=(n_q, d))
    t_q = np.sort(rng.integers(0, 40, size=n_q)).astype(float)
    t_k = np.sort(rng.integers(0, 40, size=n_k)).astype(float)
    t_k[0] = -np.inf
    for strict in (False, True):
        mask = A.temporal_causal_mask(t_q, t_k, strict)
        delta = A.time_delta_matrix(t_q, t_k, "log1p", 5.0)
        k0 = rng.normal(size=(n_k, d))
        v0 = rng.normal(size=(n_k, d))
        base = A.multihead_attend(T.Tensor(q), T.Tensor(k0), T.Tensor(v0),
                                  n_heads=2, delta=delta,
                                  slopes=np.array([-0.2, -0.6]), mask=mask).data
        for j in range(n_k):
            k1 = k0.copy()
            v1 = v0.copy()
            k1[j] += rng.normal(size=d) * 10
            v1[j] += rng.normal(size=d) * 10
            got = A.multihead_attend(T.Tensor(q), T.Tensor(k1), T.Tensor(v1),
                                     n_heads=2, delta=delta,
                                     slopes=np.array([-0.2, -0.6]), mask=mask).data
            for i in range(n_q):
                if not mask[i, j]:
                    assert np.array_equal(got[i], base[i])


def test_monotone_weights_under_equal_content():
    # identical keys, uniform scores: older keys never get more weight
    n_k, d = 6, 6
    key_row = np.ones(d) * 0.3
    k = T.Tensor(np.tile(key_row, (n_k, 1)))
    v = T.Tensor(np.eye(n_k))
    q = T.Tensor(np.ones((1, d)))
    t_k = np.array([0.0, 100.0, 500.0, 5000.0, 50000.0, 100000.0])
    for transform in ("linear", "log1p"):
        delta = A.time_delta_matrix(np.array([100000.0]), t_k, transform, 1000.0)
        weights = A.attend(q, k, T.Tensor(np.eye(n_k)), bias=-0.8 * delta).data[0]
        assert np.all(np.diff(weights) >= 0)  # keys ordered old -> new


def test_multihead_gradcheck():
    rng = make_rng(61)
    q = T.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    kv = T.Tensor(rng.normal(size=(5, 4)), requires_grad=True)
    t_q = np.array([2.0, 6.0, 9.0])
    t_k = np.array([-np.inf, 1.0, 5.0, 8.0, 11.0])
    delta = A.time_delta_matrix(t_q, t_k, "log1p", 2.0)
    mask = A.temporal_causal_mask(t_q, t_k, strict=True)

    def f():
        out = A.multihead_attend(q, kv, kv, n_heads=2, delta=delta,
                                 slopes=np.array([-0.25, -0.5]), mask=mask)
        return T.tsum(T.mul(out, out))

    assert grad_check(f, {"q": q, "kv": kv}, h=1e-5) < 1e-6


def test_config_validation():
    with pytest.raises(ValueError):
        A.TimeAliBiConfig(n_heads=2, slopes=np.array([-0.5, 0.5]))
    with pytest.raises(ValueError):
        A.TimeAliBiConfig(n_heads=2, slopes=np.array([-0.5, -0.5]))
    with pytest.raises(ValueError):
        A.TimeAliBiConfig(n_heads=1, slopes=np.array([-0.5]), delta_transform="exp")
    cfg = A.TimeAliBiConfig()
    assert cfg.slopes.tolist() == [-0.25, -0.0625, -0.015625, -0.00390625]
