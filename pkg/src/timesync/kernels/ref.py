"""Pure-numpy kernel backend.

Reference implementations of the hot inner loops; the compiled backend in
_ck.pyx must match these outputs to float64 roundoff. Shapes are fixed by
the callers: attention weights are [heads, n_q, n_k], layer norm runs on
[rows, width].
"""

import numpy as np

NAME = "numpy"


def bias_mask_softmax(scores, delta, slopes, mask, inv_scale, bias_after_scale):
    """Turn raw q.k scores into attention weights, in place.

    delta is a per-(query, key) time-difference matrix shared across heads;
    each head adds slopes[h] * delta before (or after) the 1/sqrt(d_k)
    scaling. Masked entries are excluded; rows with no admissible key come
    back all-zero.
    """
    if delta is not None:
        bias = slopes[:, None, None] * delta[None, :, :]
        if bias_after_scale:
            scores *= inv_scale
            scores += bias
        else:
            scores += bias
            scores *= inv_scale
    else:
        scores *= inv_scale
    if mask is not None:
        scores[:, mask == 0] = -np.inf
    peak = scores.max(axis=-1, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    np.exp(scores - peak, out=scores)
    total = scores.sum(axis=-1, keepdims=True)
    np.divide(scores, np.where(total > 0.0, total, 1.0), out=scores)
    return scores


def masked_softmax_backward(weights, gweights, inv_scale):
    """Gradient of bias_mask_softmax w.r.t. the raw scores."""
    inner = np.sum(weights * gweights, axis=-1, keepdims=True)
    return weights * (gweights - inner) * inv_scale


def layer_norm_forward(x, gain, bias, eps):
    """Normalize each row of x to zero mean / unit variance, then affine.

    Returns (y, mean, inv_std); the latter two are cached for backward.
    """
    mean = x.mean(axis=-1)
    centered = x - mean[:, None]
    var = np.mean(centered * centered, axis=-1)
    inv_std = 1.0 / np.sqrt(var + eps)
    y = centered * inv_std[:, None] * gain + bias
    return y, mean, inv_std


def layer_norm_backward(g, x, mean, inv_std, gain):
    xhat = (x - mean[:, None]) * inv_std[:, None]
    dbias = g.sum(axis=0)
    dgain = np.sum(g * xhat, axis=0)
    dxhat = g * gain
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = np.mean(dxhat * xhat, axis=-1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * inv_std[:, None]
    return dx, dgain, dbias
