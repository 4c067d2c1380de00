"""Finite-difference verification of reverse-mode gradients.

This is the independent oracle used by the test suite: it never inspects
the tape, only re-evaluates the loss at nudged parameter values.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from .rng import make_rng
from .tensor import Tensor, backward


def grad_check(f: Callable[[], Tensor],
               params: Mapping[str, Tensor] | Sequence[Tensor],
               h: float = 1e-4,
               max_coords_per_param: int | None = None,
               seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    f must be deterministic given the parameter values (re-seed any internal
    randomness inside f). The error for one coordinate is
    |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    if isinstance(params, Mapping):
        items = list(params.items())
    else:
        items = [(str(i), p) for i, p in enumerate(params)]
    for _, p in items:
        p.zero_grad()
    loss = f()
    backward(loss)
    analytic = {}
    for name, p in items:
        if p.grad is None:
            raise ValueError(f"grad_check: parameter {name!r} received no gradient")
        analytic[name] = p.grad.copy()
        p.zero_grad()

    rng = make_rng(seed, 0xF1D)
    worst = 0.0
    for name, p in items:
        flat = p.data.reshape(-1)
        n = flat.size
        if max_coords_per_param is not None and n > max_coords_per_param:
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        else:
            coords = np.arange(n)
        for idx in coords:
            saved = flat[idx]
            flat[idx] = saved + h
            up = float(f().data)
            flat[idx] = saved - h
            down = float(f().data)
            flat[idx] = saved
            numeric = (up - down) / (2.0 * h)
            a = float(analytic[name].reshape(-1)[idx])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if err > worst:
                worst = err
    return worst
