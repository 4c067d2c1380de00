"""Teacher-forced training loop: adaptive-moment updates, gradient
clipping, early stopping on validation recall, reproducible from the seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import tensor as T
from .rng import make_rng
from .tensor import Tensor


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 8
    max_steps: int = 600
    eval_every: int = 40
    early_stop_patience: int = 5
    seed: int = 0
    gradient_clip_norm: float = 1.0
    divergence_factor: float = 10.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


def init_adam(params: dict[str, Tensor]) -> AdamState:
    return AdamState(m={k: np.zeros_like(p.data) for k, p in params.items()},
                     v={k: np.zeros_like(p.data) for k, p in params.items()})


def clip_gradients(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so the global L2 norm is at most max_norm."""
    sq = 0.0
    for p in params.values():
        if p.grad is not None:
            sq += float(np.sum(p.grad * p.grad))
    norm = math.sqrt(sq)
    if norm > max_norm:
        factor = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= factor
    return norm


def adam_step(params: dict[str, Tensor], state: AdamState,
              config: TrainConfig) -> None:
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p.data -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon)


def train_step(model, params: dict[str, Tensor], opt: AdamState,
               batch, config: TrainConfig, rng) -> float:
    """One optimizer step over a batch of prepared samples."""
    for p in params.values():
        p.zero_grad()
    total = None
    n_total = 0
    for ps in batch:
        if ps.n_supervised == 0:
            continue
        logits = model.forward(params, ps, train_mode=True, rng=rng)
        sample_loss = T.cross_entropy(logits, ps.targets)
        if not math.isfinite(float(sample_loss.data)):
            raise TrainingDiverged(
                f"non-finite loss on sample {ps.user_id!r}")
        weighted = T.scale(sample_loss, float(ps.n_supervised))
        total = weighted if total is None else T.add(total, weighted)
        n_total += ps.n_supervised
    if total is None:
        raise ValueError("batch contains no supervised positions")
    loss = T.scale(total, 1.0 / n_total)
    T.backward(loss)
    clip_gradients(params, config.gradient_clip_norm)
    adam_step(params, opt, config)
    return float(loss.data)


def _copy_params(params: dict[str, Tensor]) -> dict[str, Tensor]:
    return {k: Tensor(p.data.copy(), requires_grad=True) for k, p in params.items()}


@dataclass
class TrainResult:
    best_params: dict[str, Tensor]
    metrics: list[dict] = field(default_factory=list)
    best_recall1: float = -1.0
    steps_run: int = 0


def run_training(model, train_prepared, val_prepared, config: TrainConfig,
                 ks=(1, 5, 10), log_path=None) -> TrainResult:
    """Train with periodic validation, keeping the best checkpoint.

    Stops early after early_stop_patience evaluations without improvement;
    aborts if the loss sits above divergence_factor x initial for three
    consecutive evaluations.
    """
    from .evaluate import evaluate_recall  # local import: eval also drives training runs

    params = model.init_params(config.seed)
    opt = init_adam(params)
    shuffle_rng = make_rng(config.seed, 3)
    dropout_rng = make_rng(config.seed, 4)
    usable = [ps for ps in train_prepared if ps.n_supervised > 0]
    if not usable:
        raise ValueError("training split has no supervised positions")

    result = TrainResult(best_params=_copy_params(params))
    order: list[int] = []
    initial_loss = None
    bad_evals = 0
    diverged_evals = 0
    for step in range(1, config.max_steps + 1):
        if len(order) < config.batch_size:
            order += list(shuffle_rng.permutation(len(usable)))
        batch = [usable[i] for i in order[:config.batch_size]]
        order = order[config.batch_size:]
        loss = train_step(model, params, opt, batch, config, dropout_rng)
        if initial_loss is None:
            initial_loss = loss
        if step % config.eval_every == 0 or step == config.max_steps:
            recalls = evaluate_recall(model, params, val_prepared, ks)
            row = {"step": step, "train_loss": loss}
            row.update({f"recall@{k}": recalls[k] for k in ks})
            result.metrics.append(row)
            if recalls[ks[0]] > result.best_recall1:
                result.best_recall1 = recalls[ks[0]]
                result.best_params = _copy_params(params)
                bad_evals = 0
            else:
                bad_evals += 1
            if loss > config.divergence_factor * initial_loss:
                diverged_evals += 1
                if diverged_evals >= 3:
                    raise TrainingDiverged(
                        f"loss {loss:.3f} stuck above {config.divergence_factor}x "
                        f"initial {initial_loss:.3f}")
            else:
                diverged_evals = 0
            result.steps_run = step
            if bad_evals >= config.early_stop_patience:
                break
        result.steps_run = step
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        with open(log_path, "w") as fh:
            for row in result.metrics:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    return result


def train_config_variant(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=seed)
