"""Losses, the mini-batch training loop, and run bookkeeping for both tasks."""

from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data import WordSample
from .model import GestureModel, ModelConfig, ModelParams, init_params
from .numerics import adam_step, init_adam_states, sigmoid, zero_grads


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 10
    seed: int = 0
    pos_weight: float = 1.0

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.pos_weight <= 0.0:
            raise ValueError("pos_weight must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    eval_loss: float
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,eval_loss,seconds"]
        for e in self.epochs:
            lines.append(f"{e.epoch},{e.train_loss:.10g},{e.eval_loss:.10g},{e.seconds:.4f}")
        return "\n".join(lines) + "\n"


def bce_loss(logit: float, label: int, pos_weight: float = 1.0) -> tuple[float, float]:
    """Stable logit-space binary cross-entropy; returns (loss, dloss/dlogit).

    The positive class is weighted by ``pos_weight`` (1.0 = unweighted).
    """
    # log(1 + exp(-|x|)) never overflows; max(x,0) - x*c recovers the rest.
    softplus = math.log1p(math.exp(-abs(logit)))
    loss = max(logit, 0.0) - logit * label + softplus
    grad = sigmoid(logit) - label
    if label == 1:
        loss *= pos_weight
        grad *= pos_weight
    return loss, grad


def mse_loss(pred: float, target: float) -> tuple[float, float]:
    """Squared error; returns (loss, dloss/dpred)."""
    diff = pred - target
    return diff * diff, 2.0 * diff


def sample_loss_and_grad(
    logit: float, out: float, sample: WordSample, task: str, pos_weight: float
) -> tuple[float, float]:
    """Per-sample loss plus its gradient w.r.t. the pre-sigmoid logit."""
    if task == "placement":
        return bce_loss(logit, sample.label, pos_weight)
    loss, d_pred = mse_loss(out, sample.intensity)
    return loss, d_pred * out * (1.0 - out)  # chain through the sigmoid


def evaluate_loss(
    model: GestureModel, samples: list[WordSample], task: str, pos_weight: float
) -> float:
    total = 0.0
    for s in samples:
        logit, out = model.forward(s.h_s, s.e_n)
        loss, _ = sample_loss_and_grad(logit, out, s, task, pos_weight)
        total += loss
    return total / len(samples)


def _assemble_all(samples: list[WordSample], config: ModelConfig) -> list:
    """Token matrices are input-only, so build each sample's once per run."""
    from .model import assemble_tokens

    return [assemble_tokens(s.h_s, s.e_n, config) for s in samples]


@dataclass
class TrainResult:
    params: ModelParams  # parameters with the best eval loss seen
    history: TrainHistory
    global_step: int  # optimizer steps taken across the whole run (resume-aware)


def train(
    config: ModelConfig,
    params: ModelParams | None,
    train_samples: list[WordSample],
    eval_samples: list[WordSample],
    tcfg: TrainConfig,
    start_step: int = 0,
) -> TrainResult:
    """Deterministic mini-batch training: per batch, accumulate mean-loss
    gradients over the samples, then take one Adam step.

    Keeps the parameters with the best eval loss (falling back to the final
    parameters when no eval set is given).
    """
    if not train_samples:
        raise TrainingError("training set is empty")
    if params is None:
        params = init_params(config, tcfg.seed)
    model = GestureModel(config, params)
    param_list = params.named_parameters()
    states = init_adam_states(param_list)
    rng = np.random.default_rng(tcfg.seed)
    tokens = _assemble_all(train_samples, config)

    history = TrainHistory()
    best_loss = math.inf
    best_params = params
    global_step = start_step

    for epoch in range(1, tcfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_samples))
        epoch_loss = 0.0
        for batch_start in range(0, len(order), tcfg.batch_size):
            batch = order[batch_start : batch_start + tcfg.batch_size]
            zero_grads(param_list)
            batch_loss = 0.0
            for i in batch:
                s = train_samples[i]
                logit, out = model.forward_tokens(tokens[i])
                loss, d_logit = sample_loss_and_grad(logit, out, s, config.task, tcfg.pos_weight)
                if not math.isfinite(loss):
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch}, batch {batch_start // tcfg.batch_size},"
                        f" sample {s.record_id!r}[{s.index}]"
                    )
                batch_loss += loss
                model.backward(d_logit / len(batch))
            adam_step(param_list, states, tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.eps)
            global_step += 1
            epoch_loss += batch_loss
        train_loss = epoch_loss / len(train_samples)
        eval_loss = (
            evaluate_loss(model, eval_samples, config.task, tcfg.pos_weight)
            if eval_samples
            else train_loss
        )
        history.epochs.append(
            EpochStats(epoch=epoch, train_loss=train_loss, eval_loss=eval_loss,
                       seconds=time.perf_counter() - t0)
        )
        if eval_loss < best_loss:
            best_loss = eval_loss
            best_params = copy.deepcopy(params)

    return TrainResult(params=best_params, history=history, global_step=global_step)
