"""
Maximum-likelihood training of a flow with a learnable Gaussian base, using the alternating schedule.
Normal epochs update the flow (and the base when it is trainable) with Adam at eta1. When alternating
updates are enabled, every epoch that is a multiple of the freezing interval (after warm-up) updates
only the base with clipped SGD at eta2.
"""

from __future__ import annotations

import copy
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

from src.base.base_distribution import BaseDistribution, grad_psi, grad_z, log_prob
from src.common.errors import EmptyInputError, EpochAbortedError, NonFiniteError, ShapeMismatchError
from src.flow.checkpoint import save_checkpoint
from src.flow.flow_model import FlowModel, backward, forward
from src.numerics.rng import Rng
from src.numerics.tensor import Tensor4, assert_finite
from src.training.optimizers import Adam, clip_by_global_norm, sgd_step
from src.training.training_config import TrainConfig

LOGGER = logging.getLogger("training")

PHASE_BASE_ONLY = "base_only"
PHASE_JOINT = "joint"
PHASE_WARMUP = "warmup"

# stream tag for per-epoch shuffling; flow initialisation uses single-index streams of the same seed
SHUFFLE_STREAM = 1009

EpochCallback = Callable[[int, FlowModel, BaseDistribution], "dict[str, float] | None"]


class LossAndGrads(NamedTuple):
    loss: float
    grad_theta: np.ndarray
    grad_psi: np.ndarray


@dataclass
class TrainState:
    epoch: int
    theta_optimizer: Adam
    psi_optimizer: Adam
    rng: Rng
    loss_history: list[float] = field(default_factory=list)
    clip_events: int = 0

    def copy(self) -> TrainState:
        return copy.deepcopy(self)


class EpochResult(NamedTuple):
    model: FlowModel
    base: BaseDistribution
    state: TrainState
    epoch_loss: float
    phase: str


@dataclass
class TrainReport:
    config: dict[str, Any]
    losses: list[float] = field(default_factory=list)
    phases: list[str] = field(default_factory=list)
    metric_rows: list[dict[str, Any]] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)
    errors: list[dict[str, Any]] = field(default_factory=list)
    status: str = "running"
    model: FlowModel | None = None
    base: BaseDistribution | None = None

    @property
    def base_only_epochs(self) -> list[int]:
        return [epoch for epoch, phase in enumerate(self.phases) if phase == PHASE_BASE_ONLY]

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "config": self.config,
            "losses": list(self.losses),
            "phases": list(self.phases),
            "base_only_epochs": self.base_only_epochs,
            "metric_rows": [dict(row) for row in self.metric_rows],
            "checkpoints": list(self.checkpoints),
            "errors": [dict(item) for item in self.errors],
        }


def init_train_state(model: FlowModel, base: BaseDistribution, config: TrainConfig) -> TrainState:
    def adam(size: int) -> Adam:
        return Adam(size=size, beta1=config.adam_beta1, beta2=config.adam_beta2, eps=config.adam_eps)

    return TrainState(
        epoch=0,
        theta_optimizer=adam(model.parameter_count),
        psi_optimizer=adam(2 * base.dims),
        rng=Rng(config.seed).derive(SHUFFLE_STREAM),
    )


def is_base_only_epoch(config: TrainConfig, epoch: int) -> bool:
    return config.altub_enabled and epoch >= config.warmup_epochs and epoch % config.freezing_interval == 0


def epoch_phase(config: TrainConfig, epoch: int) -> str:
    if is_base_only_epoch(config, epoch):
        return PHASE_BASE_ONLY
    if epoch < config.warmup_epochs:
        return PHASE_WARMUP
    return PHASE_JOINT


def eta1_schedule(config: TrainConfig, epoch: int) -> float:
    if config.lr_schedule == "cosine":
        return config.eta1 * 0.5 * (1.0 + math.cos(math.pi * epoch / config.epochs))
    if config.lr_schedule == "step":
        return config.eta1 * config.lr_decay_gamma ** (epoch // config.lr_decay_step)
    return config.eta1


def eta2_schedule(config: TrainConfig, epoch: int) -> float:
    """eta2 follows eta1 proportionally and peaks at eta2_max; every eta1 schedule peaks at epoch 0."""

    return config.eta2_max * eta1_schedule(config, epoch) / eta1_schedule(config, 0)


def loss_and_grads(
    model: FlowModel,
    base: BaseDistribution,
    batch: Tensor4,
    *,
    with_theta_grad: bool = True,
) -> LossAndGrads:
    """Batch-mean negative log-likelihood with gradients for theta and psi.

    The psi gradient only sees the base log-density; the log-determinant depends on theta alone.
    """

    if batch.batch == 0:
        raise EmptyInputError("loss_and_grads needs a non-empty batch")
    n = batch.batch
    z, log_det = forward(model, batch)
    log_likelihood = log_prob(base, z) + log_det
    loss = float(assert_finite(np.asarray(-np.mean(log_likelihood)), op="training.loss"))

    if with_theta_grad and model.parameter_count:
        upstream_z = Tensor4(grad_z(base, z).data / n)
        upstream_log_det = np.full(n, -1.0 / n)
        grad_theta, _ = backward(model, batch, upstream_z, upstream_log_det)
    else:
        grad_theta = np.zeros(model.parameter_count)

    grad_mu, grad_log_sigma = grad_psi(base, z)
    psi = np.concatenate([grad_mu.data.ravel(), grad_log_sigma.data.ravel()])
    return LossAndGrads(loss=loss, grad_theta=grad_theta, grad_psi=psi)


def _batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    return [order[start : start + batch_size] for start in range(0, order.size, batch_size)]


def train_epoch(
    model: FlowModel,
    base: BaseDistribution,
    data: Tensor4,
    config: TrainConfig,
    state: TrainState,
) -> EpochResult:
    """Run one epoch. Inputs are never mutated, so a failed epoch leaves the caller's values intact."""

    if state.epoch >= config.epochs:
        raise ValueError(f"epoch {state.epoch} is past the configured {config.epochs} epochs")
    if data.batch == 0:
        raise EmptyInputError("training data is empty")
    if data.shape[1:] != base.event_shape:
        raise ShapeMismatchError(
            "training data does not match the base distribution's (C, H, W)",
            details={"data": list(data.shape), "base": list(base.event_shape)},
        )

    state = state.copy()
    epoch = state.epoch
    phase = epoch_phase(config, epoch)
    eta1 = eta1_schedule(config, epoch)
    eta2 = eta2_schedule(config, epoch)
    update_psi_jointly = config.psi_trainable and epoch >= config.warmup_epochs

    total_loss = 0.0
    order = state.rng.permutation(data.batch)
    try:
        for batch_index, indices in enumerate(_batches(order, config.batch_size)):
            batch = data.take(indices)
            if phase == PHASE_BASE_ONLY:
                result = loss_and_grads(model, base, batch, with_theta_grad=False)
                clipped, norm, was_clipped = clip_by_global_norm(result.grad_psi, config.clip_norm)
                if was_clipped:
                    state.clip_events += 1
                    LOGGER.debug("epoch %s batch %s: clipped psi gradient norm %.3f", epoch, batch_index, norm)
                base = base.with_parameter_vector(sgd_step(base.parameter_vector(), clipped, lr=eta2))
            else:
                result = loss_and_grads(model, base, batch, with_theta_grad=not config.freeze_flow)
                if not config.freeze_flow:
                    theta = state.theta_optimizer.step(model.parameter_vector(), result.grad_theta, lr=eta1)
                    model = model.with_parameter_vector(theta)
                if update_psi_jointly:
                    clipped, _, was_clipped = clip_by_global_norm(result.grad_psi, config.clip_norm)
                    state.clip_events += int(was_clipped)
                    psi = state.psi_optimizer.step(base.parameter_vector(), clipped, lr=eta1)
                    base = base.with_parameter_vector(psi)
            total_loss += result.loss * batch.batch
    except NonFiniteError as exc:
        raise EpochAbortedError(
            f"epoch {epoch} aborted: {exc}",
            details={"epoch": epoch, "phase": phase, **exc.details},
        ) from exc

    epoch_loss = total_loss / data.batch
    state.epoch += 1
    state.loss_history.append(epoch_loss)
    return EpochResult(model=model, base=base, state=state, epoch_loss=epoch_loss, phase=phase)


def fit(
    model: FlowModel,
    base: BaseDistribution,
    dataset: Tensor4,
    config: TrainConfig,
    callbacks: Sequence[EpochCallback] = (),
    *,
    checkpoint_dir: Path | None = None,
) -> TrainReport:
    if dataset.batch == 0:
        raise EmptyInputError("fit needs a non-empty dataset")

    report = TrainReport(config=config.to_dict())
    state = init_train_state(model, base, config)

    for epoch in range(config.epochs):
        try:
            result = train_epoch(model, base, dataset, config, state)
        except EpochAbortedError as exc:
            LOGGER.error("training stopped at epoch %s: %s", epoch, exc)
            report.errors.append(exc.to_dict())
            report.status = "diverged"
            break

        model, base, state = result.model, result.base, result.state
        report.losses.append(result.epoch_loss)
        report.phases.append(result.phase)

        row: dict[str, Any] = {
            "epoch": epoch,
            "phase": result.phase,
            "loss": result.epoch_loss,
            "eta1": eta1_schedule(config, epoch),
            "eta2": eta2_schedule(config, epoch) if result.phase == PHASE_BASE_ONLY else None,
        }
        for callback in callbacks:
            extra = callback(epoch, model, base)
            if extra:
                row.update(extra)
        report.metric_rows.append(row)

        LOGGER.info("epoch %s/%s phase=%s loss=%.6f", epoch + 1, config.epochs, result.phase, result.epoch_loss)

        if checkpoint_dir is not None and config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            name = f"epoch_{epoch:04d}.ckpt"
            save_checkpoint(Path(checkpoint_dir) / name, model=model, base=base, epoch=epoch)
            report.checkpoints.append(name)

    if report.status == "running":
        report.status = "succeeded"
    if checkpoint_dir is not None:
        save_checkpoint(Path(checkpoint_dir) / "final.ckpt", model=model, base=base, epoch=len(report.losses) - 1)
        report.checkpoints.append("final.ckpt")
    if state.clip_events:
        LOGGER.warning("psi gradient was clipped on %s step(s)", state.clip_events)

    report.model = model
    report.base = base
    return report
