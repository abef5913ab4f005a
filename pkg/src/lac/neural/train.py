"""Full-sequence training loop with optional truncated backpropagation.

Sequences longer than the chunk threshold are processed in fixed-length
chunks per epoch: LSTM states carry forward across chunk boundaries but
gradients do not, and each chunk applies one Adam update.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from lac.errors import NumericError
from lac.neural.adam import AdamConfig, AdamState, adam_step
from lac.neural.model import AutoencoderModel, backward, forward, mse_loss


@dataclass
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 0.01
    decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    chunk_length: int = 512
    chunk_threshold: int = 2048
    min_improvement: float = 1e-6  # <= 0 disables early stopping

    def adam(self) -> AdamConfig:
        return AdamConfig(self.learning_rate, self.decay, self.beta1,
                          self.beta2, self.epsilon)


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    final_loss: float | None = None
    epochs_run: int = 0
    wall_time: float = 0.0
    diverged: bool = False
    early_stopped: bool = False


def _snapshot(model: AutoencoderModel) -> dict[str, np.ndarray]:
    return {name: arr.copy() for name, arr in model.parameter_arrays()}


def _restore(model: AutoencoderModel, snap: dict[str, np.ndarray]) -> None:
    for name, arr in model.parameter_arrays():
        arr[:] = snap[name]


def train(model: AutoencoderModel, seq: np.ndarray, config: TrainConfig) -> TrainReport:
    """Train the model in place on one sequence; reports per-epoch loss.

    An epoch whose loss or gradients go non-finite aborts training: the
    parameters are rolled back to the epoch start and the report carries
    the losses of the finite epochs only.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[1] != model.input_dim:
        raise NumericError(f"expected (T, {model.input_dim}) sequence, got {seq.shape}")
    steps = seq.shape[0]
    if config.epochs == 0:
        return TrainReport()
    if steps < 1:
        raise NumericError("training requires at least one time step")

    chunked = steps > config.chunk_threshold
    chunk = config.chunk_length if chunked else steps
    state = AdamState.for_params(model.parameter_arrays())
    adam_cfg = config.adam()
    report = TrainReport()
    t0 = time.perf_counter()

    for _ in range(config.epochs):
        snap = _snapshot(model)
        sq_sum = 0.0
        states = model.zero_states()
        try:
            for start in range(0, steps, chunk):
                part = seq[start:start + chunk]
                recon, caches = forward(model, part, states=states)
                states = caches.final_states
                diff = recon - part
                sq_sum += float(np.sum(diff * diff))
                grads = backward(model, caches, part)
                adam_step(model.parameter_arrays(), grads, state, adam_cfg)
            epoch_loss = sq_sum / seq.size
            if not np.isfinite(epoch_loss):
                raise NumericError("epoch loss is not finite")
        except NumericError:
            _restore(model, snap)
            report.diverged = True
            break
        report.epoch_losses.append(epoch_loss)
        report.epochs_run += 1
        if (config.min_improvement > 0 and len(report.epoch_losses) >= 2
                and report.epoch_losses[-2] - epoch_loss < config.min_improvement):
            report.early_stopped = True
            break

    report.final_loss = report.epoch_losses[-1] if report.epoch_losses else None
    report.wall_time = time.perf_counter() - t0
    return report


def evaluate(model: AutoencoderModel, seq: np.ndarray) -> float:
    """Reconstruction MSE of seq without touching the model."""
    recon, _ = forward(model, seq, keep_caches=False)
    return mse_loss(recon, seq)
