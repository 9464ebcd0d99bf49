"""
Training Loop

Epochs of length-bucketed mini-batches with early stopping on validation
BLEU-4. After every epoch the validation set is decoded greedily; the
parameters of the best epoch so far are kept, ties going to the earlier
epoch. Training stops once `patience` consecutive epochs have not improved
on the best score, or after max_epochs.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from modules.decoder import DecoderParams, generate_batch
from modules.evalviz import BleuReport, bleu
from modules.graphcore import GradientMap

from .batching import TrainingExample, bucket_batches, make_batch
from .configs import TrainingConfig
from .errors import NonFiniteLossError
from .hard import BaselineState, hard_gradient_estimate
from .losses import soft_loss
from .metrics_log import EpochMetrics, MetricsLog
from .optimizers import clip_by_global_norm, init_optimizer_state, optimizer_step

logger = logging.getLogger(__name__)

Validator = Callable[[DecoderParams, Sequence[TrainingExample]], BleuReport]


@dataclass
class TrainingResult:
    best_params: DecoderParams
    best_epoch: int
    best_bleu: BleuReport
    metrics: List[EpochMetrics] = field(default_factory=list)
    baseline: BaselineState = field(default_factory=BaselineState)
    final_params: Optional[DecoderParams] = None


def bleu_validator(mode: str, max_len: int = 12, gate: bool = True, batch_size: int = 256) -> Validator:
    """Greedy-decode the validation examples and score them against their references."""

    def validate(params: DecoderParams, validation: Sequence[TrainingExample]) -> BleuReport:
        candidates = []
        for start in range(0, len(validation), batch_size):
            chunk = validation[start:start + batch_size]
            features = np.stack([example.grid.features for example in chunk])
            candidates.extend(caption.words for caption in generate_batch(features, params, mode, max_len, gate))
        return bleu(candidates, [example.reference_words for example in validation])

    return validate


def _check_finite(loss: float, grads: GradientMap, epoch: int, step: int) -> None:
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteLossError(name, epoch, step)
    if not np.isfinite(loss):
        raise NonFiniteLossError("loss", epoch, step)


def train(
    corpus: Sequence[TrainingExample],
    params: DecoderParams,
    config: TrainingConfig,
    validation: Sequence[TrainingExample],
    rng: np.random.Generator,
    validator: Optional[Validator] = None,
    metrics_log: Optional[MetricsLog] = None
) -> TrainingResult:
    """
    Train a soft- or hard-attention decoder.

    Args:
        corpus: Training examples
        params: Initial parameters
        config: Mode, loss, optimizer, batching and stopping settings
        validation: Non-empty validation examples
        rng: Seeded source for batch order, dropout, substitution and sampling
        validator: Scores parameters on the validation set; greedy BLEU by default
        metrics_log: Receives one record per epoch

    Returns:
        TrainingResult holding the best-BLEU-4 parameters and the per-epoch metrics

    Raises:
        NonFiniteLossError: a loss or gradient became NaN/Inf
    """
    if not validation:
        raise ValueError("Validation set is empty")
    if not corpus:
        raise ValueError("Training corpus is empty")
    validator = validator or bleu_validator(config.mode, config.max_len, config.beta_gate)
    metrics_log = metrics_log if metrics_log is not None else MetricsLog()

    optimizer = init_optimizer_state(params, config.optimizer)
    baseline = BaselineState()
    best_params, best_epoch, best_report = params, 0, None
    stale_epochs = 0

    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        losses: List[float] = []
        norms: List[float] = []
        for step, examples in enumerate(bucket_batches(corpus, config.batch_size, rng), start=1):
            batch = make_batch(examples)
            if config.mode == "soft":
                result = soft_loss(batch, params, config.soft, rng, gate=config.beta_gate)
                loss, grads = result.loss, result.grads
            else:
                estimate, baseline = hard_gradient_estimate(batch, params, config.hard, baseline, rng)
                loss = -estimate.mean_log_likelihood
                grads = {name: -g for name, g in estimate.grads.items()}
            _check_finite(loss, grads, epoch, step)
            grads, norm = clip_by_global_norm(grads, config.clip_norm)
            params, optimizer = optimizer_step(params, grads, optimizer)
            losses.append(loss)
            norms.append(norm)

        report = validator(params, validation)
        record = EpochMetrics(
            epoch=epoch,
            mode=config.mode,
            loss=float(np.mean(losses)),
            bleu1=report.bleu1,
            bleu2=report.bleu2,
            bleu3=report.bleu3,
            bleu4=report.bleu4,
            baseline=baseline.b if config.mode == "hard" else None,
            grad_norm=float(np.mean(norms)),
            wall_ms=int(round((time.perf_counter() - started) * 1000)),
        )
        metrics_log.append(record)
        logger.info(
            "epoch %d %s loss=%.4f bleu1=%.3f bleu4=%.3f grad_norm=%.3f",
            epoch, config.mode, record.loss, record.bleu1, record.bleu4, record.grad_norm,
        )

        if best_report is None or report.bleu4 > best_report.bleu4:
            best_params, best_epoch, best_report = params, epoch, report
            stale_epochs = 0
        else:
            stale_epochs += 1
        if stale_epochs >= config.patience:
            logger.info("Stopping after epoch %d; best BLEU-4 %.4f at epoch %d", epoch, best_report.bleu4, best_epoch)
            break

    return TrainingResult(
        best_params=best_params,
        best_epoch=best_epoch,
        best_bleu=best_report,
        metrics=list(metrics_log.records),
        baseline=baseline,
        final_params=params,
    )
