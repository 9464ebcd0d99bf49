"""
Training module - soft and hard learning rules, optimizers, batching and early stopping.
"""

from .configs import HardLossConfig, OptimizerConfig, SoftLossConfig, TrainingConfig
from .errors import EnumerationTooLargeError, MixedLengthBatchError, NonFiniteLossError
from .batching import Batch, TrainingExample, bucket_batches, length_buckets, make_batch
from .losses import AttentionStats, SoftLossResult, dropout_masks, soft_loss
from .hard import (
    BaselineState,
    GradientEstimate,
    hard_gradient_estimate,
    rollout_locations,
    sample_locations,
    update_baseline,
)
from .exact import (
    MAX_TRAJECTORIES,
    ExactObjective,
    Moments,
    estimator_moments,
    exact_hard_objective,
    exact_log_marginal,
    location_probabilities,
    trajectories,
)
from .optimizers import OptimizerState, clip_by_global_norm, global_norm, init_optimizer_state, optimizer_step
from .metrics_log import EpochMetrics, MetricsLog, read_metrics_log
from .trainer import TrainingResult, bleu_validator, train

__all__ = [
    'HardLossConfig',
    'OptimizerConfig',
    'SoftLossConfig',
    'TrainingConfig',
    'EnumerationTooLargeError',
    'MixedLengthBatchError',
    'NonFiniteLossError',
    'Batch',
    'TrainingExample',
    'bucket_batches',
    'length_buckets',
    'make_batch',
    'AttentionStats',
    'SoftLossResult',
    'dropout_masks',
    'soft_loss',
    'BaselineState',
    'GradientEstimate',
    'hard_gradient_estimate',
    'rollout_locations',
    'sample_locations',
    'update_baseline',
    'MAX_TRAJECTORIES',
    'ExactObjective',
    'Moments',
    'estimator_moments',
    'exact_hard_objective',
    'exact_log_marginal',
    'location_probabilities',
    'trajectories',
    'OptimizerState',
    'clip_by_global_norm',
    'global_norm',
    'init_optimizer_state',
    'optimizer_step',
    'EpochMetrics',
    'MetricsLog',
    'read_metrics_log',
    'TrainingResult',
    'bleu_validator',
    'train',
]
