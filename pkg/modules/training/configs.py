"""
Training configuration models.

Defaults come from config.json through utils.config_loader, so a field left
unset by an operator config file takes the built-in value.
"""

from typing import Literal

from pydantic import BaseModel, Field, field_validator

from utils.config_loader import get_config


class SoftLossConfig(BaseModel):
    """Penalized NLL: -log p(y|a) + lambda * sum_i (1 - sum_t alpha_ti)^2"""
    lambda_penalty: float = Field(default_factory=lambda: get_config("training.soft.lambda_penalty", 0.01), ge=0.0)
    dropout_rate: float = Field(default_factory=lambda: get_config("training.dropout_rate", 0.5), ge=0.0, lt=1.0)


class HardLossConfig(BaseModel):
    """
    Score-function estimator settings.

    The entropy term is added to the objective being maximized, so a
    positive lambda_e rewards spread-out attention.
    """
    lambda_r: float = Field(default_factory=lambda: get_config("training.hard.lambda_r", 1.0))
    lambda_e: float = Field(default_factory=lambda: get_config("training.hard.lambda_e", 0.01))
    sample_count: int = Field(default_factory=lambda: get_config("training.hard.sample_count", 1), ge=1)
    expectation_substitution_prob: float = Field(
        default_factory=lambda: get_config("training.hard.expectation_substitution_prob", 0.5), ge=0.0, le=1.0
    )
    baseline_decay: float = Field(default_factory=lambda: get_config("training.hard.baseline_decay", 0.9), ge=0.0, le=1.0)
    dropout_rate: float = Field(default_factory=lambda: get_config("training.dropout_rate", 0.5), ge=0.0, lt=1.0)


class OptimizerConfig(BaseModel):
    algorithm: Literal["rmsprop", "adam"] = Field(default_factory=lambda: get_config("training.optimizer.algorithm", "adam"))
    learning_rate: float = Field(default_factory=lambda: get_config("training.optimizer.learning_rate", 0.005), gt=0.0)
    rmsprop_decay: float = Field(default_factory=lambda: get_config("training.optimizer.rmsprop_decay", 0.9), ge=0.0, lt=1.0)
    beta1: float = Field(default_factory=lambda: get_config("training.optimizer.beta1", 0.9), ge=0.0, lt=1.0)
    beta2: float = Field(default_factory=lambda: get_config("training.optimizer.beta2", 0.999), ge=0.0, lt=1.0)
    epsilon: float = Field(default_factory=lambda: get_config("training.optimizer.epsilon", 1e-8), gt=0.0)


class TrainingConfig(BaseModel):
    mode: Literal["soft", "hard"] = Field(default_factory=lambda: get_config("training.mode", "soft"))
    batch_size: int = Field(default_factory=lambda: get_config("training.batch_size", 64), ge=1)
    max_epochs: int = Field(default_factory=lambda: get_config("training.max_epochs", 30), ge=1)
    patience: int = Field(default_factory=lambda: get_config("training.patience", 5), ge=0)
    clip_norm: float = Field(default_factory=lambda: get_config("training.clip_norm", 5.0), gt=0.0)
    max_len: int = Field(default_factory=lambda: get_config("generation.max_len", 12), ge=1)
    beta_gate: bool = Field(default_factory=lambda: get_config("model.beta_gate", True))
    soft: SoftLossConfig = Field(default_factory=SoftLossConfig)
    hard: HardLossConfig = Field(default_factory=HardLossConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)

    @field_validator("mode", mode="before")
    @classmethod
    def normalize_mode(cls, value):
        return value.lower() if isinstance(value, str) else value
