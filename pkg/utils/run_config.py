"""
Run Configuration

Effective settings of one CLI run. Precedence, highest first:
    1. command-line flags (dot paths such as "training.patience")
    2. operator config file (YAML or JSON)
    3. config.json defaults, supplied by the pydantic default factories
"""

from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Union

import yaml
from pydantic import BaseModel, Field, model_validator

from modules.data import SceneSpec
from modules.decoder import ModelDims
from modules.training import TrainingConfig

from .config_loader import deep_merge, get_config, load_config_file


class ModelSettings(BaseModel):
    """Sizes that do not come from the dataset; K and D are read from the data file."""
    embedding_dim: int = Field(default_factory=lambda: get_config("model.embedding_dim", 32), ge=1)
    hidden_dim: int = Field(default_factory=lambda: get_config("model.hidden_dim", 32), ge=1)
    attention_dim: Optional[int] = Field(default_factory=lambda: get_config("model.attention_dim"), ge=1)
    beta_gate: bool = Field(default_factory=lambda: get_config("model.beta_gate", True))
    init_scale: float = Field(default_factory=lambda: get_config("model.init_scale", 0.1), gt=0.0)

    def dims(self, K: int, D: int) -> ModelDims:
        return ModelDims.of(K=K, m=self.embedding_dim, n=self.hidden_dim, D=D, A=self.attention_dim)


class DataSettings(BaseModel):
    spec: SceneSpec = Field(default_factory=SceneSpec)
    count: int = Field(default_factory=lambda: get_config("data.count", 5000), ge=1)
    all_references: bool = Field(default_factory=lambda: get_config("data.all_references", True))


class GenerationSettings(BaseModel):
    strategy: Literal["greedy", "beam", "sample"] = Field(default_factory=lambda: get_config("generation.strategy", "greedy"))
    beam_width: int = Field(default_factory=lambda: get_config("generation.beam_width", 3), ge=1)
    temperature: float = Field(default_factory=lambda: get_config("generation.temperature", 1.0), gt=0.0)
    max_len: int = Field(default_factory=lambda: get_config("generation.max_len", 12), ge=1)
    sample_attention: bool = Field(default_factory=lambda: get_config("generation.sample_attention", False))


class VisualizationSettings(BaseModel):
    upscale: int = Field(default_factory=lambda: get_config("visualization.upscale", 16), ge=1)
    sigma: float = Field(default_factory=lambda: get_config("visualization.sigma", 8.0), ge=0.0)
    truncate: float = Field(default_factory=lambda: get_config("visualization.truncate", 3.0), gt=0.0)
    blend_alpha: float = Field(default_factory=lambda: get_config("visualization.blend_alpha", 0.6), ge=0.0, le=1.0)


class PathSettings(BaseModel):
    dataset: Optional[Path] = None
    checkpoint: Optional[Path] = None
    output_dir: Path = Path("runs")


class RunConfig(BaseModel):
    """Everything a command needs; the seed has no default."""
    seed: int = Field(..., ge=0)
    mode: Optional[Literal["soft", "hard"]] = None
    model: ModelSettings = Field(default_factory=ModelSettings)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    data: DataSettings = Field(default_factory=DataSettings)
    generation: GenerationSettings = Field(default_factory=GenerationSettings)
    visualization: VisualizationSettings = Field(default_factory=VisualizationSettings)
    paths: PathSettings = Field(default_factory=PathSettings)

    @model_validator(mode="after")
    def sync_mode(self) -> "RunConfig":
        """A top-level mode wins over training.mode; otherwise it mirrors it."""
        if self.mode is None:
            self.mode = self.training.mode
        else:
            self.training.mode = self.mode
        self.training.max_len = self.generation.max_len
        self.training.beta_gate = self.model.beta_gate
        return self


def set_path(target: Dict[str, Any], path: str, value: Any) -> Dict[str, Any]:
    """Set a dot-path key in a nested dict, creating levels as needed."""
    node = target
    keys = path.split(".")
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value
    return target


def build_run_config(
    seed: int,
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    """
    Merge defaults, an optional config file and flag overrides.

    Args:
        seed: Mandatory seed
        config_file: YAML/JSON operator file
        overrides: Dot path -> value; None values are ignored

    Returns:
        Validated RunConfig

    Raises:
        FileNotFoundError: config_file does not exist
        pydantic.ValidationError: a merged value violates a constraint
    """
    from_file = load_config_file(str(config_file) if config_file else None)
    from_flags: Dict[str, Any] = {}
    for path, value in (overrides or {}).items():
        if value is not None:
            set_path(from_flags, path, value)
    merged = deep_merge(from_file, from_flags)
    merged["seed"] = seed
    return RunConfig.model_validate(merged)


def write_effective_config(config: RunConfig, output_dir: Union[str, Path]) -> Path:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / "effective_config.yaml"
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config.model_dump(mode="json"), f, sort_keys=False)
    return path
