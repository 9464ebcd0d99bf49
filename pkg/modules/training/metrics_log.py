"""
Metrics Log

Append-only text file with one record per epoch, space-separated key=value
pairs in a fixed key order:

    epoch=3 mode=soft loss=1.2345 bleu1=0.91 bleu2=0.80 bleu3=0.71 bleu4=0.62 baseline=none grad_norm=2.5 wall_ms=8123

baseline is "none" in soft mode. Floats are written with 10 significant digits.
"""

from dataclasses import dataclass, fields
from pathlib import Path
from typing import List, Optional, Union

KEYS = ("epoch", "mode", "loss", "bleu1", "bleu2", "bleu3", "bleu4", "baseline", "grad_norm", "wall_ms")


@dataclass
class EpochMetrics:
    epoch: int
    mode: str
    loss: float
    bleu1: float
    bleu2: float
    bleu3: float
    bleu4: float
    baseline: Optional[float]
    grad_norm: float
    wall_ms: int

    def to_line(self) -> str:
        parts = []
        for key in KEYS:
            value = getattr(self, key)
            if value is None:
                text = "none"
            elif isinstance(value, float):
                text = f"{value:.10g}"
            else:
                text = str(value)
            parts.append(f"{key}={text}")
        return " ".join(parts)

    @classmethod
    def from_line(cls, line: str) -> "EpochMetrics":
        pairs = dict(part.split("=", 1) for part in line.split())
        missing = [key for key in KEYS if key not in pairs]
        if missing:
            raise ValueError(f"Metrics record missing keys {missing}: {line!r}")
        values = {}
        for f in fields(cls):
            raw = pairs[f.name]
            if f.name in ("epoch", "wall_ms"):
                values[f.name] = int(raw)
            elif f.name == "mode":
                values[f.name] = raw
            elif raw == "none":
                values[f.name] = None
            else:
                values[f.name] = float(raw)
        return cls(**values)


class MetricsLog:
    """Collects epoch records in memory and appends each one to a file when a path is set."""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path else None
        self.records: List[EpochMetrics] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, record: EpochMetrics) -> None:
        self.records.append(record)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(record.to_line() + "\n")

    def __len__(self) -> int:
        return len(self.records)


def read_metrics_log(path: Union[str, Path]) -> List[EpochMetrics]:
    with open(path, "r", encoding="utf-8") as f:
        return [EpochMetrics.from_line(line) for line in f if line.strip()]
