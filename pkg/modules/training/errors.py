"""
Training errors.
"""

from typing import Optional


class MixedLengthBatchError(ValueError):
    """A mini-batch holds captions of different lengths."""


class EnumerationTooLargeError(ValueError):
    """L^C exceeds the number of trajectories the exact objective enumerates."""


class NonFiniteLossError(ArithmeticError):
    """Loss or gradient became NaN/Inf; `block` names the offending parameter block."""

    def __init__(self, block: str, epoch: Optional[int] = None, step: Optional[int] = None):
        self.block = block
        self.epoch = epoch
        self.step = step
        where = f" (epoch {epoch}, batch {step})" if epoch is not None else ""
        super().__init__(f"Non-finite value in parameter block '{block}'{where}")
