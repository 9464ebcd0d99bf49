"""
Verification module - oracle suites run by the verify command.
"""

from .suites import (
    FAST,
    FAULTS,
    FULL,
    LEVELS,
    CheckContext,
    CheckResult,
    format_table,
    random_instance,
    run_suite,
)

__all__ = [
    'FAST',
    'FAULTS',
    'FULL',
    'LEVELS',
    'CheckContext',
    'CheckResult',
    'format_table',
    'random_instance',
    'run_suite',
]
