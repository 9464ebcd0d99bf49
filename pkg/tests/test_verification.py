"""
Verification tests - individual oracle checks and the fault hook.
"""
import numpy as np
import pytest

from modules.decoder import EOS, ModelDims
from modules.verification import CheckContext, CheckResult, format_table, random_instance, run_suite
from modules.verification.suites import (
    check_attention_penalty,
    check_baseline,
    check_bleu_oracles,
    check_expected_context,
    check_formats,
    check_graph_primitives,
)


@pytest.mark.parametrize("check", [
    check_graph_primitives,
    check_attention_penalty,
    check_bleu_oracles,
    check_expected_context,
    check_formats,
])
def test_cheap_checks_pass(check):
    """Test that each inexpensive oracle passes on a fixed seed."""
    result = check(CheckContext(seed=0))
    assert result.passed, result.detail


def test_gradient_fault_is_detected():
    """Test that the injected gradient corruption fails the primitive check."""
    result = check_graph_primitives(CheckContext(seed=0, inject_fault="gradient"))
    assert not result.passed


def test_unknown_fault_rejected():
    """Test validation of the fault name."""
    with pytest.raises(ValueError):
        CheckContext(seed=0, inject_fault="memory")


def test_random_instance_caption_layout():
    """Test that random captions end in their only EOS."""
    dims = ModelDims.of(K=6, m=4, n=4, D=3)
    grid, caption, params = random_instance(np.random.default_rng(0), dims, L=4, C=5)
    assert grid.features.shape == (4, 3)
    assert caption.C == 5 and caption.tokens[-1] == EOS
    assert EOS not in caption.tokens[:-1]
    assert params.dims == dims


def test_format_table():
    """Test the pass/fail summary line."""
    table = format_table([CheckResult("a", True, "ok"), CheckResult("bb", False, "bad", 1.5)])
    assert "FAIL" in table
    assert table.endswith("1/2 checks passed")


@pytest.mark.slow
def test_fast_suite_with_fault():
    """Test that the fast suite reports the corrupted gradient checks by name."""
    results = run_suite("fast", seed=1, inject_fault="gradient")
    failed = {r.name for r in results if not r.passed}
    assert {"graph_primitive_gradients", "soft_loss_gradients", "exact_hard_gradient"} <= failed
    assert "bleu_oracles" not in failed


@pytest.mark.slow
def test_baseline_check_passes():
    """Test the baseline neutrality and variance oracle with the default warm-up."""
    result = check_baseline(CheckContext(seed=0))
    assert result.passed, result.detail
