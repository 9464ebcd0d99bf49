"""
Attention mechanism tests - scores, weights, contexts, sampling and entropy.
"""
import numpy as np
import pytest

from modules.attention import (
    AnnotationGrid,
    AttentionParams,
    AttentionTrace,
    AttentionWeights,
    DimensionMismatchError,
    attention_scores,
    attention_weights,
    hard_sample,
    multinoulli_entropy,
    select_location,
    soft_context,
)


@pytest.fixture
def params(rng):
    return AttentionParams.initialize(D=3, n=4, A=5, rng=rng, scale=0.5)


@pytest.fixture
def grid(rng):
    return AnnotationGrid(rng.normal(size=(9, 3)))


def test_scores_match_closed_form(params, grid, rng):
    """Test scores against tanh(a W_a + b + h W_h) v computed directly."""
    h = rng.normal(size=4)
    expected = (np.tanh(grid.features @ params.W_a + params.b + h @ params.W_h) @ params.v).reshape(-1)
    np.testing.assert_allclose(attention_scores(grid, h, params), expected, atol=1e-12)


def test_weights_are_a_distribution(params, grid, rng):
    """Test softmax output is non-negative and sums to one."""
    weights = attention_weights(attention_scores(grid, rng.normal(size=4), params))
    assert weights.L == grid.L
    assert np.all(weights.alpha >= 0.0)
    assert weights.alpha.sum() == pytest.approx(1.0, abs=1e-12)


def test_weights_stable_for_large_scores():
    """Test that large scores do not overflow."""
    weights = attention_weights(np.array([1000.0, 999.0, -1000.0]))
    assert weights.argmax == 0
    assert np.all(np.isfinite(weights.alpha))


def test_zero_parameters_give_uniform_weights(grid):
    """Test that an untrained attention MLP attends uniformly."""
    params = AttentionParams.zeros(D=3, n=4, A=5)
    weights = attention_weights(attention_scores(grid, np.zeros(4), params))
    np.testing.assert_allclose(weights.alpha, np.full(9, 1.0 / 9.0))


def test_soft_context_is_gated_expectation(params, grid, rng):
    """Test that the context is beta times the weighted mean annotation."""
    h = rng.normal(size=4)
    weights = attention_weights(attention_scores(grid, h, params))
    context, beta = soft_context(grid, weights, h, params, gate=True)
    expected_beta = 1.0 / (1.0 + np.exp(-(h @ params.beta_w + params.beta_b)[0]))
    assert beta == pytest.approx(expected_beta)
    np.testing.assert_allclose(context, beta * (weights.alpha @ grid.features), atol=1e-12)


def test_soft_context_without_gate(params, grid, rng):
    """Test that disabling the gate gives beta = 1."""
    h = rng.normal(size=4)
    weights = attention_weights(attention_scores(grid, h, params))
    context, beta = soft_context(grid, weights, h, params, gate=False)
    assert beta == 1.0
    np.testing.assert_allclose(context, weights.alpha @ grid.features, atol=1e-12)


def test_hard_sample_returns_annotation_row(grid, rng):
    """Test that a hard sample's context is exactly one annotation vector."""
    weights = AttentionWeights(np.full(9, 1.0 / 9.0))
    sample = hard_sample(grid, weights, rng)
    assert 0 <= sample.location < 9
    assert sample.one_hot.sum() == 1.0
    np.testing.assert_array_equal(sample.context, grid.features[sample.location])


def test_hard_sample_respects_point_mass(grid, rng):
    """Test that all mass on one location always selects it."""
    alpha = np.zeros(9)
    alpha[4] = 1.0
    locations = {hard_sample(grid, AttentionWeights(alpha), rng).location for _ in range(20)}
    assert locations == {4}


def test_hard_sample_frequency_two_locations(rng):
    """Test that alpha = [0.5, 0.5] picks each location about half the time."""
    grid = AnnotationGrid(np.eye(2))
    weights = AttentionWeights(np.array([0.5, 0.5]))
    draws = [hard_sample(grid, weights, rng).location for _ in range(10_000)]
    assert 0.48 <= np.mean(np.array(draws) == 0) <= 0.52


def test_hard_contexts_average_to_soft_context(params, grid, rng):
    """Test that the mean sampled context converges to the ungated soft context."""
    weights = attention_weights(attention_scores(grid, rng.normal(size=4), params))
    expected, _ = soft_context(grid, weights, np.zeros(4), params, gate=False)
    contexts = np.stack([hard_sample(grid, weights, rng).context for _ in range(50_000)])
    stderr = contexts.std(axis=0, ddof=1) / np.sqrt(len(contexts))
    assert np.all(np.abs(contexts.mean(axis=0) - expected) <= 4.0 * stderr)


def test_select_location_is_a_copy(grid):
    """Test that the selected context does not alias the grid."""
    sample = select_location(grid, 2)
    sample.context[:] = 0.0
    assert np.any(grid.features[2] != 0.0)


def test_entropy_bounds():
    """Test entropy of a point mass and of the uniform distribution."""
    point = np.zeros(4)
    point[1] = 1.0
    assert multinoulli_entropy(AttentionWeights(point)) == 0.0
    assert multinoulli_entropy(AttentionWeights(np.full(4, 0.25))) == pytest.approx(np.log(4.0))


def test_grid_validation():
    """Test rejection of non-matrix and non-finite annotation grids."""
    with pytest.raises(DimensionMismatchError):
        AnnotationGrid(np.ones(4))
    with pytest.raises(ValueError):
        AnnotationGrid(np.array([[np.nan, 1.0]]))


def test_array_holders_compare_by_identity(grid):
    """Test that grids and weights work in == and list lookups without comparing arrays."""
    twin = AnnotationGrid(grid.features.copy())
    assert grid == grid
    assert grid != twin
    assert [twin, grid].index(grid) == 1
    weights = AttentionWeights(np.full(9, 1.0 / 9.0))
    assert weights in [weights]
    assert AttentionWeights(weights.alpha.copy()) not in [weights]


def test_grid_side():
    """Test recovery of the square layout side."""
    assert AnnotationGrid(np.ones((16, 2))).grid_side == 4
    assert AnnotationGrid(np.ones((6, 2))).grid_side is None


def test_weights_must_sum_to_one():
    """Test rejection of an unnormalized weight vector."""
    with pytest.raises(ValueError):
        AttentionWeights(np.array([0.5, 0.6]))


def test_dimension_mismatch(params, rng):
    """Test that a grid of the wrong width is refused."""
    with pytest.raises(DimensionMismatchError):
        attention_scores(AnnotationGrid(rng.normal(size=(4, 7))), np.zeros(4), params)
    with pytest.raises(DimensionMismatchError):
        attention_scores(AnnotationGrid(rng.normal(size=(4, 3))), np.zeros(2), params)


def test_trace_column_sums():
    """Test the C x L matrix and per-location totals of a trace."""
    trace = AttentionTrace([AttentionWeights([0.5, 0.5]), AttentionWeights([1.0, 0.0])])
    assert len(trace) == 2
    np.testing.assert_allclose(trace.column_sums(), [1.5, 0.5])


def test_param_blocks_round_trip(params):
    """Test block naming used by checkpoints and gradient maps."""
    blocks = params.to_blocks()
    assert set(blocks) == {f"attention.{name}" for name in ("W_a", "W_h", "b", "v", "beta_w", "beta_b")}
    restored = AttentionParams.from_blocks(blocks)
    np.testing.assert_array_equal(restored.W_a, params.W_a)
