"""
Decoder tests - LSTM cell, deep output, generation strategies, checkpoints.
"""
import struct

import numpy as np
import pytest
from scipy.special import expit, softmax

from modules.attention import AnnotationGrid, AttentionWeights, DimensionMismatchError
from modules.decoder import (
    BOS,
    EOS,
    CaptionSequence,
    CheckpointMagicError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    DecoderState,
    caption_bindings,
    caption_graph,
    decode_checkpoint,
    decode_step,
    encode_checkpoint,
    generate,
    generate_batch,
    init_params,
    init_state,
    load_checkpoint,
    location_marginals,
    lstm_step,
    marginal_step_distribution,
    nwgm_distribution,
    output_distribution,
    save_checkpoint,
    teacher_forced_log_likelihood,
    zero_params,
)
from modules.graphcore import evaluate


def test_lstm_step_matches_reference(small_params, small_dims, rng):
    """Test the gate layout i, f, o, g over [E y; h; z]."""
    n = small_dims.n
    embedding = rng.normal(size=small_dims.m)
    state = DecoderState(h=rng.normal(size=n), c=rng.normal(size=n), t=3)
    context = rng.normal(size=small_dims.D)

    pre = np.concatenate([embedding, state.h, context]) @ small_params.lstm_W + small_params.lstm_b
    i, f, o = expit(pre[:n]), expit(pre[n:2 * n]), expit(pre[2 * n:3 * n])
    g = np.tanh(pre[3 * n:])
    c = f * state.c + i * g
    h = o * np.tanh(c)

    new = lstm_step(embedding, state, context, small_params)
    np.testing.assert_allclose(new.c, c, atol=1e-12)
    np.testing.assert_allclose(new.h, h, atol=1e-12)
    assert new.t == 4


def test_deep_output_matches_reference(small_params, small_dims, rng):
    """Test p = softmax((E y + h L_h + z L_z) L_o)."""
    state = DecoderState(h=rng.normal(size=small_dims.n), c=np.zeros(small_dims.n))
    context = rng.normal(size=small_dims.D)
    p = small_params
    expected = softmax((p.E[3] + state.h @ p.L_h + context @ p.L_z) @ p.L_o)
    np.testing.assert_allclose(output_distribution(3, state, context, p), expected, atol=1e-12)


def test_zero_params_give_uniform_words(small_dims, small_grid):
    """Test that an all-zero model predicts the uniform distribution."""
    params = zero_params(small_dims)
    step = decode_step(small_grid, init_state(small_grid, params), BOS, params)
    np.testing.assert_allclose(step.distribution, np.full(small_dims.K, 1.0 / small_dims.K))
    assert step.beta == pytest.approx(0.5)


def test_soft_step(small_params, small_grid):
    """Test one soft-attention step."""
    state = init_state(small_grid, small_params)
    step = decode_step(small_grid, state, BOS, small_params, mode="soft")
    assert step.distribution.sum() == pytest.approx(1.0)
    assert step.weights.L == small_grid.L
    assert step.location is None
    assert 0.0 < step.beta < 1.0
    assert step.state.t == 1


def test_hard_step_with_forced_location(small_params, small_grid):
    """Test that hard mode uses exactly the forced annotation row."""
    state = init_state(small_grid, small_params)
    step = decode_step(small_grid, state, BOS, small_params, mode="hard", location=2)
    assert step.location == 2
    expected = output_distribution(
        BOS,
        lstm_step(small_params.E[BOS], state, small_grid.features[2], small_params),
        small_grid.features[2],
        small_params,
    )
    np.testing.assert_allclose(step.distribution, expected, atol=1e-12)


def test_unknown_mode_rejected(small_params, small_grid):
    """Test rejection of an unknown attention mode."""
    with pytest.raises(ValueError):
        decode_step(small_grid, init_state(small_grid, small_params), BOS, small_params, mode="medium")


@pytest.mark.parametrize("mode", ["soft", "hard"])
def test_greedy_generation_shape(mode, small_params, small_grid):
    """Test that generated captions end in EOS and have one attention row per token."""
    caption, trace = generate(small_grid, small_params, mode=mode, max_len=6)
    assert caption.tokens[-1] == EOS
    assert 1 <= caption.C <= 6
    assert len(trace) == caption.C
    assert trace.matrix().shape == (caption.C, small_grid.L)
    if mode == "hard":
        assert len(trace.sampled_locations) == caption.C
    else:
        assert len(trace.betas) == caption.C


def test_max_len_one_forces_eos(small_params, small_grid):
    """Test that max_len 1 emits only EOS."""
    caption, _ = generate(small_grid, small_params, max_len=1)
    assert caption.tokens == (EOS,)


@pytest.mark.parametrize("mode", ["soft", "hard"])
def test_beam_width_one_equals_greedy(mode, small_params, small_grid):
    """Test that a beam of width 1 reproduces greedy decoding."""
    greedy, _ = generate(small_grid, small_params, mode=mode, strategy="greedy", max_len=8)
    beam, _ = generate(small_grid, small_params, mode=mode, strategy="beam", beam_width=1, max_len=8)
    assert beam == greedy


def test_beam_search_is_deterministic(small_params, small_grid):
    """Test that beam search does not consume randomness."""
    first, _ = generate(small_grid, small_params, strategy="beam", beam_width=3, max_len=8)
    second, _ = generate(small_grid, small_params, strategy="beam", beam_width=3, max_len=8)
    assert first == second


def test_sampling_needs_rng(small_params, small_grid):
    """Test that the sample strategy refuses to run without a generator."""
    with pytest.raises(ValueError):
        generate(small_grid, small_params, strategy="sample")
    with pytest.raises(ValueError):
        generate(small_grid, small_params, mode="hard", sample_attention=True)


def test_sampling_is_reproducible(small_params, small_grid):
    """Test that equal seeds give equal sampled captions."""
    first, _ = generate(small_grid, small_params, strategy="sample", rng=np.random.default_rng(5))
    second, _ = generate(small_grid, small_params, strategy="sample", rng=np.random.default_rng(5))
    assert first == second


@pytest.mark.parametrize("mode", ["soft", "hard"])
def test_batch_generation_matches_single(mode, small_params, small_dims, rng):
    """Test lock-step batched greedy decoding against one-at-a-time decoding."""
    grids = [AnnotationGrid(rng.normal(size=(4, small_dims.D))) for _ in range(3)]
    features = np.stack([g.features for g in grids])
    batched = generate_batch(features, small_params, mode=mode, max_len=7)
    single = [generate(g, small_params, mode=mode, max_len=7)[0] for g in grids]
    assert batched == single


def test_teacher_forcing_matches_unrolled_graph(small_params, small_dims, small_grid, small_caption):
    """Test that eager scoring and the unrolled training graph agree."""
    log_probs, trace = teacher_forced_log_likelihood(small_grid, small_caption, small_params)
    assert len(trace) == small_caption.C

    cg = caption_graph(small_dims, small_caption.C)
    bindings = caption_bindings(
        small_grid.features[np.newaxis],
        np.array([small_caption.tokens]),
        np.array([small_caption.previous]),
        small_dims,
    )
    bindings.update(small_params.to_blocks())
    bindings["lambda_penalty"] = np.zeros(1)
    values = evaluate(cg.graph, bindings)
    assert values[cg.loglik].reshape(-1)[0] == pytest.approx(log_probs.sum(), abs=1e-10)


def test_teacher_forcing_rejects_out_of_vocabulary(small_params, small_grid, small_dims):
    """Test a caption token beyond K."""
    with pytest.raises(ValueError):
        teacher_forced_log_likelihood(small_grid, CaptionSequence((small_dims.K + 3, EOS)), small_params)


def test_nwgm_equals_softmax_of_expected_logits(small_params, small_grid):
    """Test the normalized weighted geometric mean identity."""
    state = init_state(small_grid, small_params)
    marginals = location_marginals(small_grid, state, BOS, small_params)
    np.testing.assert_allclose(marginals.nwgm, marginals.expected_logit_distribution, atol=1e-10)
    assert marginals.marginal.sum() == pytest.approx(1.0)


def test_grid_dimension_mismatch(small_params, rng):
    """Test that a grid of the wrong width is refused."""
    with pytest.raises(DimensionMismatchError):
        generate(AnnotationGrid(rng.normal(size=(4, 9))), small_params)


def test_caption_sequence_validation():
    """Test the single-terminal-EOS invariant."""
    assert CaptionSequence.from_words([4, 5]).tokens == (4, 5, EOS)
    assert CaptionSequence((4, 5, EOS)).previous == (BOS, 4, 5)
    with pytest.raises(ValueError):
        CaptionSequence((4, 5))
    with pytest.raises(ValueError):
        CaptionSequence((EOS, 4, EOS))
    with pytest.raises(ValueError):
        CaptionSequence(())


def test_checkpoint_round_trip(small_params, tmp_path):
    """Test that saved parameters reload bit-identically."""
    path = save_checkpoint(small_params, tmp_path / "nested" / "model.ckpt")
    assert path.read_bytes()[:8] == b"ATTNCKPT"
    restored = load_checkpoint(path)
    assert restored.dims == small_params.dims
    for name, value in small_params.to_blocks().items():
        np.testing.assert_array_equal(restored.to_blocks()[name], value)


def test_checkpoint_errors(small_params):
    """Test magic, version and truncation checks."""
    data = encode_checkpoint(small_params)
    with pytest.raises(CheckpointMagicError):
        decode_checkpoint(b"NOTACKPT" + data[8:])
    with pytest.raises(CheckpointVersionError):
        decode_checkpoint(data[:8] + struct.pack("<I", 99) + data[12:])
    with pytest.raises(CheckpointTruncatedError):
        decode_checkpoint(data[:-5])


def test_parameter_shape_validation(small_params):
    """Test that a block of the wrong shape is refused."""
    with pytest.raises(DimensionMismatchError):
        small_params.replace_blocks({"L_o": np.zeros((2, 2))})


def test_init_is_seeded(small_dims):
    """Test that initialisation depends only on the seed."""
    first = init_params(small_dims, np.random.default_rng(3))
    second = init_params(small_dims, np.random.default_rng(3))
    assert encode_checkpoint(first) == encode_checkpoint(second)


def test_soft_one_hot_weights_equal_forced_hard_step(small_params, small_grid):
    """Test that soft attention on a one-hot alpha with beta fixed at 1 is the hard step at that cell."""
    state = init_state(small_grid, small_params)
    one_hot = AttentionWeights(np.eye(small_grid.L)[1])
    soft = decode_step(small_grid, state, BOS, small_params, mode="soft", weights=one_hot, gate=False)
    hard = decode_step(small_grid, state, BOS, small_params, mode="hard", location=1)
    np.testing.assert_allclose(soft.distribution, hard.distribution, atol=1e-12)
    np.testing.assert_allclose(soft.state.h, hard.state.h, atol=1e-12)
    np.testing.assert_allclose(soft.state.c, hard.state.c, atol=1e-12)


def test_single_location_soft_equals_hard(small_params, small_dims, rng):
    """Test that with one annotation vector both modes decode identically."""
    grid = AnnotationGrid(rng.normal(size=(1, small_dims.D)))
    state = init_state(grid, small_params)
    soft = decode_step(grid, state, BOS, small_params, mode="soft", gate=False)
    hard = decode_step(grid, state, BOS, small_params, mode="hard")
    np.testing.assert_allclose(soft.weights.alpha, [1.0])
    np.testing.assert_allclose(soft.distribution, hard.distribution, atol=1e-12)
    soft_caption, _ = generate(grid, small_params, mode="soft", max_len=6, gate=False)
    hard_caption, _ = generate(grid, small_params, mode="hard", max_len=6)
    assert soft_caption == hard_caption


def test_immediate_eos_gives_empty_caption(small_dims, small_grid):
    """Test a model whose first word is EOS: no words and a one-row trace."""
    params = zero_params(small_dims)
    L_o = np.zeros(params.L_o.shape)
    L_o[:, EOS] = 5.0
    params = params.replace_blocks({"E": np.ones(params.E.shape), "L_o": L_o})
    caption, trace = generate(small_grid, params, max_len=6)
    assert caption.tokens == (EOS,)
    assert caption.words == ()
    assert len(trace) == 1


def test_step_distributions_over_locations(small_params, small_grid):
    """Test the arithmetic and geometric means of the per-location hard steps."""
    state = init_state(small_grid, small_params)
    alpha = decode_step(small_grid, state, BOS, small_params, mode="soft").weights.alpha
    per_location = np.stack([
        decode_step(small_grid, state, BOS, small_params, mode="hard", location=i).distribution
        for i in range(small_grid.L)
    ])
    marginal = marginal_step_distribution(small_grid, state, BOS, small_params)
    np.testing.assert_allclose(marginal, alpha @ per_location, atol=1e-12)
    geometric = np.exp(alpha @ np.log(per_location))
    np.testing.assert_allclose(nwgm_distribution(small_grid, state, BOS, small_params),
                               geometric / geometric.sum(), atol=1e-10)
