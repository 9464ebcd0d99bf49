"""
Training tests - batching, soft loss, hard estimator, optimizers, early stopping.
"""
import numpy as np
import pytest

from modules.attention import AnnotationGrid, DimensionMismatchError
from modules.decoder import CaptionSequence, init_params, zero_params
from modules.evalviz import BleuReport
from modules.graphcore import compare_gradients, finite_difference_gradient
from modules.training import (
    BaselineState,
    EnumerationTooLargeError,
    EpochMetrics,
    HardLossConfig,
    MetricsLog,
    MixedLengthBatchError,
    NonFiniteLossError,
    OptimizerConfig,
    SoftLossConfig,
    TrainingConfig,
    bucket_batches,
    clip_by_global_norm,
    estimator_moments,
    exact_hard_objective,
    exact_log_marginal,
    global_norm,
    hard_gradient_estimate,
    init_optimizer_state,
    length_buckets,
    location_probabilities,
    make_batch,
    optimizer_step,
    read_metrics_log,
    sample_locations,
    soft_loss,
    train,
    trajectories,
    update_baseline,
)


def _no_dropout_soft(lam=1.0):
    return SoftLossConfig(lambda_penalty=lam, dropout_rate=0.0)


def _no_dropout_hard(**overrides):
    values = dict(lambda_r=1.0, lambda_e=0.0, sample_count=1,
                  expectation_substitution_prob=0.0, baseline_decay=0.9, dropout_rate=0.0)
    values.update(overrides)
    return HardLossConfig(**values)


def _fixed_config(mode="soft", **overrides):
    values = dict(
        mode=mode, batch_size=4, max_epochs=3, patience=1, clip_norm=5.0, max_len=6, beta_gate=True,
        soft=_no_dropout_soft(), hard=_no_dropout_hard(),
        optimizer=OptimizerConfig(algorithm="adam", learning_rate=0.01),
    )
    values.update(overrides)
    return TrainingConfig(**values)


# ----------------------------------------------------------------------
# Batching
# ----------------------------------------------------------------------

def test_make_batch_rejects_mixed_lengths(make_examples):
    """Test that a batch must share one caption length."""
    with pytest.raises(MixedLengthBatchError):
        make_batch(make_examples([3, 4]))


def test_batch_previous_tokens(make_examples):
    """Test that teacher-forcing inputs start with BOS and shift right."""
    batch = make_batch(make_examples([4, 4]))
    assert batch.B == 2 and batch.C == 4
    np.testing.assert_array_equal(batch.previous[:, 0], [0, 0])
    np.testing.assert_array_equal(batch.previous[:, 1:], batch.captions[:, :-1])


def test_bucket_batches_cover_corpus_once(make_examples, rng):
    """Test that an epoch visits every example exactly once in same-length batches."""
    corpus = make_examples([2, 3, 3, 4, 2, 3, 5, 3, 3])
    seen = []
    for batch in bucket_batches(corpus, batch_size=2, rng=rng):
        assert len({example.caption.C for example in batch}) == 1
        assert len(batch) <= 2
        seen.extend(id(example) for example in batch)
    assert sorted(seen) == sorted(id(example) for example in corpus)


def test_bucket_order_is_seeded(make_examples):
    """Test that equal seeds give equal batch orders."""
    corpus = make_examples([2, 3, 3, 4, 2, 3])

    def order(seed):
        return [[corpus.index(e) for e in b] for b in bucket_batches(corpus, 2, np.random.default_rng(seed))]

    assert order(7) == order(7)


def test_length_buckets(make_examples):
    """Test grouping of example indices by caption length."""
    assert length_buckets(make_examples([3, 2, 3])) == {2: [1], 3: [0, 2]}


# ----------------------------------------------------------------------
# Soft loss
# ----------------------------------------------------------------------

def test_soft_loss_gradients_match_finite_differences(small_params, make_examples):
    """Test the penalized NLL gradient against central differences."""
    batch = make_batch(make_examples([4, 4], seed=3))
    config = _no_dropout_soft(lam=0.7)
    result = soft_loss(batch, small_params, config)

    def loss_of(blocks):
        return soft_loss(batch, small_params.replace_blocks(blocks), config).loss

    checked = ["L_o", "lstm_W", "attention.W_a", "attention.beta_w", "init_h_W1"]
    numeric = finite_difference_gradient(loss_of, small_params.to_blocks(), checked)
    report = compare_gradients(result.grads, numeric, tolerance=1e-4, abs_floor=1e-7)
    assert report.passed, report.summary()


def test_soft_loss_decomposition(small_params, make_examples):
    """Test loss = nll + lambda * penalty for a batch."""
    batch = make_examples([3, 3, 3], seed=1)
    result = soft_loss(batch, small_params, _no_dropout_soft(lam=2.0))
    assert result.loss == pytest.approx(result.nll + 2.0 * result.penalty)
    assert result.stats.alpha.shape == (3, 4)
    np.testing.assert_allclose(result.stats.alpha.sum(axis=1), np.ones(3))


def test_penalty_values_with_uniform_attention(small_dims, make_examples):
    """Test the coverage penalty when every step attends uniformly."""
    params = zero_params(small_dims)
    for C, expected in ((4, 0.0), (3, 0.25)):
        result = soft_loss(make_examples([C], L=4), params, _no_dropout_soft())
        assert result.penalty == pytest.approx(expected, abs=1e-12)


def test_dropout_needs_rng(small_params, make_examples):
    """Test that dropout is off without a generator and active with one."""
    batch = make_examples([4, 4])
    config = SoftLossConfig(lambda_penalty=1.0, dropout_rate=0.5)
    plain = soft_loss(batch, small_params, config)
    assert plain.loss == soft_loss(batch, small_params, _no_dropout_soft()).loss
    dropped = soft_loss(batch, small_params, config, rng=np.random.default_rng(0))
    assert dropped.loss != plain.loss


# ----------------------------------------------------------------------
# Hard attention
# ----------------------------------------------------------------------

def test_location_probabilities_sum_to_one(tiny_dims, rng):
    """Test that p(s|a) over all trajectories is a distribution."""
    params = init_params(tiny_dims, rng, scale=0.5)
    grid = AnnotationGrid(rng.normal(size=(3, tiny_dims.D)))
    paths, probs = location_probabilities(grid, CaptionSequence((3, 1)), params)
    assert paths.shape == (9, 2)
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_lower_bound_below_log_marginal(tiny_dims, rng):
    """Test Jensen's inequality L_s <= log p(y|a)."""
    params = init_params(tiny_dims, rng, scale=0.8)
    grid = AnnotationGrid(rng.normal(size=(3, tiny_dims.D)))
    caption = CaptionSequence((4, 1))
    exact = exact_hard_objective(grid, caption, params)
    assert exact.value <= exact.log_marginal + 1e-12
    assert exact.log_marginal == pytest.approx(exact_log_marginal(grid, caption, params))


def test_exact_gradient_matches_finite_differences(tiny_dims, rng):
    """Test the enumerated lower-bound gradient numerically."""
    params = init_params(tiny_dims, rng, scale=0.5)
    grid = AnnotationGrid(rng.normal(size=(3, tiny_dims.D)))
    caption = CaptionSequence((2, 1))
    exact = exact_hard_objective(grid, caption, params)

    def value_of(blocks):
        return exact_hard_objective(grid, caption, params.replace_blocks(blocks)).value

    numeric = finite_difference_gradient(value_of, params.to_blocks(), ["L_o", "attention.W_a", "attention.v"])
    report = compare_gradients(exact.grads, numeric, tolerance=1e-4, abs_floor=1e-7)
    assert report.passed, report.summary()


def test_enumeration_limit():
    """Test refusal to enumerate more than 4096 trajectories."""
    assert trajectories(4, 6).shape == (4096, 6)
    with pytest.raises(EnumerationTooLargeError):
        trajectories(9, 4)


def test_baseline_update():
    """Test the moving-average recurrence."""
    state = update_baseline(BaselineState(), -2.0, 0.9)
    assert state.b == pytest.approx(-0.2)
    assert state.k == 1
    assert update_baseline(state, -2.0, 0.9).b == pytest.approx(-0.38)


def test_sample_locations_point_masses(rng):
    """Test inverse-CDF sampling on degenerate rows."""
    weights = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    np.testing.assert_array_equal(sample_locations(weights, rng), [1, 2, 0])


def test_full_substitution_is_deterministic(tiny_dims, rng):
    """Test that substituting every image removes the sampling noise."""
    params = init_params(tiny_dims, rng, scale=0.5)
    grid = AnnotationGrid(rng.normal(size=(3, tiny_dims.D)))
    batch = [(grid, CaptionSequence((3, 1)))]
    config = _no_dropout_hard(expectation_substitution_prob=1.0, sample_count=3)
    first, _ = hard_gradient_estimate(batch, params, config, BaselineState(), np.random.default_rng(1))
    second, _ = hard_gradient_estimate(batch, params, config, BaselineState(), np.random.default_rng(2))
    assert first.substituted == 3
    for name in first.grads:
        np.testing.assert_allclose(first.grads[name], second.grads[name])


def test_hard_estimate_updates_baseline(tiny_dims, rng):
    """Test that one estimate advances the baseline with the sampled log-likelihood."""
    params = init_params(tiny_dims, rng, scale=0.5)
    grid = AnnotationGrid(rng.normal(size=(3, tiny_dims.D)))
    estimate, baseline = hard_gradient_estimate(
        [(grid, CaptionSequence((3, 1)))], params, _no_dropout_hard(sample_count=4), BaselineState(), rng
    )
    assert estimate.sample_count == 4
    assert baseline.k == 1
    assert baseline.b == pytest.approx(0.1 * estimate.mean_log_likelihood)
    _, unchanged = hard_gradient_estimate(
        [(grid, CaptionSequence((3, 1)))], params, _no_dropout_hard(), baseline, rng, update=False
    )
    assert unchanged == baseline


@pytest.mark.slow
def test_hard_estimator_is_unbiased(tiny_dims):
    """Test that the Monte Carlo mean matches the exact gradient within 4 standard errors."""
    rng = np.random.default_rng(11)
    params = init_params(tiny_dims, rng, scale=0.5)
    grid = AnnotationGrid(rng.normal(size=(3, tiny_dims.D)))
    caption = CaptionSequence((2, 1))
    exact = exact_hard_objective(grid, caption, params)
    config = _no_dropout_hard(baseline_decay=1.0)
    samples = [
        hard_gradient_estimate([(grid, caption)], params, config, BaselineState(), rng, update=False)[0].grads
        for _ in range(2000)
    ]
    moments = estimator_moments(samples)
    for name in ("L_o", "attention.v"):
        z = np.abs(moments[name].mean - exact.grads[name]) / np.maximum(moments[name].stderr, 1e-12)
        assert np.mean(z <= 4.0) >= 0.99, name


# ----------------------------------------------------------------------
# Optimizers
# ----------------------------------------------------------------------

@pytest.mark.parametrize("algorithm", ["rmsprop", "adam"])
def test_optimizer_first_step(algorithm, small_params):
    """Test the first update magnitude of each algorithm."""
    config = OptimizerConfig(algorithm=algorithm, learning_rate=0.1)
    state = init_optimizer_state(small_params, config)
    grads = {"L_o": np.full(small_params.L_o.shape, 2.0)}
    new, state = optimizer_step(small_params, grads, state)
    delta = small_params.L_o - new.L_o
    expected = 0.1 * 2.0 / (np.sqrt(0.1 * 4.0) + 1e-8) if algorithm == "rmsprop" else 0.1 * 2.0 / (2.0 + 1e-8)
    np.testing.assert_allclose(delta, expected)
    np.testing.assert_array_equal(new.E, small_params.E)
    assert state.step == 1


def test_optimizer_is_pure(small_params):
    """Test that optimizer_step does not mutate its inputs."""
    state = init_optimizer_state(small_params, OptimizerConfig(algorithm="adam", learning_rate=0.1))
    before = small_params.L_o.copy()
    optimizer_step(small_params, {"L_o": np.ones(small_params.L_o.shape)}, state)
    np.testing.assert_array_equal(small_params.L_o, before)
    assert state.step == 0
    assert not np.any(state.first["L_o"])


@pytest.mark.parametrize("algorithm", ["rmsprop", "adam"])
def test_small_step_decreases_soft_loss(algorithm, small_params, make_examples):
    """Test that one update at lr=1e-4 strictly lowers the loss on a fixed batch."""
    batch = make_batch(make_examples([4, 4, 4], seed=8))
    before = soft_loss(batch, small_params, _no_dropout_soft())
    state = init_optimizer_state(small_params, OptimizerConfig(algorithm=algorithm, learning_rate=1e-4))
    updated, _ = optimizer_step(small_params, before.grads, state)
    assert soft_loss(batch, updated, _no_dropout_soft()).loss < before.loss


def test_optimizer_rejects_bad_gradients(small_params):
    """Test unknown block names and wrong shapes."""
    state = init_optimizer_state(small_params)
    with pytest.raises(DimensionMismatchError):
        optimizer_step(small_params, {"nonexistent": np.ones(1)}, state)
    with pytest.raises(DimensionMismatchError):
        optimizer_step(small_params, {"L_o": np.ones(3)}, state)


def test_clip_by_global_norm():
    """Test joint rescaling and the pass-through case."""
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    clipped, norm = clip_by_global_norm(grads, 1.0)
    assert norm == pytest.approx(5.0)
    assert global_norm(clipped) == pytest.approx(1.0)
    untouched, _ = clip_by_global_norm(grads, 10.0)
    np.testing.assert_array_equal(untouched["a"], [3.0])


# ----------------------------------------------------------------------
# Training loop
# ----------------------------------------------------------------------

def _scripted_validator(scores):
    calls = iter(scores)

    def validate(params, validation):
        score = next(calls)
        return BleuReport(scores=(score, score, score, score), precisions=(score,) * 4,
                          candidate_count=len(validation), reference_count=len(validation))

    return validate


def test_patience_zero_stops_after_one_epoch(small_params, make_examples, rng):
    """Test that patience 0 trains exactly one epoch."""
    corpus = make_examples([3, 3, 4])
    result = train(corpus, small_params, _fixed_config(patience=0, max_epochs=5), corpus, rng,
                   validator=_scripted_validator([0.1]))
    assert len(result.metrics) == 1
    assert result.best_epoch == 1


def test_early_stopping_keeps_best_epoch(small_params, make_examples, rng):
    """Test that the best epoch wins and ties keep the earlier one."""
    corpus = make_examples([3, 3, 4])
    result = train(corpus, small_params, _fixed_config(patience=2, max_epochs=10), corpus, rng,
                   validator=_scripted_validator([0.2, 0.5, 0.5, 0.4, 0.9]))
    assert [m.epoch for m in result.metrics] == [1, 2, 3, 4]
    assert result.best_epoch == 2
    assert result.best_bleu.bleu4 == 0.5


def test_max_epochs_bound(small_params, make_examples, rng):
    """Test that training ends at max_epochs when scores keep improving."""
    corpus = make_examples([3, 3])
    result = train(corpus, small_params, _fixed_config(patience=5, max_epochs=2), corpus, rng,
                   validator=_scripted_validator([0.1, 0.2]))
    assert result.best_epoch == 2
    assert len(result.metrics) == 2


def test_training_writes_metrics_log(small_params, make_examples, rng, tmp_path):
    """Test one key=value record per epoch."""
    corpus = make_examples([3, 4])
    log = MetricsLog(tmp_path / "metrics.log")
    train(corpus, small_params, _fixed_config(mode="hard", patience=0), corpus, rng,
          validator=_scripted_validator([0.3]), metrics_log=log)
    records = read_metrics_log(tmp_path / "metrics.log")
    assert len(records) == 1
    assert records[0].mode == "hard"
    assert records[0].baseline is not None
    assert records[0].bleu4 == pytest.approx(0.3)


def test_soft_training_reduces_loss(small_dims, make_examples):
    """Test that a few soft epochs lower the training loss on a tiny corpus."""
    rng = np.random.default_rng(0)
    corpus = make_examples([4, 4, 4, 4], seed=2)
    params = init_params(small_dims, rng)
    config = _fixed_config(max_epochs=8, patience=8,
                           optimizer=OptimizerConfig(algorithm="adam", learning_rate=0.05))
    result = train(corpus, params, config, corpus, rng, validator=_scripted_validator([0.1] * 8))
    assert result.metrics[-1].loss < result.metrics[0].loss


def test_non_finite_parameters_abort(small_params, make_examples, rng):
    """Test that NaN parameters raise with the block name."""
    broken = small_params.replace_blocks({"L_o": np.full(small_params.L_o.shape, np.nan)})
    corpus = make_examples([3])
    with pytest.raises(NonFiniteLossError):
        train(corpus, broken, _fixed_config(), corpus, rng, validator=_scripted_validator([0.0]))


def test_empty_validation_rejected(small_params, make_examples, rng):
    """Test that training needs validation examples."""
    with pytest.raises(ValueError):
        train(make_examples([3]), small_params, _fixed_config(), [], rng)


def test_metrics_line_format():
    """Test the fixed key order of a metrics record."""
    record = EpochMetrics(epoch=2, mode="soft", loss=1.5, bleu1=0.9, bleu2=0.8, bleu3=0.7, bleu4=0.6,
                          baseline=None, grad_norm=2.0, wall_ms=15)
    line = record.to_line()
    assert line.startswith("epoch=2 mode=soft loss=1.5 ")
    assert "baseline=none" in line
    assert EpochMetrics.from_line(line) == record


def test_hard_training_runs_one_epoch(small_params, make_examples, rng):
    """Test that hard-mode training completes an epoch and moves the parameters."""
    corpus = make_examples([3, 3, 4, 4], seed=5)
    result = train(corpus, small_params, _fixed_config(mode="hard", max_epochs=1, patience=0), corpus, rng,
                   validator=_scripted_validator([0.2]))
    assert len(result.metrics) == 1
    assert result.metrics[0].mode == "hard"
    assert np.isfinite(result.metrics[0].loss)
    assert result.baseline.k > 0
    assert not np.allclose(result.final_params.L_o, small_params.L_o)
    np.testing.assert_array_equal(result.final_params.attention.beta_w, small_params.attention.beta_w)


def test_ungated_soft_loss_has_zero_gate_gradients(small_params, make_examples):
    """Test that soft training without the beta gate leaves the gate blocks untouched."""
    result = soft_loss(make_examples([4, 4], seed=3), small_params, _no_dropout_soft(), gate=False)
    assert result.stats.mean_beta is None
    assert not np.any(result.grads["attention.beta_w"])
    assert not np.any(result.grads["attention.beta_b"])
    assert np.any(result.grads["attention.W_a"])
    assert set(result.grads) == set(small_params.to_blocks())


def test_exact_objective_covers_every_block(tiny_dims, rng):
    """Test that the enumerated gradient has zeros for the unused gate blocks."""
    params = init_params(tiny_dims, rng, scale=0.5)
    grid = AnnotationGrid(rng.normal(size=(3, tiny_dims.D)))
    exact = exact_hard_objective(grid, CaptionSequence((2, 1)), params)
    assert set(exact.grads) == set(params.to_blocks())
    assert not np.any(exact.grads["attention.beta_w"])


@pytest.mark.slow
def test_running_baseline_reduces_variance(tiny_dims):
    """Test that a warmed-up baseline lowers the estimator variance against b=0."""
    rng = np.random.default_rng(21)
    params = init_params(tiny_dims, rng, scale=0.5)
    grid = AnnotationGrid(rng.normal(size=(3, tiny_dims.D)))
    batch = [(grid, CaptionSequence((2, 1)))]
    config = _no_dropout_hard()
    warmed = BaselineState()
    for _ in range(200):
        _, warmed = hard_gradient_estimate(batch, params, config, warmed, rng)
    assert warmed.b < -1.0

    def total_variance(state):
        samples = [hard_gradient_estimate(batch, params, config, state, rng, update=False)[0].grads
                   for _ in range(1000)]
        moments = estimator_moments(samples)
        return sum(float(moments[name].variance.sum()) for name in ("attention.v", "attention.W_a", "attention.W_h"))

    assert total_variance(warmed) < total_variance(BaselineState())
