"""
Pytest configuration and fixtures for testing.
"""
import numpy as np
import pytest

from modules.attention import AnnotationGrid
from modules.data import SceneSpec
from modules.decoder import CaptionSequence, ModelDims, init_params
from modules.training import TrainingExample


@pytest.fixture
def rng():
    """Fresh seeded generator per test."""
    return np.random.default_rng(1234)


@pytest.fixture
def small_dims():
    """Decoder sizes small enough for finite differences."""
    return ModelDims.of(K=8, m=5, n=6, D=4, A=5)


@pytest.fixture
def tiny_dims():
    """Sizes for exact enumeration and Monte Carlo tests (L=3, C=2)."""
    return ModelDims.of(K=6, m=4, n=4, D=4, A=4)


@pytest.fixture
def small_params(small_dims, rng):
    return init_params(small_dims, rng, scale=0.5)


@pytest.fixture
def small_grid(small_dims, rng):
    """Four locations (a 2x2 layout)."""
    return AnnotationGrid(rng.normal(size=(4, small_dims.D)))


@pytest.fixture
def small_caption():
    return CaptionSequence((3, 5, 4, 1))


@pytest.fixture
def make_examples(small_dims):
    """Factory for random training examples of the given caption lengths."""

    def make(lengths, seed=0, L=4):
        local = np.random.default_rng(seed)
        examples = []
        for C in lengths:
            words = local.integers(2, small_dims.K, size=C - 1).tolist()
            grid = AnnotationGrid(local.normal(size=(L, small_dims.D)))
            examples.append(TrainingExample(grid, CaptionSequence.from_words(words)))
        return examples

    return make


@pytest.fixture
def tiny_spec():
    """2x2 grid with two colors and two shapes, noise off."""
    return SceneSpec(
        grid_side=2,
        colors=["red", "blue"],
        shapes=["square", "circle"],
        objects_per_scene=(1, 2),
        templates=["a {color} {shape}", "a {color} {shape} left of a {color} {shape}"],
        noise_sigma=0.0,
    )


@pytest.fixture
def default_spec():
    """Scene spec with the built-in defaults."""
    return SceneSpec()
