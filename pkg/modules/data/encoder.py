"""
Toy patch encoder: scene -> AnnotationGrid.

Row i of the grid describes cell i (row-major). Its columns are
    [one-hot color | one-hot shape | occupancy | x | y]
with x = (col + 0.5) / g and y = (row + 0.5) / g.
"""

from typing import Optional

import numpy as np

from modules.attention import AnnotationGrid

from .scenes import Scene, SceneObject, SceneSpec


def clean_features(scene: Scene, spec: SceneSpec) -> np.ndarray:
    g = spec.grid_side
    n_colors, n_shapes = len(spec.colors), len(spec.shapes)
    features = np.zeros((spec.L, spec.feature_dim), dtype=np.float64)
    rows, cols = np.divmod(np.arange(spec.L), g)
    features[:, -2] = (cols + 0.5) / g
    features[:, -1] = (rows + 0.5) / g
    for obj in scene.objects:
        features[obj.cell, spec.colors.index(obj.color)] = 1.0
        features[obj.cell, n_colors + spec.shapes.index(obj.shape)] = 1.0
        features[obj.cell, n_colors + n_shapes] = 1.0
    return features


def encode_scene(
    scene: Scene,
    spec: SceneSpec,
    rng: Optional[np.random.Generator] = None,
    noise_sigma: Optional[float] = None
) -> AnnotationGrid:
    """
    Encode a scene as per-cell feature vectors plus Gaussian noise.

    Args:
        scene: Scene laid out on spec.grid_side
        spec: Scene spec fixing the color and shape orderings
        rng: Noise source; required when the noise level is positive
        noise_sigma: Noise standard deviation; spec.noise_sigma by default

    Returns:
        AnnotationGrid of shape (g*g, |colors| + |shapes| + 3)
    """
    if scene.grid_side != spec.grid_side:
        raise ValueError(f"Scene grid side {scene.grid_side} does not match spec grid side {spec.grid_side}")
    sigma = spec.noise_sigma if noise_sigma is None else noise_sigma
    features = clean_features(scene, spec)
    if sigma > 0.0:
        if rng is None:
            raise ValueError("An rng is required for noisy encoding")
        features = features + rng.normal(0.0, sigma, size=features.shape)
    return AnnotationGrid(features)


def scene_from_grid(grid: AnnotationGrid, spec: SceneSpec) -> Optional[Scene]:
    """
    Recover the objects of a grid written by encode_scene.

    Occupancy above 0.5 marks an object; its color and shape are the largest
    one-hot entries. Returns None when the grid does not have the spec's shape.
    """
    if grid.features.shape != (spec.L, spec.feature_dim):
        return None
    n_colors, n_shapes = len(spec.colors), len(spec.shapes)
    objects = []
    for cell, row in enumerate(grid.features):
        if row[n_colors + n_shapes] > 0.5:
            color = spec.colors[int(np.argmax(row[:n_colors]))]
            shape = spec.shapes[int(np.argmax(row[n_colors:n_colors + n_shapes]))]
            objects.append(SceneObject(color, shape, cell))
    return Scene(spec.grid_side, tuple(objects))
