"""
Synthetic Scene Corpus

Scenes are g x g grids holding a few objects, each a distinct
(color, shape) pair in its own cell. A caption instantiates a template such
as "a {color} {shape} left of a {color} {shape}" on objects that satisfy the
template's relation. Every color and shape word is aligned to the cell of
the object it names.

Relations between the first two objects of a template:
    left of   column of the first < column of the second
    right of  column of the first > column of the second
    above     row of the first < row of the second
    below     row of the first > row of the second
"""

import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from PIL import Image, ImageDraw
from pydantic import BaseModel, Field, field_validator

from utils.config_loader import get_config

logger = logging.getLogger(__name__)

COLOR_SLOT = "{color}"
SHAPE_SLOT = "{shape}"
RELATIONS = ("left of", "right of", "above", "below")
MAX_ATTEMPTS = 1000

T = TypeVar("T")


class SceneSpecError(ValueError):
    """The scene spec cannot produce valid scenes."""


class SceneSpec(BaseModel):
    grid_side: int = Field(default_factory=lambda: get_config("data.grid_side", 4), ge=1)
    colors: List[str] = Field(default_factory=lambda: get_config("data.colors", ["red", "green", "blue"]))
    shapes: List[str] = Field(default_factory=lambda: get_config("data.shapes", ["square", "circle", "triangle"]))
    objects_per_scene: Tuple[int, int] = Field(default_factory=lambda: tuple(get_config("data.objects_per_scene", [1, 3])))
    templates: List[str] = Field(default_factory=lambda: get_config("data.templates", ["a {color} {shape}"]))
    noise_sigma: float = Field(default_factory=lambda: get_config("data.noise_sigma", 0.05), ge=0.0)

    @field_validator("colors", "shapes", "templates")
    @classmethod
    def non_empty(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("must contain at least one entry")
        if len(set(value)) != len(value):
            raise ValueError("entries must be distinct")
        return value

    @property
    def L(self) -> int:
        return self.grid_side * self.grid_side

    @property
    def feature_dim(self) -> int:
        """one-hot color + one-hot shape + occupancy + 2 coordinates"""
        return len(self.colors) + len(self.shapes) + 3


@dataclass(frozen=True)
class SceneObject:
    color: str
    shape: str
    cell: int


@dataclass(frozen=True)
class Description:
    """One template instantiation: words and word position -> cell for color/shape words."""
    tokens: Tuple[str, ...]
    alignment: Dict[int, int]
    template_index: int


@dataclass(frozen=True)
class Scene:
    grid_side: int
    objects: Tuple[SceneObject, ...]
    descriptions: Tuple[Description, ...] = field(default_factory=tuple)

    @property
    def caption(self) -> Tuple[str, ...]:
        return self.descriptions[0].tokens

    @property
    def alignment(self) -> Dict[int, int]:
        return self.descriptions[0].alignment

    @property
    def references(self) -> Tuple[Tuple[str, ...], ...]:
        return tuple(d.tokens for d in self.descriptions)

    @property
    def cell_contents(self) -> Tuple[Tuple[Optional[Tuple[str, str]], ...], ...]:
        cells: List[Optional[Tuple[str, str]]] = [None] * (self.grid_side * self.grid_side)
        for obj in self.objects:
            cells[obj.cell] = (obj.color, obj.shape)
        g = self.grid_side
        return tuple(tuple(cells[row * g:(row + 1) * g]) for row in range(g))


def template_tokens(template: str) -> Tuple[str, ...]:
    return tuple(template.lower().split())


def template_arity(template: str) -> int:
    """Number of {color} {shape} slots."""
    tokens = template_tokens(template)
    colors = tokens.count(COLOR_SLOT)
    if colors != tokens.count(SHAPE_SLOT):
        raise SceneSpecError(f"Template '{template}' has unmatched {{color}}/{{shape}} slots")
    for i, token in enumerate(tokens):
        if token == COLOR_SLOT and (i + 1 >= len(tokens) or tokens[i + 1] != SHAPE_SLOT):
            raise SceneSpecError(f"Template '{template}': every {{color}} must be followed by {{shape}}")
    return colors


def template_relation(template: str) -> Optional[str]:
    text = " ".join(template_tokens(template))
    for relation in RELATIONS:
        if f" {relation} " in f" {text} ":
            return relation
    return None


def relation_holds(relation: Optional[str], first: SceneObject, second: SceneObject, grid_side: int) -> bool:
    if relation is None:
        return True
    row1, col1 = divmod(first.cell, grid_side)
    row2, col2 = divmod(second.cell, grid_side)
    if relation == "left of":
        return col1 < col2
    if relation == "right of":
        return col1 > col2
    if relation == "above":
        return row1 < row2
    return row1 > row2


def validate_spec(spec: SceneSpec) -> None:
    """
    Check that the spec can place its objects and caption them.

    Raises:
        SceneSpecError: object counts do not fit, or no template is usable
    """
    low, high = spec.objects_per_scene
    if low < 1 or low > high:
        raise SceneSpecError(f"objects_per_scene must satisfy 1 <= min <= max, got {spec.objects_per_scene}")
    if high > spec.L:
        raise SceneSpecError(f"{high} objects do not fit in a {spec.grid_side}x{spec.grid_side} grid")
    if high > len(spec.colors) * len(spec.shapes):
        raise SceneSpecError(
            f"{high} objects need distinct (color, shape) pairs but only "
            f"{len(spec.colors) * len(spec.shapes)} exist"
        )
    arities = [template_arity(t) for t in spec.templates]
    if any(a < 1 for a in arities):
        raise SceneSpecError("Every template needs at least one {color} {shape} slot")
    if min(arities) > high:
        raise SceneSpecError(f"No template can be filled with at most {high} objects")


def instantiate(spec: SceneSpec, template_index: int, objects: Sequence[SceneObject]) -> Description:
    tokens: List[str] = []
    alignment: Dict[int, int] = {}
    slot = 0
    for token in template_tokens(spec.templates[template_index]):
        if token == COLOR_SLOT:
            alignment[len(tokens)] = objects[slot].cell
            tokens.append(objects[slot].color)
        elif token == SHAPE_SLOT:
            alignment[len(tokens)] = objects[slot].cell
            tokens.append(objects[slot].shape)
            slot += 1
        else:
            tokens.append(token)
    return Description(tuple(tokens), alignment, template_index)


def describe(spec: SceneSpec, objects: Sequence[SceneObject]) -> List[Description]:
    """Every valid template instantiation on the given objects, in template then object order."""
    descriptions = []
    for index, template in enumerate(spec.templates):
        arity = template_arity(template)
        relation = template_relation(template)
        for chosen in itertools.permutations(objects, arity):
            if arity >= 2 and not relation_holds(relation, chosen[0], chosen[1], spec.grid_side):
                continue
            descriptions.append(instantiate(spec, index, chosen))
    return descriptions


def generate_scene(spec: SceneSpec, rng: np.random.Generator) -> Scene:
    """
    Place objects at random and pick one describable instantiation as the caption.

    The remaining objects are distractors. All other valid instantiations
    follow the primary one in `descriptions`.
    """
    low, high = spec.objects_per_scene
    pairs = [(color, shape) for color in spec.colors for shape in spec.shapes]
    for _ in range(MAX_ATTEMPTS):
        count = int(rng.integers(low, high + 1))
        cells = rng.choice(spec.L, size=count, replace=False)
        kinds = rng.choice(len(pairs), size=count, replace=False)
        objects = tuple(SceneObject(pairs[k][0], pairs[k][1], int(cell)) for k, cell in zip(kinds, cells))
        options = describe(spec, objects)
        if not options:
            continue
        primary = options[int(rng.integers(len(options)))]
        seen = {primary.tokens}
        rest = []
        for option in options:
            if option.tokens not in seen:
                seen.add(option.tokens)
                rest.append(option)
        return Scene(spec.grid_side, objects, (primary,) + tuple(rest))
    raise SceneSpecError(f"Could not generate a describable scene in {MAX_ATTEMPTS} attempts")


def generate_corpus(spec: SceneSpec, count: int, rng: np.random.Generator) -> List[Scene]:
    """
    Generate `count` scenes; scene i draws from the i-th child stream of rng.

    Raises:
        SceneSpecError: the spec cannot produce scenes
        ValueError: count < 1
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    validate_spec(spec)
    scenes = [generate_scene(spec, child) for child in rng.spawn(count)]
    logger.info("Generated %d scenes", len(scenes))
    return scenes


def split_corpus(items: Sequence[T]) -> Tuple[List[T], List[T], List[T]]:
    """80/10/10 train/validation/test split by index."""
    n = len(items)
    n_train = int(0.8 * n)
    n_val = int(0.1 * n)
    return list(items[:n_train]), list(items[n_train:n_train + n_val]), list(items[n_train + n_val:])


def length_histogram(scenes: Sequence[Scene]) -> Dict[int, int]:
    """Caption length C (words plus EOS) -> number of scenes."""
    return dict(sorted(Counter(len(scene.caption) + 1 for scene in scenes).items()))


def render_scene(scene: Scene, spec: SceneSpec, cell_px: int = 16) -> np.ndarray:
    """
    Grayscale raster of a scene for blending under heatmaps.

    Each color maps to its own gray level; shapes are drawn inside their
    cell with a small margin. Unknown shape names are drawn as squares.

    Returns:
        uint8 array of shape (g * cell_px, g * cell_px)
    """
    g = scene.grid_side
    image = Image.new("L", (g * cell_px, g * cell_px), color=0)
    draw = ImageDraw.Draw(image)
    margin = max(1, cell_px // 8)
    for obj in scene.objects:
        level = 80 + int(175 * (spec.colors.index(obj.color) + 1) / len(spec.colors)) if obj.color in spec.colors else 255
        row, col = divmod(obj.cell, g)
        x0, y0 = col * cell_px + margin, row * cell_px + margin
        x1, y1 = (col + 1) * cell_px - margin - 1, (row + 1) * cell_px - margin - 1
        xm, ym = (x0 + x1) / 2, (y0 + y1) / 2
        if obj.shape == "circle":
            draw.ellipse([x0, y0, x1, y1], fill=level)
        elif obj.shape == "triangle":
            draw.polygon([(xm, y0), (x1, y1), (x0, y1)], fill=level)
        elif obj.shape == "diamond":
            draw.polygon([(xm, y0), (x1, ym), (xm, y1), (x0, ym)], fill=level)
        elif obj.shape == "cross":
            bar = max(1, (x1 - x0) // 3)
            draw.rectangle([xm - bar / 2, y0, xm + bar / 2, y1], fill=level)
            draw.rectangle([x0, ym - bar / 2, x1, ym + bar / 2], fill=level)
        else:
            draw.rectangle([x0, y0, x1, y1], fill=level)
    return np.asarray(image, dtype=np.uint8)
