"""
Heatmap export as 8-bit P5 graymaps plus a tab-separated manifest.

Files are named <prefix>_<timestep>_<word>.pgm next to <prefix>_manifest.tsv,
whose lines are "timestep<TAB>word<TAB>filename".
"""

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from PIL import Image

from .heatmaps import Heatmap, blend_heatmap

MANIFEST_SUFFIX = "_manifest.tsv"


@dataclass
class ExportResult:
    manifest: Path
    files: List[Path] = field(default_factory=list)


def _safe_word(word: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9]+", "", word)
    return cleaned or "w"


def to_bytes(intensities: np.ndarray) -> np.ndarray:
    """[0, 1] floats -> uint8 with rounding, so a read-back is within 0.5/255."""
    return np.clip(np.rint(np.asarray(intensities) * 255.0), 0, 255).astype(np.uint8)


def write_graymap(pixels: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path, format="PPM")
    return path


def read_graymap(path: Union[str, Path]) -> np.ndarray:
    """Read a P5 file back as floats in [0, 1]."""
    with Image.open(path) as image:
        if image.mode != "L":
            raise ValueError(f"{path} is not an 8-bit graymap (mode {image.mode})")
        return np.asarray(image, dtype=np.float64) / 255.0


def export_heatmaps(
    heatmaps: Sequence[Heatmap],
    path_prefix: Union[str, Path],
    base_image: Optional[np.ndarray] = None,
    blend_alpha: float = 0.6
) -> ExportResult:
    """
    Write one graymap per heatmap and the manifest.

    Args:
        heatmaps: Maps to write, in timestep order
        path_prefix: Output path prefix; missing parent directories are created
        base_image: Optional 8-bit scene raster to blend under each map
        blend_alpha: Weight of the heatmap in the blend

    Returns:
        ExportResult listing the manifest and image files

    Raises:
        OSError: the location is not writable
    """
    prefix = Path(path_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    result = ExportResult(manifest=prefix.parent / (prefix.name + MANIFEST_SUFFIX))
    rows = []
    for heatmap in heatmaps:
        filename = f"{prefix.name}_{heatmap.timestep:03d}_{_safe_word(heatmap.word)}.pgm"
        pixels = blend_heatmap(heatmap, base_image, blend_alpha) if base_image is not None else to_bytes(heatmap.intensities)
        result.files.append(write_graymap(pixels, prefix.parent / filename))
        rows.append(f"{heatmap.timestep}\t{heatmap.word}\t{filename}\n")
    with open(result.manifest, "w", encoding="utf-8") as f:
        f.writelines(rows)
    return result


def read_manifest(path: Union[str, Path]) -> List[tuple]:
    """Manifest rows as (timestep, word, filename)."""
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                timestep, word, filename = line.rstrip("\n").split("\t")
                rows.append((int(timestep), word, filename))
    return rows
