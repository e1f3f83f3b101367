"""
hdfactors.scene.utils
~~~~~~~~~~~~~~~~~~~~~

This module implements plain-text image I/O (PGM, variant P2).
"""

from pathlib import Path
from typing import Union

import numpy as np

from hdfactors.exceptions import ContainerFormatError


def write_pgm(img: np.ndarray, path: Union[str, Path], maxval: int = 255) -> Path:
    """Write a grayscale image in [0, 1] as plain-text PGM.

    Args:
        img: A (H, W) array.
        path: Target file.
        maxval: Largest gray value.

    Returns:
        The written path.
    """
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError("Expected a 2D image, got shape {}".format(img.shape))
    levels = np.rint(np.clip(img, 0.0, 1.0) * maxval).astype(int)
    height, width = levels.shape
    lines = ["P2", "{} {}".format(width, height), str(maxval)]
    lines.extend(" ".join(str(level) for level in row) for row in levels)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    """Read a plain-text PGM file into a float array in [0, 1]."""
    tokens = []
    with Path(path).open("r", encoding="ascii") as file:
        for row in file:
            tokens.extend(row.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise ContainerFormatError("'{}' is not a plain-text PGM file".format(path))
    try:
        width, height, maxval = (int(token) for token in tokens[1:4])
        levels = np.array([int(token) for token in tokens[4:]], dtype=float)
    except ValueError as error:
        raise ContainerFormatError("Corrupt PGM file '{}': {}".format(path, error))
    if levels.size != width * height or maxval <= 0:
        raise ContainerFormatError(
            "PGM file '{}' holds {} values for a {}x{} image".format(
                path, levels.size, width, height
            )
        )
    return levels.reshape(height, width) / maxval
