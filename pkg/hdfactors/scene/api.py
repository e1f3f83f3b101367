"""
hdfactors.scene.api
~~~~~~~~~~~~~~~~~~~

This module implements the high-level API of the scene sub-package, a
renderer and its exact inverse classifier bundled around one configuration.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np

from hdfactors.core import utils as core_utils
from hdfactors.core.composer import SymbolicObject
from hdfactors.core.memory import FactorSchema
from hdfactors.scene import core, utils


logger = logging.getLogger(__name__)


class Scene:
    """Sprite renderer with a template-matching classifier.

    Args:
        config: Render configuration. Defaults to a 64x64 frame over the
            reduced metric schema.
    """

    def __init__(self, config: Optional[core.RenderConfig] = None) -> None:
        self.config = config or core.RenderConfig()

    @classmethod
    def for_schema(cls, schema: FactorSchema, **kwargs) -> "Scene":
        return cls(core.RenderConfig(schema=schema, **kwargs))

    @property
    def schema(self) -> FactorSchema:
        return self.config.schema

    def render(self, obj: SymbolicObject) -> core.Image:
        """Render one object."""
        return core.render(obj, self.config)

    def render_batch(self, objects: Iterable[SymbolicObject]) -> np.ndarray:
        """Render objects into a (B, H, W) stack."""
        images = [self.render(obj) for obj in objects]
        if not images:
            return np.empty((0, self.config.height, self.config.width))
        return np.stack(images)

    def classify(self, img: core.Image) -> SymbolicObject:
        """Classify one image."""
        return core.classify(img, self.config)

    def classify_batch(self, images: np.ndarray) -> List[SymbolicObject]:
        return [
            SymbolicObject(tuple(values))
            for values in core.classify_batch(images, self.config)
        ]

    def canonicalize(self, obj: SymbolicObject) -> SymbolicObject:
        return core.canonicalize(obj, self.config)

    @staticmethod
    def iou(a: core.Image, b: core.Image) -> float:
        return core.iou(a, b)

    def audit(self) -> None:
        """Verify the renderer is injective up to orientation symmetry."""
        core.templates(self.config).audit()

    def write(self, obj: SymbolicObject, path: Union[str, Path]) -> Path:
        """Render an object into a PGM file."""
        return utils.write_pgm(self.render(obj), path)

    def write_batch(
        self,
        objects: Iterable[SymbolicObject],
        directory: Union[str, Path],
        metadata: Optional[Dict[str, Any]] = None,
    ) -> Path:
        """Render objects into a directory of PGM files plus ``index.json``.

        Args:
            objects: Objects to render.
            directory: Output directory, created if missing.
            metadata: Extra entries for the index, e.g. the experiment config.
        """
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        for number, obj in enumerate(objects):
            name = "{:06d}.pgm".format(number)
            utils.write_pgm(self.render(obj), directory / name)
            entries.append({"file": name, "object": list(obj.values)})
        logger.info("Rendered %d images into %s", len(entries), directory)
        return core_utils.dump_json(
            dict(metadata or {}, render=self.config.to_dict(), images=entries),
            directory / "index.json",
        )

    def read(self, path: Union[str, Path]) -> core.Image:
        return utils.read_pgm(path)

    def __repr__(self):
        return (
            f"<Scene: "
            f"{self.config.width}x{self.config.height}, "
            f"schema={self.config.schema.cardinalities}>"
        )
