"""
hdfactors.config
~~~~~~~~~~~~~~~~

This module implements the experiment configuration: defaults, JSON
loading, validation and the resolved form echoed into every output.
"""

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from hdfactors.core import utils
from hdfactors.core.composer import MULTI, SINGLE, CompositionalExclusion
from hdfactors.core.memory import FactorSchema
from hdfactors.core.vectors import SpaceConfig
from hdfactors.exceptions import ConfigError


PRESETS = {"dsprites": FactorSchema.dsprites, "metric": FactorSchema.metric}

DEFAULT_SIGMAS = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)
DEFAULT_DIMS = (16, 32, 64, 128, 512, 1024, 2048)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


def resolve_schema(
    source: Union[str, Sequence, FactorSchema], base: Optional[Path] = None
) -> FactorSchema:
    """Turn a preset name, an inline list or a JSON file path into a schema.

    Args:
        source: ``"dsprites"``, ``"metric"``, ``[[name, cardinality], ...]`` or
            a path to a JSON file holding such a list.
        base: Directory relative paths are resolved against.
    """
    if isinstance(source, FactorSchema):
        return source
    try:
        if isinstance(source, str):
            if source in PRESETS:
                return PRESETS[source]()
            path = Path(source)
            if base is not None and not path.is_absolute():
                path = base / path
            if not path.is_file():
                raise ConfigError(
                    "Schema '{}' is neither a preset nor a file".format(source)
                )
            return FactorSchema.from_list(utils.load_json(path))
        return FactorSchema.from_list(source)
    except ConfigError:
        raise
    except (TypeError, ValueError) as error:
        raise ConfigError("Invalid schema {!r}: {}".format(source, error))


@dataclass
class ExperimentConfig:
    """Everything an experiment run depends on.

    Args:
        schema: Schema for the algebra commands (round trip, exchange, pairs).
        metric_schema: Schema for rendering, classification and metrics.
        dim: Vector dimension D.
        master_seed: Seed of codebooks, noise and datasets.
        exclusion: Drop squares in the right half from generated pairs.
        mode: ``"single"`` or ``"multi"`` difference pairs.
        differences: Number of differing factors in multi mode.
        sigmas: Noise levels in units of 1/sqrt(D).
        dims: Dimensions of the ablation.
        seeds: Master seeds of the stability run.
        objects: Number of evaluation objects for the metrics.
        canonical_objects: Draw evaluation objects whose orientation is
            canonical for every shape.
        skip_equivalent: Drop probes that leave the object's class unchanged.
        jobs: Worker threads for the change table.
        width: Frame width in pixels.
        height: Frame height in pixels.
    """

    schema: Any = "dsprites"
    metric_schema: Any = "metric"
    dim: int = 1024
    master_seed: int = 0
    exclusion: bool = False
    mode: str = SINGLE
    differences: int = 1
    sigmas: Tuple[float, ...] = DEFAULT_SIGMAS
    dims: Tuple[int, ...] = DEFAULT_DIMS
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    objects: int = 50
    canonical_objects: bool = True
    skip_equivalent: bool = True
    jobs: int = 1
    width: int = 64
    height: int = 64

    @classmethod
    def from_dict(
        cls, data: Dict[str, Any], base: Optional[Path] = None
    ) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError("Unknown config keys: {}".format(sorted(unknown)))
        config = cls(**data)
        config.schema = resolve_schema(config.schema, base)
        config.metric_schema = resolve_schema(config.metric_schema, base)
        return config.validate()

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = utils.load_json(path)
        except (OSError, ValueError) as error:
            raise ConfigError("Cannot read config '{}': {}".format(path, error))
        if not isinstance(data, dict):
            raise ConfigError("Config '{}' must hold a JSON object".format(path))
        # Reports and manifests embed their config, so they can be rerun.
        if isinstance(data.get("config"), dict):
            data = data["config"]
        return cls.from_dict(data, base=path.parent)

    def override(self, **changes) -> "ExperimentConfig":
        """A validated copy with the non-None ``changes`` applied."""
        changes = {key: value for key, value in changes.items() if value is not None}
        for key in ("schema", "metric_schema"):
            if key in changes:
                changes[key] = resolve_schema(changes[key])
        return replace(self, **changes).validate()

    def validate(self) -> "ExperimentConfig":
        self.schema = resolve_schema(self.schema)
        self.metric_schema = resolve_schema(self.metric_schema)
        self.sigmas = tuple(float(s) for s in self.sigmas)
        self.dims = tuple(int(d) for d in self.dims)
        self.seeds = tuple(int(s) for s in self.seeds)
        try:
            SpaceConfig(self.dim, self.master_seed)
            for dim in self.dims:
                SpaceConfig(dim, self.master_seed)
            for seed in self.seeds:
                SpaceConfig(self.dim, seed)
        except ValueError as error:
            raise ConfigError(str(error))
        if self.mode not in (SINGLE, MULTI):
            raise ConfigError("Mode must be '{}' or '{}'".format(SINGLE, MULTI))
        if not 1 <= self.differences <= len(self.schema):
            raise ConfigError(
                "Differences must lie in [1, {}]".format(len(self.schema))
            )
        if any(s < 0 for s in self.sigmas):
            raise ConfigError("Noise levels must be non-negative")
        if self.objects < 1 or self.jobs < 1:
            raise ConfigError("objects and jobs must be positive")
        if self.exclusion:
            try:
                CompositionalExclusion(self.schema)
            except KeyError as error:
                raise ConfigError(
                    "Exclusion needs shape and posX factors: {}".format(error)
                )
        return self

    @property
    def space(self) -> SpaceConfig:
        return SpaceConfig(self.dim, self.master_seed)

    def to_dict(self) -> Dict[str, Any]:
        """The fully resolved configuration, JSON serializable."""
        data = asdict(self)
        data["schema"] = self.schema.to_list()
        data["metric_schema"] = self.metric_schema.to_list()
        for key in ("sigmas", "dims", "seeds"):
            data[key] = list(data[key])
        return data
