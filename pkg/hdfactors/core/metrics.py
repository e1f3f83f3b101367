"""
hdfactors.core.metrics
~~~~~~~~~~~~~~~~~~~~~~

This module implements the modularity (DMM) and compactness (DCM)
disentanglement metrics. Both are computed from a change table: every latent
unit is set to each of its values, the modified latent is reconstructed and
classified, and the table records which factor predictions flipped relative
to the unmodified reconstruction.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import softmax
from scipy.stats import entropy

from hdfactors.core import utils
from hdfactors.core.composer import (
    SymbolicObject,
    decode_object,
    encode_object,
    exchange_latent_decoded,
)
from hdfactors.core.memory import FactorId, ItemMemory
from hdfactors.exceptions import ProbeError
from hdfactors.scene import Scene


logger = logging.getLogger(__name__)


class Pipeline(Protocol):
    """What the metrics need from a model.

    A pipeline may also expose ``factor_names`` to label the change table
    columns, ``equivalent`` for skipping class-identical probes and
    ``classify_batch``.
    """

    def encode(self, obj: SymbolicObject) -> Any:
        ...

    def modify(self, latent: Any, unit: Any, value: Any) -> Any:
        ...

    def reconstruct(self, latent: Any) -> np.ndarray:
        ...

    def classify(self, img: np.ndarray) -> SymbolicObject:
        ...


@dataclass(frozen=True)
class LatentUnitSpec:
    """A latent unit and the values it is probed with.

    For symbolic pipelines the unit is a factor and the values index its
    filler codebook.
    """

    unit: Any
    values: Tuple[Any, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise ValueError("Unit {!r} has no values".format(self.unit))

    @classmethod
    def for_factors(cls, memory: ItemMemory) -> List["LatentUnitSpec"]:
        """One unit per factor, probed with every filler of that factor."""
        return [
            cls(name, tuple(range(card))) for name, card in memory.schema.factors
        ]


class SymbolicPipeline:
    """Encode, edit by feature exchange, decode, render and classify.

    Args:
        memory: The item memory.
        scene: Renderer and classifier over the same schema.
    """

    def __init__(self, memory: ItemMemory, scene: Scene) -> None:
        if memory.schema != scene.schema:
            raise ValueError("Memory and scene use different schemas")
        self.memory = memory
        self.scene = scene

    @property
    def factor_names(self) -> List[str]:
        return self.memory.schema.names

    def encode(self, obj: SymbolicObject) -> np.ndarray:
        return encode_object(obj, self.memory)

    def modify(self, latent: np.ndarray, unit: FactorId, value: int) -> np.ndarray:
        return exchange_latent_decoded(latent, value, unit, self.memory)

    def decode(self, latent: np.ndarray) -> SymbolicObject:
        return decode_object(latent, self.memory)

    def reconstruct(self, latent: np.ndarray) -> np.ndarray:
        return self.scene.render(self.decode(latent))

    def classify(self, img: np.ndarray) -> SymbolicObject:
        return self.scene.classify(img)

    def classify_batch(self, images: np.ndarray) -> List[SymbolicObject]:
        return self.scene.classify_batch(images)

    def equivalent(self, obj: SymbolicObject, unit: FactorId, value: int) -> bool:
        """Whether setting ``unit`` to ``value`` leaves the object's class unchanged."""
        index = self.memory.schema.index(unit)
        changed = self.scene.canonicalize(obj.replace(index, value))
        return changed == self.scene.canonicalize(obj)


class ScrambledPipeline(SymbolicPipeline):
    """An entangled pipeline: decoded factors leak into the last two factors.

    Before rendering, the second-to-last factor becomes the sum of all
    factors and the last factor absorbs the second-to-last, both modulo
    their cardinality. A change in any single factor therefore moves at
    least two predictions.
    """

    def decode(self, latent: np.ndarray) -> SymbolicObject:
        values = list(super().decode(latent).values)
        cards = self.memory.schema.cardinalities
        n = len(values)
        if n >= 2:
            mixed = sum(values) % cards[n - 2]
            values[n - 1] = (values[n - 1] + values[n - 2]) % cards[n - 1]
            values[n - 2] = mixed
        return SymbolicObject(tuple(values))


class ChangeTable:
    """Binary prediction flips per probe, plus the baseline predictions.

    Args:
        rows: One row per (object, unit, value) probe, one 0/1 column per factor.
        baseline: The unmodified prediction per object.
    """

    INDEX = ["object", "unit", "value"]

    def __init__(self, rows: pd.DataFrame, baseline: pd.DataFrame) -> None:
        self.rows = rows
        self.baseline = baseline

    @property
    def factors(self) -> List[str]:
        return list(self.rows.columns)

    def __len__(self) -> int:
        return len(self.rows)

    def counts(self) -> pd.DataFrame:
        """Number of flips per unit and factor, summed over objects and values."""
        return self.rows.groupby(level="unit", sort=False).sum()

    def to_csv(self, path: Union[str, Path]) -> Path:
        return utils.write_csv(self.rows, path)

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "ChangeTable":
        rows = pd.read_csv(path, index_col=[0, 1, 2])
        rows.index.names = cls.INDEX
        return cls(rows.astype(int), pd.DataFrame(columns=rows.columns))

    def __repr__(self):
        return (
            f"<ChangeTable: "
            f"{len(self.rows)} probes, "
            f"{len(self.baseline)} objects, "
            f"{len(self.factors)} factors>"
        )


def _probe_object(
    pipeline: Pipeline,
    number: int,
    obj: SymbolicObject,
    units: Sequence[LatentUnitSpec],
    skip_equivalent: bool,
) -> Tuple[Tuple[int, ...], List[Tuple[Any, Any, Tuple[int, ...]]]]:
    try:
        latent = pipeline.encode(obj)
        baseline = tuple(pipeline.classify(pipeline.reconstruct(latent)).values)
    except Exception as error:
        raise ProbeError(number, None, None, error) from error
    probes, images = [], []
    for spec in units:
        for value in spec.values:
            if skip_equivalent and pipeline.equivalent(obj, spec.unit, value):
                continue
            try:
                modified = pipeline.modify(latent, spec.unit, value)
                images.append(pipeline.reconstruct(modified))
            except Exception as error:
                raise ProbeError(number, spec.unit, value, error) from error
            probes.append((spec.unit, value))
    try:
        if hasattr(pipeline, "classify_batch") and images:
            predictions = pipeline.classify_batch(np.stack(images))
        else:
            predictions = [pipeline.classify(img) for img in images]
    except Exception as error:
        raise ProbeError(number, None, None, error) from error
    rows = [
        (unit, value, tuple(int(p != b) for p, b in zip(prediction, baseline)))
        for (unit, value), prediction in zip(probes, predictions)
    ]
    return baseline, rows


def build_change_table(
    pipeline: Pipeline,
    objects: Sequence[SymbolicObject],
    units: Sequence[LatentUnitSpec],
    factors: Optional[Sequence[str]] = None,
    skip_equivalent: bool = False,
    jobs: int = 1,
) -> ChangeTable:
    """Probe every unit with every value on every object.

    Baselines are the classification of each object's unmodified
    reconstruction; ground-truth labels are never consulted.

    Args:
        pipeline: Exposes encode, modify, reconstruct and classify.
        objects: Objects to evaluate.
        units: Latent units and their value sets.
        factors: Column names; defaults to the pipeline's ``factor_names``,
            else ``factor_0``, ``factor_1``, ... sized from the predictions.
        skip_equivalent: Drop probes the pipeline declares class-identical to
            the object itself (requires ``pipeline.equivalent``).
        jobs: Number of worker threads.

    Returns:
        The change table.
    """
    if skip_equivalent and not hasattr(pipeline, "equivalent"):
        raise ValueError("skip_equivalent needs a pipeline with equivalent()")

    def work(item):
        number, obj = item
        return _probe_object(pipeline, number, obj, units, skip_equivalent)

    items = list(enumerate(objects))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(work, items))
    else:
        results = [work(item) for item in items]
    if factors is None:
        factors = getattr(pipeline, "factor_names", None)
    if factors is None:
        width = len(results[0][0]) if results else 0
        factors = ["factor_{}".format(i) for i in range(width)]

    levels, data, baselines = ([], [], []), [], []
    for number, (baseline, rows) in enumerate(results):
        baselines.append(baseline)
        for unit, value, flags in rows:
            for level, key in zip(levels, (number, unit, value)):
                level.append(key)
            data.append(flags)
    rows = pd.DataFrame(
        np.asarray(data, dtype=int).reshape(len(data), len(factors)),
        index=pd.MultiIndex.from_arrays(list(levels), names=ChangeTable.INDEX),
        columns=list(factors),
    )
    baseline = pd.DataFrame(baselines, columns=list(factors))
    baseline.index.name = "object"
    logger.info("Change table: %d objects, %d probes", len(baseline), len(rows))
    return ChangeTable(rows, baseline)


def _check(table: ChangeTable) -> None:
    if len(table) == 0:
        raise ValueError("empty change table")


def unit_dmm(table: ChangeTable) -> pd.Series:
    """Entropy (nats) of the softmax of each unit's flip counts."""
    _check(table)
    counts = table.counts()
    return pd.Series(
        [entropy(softmax(row.to_numpy(dtype=float))) for _, row in counts.iterrows()],
        index=counts.index,
        name="dmm",
    )


def unit_dcm(table: ChangeTable) -> pd.Series:
    """Mean ``|flips - 1|`` over each unit's probes."""
    _check(table)
    deviation = (table.rows.sum(axis=1) - 1).abs()
    return deviation.groupby(level="unit", sort=False).mean().rename("dcm")


def dmm(table: ChangeTable) -> float:
    """Disentanglement modularity: mean per-unit entropy of softmaxed flip counts."""
    return float(unit_dmm(table).mean())


def dcm(table: ChangeTable) -> float:
    """Disentanglement compactness: mean per-unit deviation from one flip per probe."""
    return float(unit_dcm(table).mean())


@dataclass
class MetricReport:
    """DMM and DCM scores with their per-unit breakdown and run metadata."""

    dmm: float
    dcm: float
    units: pd.DataFrame
    metadata: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_table(
        cls, table: ChangeTable, metadata: Optional[Dict] = None
    ) -> "MetricReport":
        units = pd.concat([unit_dmm(table), unit_dcm(table)], axis=1)
        units["probes"] = table.rows.groupby(level="unit", sort=False).size()
        metadata = dict(metadata or {}, objects=len(table.baseline))
        return cls(dmm(table), dcm(table), units, metadata)

    def to_dict(self) -> Dict[str, Any]:
        units = self.units.reset_index()
        return {
            "dmm": self.dmm,
            "dcm": self.dcm,
            "units": [
                {
                    "unit": str(row["unit"]),
                    "dmm": float(row["dmm"]),
                    "dcm": float(row["dcm"]),
                    "probes": int(row["probes"]),
                }
                for _, row in units.iterrows()
            ],
            "metadata": self.metadata,
        }

    def save(self, path: Union[str, Path]) -> Path:
        return utils.dump_json(self.to_dict(), path)

    def __repr__(self):
        return f"<MetricReport: DMM={self.dmm:.4f}, DCM={self.dcm:.4f}>"
