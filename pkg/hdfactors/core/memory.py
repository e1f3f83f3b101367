"""
hdfactors.core.memory
~~~~~~~~~~~~~~~~~~~~~

This module implements the item memory: frozen role and filler codebooks,
cleanup by cosine similarity, softmax attention readout and the binary
memory container.
"""

from dataclasses import dataclass
import logging
from pathlib import Path
import struct
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import softmax

from hdfactors.core import utils
from hdfactors.core.vectors import Hypervector, SpaceConfig, sample_seed
from hdfactors.exceptions import (
    ContainerFormatError,
    DegenerateVectorError,
    DimensionMismatchError,
    InvalidObjectError,
    UnknownFactorError,
)


logger = logging.getLogger(__name__)

MAGIC = b"ARSYD01"
ROLE_STREAM = 1
FILLER_STREAM = 2

FactorId = Union[int, str]


@dataclass(frozen=True)
class FactorSchema:
    """Ordered generative factors with their cardinalities.

    Args:
        factors: Sequence of ``(name, cardinality)`` pairs.
    """

    factors: Tuple[Tuple[str, int], ...]

    def __post_init__(self):
        factors = tuple((str(name), int(card)) for name, card in self.factors)
        object.__setattr__(self, "factors", factors)
        if not factors:
            raise ValueError("A schema needs at least one factor")
        names = [name for name, _ in factors]
        if len(set(names)) != len(names):
            raise ValueError("Factor names must be unique: {}".format(names))
        for name, card in factors:
            if card < 1:
                raise ValueError(
                    "Factor '{}' has cardinality {} < 1".format(name, card)
                )

    @classmethod
    def dsprites(cls) -> "FactorSchema":
        """shape 3, scale 6, orientation 40, posX 32, posY 32."""
        return cls(
            (
                ("shape", 3),
                ("scale", 6),
                ("orientation", 40),
                ("posX", 32),
                ("posY", 32),
            )
        )

    @classmethod
    def metric(cls) -> "FactorSchema":
        """The reduced schema small enough for exhaustive render search."""
        return cls(
            (("shape", 3), ("scale", 4), ("orientation", 8), ("posX", 8), ("posY", 8))
        )

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.factors]

    @property
    def cardinalities(self) -> List[int]:
        return [card for _, card in self.factors]

    @property
    def size(self) -> int:
        """Number of distinct objects."""
        return int(np.prod(self.cardinalities, dtype=object))

    def __len__(self) -> int:
        return len(self.factors)

    def index(self, factor: FactorId) -> int:
        """Resolve a factor name or position to its position."""
        if isinstance(factor, (int, np.integer)) and not isinstance(factor, bool):
            if 0 <= factor < len(self.factors):
                return int(factor)
        elif factor in self.names:
            return self.names.index(factor)
        raise UnknownFactorError("Unknown factor: {!r}".format(factor))

    def validate(self, values: Sequence[int]) -> Tuple[int, ...]:
        """Check one value index per factor, each within its cardinality."""
        values = tuple(int(v) for v in values)
        if len(values) != len(self.factors):
            raise InvalidObjectError(
                "Object has {} values, schema has {} factors".format(
                    len(values), len(self.factors)
                )
            )
        for (name, card), value in zip(self.factors, values):
            if not 0 <= value < card:
                raise InvalidObjectError(
                    "Value {} out of range for factor '{}' (cardinality {})".format(
                        value, name, card
                    )
                )
        return values

    def to_list(self) -> List[List]:
        return [[name, card] for name, card in self.factors]

    @classmethod
    def from_list(cls, data: Sequence[Sequence]) -> "FactorSchema":
        return cls(tuple((name, card) for name, card in data))


@dataclass(frozen=True, eq=False)
class KeyProjection:
    """Projection applied to filler vectors to obtain attention keys.

    Args:
        matrix: A D x D matrix, or None for the identity.
    """

    matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.matrix is not None:
            matrix = np.array(self.matrix, dtype=float)
            if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
                raise DimensionMismatchError(
                    "Projection must be square, got shape {}".format(matrix.shape)
                )
            if not np.all(np.isfinite(matrix)):
                raise ValueError("Projection has non-finite entries")
            matrix.setflags(write=False)
            object.__setattr__(self, "matrix", matrix)

    @classmethod
    def identity(cls) -> "KeyProjection":
        return cls(None)

    @classmethod
    def from_file(cls, path: Union[str, Path], dim: int) -> "KeyProjection":
        """Load a raw little-endian float64 row-major D x D matrix."""
        data = np.fromfile(str(path), dtype="<f8")
        if data.size != dim * dim:
            raise ContainerFormatError(
                "'{}' holds {} values, expected {} for D={}".format(
                    path, data.size, dim * dim, dim
                )
            )
        return cls(data.reshape(dim, dim))

    @property
    def is_identity(self) -> bool:
        return self.matrix is None

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        """Project row vectors: returns ``matrix @ v`` for every row ``v``."""
        if self.matrix is None:
            return vectors
        if self.matrix.shape[1] != vectors.shape[-1]:
            raise DimensionMismatchError(
                "Projection of size {} applied to dimension {}".format(
                    self.matrix.shape[1], vectors.shape[-1]
                )
            )
        return vectors @ self.matrix.T


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, order="C")
    array.setflags(write=False)
    return array


class ItemMemory:
    """Frozen role and filler codebooks.

    Role ``i`` is sampled from stream ``mix(1, i)``, filler ``(i, j)`` from
    stream ``mix(2, i, j)``.

    Args:
        schema: The factor schema.
        space: The vector space.
        roles: An (N, D) array, one role per factor.
        fillers: One (k_i, D) array per factor.
    """

    def __init__(
        self,
        schema: FactorSchema,
        space: SpaceConfig,
        roles: np.ndarray,
        fillers: Sequence[np.ndarray],
    ) -> None:
        roles = np.asarray(roles, dtype=float)
        if roles.shape != (len(schema), space.dim):
            raise DimensionMismatchError(
                "Roles have shape {}, expected {}".format(
                    roles.shape, (len(schema), space.dim)
                )
            )
        if len(fillers) != len(schema):
            raise DimensionMismatchError("Need one filler codebook per factor")
        for card, codebook in zip(schema.cardinalities, fillers):
            if np.shape(codebook) != (card, space.dim):
                raise DimensionMismatchError(
                    "Filler codebook has shape {}, expected {}".format(
                        np.shape(codebook), (card, space.dim)
                    )
                )
        self._schema = schema
        self._space = space
        self._roles = _frozen(roles)
        self._fillers = tuple(_frozen(codebook) for codebook in fillers)

    @classmethod
    def build(cls, schema: FactorSchema, space: SpaceConfig) -> "ItemMemory":
        """Sample every role and filler from its own stream."""
        roles = np.stack(
            [sample_seed(space, utils.mix(ROLE_STREAM, i)) for i in range(len(schema))]
        )
        fillers = [
            np.stack(
                [
                    sample_seed(space, utils.mix(FILLER_STREAM, i, j))
                    for j in range(card)
                ]
            )
            for i, card in enumerate(schema.cardinalities)
        ]
        logger.info(
            "Built item memory: %d roles, %d fillers, D=%d",
            len(schema),
            sum(schema.cardinalities),
            space.dim,
        )
        return cls(schema, space, roles, fillers)

    @property
    def schema(self) -> FactorSchema:
        return self._schema

    @property
    def space(self) -> SpaceConfig:
        return self._space

    @property
    def dim(self) -> int:
        return self._space.dim

    @property
    def roles(self) -> np.ndarray:
        return self._roles

    @property
    def fillers(self) -> Tuple[np.ndarray, ...]:
        return self._fillers

    def role(self, factor: FactorId) -> Hypervector:
        return self._roles[self._schema.index(factor)]

    def codebook(self, factor: FactorId) -> np.ndarray:
        """The filler codebook of one factor."""
        return self._fillers[self._schema.index(factor)]

    def filler(self, factor: FactorId, value: int) -> Hypervector:
        codebook = self.codebook(factor)
        if not 0 <= value < len(codebook):
            raise InvalidObjectError(
                "Value {} out of range for factor {!r}".format(value, factor)
            )
        return codebook[value]

    def to_bytes(self) -> bytes:
        """Serialize into the versioned binary container."""
        header = struct.pack(
            "<IQI", self.dim, self._space.master_seed, len(self._schema)
        )
        parts = [MAGIC, header]
        for name, card in self._schema.factors:
            encoded = name.encode("utf-8")
            parts.append(struct.pack("<I", len(encoded)))
            parts.append(encoded)
            parts.append(struct.pack("<I", card))
        parts.append(self._roles.astype("<f8").tobytes())
        for codebook in self._fillers:
            parts.append(codebook.astype("<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ItemMemory":
        """Parse the binary container written by :meth:`to_bytes`."""
        if not data.startswith(MAGIC):
            raise ContainerFormatError("Not a memory container: bad magic bytes")
        try:
            offset = len(MAGIC)
            dim, master_seed, num_factors = struct.unpack_from("<IQI", data, offset)
            offset += struct.calcsize("<IQI")
            factors = []
            for _ in range(num_factors):
                (length,) = struct.unpack_from("<I", data, offset)
                offset += 4
                name = data[offset : offset + length].decode("utf-8")
                offset += length
                (card,) = struct.unpack_from("<I", data, offset)
                offset += 4
                factors.append((name, card))
            schema = FactorSchema(tuple(factors))
            space = SpaceConfig(dim=dim, master_seed=master_seed)
            count = (num_factors + sum(schema.cardinalities)) * dim
            values = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        except (struct.error, ValueError, UnicodeDecodeError) as error:
            raise ContainerFormatError("Corrupt memory container: {}".format(error))
        if offset + count * 8 != len(data):
            raise ContainerFormatError("Memory container has trailing bytes")
        roles = values[: num_factors * dim].reshape(num_factors, dim)
        fillers = []
        start = num_factors * dim
        for card in schema.cardinalities:
            fillers.append(values[start : start + card * dim].reshape(card, dim))
            start += card * dim
        return cls(schema, space, roles, fillers)

    def save(self, path: Union[str, Path]) -> Path:
        """Write the container and its JSON sidecar (``<path>.json``)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        utils.dump_json(
            {
                "format": MAGIC.decode("ascii"),
                "dim": self.dim,
                "master_seed": self._space.master_seed,
                "schema": self._schema.to_list(),
                "streams": {
                    "role": "mix({}, factor)".format(ROLE_STREAM),
                    "filler": "mix({}, factor, value)".format(FILLER_STREAM),
                },
            },
            sidecar(path),
        )
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ItemMemory":
        return cls.from_bytes(Path(path).read_bytes())

    def __eq__(self, other):
        if not isinstance(other, ItemMemory):
            return NotImplemented
        return (
            self._schema == other._schema
            and self._space == other._space
            and np.array_equal(self._roles, other._roles)
            and all(np.array_equal(a, b) for a, b in zip(self._fillers, other._fillers))
        )

    def __repr__(self):
        return (
            f"<ItemMemory: "
            f"{len(self._schema)} factors, "
            f"{sum(self._schema.cardinalities)} fillers, "
            f"D={self.dim}, "
            f"seed={self._space.master_seed}>"
        )


def sidecar(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def build_memory(schema: FactorSchema, space: SpaceConfig) -> ItemMemory:
    """Build the item memory of a schema in a vector space."""
    return ItemMemory.build(schema, space)


def _norms(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(x * x, axis=-1))


def similarities(query: Hypervector, codebook: np.ndarray) -> np.ndarray:
    """Cosine similarity of a query, or a (T, D) stack of queries, against
    every codebook row.

    Each score is reduced on its own so that identical rows score bit-equal.
    """
    query = np.asarray(query, dtype=float)
    codebook = np.asarray(codebook, dtype=float)
    if codebook.ndim != 2 or len(codebook) == 0:
        raise ValueError("Codebook must be a non-empty list of hypervectors")
    if codebook.shape[1] != query.shape[-1]:
        raise DimensionMismatchError(
            "Dimension mismatch: query {} vs codebook {}".format(
                query.shape[-1], codebook.shape[1]
            )
        )
    norms = _norms(codebook) * _norms(query)[..., None]
    if np.any(norms == 0.0):
        raise DegenerateVectorError("degenerate vector")
    dots = np.stack([np.sum(query * row, axis=-1) for row in codebook], axis=-1)
    return np.clip(dots / norms, -1.0, 1.0)


def cleanup(query: Hypervector, codebook: Sequence[Hypervector]) -> Tuple[int, float]:
    """Return the index and cosine of the most similar codebook entry.

    Ties are broken toward the lowest index.
    """
    sims = similarities(query, np.asarray(codebook))
    index = int(np.argmax(sims))
    return index, float(sims[index])


def top_k(
    query: Hypervector, codebook: Sequence[Hypervector], k: int
) -> List[Tuple[int, float]]:
    """The ``k`` most similar entries in non-increasing similarity, ties by index."""
    sims = similarities(query, np.asarray(codebook))
    if not 1 <= k <= len(sims):
        raise ValueError("k must lie in [1, {}], got {}".format(len(sims), k))
    order = np.argsort(-sims, kind="stable")[:k]
    return [(int(i), float(sims[i])) for i in order]


def attention_readout(
    query: Hypervector,
    factor: FactorId,
    memory: ItemMemory,
    proj: Optional[KeyProjection] = None,
    query_proj: Optional[KeyProjection] = None,
) -> Tuple[np.ndarray, Hypervector]:
    """Softmax attention of a query over one factor's fillers.

    Logits are ``dot(query, proj @ filler_j) / sqrt(D)``; the readout is the
    weighted sum of the (unprojected) fillers.

    Args:
        query: The intermediate factor representation.
        factor: Factor name or position.
        memory: The item memory.
        proj: Key projection, identity by default.
        query_proj: Optional query-side projection, identity by default.

    Returns:
        The weights (a point of the simplex) and the readout hypervector.
    """
    codebook = memory.codebook(factor)
    query = np.asarray(query, dtype=float)
    if query.shape != (memory.dim,):
        raise DimensionMismatchError(
            "Query has shape {}, expected ({},)".format(query.shape, memory.dim)
        )
    keys = (proj or KeyProjection.identity()).apply(codebook)
    query = (query_proj or KeyProjection.identity()).apply(query[None, :])[0]
    logits = keys @ query / np.sqrt(memory.dim)
    weights = softmax(logits)
    return weights, weights @ codebook
