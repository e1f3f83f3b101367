"""
hdfactors.core.composer
~~~~~~~~~~~~~~~~~~~~~~~

This module implements object composition: symbolic objects are encoded as
the bundle of role-filler bindings, decoded by unbinding and cleanup, and
edited by exchanging single factor values. It also generates paired
datasets of objects that differ in a fixed number of factors.
"""

from dataclasses import dataclass
import logging
from pathlib import Path
from typing import (
    Any,
    Callable,
    Dict,
    Iterable,
    List,
    Optional,
    Sequence,
    Set,
    Tuple,
    Union,
)

import numpy as np

from hdfactors.core import utils
from hdfactors.core.memory import (
    FactorId,
    FactorSchema,
    ItemMemory,
    cleanup,
    similarities,
)
from hdfactors.core.vectors import Hypervector, bind, bundle, unbind
from hdfactors.exceptions import (
    AuditError,
    ContainerFormatError,
    InsufficientPairsError,
    InvalidObjectError,
)


logger = logging.getLogger(__name__)

SINGLE = "single"
MULTI = "multi"

# Objects per chunk in the batched encoder and decoder.
CHUNK = 1024


@dataclass(frozen=True)
class SymbolicObject:
    """One value index per generative factor."""

    values: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, index: int) -> int:
        return self.values[index]

    def __iter__(self):
        return iter(self.values)

    def replace(self, factor: int, value: int) -> "SymbolicObject":
        values = list(self.values)
        values[factor] = value
        return SymbolicObject(tuple(values))


def exchange_vector(a: SymbolicObject, b: SymbolicObject) -> Tuple[int, ...]:
    """``e_i = 1`` exactly where the two objects differ."""
    if len(a) != len(b):
        raise InvalidObjectError("Objects have different lengths")
    return tuple(int(x != y) for x, y in zip(a, b))


@dataclass(frozen=True)
class PairedExample:
    """A (target, donor) pair and its exchange vector."""

    first: SymbolicObject
    second: SymbolicObject
    exchange: Tuple[int, ...]

    @classmethod
    def of(cls, first: SymbolicObject, second: SymbolicObject) -> "PairedExample":
        return cls(first, second, exchange_vector(first, second))

    def to_record(self) -> Dict[str, List[int]]:
        return {
            "a": list(self.first.values),
            "b": list(self.second.values),
            "e": list(self.exchange),
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "PairedExample":
        try:
            return cls(
                SymbolicObject(tuple(record["a"])),
                SymbolicObject(tuple(record["b"])),
                tuple(int(x) for x in record["e"]),
            )
        except (KeyError, TypeError, ValueError) as error:
            raise ContainerFormatError("Malformed pair record: {}".format(error))

    @property
    def key(self) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        """Order-free identity of the pair."""
        return tuple(sorted((self.first.values, self.second.values)))


def _values(obj: Union[SymbolicObject, Sequence[int]], schema: FactorSchema):
    return schema.validate(obj.values if isinstance(obj, SymbolicObject) else obj)


def encode_object(obj: SymbolicObject, memory: ItemMemory) -> Hypervector:
    """Encode an object as the bundle of its role-filler bindings."""
    values = _values(obj, memory.schema)
    selected = np.stack(
        [codebook[value] for codebook, value in zip(memory.fillers, values)]
    )
    return bundle(list(bind(memory.roles, selected)))


def encode_batch(values: np.ndarray, memory: ItemMemory) -> np.ndarray:
    """Encode a (T, N) array of value indices into a (T, D) stack."""
    values = np.asarray(values, dtype=int)
    if values.ndim != 2 or values.shape[1] != len(memory.schema):
        raise InvalidObjectError(
            "Expected a (T, {}) array of values, got {}".format(
                len(memory.schema), values.shape
            )
        )
    cards = np.asarray(memory.schema.cardinalities)
    if np.any(values < 0) or np.any(values >= cards):
        raise InvalidObjectError("Value index out of range in batch")
    encoded = np.empty((len(values), memory.dim))
    for start in range(0, len(values), CHUNK):
        chunk = values[start : start + CHUNK]
        selected = np.stack(
            [codebook[chunk[:, i]] for i, codebook in enumerate(memory.fillers)],
            axis=1,
        )
        encoded[start : start + CHUNK] = bind(memory.roles, selected).mean(axis=1)
    return encoded


def decode_factor(
    o: Hypervector, factor: FactorId, memory: ItemMemory
) -> Tuple[int, float]:
    """Recover one factor's value index by unbinding its role and cleanup."""
    index = memory.schema.index(factor)
    return cleanup(unbind(o, memory.roles[index]), memory.fillers[index])


def decode_object(o: Hypervector, memory: ItemMemory) -> SymbolicObject:
    """Decode every factor of a composite hypervector."""
    return SymbolicObject(
        tuple(decode_factor(o, i, memory)[0] for i in range(len(memory.schema)))
    )


def decode_batch(
    encoded: np.ndarray, memory: ItemMemory
) -> Tuple[np.ndarray, np.ndarray]:
    """Decode a (T, D) stack.

    Returns:
        A (T, N) array of value indices and a (T, N) array of similarities.
    """
    encoded = np.asarray(encoded, dtype=float)
    count = len(encoded)
    indices = np.empty((count, len(memory.schema)), dtype=int)
    sims = np.empty((count, len(memory.schema)))
    for i, (role, codebook) in enumerate(zip(memory.roles, memory.fillers)):
        for start in range(0, count, CHUNK):
            queries = unbind(encoded[start : start + CHUNK], role)
            scores = similarities(queries, codebook)
            best = np.argmax(scores, axis=1)
            indices[start : start + CHUNK, i] = best
            sims[start : start + CHUNK, i] = scores[np.arange(len(best)), best]
    return indices, sims


def exchange_symbolic(
    a: SymbolicObject, b: SymbolicObject, e: Sequence[int]
) -> Tuple[SymbolicObject, SymbolicObject]:
    """Swap the factor values of two objects where ``e_i = 1``."""
    if not len(a) == len(b) == len(e):
        raise InvalidObjectError(
            "Length mismatch: {}, {} and exchange vector {}".format(
                len(a), len(b), len(e)
            )
        )
    first = tuple(y if flag else x for x, y, flag in zip(a, b, e))
    second = tuple(x if flag else y for x, y, flag in zip(a, b, e))
    return SymbolicObject(first), SymbolicObject(second)


def exchange_latent(
    o_target: Hypervector,
    target_val: int,
    donor_val: int,
    factor: FactorId,
    memory: ItemMemory,
) -> Hypervector:
    """Replace one factor's filler inside a composite.

    The target's binding is subtracted and the donor's added, both with the
    1/N bundling weight, so the result equals the encoding of the edited
    object without re-encoding it.
    """
    index = memory.schema.index(factor)
    role = memory.roles[index]
    delta = bind(role, memory.filler(index, donor_val)) - bind(
        role, memory.filler(index, target_val)
    )
    return np.asarray(o_target, dtype=float) + delta / len(memory.schema)


def exchange_latent_decoded(
    o_target: Hypervector, donor_val: int, factor: FactorId, memory: ItemMemory
) -> Hypervector:
    """Like :func:`exchange_latent`, decoding the target's current value first."""
    target_val, _ = decode_factor(o_target, factor, memory)
    return exchange_latent(o_target, target_val, donor_val, factor, memory)


def exchange_batch(
    encoded: np.ndarray,
    targets: np.ndarray,
    donors: np.ndarray,
    exchange: np.ndarray,
    memory: ItemMemory,
) -> np.ndarray:
    """Apply :func:`exchange_latent` at every flagged factor of a batch.

    Args:
        encoded: (T, D) encoded targets.
        targets: (T, N) value indices the targets were encoded with.
        donors: (T, N) donor value indices.
        exchange: (T, N) binary exchange vectors.
        memory: The item memory.

    Returns:
        The (T, D) edited stack.
    """
    targets, donors = np.asarray(targets, dtype=int), np.asarray(donors, dtype=int)
    exchange = np.asarray(exchange, dtype=bool)
    edited = np.array(encoded, dtype=float)
    count = len(memory.schema)
    for i, (role, codebook) in enumerate(zip(memory.roles, memory.fillers)):
        rows = np.flatnonzero(exchange[:, i])
        if len(rows) == 0:
            continue
        donor = bind(role, codebook[donors[rows, i]])
        delta = donor - bind(role, codebook[targets[rows, i]])
        edited[rows] += delta / count
    return edited


def factor_probe(
    factor: FactorId, value: int, memory: ItemMemory
) -> Tuple[Hypervector, List[Tuple[int, float]]]:
    """Bind a single filler to its role and decode every factor from it.

    Only the probed factor should come back with a high similarity; the
    other factors decode to arbitrary values with similarity near zero.
    """
    index = memory.schema.index(factor)
    vector = bind(memory.roles[index], memory.filler(index, value))
    return vector, [decode_factor(vector, i, memory) for i in range(len(memory.schema))]


class CompositionalExclusion:
    """Excludes objects with a given shape in the right half of the frame.

    Args:
        schema: The factor schema.
        shape: Name of the shape factor.
        position: Name of the horizontal position factor.
        shape_value: The excluded shape's value index (0, the square).
    """

    name = "shape=square&posX>0.5"

    def __init__(
        self,
        schema: FactorSchema,
        shape: str = "shape",
        position: str = "posX",
        shape_value: int = 0,
    ) -> None:
        self._shape = schema.index(shape)
        self._position = schema.index(position)
        self._shape_value = shape_value
        self._threshold = (schema.cardinalities[self._position] - 1) / 2

    def __call__(self, values: Sequence[int]) -> bool:
        return (
            values[self._shape] == self._shape_value
            and values[self._position] > self._threshold
        )


Exclusion = Callable[[Sequence[int]], bool]


def pair_capacity(schema: FactorSchema, differences: int) -> int:
    """Number of unordered object pairs differing in exactly ``differences`` factors."""
    # Elementary symmetric polynomial of (c_i - 1) evaluated at degree k.
    poly = [1] + [0] * len(schema)
    for card in schema.cardinalities:
        for k in range(len(schema), 0, -1):
            poly[k] += poly[k - 1] * (card - 1)
    return schema.size * poly[differences] // 2


def generate_pairs(
    schema: FactorSchema,
    count: int,
    mode: str = SINGLE,
    differences: int = 1,
    exclusion: Optional[Exclusion] = None,
    seed: int = 0,
    stream: int = 0,
    forbidden: Optional[Set] = None,
) -> List[PairedExample]:
    """Sample distinct pairs of objects that differ in a fixed number of factors.

    Args:
        schema: The factor schema.
        count: Number of pairs.
        mode: ``"single"`` (exactly one factor differs) or ``"multi"``.
        differences: Number of differing factors in multi mode, 1..N.
        exclusion: Predicate on value tuples; excluded objects never appear.
        seed: Dataset seed.
        stream: Sub-stream of the seed, to draw independent sets.
        forbidden: Pair keys that must not be emitted.

    Returns:
        A list of pairs in generation order.
    """
    if count < 1:
        raise ValueError("Pair count must be >= 1, got {}".format(count))
    if mode == SINGLE:
        differences = 1
    elif mode != MULTI:
        raise ValueError("Unknown mode '{}'".format(mode))
    if not 1 <= differences <= len(schema):
        raise ValueError(
            "Number of differences must lie in [1, {}], got {}".format(
                len(schema), differences
            )
        )
    cards = np.asarray(schema.cardinalities)
    eligible = np.flatnonzero(cards > 1)
    if len(eligible) < differences or count > pair_capacity(schema, differences):
        raise InsufficientPairsError(
            "insufficient distinct pairs: {} requested, schema provides {}".format(
                count, pair_capacity(schema, differences)
            )
        )
    rng = utils.generator(seed, utils.DATA_DOMAIN, stream)
    forbidden = forbidden or set()
    seen = set()
    pairs = []
    attempts = 0
    max_attempts = 50 * count + 10000
    while len(pairs) < count:
        attempts += 1
        if attempts > max_attempts:
            raise InsufficientPairsError(
                "insufficient distinct pairs: found {} of {} after {} attempts".format(
                    len(pairs), count, max_attempts
                )
            )
        first = rng.integers(0, cards)
        if exclusion is not None and exclusion(first):
            continue
        chosen = rng.choice(eligible, size=differences, replace=False)
        second = first.copy()
        shift = rng.integers(1, cards[chosen])
        second[chosen] = (first[chosen] + shift) % cards[chosen]
        if exclusion is not None and exclusion(second):
            continue
        pair = PairedExample.of(SymbolicObject(first), SymbolicObject(second))
        if pair.key in seen or pair.key in forbidden:
            continue
        seen.add(pair.key)
        pairs.append(pair)
    logger.info("Generated %d pairs in %d attempts", len(pairs), attempts)
    return pairs


def generate_split(
    schema: FactorSchema,
    train_count: int,
    test_count: int,
    mode: str = SINGLE,
    differences: int = 1,
    exclusion: Optional[Exclusion] = None,
    seed: int = 0,
) -> Tuple[List[PairedExample], List[PairedExample]]:
    """A training set with the exclusion applied and an unrestricted test set.

    Test pairs never repeat a training pair.
    """
    train = generate_pairs(schema, train_count, mode, differences, exclusion, seed, 0)
    test = generate_pairs(
        schema,
        test_count,
        mode,
        differences,
        None,
        seed,
        1,
        forbidden={pair.key for pair in train},
    )
    return train, test


def audit_pairs(
    pairs: Iterable[PairedExample],
    schema: FactorSchema,
    mode: Optional[str] = None,
    differences: Optional[int] = None,
    exclusion: Optional[Exclusion] = None,
) -> int:
    """Check a dataset; raises AuditError at the first violation.

    Returns:
        The number of audited pairs.
    """
    seen = set()
    number = 0
    for number, pair in enumerate(pairs, start=1):
        try:
            schema.validate(pair.first.values)
            schema.validate(pair.second.values)
        except InvalidObjectError as error:
            raise AuditError("Pair {}: {}".format(number, error))
        if tuple(pair.exchange) != exchange_vector(pair.first, pair.second):
            raise AuditError("Pair {}: stored exchange vector is wrong".format(number))
        flips = sum(pair.exchange)
        if flips == 0:
            raise AuditError("Pair {}: objects are identical (e = 0)".format(number))
        if mode == SINGLE and flips != 1:
            raise AuditError("Pair {}: differs in {} factors".format(number, flips))
        if mode == MULTI and differences is not None and flips != differences:
            raise AuditError("Pair {}: differs in {} factors".format(number, flips))
        if exclusion is not None and (
            exclusion(pair.first.values) or exclusion(pair.second.values)
        ):
            raise AuditError("Pair {}: contains an excluded object".format(number))
        if pair.key in seen:
            raise AuditError("Pair {}: duplicate pair".format(number))
        seen.add(pair.key)
    return number


def manifest_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".manifest.json")


def write_dataset(
    pairs: Sequence[PairedExample], manifest: Dict[str, Any], path: Union[str, Path]
) -> Path:
    """Write pairs as JSON Lines and the manifest next to them."""
    path = utils.write_jsonl((pair.to_record() for pair in pairs), path)
    utils.dump_json(dict(manifest, count=len(pairs)), manifest_path(path))
    return path


def read_dataset(path: Union[str, Path]) -> Tuple[List[PairedExample], Dict[str, Any]]:
    """Read pairs and, if present, their manifest."""
    pairs = [PairedExample.from_record(record) for record in utils.read_jsonl(path)]
    manifest = manifest_path(path)
    return pairs, utils.load_json(manifest) if manifest.exists() else {}
