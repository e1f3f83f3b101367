import struct

import numpy as np
import pytest
from scipy.special import softmax

from hdfactors.core import utils
from hdfactors.core.composer import SymbolicObject, decode_object, encode_object
from hdfactors.core.memory import (
    MAGIC,
    FactorSchema,
    ItemMemory,
    KeyProjection,
    attention_readout,
    build_memory,
    cleanup,
    sidecar,
    similarities,
    top_k,
)
from hdfactors.core.vectors import SpaceConfig, add_noise, sample_seed
from hdfactors.exceptions import (
    ContainerFormatError,
    DimensionMismatchError,
    InvalidObjectError,
    UnknownFactorError,
)


@pytest.fixture
def dsprites():
    return FactorSchema.dsprites()


@pytest.fixture
def memory(dsprites):
    return build_memory(dsprites, SpaceConfig(dim=1024, master_seed=0))


@pytest.fixture
def small():
    schema = FactorSchema((("color", 4), ("size", 1), ("kind", 3)))
    return build_memory(schema, SpaceConfig(dim=64, master_seed=5))


@pytest.fixture
def codebook():
    space = SpaceConfig(dim=1024, master_seed=2)
    return np.stack([sample_seed(space, stream) for stream in range(40)])


def test_schema_presets(dsprites):
    assert dsprites.names == ["shape", "scale", "orientation", "posX", "posY"]
    assert dsprites.cardinalities == [3, 6, 40, 32, 32]
    assert dsprites.size == 3 * 6 * 40 * 32 * 32
    assert FactorSchema.metric().cardinalities == [3, 4, 8, 8, 8]


def test_schema_validation():
    with pytest.raises(ValueError):
        FactorSchema(())
    with pytest.raises(ValueError):
        FactorSchema((("a", 2), ("a", 3)))
    with pytest.raises(ValueError):
        FactorSchema((("a", 0),))


def test_schema_index(dsprites):
    assert dsprites.index("orientation") == 2
    assert dsprites.index(4) == 4
    with pytest.raises(UnknownFactorError):
        dsprites.index("color")
    with pytest.raises(KeyError):
        dsprites.index(5)


def test_schema_validate_object(dsprites):
    assert dsprites.validate([2, 5, 39, 31, 31]) == (2, 5, 39, 31, 31)
    with pytest.raises(InvalidObjectError):
        dsprites.validate([3, 0, 0, 0, 0])
    with pytest.raises(InvalidObjectError):
        dsprites.validate([0, 0, 0, 0])


def test_schema_list_form(dsprites):
    assert FactorSchema.from_list(dsprites.to_list()) == dsprites


def test_build_memory_sizes(memory):
    assert memory.roles.shape == (5, 1024)
    assert sum(len(codebook) for codebook in memory.fillers) == 113
    assert memory.dim == 1024


def test_build_memory_deterministic(dsprites):
    space = SpaceConfig(dim=256, master_seed=9)
    assert build_memory(dsprites, space) == build_memory(dsprites, space)
    other = build_memory(dsprites, SpaceConfig(dim=256, master_seed=10))
    assert build_memory(dsprites, space) != other


def test_memory_streams(small):
    space = small.space
    assert np.array_equal(small.role(2), sample_seed(space, utils.mix(1, 2)))
    filler = sample_seed(space, utils.mix(2, 2, 1))
    assert np.array_equal(small.filler("kind", 1), filler)


def test_memory_is_frozen(small):
    with pytest.raises(ValueError):
        small.roles[0, 0] = 1.0
    with pytest.raises(ValueError):
        small.fillers[0][0, 0] = 1.0


def test_memory_copies_input():
    schema = FactorSchema((("a", 2),))
    roles = np.ones((1, 4))
    memory = ItemMemory(schema, SpaceConfig(dim=4), roles, [np.eye(4)[:2]])
    roles[0, 0] = 5.0
    assert memory.roles[0, 0] == 1.0
    assert roles.flags.writeable


def test_memory_shape_checks():
    schema = FactorSchema((("a", 2),))
    with pytest.raises(DimensionMismatchError):
        ItemMemory(schema, SpaceConfig(dim=4), np.ones((1, 3)), [np.ones((2, 4))])
    with pytest.raises(DimensionMismatchError):
        ItemMemory(schema, SpaceConfig(dim=4), np.ones((1, 4)), [np.ones((3, 4))])


def test_filler_out_of_range(small):
    with pytest.raises(InvalidObjectError):
        small.filler("color", 4)


def test_cleanup_exact(codebook):
    for k in (0, 17, 39):
        index, similarity = cleanup(codebook[k], codebook)
        assert index == k
        assert similarity == pytest.approx(1.0)


def test_cleanup_noisy(codebook):
    targets = np.arange(10000) % len(codebook)
    queries = add_noise(codebook[targets], 0.5 / np.sqrt(1024), stream_id=3)
    found = np.array([cleanup(query, codebook)[0] for query in queries])
    assert np.mean(found == targets) >= 0.99


def test_cleanup_tie_break(codebook):
    duplicated = np.stack([codebook[1], codebook[0], codebook[0]])
    assert cleanup(codebook[0], duplicated)[0] == 1


def test_identical_entries_score_equal(codebook):
    duplicated = np.stack([codebook[1], codebook[0], codebook[0], codebook[0]])
    for query in (codebook[0], add_noise(codebook[0], 1.0, 7), codebook[5]):
        sims = similarities(query, duplicated)
        assert sims[1] == sims[2] == sims[3]
    assert cleanup(codebook[0], duplicated)[0] == 1
    assert [index for index, _ in top_k(codebook[0], duplicated, 2)] == [1, 2]


def test_stacked_queries_match_single(codebook):
    queries = np.stack([add_noise(codebook[j], 1.0, j) for j in range(8)])
    stacked = similarities(queries, codebook)
    assert stacked.shape == (8, 40)
    for query, row in zip(queries, stacked):
        assert np.array_equal(similarities(query, codebook), row)


def test_cleanup_single_entry(small):
    query = sample_seed(small.space, 12345)
    assert cleanup(query, small.codebook("size"))[0] == 0


def test_cleanup_scale_invariant(codebook):
    query = add_noise(codebook[3], 0.1, 1)
    assert cleanup(query, codebook)[0] == cleanup(7.5 * query, codebook)[0]


def test_cleanup_errors(codebook):
    with pytest.raises(ValueError):
        cleanup(codebook[0], np.empty((0, 1024)))
    with pytest.raises(DimensionMismatchError):
        cleanup(codebook[0][:10], codebook)


def test_top_k(codebook):
    query = add_noise(codebook[5], 0.05, 2)
    ranking = top_k(query, codebook, len(codebook))
    assert len(ranking) == len(codebook)
    sims = [sim for _, sim in ranking]
    assert sims == sorted(sims, reverse=True)
    assert sorted(index for index, _ in ranking) == list(range(len(codebook)))
    assert top_k(query, codebook, 1) == [cleanup(query, codebook)]


def test_top_k_ties_by_index(codebook):
    duplicated = np.stack([codebook[2], codebook[1], codebook[1], codebook[1]])
    assert [index for index, _ in top_k(codebook[1], duplicated, 3)] == [1, 2, 3]


def test_top_k_orthogonal_query(codebook):
    query = sample_seed(SpaceConfig(dim=1024, master_seed=99), 0)
    coefficients, *_ = np.linalg.lstsq(codebook.T, query, rcond=None)
    query = query - codebook.T @ coefficients
    ranking = top_k(query, codebook, 10)
    assert len(ranking) == 10
    assert all(abs(sim) < 1e-9 for _, sim in ranking)


def test_top_k_out_of_range(codebook):
    with pytest.raises(ValueError):
        top_k(codebook[0], codebook, 0)
    with pytest.raises(ValueError):
        top_k(codebook[0], codebook, 41)


def test_readout_zero_query(memory):
    weights, vstar = attention_readout(np.zeros(1024), "orientation", memory)
    assert np.allclose(weights, 1 / 40)
    assert np.allclose(vstar, memory.codebook("orientation").mean(axis=0))


def test_readout_simplex(memory):
    query = sample_seed(memory.space, 4242)
    weights, vstar = attention_readout(query, "scale", memory)
    assert abs(weights.sum() - 1.0) < 1e-12
    assert np.all(weights >= 0)
    assert np.allclose(vstar, weights @ memory.codebook("scale"))


def test_readout_logits(memory):
    query = sample_seed(memory.space, 77)
    weights, _ = attention_readout(query, 0, memory)
    expected = softmax(memory.codebook(0) @ query / np.sqrt(1024))
    assert np.allclose(weights, expected, atol=1e-12)


def test_readout_argmax(memory):
    codebook = memory.codebook("orientation")
    for j in range(len(codebook)):
        weights, _ = attention_readout(10 * codebook[j], "orientation", memory)
        assert int(np.argmax(weights)) == j


def test_readout_concentrates(memory):
    codebook = memory.codebook("orientation")
    for j in range(len(codebook)):
        _, vstar = attention_readout(100 * codebook[j], "orientation", memory)
        norms = np.linalg.norm(codebook, axis=1) * np.linalg.norm(vstar)
        sims = codebook @ vstar / norms
        assert int(np.argmax(sims)) == j


def test_readout_noisy_query(memory):
    codebook = memory.codebook("orientation")
    targets = np.arange(10000) % len(codebook)
    queries = add_noise(codebook[targets], 1 / np.sqrt(1024), stream_id=8)
    hits = [
        int(np.argmax(attention_readout(query, "orientation", memory)[0])) == j
        for query, j in zip(queries, targets)
    ]
    assert np.mean(hits) >= 0.95


def test_readout_unknown_factor(memory):
    with pytest.raises(UnknownFactorError):
        attention_readout(np.zeros(1024), "color", memory)


def test_readout_projection(small):
    query = sample_seed(small.space, 3)
    plain, _ = attention_readout(query, "color", small)
    doubled, _ = attention_readout(query, "color", small, KeyProjection(2 * np.eye(64)))
    logits = small.codebook("color") @ query / 8.0
    assert np.allclose(doubled, softmax(2 * logits))
    explicit, _ = attention_readout(
        query, "color", small, KeyProjection.identity(), KeyProjection(np.eye(64))
    )
    assert np.allclose(plain, explicit)


def test_key_projection_file(tmp_path):
    matrix = np.arange(16, dtype="<f8").reshape(4, 4)
    path = tmp_path / "keys.f64"
    matrix.tofile(str(path))
    projection = KeyProjection.from_file(path, 4)
    assert not projection.is_identity
    assert np.array_equal(projection.matrix, matrix)
    assert np.allclose(projection.apply(np.eye(4)), matrix.T)
    with pytest.raises(ContainerFormatError):
        KeyProjection.from_file(path, 3)


def test_key_projection_validation():
    assert KeyProjection.identity().is_identity
    with pytest.raises(DimensionMismatchError):
        KeyProjection(np.ones((2, 3)))
    with pytest.raises(ValueError):
        KeyProjection(np.full((2, 2), np.nan))


def test_container_layout(small):
    data = small.to_bytes()
    assert data.startswith(MAGIC)
    dim, master_seed, count = struct.unpack_from("<IQI", data, len(MAGIC))
    assert (dim, master_seed, count) == (64, 5, 3)


def test_container_roundtrip(small, tmp_path):
    path = small.save(tmp_path / "memory.bin")
    assert ItemMemory.load(path) == small
    meta = utils.load_json(sidecar(path))
    assert meta["dim"] == 64
    assert meta["master_seed"] == 5
    assert meta["schema"] == small.schema.to_list()


def test_container_errors(small):
    data = small.to_bytes()
    with pytest.raises(ContainerFormatError):
        ItemMemory.from_bytes(b"NOTMEM1" + data[7:])
    with pytest.raises(ContainerFormatError):
        ItemMemory.from_bytes(data[:-8])
    with pytest.raises(ContainerFormatError):
        ItemMemory.from_bytes(data + b"\x00")


def test_memory_unchanged_by_use(memory):
    before = memory.to_bytes()
    obj = SymbolicObject((1, 2, 3, 4, 5))
    assert decode_object(encode_object(obj, memory), memory) == obj
    attention_readout(sample_seed(memory.space, 1), "posX", memory)
    assert memory.to_bytes() == before
