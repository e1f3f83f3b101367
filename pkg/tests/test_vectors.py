import numpy as np
import pytest
from hypothesis import given, seed
from hypothesis import strategies as st
from scipy.linalg import circulant

from hdfactors.core import utils
from hdfactors.core.vectors import (
    SpaceConfig,
    add_noise,
    bind,
    bundle,
    cosine,
    identity,
    involution,
    sample_seed,
    unbind,
)
from hdfactors.exceptions import (
    DegenerateVectorError,
    DimensionMismatchError,
    EmptyBundleError,
)


DIM = 1024
ATOL = 1e-9


@pytest.fixture
def space():
    return SpaceConfig(dim=DIM, master_seed=0)


@pytest.fixture
def seeds(space):
    """1,000 independent seed vectors."""
    return np.stack([sample_seed(space, stream) for stream in range(1000)])


@pytest.fixture
def a(space):
    return sample_seed(space, 1)


@pytest.fixture
def b(space):
    return sample_seed(space, 2)


def test_space_config_validation():
    with pytest.raises(ValueError):
        SpaceConfig(dim=1)
    with pytest.raises(ValueError):
        SpaceConfig(dim=8, master_seed=-1)
    with pytest.raises(ValueError):
        SpaceConfig(dim=8, master_seed=2 ** 64)
    assert SpaceConfig(dim=2).dim == 2


def test_mix_is_stable_and_order_sensitive():
    assert utils.mix(2, 3, 4) == utils.mix(2, 3, 4)
    assert utils.mix(2, 3, 4) != utils.mix(2, 4, 3)
    assert 0 <= utils.mix(1, 0) < 2 ** 64
    with pytest.raises(ValueError):
        utils.mix(1, -1)


def test_sample_seed_deterministic(space):
    assert np.array_equal(sample_seed(space, 7), sample_seed(space, 7))
    assert not np.array_equal(sample_seed(space, 7), sample_seed(space, 8))
    other = SpaceConfig(dim=DIM, master_seed=1)
    assert not np.array_equal(sample_seed(space, 7), sample_seed(other, 7))


def test_sample_seed_negative_stream(space):
    with pytest.raises(ValueError):
        sample_seed(space, -1)


def test_sample_seed_norm(space):
    norms = [np.sum(sample_seed(space, stream) ** 2) for stream in range(10000)]
    assert np.mean(norms) == pytest.approx(1.0, abs=0.05)


def test_quasi_orthogonality(space):
    first = np.stack([sample_seed(space, stream) for stream in range(10000)])
    second = np.stack([sample_seed(space, stream) for stream in range(10000, 20000)])
    cosines = np.abs(
        np.sum(first * second, axis=1)
        / (np.linalg.norm(first, axis=1) * np.linalg.norm(second, axis=1))
    )
    assert cosines.mean() < 0.03
    assert cosines.max() < 0.2


def test_bundle_single_and_cancellation(a):
    assert np.array_equal(bundle([a]), a)
    assert np.allclose(bundle([a, -a]), 0.0, atol=ATOL)


def test_bundle_is_mean(a, b):
    assert np.allclose(bundle([a, b]), (a + b) / 2, atol=ATOL)


def test_bundle_errors(a):
    with pytest.raises(EmptyBundleError, match="empty bundle"):
        bundle([])
    with pytest.raises(DimensionMismatchError):
        bundle([a, a[:10]])


def test_bundle_similarity(seeds):
    cosines = [cosine(bundle([x, y]), x) for x, y in zip(seeds[:100], seeds[100:200])]
    assert np.mean(cosines) == pytest.approx(0.707, abs=0.05)


def test_bind_identity_and_commutativity(a, b):
    assert np.allclose(bind(a, identity(DIM)), a, atol=ATOL)
    assert np.allclose(bind(a, b), bind(b, a), atol=ATOL)


def test_bind_matches_direct_convolution():
    space = SpaceConfig(dim=128, master_seed=3)
    for stream in range(100):
        x = sample_seed(space, 2 * stream)
        y = sample_seed(space, 2 * stream + 1)
        assert np.allclose(bind(x, y), circulant(x) @ y, atol=ATOL)


def test_bind_odd_dimension():
    space = SpaceConfig(dim=101)
    x, y = sample_seed(space, 0), sample_seed(space, 1)
    assert np.allclose(bind(x, y), circulant(x) @ y, atol=ATOL)


def test_bind_dimension_mismatch(a):
    with pytest.raises(DimensionMismatchError):
        bind(a, a[:-1])
    with pytest.raises(DimensionMismatchError):
        unbind(a, a[:-1])


def test_bind_quasi_orthogonal_to_inputs(seeds):
    cosines = np.abs(
        [cosine(bind(x, y), x) for x, y in zip(seeds[:500], seeds[500:])]
        + [cosine(bind(x, y), y) for x, y in zip(seeds[:500], seeds[500:])]
    )
    assert np.percentile(cosines, 95) <= 0.1
    assert cosines.mean() < 0.05


def test_bind_distributes_over_bundle(a, b, space):
    r = sample_seed(space, 3)
    left = bind(r, bundle([a, b]))
    right = bundle([bind(r, a), bind(r, b)])
    assert cosine(left, right) > 0.999


def test_bind_preserves_norm_in_expectation(seeds):
    pairs = list(zip(seeds[:500], seeds[500:]))
    bound = [np.sum(bind(x, y) ** 2) for x, y in pairs]
    products = [np.sum(x ** 2) * np.sum(y ** 2) for x, y in pairs]
    assert np.mean(bound) == pytest.approx(np.mean(products), rel=0.1)


def test_bind_is_pure(a, b):
    assert np.array_equal(bind(a, b), bind(a, b))


def test_involution(a):
    assert np.array_equal(involution(involution(a)), a)
    assert np.array_equal(involution(identity(DIM)), identity(DIM))
    assert involution(a)[0] == a[0]
    assert involution(a)[1] == a[-1]


def test_involution_of_stack(seeds):
    stack = seeds[:3]
    assert np.array_equal(involution(stack)[1], involution(stack[1]))


def test_unbind_recovers_filler(seeds):
    recovered = [
        cosine(unbind(bind(x, y), x), y) for x, y in zip(seeds[:500], seeds[500:])
    ]
    assert np.mean(recovered) == pytest.approx(0.707, abs=0.05)


def test_unbind_identity_role(a):
    assert np.allclose(unbind(bind(a, identity(DIM)), identity(DIM)), a, atol=ATOL)


def test_unbind_with_unrelated_role(seeds):
    cosines = np.abs(
        [
            cosine(unbind(bind(x, y), z), y)
            for x, y, z in zip(seeds[:300], seeds[300:600], seeds[600:900])
        ]
    )
    assert cosines.mean() < 0.06
    assert np.percentile(cosines, 95) <= 0.1


@pytest.mark.parametrize("dim", [512, 1024])
def test_unbind_cleanup_finds_filler(dim):
    space = SpaceConfig(dim=dim, master_seed=11)
    codebook = np.stack([sample_seed(space, stream) for stream in range(64)])
    for trial in range(20):
        role = sample_seed(space, 1000 + trial)
        query = unbind(bind(role, codebook[trial]), role)
        sims = codebook @ query / np.linalg.norm(codebook, axis=1)
        assert int(np.argmax(sims)) == trial


def test_cosine_basics(a):
    assert cosine(a, a) == pytest.approx(1.0)
    assert cosine(a, -a) == pytest.approx(-1.0)
    assert cosine(a, 2 * a) == pytest.approx(1.0)


def test_cosine_degenerate(a):
    with pytest.raises(DegenerateVectorError, match="degenerate vector"):
        cosine(a, np.zeros(DIM))


@seed(1)
@given(
    scale=st.floats(min_value=1e-3, max_value=1e3),
    stream=st.integers(min_value=0, max_value=2 ** 32),
)
def test_cosine_scale_invariance(scale, stream):
    space = SpaceConfig(dim=64)
    x, y = sample_seed(space, stream), sample_seed(space, stream + 1)
    assert cosine(scale * x, y) == pytest.approx(cosine(x, y), abs=1e-9)
    assert -1.0 <= cosine(x, y) <= 1.0


def test_add_noise_zero_sigma(a):
    noisy = add_noise(a, 0.0, 5)
    assert np.array_equal(noisy, a)
    assert noisy is not a


def test_add_noise_deterministic(a):
    assert np.array_equal(add_noise(a, 0.1, 5), add_noise(a, 0.1, 5))
    assert not np.array_equal(add_noise(a, 0.1, 5), add_noise(a, 0.1, 6))


def test_add_noise_similarity(seeds):
    sigma = 1 / np.sqrt(DIM)
    cosines = [cosine(add_noise(x, sigma, i), x) for i, x in enumerate(seeds[:200])]
    assert np.mean(cosines) == pytest.approx(0.71, abs=0.05)


def test_add_noise_negative_sigma(a):
    with pytest.raises(ValueError):
        add_noise(a, -0.1, 0)
