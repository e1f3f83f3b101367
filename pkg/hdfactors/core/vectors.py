"""
hdfactors.core.vectors
~~~~~~~~~~~~~~~~~~~~~~

This module implements the holographic reduced representation (HRR) vector
space: sampling, bundling, binding, unbinding, similarity and noise.

Hypervectors are plain float64 numpy arrays. Binary operations accept stacks
of vectors (leading axes broadcast) as long as the last axis, the dimension,
agrees.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from hdfactors.core import utils
from hdfactors.exceptions import (
    DegenerateVectorError,
    DimensionMismatchError,
    EmptyBundleError,
)


Hypervector = np.ndarray


@dataclass(frozen=True)
class SpaceConfig:
    """The vector space.

    Args:
        dim: The vector dimension D.
        master_seed: Seed every random stream of the space derives from.
    """

    dim: int = 1024
    master_seed: int = 0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(
                "Dimension must be an integer >= 2, got {}".format(self.dim)
            )
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError(
                "Master seed must be an unsigned 64-bit integer, got {}".format(
                    self.master_seed
                )
            )


def identity(dim: int) -> Hypervector:
    """The convolution identity (1, 0, ..., 0)."""
    delta = np.zeros(dim)
    delta[0] = 1.0
    return delta


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatchError(
            "Dimension mismatch: {} != {}".format(a.shape[-1], b.shape[-1])
        )


def sample_seed(space: SpaceConfig, stream_id: int) -> Hypervector:
    """Sample a seed hypervector with components i.i.d. N(0, 1/D).

    Args:
        space: The vector space.
        stream_id: Non-negative stream id; the result is a pure function of
            ``(space.master_seed, stream_id)``.

    Returns:
        A hypervector of dimension ``space.dim``.
    """
    if stream_id < 0:
        raise ValueError("Stream id must be non-negative, got {}".format(stream_id))
    rng = utils.generator(space.master_seed, utils.SEED_DOMAIN, stream_id)
    return rng.normal(0.0, 1.0 / np.sqrt(space.dim), space.dim)


def bundle(vectors: Sequence[Hypervector]) -> Hypervector:
    """Bundle hypervectors: the element-wise sum divided by their number."""
    if len(vectors) == 0:
        raise EmptyBundleError("empty bundle")
    dims = {np.shape(v)[-1] for v in vectors}
    if len(dims) > 1:
        raise DimensionMismatchError(
            "Dimension mismatch in bundle: {}".format(sorted(dims))
        )
    return np.mean(np.stack([np.asarray(v, dtype=float) for v in vectors]), axis=0)


def bind(a: Hypervector, b: Hypervector) -> Hypervector:
    """Bind two hypervectors by circular convolution in the Fourier domain."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_pair(a, b)
    dim = a.shape[-1]
    return np.fft.irfft(np.fft.rfft(a) * np.fft.rfft(b), n=dim)


def involution(a: Hypervector) -> Hypervector:
    """The HRR approximate inverse: ``x[(D - j) mod D]``."""
    a = np.asarray(a, dtype=float)
    return np.concatenate([a[..., :1], a[..., :0:-1]], axis=-1)


def unbind(c: Hypervector, role: Hypervector) -> Hypervector:
    """Unbind a role from a composite: ``bind(c, involution(role))``.

    If ``c = bind(role, f)`` the result is a noisy version of ``f``.
    """
    c = np.asarray(c, dtype=float)
    role = np.asarray(role, dtype=float)
    _check_pair(c, role)
    return bind(c, involution(role))


def cosine(a: Hypervector, b: Hypervector) -> float:
    """Cosine similarity of two hypervectors.

    Raises:
        DegenerateVectorError: If either vector has zero norm.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_pair(a, b)
    norm = np.linalg.norm(a) * np.linalg.norm(b)
    if norm == 0.0:
        raise DegenerateVectorError("degenerate vector")
    return float(np.clip(np.dot(a, b) / norm, -1.0, 1.0))


def add_noise(
    a: Hypervector, sigma: float, stream_id: int, master_seed: int = 0
) -> Hypervector:
    """Add i.i.d. Gaussian noise N(0, sigma^2) to every component.

    Args:
        a: A hypervector or a stack of them.
        sigma: Noise standard deviation.
        stream_id: Noise stream; the same stream yields the same noise.
        master_seed: Optional experiment seed the stream is keyed under.
    """
    if sigma < 0:
        raise ValueError("Noise sigma must be non-negative, got {}".format(sigma))
    a = np.asarray(a, dtype=float)
    if sigma == 0:
        return a.copy()
    rng = utils.generator(master_seed, utils.NOISE_DOMAIN, stream_id)
    return a + rng.normal(0.0, sigma, a.shape)
