"""
hdfactors.core.utils
~~~~~~~~~~~~~~~~~~~~

This module implements helper functions: deterministic random streams,
logging setup and plain-text file I/O.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Generator, Iterable, Union

import numpy as np


logger = logging.getLogger("hdfactors")
handler = logging.StreamHandler()
formatter = logging.Formatter("%(message)s")
handler.setFormatter(formatter)
logger.addHandler(handler)


_MASK = (1 << 64) - 1

# Domains keep sampling, noise and dataset streams apart even when the
# caller-visible stream ids coincide.
SEED_DOMAIN = 1
NOISE_DOMAIN = 2
DATA_DOMAIN = 3


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def mix(*parts: int) -> int:
    """Hash a tuple of non-negative integers into one 64-bit stream id.

    The mixing function is a SplitMix64 chain: starting from 0, every part is
    XOR-ed into the state and the state is passed through the SplitMix64
    finalizer. The result depends on the parts and their order only, so ids are
    stable no matter in which order codebooks are constructed.

    Args:
        *parts: Non-negative integers, e.g. ``(2, factor, value)``.

    Returns:
        An unsigned 64-bit integer.
    """
    state = 0
    for part in parts:
        if part < 0:
            raise ValueError(
                "Stream id parts must be non-negative, got {}".format(part)
            )
        state = _splitmix64(state ^ (part & _MASK))
    return state


def generator(master_seed: int, *key: int) -> np.random.Generator:
    """Construct a counter-based random generator for one stream.

    Args:
        master_seed: The experiment's 64-bit master seed.
        *key: The stream key, usually ``(domain, stream_id)``.

    Returns:
        A numpy Generator backed by Philox, a pure function of its arguments.
    """
    sequence = np.random.SeedSequence(master_seed & _MASK, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(sequence))


def dump_json(data: Any, path: Union[str, Path]) -> Path:
    """Write JSON with sorted keys, so reruns produce identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as file:
        json.dump(data, file, indent=2, sort_keys=True)
        file.write("\n")
    return path


def load_json(path: Union[str, Path]) -> Any:
    with Path(path).open("r", encoding="utf-8") as file:
        return json.load(file)


def write_jsonl(records: Iterable[Dict[str, Any]], path: Union[str, Path]) -> Path:
    """Write one compact JSON object per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as file:
        for record in records:
            file.write(json.dumps(record, separators=(",", ":"), sort_keys=True))
            file.write("\n")
    return path


def read_jsonl(path: Union[str, Path]) -> Generator[Dict[str, Any], None, None]:
    """Read a JSON Lines file.

    Args:
        path: Filepath to the JSONL file.

    Yields:
        One decoded record per non-empty line.
    """
    with Path(path).open("r", encoding="utf-8") as file:
        for row in file:
            row = row.strip()
            if row:
                yield json.loads(row)


def write_csv(frame, path: Union[str, Path], **kwargs) -> Path:
    """Write a DataFrame as CSV with a fixed float format and LF line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    kwargs.setdefault("float_format", "%.10g")
    frame.to_csv(path, lineterminator="\n", **kwargs)
    return path
