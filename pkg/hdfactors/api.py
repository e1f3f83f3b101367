"""
hdfactors.api
~~~~~~~~~~~~~

This module implements the high-level API. Every experiment is driven by
one :class:`~hdfactors.config.ExperimentConfig` and returns plain
dictionaries or DataFrames that embed that configuration.
"""

import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from hdfactors.config import ExperimentConfig
from hdfactors.core import utils
from hdfactors.core.composer import (
    CompositionalExclusion,
    PairedExample,
    SymbolicObject,
    audit_pairs,
    decode_batch,
    encode_batch,
    exchange_batch,
    generate_pairs,
    generate_split,
)
from hdfactors.core.memory import FactorSchema, ItemMemory
from hdfactors.core.metrics import (
    ChangeTable,
    LatentUnitSpec,
    MetricReport,
    ScrambledPipeline,
    SymbolicPipeline,
    build_change_table,
)
from hdfactors.core.vectors import SpaceConfig, add_noise
from hdfactors.exceptions import AuditError
from hdfactors.scene import RenderConfig, Scene
from hdfactors.scene.core import SYMMETRY


logger = logging.getLogger(__name__)

# Sub-streams of the data domain, one per kind of sampled object set.
ROUNDTRIP_STREAM = 10
METRIC_STREAM = 11
NOISE_STREAM = 12

PIPELINES = {"ideal": SymbolicPipeline, "scrambled": ScrambledPipeline}


def memory(
    config: ExperimentConfig,
    schema: Optional[FactorSchema] = None,
    dim: Optional[int] = None,
    seed: Optional[int] = None,
) -> ItemMemory:
    """Build the item memory of a config, optionally for another schema, D or seed."""
    space = SpaceConfig(
        config.dim if dim is None else dim,
        config.master_seed if seed is None else seed,
    )
    return ItemMemory.build(schema or config.schema, space)


def scene(config: ExperimentConfig) -> Scene:
    """The renderer and classifier over the config's metric schema."""
    return Scene(
        RenderConfig(
            schema=config.metric_schema, width=config.width, height=config.height
        )
    )


def random_values(
    schema: FactorSchema, count: int, seed: int, stream: int = ROUNDTRIP_STREAM
) -> np.ndarray:
    """A (count, N) array of uniformly drawn value indices."""
    rng = utils.generator(seed, utils.DATA_DOMAIN, stream)
    return rng.integers(0, schema.cardinalities, size=(count, len(schema)))


def metric_objects(
    config: ExperimentConfig, seed: Optional[int] = None
) -> List[SymbolicObject]:
    """Draw the evaluation objects of the metrics.

    With ``config.canonical_objects`` the orientation is drawn below
    ``cardinality / max fold``, where every shape's orientation index is its
    own canonical form. Changing the shape then never changes the canonical
    orientation.
    """
    seed = config.master_seed if seed is None else seed
    schema = config.metric_schema
    values = random_values(schema, config.objects, seed, METRIC_STREAM)
    if config.canonical_objects:
        shapes = scene(config).config.shapes[: schema.cardinalities[0]]
        fold = max(SYMMETRY[name] for name in shapes)
        count = max(1, schema.cardinalities[2] // fold)
        values[:, 2] = values[:, 2] % count
    return [SymbolicObject(tuple(row)) for row in values]


def _check_trials(trials: int) -> None:
    if trials < 1:
        raise ValueError("Number of trials must be >= 1, got {}".format(trials))


def factor_accuracy(
    item_memory: ItemMemory,
    values: np.ndarray,
    sigma: float = 0.0,
    stream: int = NOISE_STREAM,
) -> np.ndarray:
    """Per-factor decoding accuracy of encoded, optionally noisy, objects.

    Args:
        item_memory: The item memory.
        values: (T, N) value indices.
        sigma: Absolute noise standard deviation per component.
        stream: Noise stream. Runs sharing a stream share noise directions,
            so only the noise magnitude differs between them.

    Returns:
        An array of N accuracies.
    """
    encoded = encode_batch(values, item_memory)
    if sigma > 0:
        encoded = add_noise(encoded, sigma, stream, item_memory.space.master_seed)
    decoded, _ = decode_batch(encoded, item_memory)
    return (decoded == values).mean(axis=0)


def roundtrip(config: ExperimentConfig, trials: int) -> Dict[str, Any]:
    """Encode and decode random objects and report accuracy per factor.

    Parameters:
        config: The experiment config.
        trials: Number of random objects.

    Returns:
        A report with per-factor accuracy, the overall factor accuracy, the
        fraction of objects decoded without error and the mean winning
        similarity per factor.
    """
    _check_trials(trials)
    # Construct codebooks and random objects:
    item_memory = memory(config)
    values = random_values(config.schema, trials, config.master_seed)
    # Encode and clean up every factor:
    decoded, sims = decode_batch(encode_batch(values, item_memory), item_memory)
    correct = decoded == values
    logger.info("Round trip of %d objects: accuracy %.5f", trials, correct.mean())
    names = config.schema.names
    return {
        "config": config.to_dict(),
        "trials": trials,
        "accuracy": dict(zip(names, correct.mean(axis=0).tolist())),
        "overall": float(correct.mean()),
        "exact": float(correct.all(axis=1).mean()),
        "similarity": dict(zip(names, sims.mean(axis=0).tolist())),
    }


def generate(
    config: ExperimentConfig, count: int, test_count: int = 0
) -> Tuple[List[PairedExample], List[PairedExample], Dict[str, Any]]:
    """Generate an audited paired dataset.

    Parameters:
        config: The experiment config (schema, seed, mode, exclusion).
        count: Number of training pairs.
        test_count: Number of unrestricted test pairs. Defaults to none.

    Returns:
        The training pairs, the test pairs and the manifest.
    """
    exclusion = CompositionalExclusion(config.schema) if config.exclusion else None
    # Sample the training pairs, and test pairs if requested:
    if test_count:
        train, test = generate_split(
            config.schema,
            count,
            test_count,
            config.mode,
            config.differences,
            exclusion,
            config.master_seed,
        )
    else:
        train = generate_pairs(
            config.schema,
            count,
            config.mode,
            config.differences,
            exclusion,
            config.master_seed,
        )
        test = []
    # Both splits must pass the audit and must not share pairs:
    audit_pairs(train, config.schema, config.mode, config.differences, exclusion)
    audit_pairs(test, config.schema, config.mode, config.differences)
    overlap = {pair.key for pair in train} & {pair.key for pair in test}
    if overlap:
        raise AuditError("Test set repeats {} training pairs".format(len(overlap)))
    manifest = {
        "config": config.to_dict(),
        "schema": config.schema.to_list(),
        "seed": config.master_seed,
        "mode": config.mode,
        "differences": config.differences,
        "exclusion": CompositionalExclusion.name if exclusion else None,
    }
    return train, test, manifest


def verify_exchange(
    config: ExperimentConfig, pairs: Sequence[PairedExample]
) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    """Check latent feature exchange against symbolic exchange.

    For every pair the target is encoded and edited at all flagged factors by
    latent exchange. The result must decode to the symbolically exchanged
    object, and the mirrored exchange from the donor's side must decode to
    the mirrored object. The cosine to re-encoding the exchanged object is
    reported too.

    Parameters:
        config: The experiment config.
        pairs: An audited dataset; pairs with ``e = 0`` are rejected.

    Returns:
        One row per pair and a summary with pass rates.
    """
    audit_pairs(pairs, config.schema)
    if not pairs:
        raise ValueError("No pairs to verify")
    # Construct codebooks and the symbolically exchanged objects:
    item_memory = memory(config)
    first = np.array([pair.first.values for pair in pairs])
    second = np.array([pair.second.values for pair in pairs])
    flags = np.array([pair.exchange for pair in pairs], dtype=bool)
    swapped_first = np.where(flags, second, first)
    swapped_second = np.where(flags, first, second)

    # Edit both sides in latent space:
    edited = exchange_batch(
        encode_batch(first, item_memory), first, second, flags, item_memory
    )
    mirrored = exchange_batch(
        encode_batch(second, item_memory), second, first, flags, item_memory
    )
    # Compare to re-encoding the exchanged object:
    reencoded = encode_batch(swapped_first, item_memory)
    cosines = np.sum(edited * reencoded, axis=1) / (
        np.linalg.norm(edited, axis=1) * np.linalg.norm(reencoded, axis=1)
    )
    # Decode and compare to symbolic exchange:
    passed = decode_batch(edited, item_memory)[0] == swapped_first
    mirror_passed = decode_batch(mirrored, item_memory)[0] == swapped_second
    results = pd.DataFrame(
        {
            "pair": np.arange(len(pairs)),
            "differences": flags.sum(axis=1),
            "passed": passed.all(axis=1),
            "mirrored": mirror_passed.all(axis=1),
            "cosine": np.clip(cosines, -1.0, 1.0),
        }
    )
    by_differences = results.groupby("differences")[["passed", "cosine"]].agg(
        {"passed": "mean", "cosine": "min"}
    )
    summary = {
        "config": config.to_dict(),
        "pairs": len(results),
        "pass_rate": float(results["passed"].mean()),
        "mirror_rate": float(results["mirrored"].mean()),
        "min_cosine": float(results["cosine"].min()),
        "by_differences": {
            str(k): {
                "pass_rate": float(row["passed"]),
                "min_cosine": float(row["cosine"]),
            }
            for k, row in by_differences.iterrows()
        },
    }
    logger.info(
        "Verified %d exchanges: pass rate %.5f", len(results), summary["pass_rate"]
    )
    return results, summary


def evaluate(
    config: ExperimentConfig,
    pipeline: str = "ideal",
    dim: Optional[int] = None,
    seed: Optional[int] = None,
) -> Tuple[MetricReport, ChangeTable]:
    """Compute DMM and DCM of a symbolic pipeline on the metric schema.

    Parameters:
        config: The experiment config.
        pipeline: ``"ideal"`` or ``"scrambled"``.
        dim: Overrides the config's dimension.
        seed: Overrides the config's master seed.

    Returns:
        The metric report and the change table it was computed from.
    """
    if pipeline not in PIPELINES:
        raise ValueError(
            "Unknown pipeline '{}', choose from {}".format(pipeline, sorted(PIPELINES))
        )
    # Construct the pipeline over the metric schema:
    item_memory = memory(config, config.metric_schema, dim, seed)
    model = PIPELINES[pipeline](item_memory, scene(config))
    # Probe every factor on every evaluation object:
    table = build_change_table(
        model,
        metric_objects(config, seed),
        LatentUnitSpec.for_factors(item_memory),
        skip_equivalent=config.skip_equivalent,
        jobs=config.jobs,
    )
    metadata = {
        "pipeline": pipeline,
        "schema": config.metric_schema.to_list(),
        "dim": item_memory.dim,
        "master_seed": item_memory.space.master_seed,
        "skip_equivalent": config.skip_equivalent,
        "canonical_objects": config.canonical_objects,
    }
    # Score the change table:
    report = MetricReport.from_table(table, metadata)
    logger.info("%s pipeline: %r", pipeline.capitalize(), report)
    return report, table


def noise_sweep(config: ExperimentConfig, trials: int) -> pd.DataFrame:
    """Decoding accuracy per factor at every noise level of the config.

    Noise levels are given in units of 1/sqrt(D), so 1.0 adds noise with
    about the norm of a seed vector. All levels reuse the same objects and
    the same noise directions.

    Returns:
        One row per noise level: ``sigma`` and one accuracy column per factor.
    """
    _check_trials(trials)
    item_memory = memory(config)
    values = random_values(config.schema, trials, config.master_seed)
    # Same objects and noise directions at every level:
    rows = []
    for sigma in config.sigmas:
        accuracy = factor_accuracy(item_memory, values, sigma / np.sqrt(config.dim))
        logger.info("sigma=%g: accuracy %.5f", sigma, accuracy.mean())
        rows.append([sigma, *accuracy.tolist()])
    return pd.DataFrame(rows, columns=["sigma", *config.schema.names])


def dim_ablation(config: ExperimentConfig, trials: int) -> pd.DataFrame:
    """Round-trip accuracy and metrics of the ideal pipeline for every D.

    Returns:
        One row per dimension: ``dim``, overall ``accuracy``, one accuracy
        column per factor, ``dmm`` and ``dcm``.
    """
    _check_trials(trials)
    values = random_values(config.schema, trials, config.master_seed)
    rows = []
    for dim in config.dims:
        accuracy = factor_accuracy(memory(config, dim=dim), values)
        report, _ = evaluate(config, dim=dim)
        logger.info(
            "D=%d: accuracy %.5f, DMM %.4f, DCM %.4f",
            dim,
            accuracy.mean(),
            report.dmm,
            report.dcm,
        )
        rows.append(
            [dim, float(accuracy.mean()), *accuracy.tolist(), report.dmm, report.dcm]
        )
    return pd.DataFrame(
        rows, columns=["dim", "accuracy", *config.schema.names, "dmm", "dcm"]
    )


def seed_stability(
    config: ExperimentConfig, trials: int
) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    """Round-trip accuracy across the config's master seeds.

    Every seed draws its own codebooks and objects.

    Returns:
        One row per seed and a summary with mean, variance and range.
    """
    _check_trials(trials)
    rows = []
    for seed in config.seeds:
        values = random_values(config.schema, trials, seed)
        accuracy = factor_accuracy(memory(config, seed=seed), values)
        rows.append([seed, float(accuracy.mean()), *accuracy.tolist()])
    frame = pd.DataFrame(rows, columns=["seed", "accuracy", *config.schema.names])
    summary = {
        "config": config.to_dict(),
        "trials": trials,
        "mean": float(frame["accuracy"].mean()),
        "variance": float(frame["accuracy"].var(ddof=0)),
        "range": float(frame["accuracy"].max() - frame["accuracy"].min()),
    }
    return frame, summary
