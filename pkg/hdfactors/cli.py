"""
hdfactors.cli
~~~~~~~~~~~~~

This module implements the command-line harness. Every subcommand resolves
one experiment config (defaults, then ``--config``, then flags), runs one
experiment of :mod:`hdfactors.api` and writes plain-text outputs below
``--out-dir`` that embed the resolved config.
"""

import argparse
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from hdfactors import api
from hdfactors.config import ExperimentConfig
from hdfactors.core import utils
from hdfactors.core.composer import (
    MULTI,
    SINGLE,
    SymbolicObject,
    read_dataset,
    write_dataset,
)
from hdfactors.core.memory import sidecar
from hdfactors.exceptions import AuditError, HDFactorsError


logger = logging.getLogger("hdfactors")


def _floats(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> List[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _object(text: str) -> SymbolicObject:
    return SymbolicObject(tuple(_ints(text)))


def _path(args: argparse.Namespace, path: Path) -> Path:
    """Resolve a path relative to ``--out-dir``."""
    return path if path.is_absolute() else args.out_dir / path


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, overridden by ``--config``, overridden by flags."""
    if args.config is not None:
        config = ExperimentConfig.from_file(args.config)
    else:
        config = ExperimentConfig().validate()
    changes = {
        key: getattr(args, key, None)
        for key in (
            "schema",
            "metric_schema",
            "dim",
            "jobs",
            "exclusion",
            "mode",
            "differences",
            "sigmas",
            "dims",
            "seeds",
            "objects",
        )
    }
    changes["master_seed"] = args.seed
    for key in ("sigmas", "dims", "seeds"):
        if changes[key] is not None:
            changes[key] = tuple(changes[key])
    return config.override(**changes)


def _write_table(
    frame, path: Path, metadata: Dict[str, Any], index: bool = False
) -> Path:
    """Write a CSV table and its config sidecar (``<path>.json``)."""
    utils.write_csv(frame, path, index=index)
    utils.dump_json(metadata, sidecar(path))
    logger.info("Wrote %s", path)
    return path


def cmd_gen_pairs(args: argparse.Namespace, config: ExperimentConfig) -> None:
    train, test, manifest = api.generate(config, args.count, args.test_count)
    path = write_dataset(train, dict(manifest, split="train"), _path(args, args.out))
    logger.info("Wrote %d pairs to %s", len(train), path)
    if test:
        test_path = path.with_name(path.stem + ".test" + path.suffix)
        write_dataset(test, dict(manifest, split="test", exclusion=None), test_path)
        logger.info("Wrote %d test pairs to %s", len(test), test_path)


def cmd_roundtrip(args: argparse.Namespace, config: ExperimentConfig) -> None:
    report = api.roundtrip(config, args.trials)
    utils.dump_json(report, _path(args, args.out))
    if args.save_memory is not None:
        api.memory(config).save(_path(args, args.save_memory))


def cmd_exchange(args: argparse.Namespace, config: ExperimentConfig) -> None:
    pairs, manifest = read_dataset(_path(args, args.dataset))
    if manifest and manifest.get("schema") != config.schema.to_list():
        raise AuditError(
            "Dataset schema {} differs from the config schema {}".format(
                manifest.get("schema"), config.schema.to_list()
            )
        )
    results, summary = api.verify_exchange(config, pairs)
    summary["dataset"] = str(args.dataset)
    summary["results"] = results.to_dict(orient="records")
    utils.dump_json(summary, _path(args, args.out))


def cmd_metrics(args: argparse.Namespace, config: ExperimentConfig) -> None:
    api.scene(config).audit()
    report, table = api.evaluate(config, args.pipeline)
    if not table.rows.isin([0, 1]).all().all():
        raise AuditError("Change table holds entries outside {0, 1}")
    report = dict(report.to_dict(), config=config.to_dict())
    utils.dump_json(report, _path(args, args.out))
    metadata = dict(report["metadata"], config=report["config"])
    _write_table(table.rows, _path(args, args.table), metadata, index=True)


def cmd_noise_sweep(args: argparse.Namespace, config: ExperimentConfig) -> None:
    frame = api.noise_sweep(config, args.trials)
    metadata = {"config": config.to_dict(), "trials": args.trials}
    _write_table(frame, _path(args, args.out), metadata)


def cmd_dim_ablation(args: argparse.Namespace, config: ExperimentConfig) -> None:
    frame = api.dim_ablation(config, args.trials)
    metadata = {"config": config.to_dict(), "trials": args.trials}
    _write_table(frame, _path(args, args.out), metadata)


def cmd_seed_stability(args: argparse.Namespace, config: ExperimentConfig) -> None:
    frame, summary = api.seed_stability(config, args.trials)
    _write_table(frame, _path(args, args.out), summary)


def cmd_render(args: argparse.Namespace, config: ExperimentConfig) -> None:
    objects = list(args.object or [])
    if args.count:
        values = api.random_values(
            config.metric_schema, args.count, config.master_seed, api.METRIC_STREAM
        )
        objects.extend(SymbolicObject(tuple(row)) for row in values)
    if not objects:
        raise ValueError("Nothing to render: pass --object or --count")
    api.scene(config).write_batch(
        objects, _path(args, args.images), {"config": config.to_dict()}
    )


def cmd_classify(args: argparse.Namespace, config: ExperimentConfig) -> None:
    scene = api.scene(config)
    entries = []
    for path in args.images:
        obj = scene.classify(scene.read(_path(args, path)))
        entries.append({"file": str(path), "object": list(obj.values)})
    utils.dump_json(
        {"config": config.to_dict(), "predictions": entries}, _path(args, args.out)
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file.")
    parser.add_argument("--seed", type=int, help="Overrides the master seed.")
    parser.add_argument("--dim", type=int, help="Vector dimension D.")
    parser.add_argument("--jobs", type=int, help="Worker threads.")
    parser.add_argument(
        "--out-dir", type=Path, default=Path("."), help="Base of all relative paths."
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log progress.")
    verbosity.add_argument(
        "-q", "--quiet", action="store_true", help="Log errors only."
    )


def _add_pair_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--schema", help="Preset name or JSON schema file.")
    parser.add_argument(
        "--exclusion",
        action="store_const",
        const=True,
        help="Drop squares in the right half of the frame.",
    )
    parser.add_argument("--mode", choices=(SINGLE, MULTI))
    parser.add_argument(
        "--differences", type=int, help="Differing factors in multi mode."
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdfactors",
        description="Symbolic disentangled representations with hypervectors.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def command(name, function, summary):
        sub = commands.add_parser(name, help=summary)
        _add_common(sub)
        sub.set_defaults(function=function)
        return sub

    sub = command("gen-pairs", cmd_gen_pairs, "Generate a paired dataset.")
    _add_pair_options(sub)
    sub.add_argument("--count", type=int, default=1000)
    sub.add_argument("--test-count", type=int, default=0)
    sub.add_argument("--out", type=Path, default=Path("pairs.jsonl"))

    sub = command("roundtrip", cmd_roundtrip, "Encode/decode accuracy per factor.")
    sub.add_argument("--schema", help="Preset name or JSON schema file.")
    sub.add_argument("--trials", type=int, default=10000)
    sub.add_argument("--out", type=Path, default=Path("roundtrip.json"))
    sub.add_argument("--save-memory", type=Path, help="Also write the item memory.")

    sub = command("exchange", cmd_exchange, "Verify latent feature exchange.")
    sub.add_argument("--schema", help="Preset name or JSON schema file.")
    sub.add_argument("dataset", type=Path)
    sub.add_argument("--out", type=Path, default=Path("exchange.json"))

    sub = command("metrics", cmd_metrics, "DMM and DCM of a symbolic pipeline.")
    sub.add_argument("--metric-schema", help="Preset name or JSON schema file.")
    sub.add_argument("--pipeline", choices=sorted(api.PIPELINES), default="ideal")
    sub.add_argument("--objects", type=int)
    sub.add_argument("--out", type=Path, default=Path("metrics.json"))
    sub.add_argument("--table", type=Path, default=Path("changes.csv"))

    sub = command("noise-sweep", cmd_noise_sweep, "Decoding accuracy under noise.")
    sub.add_argument("--schema", help="Preset name or JSON schema file.")
    sub.add_argument(
        "--sigmas", type=_floats, help="Noise levels in units of 1/sqrt(D)."
    )
    sub.add_argument("--trials", type=int, default=10000)
    sub.add_argument("--out", type=Path, default=Path("noise.csv"))

    sub = command("dim-ablation", cmd_dim_ablation, "Accuracy and metrics per D.")
    sub.add_argument("--schema", help="Preset name or JSON schema file.")
    sub.add_argument("--metric-schema", help="Preset name or JSON schema file.")
    sub.add_argument("--dims", type=_ints)
    sub.add_argument("--objects", type=int)
    sub.add_argument("--trials", type=int, default=2000)
    sub.add_argument("--out", type=Path, default=Path("ablation.csv"))

    sub = command("seed-stability", cmd_seed_stability, "Accuracy across master seeds.")
    sub.add_argument("--schema", help="Preset name or JSON schema file.")
    sub.add_argument("--seeds", type=_ints)
    sub.add_argument("--trials", type=int, default=10000)
    sub.add_argument("--out", type=Path, default=Path("stability.csv"))

    sub = command("render", cmd_render, "Render objects into PGM images.")
    sub.add_argument("--metric-schema", help="Preset name or JSON schema file.")
    sub.add_argument(
        "--object", type=_object, action="append", help="Comma-separated value indices."
    )
    sub.add_argument("--count", type=int, default=0, help="Random objects to add.")
    sub.add_argument("--images", type=Path, default=Path("images"))

    sub = command("classify", cmd_classify, "Classify PGM images.")
    sub.add_argument("--metric-schema", help="Preset name or JSON schema file.")
    sub.add_argument("images", type=Path, nargs="+")
    sub.add_argument("--out", type=Path, default=Path("classify.json"))
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line and return its exit code."""
    args = build_parser().parse_args(argv)
    if args.verbose:
        logger.setLevel(logging.INFO)
    elif args.quiet:
        logger.setLevel(logging.ERROR)
    else:
        logger.setLevel(logging.WARNING)
    try:
        config = load_config(args)
        args.function(args, config)
    except HDFactorsError as error:
        logger.error("%s: %s", type(error).__name__, error)
        return error.exit_code
    except ValueError as error:
        logger.error("Invalid input: %s", error)
        return 3
    except OSError as error:
        logger.error("File error: %s", error)
        return 5
    return 0
