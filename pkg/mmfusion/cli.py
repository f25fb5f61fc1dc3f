# SPDX-FileCopyrightText: 2026 mmfusion contributors
#
# SPDX-License-Identifier: Apache-2.0

"""Generate synthetic data, train, evaluate and compare multimodal sentiment classifiers."""

import argparse
import copy
import json
import logging
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from logging.config import dictConfig
from pathlib import Path
from typing import Any

from . import __version__
from .checkpoint import copy_encoder, load_checkpoint, save_checkpoint
from .config import RunConfig
from .data import (
    MODALITIES,
    MultimodalSample,
    Sentiment,
    class_counts,
    generate_synthetic,
    load_dataset,
    split_dataset,
    write_dataset,
)
from .errors import ConfigError, MMFusionError
from .fusion import Approach, FusionModel, Model, UnimodalModel
from .report import (
    comparison_rows,
    format_comparison,
    write_comparison_csv,
    write_metrics_csv,
    write_summary_json,
)
from .training import Metrics, RunResult, average_history, evaluate_predictions, run_approach
from .utils import format_percent, get_user_config_path, parse_int_list

TEST_SPLIT_FILE = "test_split.mmsa"


def configure_logging(debug: bool) -> None:
    """Configure logging."""
    dictConfig(
        {
            "version": 1,
            "formatters": {
                "default": {
                    "format": "[%(asctime)s] %(levelname)s in %(module)s: %(message)s",
                }
            },
            "handlers": {
                "stderr": {
                    "class": "logging.StreamHandler",
                    "stream": "ext://sys.stderr",
                    "formatter": "default",
                }
            },
            "root": {"level": "DEBUG" if debug else "INFO", "handlers": ["stderr"]},
        }
    )


def _triple(value: str) -> list[int]:
    return parse_int_list(value, expected=len(MODALITIES))


def _int_list(value: str) -> list[int]:
    return parse_int_list(value)


def _print_time(start: float) -> None:
    print(f"# time: {time.perf_counter() - start:.2f}s")


def _format_counts(samples: Sequence[MultimodalSample]) -> str:
    counts = class_counts(samples)
    return " ".join(f"{label.name.lower()}={counts[label]}" for label in Sentiment)


def _check_compatible(model: Model, samples: Sequence[MultimodalSample]) -> None:
    """Raise ConfigError if the dataset shapes do not fit the model."""
    if isinstance(model, UnimodalModel):
        encoders = {model.modality: model.encoder}
    else:
        encoders = model.encoders
    shapes = dict(zip(MODALITIES, samples[0].shapes, strict=True))
    for modality, encoder in encoders.items():
        seq_len, dim = shapes[modality]
        if dim != encoder.input_dim or seq_len > encoder.config.max_seq_len:
            msg = (
                f"{modality}: dataset shape (seq_len={seq_len}, feat_dim={dim}) does not fit "
                f"checkpoint shape (max_seq_len={encoder.config.max_seq_len}, "
                f"feat_dim={encoder.input_dim})"
            )
            raise ConfigError(msg)


def cmd_generate(args: argparse.Namespace, config: RunConfig) -> int:
    """Write a synthetic dataset."""
    start = time.perf_counter()
    synthetic = config.to_synthetic_config()
    if synthetic.n_samples == 0:
        logging.warning("Generating an empty dataset (n=0), the file holds only a header")
    samples = generate_synthetic(synthetic)
    write_dataset(samples, args.out, shapes=synthetic.shapes)
    print(f"samples: {len(samples)}")
    print(f"classes: {_format_counts(samples)}")
    print(f"written: {args.out}")
    _print_time(start)
    return 0


def _warm_start(model: Model, out_dir: Path) -> None:
    """Copy encoders of single-modality checkpoints in `out_dir` into a fused model."""
    if not isinstance(model, FusionModel):
        logging.warning("--warm-start only applies to a1 and a2, ignored")
        return
    for modality in MODALITIES:
        path = out_dir / f"{modality}.ckpt"
        if not path.is_file():
            logging.warning("No %s checkpoint at %s, encoder starts from scratch", modality, path)
            continue
        source, _ = load_checkpoint(path)
        if not isinstance(source, UnimodalModel) or source.modality != modality:
            logging.warning("%s does not hold a %s model, skipped", path, modality)
            continue
        copy_encoder(source, model)
        logging.info("Warm-started %s encoder from %s", modality, path)


def _write_run(
    out_dir: Path, result: RunResult, config: RunConfig, approach: Approach, echo: dict[str, Any]
) -> None:
    """Write checkpoint(s), metrics CSV and summary JSON of one run."""
    out_dir.mkdir(parents=True, exist_ok=True)
    extra = {"seed": int(config.SEED), "epochs": int(config.EPOCHS)}
    save_checkpoint(result.model, out_dir / f"{approach.value}.ckpt", extra=extra)
    for modality, model in result.unimodal_models.items():
        save_checkpoint(model, out_dir / f"{modality}.ckpt", extra=extra)
    write_metrics_csv(result.metrics.history, out_dir / f"{approach.value}_metrics.csv")
    write_summary_json(
        out_dir / f"{approach.value}_summary.json",
        approach=approach,
        seed=int(config.SEED),
        test_accuracy=result.metrics.test_accuracy,
        epochs=int(config.EPOCHS),
        config_echo=echo,
        unimodal=result.metrics.unimodal,
    )


def _accuracy_text(metrics: Metrics) -> str:
    if metrics.test_accuracy is None:
        return "n/a (empty test split)"
    return format_percent(metrics.test_accuracy)


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    """Train one approach and write its artifacts."""
    start = time.perf_counter()
    approach = Approach(args.approach)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    samples = load_dataset(args.data)
    train_set, val_set, test_set = split_dataset(samples, config.split_ratios, int(config.SEED))
    logging.debug(
        "Split sizes: train %d, validation %d, test %d",
        len(train_set),
        len(val_set),
        len(test_set),
    )
    write_dataset(test_set, out_dir / TEST_SPLIT_FILE, shapes=samples[0].shapes)

    result = run_approach(
        train_set,
        val_set,
        test_set,
        config.to_train_config(approach),
        config.to_encoder_config(),
        head_hidden_dim=int(config.HEAD_HIDDEN_DIM),
        dtype=config.DTYPE,
        workers=int(config.WORKERS),
        prepare=(lambda model: _warm_start(model, out_dir)) if args.warm_start else None,
    )
    echo = config.as_dict() | {"DATA": str(args.data), "WARM_START": bool(args.warm_start)}
    _write_run(out_dir, result, config, approach, echo)

    for modality, accuracy in result.metrics.unimodal.items():
        print(f"{modality} test accuracy: {format_percent(accuracy)}")
    print(f"{approach.value} test accuracy: {_accuracy_text(result.metrics)}")
    _print_time(start)
    return 0


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> int:
    """Evaluate a checkpoint on a dataset file."""
    start = time.perf_counter()
    model, stored = load_checkpoint(args.checkpoint)
    samples = load_dataset(args.data)
    if not samples:
        logging.critical("Dataset %s holds no samples", args.data)
        return 1
    _check_compatible(model, samples)
    _, accuracy, loss = evaluate_predictions(model, samples, int(config.BATCH_SIZE))
    result = {
        "approach": model.approach.value,
        "accuracy": accuracy,
        "mean_loss": loss,
        "n_samples": len(samples),
        "seed": int(stored["seed"]) if "seed" in stored else None,
    }
    print(f"{model.approach.value} accuracy: {format_percent(accuracy)}")
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    _print_time(start)
    return 0


def cmd_compare(args: argparse.Namespace, config: RunConfig) -> int:
    """Train every approach for every seed and tabulate mean test accuracies."""
    start = time.perf_counter()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = load_dataset(args.data)
    seeds = list(args.seeds)

    splits = {seed: split_dataset(samples, config.split_ratios, seed) for seed in seeds}
    # a0 is assembled from the single-modality runs of the same seed
    trained = (Approach.VIDEO, Approach.AUDIO, Approach.TEXT, Approach.A1, Approach.A2)
    tasks = [(seed, approach) for seed in seeds for approach in trained]

    def run(task: tuple[int, Approach]) -> RunResult:
        seed, approach = task
        return run_approach(
            *splits[seed],
            replace(config.to_train_config(approach), seed=seed),
            config.to_encoder_config(),
            head_hidden_dim=int(config.HEAD_HIDDEN_DIM),
            dtype=config.DTYPE,
        )

    workers = int(config.WORKERS)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(zip(tasks, pool.map(run, tasks), strict=True))
    else:
        results = {task: run(task) for task in tasks}

    accuracies: dict[Approach, list[float]] = {approach: [] for approach in Approach}
    for seed in seeds:
        seed_config = copy.copy(config)
        seed_config.SEED = seed
        seed_dir = out_dir / f"seed{seed}"
        unimodal = [results[(seed, Approach(m))].model for m in MODALITIES]
        late_vote = FusionModel.from_unimodal(unimodal)  # type: ignore[arg-type]
        test_set = splits[seed][2]
        a0_metrics = Metrics(
            history=average_history(
                [results[(seed, Approach(m))].metrics.history for m in MODALITIES]
            )
        )
        if test_set:
            _, a0_metrics.test_accuracy, _ = evaluate_predictions(
                late_vote, test_set, int(config.BATCH_SIZE)
            )
            a0_metrics.unimodal = {
                m: results[(seed, Approach(m))].metrics.test_accuracy for m in MODALITIES
            }  # type: ignore[assignment]
        results[(seed, Approach.A0)] = RunResult(late_vote, a0_metrics)

        echo = seed_config.as_dict() | {"DATA": str(args.data)}
        for approach in Approach:
            result = results[(seed, approach)]
            _write_run(seed_dir, result, seed_config, approach, echo)
            if result.metrics.test_accuracy is not None:
                accuracies[approach].append(result.metrics.test_accuracy)

    rows = comparison_rows(accuracies)
    write_comparison_csv(rows, out_dir / "comparison.csv")
    print(format_comparison(rows))
    _print_time(start)
    return 0


def build_parser() -> argparse.ArgumentParser:
    """Create the command line parser."""
    parser = argparse.ArgumentParser(
        prog="mmfusion",
        description=__doc__,
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument(
        "-c",
        "--config",
        type=str,
        help="Path to YAML configuration file; the per-user file is read if it exists",
        default=None,
    )
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    parser.add_argument("--debug", action="store_true", help="Verbose logging")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Options shared by the training commands; None means "not given"
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--epochs", type=int, help="Training epochs")
    common.add_argument("--batch-size", type=int, help="Samples per optimizer step")
    common.add_argument("--lr", dest="learning_rate", type=float, help="Adam learning rate")
    common.add_argument("--dtype", choices=["float32", "float64"], help="Training precision")
    common.add_argument("--workers", type=int, help="Parallel independent trainings")
    common.add_argument(
        "--head-hidden-dim", type=int, help="Hidden width of fused heads, 0 for linear"
    )

    gen = subparsers.add_parser(
        "generate", help="Write a synthetic dataset", formatter_class=parser.formatter_class
    )
    gen.add_argument("--out", required=True, help="Output dataset file")
    gen.add_argument(
        "--mode", dest="coupling", choices=["joint", "independent"], help="Label coupling"
    )
    gen.add_argument("--n", dest="n_samples", type=int, help="Number of samples")
    gen.add_argument("--seed", type=int, help="Generator seed")
    gen.add_argument(
        "--dims", dest="feat_dims", type=_triple, help="Feature dims of video,audio,text"
    )
    gen.add_argument(
        "--seq-lens", dest="seq_lens", type=_triple, help="Sequence lengths of video,audio,text"
    )
    gen.add_argument("--noise-std", type=float, help="Feature noise standard deviation")
    gen.set_defaults(handler=cmd_generate)

    train = subparsers.add_parser(
        "train",
        parents=[common],
        help="Train one approach",
        formatter_class=parser.formatter_class,
    )
    train.add_argument("--data", required=True, help="Dataset file")
    train.add_argument(
        "--approach", required=True, choices=[a.value for a in Approach], help="What to train"
    )
    train.add_argument("--seed", type=int, help="Run seed")
    train.add_argument("--out", required=True, help="Output directory")
    train.add_argument(
        "--warm-start",
        action="store_true",
        help="Initialize a1/a2 encoders from video/audio/text checkpoints in --out",
    )
    train.set_defaults(handler=cmd_train)

    evaluate = subparsers.add_parser(
        "eval", help="Evaluate a checkpoint", formatter_class=parser.formatter_class
    )
    evaluate.add_argument("--data", required=True, help="Dataset file")
    evaluate.add_argument("--checkpoint", required=True, help="Checkpoint file")
    evaluate.add_argument("--out", help="Write the JSON result here instead of stdout")
    evaluate.set_defaults(handler=cmd_eval)

    compare = subparsers.add_parser(
        "compare",
        parents=[common],
        help="Train all approaches over several seeds",
        formatter_class=parser.formatter_class,
    )
    compare.add_argument("--data", required=True, help="Dataset file")
    compare.add_argument("--seeds", required=True, type=_int_list, help="Seeds, e.g. 1,2,3")
    compare.add_argument("--out", required=True, help="Output directory")
    compare.set_defaults(handler=cmd_compare)
    return parser


# Command line destinations that map onto configuration keys
OVERRIDE_KEYS = (
    "epochs",
    "batch_size",
    "learning_rate",
    "dtype",
    "workers",
    "head_hidden_dim",
    "coupling",
    "n_samples",
    "seed",
    "feat_dims",
    "seq_lens",
    "noise_std",
)


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command line interface and return the exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.debug)

    config_path = args.config
    if config_path is None:
        default_path = Path(get_user_config_path(file="config.yaml"))
        config_path = default_path if default_path.is_file() else None
    overrides = {key: getattr(args, key, None) for key in OVERRIDE_KEYS}
    try:
        config = RunConfig.from_yaml_and_args(config_path, overrides)
    except FileNotFoundError:
        parser.error(f"configuration file not found: {config_path}")
    except ConfigError as e:
        parser.error(f"invalid configuration: {e}")
    logging.debug("Run configuration: %s", config.as_dict())

    try:
        return args.handler(args, config)
    except (MMFusionError, OSError) as e:
        logging.critical("%s failed: %s", args.command, e)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
