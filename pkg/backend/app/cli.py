"""
FedSim experiment runner.

    run --config <path>
    gen-synth --classes C --per-class P --size HxW --channels 1 --seed S --out <dir>
    eval --checkpoint <path> --dataset <path> --model <name> [--config <path>]

Exit codes: 0 ok, 2 usage/config, 3 runtime.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import ValidationError

from . import settings
from .data.dataset import Dataset, load_dataset, save_dataset
from .data.partition import PartitionPlan, partition_dirichlet, partition_iid, partition_shards
from .data.synthetic import gen_synthetic_splits
from .errors import (
    ConfigError, FormatError, LabelError, LayoutError, NumericError, OptionError,
    PartitionError, ProtocolError, ShapeError, SpecError, UsageError,
)
from .fed import seeding
from .fed.engine import TrainingTask, evaluate, run_federation
from .metrics import CHECKPOINT, write_run_artifacts
from .nets.checkpoint import load_params, save_params
from .nets.model import ModelSpec, build_spec, describe, require_layout
from .schemas import ExperimentConfig, FileSource, SyntheticSource

logger = logging.getLogger("fedsim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

USAGE_ERRORS = (
    ConfigError, FormatError, LabelError, LayoutError, OptionError, PartitionError, SpecError, ShapeError, OSError,
)
RUNTIME_ERRORS = (NumericError, ProtocolError, UsageError)


def load_experiment_config(path: Path) -> ExperimentConfig:
    """Parse and validate a JSON experiment config; errors carry line or field diagnostics."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e}")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}")
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"{path}: {problems}")


def check_compatible(train: Dataset, other: Dataset, what: str = "test split") -> None:
    """Train and evaluation data must share class names and image shape."""
    if other.class_names != train.class_names:
        raise ConfigError(
            f"{what} classes {list(other.class_names)} differ from train classes {list(train.class_names)}"
        )
    if other.image_shape != train.image_shape:
        raise ConfigError(f"{what} images are {other.image_shape}, train images are {train.image_shape}")


def load_splits(source) -> Tuple[Dataset, Dataset]:
    if isinstance(source, SyntheticSource):
        return gen_synthetic_splits(
            source.classes, source.per_class, source.test_per_class,
            source.channels, source.height, source.width, source.seed,
        )
    assert isinstance(source, FileSource)
    for split in (source.train, source.test):
        if not split.exists():
            raise ConfigError(f"dataset file not found: {split}")
    train, test = load_dataset(source.train), load_dataset(source.test)
    check_compatible(train, test)
    return train, test


def build_partition(config: ExperimentConfig, train: Dataset) -> PartitionPlan:
    fed, part = config.federation, config.partition
    seed = seeding.derive_seed(fed.seed, seeding.PARTITION)
    if part.scheme == "iid":
        return partition_iid(train, fed.num_clients, seed)
    if part.scheme == "dirichlet":
        return partition_dirichlet(train, fed.num_clients, part.alpha, seed)
    return partition_shards(train, fed.num_clients, part.shards_per_client, seed)


def model_spec_for(name: str, dataset: Dataset, config: ExperimentConfig) -> ModelSpec:
    input_shape = config.preprocess.output_shape(dataset.image_shape)
    return build_spec(name, input_shape, dataset.num_classes)


def cmd_run(config_path: Path) -> int:
    config = load_experiment_config(config_path)
    threads = settings.get_thread_count()
    train, test = load_splits(config.dataset)
    if len(test) == 0:
        raise ConfigError("test split is empty")
    spec = model_spec_for(config.model, train, config)
    plan = build_partition(config, train)

    logger.info("🚀 %s | %d train / %d test | %s partition %s | threads=%d",
                describe(spec), len(train), len(test), plan.scheme, plan.sizes(), threads)
    task = TrainingTask(spec=spec, train=train, preprocess=config.preprocess)
    result = run_federation(config.federation, task, test, plan, threads=threads)

    final_eval = evaluate(spec, result.params, test, config.preprocess, stats_from=train, seed=config.federation.seed)
    out_dir = Path(config.output_dir)
    written = write_run_artifacts(out_dir, config, result.records, result.clients, train, final_eval)
    save_params(result.params, out_dir / CHECKPOINT)
    written.append(out_dir / CHECKPOINT)

    last = result.records[-1]
    logger.info("✅ done: final test_acc=%.4f test_loss=%.4f -> %s",
                last.global_test_acc, last.global_test_loss, out_dir)
    for path in written:
        logger.info("   • %s", path)
    return EXIT_OK


def parse_size(text: str) -> Tuple[int, int]:
    try:
        h, w = (int(part) for part in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like HxW, got {text!r}")
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError(f"size extents must be positive, got {text!r}")
    return h, w


def cmd_gen_synth(args: argparse.Namespace) -> int:
    if min(args.classes, args.per_class, args.test_per_class, args.channels) < 1:
        raise ConfigError("classes, per-class, test-per-class and channels must be positive")
    height, width = args.size
    train, test = gen_synthetic_splits(
        args.classes, args.per_class, args.test_per_class, args.channels, height, width, args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(train, out / "train.fsds")
    save_dataset(test, out / "test.fsds")
    logger.info("✅ wrote %d train / %d test examples (%d classes, %dx%dx%d) to %s",
                len(train), len(test), args.classes, args.channels, height, width, out)
    return EXIT_OK


def cmd_eval(checkpoint: Path, dataset_path: Path, model: str, config_path: Optional[Path] = None) -> int:
    params = load_params(checkpoint)
    dataset = load_dataset(dataset_path)
    if len(dataset) == 0:
        raise ConfigError(f"{dataset_path} contains no examples")

    if config_path is not None:
        config = load_experiment_config(config_path)
        stats_from, _ = load_splits(config.dataset)
        check_compatible(stats_from, dataset, what=str(dataset_path))
        seed = config.federation.seed
    else:
        config = ExperimentConfig()
        # no train split to borrow statistics from
        stats_from, seed = dataset, 0
        logger.warning("no --config given: standardizing with the evaluated split's own statistics")

    spec = model_spec_for(model, dataset, config)
    require_layout(params, spec)
    result = evaluate(spec, params, dataset, config.preprocess, stats_from=stats_from, seed=seed)
    print(json.dumps({"accuracy": result.accuracy, "loss": result.loss, "examples": len(dataset)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedsim", description="Desk-scale federated averaging experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a federated experiment from a JSON config")
    run.add_argument("--config", type=Path, required=True)

    gen = sub.add_parser("gen-synth", help="Write synthetic train/test datasets")
    gen.add_argument("--classes", type=int, default=4)
    gen.add_argument("--per-class", type=int, default=200)
    gen.add_argument("--test-per-class", type=int, default=50)
    gen.add_argument("--size", type=parse_size, default=(16, 16), help="HxW")
    gen.add_argument("--channels", type=int, default=1)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, required=True)

    ev = sub.add_parser("eval", help="Evaluate a checkpoint on a dataset file")
    ev.add_argument("--checkpoint", type=Path, required=True)
    ev.add_argument("--dataset", type=Path, required=True)
    ev.add_argument("--model", choices=["mlp", "small_cnn"], required=True)
    ev.add_argument("--config", type=Path, help="experiment config supplying preprocessing and train statistics")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return EXIT_OK if exit_.code == 0 else EXIT_CONFIG

    try:
        settings.configure_logging()
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "gen-synth":
            return cmd_gen_synth(args)
        return cmd_eval(args.checkpoint, args.dataset, args.model, args.config)
    except USAGE_ERRORS as e:
        logger.error("❌ %s", e)
        return EXIT_CONFIG
    except RUNTIME_ERRORS as e:
        logger.error("❌ %s", e)
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        logger.error("👋 interrupted")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
