"""``calibreg`` command line: gen-data, train, sweep, calibrate, report.

Exit codes: 0 success, 2 validation failure, 3 divergence, 4 collapsed run, 5 I/O or schema error.
"""

import argparse
from pathlib import Path
import sys

from loguru import logger
from pydantic import BaseModel, ValidationError

from calibreg.commands import calibrate_model, gen_data, report_logs, sweep_experiment, train_experiment
from calibreg.errors import CalibregError, SchemaMismatchError, TrainingDivergedError
from calibreg.models.config import ExperimentConfig, MetricOptions
from calibreg.models.dataset import DatasetDescriptor, OodSpec
from calibreg.settings import settings
from calibreg.storage import load_experiment, load_network, load_sweep, read_dataset


EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGED = 3
EXIT_COLLAPSED = 4
EXIT_IO = 5


def configure_logging(verbose: bool = False) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else settings.LOG_LEVEL)


def resolve_out(args: argparse.Namespace, fallback: str | None = None) -> Path:
    return Path(settings.OUT or args.out or fallback or settings.DEFAULT_OUT_DIR)


def metric_overrides(args: argparse.Namespace) -> dict:
    overrides = {"bins": args.bins, "nbaucc_tau": args.nbaucc_tau, "nbaucc_steps": args.nbaucc_steps}
    return {key: value for key, value in overrides.items() if value is not None}


def override(model: BaseModel, updates: dict) -> BaseModel:
    """Revalidated copy of ``model`` with nested ``updates`` merged in."""
    tree = model.model_dump()
    for section, values in updates.items():
        if isinstance(values, dict):
            tree[section] = {**tree[section], **values}
        else:
            tree[section] = values
    return type(model).model_validate(tree)


def experiment_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    updates: dict = {"metrics": metric_overrides(args)}
    if args.seed is not None:
        updates["train"] = {"seed": args.seed}
    return override(config, updates)


def cmd_gen_data(args: argparse.Namespace) -> int:
    descriptor = DatasetDescriptor(
        kind=args.kind,
        n_classes=args.k if args.k is not None else (2 if args.kind == "two_moons" else 10),
        n_samples=args.n,
        n_features=args.d,
        spread=args.spread,
        radius=args.radius,
        noise=args.noise,
        seed=args.seed if args.seed is not None else 0,
    )
    ood = None
    if args.ood is not None:
        ood = OodSpec(mode=args.ood, n_samples=args.ood_n, shift=args.ood_shift, seed=args.ood_seed)
    gen_data(descriptor, resolve_out(args), ood=ood, stem=args.name)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = experiment_overrides(load_experiment(args.config), args)
    report = train_experiment(config, resolve_out(args, config.output_dir), jobs=args.jobs)

    if any(run.status == "diverged" for run in report.runs):
        return EXIT_DIVERGED
    if report.trivial_solution:
        return EXIT_COLLAPSED
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    sweep = load_sweep(args.config)
    sweep = sweep.model_copy(update={"base": experiment_overrides(sweep.base, args)})
    sweep_experiment(sweep, resolve_out(args, sweep.base.output_dir), jobs=args.jobs)
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    options = MetricOptions(**metric_overrides(args))
    holdout = read_dataset(args.holdout) if args.holdout else None
    mode = "holdout" if holdout is not None else "split-half"
    calibrate_model(
        load_network(args.model),
        read_dataset(args.data),
        options,
        resolve_out(args),
        mode=mode,
        holdout=holdout,
        seed=args.seed if args.seed is not None else 0,
    )
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    overrides = metric_overrides(args)
    if args.entropy_bins is not None:
        overrides["entropy_bins"] = args.entropy_bins
    report_logs(args.logs, MetricOptions(**overrides), resolve_out(args))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Root seed override")
    common.add_argument("--jobs", type=int, default=1, help="Parallel worker processes")
    common.add_argument("--out", default=None, help="Output directory (env CALIBREG_OUT takes precedence)")
    common.add_argument("--bins", type=int, default=None, help="Confidence bins for ECE/ECD")
    common.add_argument("--nbaucc-tau", type=float, default=None, help="NBAUCC upper threshold")
    common.add_argument("--nbaucc-steps", type=int, default=None, help="NBAUCC threshold count")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    parser = argparse.ArgumentParser(prog="calibreg", description="Explicit regularization and calibration toolkit")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("gen-data", parents=[common], help="Write a synthetic dataset CSV")
    p.add_argument("kind", choices=["blobs", "two_moons"])
    p.add_argument("--k", type=int, default=None, help="Number of classes")
    p.add_argument("--n", type=int, default=10000, help="Number of samples")
    p.add_argument("--d", type=int, default=2, help="Input dimension")
    p.add_argument("--spread", type=float, default=0.21, help="Blob standard deviation")
    p.add_argument("--radius", type=float, default=1.0, help="Radius of the blob means")
    p.add_argument("--noise", type=float, default=0.1, help="two_moons jitter")
    p.add_argument("--ood", choices=["shifted_mean", "uniform_box", "ring"], default=None, help="Also write OOD inputs")
    p.add_argument("--ood-n", type=int, default=1000)
    p.add_argument("--ood-shift", type=float, default=6.0)
    p.add_argument("--ood-seed", type=int, default=1)
    p.add_argument("--name", default=None, help="File stem")
    p.set_defaults(handler=cmd_gen_data)

    p = commands.add_parser("train", parents=[common], help="Run an experiment config")
    p.add_argument("--config", required=True, help="ExperimentConfig JSON")
    p.set_defaults(handler=cmd_train)

    p = commands.add_parser("sweep", parents=[common], help="Run a one- or two-parameter grid")
    p.add_argument("--config", required=True, help="SweepConfig JSON")
    p.set_defaults(handler=cmd_sweep)

    p = commands.add_parser("calibrate", parents=[common], help="Temperature-scale a saved model")
    p.add_argument("--model", required=True, help="Network JSON file")
    p.add_argument("--data", required=True, help="Evaluation dataset CSV")
    p.add_argument("--holdout", default=None, help="Dataset CSV to fit tau on; omitted means split-half mode")
    p.set_defaults(handler=cmd_calibrate)

    p = commands.add_parser("report", parents=[common], help="Reliability and entropy tables from prediction logs")
    p.add_argument("logs", nargs="+", help="PredictionLog CSV or JSON files")
    p.add_argument("--entropy-bins", type=int, default=None)
    p.set_defaults(handler=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    try:
        return args.handler(args)
    except ValidationError as e:
        logger.error(f"{args.command}: invalid configuration\n{e}")
        return EXIT_VALIDATION
    except SchemaMismatchError as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_IO
    except TrainingDivergedError as e:
        logger.opt(exception=e).error(f"{args.command}: {e}")
        return EXIT_DIVERGED
    except CalibregError as e:
        logger.opt(exception=e).error(f"{args.command}: {e}")
        return EXIT_VALIDATION
    except (OSError, ValueError, KeyError) as e:
        logger.error(f"{args.command}: cannot read or write artifacts: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
