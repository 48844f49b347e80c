"""crsom - CLI entry point.

Subcommands: train, eval, crossval, compare-som, export-map. Every command
reads a run config JSON file; flags override its values. Exit codes: 0 on
success, 1 on runtime failures, 2 on usage, config or data errors.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

from opentelemetry.trace import SpanKind

from src.cli.prompts import (
    print_artifacts,
    print_crossval_summary,
    print_error,
    print_error_rate,
    print_final_message,
    print_map_stats,
    print_run_start,
    print_trial_curve,
)
from src.core.config import (
    RunConfig,
    get_data_dir,
    get_log_level,
    load_environment,
    load_run_config,
    parse_grid,
)
from src.core.orchestrator import (
    run_compare_som,
    run_crossval,
    run_eval,
    run_export_map,
    run_train,
)
from src.shared.errors import ConfigurationError, CrsomError, DatasetError, ModelFormatError
from src.shared.logging import setup_logging
from src.shared.metrics import configure_metrics, increment_errors
from src.shared.tracing import configure_tracing, get_tracer

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

SERVICE_NAME = "crsom-cli"


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="Run config JSON file")
    parser.add_argument("--seed", type=int, help="Override network.rng_seed")
    parser.add_argument("--out-dir", help="Override the output directory")
    parser.add_argument("--epochs", type=int, help="Override network.t_end")
    parser.add_argument("--grid", help="Override hidden grids, e.g. 10x10 or 10x10,5x5")
    parser.add_argument(
        "--no-normalize", action="store_true", help="Skip min-max normalization"
    )
    parser.add_argument("--log-file", help="Also write logs to this file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crsom", description="Context-relevant topographic map classifier"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    train_p = subparsers.add_parser("train", help="Train a network and write its artifacts")
    _add_common(train_p)
    train_p.add_argument(
        "--trials", type=int, help="Also average the learning curve over this many seeds"
    )
    train_p.add_argument("--workers", type=int, help="Trials trained in parallel")

    eval_p = subparsers.add_parser("eval", help="Error rate of a saved model")
    _add_common(eval_p)
    eval_p.add_argument("--model", help="Model file (default: <out-dir>/model.json)")

    cv_p = subparsers.add_parser("crossval", help="Stratified k-fold cross-validation")
    _add_common(cv_p)
    cv_p.add_argument("--k", type=int, help="Number of folds (>= 2)")
    cv_p.add_argument("--workers", type=int, help="Folds trained in parallel")

    som_p = subparsers.add_parser(
        "compare-som", help="rRBF against a plain SOM with a frozen-map readout"
    )
    _add_common(som_p)

    map_p = subparsers.add_parser("export-map", help="Map JSON/SVG of a saved model")
    _add_common(map_p)
    map_p.add_argument("--model", help="Model file (default: <out-dir>/model.json)")
    map_p.add_argument("--layer", type=int, help="Hidden layer, 1-based (default: all)")
    return parser


def load_run(args: argparse.Namespace) -> RunConfig:
    """Run config from ``--config`` with flag overrides applied."""
    run = load_run_config(args.config, get_data_dir())
    run = run.with_overrides(
        seed=args.seed,
        epochs=args.epochs,
        grids=parse_grid(args.grid) if args.grid else None,
        normalize=False if args.no_normalize else None,
        k=getattr(args, "k", None),
        out_dir=args.out_dir,
        trials=getattr(args, "trials", None),
    )
    workers = getattr(args, "workers", None)
    if workers is not None:
        if workers < 1:
            raise ConfigurationError(f"--workers must be >= 1, got {workers}")
        run.workers = workers
    return run


def _model_path(args: argparse.Namespace, run: RunConfig) -> Path:
    return Path(args.model) if args.model else run.resolved_output_dir / "model.json"


def cmd_train(args: argparse.Namespace, run: RunConfig) -> int:
    outcome = run_train(run)
    print_artifacts(outcome.artifacts)
    print_error_rate("Training error", outcome.train_error)
    if outcome.trial_curve:
        print_trial_curve(outcome.trial_curve)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, run: RunConfig) -> int:
    print_error_rate("Error rate", run_eval(run, _model_path(args, run)))
    return EXIT_OK


def cmd_crossval(args: argparse.Namespace, run: RunConfig) -> int:
    print_crossval_summary(run_crossval(run))
    return EXIT_OK


def cmd_compare_som(args: argparse.Namespace, run: RunConfig) -> int:
    outcome = run_compare_som(run)
    print_artifacts(outcome.artifacts)
    print_error_rate("rRBF training error", outcome.rrbf_error)
    print_error_rate("SOM readout training error", outcome.som_error)
    print_map_stats("CRSOM map", outcome.rrbf_stats)
    print_map_stats("SOM map", outcome.som_stats)
    return EXIT_OK


def cmd_export_map(args: argparse.Namespace, run: RunConfig) -> int:
    print_artifacts(run_export_map(run, _model_path(args, run), args.layer))
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunConfig], int]] = {
    "train": cmd_train,
    "eval": cmd_eval,
    "crossval": cmd_crossval,
    "compare-som": cmd_compare_som,
    "export-map": cmd_export_map,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for CLI."""
    load_environment()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    setup_logging(
        name="crsom", level=get_log_level(), log_file=args.log_file, service_name=SERVICE_NAME
    )
    configure_tracing(service_name=SERVICE_NAME)
    configure_metrics()

    tracer = get_tracer(instrumenting_module_name="crsom.cli")
    run_name: Optional[str] = None
    try:
        # One span per command so every log line of the run correlates.
        with tracer.start_as_current_span(
            name=f"command.{args.command}",
            kind=SpanKind.INTERNAL,
            attributes={"command": args.command, "config": args.config},
        ):
            run = load_run(args)
            run_name = run.name
            print_run_start(args.command, run.name)
            code = COMMANDS[args.command](args, run)
        print_final_message()
        return code
    except (ConfigurationError, DatasetError, ModelFormatError) as e:
        logger.error(f"{args.command} failed: {e}")
        print_error(str(e))
        increment_errors(type(e).__name__, run_name)
        return EXIT_USAGE
    except CrsomError as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print_error(str(e))
        increment_errors(type(e).__name__, run_name)
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"{args.command} failed unexpectedly: {e}", exc_info=True)
        print_error(str(e))
        increment_errors("unexpected_error", run_name)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
