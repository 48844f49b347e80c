"""CLI output and formatting utilities."""

from pathlib import Path
from typing import Iterable, Sequence

from src.core.models import CrossValidationSummary, MapStats, TrialCurvePoint


def print_header(title: str) -> None:
    """Print a formatted section header."""
    print(f"\n{'=' * 60}")
    print(f"=== {title}")
    print(f"{'=' * 60}\n")


def print_error(error: str) -> None:
    """Print error message."""
    print(f"Error: {error}\n", flush=True)


def print_run_start(command: str, run_name: str) -> None:
    print_header(f"{command}: {run_name}")


def print_artifacts(paths: Iterable[Path]) -> None:
    """List written files, one per line."""
    for path in paths:
        print(f"  wrote {path}")


def print_error_rate(label: str, rate: float) -> None:
    print(f"{label}: {rate:.4f} ({rate * 100:.2f}%)")


def print_map_stats(label: str, stats: MapStats) -> None:
    print(
        f"{label}: {stats.num_winner_nodes} winner nodes, "
        f"purity {stats.class_purity:.4f}, margin {stats.min_interclass_margin:.3f}"
    )


def print_crossval_summary(summary: CrossValidationSummary) -> None:
    """Per-fold table followed by mean +/- std."""
    print(f"{'fold':>6} {'train_error':>12} {'test_error':>12}")
    for fold in summary.folds:
        print(f"{fold.fold_index:>6} {fold.train_error_rate:>12.4f} {fold.test_error_rate:>12.4f}")
    print()
    print(
        f"train error {summary.mean_train_error:.4f} +/- {summary.std_train_error:.4f}, "
        f"test error {summary.mean_test_error:.4f} +/- {summary.std_test_error:.4f}"
    )


def print_trial_curve(points: Sequence[TrialCurvePoint]) -> None:
    last = points[-1]
    print(
        f"Final epoch over {last.trials} trials: "
        f"mean error {last.mean_error:.6f} +/- {last.std_error:.6f}"
    )


def print_final_message() -> None:
    """Print final success message."""
    print("=" * 60)
    print("Run completed successfully!")
    print("=" * 60)
