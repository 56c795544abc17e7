"""
Command-line interface

Usage:
    denseval convert|evaluate|sweep|stats|errors|synth [--config run.toml] [--key value ...]

Every RunConfig key can be overridden as `--key value` (hyphens or
underscores); a bare boolean flag such as `--nms` means true.

Exit codes: 0 success, 1 warnings with warnings_as_errors, 2 input error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from ..application.conversion_service import ConversionService
from ..application.diagnostics import Diagnostics
from ..application.evaluation_service import EvaluationService
from ..application.synthesis_service import SynthesisService
from ..config import RunConfig
from ..domain.errors import ConfigError, DensevalError
from ..domain.metrics import SweepAxis
from ..infrastructure.report_writer import (
    write_breakdown_csv,
    write_bundle,
    write_error_details,
    write_metrics_csv,
    write_stats_csv,
    write_sweep_csv,
)
from ..infrastructure.svg_plot import write_sweep_svg

logger = logging.getLogger(__name__)

COMMANDS = {
    "convert": "Convert label maps to YOLO polygon label files",
    "evaluate": "Match predictions to ground truth and report metrics",
    "sweep": "Sweep the IoU or confidence threshold",
    "stats": "Per-split dataset statistics",
    "errors": "Categorize false positives and false negatives",
    "synth": "Generate a synthetic dataset with a known predictor",
}
_AXES = {"iou": SweepAxis.IOU, "confidence": SweepAxis.CONFIDENCE}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="denseval", description="Dense instance segmentation evaluation", allow_abbrev=False
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        cmd = sub.add_parser(name, help=help_text, description=help_text, allow_abbrev=False)
        cmd.add_argument("--config", help="TOML file of RunConfig keys", default=None)
    return parser


def parse_overrides(tokens: Sequence[str]) -> Dict[str, str]:
    """Turn `--key value`, `--key=value` and bare `--flag` tokens into a mapping."""
    overrides: Dict[str, str] = {}
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--") or len(token) == 2:
            raise ConfigError(f"unexpected argument {token!r}")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        elif i + 1 < len(tokens) and not tokens[i + 1].startswith("--"):
            value = tokens[i + 1]
            i += 2
        else:
            value = "true"
            i += 1
        overrides[key.replace("-", "_")] = value
    return overrides


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s - %(levelname)s - %(message)s",
    )


def _run(command: str, config: RunConfig, diagnostics: Diagnostics) -> None:
    out = Path(config.output_dir)
    if command == "convert":
        ConversionService(config, diagnostics).run()
        return
    if command == "synth":
        SynthesisService(config, diagnostics).run()
        return

    service = EvaluationService(config, diagnostics)
    if command == "evaluate":
        bundle = service.evaluate()
        write_metrics_csv(out / "metrics.csv", bundle.metrics, bundle.rates)
        write_bundle(out / "report.json", bundle)
    elif command == "sweep":
        axis = _AXES[config.axis]
        bundle = service.sweep(axis)
        curve = bundle.curves[0]
        stem = f"sweep_{config.axis}"
        write_sweep_csv(out / f"{stem}.csv", curve)
        marker = config.tau if axis is SweepAxis.IOU else bundle.selection.value
        write_sweep_svg(curve, out / f"{stem}.svg", operating_point=marker)
        write_bundle(out / f"{stem}.json", bundle)
    elif command == "errors":
        bundle = service.errors()
        write_breakdown_csv(out / "errors.csv", bundle.breakdown)
        write_error_details(out / "errors_detail.json", bundle.breakdown)
        write_bundle(out / "errors_report.json", bundle)
    elif command == "stats":
        bundle = service.stats()
        write_stats_csv(out / "stats.csv", bundle.stats)
        write_bundle(out / "stats_report.json", bundle)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    try:
        overrides = parse_overrides(rest)
        config = RunConfig.from_sources(args.config, overrides)
    except DensevalError as exc:
        print(f"denseval: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"denseval: error: {exc}", file=sys.stderr)
        return 2

    configure_logging(config.log_level)
    diagnostics = Diagnostics()
    try:
        _run(args.command, config, diagnostics)
    except DensevalError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"denseval: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"denseval: error: {exc}", file=sys.stderr)
        return 2

    if config.warnings_as_errors and len(diagnostics):
        print(f"denseval: {len(diagnostics)} warnings treated as errors", file=sys.stderr)
        return 1
    return 0
