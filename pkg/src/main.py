import argparse
import json
import logging
import sys
from typing import List, Optional

from config.settings import settings
from application.use_cases.rmse_curve_uc import DEFAULT_SERIES, OPTIONAL_SERIES
from domain.value_objects import PairingMethod
from interface.cli import COMMANDS, EXIT_ERROR, error_report

logger = logging.getLogger(__name__)


def _common(parser: argparse.ArgumentParser, panel: bool = True) -> None:
    parser.add_argument("--config", help="JSON run config with `design` and/or `synthetic` sections")
    parser.add_argument("--seed", type=int, help="Overrides the config seed")
    parser.add_argument("--out", required=True, help="Output directory")
    parser.add_argument("--workers", type=int, default=settings.DEFAULT_WORKERS, help="Parallel workers; never changes outputs")
    if panel:
        parser.add_argument("--panel", required=True, help="Pretest CSV `date,geo,response[,spend]`")


def _design_flags(parser: argparse.ArgumentParser, grid: bool = True) -> None:
    parser.add_argument("--budget", type=float, help="Experiment budget B")
    parser.add_argument("--replicates", type=int, help="Monte Carlo replicates K")
    parser.add_argument("--method", choices=[m.value for m in PairingMethod], help="Pairing method")
    if grid:
        parser.add_argument("--n", type=int, nargs="+", help="Candidate pair counts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tmd", description=f"{settings.APP_NAME} {settings.TOOL_VERSION}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Generate a synthetic pretest panel")
    _common(simulate, panel=False)

    pair = sub.add_parser("pair", help="Pair geos for one pair count")
    _common(pair)
    pair.add_argument("--method", choices=[m.value for m in PairingMethod], help="Pairing method")
    pair.add_argument("--n", dest="pair_count", type=int, required=True, help="Number of pairs")

    evaluate = sub.add_parser("evaluate", help="RMSE and minimum detectable iROAS of a pairs CSV")
    _common(evaluate)
    _design_flags(evaluate, grid=False)
    evaluate.add_argument("--pairs", required=True, help="Pairs CSV `pair_id,geo_a,geo_b,distance`")

    design = sub.add_parser("design", help="Full design: candidates, selection and assignment")
    _common(design)
    _design_flags(design)

    estimate = sub.add_parser("estimate", help="Trimmed Match estimate from experiment results")
    _common(estimate, panel=False)
    estimate.add_argument("--experiment", required=True, help="CSV `pair_id,x,y`")
    estimate.add_argument(
        "--max-trim-rate", type=float, help=f"Largest trimmed share (default {settings.POST_ANALYSIS_MAX_TRIM_RATE})"
    )
    estimate.add_argument("--trim-count", type=int, help="Fixed trim count instead of data-driven selection")

    compare = sub.add_parser("compare", help="RMSE of rank pairing over optimal pairing per n")
    _common(compare)
    _design_flags(compare)

    curve = sub.add_parser("curve", help="Mean RMSE per n over synthetic panels, tidy CSV")
    _common(curve, panel=False)
    _design_flags(curve)
    curve.add_argument("--n-seeds", type=int, default=1, help="Number of consecutive seeds from --seed")
    curve.add_argument(
        "--series", nargs="+", default=list(DEFAULT_SERIES), choices=list(DEFAULT_SERIES + OPTIONAL_SERIES)
    )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    try:
        return COMMANDS[args.command](args)
    except Exception as e:
        report = error_report(e)
        logger.debug("Command failed", exc_info=True)
        sys.stderr.write(json.dumps(report.model_dump(), sort_keys=True) + "\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
