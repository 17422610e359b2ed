from datetime import date, timedelta
from typing import Dict, Iterable, List, Optional

import numpy as np

from domain.entities import BlockTotals, DateRange, GeoPanel, PeriodSplit
from domain.exceptions import BlockLengthError, InsufficientDataError
import logging

logger = logging.getLogger(__name__)


def split_periods(
    panel: GeoPanel,
    eval_days: int,
    block_length_days: int,
    evaluation_start: Optional[date] = None,
) -> PeriodSplit:
    """Split the pretest range into an evaluation window and a pairing period.

    By default the evaluation window is the earliest `eval_days` days. With
    `evaluation_start` it starts on that date instead. The pairing period is
    every date after the evaluation window, truncated at its oldest end to a
    whole number of blocks.
    """
    if eval_days < 1 or block_length_days < 1:
        raise InsufficientDataError("eval_days and block_length_days must be positive")
    if panel.n_days < eval_days + block_length_days:
        raise InsufficientDataError(
            f"Panel spans {panel.n_days} days; need at least {eval_days + block_length_days}"
        )

    first, last = panel.dates[0], panel.dates[-1]
    eval_start = evaluation_start or first
    eval_end = eval_start + timedelta(days=eval_days - 1)
    if eval_start < first or eval_end > last:
        raise InsufficientDataError(f"Evaluation window {eval_start}..{eval_end} lies outside the panel")

    remaining = (last - eval_end).days
    pairing_days = remaining - remaining % block_length_days
    if pairing_days < block_length_days:
        raise InsufficientDataError(
            f"Only {remaining} days follow the evaluation window; need a full block of {block_length_days}"
        )
    dropped = remaining - pairing_days
    if dropped:
        logger.info(f"Dropping {dropped} oldest pairing days to keep whole blocks")

    return PeriodSplit(
        pairing_period=DateRange(start=last - timedelta(days=pairing_days - 1), end=last),
        evaluation_period=DateRange(start=eval_start, end=eval_end),
        block_length_days=block_length_days,
    )


def in_sample_window(split: PeriodSplit, eval_days: int) -> DateRange:
    """Most recent `eval_days` of the pairing period (overfitting comparison only)"""
    pairing = split.pairing_period
    if eval_days > pairing.days:
        raise InsufficientDataError(f"Pairing period has {pairing.days} days; cannot hold {eval_days}")
    return DateRange(start=pairing.end - timedelta(days=eval_days - 1), end=pairing.end)


def block_matrix(panel: GeoPanel, period: DateRange, block_length_days: int) -> np.ndarray:
    """(n_geos, n_blocks) array of block-summed response, blocks anchored at period start"""
    if block_length_days < 1 or period.days % block_length_days:
        raise BlockLengthError(
            f"Period of {period.days} days is not a multiple of block length {block_length_days}"
        )
    values = panel.response[:, panel.columns(period)]
    n_blocks = period.days // block_length_days
    return values.reshape(panel.n_geos, n_blocks, block_length_days).sum(axis=2)


def block_totals(panel: GeoPanel, period: DateRange, block_length_days: int) -> List[BlockTotals]:
    totals = block_matrix(panel, period, block_length_days)
    return [BlockTotals(geo=geo, totals=totals[i].tolist()) for i, geo in enumerate(panel.geos)]


def period_totals(panel: GeoPanel, geos: Iterable[str], period: DateRange) -> Dict[str, float]:
    cols = panel.columns(period)
    return {geo: float(panel.response[panel.geo_index(geo), cols].sum()) for geo in geos}


def spend_totals(panel: GeoPanel, geos: Iterable[str], period: DateRange) -> Dict[str, float]:
    cols = panel.columns(period)
    return {geo: float(panel.spend[panel.geo_index(geo), cols].sum()) for geo in geos}


def zero_response_geos(panel: GeoPanel, period: DateRange) -> List[str]:
    totals = panel.response[:, panel.columns(period)].sum(axis=1)
    return [geo for geo, total in zip(panel.geos, totals) if total == 0]


def subset_panel(panel: GeoPanel, period: DateRange) -> GeoPanel:
    """Panel restricted to the dates of `period`"""
    cols = panel.columns(period)
    return GeoPanel(
        geos=panel.geos,
        dates=panel.dates[cols],
        response=panel.response[:, cols],
        spend=None if panel.spend is None else panel.spend[:, cols],
    )
