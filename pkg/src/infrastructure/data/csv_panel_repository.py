import math
from datetime import date
from pathlib import Path
from typing import IO, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from domain.entities import GeoPanel
from domain.exceptions import ContiguityError, DuplicateRowError, NegativeValueError, PanelParseError
from domain.interfaces import PanelRepository
import logging

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ["date", "geo", "response"]
OPTIONAL_COLUMNS = ["spend"]

# header is row 1, so data index i sits on row i + 2
_ROW_OFFSET = 2


def _cell(value) -> str:
    return value.strip() if isinstance(value, str) else ""


def _parse_value(cell: str, column: str, row: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise PanelParseError(f"cannot parse {column} value {cell!r}", row=row) from None
    if not math.isfinite(value):
        raise PanelParseError(f"{column} value {cell!r} is not finite", row=row)
    if value < 0:
        raise NegativeValueError(f"{column} value {cell} is negative", row=row)
    return value


def _parse_date(cell: str, row: int) -> date:
    try:
        return date.fromisoformat(cell)
    except ValueError:
        raise PanelParseError(f"cannot parse date {cell!r}; expected YYYY-MM-DD", row=row) from None


def load_panel(source: Union[str, Path, IO[str]]) -> GeoPanel:
    """Read a `date,geo,response[,spend]` CSV into a validated GeoPanel.

    Geos are sorted by id and dates ascending. Every geo must cover every
    date between the earliest and latest date in the file.
    """
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise PanelParseError("input is empty", row=1) from None
    except pd.errors.ParserError as e:
        raise PanelParseError(f"malformed CSV: {e}") from e

    columns = [c.strip() for c in frame.columns]
    missing = [c for c in REQUIRED_COLUMNS if c not in columns]
    unknown = [c for c in columns if c not in REQUIRED_COLUMNS + OPTIONAL_COLUMNS]
    if missing or unknown:
        raise PanelParseError(f"header must be date,geo,response[,spend]; got {','.join(columns)}", row=1)
    frame.columns = columns
    if frame.empty:
        raise PanelParseError("no data rows", row=2)
    has_spend = "spend" in columns

    rows = []
    for i, record in enumerate(frame.itertuples(index=False)):
        row = i + _ROW_OFFSET
        geo = _cell(record.geo)
        if not geo:
            raise PanelParseError("geo id is empty", row=row)
        rows.append(
            (
                geo,
                _parse_date(_cell(record.date), row),
                _parse_value(_cell(record.response), "response", row),
                _parse_value(_cell(record.spend), "spend", row) if has_spend else None,
                row,
            )
        )

    seen: Dict[tuple, int] = {}
    for geo, day, _, _, row in rows:
        if (geo, day) in seen:
            raise DuplicateRowError(f"duplicate ({geo}, {day}) first seen on row {seen[(geo, day)]}", row=row)
        seen[(geo, day)] = row

    first = min(r[1] for r in rows)
    last = max(r[1] for r in rows)
    all_dates = pd.date_range(first, last, freq="D").date
    n_days = len(all_dates)
    by_geo: Dict[str, List[tuple]] = {}
    for record in rows:
        by_geo.setdefault(record[0], []).append(record)
    for geo, records in by_geo.items():
        if len(records) != n_days:
            _raise_contiguity(geo, sorted(records, key=lambda r: r[1]), list(all_dates))

    geos = sorted(by_geo)
    index = {g: i for i, g in enumerate(geos)}
    response = np.empty((len(geos), n_days))
    spend = np.empty((len(geos), n_days)) if has_spend else None
    for geo, day, value, spent, _ in rows:
        col = (day - first).days
        response[index[geo], col] = value
        if spend is not None:
            spend[index[geo], col] = spent

    logger.info(f"Loaded panel with {len(geos)} geos x {n_days} days (spend: {has_spend})")
    return GeoPanel(geos=tuple(geos), dates=tuple(all_dates), response=response, spend=spend)


def _raise_contiguity(geo: str, records: List[tuple], all_dates: List[date]) -> None:
    present = {r[1] for r in records}
    gap = next(d for d in all_dates if d not in present)
    after = next((r for r in records if r[1] > gap), None)
    row: Optional[int] = after[4] if after else records[-1][4]
    raise ContiguityError(f"geo {geo} is missing {gap}", row=row, geo=geo)


def write_panel(panel: GeoPanel, sink: Union[str, Path, IO[str]]) -> None:
    """Write the pretest CSV; values use shortest round-trip float text"""
    records = {
        "date": [d.isoformat() for _ in panel.geos for d in panel.dates],
        "geo": [g for g in panel.geos for _ in panel.dates],
        "response": [repr(float(v)) for v in panel.response.reshape(-1)],
    }
    if panel.has_spend:
        records["spend"] = [repr(float(v)) for v in panel.spend.reshape(-1)]
    pd.DataFrame(records).to_csv(sink, index=False, lineterminator="\n")


class CsvPanelRepository(PanelRepository):
    def load(self, source: Union[str, Path, IO[str]]) -> GeoPanel:
        return load_panel(source)

    def save(self, panel: GeoPanel, sink: Union[str, Path, IO[str]]) -> None:
        write_panel(panel, sink)
