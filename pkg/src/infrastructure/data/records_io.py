"""CSV and JSON records exchanged by the command line.

Outputs are byte-deterministic: fixed column order, shortest round-trip
floats, `\\n` line endings and JSON with sorted keys.
"""
import hashlib
import json
import math
from pathlib import Path
from typing import IO, Any, Iterable, List, Union

import pandas as pd

from domain.entities import Assignment, CandidateTable, DesignEvaluation, GeoPair, PairExperimentData, PairSet
from domain.exceptions import RecordParseError
from domain.value_objects import ArmLabel, MethodComparisonRow

PAIRS_COLUMNS = ["pair_id", "geo_a", "geo_b", "distance"]
ASSIGNMENT_COLUMNS = ["pair_id", "geo", "arm"]
EVALUATION_COLUMNS = ["n", "rmse", "theta0", "budget_to_baseline", "failures", "seed"]
EXPERIMENT_COLUMNS = ["pair_id", "x", "y"]
COMPARISON_COLUMNS = ["n", "rmse_optimal", "rmse_rank", "ratio"]

PathOrBuffer = Union[str, Path, IO[str]]


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(columns: List[str], rows: Iterable[List[Any]], sink: PathOrBuffer) -> None:
    frame = pd.DataFrame([[_fmt(v) for v in row] for row in rows], columns=columns)
    frame.to_csv(sink, index=False, lineterminator="\n")


def _read_rows(source: PathOrBuffer, columns: List[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise RecordParseError("input is empty", row=1) from None
    except pd.errors.ParserError as e:
        raise RecordParseError(f"malformed CSV: {e}") from e
    header = [c.strip() for c in frame.columns]
    if header != columns:
        raise RecordParseError(f"header must be {','.join(columns)}; got {','.join(header)}", row=1)
    frame.columns = header
    return frame


def _number(cell: Any, column: str, row: int, kind=float):
    text = cell.strip() if isinstance(cell, str) else ""
    try:
        value = kind(text)
    except ValueError:
        raise RecordParseError(f"cannot parse {column} value {text!r}", row=row) from None
    if kind is float and not math.isfinite(value):
        raise RecordParseError(f"{column} value {text!r} is not finite", row=row)
    return value


def write_pairs_csv(pairs: PairSet, sink: PathOrBuffer) -> None:
    _write_rows(PAIRS_COLUMNS, ([p.pair_id, p.geo_a, p.geo_b, p.distance] for p in pairs.pairs), sink)


def read_pairs_csv(source: PathOrBuffer, excluded_geos: Iterable[str] = ()) -> PairSet:
    frame = _read_rows(source, PAIRS_COLUMNS)
    pairs = []
    for i, record in enumerate(frame.itertuples(index=False)):
        row = i + 2
        try:
            pairs.append(
                GeoPair(
                    pair_id=_number(record.pair_id, "pair_id", row, int),
                    geo_a=record.geo_a.strip(),
                    geo_b=record.geo_b.strip(),
                    distance=_number(record.distance, "distance", row),
                )
            )
        except ValueError as e:
            raise RecordParseError(str(e), row=row) from None
    try:
        return PairSet(pairs=pairs, excluded_geos=sorted(excluded_geos))
    except ValueError as e:
        raise RecordParseError(f"invalid pair set: {e}") from None


def write_assignment_csv(pairs: PairSet, assignment: Assignment, sink: PathOrBuffer) -> None:
    rows = []
    for pair, (treated, control) in zip(pairs.pairs, assignment.treated_and_control(pairs)):
        for geo in (pair.geo_a, pair.geo_b):
            arm = ArmLabel.TREATMENT if geo == treated else ArmLabel.CONTROL
            rows.append([pair.pair_id, geo, arm.value])
    _write_rows(ASSIGNMENT_COLUMNS, rows, sink)


def evaluation_row(row: DesignEvaluation) -> List[Any]:
    return [row.n, row.rmse, row.theta0, row.budget_to_baseline, row.failures, row.seed]


def write_candidates_csv(table: CandidateTable, sink: PathOrBuffer) -> None:
    _write_rows(EVALUATION_COLUMNS, (evaluation_row(r) for r in table.rows), sink)


def write_comparison_csv(rows: Iterable[MethodComparisonRow], sink: PathOrBuffer) -> None:
    _write_rows(COMPARISON_COLUMNS, ([r.n, r.rmse_optimal, r.rmse_rank, r.ratio] for r in rows), sink)


def write_tidy_csv(frame: pd.DataFrame, sink: PathOrBuffer) -> None:
    _write_rows(list(frame.columns), frame.itertuples(index=False, name=None), sink)


def load_experiment_csv(source: PathOrBuffer) -> PairExperimentData:
    """Post-analysis input `pair_id,x,y`; errors name the offending row"""
    frame = _read_rows(source, EXPERIMENT_COLUMNS)
    if frame.empty:
        raise RecordParseError("no data rows", row=2)
    ids, xs, ys = [], [], []
    for i, record in enumerate(frame.itertuples(index=False)):
        row = i + 2
        pair_id = _number(record.pair_id, "pair_id", row, int)
        if pair_id in ids:
            raise RecordParseError(f"duplicate pair_id {pair_id}", row=row)
        ids.append(pair_id)
        xs.append(_number(record.x, "x", row))
        ys.append(_number(record.y, "y", row))
    return PairExperimentData(x=xs, y=ys, pair_ids=tuple(ids))


def jsonable(value: Any) -> Any:
    """Replace non-finite floats with None so the JSON stays standard"""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    return value


def stable_dumps(payload: Any) -> str:
    return json.dumps(jsonable(payload), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(payload: Any, path: Union[str, Path]) -> None:
    Path(path).write_text(stable_dumps(payload), encoding="utf-8")


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_payload(payload: Any) -> str:
    return hashlib.sha256(stable_dumps(payload).encode("utf-8")).hexdigest()
