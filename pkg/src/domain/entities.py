import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from domain.exceptions import NonFiniteDistanceError, UnknownGeoError
from domain.value_objects import EvaluationMode, PairingMethod, SpendProxySource


def _readonly(values: Any) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


class DateRange(BaseModel):
    """Inclusive range of calendar days"""

    model_config = ConfigDict(frozen=True)

    start: date
    end: date

    @model_validator(mode="after")
    def validate_order(self) -> "DateRange":
        if self.end < self.start:
            raise ValueError(f"Range end {self.end} precedes start {self.start}")
        return self

    @property
    def days(self) -> int:
        return (self.end - self.start).days + 1

    def contains(self, day: date) -> bool:
        return self.start <= day <= self.end

    def overlaps(self, other: "DateRange") -> bool:
        return self.start <= other.end and other.start <= self.end

    def dates(self) -> List[date]:
        return [self.start + timedelta(days=i) for i in range(self.days)]


@dataclass(frozen=True, eq=False)
class GeoPanel:
    """Per-geo daily response (and optional spend) over a contiguous date range.

    `response` and `spend` are read-only arrays of shape (n_geos, n_days),
    rows in `geos` order and columns in `dates` order.
    """

    geos: Tuple[str, ...]
    dates: Tuple[date, ...]
    response: np.ndarray
    spend: Optional[np.ndarray] = None
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        geos = tuple(self.geos)
        dates = tuple(self.dates)
        if len(set(geos)) != len(geos):
            raise ValueError("Geo ids must be unique")
        if not dates:
            raise ValueError("Panel must contain at least one date")
        for prev, cur in zip(dates, dates[1:]):
            if cur - prev != timedelta(days=1):
                raise ValueError(f"Dates must be daily contiguous; gap after {prev}")

        response = _readonly(self.response)
        expected = (len(geos), len(dates))
        if response.shape != expected:
            raise ValueError(f"Response shape {response.shape} does not match {expected}")
        if not np.all(np.isfinite(response)) or np.any(response < 0):
            raise ValueError("Response values must be finite and non-negative")

        spend = None
        if self.spend is not None:
            spend = _readonly(self.spend)
            if spend.shape != expected:
                raise ValueError(f"Spend shape {spend.shape} does not match {expected}")
            if not np.all(np.isfinite(spend)) or np.any(spend < 0):
                raise ValueError("Spend values must be finite and non-negative")

        object.__setattr__(self, "geos", geos)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "response", response)
        object.__setattr__(self, "spend", spend)
        object.__setattr__(self, "_index", {g: i for i, g in enumerate(geos)})

    @property
    def n_geos(self) -> int:
        return len(self.geos)

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def has_spend(self) -> bool:
        return self.spend is not None

    @property
    def date_range(self) -> DateRange:
        return DateRange(start=self.dates[0], end=self.dates[-1])

    def geo_index(self, geo: str) -> int:
        try:
            return self._index[geo]
        except KeyError:
            raise UnknownGeoError(f"Geo '{geo}' is not in the panel") from None

    def columns(self, period: DateRange) -> slice:
        """Column slice covering `period`, which must lie inside the panel"""
        if period.start < self.dates[0] or period.end > self.dates[-1]:
            raise ValueError(f"Period {period.start}..{period.end} lies outside the panel")
        first = (period.start - self.dates[0]).days
        return slice(first, first + period.days)

    def equals(self, other: "GeoPanel") -> bool:
        """Bit-for-bit equality of ids, dates and values"""
        if self.geos != other.geos or self.dates != other.dates:
            return False
        if not np.array_equal(self.response, other.response):
            return False
        if self.has_spend != other.has_spend:
            return False
        return not self.has_spend or np.array_equal(self.spend, other.spend)


class PeriodSplit(BaseModel):
    model_config = ConfigDict(frozen=True)

    pairing_period: DateRange
    evaluation_period: DateRange
    block_length_days: int = Field(gt=0)

    @model_validator(mode="after")
    def validate_split(self) -> "PeriodSplit":
        if self.pairing_period.overlaps(self.evaluation_period):
            raise ValueError("Pairing and evaluation periods must not overlap")
        if self.pairing_period.days % self.block_length_days:
            raise ValueError("Pairing period must be a whole number of blocks")
        return self

    @property
    def n_blocks(self) -> int:
        return self.pairing_period.days // self.block_length_days


class BlockTotals(BaseModel):
    geo: str
    totals: List[float]

    @field_validator("totals")
    def validate_totals(cls, v: List[float]) -> List[float]:
        if not all(math.isfinite(t) for t in v):
            raise ValueError("Block totals must be finite")
        return v


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    geos: Tuple[str, ...]
    d: np.ndarray

    def __post_init__(self):
        geos = tuple(self.geos)
        d = _readonly(self.d)
        if d.shape != (len(geos), len(geos)):
            raise ValueError(f"Distance matrix shape {d.shape} does not match {len(geos)} geos")
        if len(set(geos)) != len(geos):
            raise ValueError("Geo ids must be unique")
        if not np.all(np.isfinite(d)):
            raise NonFiniteDistanceError("Distance matrix contains non-finite entries")
        if np.any(d < 0):
            raise ValueError("Distances must be non-negative")
        if not np.array_equal(d, d.T):
            raise ValueError("Distance matrix must be symmetric")
        if np.any(np.diag(d) != 0):
            raise ValueError("Distance matrix diagonal must be zero")
        object.__setattr__(self, "geos", geos)
        object.__setattr__(self, "d", d)

    @property
    def size(self) -> int:
        return len(self.geos)

    def distance(self, geo_a: str, geo_b: str) -> float:
        try:
            i, j = self.geos.index(geo_a), self.geos.index(geo_b)
        except ValueError:
            raise UnknownGeoError(f"Pair ({geo_a}, {geo_b}) is not in the distance matrix") from None
        return float(self.d[i, j])


class GeoPair(BaseModel):
    model_config = ConfigDict(frozen=True)

    pair_id: int = Field(ge=1)
    geo_a: str
    geo_b: str
    distance: float = Field(ge=0)

    @model_validator(mode="after")
    def validate_canonical_order(self) -> "GeoPair":
        if not self.geo_a < self.geo_b:
            raise ValueError(f"Pair geos must be in canonical order: {self.geo_a!r} < {self.geo_b!r}")
        return self


class PairSet(BaseModel):
    """n disjoint geo pairs; pair_id is 1-based in ascending distance order"""

    pairs: List[GeoPair] = Field(default_factory=list)
    excluded_geos: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_pairs(self) -> "PairSet":
        paired = [g for p in self.pairs for g in (p.geo_a, p.geo_b)]
        if len(set(paired)) != len(paired):
            raise ValueError("Paired geos must be distinct")
        if set(paired) & set(self.excluded_geos):
            raise ValueError("A geo cannot be both paired and excluded")
        if [p.pair_id for p in self.pairs] != list(range(1, len(self.pairs) + 1)):
            raise ValueError("Pair ids must run 1..n in list order")
        return self

    @property
    def n(self) -> int:
        return len(self.pairs)

    @property
    def paired_geos(self) -> List[str]:
        return [g for p in self.pairs for g in (p.geo_a, p.geo_b)]

    @property
    def all_geos(self) -> List[str]:
        return sorted(self.paired_geos + list(self.excluded_geos))

    def as_sets(self) -> set:
        return {frozenset((p.geo_a, p.geo_b)) for p in self.pairs}


class PairingLoss(BaseModel):
    l1_total: float = Field(ge=0)


@dataclass(frozen=True, eq=False)
class PairExperimentData:
    """Per-pair spend differences `x` and response differences `y`"""

    x: np.ndarray
    y: np.ndarray
    pair_ids: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        x = _readonly(self.x).reshape(-1)
        y = _readonly(self.y).reshape(-1)
        if x.size < 1 or x.size != y.size:
            raise ValueError(f"x and y must have equal length >= 1, got {x.size} and {y.size}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("x and y must be finite")
        pair_ids = tuple(range(1, x.size + 1)) if self.pair_ids is None else tuple(int(i) for i in self.pair_ids)
        if len(pair_ids) != x.size or len(set(pair_ids)) != len(pair_ids):
            raise ValueError("pair_ids must be unique and match the data length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "pair_ids", pair_ids)

    @property
    def n(self) -> int:
        return int(self.x.size)


class TrimSpec(BaseModel):
    max_trim_rate: float = 0.10
    fixed_trim_count: Optional[int] = Field(default=None, ge=0)
    criterion: str = "se_proxy"

    @field_validator("max_trim_rate")
    def validate_rate(cls, v: float) -> float:
        if not 0 <= v < 0.5:
            raise ValueError("max_trim_rate must be in [0, 0.5)")
        return v

    def candidate_trim_counts(self, n: int) -> List[int]:
        if self.fixed_trim_count is not None:
            if n - 2 * self.fixed_trim_count < 1:
                raise ValueError(f"fixed_trim_count={self.fixed_trim_count} leaves no pairs for n={n}")
            return [self.fixed_trim_count]
        upper = math.floor(n * self.max_trim_rate)
        return [k for k in range(upper + 1) if n - 2 * k >= 1]


class TrimmedMatchEstimate(BaseModel):
    theta_hat: float
    trim_count: int = Field(ge=0)
    trimmed_pair_ids: List[int] = Field(default_factory=list)
    untrimmed_x_sum: float
    se_proxy: float
    candidates: Dict[int, float] = Field(default_factory=dict)  # trim count -> criterion value

    @model_validator(mode="after")
    def validate_trim_ids(self) -> "TrimmedMatchEstimate":
        if len(self.trimmed_pair_ids) != 2 * self.trim_count:
            raise ValueError("trimmed_pair_ids must hold 2 * trim_count entries")
        return self


class Assignment(BaseModel):
    """A_i per pair; +1 treats the second geo (geo_b), -1 the first (geo_a)"""

    arms: List[int] = Field(default_factory=list)

    @field_validator("arms")
    def validate_arms(cls, v: List[int]) -> List[int]:
        if any(a not in (-1, 1) for a in v):
            raise ValueError("Arms must be -1 or +1")
        return v

    @property
    def n(self) -> int:
        return len(self.arms)

    def flipped(self) -> "Assignment":
        return Assignment(arms=[-a for a in self.arms])

    def treated_and_control(self, pairs: PairSet) -> List[Tuple[str, str]]:
        if len(self.arms) != pairs.n:
            raise ValueError(f"Assignment length {len(self.arms)} does not match {pairs.n} pairs")
        return [
            (p.geo_b, p.geo_a) if a == 1 else (p.geo_a, p.geo_b)
            for p, a in zip(pairs.pairs, self.arms)
        ]


class BalanceConfig(BaseModel):
    sign_test_min_p: float = 0.2
    max_abs_sim_iroas: Optional[float] = None  # None disables the check
    max_redraws: int = Field(default=1000, ge=1)

    @field_validator("sign_test_min_p")
    def validate_p(cls, v: float) -> float:
        if not 0 <= v <= 1:
            raise ValueError("sign_test_min_p must be in [0, 1]")
        return v

    @field_validator("max_abs_sim_iroas")
    def validate_threshold(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and (math.isnan(v) or v < 0):
            raise ValueError("max_abs_sim_iroas must be >= 0")
        return v

    def with_threshold(self, threshold: Optional[float]) -> "BalanceConfig":
        return self.model_copy(update={"max_abs_sim_iroas": threshold})


class EvalInputs(BaseModel):
    pairs: PairSet
    baseline_response: Dict[str, float]
    spend_proxy: Dict[str, float]
    budget: float = Field(gt=0)
    theta: float = 0.0
    replicates: int = Field(default=1000, ge=1)
    trim_spec: TrimSpec = Field(default_factory=TrimSpec)
    seed: int = Field(default=0, ge=0)
    balance: Optional[BalanceConfig] = None  # None skips rerandomization in replicates

    @model_validator(mode="after")
    def validate_coverage(self) -> "EvalInputs":
        for geo in self.pairs.paired_geos:
            if geo not in self.baseline_response or geo not in self.spend_proxy:
                raise ValueError(f"Geo '{geo}' lacks a baseline or a spend proxy")
            if not math.isfinite(self.baseline_response[geo]):
                raise ValueError(f"Baseline for '{geo}' must be finite")
            proxy = self.spend_proxy[geo]
            if not math.isfinite(proxy) or proxy < 0:
                raise ValueError(f"Spend proxy for '{geo}' must be finite and >= 0")
        # some assignment would put all spend on zero-proxy geos
        if self.pairs.n and all(
            min(self.spend_proxy[p.geo_a], self.spend_proxy[p.geo_b]) == 0 for p in self.pairs.pairs
        ):
            raise ValueError("Every pair has a zero-proxy geo; a treatment arm could carry no spend")
        return self


@dataclass(frozen=True, eq=False)
class ReplicateDraw:
    index: int
    assignment: Assignment
    r: float
    data: Optional[PairExperimentData]
    theta_hat: Optional[float]  # None when estimation failed
    attempts: int = 1
    cap_hit: bool = False
    budget_to_baseline: float = math.nan

    @property
    def failed(self) -> bool:
        return self.theta_hat is None


class DesignEvaluation(BaseModel):
    n: int = Field(ge=1)
    rmse: float = Field(ge=0)
    theta0: float
    budget_to_baseline: float = Field(gt=0)
    failures: int = Field(default=0, ge=0)
    replicates: int = Field(ge=1)
    seed: int = Field(ge=0)
    theta: float = 0.0
    pairing_loss: Optional[float] = None
    redraw_cap_hits: int = 0
    invalid: bool = False

    @model_validator(mode="after")
    def validate_failures(self) -> "DesignEvaluation":
        if self.failures > self.replicates:
            raise ValueError("failures cannot exceed replicates")
        return self


class PairingConfig(BaseModel):
    """Pairing-only settings; no budget or power inputs"""

    n: int = Field(ge=1)
    pairing_method: PairingMethod = PairingMethod.OPTIMAL
    block_length_days: int = Field(default=7, gt=0)
    eval_days: int = Field(default=14, gt=0)
    evaluation_start: Optional[date] = None


class DesignConfig(BaseModel):
    budget: float = Field(gt=0)
    alpha: float = 0.10
    beta: float = 0.90
    theta0_target: Optional[float] = None
    max_budget_to_baseline: Optional[float] = None
    n_grid: Optional[List[int]] = None  # None means 10..floor(N/2)
    pairing_method: PairingMethod = PairingMethod.OPTIMAL
    block_length_days: int = Field(default=7, gt=0)
    eval_days: int = Field(default=14, gt=0)
    evaluation_start: Optional[date] = None
    evaluation_mode: EvaluationMode = EvaluationMode.CROSS_VALIDATED
    trim_spec: TrimSpec = Field(default_factory=TrimSpec)
    replicates: int = Field(default=1000, ge=1)
    seed: int = Field(default=0, ge=0)
    spend_proxy_source: SpendProxySource = SpendProxySource.PANEL
    balance: BalanceConfig = Field(default_factory=BalanceConfig)
    verify_at_theta0: bool = False

    @field_validator("alpha", "beta")
    def validate_probability(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError("alpha and beta must be strictly between 0 and 1")
        return v

    @field_validator("n_grid")
    def validate_grid(cls, v: Optional[List[int]]) -> Optional[List[int]]:
        if v is None:
            return v
        if not v or any(n < 1 for n in v):
            raise ValueError("n_grid values must be >= 1")
        return sorted(set(v))

    def resolve_grid(self, n_geos: int) -> List[int]:
        upper = n_geos // 2
        if self.n_grid is None:
            return list(range(min(10, upper), upper + 1)) if upper >= 1 else []
        return list(self.n_grid)


class CandidateTable(BaseModel):
    rows: List[DesignEvaluation] = Field(default_factory=list)
    chosen_n: Optional[int] = None

    @model_validator(mode="after")
    def validate_rows(self) -> "CandidateTable":
        ns = [r.n for r in self.rows]
        if len(set(ns)) != len(ns):
            raise ValueError("Candidate rows must have distinct n")
        if self.chosen_n is not None and self.chosen_n not in ns:
            raise ValueError(f"chosen_n={self.chosen_n} is not among the rows")
        return self

    def row(self, n: int) -> DesignEvaluation:
        for r in self.rows:
            if r.n == n:
                return r
        raise KeyError(n)


class FinalDesign(BaseModel):
    pairs: PairSet
    assignment: Assignment
    evaluation: DesignEvaluation
    provenance: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def validate_sizes(self) -> "FinalDesign":
        if self.evaluation.n != self.pairs.n or self.assignment.n != self.pairs.n:
            raise ValueError("Evaluation, assignment and pairs must agree on n")
        return self


class SynthConfig(BaseModel):
    n_geos: int = Field(default=100, ge=2)
    n_days: int = Field(default=42, ge=1)
    size_scale: float = Field(default=1e5, gt=0)
    lognormal_mu: float = 1.0
    lognormal_sigma: float = Field(default=1.0, ge=0)
    seasonal_amp: float = Field(default=0.25, ge=0)
    noise_amp: float = Field(default=0.5, ge=0)
    ar_coef: float = 0.5
    spend_rate: float = Field(default=0.01, ge=0)
    spend_noise: float = Field(default=0.5, ge=0)
    proxy_power: int = 1
    seed: int = Field(default=0, ge=0)
    start_date: date = date(2023, 1, 2)

    @field_validator("ar_coef")
    def validate_ar(cls, v: float) -> float:
        if not abs(v) < 1:
            raise ValueError("|ar_coef| must be < 1")
        return v

    @field_validator("proxy_power")
    def validate_power(cls, v: int) -> int:
        if v not in (1, 2):
            raise ValueError("proxy_power must be 1 (linear) or 2 (squared)")
        return v
