from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from domain.entities import DesignEvaluation, GeoPair
from domain.value_objects import RunStatus


class PeriodReport(BaseModel):
    start: str
    end: str
    days: int


class ChosenDesignReport(BaseModel):
    n: int
    evaluation: DesignEvaluation
    pairs: List[GeoPair]
    arms: List[int]
    pairs_path: str
    assignment_path: str
    rerandomization: Dict[str, Any] = Field(default_factory=dict)


class DesignReport(BaseModel):
    """Structured result of the `design` command"""

    feasible: bool
    config: Dict[str, Any]
    pairing_period: PeriodReport
    evaluation_period: PeriodReport
    evaluation_window: PeriodReport
    evaluation_mode: str
    rmse_bound: Optional[float] = None
    candidates: List[DesignEvaluation]
    theta0_candidates: List[DesignEvaluation] = Field(default_factory=list)
    candidates_path: str
    chosen: Optional[ChosenDesignReport] = None
    zero_response_geos: List[str] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)
    drift_caveat: str
    drift_adjusted: bool = False


class EstimateReport(BaseModel):
    theta_hat: float
    trim_count: int
    trimmed_pair_ids: List[int]
    se_proxy: float
    untrimmed_x_sum: float
    max_trim_rate: float
    n_pairs: int
    criterion_by_trim_count: Dict[int, float] = Field(default_factory=dict)


class EvaluateReport(BaseModel):
    evaluation: DesignEvaluation
    theta0_evaluation: Optional[DesignEvaluation] = None
    evaluation_window: PeriodReport


class ErrorReport(BaseModel):
    category: str
    message: str


class RunManifest(BaseModel):
    """Provenance of one command; timestamps live here and nowhere else"""

    command: str
    status: RunStatus = RunStatus.INCOMPLETE
    tool_version: str
    seed: Optional[int] = None
    config_sha256: str
    effective_config: Dict[str, Any] = Field(default_factory=dict)
    inputs: Dict[str, str] = Field(default_factory=dict)  # path -> sha256
    outputs: Dict[str, str] = Field(default_factory=dict)  # name -> path
    output_sha256: Dict[str, str] = Field(default_factory=dict)
    started_at: str
    finished_at: Optional[str] = None
    timeline: List[Dict[str, Any]] = Field(default_factory=list)
    error: Optional[ErrorReport] = None
