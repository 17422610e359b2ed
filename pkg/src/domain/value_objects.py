from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class PairingMethod(str, Enum):
    OPTIMAL = "optimal"
    RANK = "rank"


class EvaluationMode(str, Enum):
    CROSS_VALIDATED = "cross_validated"
    IN_SAMPLE = "in_sample"  # evaluation window inside the pairing period


class SpendProxySource(str, Enum):
    PANEL = "panel"
    RESPONSE = "response"  # response-proportional fallback, declared explicitly


class ArmLabel(str, Enum):
    TREATMENT = "treatment"
    CONTROL = "control"


class RunStatus(str, Enum):
    INCOMPLETE = "incomplete"
    COMPLETE = "complete"
    FAILED = "failed"


class BalanceCheckResult(BaseModel):
    passed: bool
    statistic: float = 0.0  # p-value for the sign test, estimate for the sim-iROAS check
    informative: int = 0
    metadata: Dict[str, Any] = Field(default_factory=dict)


class RerandomizationResult(BaseModel):
    arms: List[int]
    attempts: int
    cap_hit: bool = False
    sign_check: Optional[BalanceCheckResult] = None
    sim_iroas_check: Optional[BalanceCheckResult] = None


class MethodComparisonRow(BaseModel):
    n: int
    rmse_optimal: float
    rmse_rank: float
    ratio: float
