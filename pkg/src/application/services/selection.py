import math
from typing import Iterable, List, Optional

from application.services.power_analysis import minimum_detectable_iroas
from domain.entities import DesignConfig, DesignEvaluation


def rmse_bound(cfg: DesignConfig) -> Optional[float]:
    """Largest RMSE that still detects theta0_target at (alpha, beta); None without a target"""
    if cfg.theta0_target is None:
        return None
    scale = minimum_detectable_iroas(1.0, cfg.alpha, cfg.beta)
    if scale <= 0:
        return math.inf
    return cfg.theta0_target / scale


def feasible_rows(rows: Iterable[DesignEvaluation], cfg: DesignConfig) -> List[DesignEvaluation]:
    bound = rmse_bound(cfg)
    feasible = []
    for row in rows:
        if row.invalid or not math.isfinite(row.rmse):
            continue
        if bound is not None and row.rmse > bound:
            continue
        if cfg.max_budget_to_baseline is not None and row.budget_to_baseline > cfg.max_budget_to_baseline:
            continue
        feasible.append(row)
    return feasible


def select_candidate(rows: Iterable[DesignEvaluation], cfg: DesignConfig) -> Optional[int]:
    """Minimal RMSE among feasible rows; ties go to larger n, then smaller budget ratio"""
    feasible = feasible_rows(rows, cfg)
    if not feasible:
        return None
    best = min(feasible, key=lambda r: (r.rmse, -r.n, r.budget_to_baseline))
    return best.n
