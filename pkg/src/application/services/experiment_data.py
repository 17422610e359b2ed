"""Hold-back experiment data for a fixed assignment.

The treated geo of each pair receives spend r * S' and response
R' + theta * r * S'; the control geo keeps R' and no spend. r scales the
treated proxies so total spend equals the budget.
"""
import math
from typing import Dict, Tuple

import numpy as np

from domain.entities import Assignment, PairExperimentData, PairSet
from domain.exceptions import EstimationError


def budget_scale(pairs: PairSet, proxies: Dict[str, float], budget: float, assignment: Assignment) -> float:
    treated = math.fsum(proxies[t] for t, _ in assignment.treated_and_control(pairs))
    if treated <= 0:
        raise EstimationError("Treated spend proxies sum to zero")
    return budget / treated


def build_experiment_data(
    pairs: PairSet,
    baseline: Dict[str, float],
    proxies: Dict[str, float],
    budget: float,
    theta: float,
    assignment: Assignment,
) -> Tuple[float, PairExperimentData]:
    """Returns (r, data) with x, y the treated-minus-control differences"""
    r = budget_scale(pairs, proxies, budget, assignment)
    arms = assignment.treated_and_control(pairs)
    x = np.array([r * proxies[t] for t, _ in arms])
    y = np.array([baseline[t] + theta * r * proxies[t] - baseline[c] for t, c in arms])
    return r, PairExperimentData(x=x, y=y, pair_ids=tuple(p.pair_id for p in pairs.pairs))


def treated_baseline_ratio(pairs: PairSet, baseline: Dict[str, float], budget: float, assignment: Assignment) -> float:
    """Budget over the treatment group's baseline response"""
    treated = math.fsum(baseline[t] for t, _ in assignment.treated_and_control(pairs))
    return budget / treated if treated > 0 else math.inf
