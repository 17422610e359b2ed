import math
from dataclasses import dataclass
from itertools import product
from typing import Dict, Optional

import numpy as np
from scipy.stats import binomtest
from tenacity import Retrying, retry_if_result, stop_after_attempt

from application.services.experiment_data import build_experiment_data
from application.services.trimmed_match import estimate
from domain.entities import Assignment, BalanceConfig, PairSet, TrimSpec
from domain.exceptions import EstimationError
from domain.value_objects import BalanceCheckResult, RerandomizationResult
import logging

logger = logging.getLogger(__name__)

EXACT_ACCEPTANCE_MAX_PAIRS = 12


def draw_assignment(n: int, rng: np.random.Generator) -> Assignment:
    """i.i.d. fair signs; +1 treats the second geo of a pair"""
    if n == 0:
        return Assignment(arms=[])
    return Assignment(arms=(rng.integers(0, 2, size=n) * 2 - 1).tolist())


def sign_balance_check(
    pairs: PairSet, baseline: Dict[str, float], assignment: Assignment, cfg: BalanceConfig
) -> BalanceCheckResult:
    """Two-sided exact binomial test on the share of pairs whose treated geo has the larger baseline"""
    diffs = [baseline[t] - baseline[c] for t, c in assignment.treated_and_control(pairs)]
    informative = sum(1 for d in diffs if d != 0)
    positives = sum(1 for d in diffs if d > 0)
    if informative == 0:
        return BalanceCheckResult(passed=True, statistic=1.0, informative=0)
    p_value = float(binomtest(positives, informative, 0.5, alternative="two-sided").pvalue)
    return BalanceCheckResult(
        passed=p_value >= cfg.sign_test_min_p,
        statistic=p_value,
        informative=informative,
        metadata={"positives": positives},
    )


def sim_iroas_check(
    pairs: PairSet,
    baseline: Dict[str, float],
    proxies: Dict[str, float],
    budget: float,
    assignment: Assignment,
    trim_spec: TrimSpec,
    cfg: BalanceConfig,
) -> BalanceCheckResult:
    """Estimate iROAS on a no-effect replicate with this assignment; pass when close to 0"""
    threshold = cfg.max_abs_sim_iroas
    if threshold is None:
        return BalanceCheckResult(passed=True, statistic=0.0, metadata={"disabled": True})
    try:
        _, data = build_experiment_data(pairs, baseline, proxies, budget, 0.0, assignment)
        theta_sim = estimate(data, trim_spec).theta_hat
    except EstimationError as e:
        logger.debug(f"Simulated iROAS unavailable: {e}")
        return BalanceCheckResult(passed=math.isinf(threshold), statistic=math.nan)
    return BalanceCheckResult(passed=abs(theta_sim) <= threshold, statistic=theta_sim)


@dataclass
class _CheckedDraw:
    assignment: Assignment
    sign_check: BalanceCheckResult
    sim_iroas_check: Optional[BalanceCheckResult]

    @property
    def passed(self) -> bool:
        return self.sign_check.passed and self.sim_iroas_check is not None and self.sim_iroas_check.passed


def _draw_and_check(pairs, baseline, proxies, budget, cfg, trim_spec, rng) -> _CheckedDraw:
    assignment = draw_assignment(pairs.n, rng)
    sign = sign_balance_check(pairs, baseline, assignment, cfg)
    if not sign.passed:
        return _CheckedDraw(assignment, sign, None)
    sim = sim_iroas_check(pairs, baseline, proxies, budget, assignment, trim_spec, cfg)
    return _CheckedDraw(assignment, sign, sim)


def rerandomize(
    pairs: PairSet,
    baseline: Dict[str, float],
    proxies: Dict[str, float],
    budget: float,
    cfg: BalanceConfig,
    rng: np.random.Generator,
    trim_spec: Optional[TrimSpec] = None,
    warn_on_cap: bool = True,
) -> RerandomizationResult:
    """Redraw until both balance checks pass; after `max_redraws` the last draw is kept and flagged"""
    trim_spec = trim_spec or TrimSpec()
    attempts = 0

    def attempt() -> _CheckedDraw:
        nonlocal attempts
        attempts += 1
        return _draw_and_check(pairs, baseline, proxies, budget, cfg, trim_spec, rng)

    retrying = Retrying(
        stop=stop_after_attempt(cfg.max_redraws),
        retry=retry_if_result(lambda draw: not draw.passed),
        retry_error_callback=lambda state: state.outcome.result(),
    )
    draw = retrying(attempt)
    cap_hit = not draw.passed
    if cap_hit and warn_on_cap:
        logger.warning(f"Balance checks not met after {attempts} draws; keeping the last assignment")
    return RerandomizationResult(
        arms=draw.assignment.arms,
        attempts=attempts,
        cap_hit=cap_hit,
        sign_check=draw.sign_check,
        sim_iroas_check=draw.sim_iroas_check,
    )


def acceptance_rate(
    pairs: PairSet,
    baseline: Dict[str, float],
    proxies: Dict[str, float],
    budget: float,
    cfg: BalanceConfig,
    trim_spec: Optional[TrimSpec] = None,
    rng: Optional[np.random.Generator] = None,
    samples: int = 1000,
) -> float:
    """Share of assignments passing both checks; exact for small n, sampled otherwise"""
    trim_spec = trim_spec or TrimSpec()

    def passes(assignment: Assignment) -> bool:
        if not sign_balance_check(pairs, baseline, assignment, cfg).passed:
            return False
        return sim_iroas_check(pairs, baseline, proxies, budget, assignment, trim_spec, cfg).passed

    if pairs.n <= EXACT_ACCEPTANCE_MAX_PAIRS:
        accepted = sum(passes(Assignment(arms=list(arms))) for arms in product((-1, 1), repeat=pairs.n))
        return accepted / 2**pairs.n
    rng = rng or np.random.default_rng(0)
    accepted = sum(passes(draw_assignment(pairs.n, rng)) for _ in range(samples))
    return accepted / samples
