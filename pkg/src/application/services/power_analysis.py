import math
from itertools import product
from typing import List, Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import norm

from application.services.experiment_data import build_experiment_data, treated_baseline_ratio
from application.services.randomization import draw_assignment, rerandomize
from application.services.seeding import replicate_rng
from application.services.trimmed_match import estimate
from config.settings import settings
from domain.entities import Assignment, DesignEvaluation, EvalInputs, ReplicateDraw, TrimSpec
from domain.exceptions import AllReplicatesFailedError, ConfigError, EstimationError, PairCountError
import logging

logger = logging.getLogger(__name__)

EXACT_PERMUTATION_MAX_PAIRS = 12


def minimum_detectable_iroas(rmse: float, alpha: float, beta: float) -> float:
    """rmse * (q_{1-alpha} + q_beta) with standard normal quantiles"""
    if not (0 < alpha < 1 and 0 < beta < 1):
        raise ConfigError(f"alpha and beta must lie in (0, 1), got {alpha} and {beta}")
    return rmse * (float(norm.ppf(1 - alpha)) + float(norm.ppf(beta)))


def simulate_replicate(inputs: EvalInputs, rng: np.random.Generator, index: int = 0) -> ReplicateDraw:
    """One hold-back replicate: (re)randomize, scale spend to the budget, estimate iROAS"""
    pairs = inputs.pairs
    attempts, cap_hit = 1, False
    if inputs.balance is not None:
        result = rerandomize(
            pairs,
            inputs.baseline_response,
            inputs.spend_proxy,
            inputs.budget,
            inputs.balance,
            rng,
            trim_spec=inputs.trim_spec,
            warn_on_cap=False,
        )
        assignment, attempts, cap_hit = Assignment(arms=result.arms), result.attempts, result.cap_hit
    else:
        assignment = draw_assignment(pairs.n, rng)

    ratio = treated_baseline_ratio(pairs, inputs.baseline_response, inputs.budget, assignment)
    try:
        r, data = build_experiment_data(
            pairs, inputs.baseline_response, inputs.spend_proxy, inputs.budget, inputs.theta, assignment
        )
    except EstimationError as e:
        logger.debug(f"Replicate {index} has no spend: {e}")
        return ReplicateDraw(index, assignment, math.nan, None, None, attempts, cap_hit, ratio)
    try:
        theta_hat: Optional[float] = estimate(data, inputs.trim_spec).theta_hat
    except EstimationError as e:
        logger.debug(f"Replicate {index} failed: {e}")
        theta_hat = None
    return ReplicateDraw(index, assignment, r, data, theta_hat, attempts, cap_hit, ratio)


def _run_chunk(inputs: EvalInputs, indices: range) -> List[ReplicateDraw]:
    return [simulate_replicate(inputs, replicate_rng(inputs.seed, i), i) for i in indices]


def run_replicates(inputs: EvalInputs, workers: int = 1) -> List[ReplicateDraw]:
    """All K replicates in index order; stream i depends only on (seed, i)"""
    k = inputs.replicates
    if workers <= 1:
        return _run_chunk(inputs, range(k))
    size = math.ceil(k / workers)
    chunks = [range(start, min(start + size, k)) for start in range(0, k, size)]
    results = Parallel(n_jobs=workers)(delayed(_run_chunk)(inputs, chunk) for chunk in chunks)
    return [draw for chunk in results for draw in chunk]


def evaluate_rmse(
    inputs: EvalInputs,
    alpha: float = 0.10,
    beta: float = 0.90,
    workers: int = 1,
    pairing_loss: Optional[float] = None,
) -> DesignEvaluation:
    draws = run_replicates(inputs, workers)
    errors = [(d.theta_hat - inputs.theta) ** 2 for d in draws if not d.failed]
    failures = len(draws) - len(errors)
    if not errors:
        raise AllReplicatesFailedError(f"All {len(draws)} replicates failed for n={inputs.pairs.n}")

    rmse = math.sqrt(math.fsum(errors) / len(errors))
    invalid = failures / len(draws) > settings.MAX_FAILURE_RATE
    if invalid:
        logger.warning(f"n={inputs.pairs.n}: {failures}/{len(draws)} replicates failed; design flagged invalid")
    cap_hits = sum(d.cap_hit for d in draws)
    if cap_hits:
        logger.info(f"n={inputs.pairs.n}: redraw cap reached in {cap_hits} replicates")

    return DesignEvaluation(
        n=inputs.pairs.n,
        rmse=rmse,
        theta0=minimum_detectable_iroas(rmse, alpha, beta),
        budget_to_baseline=math.fsum(d.budget_to_baseline for d in draws) / len(draws),
        failures=failures,
        replicates=len(draws),
        seed=inputs.seed,
        theta=inputs.theta,
        pairing_loss=pairing_loss,
        redraw_cap_hits=cap_hits,
        invalid=invalid,
    )


def budget_to_baseline(inputs: EvalInputs, workers: int = 1) -> float:
    """Mean over replicate assignments of B / treated baseline"""
    draws = run_replicates(inputs, workers)
    return math.fsum(d.budget_to_baseline for d in draws) / len(draws)


def null_quantile(inputs_h0: EvalInputs, alpha: float, workers: int = 1) -> float:
    """Empirical (1 - alpha) quantile of null iROAS estimates"""
    thetas = [d.theta_hat for d in run_replicates(inputs_h0, workers) if not d.failed]
    if not thetas:
        raise AllReplicatesFailedError("All null replicates failed")
    return float(np.quantile(np.array(thetas), 1 - alpha, method="higher"))


def empirical_power(inputs_h1: EvalInputs, null_quantile_q: float, workers: int = 1) -> float:
    """Share of replicates under the alternative whose estimate exceeds q; failures count as misses"""
    draws = run_replicates(inputs_h1, workers)
    return sum(1 for d in draws if not d.failed and d.theta_hat > null_quantile_q) / len(draws)


def exact_permutation_power(inputs_h1: EvalInputs, alpha: float) -> float:
    """Power of the untrimmed test by enumerating all 2^n assignments"""
    pairs = inputs_h1.pairs
    if pairs.n > EXACT_PERMUTATION_MAX_PAIRS:
        raise PairCountError(f"Exact enumeration is limited to {EXACT_PERMUTATION_MAX_PAIRS} pairs")
    spec = TrimSpec(max_trim_rate=0.0, fixed_trim_count=0)

    def theta_hat(theta: float, assignment: Assignment) -> float:
        try:
            _, data = build_experiment_data(
                pairs, inputs_h1.baseline_response, inputs_h1.spend_proxy, inputs_h1.budget, theta, assignment
            )
            return estimate(data, spec).theta_hat
        except EstimationError:
            return math.nan

    assignments = [Assignment(arms=list(arms)) for arms in product((-1, 1), repeat=pairs.n)]
    null = np.array([theta_hat(0.0, a) for a in assignments])
    alt = np.array([theta_hat(inputs_h1.theta, a) for a in assignments])
    q = float(np.quantile(null[~np.isnan(null)], 1 - alpha, method="higher"))
    return float(np.sum(alt > q)) / len(assignments)
