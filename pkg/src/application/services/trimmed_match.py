"""Trimmed Match point estimator.

The trimmed mean of residuals `y - theta * x` is piecewise linear in theta,
with kinks only where two residual lines cross. Between consecutive crossings
the trimmed index set is fixed, so the root on each interval has the closed
form sum(y_U) / sum(x_U) over the untrimmed set U.
"""
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from domain.entities import PairExperimentData, TrimmedMatchEstimate, TrimSpec
from domain.exceptions import EstimationError, NoSpendSignalError
from domain.interfaces import TrimSelectionCriterion
import logging

logger = logging.getLogger(__name__)

ROOT_DEDUP_RTOL = 1e-12
# accept interval roots this close (relative) to an interval end
ROOT_BOUNDARY_RTOL = 1e-9


def residuals(data: PairExperimentData, theta: float) -> np.ndarray:
    return data.y - theta * data.x


def trimmed_mean_residual(data: PairExperimentData, theta: float, trim_count: int) -> float:
    eps = np.sort(residuals(data, theta))
    kept = eps[trim_count:data.n - trim_count]
    if kept.size < 1:
        raise ValueError(f"trim_count={trim_count} leaves no pairs for n={data.n}")
    return float(kept.mean())


def untrimmed_indices(data: PairExperimentData, theta: float, trim_count: int) -> np.ndarray:
    order = np.argsort(residuals(data, theta), kind="stable")
    return order[trim_count:data.n - trim_count]


def _breakpoints(data: PairExperimentData) -> np.ndarray:
    i, j = np.triu_indices(data.n, k=1)
    dx = data.x[i] - data.x[j]
    mask = dx != 0
    return np.unique((data.y[i][mask] - data.y[j][mask]) / dx[mask])


def _interval_orders(data: PairExperimentData) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Residual orderings on every interval between breakpoints.

    Returns interval lower ends, upper ends and an (intervals, n) array of
    residual ranks evaluated at each interval's interior test point.
    """
    bp = _breakpoints(data)
    if bp.size == 0:
        lo, hi, inner = np.array([-np.inf]), np.array([np.inf]), np.array([0.0])
    else:
        lo = np.concatenate(([-np.inf], bp))
        hi = np.concatenate((bp, [np.inf]))
        inner = np.concatenate(([bp[0] - 1.0], (bp[:-1] + bp[1:]) / 2.0, [bp[-1] + 1.0]))
    eps = data.y[None, :] - inner[:, None] * data.x[None, :]
    return lo, hi, np.argsort(eps, axis=1, kind="stable")


def _dedupe(roots: List[float]) -> List[float]:
    unique: List[float] = []
    for r in sorted(roots):
        if unique and abs(r - unique[-1]) <= ROOT_DEDUP_RTOL * max(abs(r), abs(unique[-1])):
            continue
        unique.append(r)
    return unique


def _solve_with_orders(data: PairExperimentData, trim_count: int, orders) -> List[float]:
    n = data.n
    if trim_count < 0 or n - 2 * trim_count < 1:
        raise ValueError(f"trim_count={trim_count} leaves no pairs for n={n}")
    if trim_count == 0:
        sx = float(data.x.sum())
        if sx == 0:
            raise EstimationError("Untrimmed spend differences sum to zero")
        return [float(data.y.sum()) / sx]

    lo, hi, order = orders
    kept = order[:, trim_count:n - trim_count]
    sx = data.x[kept].sum(axis=1)
    sy = data.y[kept].sum(axis=1)
    roots = []
    for a, b, num, den in zip(lo, hi, sy, sx):
        if den == 0:
            continue
        root = float(num / den)
        tol = ROOT_BOUNDARY_RTOL * max(1.0, abs(root))
        if a - tol <= root <= b + tol:
            roots.append(root)
    if not roots:
        raise EstimationError(f"Trimmed mean equation has no root at trim_count={trim_count}")
    return _dedupe(roots)


def solve_trimmed(data: PairExperimentData, trim_count: int) -> List[float]:
    """All roots of the trimmed mean equation at a fixed trim count, ascending"""
    orders = _interval_orders(data) if trim_count > 0 else None
    return _solve_with_orders(data, trim_count, orders)


def se_proxy(data: PairExperimentData, theta: float, untrimmed: Sequence[int]) -> float:
    """sqrt(sum(eps^2) * m / (m - 1)) / |sum(x)| over the untrimmed pairs; inf if unusable"""
    idx = np.asarray(untrimmed, dtype=int)
    m = idx.size
    sx = float(data.x[idx].sum()) if m else 0.0
    if m <= 1 or sx == 0:
        return math.inf
    eps = data.y[idx] - theta * data.x[idx]
    return math.sqrt(float(np.dot(eps, eps)) * m / (m - 1)) / abs(sx)


class SeProxyCriterion(TrimSelectionCriterion):
    name = "se_proxy"

    def score(self, data: PairExperimentData, theta: float, untrimmed: List[int]) -> float:
        return se_proxy(data, theta, untrimmed)


CRITERIA: Dict[str, TrimSelectionCriterion] = {SeProxyCriterion.name: SeProxyCriterion()}


def get_criterion(name: str) -> TrimSelectionCriterion:
    try:
        return CRITERIA[name]
    except KeyError:
        raise ValueError(f"Unknown trim selection criterion: {name}") from None


def estimate(data: PairExperimentData, spec: Optional[TrimSpec] = None) -> TrimmedMatchEstimate:
    """Trimmed Match estimate with data-driven (or fixed) trim count.

    Per trim count the root closest to sum(y)/sum(x) is kept (ties to the
    smaller root); across trim counts the lowest criterion score wins (ties to
    less trimming).
    """
    spec = spec or TrimSpec()
    if not np.any(data.x != 0):
        raise NoSpendSignalError("All spend differences are zero")
    criterion = get_criterion(spec.criterion)
    n = data.n
    total_x = float(data.x.sum())
    reference = float(data.y.sum()) / total_x if total_x != 0 else 0.0

    trim_counts = spec.candidate_trim_counts(n)
    orders = _interval_orders(data) if any(k > 0 for k in trim_counts) else None
    scores: Dict[int, float] = {}
    best = None
    for k in trim_counts:
        try:
            roots = _solve_with_orders(data, k, orders)
        except EstimationError as e:
            logger.debug(f"trim_count={k} skipped: {e}")
            continue
        theta = min(roots, key=lambda r: (abs(r - reference), r))
        kept = untrimmed_indices(data, theta, k)
        score = criterion.score(data, theta, kept.tolist())
        scores[k] = score
        if best is None or score < best[0]:
            best = (score, k, theta, kept)

    if best is None:
        raise EstimationError(f"No trim count in {trim_counts} yields a root")
    score, k, theta, kept = best
    order = np.argsort(residuals(data, theta), kind="stable")
    trimmed = np.concatenate((order[:k], order[n - k:])) if k else np.array([], dtype=int)
    return TrimmedMatchEstimate(
        theta_hat=theta,
        trim_count=k,
        trimmed_pair_ids=sorted(data.pair_ids[i] for i in trimmed),
        untrimmed_x_sum=float(data.x[kept].sum()),
        se_proxy=score,
        candidates=scores,
    )
