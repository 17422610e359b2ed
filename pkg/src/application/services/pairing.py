import math
from itertools import combinations
from typing import Iterator, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.spatial.distance import pdist, squareform

from application.services.periods import block_matrix, period_totals
from config.settings import settings
from domain.entities import BlockTotals, DateRange, DistanceMatrix, GeoPair, GeoPanel, PairingLoss, PairSet
from domain.exceptions import (
    BlockCountMismatchError,
    EnumerationTooLargeError,
    NonFiniteDistanceError,
    PairCountError,
)
from domain.interfaces import PairingStrategy
from domain.value_objects import PairingMethod
import logging

logger = logging.getLogger(__name__)


def distance_matrix(blocks: Sequence[BlockTotals]) -> DistanceMatrix:
    """Euclidean distance between geos' block-total vectors (proportionality constant 1)"""
    counts = {len(b.totals) for b in blocks}
    if len(counts) > 1:
        raise BlockCountMismatchError(f"Geos have differing block counts: {sorted(counts)}")
    if counts and counts.pop() < 1:
        raise BlockCountMismatchError("Each geo needs at least one block")
    geos = [b.geo for b in blocks]
    if len(geos) < 2:
        return DistanceMatrix(geos=geos, d=np.zeros((len(geos), len(geos))))
    totals = np.array([b.totals for b in blocks], dtype=np.float64)
    return DistanceMatrix(geos=geos, d=squareform(pdist(totals, metric="euclidean")))


def pair_distance_matrix(panel: GeoPanel, period: DateRange, block_length_days: int) -> DistanceMatrix:
    """Distance matrix straight from the panel, skipping the BlockTotals records"""
    totals = block_matrix(panel, period, block_length_days)
    if panel.n_geos < 2:
        return DistanceMatrix(geos=panel.geos, d=np.zeros((panel.n_geos, panel.n_geos)))
    return DistanceMatrix(geos=panel.geos, d=squareform(pdist(totals, metric="euclidean")))


def _check_pair_count(n_geos: int, n: int) -> None:
    if not 1 <= n <= n_geos // 2:
        raise PairCountError(f"n={n} must be between 1 and {n_geos // 2} for {n_geos} geos")


def _build_pair_set(dm: DistanceMatrix, matched: List[Tuple[str, str]]) -> PairSet:
    records = []
    for a, b in matched:
        geo_a, geo_b = (a, b) if a < b else (b, a)
        records.append((dm.distance(geo_a, geo_b), geo_a, geo_b))
    records.sort()
    paired = {g for _, a, b in records for g in (a, b)}
    return PairSet(
        pairs=[
            GeoPair(pair_id=i, geo_a=a, geo_b=b, distance=dist)
            for i, (dist, a, b) in enumerate(records, start=1)
        ],
        excluded_geos=sorted(g for g in dm.geos if g not in paired),
    )


# Distances are compared on an integer grid of this resolution relative to the largest distance
DISTANCE_RESOLUTION = 1e-12


def _lexicographic_bonus(geos: Sequence[str]) -> dict:
    """Power-of-two weight per pair, larger for lexicographically smaller (geo_a, geo_b).

    Any single bonus exceeds the sum of all bonuses of later pairs, so among
    equal-loss matchings the heaviest is the one with the smallest sorted pair list.
    """
    ordered = sorted(geos)
    ranked = list(combinations(ordered, 2))
    top = len(ranked) - 1
    return {pair: 1 << (top - rank) for rank, pair in enumerate(ranked)}


def optimal_pairs(dm: DistanceMatrix, n: int) -> PairSet:
    """n disjoint pairs with globally minimal total distance.

    Solved as a perfect matching on the real geos plus N - 2n pseudo geos.
    Pseudo geos connect to every real geo at zero distance and never to each
    other, so the geos they absorb are the excluded ones. The blossom solver
    maximizes weight, so each real edge weighs `(offset - d) * scale + bonus`
    in exact integers: total distance decides first, and among matchings of
    equal total distance the lexicographically smallest sorted pair list wins.
    """
    n_geos = dm.size
    _check_pair_count(n_geos, n)
    if not np.all(np.isfinite(dm.d)):
        raise NonFiniteDistanceError("Distance matrix contains non-finite entries")

    largest = float(dm.d.max()) if n_geos else 0.0
    if largest > 0:
        grid = np.rint(dm.d / (largest * DISTANCE_RESOLUTION)).astype(np.int64)
    else:
        grid = np.zeros(dm.d.shape, dtype=np.int64)
    offset = int(grid.max()) + 1

    bonus = _lexicographic_bonus(dm.geos)
    scale = 1 << len(bonus)
    index = {g: i for i, g in enumerate(dm.geos)}

    graph = nx.Graph()
    graph.add_nodes_from(sorted(dm.geos))
    for (a, b), extra in bonus.items():
        graph.add_edge(a, b, weight=(offset - int(grid[index[a], index[b]])) * scale + extra)
    pseudo = [("pseudo", k) for k in range(n_geos - 2 * n)]
    for p in pseudo:
        for g in sorted(dm.geos):
            graph.add_edge(p, g, weight=offset * scale)

    matching = nx.max_weight_matching(graph, maxcardinality=True)
    real = [(a, b) for a, b in matching if not isinstance(a, tuple) and not isinstance(b, tuple)]
    if len(real) != n:
        raise PairCountError(f"Matching produced {len(real)} real pairs, expected {n}")
    return _build_pair_set(dm, real)


def count_pairings(n_geos: int, n: int) -> int:
    """N! / ((N - 2n)! (2n)!!)"""
    return math.factorial(n_geos) // (math.factorial(n_geos - 2 * n) * 2**n * math.factorial(n))


def _perfect_matchings(nodes: Tuple[str, ...]) -> Iterator[List[Tuple[str, str]]]:
    if not nodes:
        yield []
        return
    head, rest = nodes[0], nodes[1:]
    for k, partner in enumerate(rest):
        for tail in _perfect_matchings(rest[:k] + rest[k + 1:]):
            yield [(head, partner)] + tail


def enumerate_pairings(dm: DistanceMatrix, n: int) -> List[Tuple[PairSet, PairingLoss]]:
    """Every way to form n disjoint pairs; brute-force oracle for small N"""
    if dm.size > settings.ENUMERATION_MAX_GEOS:
        raise EnumerationTooLargeError(
            f"Enumeration is limited to {settings.ENUMERATION_MAX_GEOS} geos, got {dm.size}"
        )
    _check_pair_count(dm.size, n)
    geos = tuple(sorted(dm.geos))
    results = []
    for subset in combinations(geos, 2 * n):
        for matched in _perfect_matchings(subset):
            ps = _build_pair_set(dm, matched)
            results.append((ps, pairing_loss(ps)))
    return results


def rank_pairs(panel: GeoPanel, period: DateRange, n: int, block_length_days: int = 7) -> PairSet:
    """Pair geos adjacent in size rank, keeping the n closest rank pairs.

    Geos are ranked by descending response total over `period` (ties by id);
    ranks 1-2, 3-4, ... form the candidate pairs and the n with the smallest
    block distance are returned.
    """
    _check_pair_count(panel.n_geos, n)
    totals = period_totals(panel, panel.geos, period)
    ranked = sorted(panel.geos, key=lambda g: (-totals[g], g))
    dm = pair_distance_matrix(panel, period, block_length_days)
    rank_pairs_ = [(ranked[i], ranked[i + 1]) for i in range(0, len(ranked) - 1, 2)]
    scored = sorted(
        ((dm.distance(a, b), pos, (a, b)) for pos, (a, b) in enumerate(rank_pairs_)),
        key=lambda item: (item[0], item[1]),
    )
    kept = [pair for _, _, pair in scored[:n]]
    return _build_pair_set(dm, kept)


def pairing_loss(ps: PairSet) -> PairingLoss:
    return PairingLoss(l1_total=math.fsum(p.distance for p in ps.pairs))


class OptimalPairing(PairingStrategy):
    def pair(self, panel: GeoPanel, period: DateRange, dm: DistanceMatrix, n: int) -> PairSet:
        return optimal_pairs(dm, n)


class RankPairing(PairingStrategy):
    def __init__(self, block_length_days: int = 7):
        self.block_length_days = block_length_days

    def pair(self, panel: GeoPanel, period: DateRange, dm: DistanceMatrix, n: int) -> PairSet:
        return rank_pairs(panel, period, n, self.block_length_days)


class PairingStrategyFactory:
    """Factory to create the pairing strategy for a method"""

    @staticmethod
    def create_strategy(method: PairingMethod, block_length_days: Optional[int] = None) -> PairingStrategy:
        if method == PairingMethod.OPTIMAL:
            return OptimalPairing()
        elif method == PairingMethod.RANK:
            return RankPairing(block_length_days or settings.DEFAULT_BLOCK_LENGTH_DAYS)
        else:
            raise ValueError(f"Unsupported pairing method: {method}")
