from abc import ABC, abstractmethod
from typing import IO, Dict, List, Union
from pathlib import Path

from domain.entities import DateRange, DistanceMatrix, GeoPanel, PairExperimentData, PairSet


class PairingStrategy(ABC):
    """Abstract interface for forming n geo pairs from pretest data"""

    @abstractmethod
    def pair(self, panel: GeoPanel, period: DateRange, dm: DistanceMatrix, n: int) -> PairSet:
        pass


class TrimSelectionCriterion(ABC):
    """Abstract interface for scoring a trim count; lower is better"""

    name: str = ""

    @abstractmethod
    def score(self, data: PairExperimentData, theta: float, untrimmed: List[int]) -> float:
        pass


class PanelRepository(ABC):
    """Abstract interface for reading and writing pretest panels"""

    @abstractmethod
    def load(self, source: Union[str, Path, IO[str]]) -> GeoPanel:
        pass

    @abstractmethod
    def save(self, panel: GeoPanel, sink: Union[str, Path, IO[str]]) -> None:
        pass


class SpendProxyProvider(ABC):
    """Abstract interface for per-geo spend proxies over a period"""

    @abstractmethod
    def proxies(self, panel: GeoPanel, period: DateRange, geos: List[str]) -> Dict[str, float]:
        pass
