import math
from typing import Dict, List

from application.services.periods import period_totals, spend_totals
from domain.entities import DateRange, GeoPanel
from domain.exceptions import MissingSpendError
from domain.interfaces import SpendProxyProvider
from domain.value_objects import SpendProxySource


class PanelSpendProxy(SpendProxyProvider):
    """Observed spend totals over the period"""

    def proxies(self, panel: GeoPanel, period: DateRange, geos: List[str]) -> Dict[str, float]:
        if not panel.has_spend:
            raise MissingSpendError("Panel has no spend column; set spend_proxy_source to 'response'")
        return spend_totals(panel, geos, period)


class ResponseSpendProxy(SpendProxyProvider):
    """Response totals over the period, scaled to sum to 1 across all panel geos"""

    def proxies(self, panel: GeoPanel, period: DateRange, geos: List[str]) -> Dict[str, float]:
        totals = period_totals(panel, panel.geos, period)
        overall = math.fsum(totals.values())
        if overall <= 0:
            raise MissingSpendError("Response is zero throughout the period; no response-based proxy exists")
        return {geo: totals[geo] / overall for geo in geos}


def create_spend_proxy_provider(source: SpendProxySource) -> SpendProxyProvider:
    if source == SpendProxySource.PANEL:
        return PanelSpendProxy()
    elif source == SpendProxySource.RESPONSE:
        return ResponseSpendProxy()
    else:
        raise ValueError(f"Unsupported spend proxy source: {source}")
