"""Synthetic pretest panels.

Geo sizes follow lognormal quantiles. Daily response is
`g * (1 + seasonal_amp * sin(2 pi t / 7) * (1 + noise_amp * eps))` with
stationary AR(1) noise `eps`, and spend is a noisy linear or squared function
of response.
"""
import math
from dataclasses import dataclass, field
from datetime import timedelta
from typing import Any, Dict, Tuple

import numpy as np
from scipy.signal import lfilter
from scipy.stats import norm

from application.services.seeding import geo_rng
from domain.entities import GeoPanel, SynthConfig
import logging

logger = logging.getLogger(__name__)


def geo_sizes(cfg: SynthConfig) -> np.ndarray:
    """size_scale * exp(mu + sigma * Phi^-1(i / (N + 1))), i = 1..N"""
    quantiles = norm.ppf(np.arange(1, cfg.n_geos + 1) / (cfg.n_geos + 1))
    return cfg.size_scale * np.exp(cfg.lognormal_mu + cfg.lognormal_sigma * quantiles)


def geo_ids(n_geos: int) -> Tuple[str, ...]:
    width = max(3, len(str(n_geos)))
    return tuple(f"geo_{i:0{width}d}" for i in range(1, n_geos + 1))


def _ar1_noise(rng: np.random.Generator, n_days: int, ar_coef: float) -> np.ndarray:
    # eps(-1) from the stationary law N(0, 1 / (1 - a^2))
    start = rng.normal(0.0, math.sqrt(1.0 / (1.0 - ar_coef**2)))
    shocks = rng.normal(0.0, 1.0, size=n_days)
    noise, _ = lfilter([1.0], [1.0, -ar_coef], shocks, zi=[ar_coef * start])
    return noise


@dataclass
class SyntheticPanelGenerator:
    cfg: SynthConfig
    provenance: Dict[str, Any] = field(default_factory=dict)

    def generate(self) -> GeoPanel:
        cfg = self.cfg
        sizes = geo_sizes(cfg)
        t = np.arange(cfg.n_days)
        weekly = np.sin(2 * np.pi * t / 7)

        response = np.empty((cfg.n_geos, cfg.n_days))
        uniform = np.empty((cfg.n_geos, cfg.n_days))
        for i in range(cfg.n_geos):
            rng = geo_rng(cfg.seed, i)
            eps = _ar1_noise(rng, cfg.n_days, cfg.ar_coef)
            response[i] = sizes[i] * (1 + cfg.seasonal_amp * weekly * (1 + cfg.noise_amp * eps))
            uniform[i] = rng.uniform(-1.0, 1.0, size=cfg.n_days)

        floored = int(np.sum(response < 0))
        if floored:
            logger.warning(f"Floored {floored} negative response cells at 0")
        response = np.maximum(response, 0.0)

        spend = cfg.spend_rate * response * (1 + cfg.spend_noise * uniform)
        scale = 1.0
        if cfg.proxy_power == 2:
            squared = response**2 * (1 + cfg.spend_noise * uniform)
            total = squared.sum()
            scale = float(spend.sum() / total) if total > 0 else 0.0
            spend = squared * scale
        spend = np.maximum(spend, 0.0)

        self.provenance = {
            "floored_cells": floored,
            "ar1_start": "stationary",
            "proxy_power": cfg.proxy_power,
            "squared_proxy_scale": scale if cfg.proxy_power == 2 else None,
            "config": cfg.model_dump(mode="json"),
        }
        dates = tuple(cfg.start_date + timedelta(days=d) for d in range(cfg.n_days))
        return GeoPanel(geos=geo_ids(cfg.n_geos), dates=dates, response=response, spend=spend)


def generate_panel(cfg: SynthConfig) -> GeoPanel:
    return SyntheticPanelGenerator(cfg).generate()
