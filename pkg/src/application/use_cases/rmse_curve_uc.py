import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

import pandas as pd

from application.use_cases.design_uc import DesignUseCase
from domain.entities import DesignConfig, SynthConfig, TrimSpec
from domain.value_objects import EvaluationMode
from infrastructure.synthetic import generate_panel
import logging

logger = logging.getLogger(__name__)

DEFAULT_SERIES = ("cv", "in_sample", "trimmed", "untrimmed")
OPTIONAL_SERIES = ("daily", "squared_proxy")


def _series_setup(name: str, synth: SynthConfig, design: DesignConfig) -> Tuple[SynthConfig, DesignConfig]:
    if name in ("cv", "trimmed"):
        return synth, design.model_copy(update={"evaluation_mode": EvaluationMode.CROSS_VALIDATED})
    if name == "in_sample":
        return synth, design.model_copy(update={"evaluation_mode": EvaluationMode.IN_SAMPLE})
    if name == "untrimmed":
        return synth, design.model_copy(
            update={"trim_spec": TrimSpec(max_trim_rate=0.0, fixed_trim_count=0), "evaluation_mode": EvaluationMode.CROSS_VALIDATED}
        )
    if name == "daily":
        return synth, design.model_copy(update={"block_length_days": 1, "evaluation_mode": EvaluationMode.CROSS_VALIDATED})
    if name == "squared_proxy":
        return synth.model_copy(update={"proxy_power": 2}), design.model_copy(
            update={"evaluation_mode": EvaluationMode.CROSS_VALIDATED}
        )
    raise ValueError(f"Unknown curve series: {name}")


@dataclass
class RmseCurveUseCase:
    """Mean candidate RMSE per n over synthetic panels, one column of results per series"""

    workers: int = 1

    def execute(
        self,
        synth: SynthConfig,
        design: DesignConfig,
        seeds: Sequence[int],
        series: Iterable[str] = DEFAULT_SERIES,
    ) -> pd.DataFrame:
        series = list(series)
        use_case = DesignUseCase(workers=self.workers, assign_final=False)
        sums: Dict[Tuple[str, int], List[float]] = {}
        for seed in seeds:
            cache: Dict[str, List] = {}
            for name in series:
                synth_cfg, design_cfg = _series_setup(name, synth.model_copy(update={"seed": seed}), design)
                design_cfg = design_cfg.model_copy(update={"seed": seed})
                key = f"{synth_cfg.model_dump_json()}|{design_cfg.model_dump_json()}"
                if key not in cache:
                    panel = generate_panel(synth_cfg)
                    cache[key] = use_case.execute(panel, design_cfg).table.rows
                for row in cache[key]:
                    sums.setdefault((name, row.n), []).append(row.rmse)
            logger.info(f"RMSE curve: seed {seed} done")

        records = [
            {"n": n, "rmse": math.fsum(values) / len(values), "series": name}
            for (name, n), values in sorted(sums.items(), key=lambda item: (item[0][0], item[0][1]))
        ]
        return pd.DataFrame(records, columns=["n", "rmse", "series"])


def expected_rmse_curve_fixture(
    synth: SynthConfig,
    design: DesignConfig,
    seeds: Sequence[int],
    series: Iterable[str] = DEFAULT_SERIES,
    workers: int = 1,
) -> pd.DataFrame:
    """Tidy `n,rmse,series` reference table of mean RMSE per n"""
    return RmseCurveUseCase(workers=workers).execute(synth, design, seeds, series)
