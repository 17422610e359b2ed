import math
import uuid
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Any, Dict, List, Optional, Tuple

from joblib import Parallel, delayed
from langgraph.graph import END, StateGraph
from pydantic import BaseModel, ConfigDict, Field

from application.services.pairing import PairingStrategyFactory, distance_matrix, pairing_loss
from application.services.periods import (
    block_totals,
    in_sample_window,
    period_totals,
    split_periods,
    subset_panel,
    zero_response_geos,
)
from application.services.power_analysis import evaluate_rmse
from application.services.randomization import acceptance_rate, rerandomize
from application.services.seeding import assignment_rng, derive_seed, stream
from application.services.selection import rmse_bound, select_candidate
from application.services.spend_proxy import create_spend_proxy_provider
from config.settings import settings
from domain.entities import (
    Assignment,
    BalanceConfig,
    CandidateTable,
    DateRange,
    DesignConfig,
    DesignEvaluation,
    DistanceMatrix,
    EvalInputs,
    FinalDesign,
    GeoPanel,
    PairSet,
    PeriodSplit,
)
from domain.exceptions import InsufficientDataError, PairCountError
from domain.value_objects import EvaluationMode, MethodComparisonRow, PairingMethod
from infrastructure.monitoring import run_monitor
from infrastructure.monitoring.run_monitor import RunMonitor
import logging

logger = logging.getLogger(__name__)

DRIFT_CAVEAT = (
    "RMSE is measured on the evaluation window; systematic drift between that window "
    "and the test period is not adjusted for."
)
ACCEPTANCE_SAMPLES = 500


class DesignState(BaseModel):
    """State object for the design workflow graph"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    run_id: str
    panel: GeoPanel
    design_config: DesignConfig
    split: Optional[PeriodSplit] = None
    evaluation_window: Optional[DateRange] = None
    distances: Optional[DistanceMatrix] = None
    grid: List[int] = Field(default_factory=list)
    pair_sets: Dict[int, PairSet] = Field(default_factory=dict)
    rows: List[DesignEvaluation] = Field(default_factory=list)
    theta0_rows: List[DesignEvaluation] = Field(default_factory=list)
    chosen_n: Optional[int] = None
    final: Optional[FinalDesign] = None
    zero_response_geos: List[str] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)


@dataclass
class DesignOutcome:
    table: CandidateTable
    final: Optional[FinalDesign]
    split: PeriodSplit
    evaluation_window: DateRange
    pair_sets: Dict[int, PairSet]
    theta0_rows: List[DesignEvaluation] = field(default_factory=list)
    zero_response_geos: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    run_id: str = ""

    @property
    def feasible(self) -> bool:
        return self.table.chosen_n is not None


def replicate_balance(cfg: DesignConfig) -> BalanceConfig:
    """Balance checks inside Monte Carlo replicates.

    The sim-iROAS threshold defaults to a fraction of the RMSE bound implied by
    theta0_target; without a target that check is off.
    """
    if cfg.balance.max_abs_sim_iroas is not None:
        return cfg.balance
    bound = rmse_bound(cfg)
    threshold = None if bound is None else settings.SIM_IROAS_RMSE_FRACTION * bound
    return cfg.balance.with_threshold(threshold)


def final_balance(cfg: DesignConfig, rmse: float) -> BalanceConfig:
    if cfg.balance.max_abs_sim_iroas is not None:
        return cfg.balance
    return cfg.balance.with_threshold(settings.SIM_IROAS_RMSE_FRACTION * rmse)


def candidate_inputs(
    panel: GeoPanel, window: DateRange, cfg: DesignConfig, pairs: PairSet, theta: float = 0.0
) -> EvalInputs:
    """Evaluation inputs for one candidate: baselines and proxies are totals over `window`"""
    geos = pairs.paired_geos
    return EvalInputs(
        pairs=pairs,
        baseline_response=period_totals(panel, geos, window),
        spend_proxy=create_spend_proxy_provider(cfg.spend_proxy_source).proxies(panel, window, geos),
        budget=cfg.budget,
        theta=theta,
        replicates=cfg.replicates,
        trim_spec=cfg.trim_spec,
        seed=derive_seed(cfg.seed, pairs.n),
        balance=replicate_balance(cfg),
    )


def _evaluate_candidate(panel: GeoPanel, window: DateRange, cfg: DesignConfig, pairs: PairSet, theta: float):
    inputs = candidate_inputs(panel, window, cfg, pairs, theta)
    return evaluate_rmse(inputs, cfg.alpha, cfg.beta, pairing_loss=pairing_loss(pairs).l1_total)


@dataclass
class DesignUseCase:
    """Runs the design procedure as a graph: split, distances, candidate pairs,
    evaluation, selection and (when a candidate is feasible) assignment"""

    workers: int = 1
    assign_final: bool = True
    monitor: RunMonitor = field(default_factory=lambda: run_monitor)

    def __post_init__(self):
        self.graph = self._build_graph()

    def _build_graph(self):
        workflow = StateGraph(DesignState)

        workflow.add_node("split_periods", self.split_periods)
        workflow.add_node("build_distances", self.build_distances)
        workflow.add_node("build_candidates", self.build_candidates)
        workflow.add_node("evaluate_candidates", self.evaluate_candidates)
        workflow.add_node("select_candidate", self.select_candidate)
        workflow.add_node("assign", self.assign)

        workflow.set_entry_point("split_periods")
        workflow.add_edge("split_periods", "build_distances")
        workflow.add_edge("build_distances", "build_candidates")
        workflow.add_edge("build_candidates", "evaluate_candidates")
        workflow.add_edge("evaluate_candidates", "select_candidate")
        workflow.add_conditional_edges(
            "select_candidate",
            self.should_assign,
            {"assign": "assign", "stop": END},
        )
        workflow.add_edge("assign", END)

        return workflow.compile()

    def execute(self, panel: GeoPanel, cfg: DesignConfig, run_id: Optional[str] = None) -> DesignOutcome:
        # auto-generated runs are not kept in the monitor
        transient = run_id is None
        run_id = run_id or f"run_{uuid.uuid4().hex[:12]}"
        try:
            result = self.graph.invoke(DesignState(run_id=run_id, panel=panel, design_config=cfg))
        finally:
            if transient:
                self.monitor.clear_run(run_id)
        state = result if isinstance(result, DesignState) else DesignState(**result)
        return DesignOutcome(
            table=CandidateTable(rows=state.rows, chosen_n=state.chosen_n),
            final=state.final,
            split=state.split,
            evaluation_window=state.evaluation_window,
            pair_sets=state.pair_sets,
            theta0_rows=state.theta0_rows,
            zero_response_geos=state.zero_response_geos,
            warnings=state.warnings,
            run_id=run_id,
        )

    def split_periods(self, state: DesignState) -> Dict[str, Any]:
        cfg = state.design_config
        with self.monitor.track_stage(state.run_id, "split_periods", {"eval_days": cfg.eval_days}):
            split = split_periods(state.panel, cfg.eval_days, cfg.block_length_days, cfg.evaluation_start)
            if cfg.evaluation_mode == EvaluationMode.IN_SAMPLE:
                window = in_sample_window(split, cfg.eval_days)
            else:
                window = split.evaluation_period

            warnings = list(state.warnings)
            zero_geos = zero_response_geos(state.panel, split.pairing_period)
            if zero_geos:
                message = f"{len(zero_geos)} geos have zero response throughout the pairing period"
                logger.warning(message)
                warnings.append(message)
                self.monitor.log_decision(state.run_id, "split_periods", "zero_response_geos", {"geos": zero_geos})

            return {
                "split": split,
                "evaluation_window": window,
                "zero_response_geos": zero_geos,
                "warnings": warnings,
            }

    def build_distances(self, state: DesignState) -> Dict[str, Any]:
        with self.monitor.track_stage(state.run_id, "build_distances", {"geos": state.panel.n_geos}):
            blocks = block_totals(state.panel, state.split.pairing_period, state.split.block_length_days)
            return {"distances": distance_matrix(blocks)}

    def build_candidates(self, state: DesignState) -> Dict[str, Any]:
        cfg = state.design_config
        with self.monitor.track_stage(state.run_id, "build_candidates", {"method": cfg.pairing_method.value}):
            n_geos = state.panel.n_geos
            grid = cfg.resolve_grid(n_geos)
            if not grid:
                raise PairCountError(f"No pair count is feasible for {n_geos} geos")
            too_large = [n for n in grid if n > n_geos // 2]
            if too_large:
                raise PairCountError(f"n_grid values {too_large} exceed {n_geos // 2} for {n_geos} geos")

            warnings = list(state.warnings)
            small = [n for n in grid if n < settings.MIN_RECOMMENDED_PAIRS]
            if small:
                message = f"n_grid contains n < {settings.MIN_RECOMMENDED_PAIRS}: {small}; inference may be unreliable"
                logger.warning(message)
                warnings.append(message)

            strategy = PairingStrategyFactory.create_strategy(cfg.pairing_method, cfg.block_length_days)
            pair_sets = {
                n: strategy.pair(state.panel, state.split.pairing_period, state.distances, n) for n in grid
            }
            return {"grid": grid, "pair_sets": pair_sets, "warnings": warnings}

    def evaluate_candidates(self, state: DesignState) -> Dict[str, Any]:
        cfg = state.design_config
        with self.monitor.track_stage(state.run_id, "evaluate_candidates", {"candidates": len(state.grid)}):
            rows = self._evaluate_all(state, theta=0.0)
            theta0_rows: List[DesignEvaluation] = []
            if cfg.verify_at_theta0 and cfg.theta0_target is not None:
                theta0_rows = self._evaluate_all(state, theta=cfg.theta0_target)

            warnings = list(state.warnings)
            invalid = [r.n for r in rows if r.invalid]
            if invalid:
                warnings.append(f"Candidates with more than 1% failed replicates: {invalid}")
            cap_hits = sum(r.redraw_cap_hits for r in rows)
            if cap_hits:
                warnings.append(f"Redraw cap reached in {cap_hits} replicates across candidates")
            return {"rows": rows, "theta0_rows": theta0_rows, "warnings": warnings}

    def _evaluate_all(self, state: DesignState, theta: float) -> List[DesignEvaluation]:
        jobs = (
            delayed(_evaluate_candidate)(state.panel, state.evaluation_window, state.design_config, state.pair_sets[n], theta)
            for n in state.grid
        )
        return list(Parallel(n_jobs=max(1, self.workers))(jobs))

    def select_candidate(self, state: DesignState) -> Dict[str, Any]:
        cfg = state.design_config
        with self.monitor.track_stage(state.run_id, "select_candidate", {"rows": len(state.rows)}):
            chosen = select_candidate(state.rows, cfg)
            warnings = list(state.warnings)
            if chosen is None:
                message = "No candidate satisfies the RMSE and budget constraints"
                logger.warning(message)
                warnings.append(message)
            self.monitor.log_decision(
                state.run_id,
                "select_candidate",
                "chosen_n",
                {"chosen_n": chosen, "rmse_bound": rmse_bound(cfg)},
                f"chose n={chosen}" if chosen is not None else "no feasible candidate",
            )
            return {"chosen_n": chosen, "warnings": warnings}

    def should_assign(self, state: DesignState) -> str:
        return "assign" if self.assign_final and state.chosen_n is not None else "stop"

    def assign(self, state: DesignState) -> Dict[str, Any]:
        cfg = state.design_config
        n = state.chosen_n
        with self.monitor.track_stage(state.run_id, "assign", {"n": n}):
            pairs = state.pair_sets[n]
            row = next(r for r in state.rows if r.n == n)
            inputs = candidate_inputs(state.panel, state.evaluation_window, cfg, pairs)
            balance = final_balance(cfg, row.rmse)
            result = rerandomize(
                pairs,
                inputs.baseline_response,
                inputs.spend_proxy,
                cfg.budget,
                balance,
                assignment_rng(cfg.seed, n),
                trim_spec=cfg.trim_spec,
            )
            accepted = acceptance_rate(
                pairs,
                inputs.baseline_response,
                inputs.spend_proxy,
                cfg.budget,
                balance,
                cfg.trim_spec,
                rng=stream(cfg.seed, n, 2),
                samples=ACCEPTANCE_SAMPLES,
            )
            warnings = list(state.warnings)
            if result.cap_hit:
                warnings.append(f"Final assignment kept after {result.attempts} draws without passing balance checks")
            self.monitor.log_decision(
                state.run_id,
                "assign",
                "rerandomization",
                {"attempts": result.attempts, "cap_hit": result.cap_hit, "acceptance_rate": accepted},
            )

            final = FinalDesign(
                pairs=pairs,
                assignment=Assignment(arms=result.arms),
                evaluation=row,
                provenance={
                    "seed": cfg.seed,
                    "config": cfg.model_dump(mode="json"),
                    "pairing_period": _range_json(state.split.pairing_period),
                    "evaluation_period": _range_json(state.split.evaluation_period),
                    "evaluation_window": _range_json(state.evaluation_window),
                    "evaluation_mode": cfg.evaluation_mode.value,
                    "spend_proxy_source": cfg.spend_proxy_source.value,
                    "rerandomization": {
                        "attempts": result.attempts,
                        "cap_hit": result.cap_hit,
                        "sign_test_p": result.sign_check.statistic if result.sign_check else None,
                        "sim_iroas": result.sim_iroas_check.statistic if result.sim_iroas_check else None,
                        "sim_iroas_threshold": balance.max_abs_sim_iroas,
                        "acceptance_rate": accepted,
                    },
                    "zero_response_geos": state.zero_response_geos,
                    "drift_adjusted": False,
                },
            )
            return {"final": final, "warnings": warnings}


def _range_json(period: DateRange) -> Dict[str, str]:
    return {"start": period.start.isoformat(), "end": period.end.isoformat()}


def run_design(panel: GeoPanel, cfg: DesignConfig, workers: int = 1) -> Tuple[CandidateTable, Optional[FinalDesign]]:
    outcome = DesignUseCase(workers=workers).execute(panel, cfg)
    return outcome.table, outcome.final


def compare_pairing_methods(panel: GeoPanel, cfg: DesignConfig, workers: int = 1) -> List[MethodComparisonRow]:
    """Per-n RMSE of rank pairing over optimal pairing, both evaluated with the same seed"""
    use_case = DesignUseCase(workers=workers, assign_final=False)
    tables = {
        method: use_case.execute(panel, cfg.model_copy(update={"pairing_method": method})).table
        for method in (PairingMethod.OPTIMAL, PairingMethod.RANK)
    }
    rows = []
    for optimal in tables[PairingMethod.OPTIMAL].rows:
        rank = tables[PairingMethod.RANK].row(optimal.n)
        if optimal.rmse > 0:
            ratio = rank.rmse / optimal.rmse
        else:
            ratio = 1.0 if rank.rmse == 0 else math.inf
        rows.append(MethodComparisonRow(n=optimal.n, rmse_optimal=optimal.rmse, rmse_rank=rank.rmse, ratio=ratio))
    return rows


def holdout_rmse(
    panel: GeoPanel, cfg: DesignConfig, test_start: date, workers: int = 1
) -> Optional[DesignEvaluation]:
    """Design on data before `test_start`, then measure the chosen pairs on the
    `eval_days` starting at `test_start`; None when no candidate is feasible"""
    if not panel.dates[0] < test_start <= panel.dates[-1]:
        raise InsufficientDataError(f"Test start {test_start} must fall inside the panel after its first day")
    test_window = DateRange(start=test_start, end=test_start + timedelta(days=cfg.eval_days - 1))
    if test_window.end > panel.dates[-1]:
        raise InsufficientDataError(f"Test window {test_window.start}..{test_window.end} runs past the panel")

    pretest = subset_panel(panel, DateRange(start=panel.dates[0], end=test_start - timedelta(days=1)))
    outcome = DesignUseCase(workers=workers, assign_final=False).execute(pretest, cfg)
    if outcome.table.chosen_n is None:
        return None
    pairs = outcome.pair_sets[outcome.table.chosen_n]
    return _evaluate_candidate(panel, test_window, cfg, pairs, 0.0)
