"""Command implementations behind `main.py`.

Every command reads its inputs, builds an effective config (file values
overridden by flags), records a manifest and writes byte-deterministic
outputs into `--out`. Commands return the process exit code.
"""
import argparse
import uuid
from pathlib import Path
from typing import Any, Dict, List, Optional

from application.services.pairing import PairingStrategyFactory, pair_distance_matrix, pairing_loss
from application.services.periods import in_sample_window, split_periods
from application.services.power_analysis import evaluate_rmse
from application.services.selection import rmse_bound
from application.services.trimmed_match import estimate
from application.use_cases.design_uc import (
    DRIFT_CAVEAT,
    DesignOutcome,
    DesignUseCase,
    candidate_inputs,
    compare_pairing_methods,
)
from application.use_cases.rmse_curve_uc import expected_rmse_curve_fixture
from config.settings import load_run_config, settings
from domain.entities import (
    CandidateTable,
    DateRange,
    DesignConfig,
    GeoPanel,
    PairingConfig,
    PeriodSplit,
    SynthConfig,
    TrimSpec,
)
from domain.value_objects import EvaluationMode
from infrastructure import create_panel_repository, create_synthetic_generator
from infrastructure.data.records_io import (
    load_experiment_csv,
    read_pairs_csv,
    write_assignment_csv,
    write_candidates_csv,
    write_comparison_csv,
    write_json,
    write_pairs_csv,
    write_tidy_csv,
)
from interface.cli.run_recorder import RunRecorder
from interface.schemas import ChosenDesignReport, DesignReport, EstimateReport, EvaluateReport, PeriodReport
import logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3


def _sections(args: argparse.Namespace) -> Dict[str, Any]:
    return load_run_config(args.config) if getattr(args, "config", None) else {}


def design_config_from(args: argparse.Namespace, sections: Dict[str, Any]) -> DesignConfig:
    """Settings defaults, then the `design` section of the run config, then flags"""
    values: Dict[str, Any] = {
        "alpha": settings.DEFAULT_ALPHA,
        "beta": settings.DEFAULT_BETA,
        "replicates": settings.DEFAULT_REPLICATES,
        "seed": settings.DEFAULT_SEED,
        "block_length_days": settings.DEFAULT_BLOCK_LENGTH_DAYS,
        "eval_days": settings.DEFAULT_EVAL_DAYS,
        "trim_spec": {"max_trim_rate": settings.DESIGN_MAX_TRIM_RATE},
        "balance": {"sign_test_min_p": settings.SIGN_TEST_MIN_P, "max_redraws": settings.MAX_REDRAWS},
    }
    values.update(sections.get("design", {}))
    overrides = {
        "seed": getattr(args, "seed", None),
        "replicates": getattr(args, "replicates", None),
        "pairing_method": getattr(args, "method", None),
        "n_grid": getattr(args, "n", None),
        "budget": getattr(args, "budget", None),
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    return DesignConfig(**values)


PAIRING_KEYS = ("pairing_method", "block_length_days", "eval_days", "evaluation_start")


def pairing_config_from(args: argparse.Namespace, sections: Dict[str, Any]) -> PairingConfig:
    """Pairing keys of the `design` section, then flags; budget and power settings are ignored"""
    values: Dict[str, Any] = {
        "block_length_days": settings.DEFAULT_BLOCK_LENGTH_DAYS,
        "eval_days": settings.DEFAULT_EVAL_DAYS,
    }
    design = sections.get("design", {})
    values.update({k: design[k] for k in PAIRING_KEYS if k in design})
    if getattr(args, "method", None) is not None:
        values["pairing_method"] = args.method
    return PairingConfig(n=args.pair_count, **values)


def synth_config_from(args: argparse.Namespace, sections: Dict[str, Any]) -> SynthConfig:
    values = dict(sections.get("synthetic", {}))
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    return SynthConfig(**values)


def _recorder(
    command: str, args: argparse.Namespace, config: Dict[str, Any], seed: Optional[int], inputs: List[str]
) -> RunRecorder:
    paths = [Path(p) for p in inputs]
    if getattr(args, "config", None):
        paths.insert(0, Path(args.config))
    return RunRecorder(
        command=command,
        out_dir=Path(args.out),
        effective_config=config,
        run_id=f"{command}_{uuid.uuid4().hex[:12]}",
        seed=seed,
        input_paths=paths,
    )


def _period(period: DateRange) -> PeriodReport:
    return PeriodReport(start=period.start.isoformat(), end=period.end.isoformat(), days=period.days)


def _evaluation_window(split: PeriodSplit, cfg: DesignConfig) -> DateRange:
    if cfg.evaluation_mode == EvaluationMode.IN_SAMPLE:
        return in_sample_window(split, cfg.eval_days)
    return split.evaluation_period


def _load_panel(path: str) -> GeoPanel:
    return create_panel_repository().load(path)


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = synth_config_from(args, _sections(args))
    recorder = _recorder("simulate", args, {"synthetic": cfg.model_dump(mode="json")}, cfg.seed, [])
    with recorder.running():
        generator = create_synthetic_generator(cfg)
        panel = generator.generate()
        create_panel_repository().save(panel, recorder.output("pretest", "pretest.csv"))
        write_json(generator.provenance, recorder.output("synthetic_config", "synthetic_config.json"))
    return EXIT_OK


def cmd_pair(args: argparse.Namespace) -> int:
    cfg = pairing_config_from(args, _sections(args))
    recorder = _recorder("pair", args, {"pairing": cfg.model_dump(mode="json")}, None, [args.panel])
    with recorder.running():
        panel = _load_panel(args.panel)
        split = split_periods(panel, cfg.eval_days, cfg.block_length_days, cfg.evaluation_start)
        dm = pair_distance_matrix(panel, split.pairing_period, cfg.block_length_days)
        strategy = PairingStrategyFactory.create_strategy(cfg.pairing_method, cfg.block_length_days)
        pairs = strategy.pair(panel, split.pairing_period, dm, cfg.n)
        write_pairs_csv(pairs, recorder.output("pairs", "pairs.csv"))
        logger.info(f"Paired {2 * pairs.n} of {panel.n_geos} geos; L1 loss {pairing_loss(pairs).l1_total}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = design_config_from(args, _sections(args))
    recorder = _recorder(
        "evaluate", args, {"design": cfg.model_dump(mode="json")}, cfg.seed, [args.panel, args.pairs]
    )
    with recorder.running():
        panel = _load_panel(args.panel)
        paired = set(read_pairs_csv(args.pairs).paired_geos)
        for geo in sorted(paired):
            panel.geo_index(geo)
        pairs = read_pairs_csv(args.pairs, excluded_geos=[g for g in panel.geos if g not in paired])

        split = split_periods(panel, cfg.eval_days, cfg.block_length_days, cfg.evaluation_start)
        window = _evaluation_window(split, cfg)
        loss = pairing_loss(pairs).l1_total
        row = evaluate_rmse(candidate_inputs(panel, window, cfg, pairs), cfg.alpha, cfg.beta, args.workers, loss)
        theta0_row = None
        if cfg.verify_at_theta0 and cfg.theta0_target is not None:
            theta0_inputs = candidate_inputs(panel, window, cfg, pairs, cfg.theta0_target)
            theta0_row = evaluate_rmse(theta0_inputs, cfg.alpha, cfg.beta, args.workers, loss)

        write_candidates_csv(CandidateTable(rows=[row]), recorder.output("evaluation", "evaluation.csv"))
        report = EvaluateReport(evaluation=row, theta0_evaluation=theta0_row, evaluation_window=_period(window))
        write_json(report.model_dump(mode="json"), recorder.output("report", "evaluation.json"))
    return EXIT_OK


def design_report(outcome: DesignOutcome, cfg: DesignConfig) -> DesignReport:
    """Report paths are relative to the output directory so reruns elsewhere stay identical"""
    chosen = None
    if outcome.final is not None:
        final = outcome.final
        chosen = ChosenDesignReport(
            n=final.evaluation.n,
            evaluation=final.evaluation,
            pairs=final.pairs.pairs,
            arms=final.assignment.arms,
            pairs_path="pairs.csv",
            assignment_path="assignment.csv",
            rerandomization=final.provenance.get("rerandomization", {}),
        )
    return DesignReport(
        feasible=outcome.feasible,
        config=cfg.model_dump(mode="json"),
        pairing_period=_period(outcome.split.pairing_period),
        evaluation_period=_period(outcome.split.evaluation_period),
        evaluation_window=_period(outcome.evaluation_window),
        evaluation_mode=cfg.evaluation_mode.value,
        rmse_bound=rmse_bound(cfg),
        candidates=outcome.table.rows,
        theta0_candidates=outcome.theta0_rows,
        candidates_path="candidates.csv",
        chosen=chosen,
        zero_response_geos=outcome.zero_response_geos,
        warnings=outcome.warnings,
        drift_caveat=DRIFT_CAVEAT,
    )


def cmd_design(args: argparse.Namespace) -> int:
    cfg = design_config_from(args, _sections(args))
    recorder = _recorder("design", args, {"design": cfg.model_dump(mode="json")}, cfg.seed, [args.panel])
    with recorder.running():
        panel = _load_panel(args.panel)
        outcome = DesignUseCase(workers=args.workers).execute(panel, cfg, run_id=recorder.run_id)
        write_candidates_csv(outcome.table, recorder.output("candidates", "candidates.csv"))
        if outcome.final is not None:
            final = outcome.final
            write_pairs_csv(final.pairs, recorder.output("pairs", "pairs.csv"))
            write_assignment_csv(final.pairs, final.assignment, recorder.output("assignment", "assignment.csv"))
        write_json(design_report(outcome, cfg).model_dump(mode="json"), recorder.output("report", "report.json"))

    if not outcome.feasible:
        logger.warning("Design is infeasible under the configured constraints")
        return EXIT_INFEASIBLE
    return EXIT_OK


def trim_spec_from(args: argparse.Namespace, sections: Dict[str, Any]) -> TrimSpec:
    """Post-analysis trimming: settings default, then the `estimate` section, then flags"""
    values: Dict[str, Any] = {"max_trim_rate": settings.POST_ANALYSIS_MAX_TRIM_RATE}
    values.update(sections.get("estimate", {}))
    if getattr(args, "max_trim_rate", None) is not None:
        values["max_trim_rate"] = args.max_trim_rate
    if getattr(args, "trim_count", None) is not None:
        values["fixed_trim_count"] = args.trim_count
    return TrimSpec(**values)


def cmd_estimate(args: argparse.Namespace) -> int:
    spec = trim_spec_from(args, _sections(args))
    seed = settings.DEFAULT_SEED if args.seed is None else args.seed
    recorder = _recorder("estimate", args, {"trim_spec": spec.model_dump(mode="json")}, seed, [args.experiment])
    with recorder.running():
        data = load_experiment_csv(args.experiment)
        result = estimate(data, spec)
        report = EstimateReport(
            theta_hat=result.theta_hat,
            trim_count=result.trim_count,
            trimmed_pair_ids=result.trimmed_pair_ids,
            se_proxy=result.se_proxy,
            untrimmed_x_sum=result.untrimmed_x_sum,
            max_trim_rate=spec.max_trim_rate,
            n_pairs=data.n,
            criterion_by_trim_count=result.candidates,
        )
        write_json(report.model_dump(mode="json"), recorder.output("estimate", "estimate.json"))
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = design_config_from(args, _sections(args))
    recorder = _recorder("compare", args, {"design": cfg.model_dump(mode="json")}, cfg.seed, [args.panel])
    with recorder.running():
        panel = _load_panel(args.panel)
        rows = compare_pairing_methods(panel, cfg, workers=args.workers)
        write_comparison_csv(rows, recorder.output("comparison", "comparison.csv"))
    return EXIT_OK


def cmd_curve(args: argparse.Namespace) -> int:
    sections = _sections(args)
    synth = synth_config_from(args, sections)
    cfg = design_config_from(args, sections)
    seeds = list(range(cfg.seed, cfg.seed + args.n_seeds))
    effective = {
        "synthetic": synth.model_dump(mode="json"),
        "design": cfg.model_dump(mode="json"),
        "seeds": seeds,
        "series": list(args.series),
    }
    recorder = _recorder("curve", args, effective, cfg.seed, [])
    with recorder.running():
        frame = expected_rmse_curve_fixture(synth, cfg, seeds, args.series, workers=args.workers)
        write_tidy_csv(frame, recorder.output("rmse_curve", "rmse_curve.csv"))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "pair": cmd_pair,
    "evaluate": cmd_evaluate,
    "design": cmd_design,
    "estimate": cmd_estimate,
    "compare": cmd_compare,
    "curve": cmd_curve,
}
