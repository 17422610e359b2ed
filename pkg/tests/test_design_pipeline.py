"""Design workflow: candidate table, selection, final assignment and the comparison helpers."""
import math

import numpy as np
import pytest

from application.services.periods import split_periods
from application.services.selection import feasible_rows, rmse_bound, select_candidate
from application.use_cases.design_uc import (
    DRIFT_CAVEAT,
    DesignUseCase,
    compare_pairing_methods,
    holdout_rmse,
    replicate_balance,
    run_design,
)
from application.use_cases.rmse_curve_uc import RmseCurveUseCase, expected_rmse_curve_fixture
from config.settings import settings
from domain.entities import BalanceConfig, DesignConfig, DesignEvaluation, SynthConfig
from domain.exceptions import InsufficientDataError, MissingSpendError, PairCountError
from domain.value_objects import EvaluationMode, PairingMethod, SpendProxySource
from infrastructure.monitoring.run_monitor import RunEventType, RunMonitor

from conftest import make_panel


def row(n, rmse, b2b=0.01, invalid=False):
    return DesignEvaluation(
        n=n, rmse=rmse, theta0=2.5 * rmse, budget_to_baseline=b2b, replicates=10, seed=0, invalid=invalid
    )


class TestSelection:
    def test_minimal_rmse(self):
        cfg = DesignConfig(budget=1.0)
        assert select_candidate([row(4, 2.0), row(5, 1.0), row(6, 1.5)], cfg) == 5

    def test_ties_prefer_larger_n(self):
        cfg = DesignConfig(budget=1.0)
        assert select_candidate([row(4, 1.0), row(6, 1.0), row(5, 1.0, b2b=0.001)], cfg) == 6

    def test_invalid_rows_skipped(self):
        cfg = DesignConfig(budget=1.0)
        assert select_candidate([row(4, 0.5, invalid=True), row(5, 1.0)], cfg) == 5

    def test_budget_constraint(self):
        cfg = DesignConfig(budget=1.0, max_budget_to_baseline=0.02)
        rows = [row(4, 0.5, b2b=0.05), row(5, 1.0, b2b=0.01)]
        assert [r.n for r in feasible_rows(rows, cfg)] == [5]
        assert select_candidate(rows, cfg) == 5

    def test_rmse_bound(self):
        cfg = DesignConfig(budget=1.0, theta0_target=2.5631, alpha=0.10, beta=0.90)
        assert rmse_bound(cfg) == pytest.approx(1.0, abs=1e-3)
        assert rmse_bound(DesignConfig(budget=1.0)) is None
        assert select_candidate([row(4, 1.2), row(5, 1.1)], cfg) is None

    def test_replicate_threshold_follows_bound(self):
        cfg = DesignConfig(budget=1.0, theta0_target=2.5631)
        balance = replicate_balance(cfg)
        assert balance.max_abs_sim_iroas == pytest.approx(settings.SIM_IROAS_RMSE_FRACTION, rel=1e-3)
        assert replicate_balance(DesignConfig(budget=1.0)).max_abs_sim_iroas is None
        explicit = DesignConfig(budget=1.0, theta0_target=2.0, balance=BalanceConfig(max_abs_sim_iroas=3.0))
        assert replicate_balance(explicit).max_abs_sim_iroas == 3.0


class TestDesignUseCase:
    def test_candidate_table_and_final_design(self, small_synth_panel, small_design_config):
        outcome = DesignUseCase().execute(small_synth_panel, small_design_config)
        table = outcome.table
        assert [r.n for r in table.rows] == [4, 5, 6]
        assert outcome.feasible
        assert table.chosen_n == min(table.rows, key=lambda r: (r.rmse, -r.n)).n
        for r in table.rows:
            assert r.replicates == 30
            assert r.theta0 == pytest.approx(2.5631 * r.rmse, rel=1e-3)

        final = outcome.final
        assert final.pairs.n == table.chosen_n
        assert final.assignment.n == table.chosen_n
        assert final.evaluation == table.row(table.chosen_n)
        assert final.provenance["drift_adjusted"] is False
        assert final.provenance["evaluation_mode"] == "cross_validated"
        assert 0.0 <= final.provenance["rerandomization"]["acceptance_rate"] <= 1.0

    def test_periods_do_not_overlap(self, small_synth_panel, small_design_config):
        outcome = DesignUseCase(assign_final=False).execute(small_synth_panel, small_design_config)
        assert not outcome.split.pairing_period.overlaps(outcome.evaluation_window)
        assert outcome.final is None

    def test_in_sample_window_inside_pairing_period(self, small_synth_panel, small_design_config):
        cfg = small_design_config.model_copy(update={"evaluation_mode": EvaluationMode.IN_SAMPLE})
        outcome = DesignUseCase(assign_final=False).execute(small_synth_panel, cfg)
        pairing = outcome.split.pairing_period
        assert outcome.evaluation_window.end == pairing.end
        assert pairing.contains(outcome.evaluation_window.start)

    def test_deterministic_across_workers(self, small_synth_panel, small_design_config):
        table_1, final_1 = run_design(small_synth_panel, small_design_config, workers=1)
        table_2, final_2 = run_design(small_synth_panel, small_design_config, workers=2)
        assert table_1 == table_2
        assert final_1.assignment == final_2.assignment
        assert final_1.pairs == final_2.pairs

    def test_infeasible_target(self, small_synth_panel, small_design_config):
        cfg = small_design_config.model_copy(
            update={"theta0_target": 1e-9, "balance": BalanceConfig(max_abs_sim_iroas=1e12)}
        )
        outcome = DesignUseCase().execute(small_synth_panel, cfg)
        assert not outcome.feasible
        assert outcome.final is None
        assert len(outcome.table.rows) == 3
        assert any("No candidate" in w for w in outcome.warnings)

    def test_grid_beyond_half_the_geos(self, small_synth_panel, small_design_config):
        cfg = small_design_config.model_copy(update={"n_grid": [5, 7]})
        with pytest.raises(PairCountError):
            DesignUseCase().execute(small_synth_panel, cfg)

    def test_small_n_warning(self, small_synth_panel, small_design_config):
        outcome = DesignUseCase(assign_final=False).execute(small_synth_panel, small_design_config)
        assert any(f"n < {settings.MIN_RECOMMENDED_PAIRS}" in w for w in outcome.warnings)

    def test_missing_spend(self, small_synth_panel, small_design_config):
        spendless = make_panel(small_synth_panel.response, start=small_synth_panel.dates[0], geos=list(small_synth_panel.geos))
        with pytest.raises(MissingSpendError):
            DesignUseCase().execute(spendless, small_design_config)
        cfg = small_design_config.model_copy(update={"spend_proxy_source": SpendProxySource.RESPONSE})
        outcome = DesignUseCase(assign_final=False).execute(spendless, cfg)
        assert len(outcome.table.rows) == 3

    def test_zero_response_geo_reported(self, small_synth_panel, small_design_config):
        response = np.array(small_synth_panel.response)
        response[0] = 0.0
        panel = make_panel(response, start=small_synth_panel.dates[0], spend=small_synth_panel.spend, geos=list(small_synth_panel.geos))
        outcome = DesignUseCase(assign_final=False).execute(panel, small_design_config)
        assert outcome.zero_response_geos == [panel.geos[0]]

    def test_short_panel(self, small_design_config):
        panel = make_panel(np.ones((12, 15)), spend=np.ones((12, 15)))
        with pytest.raises(InsufficientDataError):
            DesignUseCase().execute(panel, small_design_config)

    def test_stages_recorded(self, small_synth_panel, small_design_config):
        monitor = RunMonitor()
        DesignUseCase(monitor=monitor).execute(small_synth_panel, small_design_config, run_id="run_test")
        ends = [e.stage for e in monitor.events if e.event_type == RunEventType.STAGE_END]
        assert ends == [
            "split_periods",
            "build_distances",
            "build_candidates",
            "evaluate_candidates",
            "select_candidate",
            "assign",
        ]

    def test_runs_without_id_leave_no_events(self, small_synth_panel, small_design_config):
        monitor = RunMonitor()
        DesignUseCase(monitor=monitor, assign_final=False).execute(small_synth_panel, small_design_config)
        assert monitor.events == []

    def test_failed_run_without_id_leaves_no_events(self, small_design_config):
        monitor = RunMonitor()
        panel = make_panel(np.ones((12, 15)), spend=np.ones((12, 15)))
        with pytest.raises(InsufficientDataError):
            DesignUseCase(monitor=monitor).execute(panel, small_design_config)
        assert monitor.events == []

    def test_theta0_verification_rows(self, small_synth_panel, small_design_config):
        cfg = small_design_config.model_copy(
            update={"theta0_target": 50.0, "verify_at_theta0": True, "balance": BalanceConfig(max_abs_sim_iroas=1e12)}
        )
        outcome = DesignUseCase(assign_final=False).execute(small_synth_panel, cfg)
        assert [r.theta for r in outcome.theta0_rows] == [50.0] * 3

    def test_drift_caveat_text(self):
        assert "not adjusted" in DRIFT_CAVEAT


class TestComparisons:
    def test_rank_over_optimal(self, small_synth_panel, small_design_config):
        rows = compare_pairing_methods(small_synth_panel, small_design_config)
        assert [r.n for r in rows] == [4, 5, 6]
        for r in rows:
            if r.rmse_optimal > 0:
                assert r.ratio == pytest.approx(r.rmse_rank / r.rmse_optimal)

    def test_rank_method_in_design(self, small_synth_panel, small_design_config):
        cfg = small_design_config.model_copy(update={"pairing_method": PairingMethod.RANK})
        outcome = DesignUseCase(assign_final=False).execute(small_synth_panel, cfg)
        assert len(outcome.table.rows) == 3

    def test_holdout(self, small_synth_panel, small_design_config):
        test_start = small_synth_panel.dates[21]
        result = holdout_rmse(small_synth_panel, small_design_config, test_start)
        assert result.n in (4, 5, 6)
        assert math.isfinite(result.rmse)

    def test_holdout_window_past_panel(self, small_synth_panel, small_design_config):
        with pytest.raises(InsufficientDataError):
            holdout_rmse(small_synth_panel, small_design_config, small_synth_panel.dates[30])


class TestRmseCurve:
    def test_tidy_table(self):
        synth = SynthConfig(n_geos=12, n_days=35)
        design = DesignConfig(budget=1e4, n_grid=[4, 6], replicates=10)
        curve = expected_rmse_curve_fixture(synth, design, seeds=[1, 2], series=("cv", "in_sample"))
        assert list(curve.columns) == ["n", "rmse", "series"]
        assert list(curve["series"]) == ["cv", "cv", "in_sample", "in_sample"]
        assert list(curve["n"]) == [4, 6, 4, 6]
        assert (curve["rmse"] >= 0).all()

    def test_identical_series_share_results(self):
        synth = SynthConfig(n_geos=12, n_days=35)
        design = DesignConfig(budget=1e4, n_grid=[5], replicates=10)
        curve = RmseCurveUseCase().execute(synth, design, seeds=[3], series=("cv", "trimmed"))
        assert curve["rmse"].iloc[0] == curve["rmse"].iloc[1]

    def test_unknown_series(self):
        with pytest.raises(ValueError):
            RmseCurveUseCase().execute(SynthConfig(n_geos=12, n_days=35), DesignConfig(budget=1.0), [0], ["weekly"])

    def test_split_helper_matches_use_case(self, small_synth_panel, small_design_config):
        outcome = DesignUseCase(assign_final=False).execute(small_synth_panel, small_design_config)
        assert outcome.split == split_periods(small_synth_panel, 14, 7)
