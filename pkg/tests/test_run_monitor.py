"""Stage timeline, decisions and the run manifest."""
import json

import pytest

from domain.exceptions import PairCountError
from infrastructure.monitoring import RunEventType, RunMonitor, run_monitor
from interface.cli import RunRecorder, error_report


class TestRunMonitor:
    def test_stage_events(self):
        monitor = RunMonitor()
        with monitor.track_stage("r1", "split_periods", {"eval_days": 14}):
            pass
        monitor.log_decision("r1", "select_candidate", "chosen_n", {"chosen_n": 5}, "chose n=5")
        timeline = monitor.get_execution_timeline("r1")
        assert [e["event_type"] for e in timeline] == ["stage_start", "stage_end", "decision_made"]
        assert timeline[0]["input_data"] == {"eval_days": 14}
        assert timeline[2]["output_data"] == {"chosen_n": 5}
        json.dumps(timeline)

    def test_failure_recorded_and_reraised(self):
        monitor = RunMonitor()
        with pytest.raises(PairCountError):
            with monitor.track_stage("r2", "build_candidates"):
                raise PairCountError("too many pairs")
        errors = [e for e in monitor.events if e.event_type == RunEventType.ERROR_OCCURRED]
        assert errors[0].metadata["category"] == "pair_count"
        stats = monitor.get_stage_performance_stats("r2")
        assert stats["build_candidates"]["failures"] == 1

    def test_runs_are_separate(self):
        monitor = RunMonitor()
        with monitor.track_stage("a", "assign"):
            pass
        assert monitor.get_execution_timeline("b") == []

    def test_clear_run_drops_only_that_run(self):
        monitor = RunMonitor()
        for run_id in ("a", "b"):
            with monitor.track_stage(run_id, "assign"):
                pass
        assert monitor.clear_run("a") == 2
        assert monitor.get_execution_timeline("a") == []
        assert len(monitor.get_execution_timeline("b")) == 2


class TestRunRecorder:
    def test_incomplete_until_done(self, tmp_path):
        source = tmp_path / "input.csv"
        source.write_text("x\n", encoding="utf-8")
        recorder = RunRecorder(
            command="estimate", out_dir=tmp_path / "out", effective_config={"k": 1}, run_id="r", input_paths=[source]
        )
        with recorder.running():
            manifest = json.loads(recorder.manifest_path.read_text(encoding="utf-8"))
            assert manifest["status"] == "incomplete"
            assert manifest["inputs"][str(source)]
            recorder.output("result", "result.txt").write_text("ok\n", encoding="utf-8")

        manifest = json.loads(recorder.manifest_path.read_text(encoding="utf-8"))
        assert manifest["status"] == "complete"
        assert set(manifest["output_sha256"]) == {"result"}
        assert manifest["finished_at"] is not None

    def test_failed_run(self, tmp_path):
        recorder = RunRecorder(command="pair", out_dir=tmp_path, effective_config={}, run_id="r")
        with pytest.raises(PairCountError):
            with recorder.running():
                raise PairCountError("n=7 exceeds 6")
        manifest = json.loads(recorder.manifest_path.read_text(encoding="utf-8"))
        assert manifest["status"] == "failed"
        assert manifest["error"] == {"category": "pair_count", "message": "n=7 exceeds 6"}

    def test_timeline_kept_in_manifest_and_dropped_from_monitor(self, tmp_path):
        recorder = RunRecorder(command="design", out_dir=tmp_path, effective_config={}, run_id="run_recorded")
        with recorder.running():
            with run_monitor.track_stage("run_recorded", "split_periods"):
                pass
        manifest = json.loads(recorder.manifest_path.read_text(encoding="utf-8"))
        assert [e["stage"] for e in manifest["timeline"]] == ["split_periods", "split_periods"]
        assert run_monitor.get_execution_timeline("run_recorded") == []

    def test_failed_run_also_dropped_from_monitor(self, tmp_path):
        recorder = RunRecorder(command="pair", out_dir=tmp_path, effective_config={}, run_id="run_failing")
        with pytest.raises(PairCountError):
            with recorder.running():
                with run_monitor.track_stage("run_failing", "build_candidates"):
                    raise PairCountError("n=9 exceeds 6")
        manifest = json.loads(recorder.manifest_path.read_text(encoding="utf-8"))
        assert manifest["timeline"][-1]["event_type"] == "error_occurred"
        assert run_monitor.get_execution_timeline("run_failing") == []

    @pytest.mark.parametrize(
        "error,category",
        [(ValueError("bad"), "invalid_input"), (FileNotFoundError("gone"), "io"), (RuntimeError("boom"), "internal")],
    )
    def test_error_categories(self, error, category):
        assert error_report(error).category == category
