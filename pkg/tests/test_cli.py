"""Command-line surface: exit codes, manifests and byte-identical outputs."""
import json

import pytest

from interface.cli import EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK
from main import build_parser, main

DESIGN = {"budget": 10000.0, "n_grid": [4, 5, 6], "replicates": 20, "seed": 3}
SYNTHETIC = {"n_geos": 12, "n_days": 35, "seed": 7}


def write_config(path, design=None, synthetic=None, **extra):
    payload = {"design": design or DESIGN, "synthetic": synthetic or SYNTHETIC}
    payload.update(extra)
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def read_json(path):
    return json.loads(path.read_text(encoding="utf-8"))


def last_error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def pretest(tmp_path_factory):
    root = tmp_path_factory.mktemp("pretest")
    config = write_config(root / "run.json")
    assert main(["simulate", "--config", config, "--out", str(root / "sim")]) == EXIT_OK
    return {"config": config, "panel": str(root / "sim" / "pretest.csv"), "root": root}


class TestSimulate:
    def test_same_seed_same_bytes(self, tmp_path, pretest):
        out = tmp_path / "again"
        assert main(["simulate", "--config", pretest["config"], "--out", str(out)]) == EXIT_OK
        first = pretest["root"] / "sim"
        assert (out / "pretest.csv").read_bytes() == (first / "pretest.csv").read_bytes()
        assert (out / "synthetic_config.json").read_bytes() == (first / "synthetic_config.json").read_bytes()

        manifest = read_json(out / "manifest.json")
        assert manifest["status"] == "complete"
        assert manifest["seed"] == 7
        assert manifest["output_sha256"] == read_json(first / "manifest.json")["output_sha256"]

    def test_seed_flag_overrides_config(self, tmp_path, pretest):
        out = tmp_path / "seed8"
        assert main(["simulate", "--config", pretest["config"], "--seed", "8", "--out", str(out)]) == EXIT_OK
        assert read_json(out / "manifest.json")["effective_config"]["synthetic"]["seed"] == 8
        assert (out / "pretest.csv").read_bytes() != (pretest["root"] / "sim" / "pretest.csv").read_bytes()


class TestEstimate:
    def test_worked_example(self, tmp_path):
        experiment = tmp_path / "experiment.csv"
        experiment.write_text("pair_id,x,y\n1,2,10\n2,3,20\n3,5,30\n4,2,1000\n", encoding="utf-8")
        out = tmp_path / "est"
        assert main(["estimate", "--experiment", str(experiment), "--out", str(out)]) == EXIT_OK

        report = read_json(out / "estimate.json")
        assert report["theta_hat"] == pytest.approx(6.25)
        assert report["trim_count"] == 1
        assert report["trimmed_pair_ids"] == [1, 4]
        assert report["max_trim_rate"] == 0.25
        assert read_json(out / "manifest.json")["status"] == "complete"

    def test_config_seed_and_workers(self, tmp_path):
        experiment = tmp_path / "experiment.csv"
        experiment.write_text("pair_id,x,y\n1,2,10\n2,3,20\n3,5,30\n4,2,1000\n", encoding="utf-8")
        config = write_config(tmp_path / "run.json", estimate={"max_trim_rate": 0.0})
        out = tmp_path / "est"
        code = main(
            ["estimate", "--config", config, "--experiment", str(experiment), "--out", str(out), "--seed", "11", "--workers", "2"]
        )
        assert code == EXIT_OK
        assert read_json(out / "estimate.json")["theta_hat"] == pytest.approx(1060.0 / 12.0)
        manifest = read_json(out / "manifest.json")
        assert manifest["seed"] == 11
        assert manifest["effective_config"]["trim_spec"]["max_trim_rate"] == 0.0
        assert config in manifest["inputs"]

    def test_flag_overrides_config_trim_rate(self, tmp_path):
        experiment = tmp_path / "experiment.csv"
        experiment.write_text("pair_id,x,y\n1,2,10\n2,3,20\n3,5,30\n4,2,1000\n", encoding="utf-8")
        config = write_config(tmp_path / "run.json", estimate={"max_trim_rate": 0.0})
        out = tmp_path / "est"
        code = main(["estimate", "--config", config, "--experiment", str(experiment), "--out", str(out), "--max-trim-rate", "0.25"])
        assert code == EXIT_OK
        assert read_json(out / "estimate.json")["theta_hat"] == pytest.approx(6.25)

    def test_malformed_row(self, tmp_path, capsys):
        experiment = tmp_path / "experiment.csv"
        experiment.write_text("pair_id,x,y\n1,2,10\n2,abc,20\n", encoding="utf-8")
        out = tmp_path / "est"
        assert main(["estimate", "--experiment", str(experiment), "--out", str(out)]) == EXIT_ERROR

        error = last_error(capsys)
        assert error["category"] == "record_parse"
        assert "row 3" in error["message"]
        manifest = read_json(out / "manifest.json")
        assert manifest["status"] == "failed"
        assert manifest["error"]["category"] == "record_parse"
        assert not (out / "estimate.json").exists()

    def test_no_spend_signal(self, tmp_path, capsys):
        experiment = tmp_path / "experiment.csv"
        experiment.write_text("pair_id,x,y\n1,0,10\n2,0,20\n", encoding="utf-8")
        assert main(["estimate", "--experiment", str(experiment), "--out", str(tmp_path / "est")]) == EXIT_ERROR
        assert last_error(capsys)["category"] == "no_spend_signal"


class TestDesign:
    def test_outputs_identical_across_workers_and_directories(self, tmp_path, pretest):
        runs = []
        for workers in ("1", "2"):
            out = tmp_path / f"design_{workers}"
            code = main(
                ["design", "--config", pretest["config"], "--panel", pretest["panel"], "--out", str(out), "--workers", workers]
            )
            assert code == EXIT_OK
            runs.append(out)

        for name in ("candidates.csv", "pairs.csv", "assignment.csv", "report.json"):
            assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes()

        report = read_json(runs[0] / "report.json")
        assert report["feasible"] is True
        assert report["chosen"]["pairs_path"] == "pairs.csv"
        assert report["drift_adjusted"] is False
        assert [c["n"] for c in report["candidates"]] == [4, 5, 6]
        lines = (runs[0] / "assignment.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "pair_id,geo,arm"
        assert len(lines) == 1 + 2 * report["chosen"]["n"]

        manifest = read_json(runs[0] / "manifest.json")
        assert manifest["status"] == "complete"
        assert set(manifest["output_sha256"]) == {"candidates", "pairs", "assignment", "report"}
        assert any(e["stage"] == "assign" for e in manifest["timeline"])

    def test_infeasible_exit_code(self, tmp_path, pretest):
        design = dict(DESIGN, theta0_target=1e-9, balance={"max_abs_sim_iroas": 1e12})
        config = write_config(tmp_path / "tight.json", design=design)
        out = tmp_path / "design"
        assert main(["design", "--config", config, "--panel", pretest["panel"], "--out", str(out)]) == EXIT_INFEASIBLE
        assert read_json(out / "report.json")["feasible"] is False
        assert (out / "candidates.csv").exists()
        assert not (out / "pairs.csv").exists()
        assert read_json(out / "manifest.json")["status"] == "complete"

    def test_invalid_config_value(self, tmp_path, pretest, capsys):
        config = write_config(tmp_path / "bad.json", design=dict(DESIGN, replicates=0))
        code = main(["design", "--config", config, "--panel", pretest["panel"], "--out", str(tmp_path / "d")])
        assert code == EXIT_ERROR
        assert last_error(capsys)["category"] == "invalid_input"

    def test_unknown_config_section(self, tmp_path, pretest, capsys):
        config = write_config(tmp_path / "bad.json", analysis={})
        code = main(["design", "--config", config, "--panel", pretest["panel"], "--out", str(tmp_path / "d")])
        assert code == EXIT_ERROR
        assert last_error(capsys)["category"] == "config"

    def test_missing_required_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["design", "--out", "x"])
        assert exc.value.code == 2

    def test_flags_override_config(self, tmp_path, pretest):
        out = tmp_path / "design"
        code = main(
            ["design", "--config", pretest["config"], "--panel", pretest["panel"], "--out", str(out), "--n", "5", "--replicates", "10"]
        )
        assert code == EXIT_OK
        config = read_json(out / "manifest.json")["effective_config"]["design"]
        assert config["n_grid"] == [5]
        assert config["replicates"] == 10


class TestPairAndEvaluate:
    def test_pair_then_evaluate(self, tmp_path, pretest):
        pair_out = tmp_path / "pair"
        assert main(["pair", "--config", pretest["config"], "--panel", pretest["panel"], "--out", str(pair_out), "--n", "5"]) == EXIT_OK
        lines = (pair_out / "pairs.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "pair_id,geo_a,geo_b,distance"
        assert len(lines) == 6

        eval_out = tmp_path / "evaluate"
        code = main(
            [
                "evaluate",
                "--config",
                pretest["config"],
                "--panel",
                pretest["panel"],
                "--pairs",
                str(pair_out / "pairs.csv"),
                "--out",
                str(eval_out),
            ]
        )
        assert code == EXIT_OK
        report = read_json(eval_out / "evaluation.json")
        assert report["evaluation"]["n"] == 5
        assert report["evaluation"]["replicates"] == 20
        assert len((eval_out / "evaluation.csv").read_text(encoding="utf-8").splitlines()) == 2

    def test_pair_needs_no_budget(self, tmp_path, pretest):
        out = tmp_path / "pair"
        assert main(["pair", "--panel", pretest["panel"], "--out", str(out), "--n", "4", "--method", "rank"]) == EXIT_OK
        assert len((out / "pairs.csv").read_text(encoding="utf-8").splitlines()) == 5
        manifest = read_json(out / "manifest.json")
        assert manifest["effective_config"]["pairing"]["n"] == 4
        assert manifest["effective_config"]["pairing"]["pairing_method"] == "rank"
        assert "budget" not in manifest["effective_config"]["pairing"]

    def test_budget_flag_not_accepted_by_pair(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["pair", "--panel", "p.csv", "--out", "x", "--n", "2", "--budget", "1"])
        assert exc.value.code == 2

    def test_evaluate_unknown_geo(self, tmp_path, pretest, capsys):
        pairs = tmp_path / "pairs.csv"
        pairs.write_text("pair_id,geo_a,geo_b,distance\n1,geo_001,geo_999,1.0\n", encoding="utf-8")
        out = tmp_path / "evaluate"
        code = main(
            ["evaluate", "--config", pretest["config"], "--panel", pretest["panel"], "--pairs", str(pairs), "--out", str(out)]
        )
        assert code == EXIT_ERROR
        assert last_error(capsys)["category"] == "unknown_geo"
        assert read_json(out / "manifest.json")["status"] == "failed"

    def test_pair_count_too_large(self, tmp_path, pretest, capsys):
        code = main(["pair", "--config", pretest["config"], "--panel", pretest["panel"], "--out", str(tmp_path / "p"), "--n", "7"])
        assert code == EXIT_ERROR
        assert last_error(capsys)["category"] == "pair_count"

    def test_missing_panel_file(self, tmp_path, capsys):
        code = main(["pair", "--panel", str(tmp_path / "absent.csv"), "--out", str(tmp_path / "p"), "--n", "2"])
        assert code == EXIT_ERROR
        assert last_error(capsys)["category"] == "io"


class TestCompareAndCurve:
    def test_compare(self, tmp_path, pretest):
        out = tmp_path / "compare"
        code = main(["compare", "--config", pretest["config"], "--panel", pretest["panel"], "--out", str(out), "--replicates", "10"])
        assert code == EXIT_OK
        lines = (out / "comparison.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "n,rmse_optimal,rmse_rank,ratio"
        assert len(lines) == 4

    def test_curve(self, tmp_path, pretest):
        out = tmp_path / "curve"
        code = main(
            [
                "curve",
                "--config",
                pretest["config"],
                "--out",
                str(out),
                "--n",
                "4",
                "6",
                "--replicates",
                "5",
                "--n-seeds",
                "2",
                "--series",
                "cv",
                "untrimmed",
            ]
        )
        assert code == EXIT_OK
        lines = (out / "rmse_curve.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "n,rmse,series"
        assert [line.split(",")[::2] for line in lines[1:]] == [["4", "cv"], ["6", "cv"], ["4", "untrimmed"], ["6", "untrimmed"]]
        assert read_json(out / "manifest.json")["effective_config"]["seeds"] == [3, 4]
