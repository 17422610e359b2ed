"""CSV and JSON records: headers, row-numbered errors, stable bytes."""
import io
import math

import pandas as pd
import pytest

from domain.entities import Assignment, CandidateTable, DesignEvaluation, GeoPair, PairSet
from domain.exceptions import RecordParseError
from infrastructure.data.records_io import (
    jsonable,
    load_experiment_csv,
    read_pairs_csv,
    sha256_payload,
    stable_dumps,
    write_assignment_csv,
    write_candidates_csv,
    write_pairs_csv,
    write_tidy_csv,
)


def pair_set():
    return PairSet(
        pairs=[
            GeoPair(pair_id=1, geo_a="g1", geo_b="g2", distance=0.5),
            GeoPair(pair_id=2, geo_a="g3", geo_b="g4", distance=1.25),
        ],
        excluded_geos=["g5"],
    )


class TestPairs:
    def test_written_layout(self):
        buffer = io.StringIO()
        write_pairs_csv(pair_set(), buffer)
        assert buffer.getvalue() == "pair_id,geo_a,geo_b,distance\n1,g1,g2,0.5\n2,g3,g4,1.25\n"

    def test_read_back(self):
        buffer = io.StringIO()
        write_pairs_csv(pair_set(), buffer)
        buffer.seek(0)
        assert read_pairs_csv(buffer, excluded_geos=["g5"]) == pair_set()

    def test_bad_header(self):
        with pytest.raises(RecordParseError) as err:
            read_pairs_csv(io.StringIO("id,a,b,d\n1,g1,g2,0.5\n"))
        assert err.value.row == 1

    def test_bad_distance_names_row(self):
        with pytest.raises(RecordParseError) as err:
            read_pairs_csv(io.StringIO("pair_id,geo_a,geo_b,distance\n1,g1,g2,0.5\n2,g3,g4,far\n"))
        assert err.value.row == 3

    def test_geo_in_two_pairs(self):
        with pytest.raises(RecordParseError):
            read_pairs_csv(io.StringIO("pair_id,geo_a,geo_b,distance\n1,g1,g2,0.5\n2,g1,g3,0.7\n"))


class TestOtherRecords:
    def test_assignment_rows(self):
        buffer = io.StringIO()
        write_assignment_csv(pair_set(), Assignment(arms=[1, -1]), buffer)
        assert buffer.getvalue().splitlines() == [
            "pair_id,geo,arm",
            "1,g1,control",
            "1,g2,treatment",
            "2,g3,treatment",
            "2,g4,control",
        ]

    def test_candidates_rows(self):
        table = CandidateTable(
            rows=[DesignEvaluation(n=4, rmse=0.1, theta0=0.25631, budget_to_baseline=0.02, replicates=10, seed=3)]
        )
        buffer = io.StringIO()
        write_candidates_csv(table, buffer)
        assert buffer.getvalue() == "n,rmse,theta0,budget_to_baseline,failures,seed\n4,0.1,0.25631,0.02,0,3\n"

    def test_tidy_frame(self):
        buffer = io.StringIO()
        write_tidy_csv(pd.DataFrame({"n": [4], "rmse": [1.5], "series": ["cv"]}), buffer)
        assert buffer.getvalue() == "n,rmse,series\n4,1.5,cv\n"

    def test_experiment_duplicate_pair(self):
        with pytest.raises(RecordParseError) as err:
            load_experiment_csv(io.StringIO("pair_id,x,y\n1,1,2\n1,2,3\n"))
        assert err.value.row == 3

    def test_experiment_empty(self):
        with pytest.raises(RecordParseError):
            load_experiment_csv(io.StringIO("pair_id,x,y\n"))

    def test_experiment_non_finite(self):
        with pytest.raises(RecordParseError):
            load_experiment_csv(io.StringIO("pair_id,x,y\n1,inf,2\n"))


class TestJson:
    def test_non_finite_become_null(self):
        assert jsonable({"a": math.inf, "b": [1.0, math.nan], 3: "x"}) == {"a": None, "b": [1.0, None], "3": "x"}

    def test_key_order_does_not_change_digest(self):
        assert stable_dumps({"b": 1, "a": 2}) == stable_dumps({"a": 2, "b": 1})
        assert sha256_payload({"b": 1, "a": 2}) == sha256_payload({"a": 2, "b": 1})
