import csv
import json

import numpy as np
import pytest
import scipy.sparse as sp

from discrete_de_rham import __version__
from discrete_de_rham.export import (
    CSV_COLUMNS,
    canonical,
    dumps_report,
    read_triplets,
    report_envelope,
    triplet_lines,
    write_errors_csv,
    write_triplets,
)
from discrete_de_rham.models import ERROR_COLUMNS, HodgeRun


class TestTriplets:
    def test_layout(self):
        matrix = sp.csr_matrix(np.array([[0.0, 2.5], [-1.0, 0.0], [0.0, 0.0]]))
        assert triplet_lines(matrix) == ["3 2 2", "0 1 2.5", "1 0 -1"]

    def test_file_round_trip(self, tmp_path):
        matrix = sp.random(6, 4, density=0.4, random_state=3, format="csr")
        path = write_triplets(matrix, tmp_path / "ops" / "D0.txt")
        back = read_triplets(path)
        assert back.shape == (6, 4)
        assert np.array_equal(back.toarray(), matrix.toarray())

    def test_empty_matrix(self, tmp_path):
        path = write_triplets(sp.csr_matrix((0, 5)), tmp_path / "empty.txt")
        assert path.read_text(encoding="utf-8") == "0 5 0\n"
        assert read_triplets(path).shape == (0, 5)

    @pytest.mark.parametrize("text", ["2 2\n", "2 2 2\n0 0 1.0\n", "2 2 1\n0 x 1.0\n"])
    def test_malformed(self, tmp_path, text):
        path = tmp_path / "bad.txt"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(ValueError, match="Invalid triplet file"):
            read_triplets(path)


class TestReports:
    def test_canonical_values(self):
        data = canonical({
            "x": 0.1 + 0.2,
            "nan": float("nan"),
            "inf": np.float64("inf"),
            "flag": np.bool_(True),
            "count": np.int64(3),
            "arr": np.array([1.0, 2.0]),
            7: (1, 2),
        })
        assert data == {
            "x": 0.3, "nan": None, "inf": None, "flag": True, "count": 3, "arr": [1.0, 2.0], "7": [1, 2],
        }
        assert isinstance(data["count"], int)

    def test_dumps_is_sorted_and_terminated(self):
        text = dumps_report({"b": 1, "a": {"d": 2.0, "c": 1.0}})
        assert text.endswith("}\n")
        assert text.index('"a"') < text.index('"b"')
        assert text.index('"c"') < text.index('"d"')
        assert json.loads(text) == {"a": {"c": 1.0, "d": 2.0}, "b": 1}

    def test_envelope(self):
        report = report_envelope("check", {"r": 1}, 42, {"suites": []})
        assert report["version"] == __version__
        assert report["seed"] == 42
        assert report["tolerances"]["exact"] == pytest.approx(1e-10)
        assert report["suites"] == []


class TestErrorsCsv:
    def test_rows_are_sorted(self, tmp_path):
        rows = []
        for k, level in [(1, 1), (0, 0), (1, 0)]:
            row = HodgeRun(level, 0.5 / (level + 1), 10, {c: 0.25 for c in ERROR_COLUMNS}).row()
            row["k"] = k
            rows.append(row)
        path = write_errors_csv(rows, tmp_path / "errors.csv")
        with path.open(encoding="utf-8", newline="") as handle:
            records = list(csv.DictReader(handle))
        assert tuple(records[0]) == CSV_COLUMNS
        assert [(r["k"], r["level"]) for r in records] == [("0", "0"), ("1", "0"), ("1", "1")]
        assert records[0]["sigma_l2"] == "2.5000000000e-01"
        assert records[0]["total"] == "2.0000000000e+00"
        assert records[0]["dofs"] == "10"
