"""Round-trip tests for the flat-file formats."""

import numpy as np
from numpy.testing import assert_array_equal

from qotlap.fileio import (
    format_value,
    read_coupling,
    read_point_cloud,
    read_report,
    read_table,
    write_coupling,
    write_point_cloud,
    write_report,
    write_table,
)
from qotlap.geometry import Sphere, sample_sphere
from qotlap.qot_solver import QotProblem, solve_semismooth_newton


def test_point_cloud_round_trip(tmp_path):
    cloud = sample_sphere(2, 50, 1)
    path = tmp_path / "pts.csv"
    write_point_cloud(path, cloud)
    assert path.read_text().splitlines()[0] == "idx,x0,x1,x2"
    back = read_point_cloud(path, Sphere(2))
    assert_array_equal(back.points, cloud.points)


def test_coupling_round_trip(tmp_path):
    P = QotProblem.from_cloud(sample_sphere(2, 80, 2), 3.0)
    _, pi, rep = solve_semismooth_newton(P)
    path = tmp_path / "plan.csv"
    write_coupling(path, pi)
    assert path.read_text().splitlines()[0] == "i,j,value"
    assert_array_equal(read_coupling(path, P.n).dense, pi.dense)

    write_report(tmp_path / "rep.txt", rep)
    kv = read_report(tmp_path / "rep.txt")
    assert int(kv["iterations"]) == rep.iterations
    assert kv["converged"] == "true"


def test_table_schema_line(tmp_path):
    path = write_table(tmp_path / "t.csv", ("a", "b"), [dict(a=1, b=0.1), dict(a=2, b=float("nan"))])
    lines = path.read_text().splitlines()
    assert lines[0] == "#schema=1"
    cols, rows = read_table(path)
    assert cols == ["a", "b"]
    assert float(rows[0]["b"]) == 0.1
    assert rows[1]["b"] == "nan"


def test_format_value():
    assert format_value(True) == "true"
    assert format_value(np.int64(3)) == "3"
    x = 0.1 + 0.2
    assert float(format_value(x)) == x
    assert format_value(None) == ""
