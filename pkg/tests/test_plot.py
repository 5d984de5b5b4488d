import re

import pytest

from vaxration.allocation import CURVE_COLUMNS
from vaxration.plot import FAMILIES, PlotError, line_chart, plot_bundle


def _bundle(tmp_path, rows_by_policy, bench=None):
    for policy, rows in rows_by_policy.items():
        lines = [",".join(CURVE_COLUMNS)]
        for supply, share in rows:
            lines.append(f"{supply},{policy},2,{share},{share},{share},{share},40.0,0.3")
        (tmp_path / f"allocation_curve_{policy}.csv").write_text("\n".join(lines) + "\n")
    if bench:
        (tmp_path / "benchmarks.csv").write_text(
            "benchmark,value\n" + "".join(f"{k},{v}\n" for k, v in bench.items()))
    return tmp_path


def test_polyline_vertices_match_rows(tmp_path):
    rows = [(0, ""), (10, 0.1), (20, 0.2), (30, 0.25)]
    b = _bundle(tmp_path, {"cdc": rows, "r2": rows[:3]}, {"population_share_black_indigenous": 0.155})
    paths = plot_bundle(b)
    assert sorted(p.name for p in paths) == sorted(f"{c}.svg" for c in FAMILIES)
    svg = (b / "plots" / "share_black_indigenous.svg").read_text()
    polys = re.findall(r'<polyline[^>]*points="([^"]*)"', svg)
    # the empty zero-supply share is skipped
    assert sorted(len(p.split()) for p in polys) == [2, 3]
    assert svg.count('class="benchmark"') == 1
    mean_age = (b / "plots" / "mean_age.svg").read_text()
    assert max(len(p.split()) for p in re.findall(r'points="([^"]*)"', mean_age)) == 4


def test_single_point_is_marker():
    svg = line_chart({"only": [(5.0, 0.5)]}, "t")
    assert "<circle" in svg and "<polyline" not in svg


def test_empty_curve_writes_nothing(tmp_path):
    b = _bundle(tmp_path, {"cdc": [(0, 0.1), (1, 0.2)], "bad": []})
    with pytest.raises(PlotError):
        plot_bundle(b)
    assert not (b / "plots").exists()


def test_missing_bundle(tmp_path):
    with pytest.raises(PlotError):
        plot_bundle(tmp_path / "nope")
    with pytest.raises(PlotError):
        plot_bundle(tmp_path)
    with pytest.raises(PlotError):
        line_chart({}, "empty")


def test_title_escaped():
    assert "a &amp; b" in line_chart({"x": [(0, 0), (1, 1)]}, "a & b")
