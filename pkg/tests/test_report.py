import re
import xml.etree.ElementTree as ET

import pytest

from ehrshift.evaluate.runner import Row, build_reports
from ehrshift.report import format_drop, render_all, render_svg, render_tables

NS = {"s": "http://www.w3.org/2000/svg"}


def rows_for(reps, regimes, models=("lr", "rf"), years=range(2003, 2013), task="mortality"):
    out = []
    for rep in reps:
        for regime in regimes:
            for m in models:
                splits = ["cv1-1", "cv1-2"] if regime == "year_agnostic" else [str(y) for y in years]
                for k, split in enumerate(splits):
                    a = 0.8 - 0.02 * k if rep == "raw" else 0.6 + 0.02 * k
                    out.append(Row(task, rep, m, regime, split, a, 0.02, 100, 30,
                                   flag="5x2cv" if regime == "year_agnostic" else ""))
    return out


def panels(svg):
    root = ET.fromstring(svg)
    return root.findall(".//s:g[@class='panel']", NS)


def test_panel_grid_counts():
    reps, regimes = ["raw", "aggregate", "pca"], ["full_history", "prior_year", "year_agnostic"]
    svg = render_svg(build_reports(rows_for(reps, regimes)), "mortality", switch_year=2008)
    ps = panels(svg)
    assert len(ps) == len(reps) * len(regimes)
    assert {(p.get("data-representation"), p.get("data-regime")) for p in ps} == \
        {(r, g) for r in reps for g in regimes}
    for p in ps:
        series = p.findall("s:g[@class='series']", NS)
        assert sorted(s.get("data-model") for s in series) == ["lr", "rf"]
        assert len(p.findall("s:rect[@class='switch']", NS)) == 1
        for s in series:
            assert len(s.findall("s:line[@class='errorbar']", NS)) == 10


def test_single_cell_svg_is_valid():
    svg = render_svg(build_reports(rows_for(["aggregate"], ["prior_year"], models=("lr",), years=[2005])),
                     "mortality")
    (p,) = panels(svg)
    assert len(p.findall(".//s:circle", NS)) == 1
    assert p.find("s:rect[@class='switch']", NS) is None


def test_empty_task_panels_still_render():
    rows = [Row("mortality", "raw", "lr", "prior_year", "2005", None, None, 0, 0, flag="skipped:empty_train")]
    (p,) = panels(render_svg(build_reports(rows), "mortality", switch_year=2005))
    assert p.find("s:g[@class='series']", NS) is None


@pytest.mark.parametrize("drop, text", [(0.123, "0.12"), (-0.031, "*(+0.03)"), (0.0, "0.00"), (None, "-")])
def test_format_drop(drop, text):
    assert format_drop(drop) == text


def test_tables_mark_improvement_and_cover_cells():
    text = render_tables(build_reports(rows_for(["raw", "aggregate"], ["full_history", "year_agnostic"])),
                         n_boot=200)
    assert "n_boot=200" in text
    fh = text.split("## mortality / full_history")[1].split("##")[0]
    # raw declines every year (positive drop); aggregate improves (starred gain)
    # means 0.71 and 0.69, population std 0.02 * sqrt(99 / 12) = 0.057, drops 0.80 - 0.62 and 0.60 - 0.62
    assert re.search(r"\| lr \| 0\.71 ± 0\.06 \| 0\.69 ± 0\.06 \| 0\.18 \| \*\(\+0\.02\) \|", fh), fh
    agnostic = text.split("## mortality / year_agnostic")[1].split("##")[0]
    assert "max drop" not in agnostic


def test_render_all_files():
    rows = rows_for(["raw"], ["prior_year"]) + rows_for(["raw"], ["prior_year"], task="long_los")
    files = render_all(rows, switch_year=2008, n_boot=50)
    assert sorted(files) == ["long_los.svg", "mortality.svg", "tables.md"]
    for name in ("long_los.svg", "mortality.svg"):
        ET.fromstring(files[name])
