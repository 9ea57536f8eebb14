import re
import xml.etree.ElementTree as ET

from tempobeat.svg import bar_chart, line_chart


def test_line_chart_points_readable():
    svg = line_chart([("a", [0, 1, 2], [0.5, -0.25, 1.0])], "t", "x", "y", ylim=(-1, 1))
    root = ET.fromstring(svg)
    pts = [(float(c.get("data-x")), float(c.get("data-y"))) for c in root.iter("{http://www.w3.org/2000/svg}circle")]
    assert pts == [(0, 0.5), (1, -0.25), (2, 1.0)]
    assert svg == line_chart([("a", [0, 1, 2], [0.5, -0.25, 1.0])], "t", "x", "y", ylim=(-1, 1))


def test_bar_chart_skips_missing():
    svg = bar_chart(["Mon", "Tue"], [("m", [0.2, float("nan")])], "t")
    ET.fromstring(svg)
    assert re.findall(r'data-value="([^"]+)"', svg) == ["0.2"]
