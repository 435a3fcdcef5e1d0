import math
import xml.etree.ElementTree as ET

import numpy as np

from phaselock.pullin import DiagramRow
from phaselock.svg import diagram_svg, portrait_svg

NS = "{http://www.w3.org/2000/svg}"


def test_portrait_structure():
    th = np.linspace(0, 3 * math.pi, 300)
    svg = portrait_svg([(th, 0.01 * np.sin(th))], [(0.4, 0.0, True), (1.1, 0.0, False)],
                       [(th, np.full_like(th, 0.005), True), (th, np.full_like(th, 0.007), False)])
    root = ET.fromstring(svg)
    lines = root.findall(f"{NS}polyline")
    # the wrapped trajectory splits at each of its three wraps
    assert len([p for p in lines if p.get("stroke") != "black"]) == 4
    dashed = [p for p in lines if p.get("stroke-dasharray")]
    solid_cycles = [p for p in lines if p.get("stroke") == "black" and not p.get("stroke-dasharray")]
    assert dashed and solid_cycles
    fills = sorted(c.get("fill") for c in root.findall(f"{NS}circle"))
    assert fills == ["black", "white"]


def test_portrait_deterministic():
    th = np.linspace(0, 5, 50)
    a = portrait_svg([(th, th)])
    assert a == portrait_svg([(th, th)])


def test_diagram_structure():
    rows = [DiagramRow(a, K, 0.8 * K, 0.8, "Bounded") for a in (0.2, 1.0) for K in (10.0, 1000.0)]
    rows.append(DiagramRow(0.5, 10.0, math.nan, math.nan, "Undetermined"))
    root = ET.fromstring(diagram_svg(rows))
    assert len(root.findall(f"{NS}polyline")) == 2
    assert "(log)" in diagram_svg(rows)
