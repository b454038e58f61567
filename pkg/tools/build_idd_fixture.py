"""Slice a subset of classes out of a full Energy+.idd into the shipped fixture.

Usage:
    python tools/build_idd_fixture.py /path/to/Energy+.idd src/bemllm/data/energyplus_23_2_subset.idd

The full 23.2.0 IDD used for the committed fixture was taken from the
``opyplus`` wheel (``opyplus/idd/resources/V23-2-0-Energy+.idd``).  Class
text is copied verbatim; only the selection is ours.
"""

from __future__ import annotations

import re
import sys

CLASSES = [
    "Version",
    "SimulationControl",
    "Building",
    "ShadowCalculation",
    "SurfaceConvectionAlgorithm:Inside",
    "SurfaceConvectionAlgorithm:Outside",
    "HeatBalanceAlgorithm",
    "Timestep",
    "Site:Location",
    "SizingPeriod:DesignDay",
    "RunPeriod",
    "Site:GroundTemperature:BuildingSurface",
    "ScheduleTypeLimits",
    "Schedule:Compact",
    "Schedule:Constant",
    "Material",
    "Material:NoMass",
    "Material:AirGap",
    "WindowMaterial:SimpleGlazingSystem",
    "Construction",
    "GlobalGeometryRules",
    "Zone",
    "ZoneList",
    "Space",
    "SpaceList",
    "BuildingSurface:Detailed",
    "FenestrationSurface:Detailed",
    "People",
    "Lights",
    "ElectricEquipment",
    "ZoneInfiltration:DesignFlowRate",
    "Exterior:Lights",
    "HVACTemplate:Thermostat",
    "HVACTemplate:Zone:PTAC",
    "Output:VariableDictionary",
    "Output:Surfaces:Drawing",
    "Output:Constructions",
    "Output:Table:SummaryReports",
    "OutputControl:Table:Style",
    "Output:Variable",
    "Output:Meter",
    "Output:Meter:MeterFileOnly",
    "Output:Diagnostics",
]

HEADER = re.compile(r"^([A-Za-z][^,;!\\]*?)\s*[,;]\s*(!.*)?$")


def split_classes(text: str) -> tuple[list[str], dict[str, list[str]]]:
    lines = text.splitlines()
    preamble: list[str] = []
    blocks: dict[str, list[str]] = {}
    current: list[str] | None = None
    for line in lines:
        if line.startswith("\\group"):
            current = None
            continue
        m = HEADER.match(line)
        if m and not line.startswith((" ", "\t")):
            current = [line]
            blocks[m.group(1).strip()] = current
            continue
        if current is None:
            if not blocks and line.startswith("!IDD_"):
                preamble.append(line)
            continue
        current.append(line)
    return preamble, blocks


def main(src: str, dst: str) -> None:
    with open(src, encoding="latin-1") as fh:
        preamble, blocks = split_classes(fh.read())
    out = list(preamble)
    out.append("! Subset of the EnergyPlus Input Data Dictionary: the classes used by the")
    out.append("! bemllm case-study fixtures.  Class definitions are copied verbatim.")
    out.append("")
    for name in CLASSES:
        body = blocks[name]
        while body and not body[-1].strip():
            body = body[:-1]
        out.extend(body)
        out.append("")
    with open(dst, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
