"""Author the committed IDF fixtures and recorded chat transcripts.

The chat model is played by deterministic responders that follow the prompt
rules the way a compliant model would.  Every exchange goes through
RecordingBackend, so the tests replay exactly what was produced here.
Transcripts are recorded against the mock simulator.

    python tools/author_fixtures.py
"""

from __future__ import annotations

import difflib
import re
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from bemllm.agents import RepairSet, format_plan, format_repair_response, PlanEntry, PlanJob  # noqa: E402
from bemllm.forge import GenerationSpec, PlaceholderSource, forge_object, summary_text  # noqa: E402
from bemllm.idd import load_fixture_schema, normalize_name  # noqa: E402
from bemllm.idf import (  # noqa: E402
    FieldValue,
    IdfObject,
    find_objects,
    parse_idf,
    reference_audit,
    reference_registry,
    serialize,
    serialize_object,
)
from bemllm.llm import RecordingBackend, ScriptedBackend, StubEmbedder, Transcript  # noqa: E402
from bemllm.pipeline import Pipeline, PipelineConfig, RunLog  # noqa: E402
from bemllm.rag import answer, build_index, chunk_corpus, read_corpus_dir  # noqa: E402
from bemllm.simulator import MockRunner  # noqa: E402

SCHEMA = load_fixture_schema()
FIX = ROOT / "tests" / "fixtures"
TRANSCRIPTS = FIX / "transcripts"


def canonical(text: str) -> str:
    return serialize(parse_idf(text), SCHEMA)


def write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path.relative_to(ROOT)}")


def num(x: float) -> str:
    return f"{x:g}"


# ---------------------------------------------------------------------------
# IDF fixtures


def simple_idf() -> str:
    return canonical((ROOT / "tools" / "sources" / "simple_1zone.idf").read_text())


HEIGHT = 2.8
DEPTH = 4.0
ROOMS = [("Zone1_Livingroom", 0.0, 5.0), ("Zone2_Bathroom", 5.0, 7.0), ("Zone3_Storage", 7.0, 8.0)]


def _surface(name, kind, construction, zone, boundary, boundary_obj, sun, wind, verts):
    coords = ", ".join(num(c) for v in verts for c in v)
    return (
        f"BuildingSurface:Detailed, {name}, {kind}, {construction}, {zone}, , {boundary}, {boundary_obj}, "
        f"{sun}, {wind}, autocalculate, 4, {coords};"
    )


def _wall_x(name, construction, zone, x, facing_east, boundary="Outdoors", other=""):
    h, w = HEIGHT, DEPTH
    if facing_east:
        verts = [(x, 0, h), (x, 0, 0), (x, w, 0), (x, w, h)]
    else:
        verts = [(x, w, h), (x, w, 0), (x, 0, 0), (x, 0, h)]
    sun, wind = ("SunExposed", "WindExposed") if boundary == "Outdoors" else ("NoSun", "NoWind")
    return _surface(name, "Wall", construction, zone, boundary, other, sun, wind, verts)


def iunit_initial_idf() -> str:
    h, w = HEIGHT, DEPTH
    lines = [
        "! iUnit geometry, zones and run settings; materials, loads and HVAC are generated.",
        "Version, 23.2;",
        "SimulationControl, Yes, Yes, No, Yes, No;",
        "Building, iUnit, 0, Suburbs, 0.04, 0.4, FullExterior, 25, 6;",
        "Timestep, 6;",
        "Site:Location, Golden CO NREL, 39.74, -105.18, -7.00, 1829.00;",
        "SizingPeriod:DesignDay, Golden Ann Htg 99% Condns DB, 12, 21, WinterDesignDay, -20.6, 0.0, "
        "DefaultMultipliers, , Wetbulb, -20.6, , , , , 81200., 4.9, 270, No, No, No, ASHRAEClearSky, , , , , 0.0;",
        "SizingPeriod:DesignDay, Golden Ann Clg 1% Condns DB=>MWB, 7, 21, SummerDesignDay, 32.8, 15.2, "
        "DefaultMultipliers, , Wetbulb, 15.5, , , , , 81200., 4.0, 120, No, No, No, ASHRAEClearSky, , , , , 1.0;",
        "RunPeriod, Annual, 1, 1, , 12, 31, , , Yes, Yes, No, Yes, Yes;",
        "GlobalGeometryRules, UpperLeftCorner, CounterClockWise, Relative;",
    ]
    for zone, _, _ in ROOMS:
        lines.append(f"Zone, {zone}, 0, 0, 0, 0, 1, 1, autocalculate, autocalculate;")
    lines.append("ZoneList, iUnit_Zones, " + ", ".join(z for z, _, _ in ROOMS) + ";")
    for n, (zone, x0, x1) in enumerate(ROOMS):
        lines.append(_surface(f"{zone}_Floor", "Floor", "Floor_Construction", zone, "Outdoors", "", "NoSun",
                              "WindExposed", [(x1, 0, 0), (x0, 0, 0), (x0, w, 0), (x1, w, 0)]))
        lines.append(_surface(f"{zone}_Roof", "Roof", "Roof_Construction", zone, "Outdoors", "", "SunExposed",
                              "WindExposed", [(x0, w, h), (x0, 0, h), (x1, 0, h), (x1, w, h)]))
        lines.append(_surface(f"{zone}_Wall_South", "Wall", "Exterior_Wall_Construction", zone, "Outdoors", "",
                              "SunExposed", "WindExposed", [(x0, 0, h), (x0, 0, 0), (x1, 0, 0), (x1, 0, h)]))
        lines.append(_surface(f"{zone}_Wall_North", "Wall", "Exterior_Wall_Construction", zone, "Outdoors", "",
                              "SunExposed", "WindExposed", [(x1, w, h), (x1, w, 0), (x0, w, 0), (x0, w, h)]))
        if n == 0:
            lines.append(_wall_x(f"{zone}_Wall_West", "Exterior_Wall_Construction", zone, x0, facing_east=False))
        else:
            prev = ROOMS[n - 1][0]
            lines.append(_wall_x(f"{zone}_Wall_West", "Interior_Wall_Construction", zone, x0, facing_east=False,
                                 boundary="Surface", other=f"{prev}_Wall_East"))
        if n == len(ROOMS) - 1:
            lines.append(_wall_x(f"{zone}_Wall_East", "Exterior_Wall_Construction", zone, x1, facing_east=True))
        else:
            nxt = ROOMS[n + 1][0]
            lines.append(_wall_x(f"{zone}_Wall_East", "Interior_Wall_Construction", zone, x1, facing_east=True,
                                 boundary="Surface", other=f"{nxt}_Wall_West"))
    lines += [
        "FenestrationSurface:Detailed, Zone1_Window, Window, window_construction_1, Zone1_Livingroom_Wall_South, , "
        "autocalculate, , 1, 4, 1, 0, 2.1, 1, 0, 0.9, 3, 0, 0.9, 3, 0, 2.1;",
        "FenestrationSurface:Detailed, Zone1_Door, Door, Door_Construction, Zone1_Livingroom_Wall_North, , "
        f"autocalculate, , 1, 4, 4, {num(w)}, 2.1, 4, {num(w)}, 0, 3, {num(w)}, 0, 3, {num(w)}, 2.1;",
        "ScheduleTypeLimits, ScheduleLimit, , , Continuous;",
        "Output:VariableDictionary, IDF;",
        "Output:Table:SummaryReports, AllSummary;",
        "OutputControl:Table:Style, Comma;",
        "Output:Variable, *, Zone Mean Air Temperature, Hourly;",
        "Output:Meter, Electricity:Facility, Hourly;",
    ]
    return canonical("\n".join(lines) + "\n")


IUNIT_DESCRIPTION = """\
Building: iUnit, a relocatable studio apartment used by NREL in Golden, Colorado for
validation-grade simulation experiments. The geometry and the three zones Zone1_Livingroom,
Zone2_Bathroom and Zone3_Storage already exist in the model.

Floor, outside to inside:
- HDPE rodent barrier: smooth, 0.05 in thick, conductivity 3.472 Btu.in/h.ft2.F, density 59.3 lb/ft3, specific heat 0.4347 Btu/lb.F
- insulated joist layer: smooth, 14.462 in, 0.3323 Btu.in/h.ft2.F, 6.336 lb/ft3, 0.2357 Btu/lb.F
- OSB: smooth, 1.75 in, 0.826 Btu.in/h.ft2.F, 33.96 lb/ft3, 0.289 Btu/lb.F
- plywood: smooth, 0.25 in, 0.8 Btu.in/h.ft2.F, 33.96 lb/ft3, 0.289 Btu/lb.F

Roof, outside to inside:
- EPDM rubber: smooth, 0.1 in, 1.3889 Btu.in/h.ft2.F, 63 lb/ft3, 0.48 Btu/lb.F, solar absorptance 0.3
- OSB: as in the floor
- insulated truss layer: smooth, 37.375 in, 0.3425 Btu.in/h.ft2.F, 3.296 lb/ft3, 0.19 Btu/lb.F
- drywall: medium smooth, 0.625 in, 1.1111 Btu.in/h.ft2.F, 49.94 lb/ft3, 0.26034 Btu/lb.F

Exterior walls, outside to inside:
- OSB exterior finish: smooth, 0.625 in, 0.8264 Btu.in/h.ft2.F, 33.96 lb/ft3, 0.289 Btu/lb.F, solar absorptance 0.5
- rigid insulation: smooth, 1 in, 0.2 Btu.in/h.ft2.F, 2.2786 lb/ft3, 0.358 Btu/lb.F
- OSB: as in the floor
- stud layer: smooth, 5.5 in, 0.2927 Btu.in/h.ft2.F, 7.541 lb/ft3, 0.2573 Btu/lb.F
- drywall: as in the roof

Interior walls: one layer of plywood, smooth, 1 in, 0.8 Btu.in/h.ft2.F, 33.96 lb/ft3, 0.289 Btu/lb.F.

Windows: U-factor 0.223 Btu/h.ft2.F, SHGC 0.43, visible transmittance 0.42.
Door: insulated steel door with an expanded polystyrene core; conductivity 0.20408 Btu.in/h.ft2.F,
density 24.0 kg/m3, specific heat 1210.0 J/kg.K.

Occupancy: two people on average during NREL business hours (Monday to Thursday 8:00-17:00,
Friday 8:00-16:00, closed at weekends) and nobody otherwise.
Lighting: not measured; assume a capacity from ASHRAE guidance, switched with the business hours.
Electric equipment: assume a power density.
Infiltration: use ZoneInfiltration:DesignFlowRate in every zone with the measured coefficients
I = 1, A = 0.03, B = 0.003, C = 0, D = 0 and an always-on schedule.

HVAC: packaged terminal air conditioners from the HVAC templates.
- Zone1_Livingroom: dual setpoint, cooling 76 F, heating 72 F.
- Zone2_Bathroom: heating only, setpoint 74 F.
- Zone3_Storage: unconditioned.
"""

ALL_ZONES = "Apply to all zones: ['Zone1_Livingroom', 'Zone2_Bathroom', 'Zone3_Storage']."

# (type, name, description) in the order Agent 1 lists them
TABLE = [
    ("Material", "Rodent_Barrier_HDPE", "Roughness: Smooth; Thickness: 1.27 mm; Conductivity: 0.607 W/m-K; Density: 949.3 kg/m3; Specific Heat: 1819 J/kg-K"),
    ("Material", "Insulated_Joist_Layer", "Roughness: Smooth; Thickness: 367.3 mm; Conductivity: 0.0461 W/m-K; Density: 101.6 kg/m3; Specific Heat: 986 J/kg-K"),
    ("Material", "OSB", "Roughness: Smooth; Thickness: 44.45 mm; Conductivity: 0.1147 W/m-K; Density: 544 kg/m3; Specific Heat: 1209 J/kg-K"),
    ("Material", "Plywood", "Roughness: Smooth; Thickness: 6.35 mm; Conductivity: 0.111 W/m-K; Density: 544 kg/m3; Specific Heat: 1209 J/kg-K"),
    ("Construction", "Floor_Construction", "Layers from outside: Rodent_Barrier_HDPE, Insulated_Joist_Layer, OSB, Plywood"),
    ("Material", "EPDM_Rubber", "Roughness: Smooth; Thickness: 2.54 mm; Conductivity: 0.243 W/m-K; Density: 1009 kg/m3; Specific Heat: 2008 J/kg-K; Solar Absorptance: 0.3"),
    ("Material", "Insulted_Truss_Layer", "Roughness: Smooth; Thickness: 949.35 mm; Conductivity: 0.0476 W/m-K; Density: 52.8 kg/m3; Specific Heat: 794 J/kg-K"),
    ("Material", "Drywall", "Roughness: MediumSmooth; Thickness: 15.875 mm; Conductivity: 0.194 W/m-K; Density: 800 kg/m3; Specific Heat: 1089 J/kg-K"),
    ("Construction", "Roof_Construction", "Layers from outside: EPDM_Rubber, OSB, Insulted_Truss_Layer, Drywall"),
    ("Material", "Exterior_Finish_OSB", "Roughness: Smooth; Thickness: 15.875 mm; Conductivity: 0.1148 W/m-K; Density: 544 kg/m3; Specific Heat: 1209 J/kg-K; Solar Absorptance: 0.5"),
    ("Material", "Rigid_Insulation", "Roughness: Smooth; Thickness: 25.4 mm; Conductivity: 0.0349 W/m-K; Density: 36.5 kg/m3; Specific Heat: 1497 J/kg-K"),
    ("Material", "Stud_Layer", "Roughness: Smooth; Thickness: 139.7 mm; Conductivity: 0.0407 W/m-K; Density: 120.6 kg/m3; Specific Heat: 1076 J/kg-K"),
    ("Construction", "Exterior_Wall_Construction", "Layers from outside: Exterior_Finish_OSB, Rigid_Insulation, OSB, Stud_Layer, Drywall"),
    ("Material", "Plywood_2", "Roughness: Smooth; Thickness: 25.4 mm; Conductivity: 0.111 W/m-K; Density: 544 kg/m3; Specific Heat: 1209 J/kg-K"),
    ("Construction", "Interior_Wall_Construction", "Layers: Plywood_2"),
    ("WindowMaterial:SimpleGlazingSystem", "Window_Material", "U-Factor: 1.26 W/m2-K; Solar Heat Gain Coefficient: 0.43; Visible Transmittance: 0.42"),
    ("Construction", "window_construction_1", "Layers: Window_Material"),
    ("Material", "Insulated_steel_door", "Conductivity: 0.356 W/m-K; Density of the expanded polystyrene core: 24.0 kg/m3; Specific Heat of the core: 1210.0 J/kg-K"),
    ("Construction", "Door_Construction", "Layers: Insulated_steel_door"),
    ("Schedule:Compact", "Business_Hours", "Business hours schedule: Monday to Thursday 8:00-17:00, Friday 8:00-16:00, off on Saturday and Sunday. Use 'ScheduleLimit' as the schedule type limits"),
    ("Schedule:Compact", "Always_On", "Always on schedule (1 at every hour). Use 'ScheduleLimit' as the schedule type limits"),
    ("People", "People_iUnit", f"Two persons on average during business hours and none otherwise. {ALL_ZONES} Schedule: 'Business_Hours'. Activity Level Schedule Name should use 'Always_On'"),
    ("Lights", "Lights_iUnit", f"Lighting power assumed from ASHRAE guidance. {ALL_ZONES} Schedule: 'Business_Hours'"),
    ("ElectricEquipment", "Equip_iUnit", f"Electric equipment capacity assumed by power density. {ALL_ZONES} Schedule: 'Always_On'"),
    ("ZoneInfiltration:DesignFlowRate", "Infiltration_iUnit", f"Design flow rate equation with I = 1, A = 0.03, B = 0.003, C = 0, D = 0 and an always-on schedule. {ALL_ZONES} Schedule: 'Always_On'"),
    ("HVACTemplate:Thermostat", "Thermostat_Livingroom", "Dual setpoint thermostat for Zone1_Livingroom: cooling setpoint 24.4 C, heating setpoint 22.2 C"),
    ("HVACTemplate:Thermostat", "Thermostat_Bathroom", "Single heating setpoint thermostat for Zone2_Bathroom: heating setpoint 23.3 C"),
    ("HVACTemplate:Zone:PTAC", "PTAC_Livingroom", "Packaged terminal air conditioner for Zone1_Livingroom with dual setpoint control, cooling 24.4 C and heating 22.2 C"),
    ("HVACTemplate:Zone:PTAC", "PTAC_Bathroom", "Packaged terminal air conditioner for Zone2_Bathroom with a single heating setpoint of 23.3 C"),
]


def material(rough, thick, k, rho, cp, solar=None):
    a = {"Roughness": rough, "Thickness": thick, "Conductivity": k, "Density": rho, "Specific Heat": cp}
    if solar is not None:
        a["Solar Absorptance"] = solar
    return a


def layers(*names):
    keys = ["Outside Layer"] + [f"Layer {i}" for i in range(2, 11)]
    return dict(zip(keys, names))


def compact(limits, *fields):
    a = {"Schedule Type Limits Name": limits} if limits else {}
    a.update({f"Field {i}": f for i, f in enumerate(fields, start=1)})
    return a


BUSINESS = [
    "Through: 12/31",
    "For: Monday Tuesday Wednesday Thursday", "Until: 08:00", "0", "Until: 17:00", "1", "Until: 24:00", "0",
    "For: Friday", "Until: 08:00", "0", "Until: 16:00", "1", "Until: 24:00", "0",
    "For: AllOtherDays", "Until: 24:00", "0",
]
ALWAYS = ["Through: 12/31", "For: AllDays", "Until: 24:00", "1"]


def assignments(name: str, v: dict) -> dict:
    """User-set fields a compliant model fills in for each Table row under trial variant ``v``."""
    zone = v.get("load_zone")  # None -> the model leaves the zone undefined
    limits = None if v.get("limits_placeholder") else "ScheduleLimit"
    table = {
        "Rodent_Barrier_HDPE": material("Smooth", 0.00127, 0.607, 949.3, 1819),
        "Insulated_Joist_Layer": material("Smooth", 0.3673, 0.0461, 101.6, 986),
        "OSB": material("Smooth", 0.04445, 0.1147, 544, 1209),
        "Plywood": material("Smooth", 0.00635, 0.111, 544, 1209),
        "Floor_Construction": layers("Rodent_Barrier_HDPE", "Insulated_Joist_Layer", "OSB", "Plywood"),
        "EPDM_Rubber": material("Smooth", 0.00254, 0.243, 1009, 2008, 0.3),
        "Insulted_Truss_Layer": material("Smooth", 0.94935, 0.0476, 52.8, 794),
        "Drywall": material("MediumSmooth", 0.015875, 0.194, 800, 1089),
        "Roof_Construction": layers("EPDM_Rubber", "OSB", v.get("truss_layer_ref", "Insulted_Truss_Layer"), "Drywall"),
        "Exterior_Finish_OSB": material("Smooth", 0.015875, 0.1148, 544, 1209, 0.5),
        "Rigid_Insulation": material("Smooth", 0.0254, 0.0349, 36.5, 1497),
        "Stud_Layer": material("Smooth", 0.1397, 0.0407, 120.6, 1076),
        "Exterior_Wall_Construction": layers("Exterior_Finish_OSB", "Rigid_Insulation", "OSB", "Stud_Layer", "Drywall"),
        "Plywood_2": material("Smooth", 0.0254, 0.111, 544, 1209),
        "Interior_Wall_Construction": layers("Plywood_2"),
        "Window_Material": {"U-Factor": 1.26, "Solar Heat Gain Coefficient": 0.43, "Visible Transmittance": 0.42},
        "window_construction_1": layers("Window_Material"),
        "Insulated_steel_door": {"Conductivity": 0.356, "Density": 24.0, "Specific Heat": 1210.0},
        "Door_Construction": layers("Insulated_steel_door"),
        "Business_Hours": compact(limits, *BUSINESS),
        "Always_On": compact(limits, *ALWAYS),
        "People_iUnit": {
            "Number of People Schedule Name": "Business_Hours",
            "Number of People Calculation Method": "People",
            "Number of People": 2,
            "Fraction Radiant": 0.3,
            "Carbon Dioxide Generation Rate": 3.82e-8,
            "Enable ASHRAE 55 Comfort Warnings": "No",
            "Mean Radiant Temperature Calculation Type": "ZoneAveraged",
        },
        "Lights_iUnit": {
            "Schedule Name": "Business_Hours",
            "Design Level Calculation Method": "Watts/Area",
            "Watts per Zone Floor Area": 10.76,
            "Fraction Radiant": 0.37,
            "Fraction Visible": 0.18,
        },
        "Equip_iUnit": {
            "Schedule Name": "Always_On",
            "Design Level Calculation Method": "Watts/Area",
            "Watts per Zone Floor Area": 5.38,
            "Fraction Radiant": 0.3,
        },
        "Infiltration_iUnit": {
            "Schedule Name": "Always_On",
            "Design Flow Rate Calculation Method": "AirChanges/Hour",
            "Air Changes per Hour": 1,
            "Constant Term Coefficient": 0.03,
            "Temperature Term Coefficient": 0.003,
            "Velocity Term Coefficient": 0,
            "Velocity Squared Term Coefficient": 0,
        },
        "Thermostat_Livingroom": {"Constant Heating Setpoint": 22.2, "Constant Cooling Setpoint": 24.4},
        "Thermostat_Bathroom": {"Constant Heating Setpoint": 23.3},
        "PTAC_Livingroom": {"Zone Name": "Zone1_Livingroom",
                            "Template Thermostat Name": v.get("ptac_thermostat", "Thermostat_Livingroom")},
        "PTAC_Bathroom": {"Zone Name": "Zone2_Bathroom", "Template Thermostat Name": "Thermostat_Bathroom"},
    }
    a = dict(table[name])
    if name in ("People_iUnit", "Lights_iUnit", "Equip_iUnit", "Infiltration_iUnit") and zone:
        a["Zone or ZoneList or Space or SpaceList Name"] = zone
    if name == "People_iUnit" and not v.get("activity_placeholder"):
        a["Activity Level Schedule Name"] = "Always_On"
    od = SCHEMA.get(TYPES[name])
    if od.owns_name:
        a["Name"] = name
    return a


TYPES = {name: t for t, name, _ in TABLE}


def generation_reply(class_name: str, name: str, a: dict, seed: int, style: int = 0) -> str:
    spec = GenerationSpec.create(SCHEMA, class_name, a)
    obj, report = forge_object(SCHEMA, spec, PlaceholderSource(seed))
    body = serialize_object(obj)
    intro = [
        f"Here is the {class_name} object for {name}:",
        f"Below is the generated {class_name} object.",
        f"Sure. The {class_name} object is:",
    ][style % 3]
    return f"{intro}\n\n```\n{body}```\n\n{summary_text(report)}"


def agent1_reply(style: int) -> str:
    if style == 1:
        rows = "\n".join(f"    ({t!r}, {n!r}): {d!r}," for t, n, d in TABLE)
        return "Here are the objects to create:\n\n" + rows + "\n"
    rows = ",\n".join(f"    ({t!r}, {n!r}): {d!r}" for t, n, d in TABLE)
    return "```python\nbuilding_objects = {\n" + rows + "\n}\n```\n"


# ---------------------------------------------------------------------------
# repair responder


_REF_LINE = re.compile(r"^\s*\*\*[^*]*\*\*\s*(?:\w+:\s*)?([A-Za-z][A-Za-z0-9:]*) = (.+?)\s*$", re.M)


def _split_repair_prompt(prompt: str) -> tuple[str, str]:
    head, idf = prompt.split("strictly kept unchanged.\n\n``", 1)
    errors = head.split("error message: ``", 1)[1].split("``", 1)[0]
    return errors, idf.rsplit("``", 1)[0]


def _pick(candidates: set[str], near: str, preferred: str | None = None) -> str | None:
    if preferred and preferred.upper() in candidates:
        return preferred
    close = difflib.get_close_matches(near.upper(), sorted(candidates), n=1, cutoff=0.6)
    return close[0] if close else None


# per (class, field) answers a domain-aware model gives for undefined fields
KNOWN = {
    ("people", "zone or zonelist or space or spacelist name"): "iUnit_Zones",
    ("lights", "zone or zonelist or space or spacelist name"): "iUnit_Zones",
    ("electricequipment", "zone or zonelist or space or spacelist name"): "iUnit_Zones",
    ("zoneinfiltration:designflowrate", "zone or zonelist or space or spacelist name"): "iUnit_Zones",
    ("people", "number of people schedule name"): "ALWAYS ON",
    ("people", "activity level schedule name"): "Always_On",
    ("material", "roughness"): "MediumSmooth",
    ("material", "thickness"): "0.0445",
    ("schedule:compact", "schedule type limits name"): "ScheduleLimit",
    ("exterior:lights", "schedule name"): "ALWAYS ON",
}


def repaired(doc, obj, extra_known=None):
    od = SCHEMA.get(obj.class_name)
    registry = reference_registry(doc, SCHEMA)
    originals = {o.name.upper(): o.name for o in doc.objects}
    known = {**KNOWN, **(extra_known or {})}
    values = list(obj.values)
    for i, v in enumerate(values, start=1):
        fd = od.field_at(i)
        if fd is None:
            continue
        key = (normalize_name(od.class_name), normalize_name(fd.name))
        if v.is_placeholder:
            if key in known:
                values[i - 1] = FieldValue.literal(known[key], v.comment)
            continue
        if fd.kind == "object-list-reference" and not v.is_blank:
            cands = set().union(*(registry.get(lst, set()) for lst in fd.referenced_lists))
            if v.text.upper() not in cands:
                pick = _pick(cands, v.text, known.get(key))
                if pick:
                    values[i - 1] = FieldValue.literal(originals.get(pick.upper(), pick), v.comment)
    return IdfObject(obj.class_name, tuple(values))


def repair_reply(prompt: str, batch: int, extra_known=None, additions=()) -> str:
    errors, idf_text = _split_repair_prompt(prompt)
    doc = parse_idf(idf_text)
    seen, fixed, targets = set(), [], []
    for cls, name in _REF_LINE.findall(errors):
        od = SCHEMA.get(cls)
        if od is None:
            continue
        hits = find_objects(doc, od.class_name, name.strip(), SCHEMA)
        if len(hits) != 1:
            continue
        idx, obj = hits[0]
        if idx in seen or len(fixed) >= batch:
            continue
        seen.add(idx)
        fixed.append(repaired(doc, obj, extra_known))
        targets.append((od.class_name, obj.name))
    for obj in additions:
        fixed.append(obj)
        targets.append((obj.class_name, obj.name))
    return format_repair_response(RepairSet(fixed, targets), SCHEMA)


# ---------------------------------------------------------------------------
# iUnit trials

TRIALS = {
    1: {"load_zone": None, "batch": 10},
    2: {"load_zone": "Zone1_Livingroom", "batch": 10, "agent1_style": 1},
    3: {"load_zone": None, "ptac_thermostat": "Thermostat Livingroom", "batch": 3},
    4: {"load_zone": None, "limits_placeholder": True, "batch": 2},
    5: {"load_zone": None, "people_violation_once": True, "batch": 10},
    6: {"load_zone": None, "activity_placeholder": True, "batch": 10},
    7: {"load_zone": None, "malformed_repair_once": True, "batch": 10},
    8: {"load_zone": "Zone1_Livingroom", "truss_layer_ref": "Insulated_Truss_Layer", "batch": 10},
    9: {"load_zone": None, "parallel": True, "batch": 4},
    10: {"load_zone": None, "batch": 1, "agent1_style": 1},
}


def trial_config(trial: int) -> PipelineConfig:
    return PipelineConfig(parallel_generation=bool(TRIALS[trial].get("parallel")), seed=trial)


def split_tag(tag: str) -> tuple[list[str], str, int]:
    """``agent2:3:Material:OSB:attempt1`` -> (["agent2", "3", "Material"], "OSB", 1)."""
    head, attempt = tag.rsplit(":attempt", 1)
    head, name = head.rsplit(":", 1)
    prefix, rest = head.split(":", 1)
    if prefix == "task":
        parts = [prefix] + rest.split(":", 2)
    else:
        parts = [prefix] + rest.split(":", 1)
    return parts, name, int(attempt)


def iunit_responder(trial: int):
    v = TRIALS[trial]
    state = {"malformed": bool(v.get("malformed_repair_once"))}

    def respond(req) -> str:
        tag = req.tag
        if tag.startswith("agent1:"):
            return agent1_reply(v.get("agent1_style", 0))
        if tag.startswith("agent2:"):
            (_, n, cls), name, attempt = split_tag(tag)
            n = int(n)
            a = assignments(name, v)
            if v.get("people_violation_once") and name == "People_iUnit" and attempt == 1:
                a = {**a, "Enable ASHRAE 55 Comfort Warnings": "Yes"}
                spec = GenerationSpec.create(SCHEMA, cls, a)
                obj, report = forge_object(SCHEMA, spec, PlaceholderSource(1000 * trial + n))
                # the model claims it followed the rules
                report.user_set.remove("Enable ASHRAE 55 Comfort Warnings")
                report.defaulted.append("Enable ASHRAE 55 Comfort Warnings")
                return f"Here is the {cls} object for {name}:\n\n```\n{serialize_object(obj)}```\n\n{summary_text(report)}"
            return generation_reply(cls, name, a, 1000 * trial + n, style=trial + n)
        if tag.startswith("agent3:"):
            if state["malformed"]:
                state["malformed"] = False
                reply = repair_reply(req.prompt, v["batch"])
                return reply.split("//[", 1)[0]
            return repair_reply(req.prompt, v["batch"])
        raise KeyError(f"no scripted answer for {tag}")

    return respond


def run_trial(trial: int, initial_text: str):
    transcript = Transcript(TRANSCRIPTS / f"iunit_trial{trial:02d}.jsonl", stamp=False)
    if transcript.path.exists():
        transcript.path.unlink()
    chat = RecordingBackend(ScriptedBackend(iunit_responder(trial)), transcript)
    pipe = Pipeline(SCHEMA, chat, MockRunner(SCHEMA), trial_config(trial))
    final, runlog = pipe.generate_idf(IUNIT_DESCRIPTION, parse_idf(initial_text))
    # parallel runs append in completion order; sort so the file is reproducible
    transcript.save(transcript.path, key=lambda e: (e.tag, e.digest))
    print(f"trial {trial}: {runlog.outcome.value}, rounds={len(runlog.repair_rounds)}, "
          f"substitutions={len(runlog.substitutions)}, calls={len(transcript)}")
    return final, runlog


# ---------------------------------------------------------------------------
# modification case


MODIFY_REQUEST = (
    "Here is the IDF file and I want to 1) create a people object for the only zone, "
    "2) add a schedule for exterior lights that starts at 6:00 PM and ends at 6:00 AM, "
    "and 3) change the R13 layer to be R15."
)

MODIFY_PLAN = [
    PlanEntry("create a people object for the only zone", (
        PlanJob("create", "People", "ZONE ONE PEOPLE", "Create a People object for the only zone, ZONE ONE, with 10 people."),
    )),
    PlanEntry("add a schedule for exterior lights", (
        PlanJob("create", "Schedule:Compact", "NewSchedule",
                "Create a Fraction schedule for the exterior lights for all days: 0 until 06:00, 1 until 18:00, 0 until 24:00."),
        PlanJob("modify", "Exterior:Lights", "ExtLights", "Set the Schedule Name to NewSchedule."),
    )),
    PlanEntry("change the R13 layer to be R15", (
        PlanJob("modify", "Material:NoMass", "R13LAYER",
                "Change the thermal resistance from R-13 to R-15, which is 2.64 m2-K/W; keep the name."),
    )),
]

ACTIVITY = IdfObject.of("Schedule:Compact", "Activity_Level", "", "Through: 12/31", "For: AllDays", "Until: 24:00", "120")


def modify_responder(plan_text: str):
    def respond(req) -> str:
        tag = req.tag
        if tag.startswith("central:"):
            return "Here is the plan.\n\n" + plan_text
        if tag.startswith("task:"):
            (_, _, action, cls), name, _ = split_tag(tag)
            if action == "create" and cls == "People":
                a = {"Name": name, "Zone or ZoneList or Space or SpaceList Name": "ZONE ONE",
                     "Number of People Calculation Method": "People", "Number of People": 10}
                return generation_reply(cls, name, a, 7, style=0)
            if action == "create" and cls == "Schedule:Compact":
                a = compact("Fraction", "Through: 12/31", "For: AllDays", "Until: 06:00", "0",
                            "Until: 18:00", "1", "Until: 24:00", "0")
                a["Name"] = name
                return generation_reply(cls, name, a, 8, style=1)
            current = parse_idf(req.prompt.split("```\n", 1)[1].split("```", 1)[0]).objects[0]
            if cls == "Exterior:Lights":
                new = current.with_value(2, FieldValue.literal("NewSchedule", current.value(2).comment))
            elif cls == "Material:NoMass":
                new = current.with_value(3, FieldValue.literal("2.64", current.value(3).comment))
            else:
                raise KeyError(tag)
            return f"Here is the modified object.\n\n```\n{serialize_object(new)}```\n"
        if tag.startswith("agent3:"):
            return repair_reply(req.prompt, 10, additions=[ACTIVITY],
                                extra_known={("people", "activity level schedule name"): "Activity_Level"})
        raise KeyError(f"no scripted answer for {tag}")

    return respond


def record_modify(name: str, doc_text: str, request: str, plan) -> None:
    transcript = Transcript(TRANSCRIPTS / f"{name}.jsonl", stamp=False)
    if transcript.path.exists():
        transcript.path.unlink()
    chat = RecordingBackend(ScriptedBackend(modify_responder(format_plan(plan))), transcript)
    final, runlog = Pipeline(SCHEMA, chat).modify_idf(parse_idf(doc_text), request)
    print(f"{name}: {runlog.outcome.value}, failures={runlog.failures}, calls={len(transcript)}")
    return final


# ---------------------------------------------------------------------------
# seeded faults for the repair loop


def seeded_fault_idf(simple: str) -> str:
    doc = parse_idf(simple)
    objs = []
    for o in doc.objects:
        if o.class_name == "Exterior:Lights":
            o = o.with_value(2, FieldValue.literal("NightSchedule", o.value(2).comment))
        objs.append(o)
    people = IdfObject.of("People", "ZONE ONE PEOPLE", "ZONE ONE", "TBD4829301756", "People", "10", "", "", "0.3",
                          "", "ALWAYS ON")
    text = serialize(type(doc)(tuple(objs) + (people,), doc.leading_comments), SCHEMA)
    return canonical("! Seeded faults: a dangling Exterior:Lights schedule and a People schedule placeholder.\n" + text)


def dangling_only_idf(simple: str) -> str:
    doc = parse_idf(simple)
    objs = [o.with_value(2, FieldValue.literal("NightSchedule", o.value(2).comment)) if o.class_name == "Exterior:Lights" else o
            for o in doc.objects]
    return canonical(serialize(type(doc)(tuple(objs), doc.leading_comments), SCHEMA))


def record_repair(name: str, doc_text: str, first_reply=None) -> None:
    transcript = Transcript(TRANSCRIPTS / f"{name}.jsonl", stamp=False)
    if transcript.path.exists():
        transcript.path.unlink()
    state = {"first": first_reply}

    def respond(req):
        if state["first"] is not None:
            reply, state["first"] = state["first"](req), None
            return reply
        return repair_reply(req.prompt, 10)

    chat = RecordingBackend(ScriptedBackend(respond), transcript)
    runlog = RunLog()
    Pipeline(SCHEMA, chat).debug_loop(parse_idf(doc_text), runlog)
    print(f"{name}: {runlog.outcome.value}, rounds={len(runlog.repair_rounds)}, calls={len(transcript)}")


def eleven_tuples(req) -> str:
    errors, idf_text = _split_repair_prompt(req.prompt)
    doc = parse_idf(idf_text)
    objs = [o for o in doc.objects if SCHEMA.get(o.class_name).owns_name][:11]
    return format_repair_response(RepairSet(objs, [(o.class_name, o.name) for o in objs]), SCHEMA)


RAG_QUESTION = "What is the purpose of BEMcyclopedia"
RAG_ANSWER = (
    "BEMcyclopedia is a free online reference written for building energy modelers. "
    "Its goal is to gather definitions, modeling guidance, and worked examples in a single place "
    "so that both newcomers and experienced practitioners can look up a concept quickly and apply it "
    "in their own projects. The surrounding passages show the range it covers, from thermal zoning "
    "and construction layers to schedules, weather files, and reading simulation error files."
)


def record_rag() -> None:
    index = build_index(chunk_corpus(read_corpus_dir(FIX / "rag" / "corpus")), StubEmbedder())
    transcript = Transcript(TRANSCRIPTS / "rag_about.jsonl", stamp=False)
    if transcript.path.exists():
        transcript.path.unlink()
    chat = RecordingBackend(ScriptedBackend(lambda req: RAG_ANSWER), transcript)
    _, cited = answer(index, RAG_QUESTION, 4, StubEmbedder(), chat)
    print(f"rag: cited={cited}")


def main() -> None:
    simple = simple_idf()
    write(FIX / "simple_1zone.idf", simple)
    initial = iunit_initial_idf()
    write(FIX / "iunit" / "initial.idf", initial)
    write(FIX / "iunit" / "description.txt", IUNIT_DESCRIPTION)
    write(FIX / "iunit" / "agent1_response.txt", agent1_reply(0))
    write(FIX / "iunit" / "table1.tsv", "".join(f"{i}\t{t}\t{n}\n" for i, (t, n, _) in enumerate(TABLE, start=1)))
    for trial in TRIALS:
        final, _ = run_trial(trial, initial)
        if trial == 1:
            write(FIX / "iunit" / "final_trial01.idf", serialize(final, SCHEMA))

    final = record_modify("modify_simple", simple, MODIFY_REQUEST, MODIFY_PLAN)
    write(FIX / "modify_simple_expected.idf", serialize(final, SCHEMA))
    missing = MODIFY_PLAN[:2] + [PlanEntry("change the R19 layer", (
        PlanJob("modify", "Material:NoMass", "R19LAYER", "Change the thermal resistance to 3.35 m2-K/W."),))]
    record_modify("modify_missing_target", simple, MODIFY_REQUEST.replace("R13 layer", "R19 layer"), missing)

    seeded = seeded_fault_idf(simple)
    write(FIX / "seeded_fault.idf", seeded)
    record_repair("seeded_fault", seeded)
    dangling = dangling_only_idf(simple)
    write(FIX / "seeded_dangling.idf", dangling)
    record_repair("seeded_dangling", dangling)
    record_repair("repair_count_exceeded", dangling, first_reply=eleven_tuples)
    record_rag()


if __name__ == "__main__":
    main()
