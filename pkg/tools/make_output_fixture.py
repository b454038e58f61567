"""Regenerate the annual hourly CSV fixture used by the chart tests.

Runs the DOE reference large office shipped with ``pyenergyplus`` against the
Phoenix TMY3 weather file, with hourly end-use meters and site weather
variables requested, and stores ReadVarsESO's CSV gzipped.  Needs the
``pyenergyplus`` API (EnergyPlus 25.2 was used for the committed file).

    python tools/make_output_fixture.py
"""

from __future__ import annotations

import gzip
import re
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
OUT = ROOT / "tests" / "fixtures" / "output" / "largeoffice_phoenix_hourly.csv.gz"

METERS = (
    "Heating:Electricity",
    "Heating:NaturalGas",
    "Cooling:Electricity",
    "InteriorLights:Electricity",
    "ExteriorLights:Electricity",
    "InteriorEquipment:Electricity",
    "Fans:Electricity",
    "Pumps:Electricity",
    "HeatRejection:Electricity",
    "WaterSystems:NaturalGas",
)
WEATHER = (
    "Site Outdoor Air Drybulb Temperature",
    "Site Outdoor Air Wetbulb Temperature",
    "Site Outdoor Air Relative Humidity",
    "Site Wind Speed",
    "Site Direct Solar Radiation Rate per Area",
    "Site Diffuse Solar Radiation Rate per Area",
)
DROP = {
    "output:variable",
    "output:meter",
    "output:meter:meterfileonly",
    "output:meter:cumulative",
    "output:table:summaryreports",
    "output:table:monthly",
    "outputcontrol:table:style",
    "output:sqlite",
    "output:variabledictionary",
    "environmentalimpactfactors",
    "fuelfactors",
}


def prepared_model(source: str) -> str:
    kept = []
    for obj in re.split(r"(?<=;)", source):
        cls = re.sub(r"!.*", "", obj).strip().split(",")[0].strip().lower()
        if cls in DROP or cls.startswith("utilitycost:"):
            continue
        kept.append(obj)
    text = "".join(kept)
    # annual weather-file run only: no sizing-period or HVAC sizing rows in the CSV
    text = re.sub(r"\w+(,\s*!- Run Simulation for Sizing Periods)", r"NO\1", text)
    text = re.sub(r"\w+(,\s*!- Run Simulation for Weather File Run Periods)", r"YES\1", text)
    text = re.sub(r"\w+(,\s*!- Do HVAC Sizing Simulation for Sizing Periods)", r"NO\1", text)
    text += "\n" + "".join(f"Output:Meter,{m},Hourly;\n" for m in METERS)
    text += "".join(f"Output:Variable,Environment,{v},Hourly;\n" for v in WEATHER)
    return text


def main() -> int:
    import pyenergyplus
    from pyenergyplus.api import EnergyPlusAPI

    data = Path(pyenergyplus.__file__).parent / "data"
    model = data / "model" / "RefBldgLargeOfficeNew2004_Chicago.idf"
    weather = data / "weather" / "USA_AZ_Phoenix-Sky.Harbor.Intl.AP.722780_TMY3.epw"
    with tempfile.TemporaryDirectory() as tmp:
        idf = Path(tmp) / "largeoffice.idf"
        idf.write_text(prepared_model(model.read_text(encoding="utf-8")), encoding="utf-8")
        api = EnergyPlusAPI()
        code = api.runtime.run_energyplus(api.state_manager.new_state(), ["-r", "-d", tmp, "-w", str(weather), str(idf)])
        if code != 0:
            print(f"EnergyPlus exited with {code}", file=sys.stderr)
            return 1
        csv_bytes = (Path(tmp) / "eplusout.csv").read_bytes()
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_bytes(gzip.compress(csv_bytes, compresslevel=9, mtime=0))
    print(f"wrote {OUT.relative_to(ROOT)} ({len(csv_bytes)} bytes uncompressed)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
