"""EnergyPlus command-line stand-in built on the ``pyenergyplus`` API.

Accepts the subset of the ``energyplus`` CLI that ExternalRunner uses:

    python tools/eplus_shim.py [-D] [-x] -d <outdir> [-w <weather>] <input.idf>

The API wheel ships no ``Energy+.idd``, so ``-x`` needs ``BEMLLM_EXPAND_IDD``
pointing at a full IDD for ExpandObjects.  Inputs written against the 23.2
dictionary get the one enum rename the newer engine requires.
"""

from __future__ import annotations

import argparse
import os
import shutil
import subprocess
import sys
from pathlib import Path

RENAMES = {
    # People, Mean Radiant Temperature Calculation Type
    "ZoneAveraged,": "EnclosureAveraged,",
    "ZoneAveraged;": "EnclosureAveraged;",
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("-D", "--design-day", action="store_true")
    parser.add_argument("-x", "--expandobjects", action="store_true")
    parser.add_argument("-d", "--output-directory", required=True)
    parser.add_argument("-w", "--weather")
    parser.add_argument("idf")
    args = parser.parse_args(argv)

    from pyenergyplus.api import EnergyPlusAPI

    out = Path(args.output_directory)
    out.mkdir(parents=True, exist_ok=True)
    text = Path(args.idf).read_text(encoding="utf-8")
    for old, new in RENAMES.items():
        text = text.replace(old, new)
    work = out / "shim_in.idf"
    work.write_text(text, encoding="utf-8")
    if args.expandobjects:
        idd = os.environ.get("BEMLLM_EXPAND_IDD")
        expander = Path(sys.modules["pyenergyplus"].__file__).parents[1] / "ExpandObjects"
        if not idd or not expander.exists():
            print("ExpandObjects needs BEMLLM_EXPAND_IDD and the ExpandObjects binary", file=sys.stderr)
            return 2
        shutil.copy(idd, out / "Energy+.idd")
        shutil.copy(work, out / "in.idf")
        subprocess.run([str(expander)], cwd=out, check=True, capture_output=True)
        if (out / "expanded.idf").exists():
            work = out / "expanded.idf"
    engine_args = []
    if args.design_day:
        engine_args.append("-D")
    engine_args += ["-d", str(out)]
    if args.weather:
        engine_args += ["-w", args.weather]
    engine_args.append(str(work))
    api = EnergyPlusAPI()
    state = api.state_manager.new_state()
    return api.runtime.run_energyplus(state, engine_args)


if __name__ == "__main__":
    sys.exit(main())
