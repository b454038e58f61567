"""Capture real EnergyPlus .err files for the parser tests.

Runs committed IDF fixtures through ExternalRunner with tools/eplus_shim.py
(design days only) and saves each raw .err under tests/fixtures/err/.
HVACTemplate models need ``BEMLLM_EXPAND_IDD`` pointing at a full IDD.

    BEMLLM_EXPAND_IDD=/path/to/Energy+.idd python tools/capture_err.py
"""

from __future__ import annotations

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from bemllm.idd import load_fixture_schema  # noqa: E402
from bemllm.idf import parse_idf  # noqa: E402
from bemllm.simulator import ExternalRunner  # noqa: E402

FIX = ROOT / "tests" / "fixtures"
SHIM = [sys.executable, str(ROOT / "tools" / "eplus_shim.py")]

CASES = (
    ("simple_1zone.idf", "simple_1zone.err", False),
    ("seeded_fault.idf", "seeded_fault.err", False),
    ("seeded_dangling.idf", "seeded_dangling.err", False),
    ("iunit/final_trial01.idf", "iunit_final_trial01.err", True),
)


def main() -> int:
    schema = load_fixture_schema()
    out_dir = FIX / "err"
    out_dir.mkdir(exist_ok=True)
    for source, target, expand in CASES:
        doc = parse_idf((FIX / source).read_text(encoding="utf-8"))
        runner = ExternalRunner(SHIM, design_day_only=True, expand_objects=expand, schema=schema)
        report = runner.run(doc)
        (out_dir / target).write_text(report.raw_err, encoding="utf-8")
        print(f"{source}: {report.summary()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
