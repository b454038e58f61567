from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bemllm.errors import NegativeMagnitude
from bemllm.units import FACTORS, KINDS, convert_ip_si, convert_si_ip

# independent values for each kind, from the defining constants
FT, IN, LB, BTU, HR, DEG = 0.3048, 0.0254, 0.45359237, 1055.05585262, 3600.0, 5.0 / 9.0
DERIVED = {
    "length_in": IN,
    "r_value": FT**2 * DEG * HR / BTU,
    "conductivity": BTU * IN / (HR * FT**2 * DEG),
    "density": LB / FT**3,
    "specific_heat": BTU / (LB * DEG),
    "u_factor": BTU / (HR * FT**2 * DEG),
}


def test_factors_agree_with_definitions():
    assert set(FACTORS) == set(DERIVED)
    for kind, factor in FACTORS.items():
        assert math.isclose(factor, DERIVED[kind], rel_tol=2e-5), kind


def test_case_values():
    assert round(convert_ip_si("r_value", 13), 3) == 2.289
    assert round(convert_ip_si("r_value", 15), 3) == 2.642
    assert convert_ip_si("length_in", 0.05) == pytest.approx(0.00127, abs=1e-15)
    assert abs(convert_ip_si("density", 59.3) - 949.3) / 949.3 < 0.001
    assert round(convert_ip_si("temperature_f", 76), 2) == 24.44
    assert convert_ip_si("temperature_F->C", 32) == 0.0
    assert convert_ip_si("temperature_f", -40) == -40.0


def test_table_conductivity_rows_disagree():
    # the recorded table's conductivities do not follow the exact factor
    assert abs(convert_ip_si("conductivity", 3.472) - 0.5008) < 0.001
    assert abs(convert_ip_si("conductivity", 0.8) - 0.1154) < 0.001


def test_negative_magnitudes():
    for kind in FACTORS:
        with pytest.raises(NegativeMagnitude):
            convert_ip_si(kind, -1)
    assert convert_ip_si("temperature_f", -10) < 0


def test_bad_inputs():
    with pytest.raises(ValueError):
        convert_ip_si("furlongs", 1)
    with pytest.raises(ValueError):
        convert_ip_si("r_value", float("nan"))


@settings(max_examples=300)
@given(st.sampled_from(KINDS), st.floats(min_value=0, max_value=1e9, allow_nan=False))
def test_round_trip(kind, value):
    back = convert_si_ip(kind, convert_ip_si(kind, value))
    assert math.isclose(back, value, rel_tol=1e-9, abs_tol=1e-9)
