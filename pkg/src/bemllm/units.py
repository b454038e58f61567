"""IP to SI conversions for the quantities found in building envelope and HVAC specs."""

from __future__ import annotations

import math

from .errors import NegativeMagnitude

# multiply an IP value by the factor to get SI
FACTORS: dict[str, float] = {
    "length_in": 0.0254,  # in -> m
    "r_value": 0.17611,  # h.ft2.F/Btu -> m2.K/W
    "conductivity": 0.144228,  # Btu.in/h.ft2.F -> W/m.K
    "density": 16.0185,  # lb/ft3 -> kg/m3
    "specific_heat": 4186.8,  # Btu/lb.F -> J/kg.K
    "u_factor": 5.67826,  # Btu/h.ft2.F -> W/m2.K
}

TEMPERATURE = "temperature_f"

KINDS = tuple(FACTORS) + (TEMPERATURE,)

_ALIASES = {
    "length": "length_in",
    "length_in->m": "length_in",
    "r": "r_value",
    "resistance": "r_value",
    "temperature": TEMPERATURE,
    "temperature_f->c": TEMPERATURE,
    "u": "u_factor",
}


def _kind(kind: str) -> str:
    key = kind.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in KINDS:
        raise ValueError(f"unknown conversion kind {kind!r}; expected one of {', '.join(KINDS)}")
    return key


def _check(kind: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"value must be finite, got {value!r}")
    if kind != TEMPERATURE and value < 0:
        raise NegativeMagnitude(f"{kind} cannot be negative: {value}")
    return value


def convert_ip_si(kind: str, value: float) -> float:
    """Convert ``value`` from IP to SI units.

    >>> round(convert_ip_si("r_value", 13), 3)
    2.289
    >>> round(convert_ip_si("temperature_f", 76), 2)
    24.44
    """
    kind = _kind(kind)
    value = _check(kind, value)
    if kind == TEMPERATURE:
        return (value - 32.0) * 5.0 / 9.0
    return value * FACTORS[kind]


def convert_si_ip(kind: str, value: float) -> float:
    """Inverse of :func:`convert_ip_si`."""
    kind = _kind(kind)
    value = _check(kind, value)
    if kind == TEMPERATURE:
        return value * 9.0 / 5.0 + 32.0
    return value / FACTORS[kind]
