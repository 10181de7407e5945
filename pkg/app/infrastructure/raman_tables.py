"""Raman gain tables shipped with the package."""

from typing import Callable, Dict

from app.domain.entities import RamanGainTable
from app.domain.errors import ConfigError
from app.domain.normalization import KM, THZ

SYNTHETIC_TRIANGLE = "synthetic-triangle"

# 1/(W·km); a ramp to the silica gain peak followed by a linear roll-off
_TRIANGLE_PEAK = 0.25
_TRIANGLE_PEAK_THZ = 13.2
_TRIANGLE_CUTOFF_THZ = 40.0


def synthetic_triangle() -> RamanGainTable:
    """Demo table for tests and examples, not a measured fiber."""
    return RamanGainTable(
        offsets=(0.0, _TRIANGLE_PEAK_THZ * THZ, _TRIANGLE_CUTOFF_THZ * THZ),
        gains=(0.0, _TRIANGLE_PEAK / KM, 0.0),
        name=SYNTHETIC_TRIANGLE,
        synthetic=True,
    )


_BUILTINS: Dict[str, Callable[[], RamanGainTable]] = {
    SYNTHETIC_TRIANGLE: synthetic_triangle,
}


def builtin_names():
    return sorted(_BUILTINS)


def builtin_table(name: str) -> RamanGainTable:
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ConfigError(f"unknown builtin raman gain table '{name}'; "
                          f"available: {', '.join(builtin_names())}", field="raman_gain")
