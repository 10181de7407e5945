"""Unit conversions and link normalization shared by every module."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .entities import Channel, LinkSpec, Pump, SpanSpec
from .errors import ChannelOverlapError, ConfigError, FrequencyTieError, TableCoverageError

THZ = 1e12
GHZ = 1e9
KM = 1e3
UM2 = 1e-12
PS2_PER_KM = 1e-24 / KM
PS3_PER_KM = 1e-36 / KM
PS4_PER_KM = 1e-48 / KM

# 10*log10(e): converts nepers of power to dB
_DB_PER_NEPER = 10.0 / math.log(10.0)


def dbm_to_watt(dbm: float) -> float:
    return 1e-3 * 10.0 ** (dbm / 10.0)


def watt_to_dbm(watt):
    watt = np.asarray(watt, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(watt / 1e-3)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(ratio):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(ratio, dtype=float))


def db_per_km_to_field_alpha(db_per_km: float) -> float:
    """Power loss in dB/km to field attenuation in 1/m (P ∝ exp(-2αz))."""
    return db_per_km / (2.0 * _DB_PER_NEPER) / KM


def field_alpha_to_db_per_km(alpha: float) -> float:
    return alpha * 2.0 * _DB_PER_NEPER * KM


def per_km(value_per_m: float) -> float:
    return value_per_m * KM


@dataclass(frozen=True)
class WaveOrder:
    """Merged ascending-frequency order of channels and pumps.

    `order[r]` is the source index of row r, where sources 0..n_ch-1 are channels and
    n_ch.. are pumps; `inverse[s]` is the row of source s.
    """

    order: np.ndarray
    inverse: np.ndarray
    frequencies: np.ndarray
    n_channels: int

    @property
    def channel_rows(self) -> np.ndarray:
        return self.inverse[: self.n_channels]

    @property
    def pump_rows(self) -> np.ndarray:
        return self.inverse[self.n_channels:]


def grid_order(channels: Sequence[Channel], pumps: Sequence[Pump]) -> WaveOrder:
    """Merge channels and pumps into strictly ascending frequency order."""
    freqs = np.array(
        [c.center_frequency for c in channels] + [p.center_frequency for p in pumps], dtype=float
    )
    order = np.argsort(freqs, kind="stable")
    sorted_freqs = freqs[order]
    ties = np.nonzero(np.diff(sorted_freqs) <= 0)[0]
    if ties.size:
        tied = sorted_freqs[ties[0]]
        raise FrequencyTieError(f"frequency tie at {tied / THZ:.6f} THz", frequencyThz=tied / THZ)
    inverse = np.empty_like(order)
    inverse[order] = np.arange(order.size)
    return WaveOrder(order=order, inverse=inverse, frequencies=sorted_freqs, n_channels=len(channels))


def _check_overlap(channels: Sequence[Channel]) -> None:
    for lower, upper in zip(channels, channels[1:]):
        if lower.band_end > upper.band_start:
            raise ChannelOverlapError(
                f"channels at {lower.center_frequency / THZ:.4f} and "
                f"{upper.center_frequency / THZ:.4f} THz overlap",
                lowerThz=lower.center_frequency / THZ,
                upperThz=upper.center_frequency / THZ,
            )


def _check_coverage(span: SpanSpec, f_min: float, f_max: float, index: int) -> None:
    fiber = span.fiber
    for name, table in (("loss", fiber.loss), ("effective_area", fiber.effective_area)):
        if not table.covers(f_min, f_max):
            raise TableCoverageError(
                f"span {index + 1}: fiber '{fiber.name}' {name} table does not cover "
                f"{f_min / THZ:.4f}-{f_max / THZ:.4f} THz",
                span=index + 1, table=name,
            )
        values = np.asarray(table(np.array([f_min, f_max])))
        if np.any(np.asarray(table.values) <= 0) or np.any(values <= 0):
            raise ConfigError(f"span {index + 1}: fiber '{fiber.name}' {name} must be positive",
                              span=index + 1, table=name)


def pumps_inside_signal_band(link: LinkSpec) -> List[Tuple[int, Pump]]:
    """Pumps whose frequency falls between the lowest and highest channel."""
    if not link.channels:
        return []
    lo = link.channels[0].band_start
    hi = link.channels[-1].band_end
    return [
        (n, pump)
        for n, span in enumerate(link.spans)
        for pump in span.pumps
        if lo <= pump.center_frequency <= hi
    ]


def normalize_link(link: LinkSpec) -> LinkSpec:
    """Sort channels ascending and check every cross-field invariant.

    Idempotent: a normalized link is returned unchanged (equal by value).
    """
    if not link.spans:
        raise ConfigError("link needs at least one span")
    if not link.channels:
        raise ConfigError("link needs at least one channel")
    channels = tuple(sorted(link.channels, key=lambda c: c.center_frequency))
    _check_overlap(channels)
    for index, span in enumerate(link.spans):
        wave_order = grid_order(channels, span.pumps)
        f_min, f_max = float(wave_order.frequencies[0]), float(wave_order.frequencies[-1])
        low_edge = min(f_min, channels[0].band_start)
        high_edge = max(f_max, channels[-1].band_end)
        _check_coverage(span, low_edge, high_edge, index)
        if span.length <= 10 * link.options.solver.step:
            raise ConfigError(
                f"span {index + 1}: solver step must be below a tenth of the span length",
                span=index + 1,
            )
    return LinkSpec(spans=link.spans, channels=channels, options=link.options)
