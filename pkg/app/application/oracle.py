"""Numerical reference for the restricted IGN double integral.

The inner z-integral is evaluated exactly for the piecewise-linear interpolant of a
normalized power envelope, so it is additive over grid panels and independent of where
a span is split. Its squared magnitude, the spectral weight W(χ), is tabulated once per
(span, interferer) together with its running integral C(χ). Along the CUT band the
phase mismatch is linear in f2, which turns the f2 integral into a difference of C;
the interferer band is integrated with composite Simpson on a sinh-graded grid
clustered where the integrand peaks, and the grid is doubled until the result settles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from app.application.cfm import NLI_PREFACTOR
from app.application.fitting import LinkFits, split_index, two_segment_power
from app.application.raman import LinkPropagation
from app.crosscutting.logging import get_logger
from app.domain.dispersion import beta2_eff, chi, gamma_nl
from app.domain.entities import FiberSpec, LinkSpec, MlFactors, NliReport, PowerProfile, TwoSegmentFit
from app.domain.errors import EngineError, QuadratureError
from app.domain.normalization import THZ, watt_to_dbm
from app.domain.options import OracleMode, OracleOptions
from app.domain.ports import PowerEnvelope

logger = get_logger(__name__)

WHOLE, START, END = "whole", "start", "end"

# W(χ) oscillates with period 2π/L; the table resolves that period with this many points
_POINTS_PER_PERIOD = 32
_MAX_TABLE_POINTS = 1 << 15
_CHUNK_ELEMENTS = 1 << 21
_SMALL_THETA = 1e-3
# phase advance per profile panel above which the interpolant under-resolves e^{jχz}
_MAX_PANEL_PHASE = 1.0
_BETA2_FLOOR = 1e-35


@dataclass(frozen=True, eq=False)
class SampledEnvelope:
    """Solver profile of one channel, normalized to its span-start power."""

    z: np.ndarray
    values: np.ndarray
    split_index: int

    @classmethod
    def from_profile(cls, profile: PowerProfile, channel: int, min_samples: int = 8) -> "SampledEnvelope":
        powers = profile.channel(channel)
        if powers[0] <= 0:
            raise EngineError(f"channel {channel} carries no power", channel=channel)
        return cls(profile.z, powers / powers[0], split_index(profile.z, powers, min_samples))


@dataclass(frozen=True, eq=False)
class FittedEnvelope:
    """Two-segment loss model sampled on the solver grid."""

    z: np.ndarray
    values: np.ndarray
    split_index: int

    @classmethod
    def from_fit(cls, fit: TwoSegmentFit, z: np.ndarray) -> "FittedEnvelope":
        length = float(z[-1])
        values = two_segment_power(fit, z, length) / fit.st.p_start
        index = len(z) - 1 if fit.end is None else int(np.argmin(np.abs(z - fit.split_z)))
        return cls(np.asarray(z, dtype=float), values, index)


def _odd_kernel(theta: np.ndarray) -> np.ndarray:
    """(sin θ - θ cos θ) / θ², with its Taylor series near zero."""
    small = np.abs(theta) < _SMALL_THETA
    safe = np.where(small, 1.0, theta)
    exact = (np.sin(safe) - safe * np.cos(safe)) / safe ** 2
    series = theta / 3.0 - theta ** 3 / 30.0
    return np.where(small, series, exact)


def _panel_integrals(z: np.ndarray, values: np.ndarray, chi: np.ndarray) -> np.ndarray:
    """∫ p(z) e^{jχz} dz over every panel of the linear interpolant; shape [chi, panel]."""
    h = np.diff(z)
    centre = 0.5 * (z[:-1] + z[1:])
    mean = 0.5 * (values[:-1] + values[1:])
    slope_span = np.diff(values)
    theta = chi[:, None] * h[None, :] / 2.0
    amplitude = mean * np.sinc(theta / np.pi) + 0.5j * slope_span * _odd_kernel(theta)
    return h * np.exp(1j * chi[:, None] * centre[None, :]) * amplitude


def _segment_amplitudes(envelope: PowerEnvelope, chi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Start and end segment amplitudes for every χ, computed in bounded chunks."""
    z = np.asarray(envelope.z, dtype=float)
    values = np.asarray(envelope.values, dtype=float)
    split = int(envelope.split_index)
    rows = max(1, _CHUNK_ELEMENTS // max(len(z) - 1, 1))
    start = np.empty(chi.size, dtype=complex)
    end = np.empty(chi.size, dtype=complex)
    for first in range(0, chi.size, rows):
        panels = _panel_integrals(z, values, chi[first:first + rows])
        start[first:first + rows] = panels[:, :split].sum(axis=1)
        end[first:first + rows] = panels[:, split:].sum(axis=1)
    return start, end


def inner_z_integral(envelope: PowerEnvelope, chi, part: str = WHOLE):
    """∫ P(z)/P(0) · e^{jχz} dz over the whole span or one of its segments.

    `part` is "whole", "start" (up to the split point) or "end" (from the split point).
    Returns a complex scalar for scalar χ, an array otherwise.
    """
    chi_arr = np.atleast_1d(np.asarray(chi, dtype=float))
    start, end = _segment_amplitudes(envelope, chi_arr)
    if part == WHOLE:
        result = start + end
    elif part == START:
        result = start
    elif part == END:
        result = end
    else:
        raise ValueError(f"unknown segment part: {part}")
    return complex(result[0]) if np.ndim(chi) == 0 else result


def spectral_weight(envelope: PowerEnvelope, chi, mode: OracleMode) -> np.ndarray:
    """|∫…|² for the exact mode, |∫start|² + |∫end|² for the split and fitted modes."""
    chi_arr = np.atleast_1d(np.asarray(chi, dtype=float))
    start, end = _segment_amplitudes(envelope, chi_arr)
    if mode is OracleMode.EXACT:
        return np.abs(start + end) ** 2
    return np.abs(start) ** 2 + np.abs(end) ** 2


@dataclass(frozen=True, eq=False)
class SpectralTable:
    """W(χ) on a uniform grid over [0, χ_max] and its running Simpson integral."""

    chi: np.ndarray
    weight: np.ndarray
    cumulative: np.ndarray

    @classmethod
    def build(cls, envelope: PowerEnvelope, chi_max: float, mode: OracleMode) -> "SpectralTable":
        z = np.asarray(envelope.z, dtype=float)
        step = 2.0 * np.pi / (_POINTS_PER_PERIOD * float(z[-1]))
        points = max(int(np.ceil(chi_max / step)) + 1, 3)
        if points > _MAX_TABLE_POINTS:
            logger.warning("spectral_table_capped", requested=points, used=_MAX_TABLE_POINTS,
                           chi_max=chi_max)
            points = _MAX_TABLE_POINTS
        panel_phase = chi_max * float(np.max(np.diff(z)))
        if panel_phase > _MAX_PANEL_PHASE:
            logger.warning("z_step_coarse_for_chi", chi_max=chi_max, panel_phase=panel_phase,
                           hint="reduce solver.step")
        chi = np.linspace(0.0, max(chi_max, step * 2), points)
        weight = spectral_weight(envelope, chi, mode)
        cumulative = cumulative_simpson(weight, x=chi, initial=0.0)
        return cls(chi, weight, cumulative)

    def _odd_cumulative(self, chi: np.ndarray) -> np.ndarray:
        """C(χ) extended to negative χ; W is even, so C is odd."""
        return np.sign(chi) * np.interp(np.abs(chi), self.chi, self.cumulative)

    def band_integral(self, chi_lo: np.ndarray, chi_hi: np.ndarray, width: float) -> np.ndarray:
        """∫ W dν over a band of `width` across which χ runs linearly from chi_lo to chi_hi."""
        chi_lo = np.asarray(chi_lo, dtype=float)
        chi_hi = np.asarray(chi_hi, dtype=float)
        rise = chi_hi - chi_lo
        flat = np.abs(rise) < self.chi[1]
        safe = np.where(flat, 1.0, rise)
        exact = width * (self._odd_cumulative(chi_hi) - self._odd_cumulative(chi_lo)) / safe
        middle = np.interp(np.abs(0.5 * (chi_lo + chi_hi)), self.chi, self.weight)
        return np.where(flat, width * middle, exact)


def graded_nodes(x_lo: float, x_hi: float, panels: int,
                 scale: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes x = x0 + w sinh(u) on uniform u, clustered at the point of [x_lo, x_hi] nearest 0.

    Returns the u nodes, the mapped x nodes and dx/du.
    """
    x0 = min(max(0.0, x_lo), x_hi)
    width = min(scale, x_hi - x_lo) if scale > 0 else x_hi - x_lo
    u = np.linspace(np.arcsinh((x_lo - x0) / width), np.arcsinh((x_hi - x0) / width), panels + 1)
    return u, x0 + width * np.sinh(u), width * np.cosh(u)


def island_integral(table: SpectralTable, fiber: FiberSpec, f_cut: float, r_cut: float,
                    f_m: float, r_m: float, panels: int, length: float) -> float:
    """∬ W(χ(f1, f2, f_cut)) df1 df2 over the (interferer, CUT) island.

    Along the CUT band χ is taken linear between its exact values at the band edges.
    """
    x_lo = f_m - r_m / 2.0 - f_cut
    x_hi = f_m + r_m / 2.0 - f_cut
    slope = abs(4.0 * np.pi ** 2 * float(beta2_eff(f_m, f_cut, fiber)))
    scale = (2.0 * np.pi / length) / (slope * r_cut / 2.0) if slope > _BETA2_FLOOR else 0.0
    u, x, jacobian = graded_nodes(x_lo, x_hi, panels, scale)
    f1 = f_cut + x
    inner = table.band_integral(chi(f1, f_cut - r_cut / 2.0, f_cut, fiber),
                                chi(f1, f_cut + r_cut / 2.0, f_cut, fiber), r_cut)
    return float(simpson(inner * jacobian, x=u))


def _island_reach(fiber: FiberSpec, f_cut: float, r_cut: float, f_m: float, r_m: float) -> float:
    """Largest |χ| met on the island, with a small margin."""
    f1 = np.linspace(f_m - r_m / 2.0, f_m + r_m / 2.0, 257)[:, None]
    f2 = f_cut + np.array([-r_cut / 2.0, r_cut / 2.0])[None, :]
    return 1.01 * float(np.max(np.abs(chi(f1, f2, f_cut, fiber))))


@dataclass(frozen=True, eq=False)
class OracleResult:
    """Numerical NLI per CUT; `breakdown[c, n, m]` holds the per-(span, interferer) power."""

    cut_frequencies: np.ndarray
    symbol_rates: np.ndarray
    breakdown: np.ndarray
    mode: OracleMode
    grid: int
    change_db: float
    refinements: int = 0

    @property
    def power(self) -> np.ndarray:
        return self.breakdown.sum(axis=(1, 2))

    @property
    def psd(self) -> np.ndarray:
        return self.power / self.symbol_rates


@dataclass
class _Evaluator:
    link: LinkSpec
    propagation: LinkPropagation
    fits: Optional[LinkFits]
    ml: MlFactors
    mode: OracleMode
    min_samples: int
    tables: Dict[Tuple[int, int], Optional[SpectralTable]] = field(default_factory=dict)

    def envelope(self, span: int, m: int) -> Optional[PowerEnvelope]:
        profile = self.propagation.profiles[span]
        if profile.channel(m)[0] <= 0:
            return None
        if self.mode is OracleMode.FITTED:
            fit = self.fits.get(span, m)
            return None if fit is None else FittedEnvelope.from_fit(fit, profile.z)
        return SampledEnvelope.from_profile(profile, m, self.min_samples)

    def table(self, span: int, m: int) -> Optional[SpectralTable]:
        key = (span, m)
        if key not in self.tables:
            envelope = self.envelope(span, m)
            if envelope is None:
                self.tables[key] = None
            else:
                fiber = self.link.spans[span].fiber
                f, rates = self.link.frequencies, self.link.symbol_rates
                chi_max = max(_island_reach(fiber, f[c], rates[c], f[m], rates[m])
                              for c in range(self.link.n_channels))
                self.tables[key] = SpectralTable.build(envelope, chi_max, self.mode)
                logger.debug("spectral_table_built", span=span + 1, interferer=m,
                             points=int(self.tables[key].chi.size))
        return self.tables[key]

    def breakdown(self, panels: int) -> np.ndarray:
        link = self.link
        n_ch = link.n_channels
        f, rates = link.frequencies, link.symbol_rates
        out = np.zeros((n_ch, link.n_spans, n_ch))
        for span in range(link.n_spans):
            fiber = link.spans[span].fiber
            length = link.spans[span].length
            powers = self.propagation.launch[span]
            gamma_acc = self.propagation.gamma_start[span]
            for m in range(n_ch):
                table = self.table(span, m)
                if table is None:
                    continue
                for c in range(n_ch):
                    if powers[c] <= 0:
                        continue
                    integral = island_integral(table, fiber, f[c], rates[c], f[m], rates[m],
                                               panels, length)
                    delta = 1.0 if c == m else 0.0
                    out[c, span, m] = (
                        NLI_PREFACTOR * float(gamma_nl(f[c], f[m], fiber)) ** 2
                        * (powers[c] / rates[c]) * (powers[m] / rates[m]) ** 2
                        * (2.0 - delta) * self.ml.rho[span, m] * gamma_acc[c]
                        * rates[c] * integral
                    )
        return out


def _max_change_db(previous: np.ndarray, current: np.ndarray) -> float:
    a = previous.sum(axis=(1, 2))
    b = current.sum(axis=(1, 2))
    both = (a > 0) & (b > 0)
    if np.any((a > 0) != (b > 0)):
        return float("inf")
    if not both.any():
        return 0.0
    return float(np.max(np.abs(10.0 * np.log10(b[both] / a[both]))))


def nli_psd_numeric(link: LinkSpec, propagation: LinkPropagation,
                    fits: Optional[LinkFits] = None,
                    ml: Optional[MlFactors] = None,
                    options: Optional[OracleOptions] = None,
                    min_samples: Optional[int] = None) -> OracleResult:
    """Numerical NLI PSD of every CUT, Richardson-checked against the half-resolution grid.

    Raises `QuadratureError` when doubling the island grid `options.max_refinements`
    times still changes some CUT by more than `options.tolerance_db`.
    """
    options = options or link.options.oracle
    ml = ml or MlFactors.ones(link.n_spans, link.n_channels)
    if ml.rho.shape != (link.n_spans, link.n_channels):
        raise EngineError(f"rho must be {link.n_spans}x{link.n_channels}, got {ml.rho.shape}")
    if options.mode is OracleMode.FITTED and fits is None:
        raise EngineError("fitted oracle mode needs loss-model fits")
    if min_samples is None:
        min_samples = link.options.fitter.min_samples

    evaluator = _Evaluator(link, propagation, fits, ml, options.mode, min_samples)
    grid = options.island_grid
    previous = evaluator.breakdown(grid // 2)
    current = evaluator.breakdown(grid)
    refinements = 0
    while True:
        change = _max_change_db(previous, current)
        logger.info("oracle_refinement", grid=grid, change_db=change, mode=options.mode.value)
        if change <= options.tolerance_db:
            break
        if refinements == options.max_refinements:
            raise QuadratureError(change, grid)
        refinements += 1
        grid *= 2
        previous, current = current, evaluator.breakdown(grid)

    return OracleResult(
        cut_frequencies=link.frequencies,
        symbol_rates=link.symbol_rates,
        breakdown=current,
        mode=options.mode,
        grid=grid,
        change_db=change,
        refinements=refinements,
    )


def nli_power_numeric(link: LinkSpec, propagation: LinkPropagation,
                      fits: Optional[LinkFits] = None,
                      ml: Optional[MlFactors] = None,
                      options: Optional[OracleOptions] = None) -> np.ndarray:
    """NLI power (W) per CUT: the numerical PSD times the CUT symbol rate."""
    return nli_psd_numeric(link, propagation, fits, ml, options).power


@dataclass(frozen=True)
class ComparisonRow:
    cut_thz: float
    cfm_dbm: float
    oracle_dbm: float
    delta_db: float
    oracle_mode: str


@dataclass(frozen=True)
class ComparisonTable:
    """Closed-form vs numerical NLI per CUT."""

    rows: Tuple[ComparisonRow, ...]

    @property
    def max_abs_delta_db(self) -> float:
        return max((abs(r.delta_db) for r in self.rows), default=0.0)

    @property
    def mean_delta_db(self) -> float:
        if not self.rows:
            return 0.0
        return float(np.mean([r.delta_db for r in self.rows]))


def _delta_db(cfm: float, reference: float) -> float:
    if cfm == 0.0 and reference == 0.0:
        return 0.0
    if cfm == 0.0:
        return float("-inf")
    if reference == 0.0:
        return float("inf")
    return float(10.0 * np.log10(cfm / reference))


def compare(report: NliReport, oracle: OracleResult) -> ComparisonTable:
    """Per-CUT delta_dB = 10·log10(cfm / oracle)."""
    if report.cut_frequencies.shape != oracle.cut_frequencies.shape or not np.allclose(
            report.cut_frequencies, oracle.cut_frequencies, rtol=0.0, atol=1.0):
        raise EngineError("closed-form report and oracle cover different channels")
    cfm = report.total
    reference = oracle.power
    rows = tuple(
        ComparisonRow(
            cut_thz=float(f / THZ),
            cfm_dbm=float(watt_to_dbm(a)),
            oracle_dbm=float(watt_to_dbm(b)),
            delta_db=_delta_db(float(a), float(b)),
            oracle_mode=oracle.mode.value,
        )
        for f, a, b in zip(report.cut_frequencies, cfm, reference)
    )
    table = ComparisonTable(rows)
    logger.info("comparison_evaluated", channels=len(rows),
                max_abs_delta_db=table.max_abs_delta_db, mean_delta_db=table.mean_delta_db)
    return table
