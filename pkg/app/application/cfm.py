"""Closed-form NLI of a Raman-amplified link.

Every (span, interferer) pair contributes one term per fitted segment: the start
segment with span-start powers and the gain from the span start to the link end, the
end segment (backward-pump region, fitted on reversed samples) with span-end powers
and the gain from the span end. Each term expands the exponential loss model into a
double series whose (k, q) entries are asinh differences over the interferer band.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.special import gammaln

from app.application.fitting import LinkFits
from app.application.raman import LinkPropagation
from app.crosscutting.logging import get_logger
from app.domain.dispersion import beta2_eff, gamma_nl
from app.domain.entities import FiberSpec, LinkSpec, MlFactors, NliReport, SegmentFit
from app.domain.errors import EngineError
from app.domain.options import EngineOptions, LengthModel, SeriesBound

logger = get_logger(__name__)

NLI_PREFACTOR = 16.0 / 27.0
START, END = 0, 1

# below this |β2,eff| (s²/m) the asinh difference is replaced by its linear limit
_BETA2_FLOOR = 1e-35
# tiny negative totals from round-off are clamped to zero above this (W)
_NEGATIVE_CLAMP = -1e-15


def truncation_order(alpha1: float, sigma: float) -> int:
    """Number of series terms beyond the zeroth: floor(10·|2 α1 / σ|)."""
    return int(math.floor(10.0 * abs(2.0 * alpha1 / sigma)))


def decay_rate(rate, segment_length: float, length_model: LengthModel, floor_scale: float = 1.0):
    """Effective decay rate of one series term.

    Asymptotic: the printed rate, floored at its zero-decay finite-segment limit.
    Finite: r / (1 - exp(-r L)), which tends to 1/L as r -> 0.
    """
    rate = np.asarray(rate, dtype=float)
    if length_model is LengthModel.FINITE:
        x = rate * segment_length
        safe = np.where(np.abs(x) < 1e-12, 1.0, x)
        finite = np.where(np.abs(x) < 1e-12, 1.0 + x / 2.0, safe / -np.expm1(-safe))
        return finite / segment_length
    return np.maximum(rate, floor_scale / segment_length)


def series_coefficients(ratio: float, order: int) -> np.ndarray:
    """ratio^k · e^(-ratio) / k! for k = 0..order, evaluated in log space.

    For ratio > 0 these are Poisson weights, so no entry overflows however long the
    series is.
    """
    ks = np.arange(order + 1)
    if ratio == 0.0:
        return (ks == 0).astype(float)
    magnitude = np.exp(ks * math.log(abs(ratio)) - gammaln(ks + 1) - ratio)
    return magnitude if ratio > 0 else magnitude * (-1.0) ** ks


def psi(f_m: float, f_cut, r_m: float, r_cut, j: int, k,
        seg: SegmentFit, fiber: FiberSpec,
        length_model: LengthModel = LengthModel.ASYMPTOTIC):
    """asinh(π² β2,eff R_cut (f_m - f_cut + (-1)^j R_m / 2) / (2 α0 + k σ)).

    Array `f_cut`/`r_cut` and `k` broadcast to a [cut, k] grid; scalars give a float.
    """
    k = np.asarray(k, dtype=float)
    rate = decay_rate(2.0 * seg.alpha0 + k * seg.sigma, seg.segment_length, length_model, 0.5)
    offset = (np.pi ** 2 * beta2_eff(f_m, f_cut, fiber) * np.asarray(r_cut, dtype=float)
              * (f_m - np.asarray(f_cut, dtype=float) + (-1) ** j * r_m / 2.0))
    result = np.arcsinh(np.multiply.outer(offset, 1.0 / rate))
    return float(result) if result.ndim == 0 else result


def series_bounds(fits: LinkFits, span: int, contribution: int, options: EngineOptions) -> np.ndarray:
    """Highest series index per interferer for one (span, contribution); -1 when absent."""
    bounds = []
    for fit in fits.fits[span]:
        seg = _segment(fit, contribution)
        if seg is None:
            bounds.append(-1)
        else:
            bounds.append(max(truncation_order(seg.alpha1, seg.sigma), options.min_series_order))
    bounds = np.array(bounds, dtype=int)
    if np.any(bounds > options.max_series_order):
        m = int(np.argmax(bounds))
        raise EngineError(
            f"series order {bounds[m]} for span {span + 1}, interferer {m} exceeds max_series_order",
            span=span + 1, interferer=m, order=int(bounds[m]), limit=options.max_series_order,
        )
    if options.series_bound is SeriesBound.SHARED and np.any(bounds >= 0):
        bounds = np.where(bounds >= 0, bounds.max(), -1)
    return np.where(bounds >= 0, bounds + options.series_extra_terms, -1)


def _segment(fit, contribution: int) -> Optional[SegmentFit]:
    if fit is None:
        return None
    return fit.st if contribution == START else fit.end


def _segment_terms(link: LinkSpec, propagation: LinkPropagation, fits: LinkFits,
                   ml: MlFactors, span: int, contribution: int, m: int, order: int,
                   options: EngineOptions) -> np.ndarray:
    """Contribution of interferer m, span `span`, segment `contribution` on every CUT."""
    n_ch = link.n_channels
    if contribution == START:
        powers = propagation.launch[span]
        gamma_acc = propagation.gamma_start[span]
    else:
        powers = propagation.span_end[span]
        gamma_acc = propagation.gamma_end[span]
    if powers[m] <= 0:
        return np.zeros(n_ch)
    fit = fits.get(span, m)
    if fit is None:
        raise EngineError(f"missing fit for span {span + 1}, channel {m}", span=span + 1, channel=m)
    seg = _segment(fit, contribution)
    if seg is None:
        return np.zeros(n_ch)

    fiber = link.spans[span].fiber
    f = link.frequencies
    rates = link.symbol_rates
    f_m, r_m = f[m], rates[m]

    ks = np.arange(order + 1)
    # each coefficient carries e^(-2 α1 / σ), so the product of two carries the series prefactor
    coeffs = series_coefficients(2.0 * seg.alpha1 / seg.sigma, order)
    a_k = decay_rate(2.0 * seg.alpha0 + ks * seg.sigma, seg.segment_length, options.length_model, 0.5)
    d_kq = decay_rate(4.0 * seg.alpha0 + (ks[:, None] + ks[None, :]) * seg.sigma,
                      seg.segment_length, options.length_model, 1.0)
    weights = coeffs * ((1.0 / d_kq) @ coeffs)

    beta = beta2_eff(f_m, f, fiber)
    small = np.abs(beta) < _BETA2_FLOOR
    upper = psi(f_m, f, r_m, rates, 0, ks, seg, fiber, options.length_model)
    lower = psi(f_m, f, r_m, rates, 1, ks, seg, fiber, options.length_model)
    # asinh(x) -> x as β2,eff -> 0
    linear = np.pi ** 2 * rates[:, None] * r_m / a_k[None, :]
    brackets = np.where(small[:, None], linear,
                        (upper - lower) / np.where(small, 1.0, beta)[:, None])
    series = brackets @ weights

    delta = np.zeros(n_ch)
    delta[m] = 1.0
    gamma = gamma_nl(f, f_m, fiber)
    prefactor = (NLI_PREFACTOR * gamma ** 2 * powers * powers[m] ** 2 * ml.rho[span, m]
                 * gamma_acc * (2.0 - delta) / (2.0 * np.pi * r_m ** 2))
    terms = prefactor * series
    if not np.all(np.isfinite(terms)):
        raise EngineError(f"non-finite NLI term for span {span + 1}, interferer {m}",
                          span=span + 1, interferer=m)
    return terms


def segment_nli(link: LinkSpec, propagation: LinkPropagation, fits: LinkFits, ml: MlFactors,
                cut: int, m: int, span: int, contribution: int,
                options: Optional[EngineOptions] = None) -> float:
    """NLI power (W) generated on `cut` by interferer `m` in one segment of one span."""
    options = options or link.options.engine
    bounds = series_bounds(fits, span, contribution, options)
    if bounds[m] < 0:
        return 0.0
    terms = _segment_terms(link, propagation, fits, ml, span, contribution, m, int(bounds[m]), options)
    return float(terms[cut])


def total_nli(link: LinkSpec, propagation: LinkPropagation, fits: LinkFits,
              ml: Optional[MlFactors] = None,
              options: Optional[EngineOptions] = None) -> NliReport:
    """Closed-form NLI on every channel at the link end, with its full breakdown."""
    options = options or link.options.engine
    ml = ml or MlFactors.ones(link.n_spans, link.n_channels)
    if ml.rho.shape != (link.n_spans, link.n_channels):
        raise EngineError(f"rho must be {link.n_spans}x{link.n_channels}, got {ml.rho.shape}")

    n_ch = link.n_channels
    breakdown = np.zeros((n_ch, link.n_spans, 2, n_ch))
    series_terms = 0
    for span in range(link.n_spans):
        for contribution in (START, END):
            bounds = series_bounds(fits, span, contribution, options)
            for m in range(n_ch):
                if bounds[m] < 0:
                    continue
                breakdown[:, span, contribution, m] = _segment_terms(
                    link, propagation, fits, ml, span, contribution, m, int(bounds[m]), options)
                series_terms += int(bounds[m] + 1) ** 2

    if np.any(breakdown < _NEGATIVE_CLAMP):
        raise EngineError("negative NLI term", minimum=float(breakdown.min()))
    breakdown = np.maximum(breakdown, 0.0)
    logger.info("nli_evaluated", channels=n_ch, spans=link.n_spans, series_terms=series_terms)
    return NliReport(
        cut_frequencies=link.frequencies,
        symbol_rates=link.symbol_rates,
        breakdown=breakdown,
        series_terms=series_terms,
    )
