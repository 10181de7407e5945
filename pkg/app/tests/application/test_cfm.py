import math
from decimal import Decimal, localcontext

import numpy as np
import pytest

from app.application.cfm import (
    END,
    NLI_PREFACTOR,
    START,
    decay_rate,
    psi,
    segment_nli,
    series_bounds,
    series_coefficients,
    total_nli,
    truncation_order,
)
from app.application.fitting import LinkFits, fit_link
from app.application.raman import propagate_link
from app.domain.dispersion import beta2_eff, gamma_nl
from app.domain.entities import Channel, MlFactors, PostGain, SegmentFit, TwoSegmentFit
from app.domain.errors import EngineError
from app.domain.normalization import KM, THZ, db_per_km_to_field_alpha
from app.domain.options import EngineOptions, LengthModel, SeriesBound

ALPHA = db_per_km_to_field_alpha(0.2)


def _exponential_fits(link, propagation):
    """Loss-only fits with alpha1 = 0 for every channel of every span."""
    return LinkFits(tuple(
        tuple(
            TwoSegmentFit(span.length,
                          SegmentFit(ALPHA, 0.0, 1e-4, span.length, float(propagation.launch[n][k]), 0.0))
            for k in range(link.n_channels)
        )
        for n, span in enumerate(link.spans)
    ))


def _gn_term(link, propagation, cut, m, xpm_factor=None):
    """Closed-form GN integral of one interferer over an exponentially decaying span."""
    fiber = link.spans[0].fiber
    f, rates = link.frequencies, link.symbol_rates
    powers = propagation.launch[0]
    beta = float(beta2_eff(f[m], f[cut], fiber))
    gamma = float(gamma_nl(f[cut], f[m], fiber))
    hi = math.asinh(math.pi ** 2 * beta * rates[cut] * (f[m] - f[cut] + rates[m] / 2) / (2 * ALPHA))
    lo = math.asinh(math.pi ** 2 * beta * rates[cut] * (f[m] - f[cut] - rates[m] / 2) / (2 * ALPHA))
    factor = xpm_factor if xpm_factor is not None else (1.0 if cut == m else 2.0)
    return (NLI_PREFACTOR * gamma ** 2 * powers[cut] * powers[m] ** 2 * factor
            * propagation.gamma_start[0][cut] * (hi - lo)
            / (2 * math.pi * rates[m] ** 2 * 4 * ALPHA * beta))


class TestSeriesHelpers:
    """Tests for truncation, decay rates and the asinh arguments."""

    @pytest.mark.parametrize("alpha1, sigma, expected", [
        (0.0, 1.0, 0),
        (1e-9, 1.0, 0),
        (0.25, 1.0, 5),
        (-0.25, 1.0, 5),
        (-0.5, 1.0, 10),
    ])
    def test_truncation_order(self, alpha1, sigma, expected):
        assert truncation_order(alpha1, sigma) == expected

    def test_asymptotic_rate_floor(self):
        assert decay_rate(4e-5, 80 * KM, LengthModel.ASYMPTOTIC) == pytest.approx(4e-5)
        assert decay_rate(0.0, 80 * KM, LengthModel.ASYMPTOTIC) == pytest.approx(1 / (80 * KM))
        assert decay_rate(-1e-3, 80 * KM, LengthModel.ASYMPTOTIC, 0.5) == pytest.approx(0.5 / (80 * KM))

    def test_finite_rate(self):
        length = 80 * KM
        assert decay_rate(0.0, length, LengthModel.FINITE) == pytest.approx(1 / length)
        rate = 4.6e-5
        assert decay_rate(rate, length, LengthModel.FINITE) == pytest.approx(
            rate / (1 - math.exp(-rate * length)))

    def test_psi_spm_antisymmetric(self, simple_fiber):
        """Test the two SPM band edges give opposite asinh arguments."""
        seg = SegmentFit(ALPHA, 0.0, 1e-4, 80 * KM, 1e-3, 0.0)
        f = 193.1 * THZ
        upper = psi(f, f, 64e9, 64e9, 0, 0, seg, simple_fiber)
        lower = psi(f, f, 64e9, 64e9, 1, 0, seg, simple_fiber)
        assert upper == pytest.approx(-lower)
        assert upper != 0.0

    def test_psi_xpm_matches_decimal_reference(self, simple_fiber):
        """Test an XPM band-edge value against 40-digit decimal arithmetic."""
        seg = SegmentFit(ALPHA, 8e-6, 4e-4, 80 * KM, 1e-3, 0.0)
        f_m, f_cut, rate_hz = 193.5 * THZ, 193.0 * THZ, 64e9
        value = psi(f_m, f_cut, rate_hz, rate_hz, 0, 2, seg, simple_fiber)

        with localcontext() as ctx:
            ctx.prec = 40
            pi = Decimal("3.141592653589793238462643383279502884197")
            decay = 2 * Decimal(ALPHA) + 2 * Decimal(seg.sigma)
            x = (pi ** 2 * Decimal(simple_fiber.beta2) * Decimal(rate_hz)
                 * (Decimal(f_m) - Decimal(f_cut) + Decimal(rate_hz) / 2) / decay)
            reference = -((x * x + 1).sqrt() - x).ln()

        assert x < 0
        assert value == pytest.approx(float(reference), rel=1e-13)

    def test_psi_broadcasts_over_cuts_and_orders(self, simple_fiber):
        seg = SegmentFit(ALPHA, 8e-6, 4e-4, 80 * KM, 1e-3, 0.0)
        cuts = np.array([193.0, 193.2, 193.4]) * THZ
        grid = psi(193.2 * THZ, cuts, 64e9, np.full(3, 64e9), 1, np.arange(4), seg, simple_fiber)

        assert grid.shape == (3, 4)
        assert grid[2, 3] == pytest.approx(psi(193.2 * THZ, cuts[2], 64e9, 64e9, 1, 3, seg, simple_fiber))

    def test_series_coefficients_match_factorial_form(self):
        for ratio in (0.7, -0.7):
            expected = [ratio ** k * math.exp(-ratio) / math.factorial(k) for k in range(7)]
            assert series_coefficients(ratio, 6) == pytest.approx(expected, rel=1e-12)
        assert list(series_coefficients(0.0, 3)) == [1.0, 0.0, 0.0, 0.0]

    def test_long_series_coefficients_stay_finite(self):
        """Test 2 α1 / σ = 1.64e4 with its full 10x truncation order neither overflows nor loses mass."""
        coeffs = series_coefficients(1.64e4, 164000)

        assert np.all(np.isfinite(coeffs))
        assert coeffs.sum() == pytest.approx(1.0, rel=1e-9)
        assert abs(int(np.argmax(coeffs)) - 16400) <= 1


class TestSeriesBounds:
    """Tests for the per-contribution series index range."""

    def setup_method(self):
        """Set up fits with different alpha1/sigma ratios."""
        def seg(alpha1):
            return SegmentFit(ALPHA, alpha1, 1.0, 80 * KM, 1e-3, 0.0)

        self.fits = LinkFits(((
            TwoSegmentFit(80 * KM, seg(0.0)),
            TwoSegmentFit(60 * KM, seg(-0.25), seg(0.5)),
            None,
        ),))

    def test_per_channel(self):
        bounds = series_bounds(self.fits, 0, START, EngineOptions())
        assert list(bounds) == [3, 5, -1]

    def test_end_contribution_only_where_fitted(self):
        bounds = series_bounds(self.fits, 0, END, EngineOptions())
        assert list(bounds) == [-1, 10, -1]

    def test_shared_bound(self):
        bounds = series_bounds(self.fits, 0, START, EngineOptions(series_bound=SeriesBound.SHARED))
        assert list(bounds) == [5, 5, -1]

    def test_extra_terms(self):
        """Test M+5 truncation adds five indices to every present bound."""
        bounds = series_bounds(self.fits, 0, START, EngineOptions(series_extra_terms=5))
        assert list(bounds) == [8, 10, -1]

    def test_order_beyond_limit_rejected(self):
        fits = LinkFits(((TwoSegmentFit(80 * KM, SegmentFit(ALPHA, 60.0, 1.0, 80 * KM, 1e-3, 0.0)),),))
        with pytest.raises(EngineError) as exc_info:
            series_bounds(fits, 0, START, EngineOptions())
        assert exc_info.value.details["order"] == 1200
        assert exc_info.value.details["limit"] == 1000


class TestClosedFormNli:
    """Tests for the closed-form NLI of whole links."""

    def test_reduces_to_gn_for_exponential_loss(self, gn_link):
        """Test alpha1 = 0 fits reproduce the classic asinh GN terms."""
        propagation = propagate_link(gn_link)
        fits = _exponential_fits(gn_link, propagation)
        ml = MlFactors.ones(1, 3)

        for cut in range(3):
            for m in range(3):
                value = segment_nli(gn_link, propagation, fits, ml, cut, m, 0, START)
                assert value == pytest.approx(_gn_term(gn_link, propagation, cut, m), rel=1e-9)
                assert segment_nli(gn_link, propagation, fits, ml, cut, m, 0, END) == 0.0

    def test_xpm_counts_twice(self, gn_link):
        propagation = propagate_link(gn_link)
        fits = _exponential_fits(gn_link, propagation)
        report = total_nli(gn_link, propagation, fits)

        xpm = report.breakdown[1, 0, START, 0]
        spm = report.breakdown[1, 0, START, 1]
        assert xpm == pytest.approx(2 * _gn_term(gn_link, propagation, 1, 0, xpm_factor=1.0), rel=1e-9)
        assert spm == pytest.approx(_gn_term(gn_link, propagation, 1, 1, xpm_factor=1.0), rel=1e-9)

    def test_breakdown_sums_to_total(self, gn_link):
        propagation = propagate_link(gn_link)
        report = total_nli(gn_link, propagation, fit_link(propagation.profiles, [np.full(3, ALPHA)]))

        assert report.breakdown.shape == (3, 1, 2, 3)
        assert report.total == pytest.approx(report.breakdown.sum(axis=(1, 2, 3)))
        assert np.all(report.total > 0)
        assert report.series_terms > 0

    def test_pump_free_end_contribution_is_zero(self, gn_link):
        propagation = propagate_link(gn_link)
        report = total_nli(gn_link, propagation, fit_link(propagation.profiles, [np.full(3, ALPHA)]))
        assert np.all(report.breakdown[:, :, END, :] == 0.0)

    def test_rho_scales_linearly(self, gn_link):
        propagation = propagate_link(gn_link)
        fits = _exponential_fits(gn_link, propagation)
        base = total_nli(gn_link, propagation, fits)
        doubled = total_nli(gn_link, propagation, fits, MlFactors.ones(1, 3).scaled(2.0))
        assert doubled.total == pytest.approx(2 * base.total, rel=1e-12)

    def test_rho_acts_per_interferer(self, gn_link):
        propagation = propagate_link(gn_link)
        fits = _exponential_fits(gn_link, propagation)
        rho = np.ones((1, 3))
        rho[0, 2] = 3.0
        base = total_nli(gn_link, propagation, fits)
        weighted = total_nli(gn_link, propagation, fits, MlFactors(rho))

        assert weighted.breakdown[:, 0, START, 2] == pytest.approx(3 * base.breakdown[:, 0, START, 2])
        assert weighted.breakdown[:, 0, START, :2] == pytest.approx(base.breakdown[:, 0, START, :2])

    def test_zero_power_link(self, simple_fiber, make_link):
        channels = [Channel((193.0 + 0.1 * i) * THZ, 64e9, 0.0) for i in range(3)]
        link = make_link(channels, simple_fiber, spans=2)
        propagation = propagate_link(link)
        fits = fit_link(propagation.profiles, [np.full(3, ALPHA)] * 2)
        report = total_nli(link, propagation, fits)

        assert fits.count == 0
        assert np.all(report.total == 0.0)

    def test_two_transparent_spans_double(self, simple_fiber, make_channels, make_link):
        channels = make_channels(3)
        one = make_link(channels, simple_fiber)
        two = make_link(channels, simple_fiber, spans=2)

        results = []
        for link in (one, two):
            propagation = propagate_link(link)
            results.append(total_nli(link, propagation, _exponential_fits(link, propagation)).total)
        assert results[1] == pytest.approx(2 * results[0], rel=1e-9)

    def test_cubic_power_scaling(self, simple_fiber, make_channels, make_link):
        """Test scaling every launch power by c scales the NLI by c^3."""
        post = PostGain.flat(10 ** 1.6)
        totals = []
        for launch_dbm in (0.0, 3.0):
            link = make_link(make_channels(3, launch_dbm=launch_dbm), simple_fiber, post_gain=post)
            propagation = propagate_link(link)
            fits = _exponential_fits(link, propagation)
            totals.append(total_nli(link, propagation, fits).total)
        c = 10 ** 0.3
        assert totals[1] == pytest.approx(c ** 3 * totals[0], rel=1e-9)

    def test_rho_shape_checked(self, gn_link):
        propagation = propagate_link(gn_link)
        fits = _exponential_fits(gn_link, propagation)
        with pytest.raises(EngineError):
            total_nli(gn_link, propagation, fits, MlFactors.ones(2, 3))

    def test_long_series_is_converged(self, gn_link):
        """Test a strongly curved segment (2 α1 / σ = 25) is settled at its own truncation order."""
        propagation = propagate_link(gn_link)
        length = gn_link.spans[0].length
        fits = LinkFits((tuple(
            TwoSegmentFit(length, SegmentFit(ALPHA, 1.25e-3, 1e-4, length, float(p), 0.0))
            for p in propagation.launch[0]
        ),))
        base = total_nli(gn_link, propagation, fits)
        extended = total_nli(gn_link, propagation, fits, options=EngineOptions(series_extra_terms=20))

        assert base.series_terms == 3 * (truncation_order(1.25e-3, 1e-4) + 1) ** 2
        assert np.all(np.isfinite(base.total)) and np.all(base.total > 0)
        assert extended.total == pytest.approx(base.total, rel=1e-6)
