import numpy as np
import pytest
from structlog.testing import capture_logs

from app.application.raman import (
    RamanEquations,
    accumulate_gains,
    channel_transfer,
    photon_flux_factor,
    propagate_link,
    raman_gain,
    rk4_sweep,
    solve_span,
)
from app.domain.entities import Channel, FiberSpec, PostGain, Pump, RamanGainTable, SampledTable, SpanSpec
from app.domain.errors import SolverConvergenceError
from app.domain.normalization import KM, THZ, dbm_to_watt, linear_to_db
from app.domain.options import SolverOptions

# 1/(W·km) expressed in 1/(W·m)
PER_W_KM = 1e-3


class TestPhotonFluxFactor:
    """Tests for the photon-number scaling factor."""

    def test_lower_wave(self):
        assert photon_flux_factor(193.1 * THZ, 195.0 * THZ) == 1.0

    def test_higher_wave(self):
        assert photon_flux_factor(195.0 * THZ, 193.1 * THZ) == pytest.approx(1.00984, rel=1e-5)

    def test_same_wave(self):
        assert photon_flux_factor(193.1 * THZ, 193.1 * THZ) == 0.0


class TestRamanGain:
    """Tests for the odd-symmetric gain lookup."""

    def setup_method(self):
        """Set up test fixtures."""
        self.table = RamanGainTable(
            (0.0, 10 * THZ, 14 * THZ), (0.0, 0.4 * PER_W_KM, 0.6 * PER_W_KM), name="test")

    def test_origin(self):
        assert raman_gain(0.0, self.table) == 0.0

    def test_interpolation(self):
        assert raman_gain(12 * THZ, self.table) == pytest.approx(0.5 * PER_W_KM)

    def test_odd_symmetry(self):
        assert raman_gain(-12 * THZ, self.table) == pytest.approx(-0.5 * PER_W_KM)

    def test_beyond_table_is_zero_and_logged(self):
        with capture_logs() as logs:
            value = raman_gain(20 * THZ, self.table)
        assert value == 0.0
        assert any(entry["event"] == "raman_table_coverage_exceeded" for entry in logs)


class TestRamanEquations:
    """Tests for the coupled power equations."""

    def test_loss_only(self):
        """Test dP/dz = -2 alpha P with the Raman term off."""
        f = np.array([193.0, 194.0]) * THZ
        alpha = np.array([2.3e-5, 2.4e-5])
        eq = RamanEquations.build(f, np.array([1, 1]), alpha, RamanGainTable.zero())
        powers = np.array([1e-3, 2e-3])
        assert eq.rhs(0.0, powers) == pytest.approx(-2 * alpha * powers)

    def test_single_wave_ignores_raman(self, triangle_table):
        f = np.array([193.0]) * THZ
        eq = RamanEquations.build(f, np.array([1]), np.array([2.3e-5]), triangle_table)
        assert eq.rhs(0.0, np.array([1e-3])) == pytest.approx([-2 * 2.3e-5 * 1e-3])

    def test_photon_flux_cancels(self, triangle_table):
        """Test d(P1/f1 + P2/f2)/dz = 0 for two lossless co-propagating waves."""
        f = np.array([186.0, 199.0]) * THZ
        eq = RamanEquations.build(f, np.array([1, 1]), np.zeros(2), triangle_table)
        dp = eq.rhs(0.0, np.array([5e-3, 50e-3]))
        assert dp[0] > 0 > dp[1]
        assert np.sum(dp / f) == pytest.approx(0.0, abs=1e-12 * abs(dp[0] / f[0]))


class TestSolveSpan:
    """Tests for the single-span solver."""

    def test_loss_only_exact(self, simple_fiber):
        """Test 0.2 dB/km over 95 km loses 19.000 dB."""
        span = SpanSpec(95 * KM, simple_fiber)
        profile = solve_span(span, [Channel(193.1 * THZ, 64e9, 2e-3)])

        loss_db = float(linear_to_db(profile.channel_input()[0] / profile.channel_output()[0]))
        assert loss_db == pytest.approx(19.0, abs=1e-6)
        assert profile.channel_output()[0] == pytest.approx(2e-3 * 10 ** -1.9, rel=1e-6)
        assert profile.iterations == 1
        assert profile.z[-1] == pytest.approx(95 * KM)

    def test_photon_flux_conserved(self, triangle_table):
        """Test the photon flux of four lossless channels drifts below 1e-6."""
        fiber = FiberSpec(loss=SampledTable.constant(0.0), effective_area=SampledTable.constant(80e-12),
                          beta2=-2.17e-26, raman_gain=triangle_table)
        channels = [Channel(f * THZ, 64e9, 20e-3) for f in (186.0, 189.0, 192.0, 195.0)]
        profile = solve_span(SpanSpec(95 * KM, fiber), channels)

        flux = (profile.powers / profile.frequencies[:, None]).sum(axis=0)
        drift = np.max(np.abs(flux - flux[0]) / flux[0])
        assert drift < 1e-6
        # ISRS moved power towards the lowest channel
        assert profile.channel(0)[-1] > profile.channel(0)[0]
        assert profile.channel(3)[-1] < profile.channel(3)[0]

    def test_backward_pump_interior_minimum(self, desk_link):
        span = desk_link.spans[0]
        profile = solve_span(span, desk_link.channels, opts=SolverOptions(bvp_tolerance=1e-7))
        pump = profile.powers[profile.pump_rows[0]]
        channel = profile.channel(0)

        assert pump[-1] == pytest.approx(0.3)
        assert profile.residual < 1e-7
        assert 0 < int(np.argmin(channel)) < len(channel) - 1
        assert profile.directions[profile.pump_rows[0]] == -1

    def test_loss_only_step_halving(self, simple_fiber):
        span = SpanSpec(95 * KM, simple_fiber)
        channels = [Channel(193.1 * THZ, 64e9, 2e-3)]
        coarse = solve_span(span, channels, opts=SolverOptions(step=50.0))
        fine = solve_span(span, channels, opts=SolverOptions(step=25.0))

        assert fine.powers[:, ::2].shape == coarse.powers.shape
        assert np.max(np.abs(coarse.powers / fine.powers[:, ::2] - 1.0)) < 1e-8

    def test_backward_pump_depletes_towards_input(self, desk_link):
        """Test the pump loses power monotonically while travelling from z = L to 0."""
        profile = solve_span(desk_link.spans[0], desk_link.channels, opts=SolverOptions(bvp_tolerance=1e-7))
        pump = profile.powers[profile.pump_rows[0]]

        assert np.all(np.diff(pump) >= 0.0)
        assert pump[0] < 0.3 * 10 ** (-0.2 * 80 / 10)

    def test_non_convergence_raises(self, desk_link):
        opts = SolverOptions(bvp_tolerance=1e-12, max_iterations=1)
        with pytest.raises(SolverConvergenceError) as exc_info:
            solve_span(desk_link.spans[0], desk_link.channels, opts=opts)
        assert exc_info.value.exit_code == 3
        assert exc_info.value.iterations == 1
        assert exc_info.value.residual > 1e-12

    def test_labels_follow_wave_order(self, desk_link):
        profile = solve_span(desk_link.spans[0], desk_link.channels)
        assert profile.labels[-1] == "pump_206.5000THz_bwd"
        assert profile.labels[0] == desk_link.channels[0].label


class TestChannelTransfer:
    """Tests for the per-channel span transfer."""

    def test_zero_power_channel_small_signal(self, simple_fiber):
        """Test a dark channel takes the loss-only transfer exp(-2 alpha L)."""
        span = SpanSpec(95 * KM, simple_fiber)
        channels = [Channel(193.0 * THZ, 64e9, 1e-3), Channel(193.2 * THZ, 64e9, 0.0)]
        profile = solve_span(span, channels)
        transfer = channel_transfer(profile, span)

        assert transfer[1] == pytest.approx(10 ** -1.9, rel=1e-9)
        assert transfer[0] == pytest.approx(10 ** -1.9, rel=1e-6)


class TestLinkPropagation:
    """Tests for gain bookkeeping along the link."""

    def test_accumulate_gains(self):
        transfer = np.array([[0.1], [0.2]])
        post = np.array([[5.0], [3.0]])
        gamma_start, gamma_end = accumulate_gains(transfer, post)

        assert gamma_end[1] == pytest.approx([3.0])
        assert gamma_start[1] == pytest.approx([0.6])
        assert gamma_end[0] == pytest.approx([5.0 * 0.6])
        assert gamma_start[0] == pytest.approx([0.1 * 5.0 * 0.6])

    def test_transparent_span_unit_gain(self, simple_fiber, make_channels, make_link):
        link = make_link(make_channels(3), simple_fiber)
        propagation = propagate_link(link)
        assert propagation.gamma_start[0] == pytest.approx(np.ones(3))

    def test_identical_transparent_spans_relaunch(self, simple_fiber, make_channels, make_link):
        link = make_link(make_channels(3), simple_fiber, spans=2)
        propagation = propagate_link(link)

        assert propagation.launch[1] == pytest.approx(propagation.launch[0], rel=1e-12)
        assert propagation.gamma_start[0] == pytest.approx(np.ones(3), rel=1e-12)

    def test_flat_post_gain(self, simple_fiber, make_link):
        """Test +19 dB after a 95 km, 0.2 dB/km span gives gamma_end = 10^1.9."""
        channels = [Channel(193.1 * THZ, 64e9, dbm_to_watt(0.0))]
        link = make_link(channels, simple_fiber, length_km=95.0, post_gain=PostGain.flat(10 ** 1.9))
        propagation = propagate_link(link)

        assert propagation.gamma_end[0] == pytest.approx([10 ** 1.9])
        assert propagation.gamma_start[0] == pytest.approx([1.0], rel=1e-6)

    def test_backward_pump_reduces_span_loss(self, triangle_table, make_channels, make_link, make_fiber):
        fiber = make_fiber(raman=triangle_table)
        link = make_link(make_channels(3), fiber, pumps=(Pump(206.5 * THZ, 0.2),))
        propagation = propagate_link(link)
        assert propagation.n_spans == 1
        assert propagation.transfer.shape == (1, 3)
        assert np.all(propagation.transfer[0] > 10 ** -1.6)


class TestRk4Sweep:
    """Tests for the fixed-step integrator."""

    def test_forward_decay(self):
        z = np.linspace(0.0, 1.0, 11)
        out, clamped = rk4_sweep(lambda _z, y, _k, _kn: -y, np.array([2.0]), z)
        assert out[0, -1] == pytest.approx(2.0 * np.exp(-1.0), rel=1e-5)
        assert not clamped

    def test_reverse_starts_at_end(self):
        z = np.linspace(0.0, 1.0, 11)
        out, _ = rk4_sweep(lambda _z, y, _k, _kn: -y, np.array([1.0]), z, reverse=True)
        assert out[0, -1] == 1.0
        assert out[0, 0] == pytest.approx(np.e, rel=1e-5)

    def test_negative_samples_clamped(self):
        z = np.linspace(0.0, 1.0, 3)
        out, clamped = rk4_sweep(lambda _z, y, _k, _kn: np.full_like(y, -10.0), np.array([1.0]), z)
        assert clamped
        assert np.all(out[0, 1:] == 0.0)
