"""Raman power evolution along a span and gain bookkeeping along the link.

The span solver integrates the coupled power equations with fixed-step RK4. Backward
pumps turn the span into a two-point boundary value problem, solved by damped
fixed-point sweeps: backward waves are integrated from the span end against the
current forward field, then forward waves from the span start against the updated
backward field, until the backward field stops changing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from app.crosscutting.logging import get_logger
from app.domain.entities import (
    Channel,
    LinkSpec,
    PowerProfile,
    RamanGainTable,
    SpanSpec,
)
from app.domain.errors import SolverConvergenceError
from app.domain.normalization import THZ, grid_order
from app.domain.options import SolverOptions

logger = get_logger(__name__)

# Floor for relative residuals so vanishing pump samples do not divide by zero
_RESIDUAL_FLOOR = 1e-30


def photon_flux_factor(f_i, f_j):
    """ς(f_i, f_j): f_i/f_j above, 0 on the diagonal, 1 below."""
    f_i = np.asarray(f_i, dtype=float)
    f_j = np.asarray(f_j, dtype=float)
    factor = np.where(f_i > f_j, f_i / f_j, np.where(f_i < f_j, 1.0, 0.0))
    return factor if factor.ndim else float(factor)


def raman_gain(delta_f, table: RamanGainTable):
    """Odd-symmetric, piecewise-linear C_R(Δf) in 1/(W·m); zero beyond the table."""
    delta_f = np.asarray(delta_f, dtype=float)
    magnitude = np.abs(delta_f)
    outside = magnitude > table.max_offset
    if np.any(outside):
        logger.warning(
            "raman_table_coverage_exceeded",
            table=table.name,
            max_offset_thz=table.max_offset / THZ,
            requested_thz=float(magnitude.max()) / THZ,
        )
    values = np.interp(magnitude, table.offsets, table.gains, right=0.0)
    values = np.where(outside, 0.0, values) * np.sign(delta_f)
    return values if values.ndim else float(values)


@dataclass(frozen=True, eq=False)
class RamanEquations:
    """Right-hand side of the coupled power equations for waves in ascending order."""

    frequencies: np.ndarray
    signs: np.ndarray
    alpha: np.ndarray
    gain_matrix: np.ndarray

    @classmethod
    def build(cls, frequencies: np.ndarray, signs: np.ndarray, alpha: np.ndarray,
              table: RamanGainTable) -> "RamanEquations":
        f_i = frequencies[:, None]
        f_j = frequencies[None, :]
        matrix = photon_flux_factor(f_i, f_j) * raman_gain(f_j - f_i, table)
        return cls(frequencies, signs.astype(float), alpha, np.asarray(matrix, dtype=float))

    def local_gain(self, powers: np.ndarray) -> np.ndarray:
        """Net power growth rate of each wave along its own direction, 1/m."""
        return self.gain_matrix @ powers - 2.0 * (self.alpha if powers.ndim == 1 else self.alpha[:, None])

    def rhs(self, z: float, powers: np.ndarray) -> np.ndarray:
        """dP/dz for every wave at distance z."""
        return self.signs * self.local_gain(powers) * powers


def _uniform_grid(length: float, step: float) -> np.ndarray:
    n_steps = max(int(np.ceil(length / step - 1e-9)), 1)
    return np.linspace(0.0, length, n_steps + 1)


def rk4_sweep(derivative: Callable[[float, np.ndarray, int, int], np.ndarray],
              y0: np.ndarray, z: np.ndarray, reverse: bool = False) -> Tuple[np.ndarray, bool]:
    """Classic fixed-step RK4 over the grid, from z[0] (or z[-1] when reversed).

    `derivative(z, y, k, k_next)` receives the indices of the current step so callers
    can freeze externally known fields at the step ends. Negative samples are clamped to
    zero; the second return value reports whether that happened.
    """
    n = z.size
    out = np.empty((y0.size, n))
    indices = range(n - 1, 0, -1) if reverse else range(n - 1)
    start = n - 1 if reverse else 0
    y = np.array(y0, dtype=float)
    out[:, start] = y
    clamped = False
    for k in indices:
        k_next = k - 1 if reverse else k + 1
        h = z[k_next] - z[k]
        z_mid = z[k] + h / 2
        k1 = derivative(z[k], y, k, k)
        k2 = derivative(z_mid, y + h / 2 * k1, k, k_next)
        k3 = derivative(z_mid, y + h / 2 * k2, k, k_next)
        k4 = derivative(z[k_next], y + h * k3, k_next, k_next)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if np.any(y < 0):
            y = np.maximum(y, 0.0)
            clamped = True
        out[:, k_next] = y
    return out, clamped


def _frozen(field: np.ndarray, k: int, k_next: int) -> np.ndarray:
    if k == k_next:
        return field[:, k]
    # geometric midpoint is exact for exponential evolution
    return np.sqrt(field[:, k] * field[:, k_next])


def _integrate(equations: RamanEquations, active: np.ndarray, field: np.ndarray,
               z: np.ndarray, start: np.ndarray, reverse: bool) -> Tuple[np.ndarray, bool]:
    """Integrate the `active` waves while the other rows of `field` stay frozen."""
    frozen_rows = field[~active]
    full = np.empty(active.size)

    def derivative(z_value, y, k, k_next):
        full[active] = y
        full[~active] = _frozen(frozen_rows, k, k_next)
        return equations.rhs(z_value, full)[active]

    return rk4_sweep(derivative, start, z, reverse=reverse)


def solve_span(span: SpanSpec, channels: Sequence[Channel],
               launch: Optional[Sequence[float]] = None,
               opts: Optional[SolverOptions] = None) -> PowerProfile:
    """Solve the power evolution of channels and pumps over one span.

    Forward waves start at their launch values at z = 0 (the channels' own launch
    power unless `launch` overrides it), backward pumps at their injected power at
    z = L. Raises `SolverConvergenceError` when the backward sweep does not settle
    within `opts.max_iterations`.
    """
    opts = opts or SolverOptions()
    if launch is None:
        launch = [c.launch_power for c in channels]
    launch = np.asarray(launch, dtype=float)
    order = grid_order(channels, span.pumps)
    n_ch = len(channels)

    source_labels = [c.label for c in channels] + [p.label for p in span.pumps]
    source_signs = np.array([1] * n_ch + [p.direction.sign for p in span.pumps])
    source_boundary = np.concatenate([launch, [p.injected_power for p in span.pumps]])

    frequencies = order.frequencies
    signs = source_signs[order.order]
    boundary = source_boundary[order.order]
    labels = tuple(source_labels[i] for i in order.order)
    alpha = np.asarray(span.fiber.alpha(frequencies), dtype=float)
    equations = RamanEquations.build(frequencies, signs, alpha, span.fiber.raman_gain)

    z = _uniform_grid(span.length, opts.step)
    forward = signs > 0
    backward = ~forward

    powers = np.where(
        forward[:, None],
        boundary[:, None] * np.exp(-2.0 * alpha[:, None] * z[None, :]),
        boundary[:, None] * np.exp(-2.0 * alpha[:, None] * (span.length - z)[None, :]),
    )

    if not backward.any():
        solved, clamped = _integrate(equations, forward, powers, z, boundary[forward], reverse=False)
        powers[forward] = solved
        iterations, residual = 1, 0.0
    else:
        residual = np.inf
        clamped = False
        iterations = 0
        for iterations in range(1, opts.max_iterations + 1):
            swept, clamped_bwd = _integrate(equations, backward, powers, z, boundary[backward], reverse=True)
            previous = powers[backward]
            residual = float(np.max(np.abs(swept - previous) / np.maximum(np.abs(swept), _RESIDUAL_FLOOR)))
            powers[backward] = opts.damping * swept + (1.0 - opts.damping) * previous
            solved, clamped_fwd = _integrate(equations, forward, powers, z, boundary[forward], reverse=False)
            powers[forward] = solved
            clamped = clamped_bwd or clamped_fwd
            logger.debug("bvp_sweep", iteration=iterations, residual=residual)
            if residual < opts.bvp_tolerance:
                break
        else:
            raise SolverConvergenceError(residual, iterations)
        logger.info("bvp_converged", iterations=iterations, residual=residual)

    if clamped:
        logger.warning("negative_power_clamped", step_m=float(z[1] - z[0]),
                       hint="reduce solver.step")

    return PowerProfile(
        z=z,
        powers=powers,
        frequencies=frequencies,
        directions=signs.astype(int),
        labels=labels,
        channel_rows=order.channel_rows.copy(),
        pump_rows=order.pump_rows.copy(),
        residual=float(residual),
        iterations=int(iterations),
        clamped=bool(clamped),
    )


def channel_transfer(profile: PowerProfile, span: SpanSpec) -> np.ndarray:
    """Net power transfer of every channel across the span.

    Channels launched at zero power take the small-signal transfer exp(∫ g dz) of the
    local gain along the solved profile.
    """
    inputs = profile.channel_input()
    outputs = profile.channel_output()
    alpha = np.asarray(span.fiber.alpha(profile.frequencies), dtype=float)
    equations = RamanEquations.build(profile.frequencies, profile.directions, alpha,
                                     span.fiber.raman_gain)
    gain = equations.local_gain(profile.powers)[profile.channel_rows]
    small_signal = np.exp(trapezoid(gain, profile.z, axis=1))
    lit = inputs > 0
    return np.where(lit, outputs / np.where(lit, inputs, 1.0), small_signal)


@dataclass(frozen=True, eq=False)
class LinkPropagation:
    """Per-span profiles plus the channel power bookkeeping of the whole link.

    All arrays are indexed [span, channel]. `gamma_start[n]` is the power transfer from
    the start of span n to the link end, `gamma_end[n]` from the end of span n.
    """

    profiles: Tuple[PowerProfile, ...]
    launch: np.ndarray
    span_end: np.ndarray
    transfer: np.ndarray
    post_gain: np.ndarray
    gamma_start: np.ndarray
    gamma_end: np.ndarray

    @property
    def n_spans(self) -> int:
        return len(self.profiles)


def accumulate_gains(transfer: np.ndarray, post_gain: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Γ from each span start and each span end to the link end."""
    per_span = transfer * post_gain
    n_spans = per_span.shape[0]
    gamma_start = np.empty_like(per_span)
    gamma_end = np.empty_like(per_span)
    downstream = np.ones(per_span.shape[1])
    for n in range(n_spans - 1, -1, -1):
        gamma_end[n] = post_gain[n] * downstream
        downstream = per_span[n] * downstream
        gamma_start[n] = downstream
    return gamma_start, gamma_end


def propagate_link(link: LinkSpec) -> LinkPropagation:
    """Solve every span in order; each span launches the previous output times its gain."""
    opts = link.options.solver
    frequencies = link.frequencies
    launch = link.launch_powers
    profiles: List[PowerProfile] = []
    launches, ends, transfers, gains = [], [], [], []
    for index, span in enumerate(link.spans):
        logger.debug("span_solve_started", span=index + 1, length_km=span.length / 1e3)
        profile = solve_span(span, link.channels, launch, opts)
        transfer = channel_transfer(profile, span)
        gain = span.post_gain.gains(frequencies, transfer)
        profiles.append(profile)
        launches.append(launch)
        ends.append(profile.channel_output())
        transfers.append(transfer)
        gains.append(gain)
        launch = profile.channel_output() * gain

    transfer_arr = np.vstack(transfers)
    gain_arr = np.vstack(gains)
    gamma_start, gamma_end = accumulate_gains(transfer_arr, gain_arr)
    return LinkPropagation(
        profiles=tuple(profiles),
        launch=np.vstack(launches),
        span_end=np.vstack(ends),
        transfer=transfer_arr,
        post_gain=gain_arr,
        gamma_start=gamma_start,
        gamma_end=gamma_end,
    )
