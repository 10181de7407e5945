"""Two-segment loss model fitting of solved power profiles.

Each (span, channel) profile is split at its power minimum. The start segment is
fitted in forward coordinates, the end segment on the reversed samples so that its
own origin sits at the span end. The model

    P(t) = P(0) · exp(-2 α0 t + 2 α1 (exp(-σ t) - 1) / σ)

makes ln P affine in (α0, α1) for a fixed σ, so the fit is a weighted linear solve
nested inside a bounded one-dimensional search over σ. |2 α1 / σ| sets the length of
the closed-form series and is held at or below `max_series_ratio`. A fit that still
misses the pointwise tolerance is reweighted towards the minimax fit (Lawson).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from app.crosscutting.logging import get_logger
from app.domain.entities import PowerProfile, SegmentFit, TwoSegmentFit
from app.domain.errors import FitError
from app.domain.options import FitterOptions

logger = get_logger(__name__)

# |α1|·L below this means the decay term is absent and σ cannot be identified
_ALPHA1_IDENTIFIABLE = 1e-9
# added to the MSE of σ values whose end-segment solution leaves the feasible region
_PENALTY = 1e6
# alternating series (α1 < 0) lose about e^(2|2 α1 / σ|) ulps to cancellation
_NEGATIVE_RATIO_CAP = 10.0
NEPER_TO_DB = 10.0 / math.log(10.0)


def model_power(fit: SegmentFit, z):
    """Power of the fitted segment at distance z from its own origin."""
    z = np.asarray(z, dtype=float)
    exponent = -2.0 * fit.alpha0 * z + 2.0 * fit.alpha1 * np.expm1(-fit.sigma * z) / fit.sigma
    return fit.p_start * np.exp(exponent)


def split_index(z: np.ndarray, powers: np.ndarray, min_samples: int) -> int:
    index = int(np.argmin(powers))
    last = len(z) - 1
    if index == last or last - index + 1 < min_samples:
        return last
    return max(index, min_samples - 1)


def find_split(z: np.ndarray, powers: np.ndarray, min_samples: int = 1) -> float:
    """Distance of the global power minimum; the span length when it sits at the end.

    With `min_samples` > 1 a segment shorter than that is merged into its neighbour,
    exactly as `fit_span` does.
    """
    return float(z[split_index(z, powers, min_samples)])


def sample_weights(powers, exponent: float) -> np.ndarray:
    """(P / max P) ** exponent, so a sample never weighs less than a weaker one."""
    powers = np.asarray(powers, dtype=float)
    return (powers / powers.max()) ** exponent


@dataclass(frozen=True)
class _LinearSolve:
    alpha0: float
    alpha1: float
    mse: float
    capped: bool = False


def _basis(t: np.ndarray, sigma: float) -> Tuple[np.ndarray, np.ndarray]:
    return -2.0 * t, 2.0 * np.expm1(-sigma * t) / sigma


def _solve_fixed_sigma(t: np.ndarray, y: np.ndarray, sqrt_w: np.ndarray, w_sum: float,
                       sigma: float, ratio_cap: float) -> _LinearSolve:
    """Weighted linear solve for (α0, α1) with 2 α1 / σ held inside the series ratio caps.

    The objective is a convex quadratic, so when the free optimum breaks the cap the
    constrained one sits on the cap and only α0 is re-solved.
    """
    b0, b1 = _basis(t, sigma)
    coeffs, *_ = np.linalg.lstsq(np.column_stack([b0, b1]) * sqrt_w[:, None], y * sqrt_w, rcond=None)
    alpha0, alpha1 = float(coeffs[0]), float(coeffs[1])
    limit = 0.5 * (ratio_cap if alpha1 >= 0 else min(ratio_cap, _NEGATIVE_RATIO_CAP)) * sigma
    capped = abs(alpha1) > limit
    if capped:
        alpha1 = math.copysign(limit, alpha1)
        wb0 = b0 * sqrt_w
        alpha0 = float(wb0 @ ((y - alpha1 * b1) * sqrt_w) / (wb0 @ wb0))
    residual = alpha0 * b0 + alpha1 * b1 - y
    mse = float(np.sum((sqrt_w * residual) ** 2) / w_sum)
    return _LinearSolve(alpha0, alpha1, mse, capped)


def _residual(t: np.ndarray, y: np.ndarray, sigma: float, solve: _LinearSolve) -> np.ndarray:
    b0, b1 = _basis(t, sigma)
    return solve.alpha0 * b0 + solve.alpha1 * b1 - y


def _violation(solve: _LinearSolve, sigma: float, cap: Optional[float]) -> float:
    """Distance of an end-segment solution from the feasible region (0 when feasible)."""
    if cap is None:
        return 0.0
    return (
        max(0.0, solve.alpha0)
        + max(0.0, -cap - solve.alpha0)
        + max(0.0, -(2.0 * solve.alpha0 + sigma))
    )


def _penalized(solve: _LinearSolve, sigma: float, alpha0_cap: Optional[float], length: float) -> float:
    """Weighted MSE, lifted far above every feasible value when the end-segment constraint fails."""
    violation = _violation(solve, sigma, alpha0_cap)
    if violation > 0:
        return solve.mse + _PENALTY * (1.0 + violation * length)
    return solve.mse


@dataclass(frozen=True)
class _SigmaSearch:
    """One weighted σ search over a log-spaced grid of candidate decay rates."""

    t: np.ndarray
    y: np.ndarray
    sqrt_w: np.ndarray
    w_sum: float
    log_grid: np.ndarray
    alpha0_cap: Optional[float]
    options: FitterOptions

    @classmethod
    def build(cls, t: np.ndarray, y: np.ndarray, weights: np.ndarray, log_grid: np.ndarray,
              alpha0_cap: Optional[float], options: FitterOptions) -> "_SigmaSearch":
        return cls(t, y, np.sqrt(weights), float(weights.sum()), log_grid, alpha0_cap, options)

    @property
    def length(self) -> float:
        return float(self.t[-1])

    def solve(self, log_sigma: float) -> _LinearSolve:
        return _solve_fixed_sigma(self.t, self.y, self.sqrt_w, self.w_sum, float(np.exp(log_sigma)),
                                  self.options.max_series_ratio)

    def objective(self, log_sigma: float) -> float:
        return _penalized(self.solve(log_sigma), float(np.exp(log_sigma)), self.alpha0_cap, self.length)

    def best(self) -> Tuple[float, _LinearSolve]:
        coarse = [self.solve(float(s)) for s in self.log_grid]
        penalties = [_penalized(c, float(np.exp(s)), self.alpha0_cap, self.length)
                     for c, s in zip(coarse, self.log_grid)]
        # the unconstrained optimum may sit in a feasible window narrower than the coarse spacing
        candidates = {int(np.argmin(penalties)), int(np.argmin([c.mse for c in coarse]))}
        log_sigma = min((self._refine(best) for best in sorted(candidates)), key=self.objective)
        return log_sigma, self.solve(log_sigma)

    def _refine(self, best: int) -> float:
        """Bounded Brent search between the neighbours of the best coarse point.

        The penalty decreases towards a feasible window, so a window that falls between
        two coarse points is still found.
        """
        left = max(best - 1, 0)
        right = min(best + 1, len(self.log_grid) - 1)
        result = minimize_scalar(self.objective, bounds=(float(self.log_grid[left]), float(self.log_grid[right])),
                                 method="bounded", options={"xatol": self.options.sigma_rtol})
        if result.fun > self.objective(float(self.log_grid[best])):
            return float(self.log_grid[best])
        return float(result.x)


def _tighten_pointwise(search: _SigmaSearch, powers: np.ndarray, weights: np.ndarray,
                       log_sigma: float, solve: _LinearSolve) -> Tuple[float, _LinearSolve]:
    """Lawson reweighting towards the minimax fit over samples within the window of the peak.

    Runs only when the weighted fit misses `pointwise_tolerance_db`. The best iterate is
    kept; an end-segment iterate must stay as close to the feasible region as the start.
    """
    options = search.options
    t, y = search.t, search.y
    window = powers >= powers.max() * 10.0 ** (-options.pointwise_window_db / 10.0)
    tolerance = options.pointwise_tolerance_db / NEPER_TO_DB

    def max_error(s: float, candidate: _LinearSolve) -> float:
        return float(np.max(np.abs(_residual(t, y, float(np.exp(s)), candidate)[window])))

    best_error = max_error(log_sigma, solve)
    if best_error <= tolerance or options.minimax_iterations == 0:
        return log_sigma, solve

    start_error = best_error
    base_violation = _violation(solve, float(np.exp(log_sigma)), search.alpha0_cap)
    best = (log_sigma, solve)
    lawson = np.where(window, weights, 0.0)
    current = best
    for _ in range(options.minimax_iterations):
        lawson = lawson * np.abs(_residual(t, y, float(np.exp(current[0])), current[1]))
        total = float(lawson.sum())
        if total <= 0.0:
            break
        lawson = lawson / total
        current = _SigmaSearch.build(t, y, lawson, search.log_grid, search.alpha0_cap, options).best()
        error = max_error(*current)
        if error < best_error and _violation(current[1], float(np.exp(current[0])),
                                             search.alpha0_cap) <= base_violation:
            best, best_error = current, error
        if best_error <= tolerance:
            break

    logger.debug("pointwise_fit_tightened", start_db=start_error * NEPER_TO_DB,
                 final_db=best_error * NEPER_TO_DB)
    if best_error > tolerance:
        logger.warning("pointwise_tolerance_missed", max_error_db=best_error * NEPER_TO_DB,
                       tolerance_db=options.pointwise_tolerance_db)
    return best


def fit_segment(t: Sequence[float], powers: Sequence[float],
                options: Optional[FitterOptions] = None,
                alpha0_cap: Optional[float] = None) -> SegmentFit:
    """Weighted log-domain least squares fit of one segment.

    `t` starts at 0 (the segment origin). When `alpha0_cap` is given the search keeps
    -alpha0_cap <= α0 <= 0 and 2 α0 + σ > 0, as required for end segments. The
    reported `weighted_mse` always uses the (P / max P) ** weight_exponent weights.
    """
    options = options or FitterOptions()
    t = np.asarray(t, dtype=float)
    powers = np.asarray(powers, dtype=float)
    if t.size < options.min_samples:
        raise FitError(f"segment has {t.size} samples, need at least {options.min_samples}",
                       samples=int(t.size))
    if np.any(powers <= 0) or not np.all(np.isfinite(powers)):
        raise FitError("segment powers must be positive and finite")

    length = float(t[-1] - t[0])
    t = t - t[0]
    p_start = float(powers[0])
    y = np.log(powers / p_start)
    weights = sample_weights(powers, options.weight_exponent)

    lo, hi = (bound / length for bound in options.sigma_bounds)
    log_grid = np.linspace(np.log(lo), np.log(hi), options.coarse_points)
    search = _SigmaSearch.build(t, y, weights, log_grid, alpha0_cap, options)
    log_sigma, solve = _tighten_pointwise(search, powers, weights, *search.best())

    sigma = float(np.exp(log_sigma))
    mse = float(np.sum(weights * _residual(t, y, sigma, solve) ** 2) / np.sum(weights))
    violation = _violation(solve, sigma, alpha0_cap)
    violated = violation > 0.0
    if violated:
        logger.warning("end_segment_constraint_violated", violation=violation, sigma=sigma)
    at_bound = log_sigma <= log_grid[0] + options.sigma_rtol or log_sigma >= log_grid[-1] - options.sigma_rtol
    identified = abs(solve.alpha1) * length > _ALPHA1_IDENTIFIABLE
    if at_bound and identified:
        logger.warning("sigma_at_search_bound", sigma=sigma, lower=lo, upper=hi)
    if solve.capped:
        logger.info("series_ratio_capped", ratio=2.0 * solve.alpha1 / sigma, sigma=sigma)

    return SegmentFit(
        alpha0=solve.alpha0,
        alpha1=solve.alpha1,
        sigma=sigma,
        segment_length=length,
        p_start=p_start,
        weighted_mse=mse,
        sigma_identified=identified,
        sigma_at_bound=bool(at_bound),
        constraint_violated=violated,
        ratio_capped=solve.capped,
    )


def fit_span(profile: PowerProfile, channel: int, intrinsic_alpha: float,
             options: Optional[FitterOptions] = None) -> TwoSegmentFit:
    """Split one channel's profile at its minimum and fit both segments.

    The end segment is fitted on the reversed samples (t = L - z), so its p_start is
    the power at the span end.
    """
    options = options or FitterOptions()
    z = profile.z
    powers = profile.channel(channel)
    split = split_index(z, powers, options.min_samples)
    st = fit_segment(z[: split + 1], powers[: split + 1], options)
    if split == len(z) - 1:
        return TwoSegmentFit(split_z=float(z[-1]), st=st)

    t_end = z[-1] - z[split:][::-1]
    end = fit_segment(t_end, powers[split:][::-1], options,
                      alpha0_cap=options.alpha0_end_cap_ratio * intrinsic_alpha)
    return TwoSegmentFit(split_z=float(z[split]), st=st, end=end)


def two_segment_power(fit: TwoSegmentFit, z: np.ndarray, length: float) -> np.ndarray:
    """Evaluate a two-segment fit on span coordinates."""
    z = np.asarray(z, dtype=float)
    values = model_power(fit.st, np.minimum(z, fit.split_z))
    if fit.end is not None:
        tail = z > fit.split_z
        values = np.where(tail, model_power(fit.end, np.maximum(length - z, 0.0)), values)
    return values


@dataclass(frozen=True)
class LinkFits:
    """Fits indexed [span][channel]; None for channels launched at zero power."""

    fits: Tuple[Tuple[Optional[TwoSegmentFit], ...], ...]

    def get(self, span: int, channel: int) -> Optional[TwoSegmentFit]:
        return self.fits[span][channel]

    @property
    def count(self) -> int:
        return sum(fit is not None for row in self.fits for fit in row)


def fit_link(profiles: Sequence[PowerProfile], intrinsic_alpha: Sequence[np.ndarray],
             options: Optional[FitterOptions] = None) -> LinkFits:
    """Fit every (span, channel) pair that carries power."""
    options = options or FitterOptions()
    rows: List[Tuple[Optional[TwoSegmentFit], ...]] = []
    for n, profile in enumerate(profiles):
        row = []
        for k in range(len(profile.channel_rows)):
            if profile.channel(k)[0] <= 0:
                row.append(None)
                continue
            try:
                row.append(fit_span(profile, k, float(intrinsic_alpha[n][k]), options))
            except FitError as e:
                raise FitError(f"span {n + 1}, {profile.labels[profile.channel_rows[k]]}: {e}",
                               span=n + 1, channel=k) from e
        rows.append(tuple(row))
    return LinkFits(tuple(rows))
