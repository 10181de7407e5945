from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple

from .errors import ConfigError


class SeriesBound(str, Enum):
    """How the series index range of each contribution is chosen."""

    PER_CHANNEL = "per_channel"
    SHARED = "shared"


class LengthModel(str, Enum):
    """Segment length treatment inside the closed-form terms."""

    ASYMPTOTIC = "asymptotic"
    FINITE = "finite"


class OracleMode(str, Enum):
    """Which power envelope the oracle integrates and how segments are combined."""

    EXACT = "exact"
    SPLIT = "split"
    FITTED = "fitted"


@dataclass(frozen=True)
class SolverOptions:
    """Fixed-step RK4 and backward-pump sweep settings."""

    step: float = 50.0
    bvp_tolerance: float = 1e-4
    max_iterations: int = 50
    damping: float = 0.7

    def __post_init__(self) -> None:
        if self.step <= 0:
            raise ConfigError("solver.step must be positive", field="solver.step")
        if self.bvp_tolerance <= 0:
            raise ConfigError("solver.bvp_tolerance must be positive", field="solver.bvp_tolerance")
        if self.max_iterations < 1:
            raise ConfigError("solver.max_iterations must be >= 1", field="solver.max_iterations")
        if not 0.0 < self.damping <= 1.0:
            raise ConfigError("solver.damping must lie in (0, 1]", field="solver.damping")


@dataclass(frozen=True)
class FitterOptions:
    """Weighted log-domain least squares settings."""

    weight_exponent: float = 2.0
    sigma_bounds: Tuple[float, float] = (1e-2, 1e2)
    sigma_rtol: float = 1e-6
    coarse_points: int = 33
    alpha0_end_cap_ratio: float = 0.1
    min_samples: int = 8
    max_series_ratio: float = 30.0
    pointwise_tolerance_db: float = 0.25
    pointwise_window_db: float = 30.0
    minimax_iterations: int = 30

    def __post_init__(self) -> None:
        lo, hi = self.sigma_bounds
        if not 0 < lo < hi:
            raise ConfigError("fitter.sigma_bounds must satisfy 0 < lower < upper", field="fitter.sigma_bounds")
        if self.sigma_rtol <= 0 or self.sigma_rtol > 1e-3:
            raise ConfigError("fitter.sigma_rtol must lie in (0, 1e-3]", field="fitter.sigma_rtol")
        if self.coarse_points < 5:
            raise ConfigError("fitter.coarse_points must be >= 5", field="fitter.coarse_points")
        if self.alpha0_end_cap_ratio <= 0:
            raise ConfigError("fitter.alpha0_end_cap_ratio must be positive", field="fitter.alpha0_end_cap_ratio")
        if self.min_samples < 3:
            raise ConfigError("fitter.min_samples must be >= 3", field="fitter.min_samples")
        if self.max_series_ratio <= 0:
            raise ConfigError("fitter.max_series_ratio must be positive", field="fitter.max_series_ratio")
        if self.pointwise_tolerance_db <= 0 or self.pointwise_window_db <= 0:
            raise ConfigError("fitter pointwise tolerance and window must be positive", field="fitter")
        if self.minimax_iterations < 0:
            raise ConfigError("fitter.minimax_iterations must be >= 0", field="fitter.minimax_iterations")


@dataclass(frozen=True)
class EngineOptions:
    """Closed-form evaluation settings."""

    series_bound: SeriesBound = SeriesBound.PER_CHANNEL
    series_extra_terms: int = 0
    min_series_order: int = 3
    max_series_order: int = 1000
    length_model: LengthModel = LengthModel.ASYMPTOTIC

    def __post_init__(self) -> None:
        object.__setattr__(self, "series_bound", SeriesBound(self.series_bound))
        object.__setattr__(self, "length_model", LengthModel(self.length_model))
        if self.series_extra_terms < 0 or self.min_series_order < 0:
            raise ConfigError("engine series settings must be non-negative", field="engine")
        if self.max_series_order < self.min_series_order:
            raise ConfigError("engine.max_series_order must be >= min_series_order", field="engine.max_series_order")


@dataclass(frozen=True)
class OracleOptions:
    """Island quadrature settings for the numerical reference."""

    mode: OracleMode = OracleMode.SPLIT
    island_grid: int = 64
    max_refinements: int = 2
    tolerance_db: float = 0.01

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", OracleMode(self.mode))
        if self.island_grid < 8 or self.island_grid % 2:
            raise ConfigError("oracle.island_grid must be an even number >= 8", field="oracle.island_grid")
        if self.max_refinements < 0:
            raise ConfigError("oracle.max_refinements must be >= 0", field="oracle.max_refinements")
        if self.tolerance_db <= 0:
            raise ConfigError("oracle.tolerance_db must be positive", field="oracle.tolerance_db")


@dataclass(frozen=True)
class RunOptions:
    """All option blocks carried by a link configuration."""

    solver: SolverOptions = field(default_factory=SolverOptions)
    fitter: FitterOptions = field(default_factory=FitterOptions)
    engine: EngineOptions = field(default_factory=EngineOptions)
    oracle: OracleOptions = field(default_factory=OracleOptions)
