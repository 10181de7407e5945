from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigError
from .options import RunOptions


class PumpDirection(str, Enum):
    """Propagation direction of a pump relative to the signals."""

    FORWARD = "forward"
    BACKWARD = "backward"

    @property
    def sign(self) -> int:
        return 1 if self is PumpDirection.FORWARD else -1


class PostGainMode(str, Enum):
    """Lumped amplifier model applied at the end of a span."""

    TRANSPARENT = "transparent"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class SampledTable:
    """Piecewise-linear table of a quantity versus frequency (Hz)."""

    frequencies: Tuple[float, ...]
    values: Tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "frequencies", tuple(float(f) for f in self.frequencies))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.frequencies or len(self.frequencies) != len(self.values):
            raise ConfigError("table needs matching, non-empty frequency and value lists")
        if any(b <= a for a, b in zip(self.frequencies, self.frequencies[1:])):
            raise ConfigError("table frequencies must be strictly ascending")

    @classmethod
    def constant(cls, value: float, f_min: float = 1e12, f_max: float = 1e15) -> "SampledTable":
        return cls((f_min, f_max), (value, value))

    def covers(self, f_min: float, f_max: float) -> bool:
        if len(self.frequencies) == 1:
            return True
        return self.frequencies[0] <= f_min and f_max <= self.frequencies[-1]

    def __call__(self, frequency):
        return np.interp(frequency, self.frequencies, self.values)


@dataclass(frozen=True)
class RamanGainTable:
    """Sampled C_R(Δf) for Δf ≥ 0 in 1/(W·m); evaluated as an odd function."""

    offsets: Tuple[float, ...]
    gains: Tuple[float, ...]
    name: str = "custom"
    synthetic: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "offsets", tuple(float(x) for x in self.offsets))
        object.__setattr__(self, "gains", tuple(float(x) for x in self.gains))
        if len(self.offsets) < 2 or len(self.offsets) != len(self.gains):
            raise ConfigError(f"raman gain table '{self.name}' needs at least two matching samples")
        if self.offsets[0] != 0.0 or self.gains[0] != 0.0:
            raise ConfigError(f"raman gain table '{self.name}' must start at (0, 0)")
        if any(b <= a for a, b in zip(self.offsets, self.offsets[1:])):
            raise ConfigError(f"raman gain table '{self.name}' offsets must be strictly ascending")
        if any(g < 0 for g in self.gains):
            raise ConfigError(f"raman gain table '{self.name}' gains must be non-negative")

    @classmethod
    def zero(cls) -> "RamanGainTable":
        """Table that switches inter-channel Raman scattering off."""
        return cls((0.0, 1e14), (0.0, 0.0), name="zero")

    @property
    def max_offset(self) -> float:
        return self.offsets[-1]


@dataclass(frozen=True)
class FiberSpec:
    """Fiber parameters in SI units; loss tables hold field attenuation in 1/m."""

    loss: SampledTable
    effective_area: SampledTable
    beta2: float
    beta3: float = 0.0
    beta4: float = 0.0
    f_ref: float = 193.1e12
    n2: float = 2.6e-20
    raman_gain: RamanGainTable = field(default_factory=RamanGainTable.zero)
    name: str = "fiber"

    def alpha(self, frequency):
        return self.loss(frequency)

    def area(self, frequency):
        return self.effective_area(frequency)


@dataclass(frozen=True)
class Channel:
    """Rectangular WDM channel; the symbol rate is the null-to-null bandwidth."""

    center_frequency: float
    symbol_rate: float
    launch_power: float
    rolloff: float = 0.0

    def __post_init__(self) -> None:
        if self.center_frequency <= 0:
            raise ConfigError("channel center frequency must be positive")
        if self.symbol_rate <= 0:
            raise ConfigError("channel symbol rate must be positive")
        if self.launch_power < 0:
            raise ConfigError("channel launch power must be non-negative")

    @property
    def band_start(self) -> float:
        return self.center_frequency - self.symbol_rate / 2

    @property
    def band_end(self) -> float:
        return self.center_frequency + self.symbol_rate / 2

    @property
    def psd(self) -> float:
        return self.launch_power / self.symbol_rate

    @property
    def label(self) -> str:
        return f"ch_{self.center_frequency / 1e12:.4f}THz"


@dataclass(frozen=True)
class Pump:
    """Raman pump injected at the span start (forward) or span end (backward)."""

    center_frequency: float
    injected_power: float
    direction: PumpDirection = PumpDirection.BACKWARD

    def __post_init__(self) -> None:
        object.__setattr__(self, "direction", PumpDirection(self.direction))
        if self.center_frequency <= 0:
            raise ConfigError("pump frequency must be positive")
        if self.injected_power < 0:
            raise ConfigError("pump power must be non-negative")

    @property
    def label(self) -> str:
        suffix = "fwd" if self.direction is PumpDirection.FORWARD else "bwd"
        return f"pump_{self.center_frequency / 1e12:.4f}THz_{suffix}"


@dataclass(frozen=True)
class PostGain:
    """Lumped gain after a span: transparent or an explicit power-gain table."""

    mode: PostGainMode = PostGainMode.TRANSPARENT
    table: Optional[SampledTable] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", PostGainMode(self.mode))
        if self.mode is PostGainMode.EXPLICIT and self.table is None:
            raise ConfigError("explicit post gain needs a gain table")

    @classmethod
    def transparent(cls) -> "PostGain":
        return cls(PostGainMode.TRANSPARENT)

    @classmethod
    def flat(cls, gain: float) -> "PostGain":
        return cls(PostGainMode.EXPLICIT, SampledTable.constant(gain))

    def gains(self, frequencies: np.ndarray, span_transfer: np.ndarray) -> np.ndarray:
        if self.mode is PostGainMode.TRANSPARENT:
            return 1.0 / span_transfer
        return np.asarray(self.table(frequencies), dtype=float)


@dataclass(frozen=True)
class SpanSpec:
    length: float
    fiber: FiberSpec
    pumps: Tuple[Pump, ...] = ()
    post_gain: PostGain = field(default_factory=PostGain.transparent)

    def __post_init__(self) -> None:
        object.__setattr__(self, "pumps", tuple(self.pumps))
        if self.length <= 0:
            raise ConfigError("span length must be positive")


@dataclass(frozen=True)
class LinkSpec:
    """Normalized link: SI units, channels ascending in frequency."""

    spans: Tuple[SpanSpec, ...]
    channels: Tuple[Channel, ...]
    options: RunOptions = field(default_factory=RunOptions)

    def __post_init__(self) -> None:
        object.__setattr__(self, "spans", tuple(self.spans))
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def n_spans(self) -> int:
        return len(self.spans)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([c.center_frequency for c in self.channels], dtype=float)

    @property
    def symbol_rates(self) -> np.ndarray:
        return np.array([c.symbol_rate for c in self.channels], dtype=float)

    @property
    def launch_powers(self) -> np.ndarray:
        return np.array([c.launch_power for c in self.channels], dtype=float)


@dataclass(frozen=True, eq=False)
class PowerProfile:
    """Per-wave power versus distance within one span.

    Rows follow the merged ascending-frequency wave order; `channel_rows[k]` is the
    row of the k-th channel of the link and `pump_rows[p]` the row of the p-th pump.
    """

    z: np.ndarray
    powers: np.ndarray
    frequencies: np.ndarray
    directions: np.ndarray
    labels: Tuple[str, ...]
    channel_rows: np.ndarray
    pump_rows: np.ndarray
    residual: float = 0.0
    iterations: int = 0
    clamped: bool = False

    @property
    def length(self) -> float:
        return float(self.z[-1])

    def channel(self, k: int) -> np.ndarray:
        return self.powers[self.channel_rows[k]]

    def channel_output(self) -> np.ndarray:
        return self.powers[self.channel_rows, -1]

    def channel_input(self) -> np.ndarray:
        return self.powers[self.channel_rows, 0]


@dataclass(frozen=True)
class SegmentFit:
    """Loss-model parameters of one segment in its own coordinate (t = 0 at p_start)."""

    alpha0: float
    alpha1: float
    sigma: float
    segment_length: float
    p_start: float
    weighted_mse: float
    sigma_identified: bool = True
    sigma_at_bound: bool = False
    constraint_violated: bool = False
    ratio_capped: bool = False

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ConfigError("segment sigma must be positive")


@dataclass(frozen=True)
class TwoSegmentFit:
    """Split point plus the start segment and the optional flipped end segment."""

    split_z: float
    st: SegmentFit
    end: Optional[SegmentFit] = None

    @property
    def has_end(self) -> bool:
        return self.end is not None


@dataclass(frozen=True, eq=False)
class MlFactors:
    """Per-(span, interferer) correction factors; all ones is the plain IGN model."""

    rho: np.ndarray

    def __post_init__(self) -> None:
        rho = np.asarray(self.rho, dtype=float)
        if rho.ndim != 2 or np.any(rho <= 0):
            raise ConfigError("rho must be a positive [span][channel] matrix")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def ones(cls, n_spans: int, n_channels: int) -> "MlFactors":
        return cls(np.ones((n_spans, n_channels)))

    def scaled(self, factor: float) -> "MlFactors":
        return MlFactors(self.rho * factor)


@dataclass(frozen=True, eq=False)
class NliReport:
    """NLI per channel under test at the link end.

    `breakdown[c, n, i, m]` is the power generated on CUT c in span n by contribution
    i (0 = start segment, 1 = end segment) with interferer m.
    """

    cut_frequencies: np.ndarray
    symbol_rates: np.ndarray
    breakdown: np.ndarray
    series_terms: int = 0

    @property
    def total(self) -> np.ndarray:
        return self.breakdown.sum(axis=(1, 2, 3))

    @property
    def psd(self) -> np.ndarray:
        return self.total / self.symbol_rates


@dataclass(frozen=True)
class IslandSpec:
    """Integration island of one (interferer, CUT) pair on the f1/f2 axes."""

    f1_range: Tuple[float, float]
    f2_range: Tuple[float, float]
    f: float
    is_spm: bool

    @classmethod
    def for_pair(cls, cut: Channel, interferer: Channel) -> "IslandSpec":
        is_spm = cut == interferer
        return cls(
            f1_range=(interferer.band_start, interferer.band_end),
            f2_range=(cut.band_start, cut.band_end),
            f=cut.center_frequency,
            is_spm=is_spm,
        )
