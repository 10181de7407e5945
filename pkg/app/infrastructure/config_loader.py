"""JSON link configuration: schema, validation and conversion to SI units.

Config files use engineering units (THz, GHz, GBd, km, dB/km, dBm or mW, µm²,
ps^n/km, 1/(W·km)); everything past this module is SI. The field names are frozen
and documented in docs/CONFIG.md.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    model_validator,
)

from app.crosscutting.logging import get_logger
from app.crosscutting.reporting import sha256_text
from app.domain.entities import (
    Channel,
    FiberSpec,
    LinkSpec,
    MlFactors,
    PostGain,
    PostGainMode,
    Pump,
    RamanGainTable,
    SampledTable,
    SpanSpec,
)
from app.domain.errors import ConfigError
from app.domain.normalization import (
    GHZ,
    KM,
    PS2_PER_KM,
    PS3_PER_KM,
    PS4_PER_KM,
    THZ,
    UM2,
    db_per_km_to_field_alpha,
    db_to_linear,
    dbm_to_watt,
    field_alpha_to_db_per_km,
    linear_to_db,
    normalize_link,
    pumps_inside_signal_band,
)
from app.domain.options import (
    EngineOptions,
    FitterOptions,
    LengthModel,
    OracleMode,
    OracleOptions,
    RunOptions,
    SeriesBound,
    SolverOptions,
)
from app.infrastructure.raman_tables import SYNTHETIC_TRIANGLE, builtin_table

logger = get_logger(__name__)

GBAUD = 1e9
Curve = Union[float, List[Tuple[float, float]]]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _exactly_one(model: BaseModel, *names: str) -> None:
    given = [name for name in names if getattr(model, name) is not None]
    if len(given) != 1:
        raise ValueError(f"exactly one of {', '.join(names)} is required")


class RamanGainModel(_Model):
    builtin: Optional[str] = None
    samples: Optional[List[Tuple[NonNegativeFloat, NonNegativeFloat]]] = None

    @model_validator(mode="after")
    def _one_source(self) -> "RamanGainModel":
        _exactly_one(self, "builtin", "samples")
        return self


class FiberModel(_Model):
    loss_db_per_km: Curve
    effective_area_um2: Curve
    beta2_ps2_per_km: float
    beta3_ps3_per_km: float = 0.0
    beta4_ps4_per_km: float = 0.0
    f_ref_thz: PositiveFloat = 193.1
    n2_m2_per_w: PositiveFloat = 2.6e-20
    raman_gain: Optional[str] = None


class _LaunchModel(_Model):
    launch_dbm: Optional[float] = None
    launch_mw: Optional[NonNegativeFloat] = None
    rolloff: float = Field(default=0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _one_launch(self) -> "_LaunchModel":
        _exactly_one(self, "launch_dbm", "launch_mw")
        return self

    @property
    def launch_watt(self) -> float:
        if self.launch_mw is not None:
            return self.launch_mw * 1e-3
        return dbm_to_watt(self.launch_dbm)


class ChannelModel(_LaunchModel):
    center_thz: PositiveFloat
    symbol_rate_gbaud: PositiveFloat


class GridModel(_LaunchModel):
    start_thz: PositiveFloat
    count: PositiveInt
    spacing_ghz: PositiveFloat
    symbol_rate_gbaud: PositiveFloat


class GridEntry(_Model):
    grid: GridModel


class PumpModel(_Model):
    frequency_thz: PositiveFloat
    power_mw: NonNegativeFloat
    direction: Literal["forward", "backward"] = "backward"


class PostGainModel(_Model):
    gain_db: Optional[float] = None
    table: Optional[List[Tuple[PositiveFloat, float]]] = None

    @model_validator(mode="after")
    def _one_gain(self) -> "PostGainModel":
        _exactly_one(self, "gain_db", "table")
        return self


class SpanModel(_Model):
    length_km: PositiveFloat
    fiber: str
    repeat: PositiveInt = 1
    pumps: List[PumpModel] = Field(default_factory=list)
    post_gain: Union[Literal["transparent"], PostGainModel] = "transparent"


class SolverModel(_Model):
    step_m: PositiveFloat = 50.0
    bvp_tolerance: PositiveFloat = 1e-4
    max_iterations: PositiveInt = 50
    damping: float = Field(default=0.7, gt=0.0, le=1.0)


class FitterModel(_Model):
    weight_exponent: NonNegativeFloat = 2.0
    sigma_bounds: Tuple[PositiveFloat, PositiveFloat] = (1e-2, 1e2)
    sigma_rtol: float = Field(default=1e-6, gt=0.0, le=1e-3)
    coarse_points: int = Field(default=33, ge=5)
    alpha0_end_cap_ratio: PositiveFloat = 0.1
    min_samples: int = Field(default=8, ge=3)
    max_series_ratio: PositiveFloat = 30.0
    pointwise_tolerance_db: PositiveFloat = 0.25
    pointwise_window_db: PositiveFloat = 30.0
    minimax_iterations: NonNegativeInt = 30


class EngineModel(_Model):
    series_bound: SeriesBound = SeriesBound.PER_CHANNEL
    series_extra_terms: NonNegativeInt = 0
    min_series_order: NonNegativeInt = 3
    max_series_order: NonNegativeInt = 1000
    length_model: LengthModel = LengthModel.ASYMPTOTIC


class OracleModel(_Model):
    mode: OracleMode = OracleMode.SPLIT
    island_grid: int = Field(default=64, ge=8)
    max_refinements: NonNegativeInt = 2
    tolerance_db: PositiveFloat = 0.01


class OptionsModel(_Model):
    solver: SolverModel = Field(default_factory=SolverModel)
    fitter: FitterModel = Field(default_factory=FitterModel)
    engine: EngineModel = Field(default_factory=EngineModel)
    oracle: OracleModel = Field(default_factory=OracleModel)


class LinkConfigModel(_Model):
    name: str = "link"
    fibers: Dict[str, FiberModel] = Field(min_length=1)
    raman_gain: Dict[str, RamanGainModel] = Field(default_factory=dict)
    channels: List[Union[ChannelModel, GridEntry]] = Field(min_length=1)
    spans: List[SpanModel] = Field(min_length=1)
    options: OptionsModel = Field(default_factory=OptionsModel)

    @model_validator(mode="after")
    def _references(self) -> "LinkConfigModel":
        for index, span in enumerate(self.spans):
            if span.fiber not in self.fibers:
                raise ValueError(f"span {index + 1} references unknown fiber '{span.fiber}'")
        for name, fiber in self.fibers.items():
            if fiber.raman_gain is not None and fiber.raman_gain not in self.raman_gain:
                raise ValueError(f"fiber '{name}' references unknown raman_gain '{fiber.raman_gain}'")
        return self


@dataclass(frozen=True)
class LoadedConfig:
    link: LinkSpec
    options: RunOptions
    raw_sha256: str
    name: str = "link"


def _error_path(loc: Tuple[Any, ...]) -> str:
    return ".".join(str(part) for part in loc)


def _wrap_validation(error: ValidationError) -> ConfigError:
    problems = [f"{_error_path(e['loc']) or '<root>'}: {e['msg']}" for e in error.errors()]
    first = error.errors()[0]
    return ConfigError(f"invalid config: {'; '.join(problems)}",
                       field=_error_path(first["loc"]), problems=problems)


def _curve(value: Curve, convert) -> SampledTable:
    if isinstance(value, (int, float)):
        return SampledTable.constant(convert(float(value)))
    return SampledTable(tuple(f * THZ for f, _ in value), tuple(convert(v) for _, v in value))


def _raman_table(name: str, model: RamanGainModel) -> RamanGainTable:
    if model.builtin is not None:
        return builtin_table(model.builtin)
    offsets = tuple(df * THZ for df, _ in model.samples)
    gains = tuple(g / KM for _, g in model.samples)
    return RamanGainTable(offsets, gains, name=name)


def _fiber(name: str, model: FiberModel, tables: Dict[str, RamanGainTable]) -> FiberSpec:
    return FiberSpec(
        loss=_curve(model.loss_db_per_km, db_per_km_to_field_alpha),
        effective_area=_curve(model.effective_area_um2, lambda a: a * UM2),
        beta2=model.beta2_ps2_per_km * PS2_PER_KM,
        beta3=model.beta3_ps3_per_km * PS3_PER_KM,
        beta4=model.beta4_ps4_per_km * PS4_PER_KM,
        f_ref=model.f_ref_thz * THZ,
        n2=model.n2_m2_per_w,
        raman_gain=tables[model.raman_gain] if model.raman_gain else RamanGainTable.zero(),
        name=name,
    )


def _channels(entries: List[Union[ChannelModel, GridEntry]]) -> List[Channel]:
    channels: List[Channel] = []
    for entry in entries:
        if isinstance(entry, GridEntry):
            grid = entry.grid
            for i in range(grid.count):
                channels.append(Channel(
                    center_frequency=grid.start_thz * THZ + i * grid.spacing_ghz * GHZ,
                    symbol_rate=grid.symbol_rate_gbaud * GBAUD,
                    launch_power=grid.launch_watt,
                    rolloff=grid.rolloff,
                ))
        else:
            channels.append(Channel(entry.center_thz * THZ, entry.symbol_rate_gbaud * GBAUD,
                                    entry.launch_watt, entry.rolloff))
    return channels


def _post_gain(value: Union[str, PostGainModel]) -> PostGain:
    if isinstance(value, str):
        return PostGain.transparent()
    if value.gain_db is not None:
        return PostGain.flat(float(db_to_linear(value.gain_db)))
    return PostGain(PostGainMode.EXPLICIT, SampledTable(
        tuple(f * THZ for f, _ in value.table),
        tuple(float(db_to_linear(g)) for _, g in value.table),
    ))


def _options(model: OptionsModel) -> RunOptions:
    s, f, e, o = model.solver, model.fitter, model.engine, model.oracle
    return RunOptions(
        solver=SolverOptions(step=s.step_m, bvp_tolerance=s.bvp_tolerance,
                             max_iterations=s.max_iterations, damping=s.damping),
        fitter=FitterOptions(weight_exponent=f.weight_exponent, sigma_bounds=tuple(f.sigma_bounds),
                             sigma_rtol=f.sigma_rtol, coarse_points=f.coarse_points,
                             alpha0_end_cap_ratio=f.alpha0_end_cap_ratio, min_samples=f.min_samples,
                             max_series_ratio=f.max_series_ratio,
                             pointwise_tolerance_db=f.pointwise_tolerance_db,
                             pointwise_window_db=f.pointwise_window_db,
                             minimax_iterations=f.minimax_iterations),
        engine=EngineOptions(series_bound=e.series_bound, series_extra_terms=e.series_extra_terms,
                             min_series_order=e.min_series_order, max_series_order=e.max_series_order,
                             length_model=e.length_model),
        oracle=OracleOptions(mode=o.mode, island_grid=o.island_grid,
                             max_refinements=o.max_refinements, tolerance_db=o.tolerance_db),
    )


def validate_and_normalize(raw: Dict[str, Any]) -> LinkSpec:
    """Validate a parsed config document and build the normalized SI link."""
    try:
        model = LinkConfigModel.model_validate(raw)
    except ValidationError as e:
        raise _wrap_validation(e) from e

    tables = {name: _raman_table(name, m) for name, m in model.raman_gain.items()}
    fibers = {name: _fiber(name, m, tables) for name, m in model.fibers.items()}
    spans: List[SpanSpec] = []
    for span in model.spans:
        pumps = tuple(Pump(p.frequency_thz * THZ, p.power_mw * 1e-3, p.direction) for p in span.pumps)
        spec = SpanSpec(span.length_km * KM, fibers[span.fiber], pumps, _post_gain(span.post_gain))
        spans.extend([spec] * span.repeat)

    link = normalize_link(LinkSpec(tuple(spans), tuple(_channels(model.channels)), _options(model.options)))
    for index, pump in pumps_inside_signal_band(link):
        logger.warning("pump_inside_signal_band", span=index + 1,
                       pump_thz=pump.center_frequency / THZ)
    return link


def _read_json(path: Union[str, Path]) -> Tuple[Dict[str, Any], str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror or e}", path=str(path)) from e
    try:
        return json.loads(text), sha256_text(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e.msg} (line {e.lineno})", path=str(path)) from e


def load_link_config(path: Union[str, Path]) -> LoadedConfig:
    """Read, validate and normalize a link config file."""
    raw, digest = _read_json(path)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must contain a JSON object", path=str(path))
    link = validate_and_normalize(raw)
    logger.info("config_loaded", path=str(path), spans=link.n_spans, channels=link.n_channels,
                config_hash=digest[:12])
    return LoadedConfig(link=link, options=link.options, raw_sha256=digest,
                        name=str(raw.get("name", "link")))


def override_options(link: LinkSpec, step_m: Optional[float] = None,
                     island_grid: Optional[int] = None,
                     oracle_mode: Optional[str] = None) -> LinkSpec:
    """Apply command-line overrides on top of the config option blocks."""
    options = link.options
    if step_m is not None:
        options = dataclasses.replace(options, solver=dataclasses.replace(options.solver, step=step_m))
    if island_grid is not None:
        options = dataclasses.replace(options, oracle=dataclasses.replace(options.oracle, island_grid=island_grid))
    if oracle_mode is not None:
        options = dataclasses.replace(options, oracle=dataclasses.replace(options.oracle, mode=OracleMode(oracle_mode)))
    return normalize_link(LinkSpec(link.spans, link.channels, options))


def load_rho(path: Union[str, Path], n_spans: int, n_channels: int) -> MlFactors:
    """Read ρ factors: {"rho": [[...per channel...] per span]} or the bare matrix."""
    raw, _ = _read_json(path)
    matrix = raw.get("rho") if isinstance(raw, dict) else raw
    try:
        rho = np.asarray(matrix, dtype=float)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: rho must be a numeric matrix", path=str(path)) from e
    if rho.shape != (n_spans, n_channels):
        raise ConfigError(f"{path}: rho must be {n_spans}x{n_channels}, got {'x'.join(map(str, rho.shape))}",
                          path=str(path))
    return MlFactors(rho)


def _dump_table(table: SampledTable, convert) -> List[List[float]]:
    return [[f / THZ, float(convert(v))] for f, v in zip(table.frequencies, table.values)]


def _dump_fiber(fiber: FiberSpec, raman_name: Optional[str]) -> Dict[str, Any]:
    return {
        "loss_db_per_km": _dump_table(fiber.loss, field_alpha_to_db_per_km),
        "effective_area_um2": _dump_table(fiber.effective_area, lambda a: a / UM2),
        "beta2_ps2_per_km": fiber.beta2 / PS2_PER_KM,
        "beta3_ps3_per_km": fiber.beta3 / PS3_PER_KM,
        "beta4_ps4_per_km": fiber.beta4 / PS4_PER_KM,
        "f_ref_thz": fiber.f_ref / THZ,
        "n2_m2_per_w": fiber.n2,
        "raman_gain": raman_name,
    }


def _dump_raman(table: RamanGainTable) -> Dict[str, Any]:
    if table.synthetic and table.name == SYNTHETIC_TRIANGLE:
        return {"builtin": SYNTHETIC_TRIANGLE}
    return {"samples": [[df / THZ, g * KM] for df, g in zip(table.offsets, table.gains)]}


def _dump_post_gain(post_gain: PostGain) -> Union[str, Dict[str, Any]]:
    if post_gain.mode is PostGainMode.TRANSPARENT:
        return "transparent"
    return {"table": [[f / THZ, float(linear_to_db(g))]
                      for f, g in zip(post_gain.table.frequencies, post_gain.table.values)]}


def dump_link_config(link: LinkSpec, name: str = "link") -> Dict[str, Any]:
    """Serialize a link back into the config schema (engineering units)."""
    fibers: Dict[str, Dict[str, Any]] = {}
    raman: Dict[str, Dict[str, Any]] = {}
    fiber_names: Dict[int, str] = {}
    for span in link.spans:
        fiber = span.fiber
        if id(fiber) in fiber_names:
            continue
        fiber_name = fiber.name if fiber.name not in fibers else f"{fiber.name}_{len(fibers) + 1}"
        raman_name = None
        if fiber.raman_gain.name != "zero" or any(fiber.raman_gain.gains):
            raman_name = fiber.raman_gain.name
            raman[raman_name] = _dump_raman(fiber.raman_gain)
        fibers[fiber_name] = _dump_fiber(fiber, raman_name)
        fiber_names[id(fiber)] = fiber_name

    options = link.options
    return {
        "name": name,
        "fibers": fibers,
        "raman_gain": raman,
        "channels": [
            {
                "center_thz": c.center_frequency / THZ,
                "symbol_rate_gbaud": c.symbol_rate / GBAUD,
                "launch_mw": c.launch_power * 1e3,
                "rolloff": c.rolloff,
            }
            for c in link.channels
        ],
        "spans": [
            {
                "length_km": span.length / KM,
                "fiber": fiber_names[id(span.fiber)],
                "pumps": [
                    {"frequency_thz": p.center_frequency / THZ, "power_mw": p.injected_power * 1e3,
                     "direction": p.direction.value}
                    for p in span.pumps
                ],
                "post_gain": _dump_post_gain(span.post_gain),
            }
            for span in link.spans
        ],
        "options": {
            "solver": {"step_m": options.solver.step, "bvp_tolerance": options.solver.bvp_tolerance,
                       "max_iterations": options.solver.max_iterations, "damping": options.solver.damping},
            "fitter": {"weight_exponent": options.fitter.weight_exponent,
                       "sigma_bounds": list(options.fitter.sigma_bounds),
                       "sigma_rtol": options.fitter.sigma_rtol,
                       "coarse_points": options.fitter.coarse_points,
                       "alpha0_end_cap_ratio": options.fitter.alpha0_end_cap_ratio,
                       "min_samples": options.fitter.min_samples,
                       "max_series_ratio": options.fitter.max_series_ratio,
                       "pointwise_tolerance_db": options.fitter.pointwise_tolerance_db,
                       "pointwise_window_db": options.fitter.pointwise_window_db,
                       "minimax_iterations": options.fitter.minimax_iterations},
            "engine": {"series_bound": options.engine.series_bound.value,
                       "series_extra_terms": options.engine.series_extra_terms,
                       "min_series_order": options.engine.min_series_order,
                       "max_series_order": options.engine.max_series_order,
                       "length_model": options.engine.length_model.value},
            "oracle": {"mode": options.oracle.mode.value, "island_grid": options.oracle.island_grid,
                       "max_refinements": options.oracle.max_refinements,
                       "tolerance_db": options.oracle.tolerance_db},
        },
    }
