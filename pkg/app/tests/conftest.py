import os
import sys
from pathlib import Path

import pytest


def _ensure_project_root_on_sys_path() -> None:
    here = os.path.dirname(__file__)
    project_root = os.path.abspath(os.path.join(here, "..", ".."))
    if project_root not in sys.path:
        sys.path.insert(0, project_root)


_ensure_project_root_on_sys_path()

from app.domain.entities import (  # noqa: E402
    Channel,
    FiberSpec,
    LinkSpec,
    PostGain,
    Pump,
    SampledTable,
    SpanSpec,
)
from app.domain.normalization import (  # noqa: E402
    GHZ,
    KM,
    PS2_PER_KM,
    THZ,
    UM2,
    db_per_km_to_field_alpha,
    dbm_to_watt,
    normalize_link,
)
from app.domain.options import RunOptions  # noqa: E402
from app.infrastructure.raman_tables import synthetic_triangle  # noqa: E402

ACCEPTANCE_DIR = Path(__file__).resolve().parents[2] / "acceptance"


@pytest.fixture(autouse=True)
def _isolate_runtime_env():
    """Keep RAMANNLI_* variables from a developer shell or .env out of the tests."""
    keys = [k for k in os.environ if k.startswith("RAMANNLI_")]
    backup = {k: os.environ.pop(k) for k in keys}
    try:
        yield
    finally:
        for k in [k for k in os.environ if k.startswith("RAMANNLI_")]:
            os.environ.pop(k, None)
        os.environ.update(backup)


@pytest.fixture
def acceptance_dir() -> Path:
    return ACCEPTANCE_DIR


@pytest.fixture
def triangle_table():
    return synthetic_triangle()


def build_fiber(loss_db_per_km: float = 0.2, raman=None, beta2_ps2_per_km: float = -21.7,
                area_um2: float = 80.0, f_ref_thz: float = 193.1) -> FiberSpec:
    kwargs = {"raman_gain": raman} if raman is not None else {}
    return FiberSpec(
        loss=SampledTable.constant(db_per_km_to_field_alpha(loss_db_per_km)),
        effective_area=SampledTable.constant(area_um2 * UM2),
        beta2=beta2_ps2_per_km * PS2_PER_KM,
        f_ref=f_ref_thz * THZ,
        name="smf",
        **kwargs,
    )


def build_channels(count: int, start_thz: float = 193.0, spacing_ghz: float = 150.0,
                   rate_gbaud: float = 100.0, launch_dbm: float = 0.0):
    return tuple(
        Channel(start_thz * THZ + i * spacing_ghz * GHZ, rate_gbaud * 1e9, dbm_to_watt(launch_dbm))
        for i in range(count)
    )


def build_link(channels, fiber: FiberSpec, length_km: float = 80.0, spans: int = 1,
               pumps=(), post_gain: PostGain = None, options: RunOptions = None) -> LinkSpec:
    span = SpanSpec(length_km * KM, fiber, tuple(pumps), post_gain or PostGain.transparent())
    return normalize_link(LinkSpec((span,) * spans, tuple(channels), options or RunOptions()))


@pytest.fixture
def simple_fiber() -> FiberSpec:
    """0.2 dB/km, 80 µm², -21.7 ps²/km, no Raman."""
    return build_fiber()


@pytest.fixture
def desk_link(triangle_table) -> LinkSpec:
    """5 channels, one 80 km span, one backward pump near the gain peak."""
    pump = Pump(206.5 * THZ, 0.3, "backward")
    return build_link(build_channels(5), build_fiber(raman=triangle_table), pumps=(pump,))


@pytest.fixture
def gn_link(simple_fiber) -> LinkSpec:
    """3 wide channels over a long loss-only span."""
    return build_link(build_channels(3, start_thz=192.95, rate_gbaud=128.0), simple_fiber, length_km=150.0)


@pytest.fixture
def make_fiber():
    return build_fiber


@pytest.fixture
def make_channels():
    return build_channels


@pytest.fixture
def make_link():
    return build_link
