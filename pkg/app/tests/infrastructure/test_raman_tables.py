import pytest

from app.domain.errors import ConfigError
from app.domain.normalization import KM, THZ
from app.infrastructure.raman_tables import SYNTHETIC_TRIANGLE, builtin_names, builtin_table, synthetic_triangle


class TestBuiltinTables:
    """Tests for the shipped Raman gain tables."""

    def test_triangle_shape(self):
        table = synthetic_triangle()
        assert table.synthetic
        assert table.name == SYNTHETIC_TRIANGLE
        assert table.offsets[0] == 0.0
        assert table.offsets[1] == pytest.approx(13.2 * THZ)
        assert max(table.gains) == pytest.approx(0.25 / KM)
        assert table.gains[-1] == 0.0

    def test_lookup_by_name(self):
        assert builtin_table(SYNTHETIC_TRIANGLE) == synthetic_triangle()
        assert SYNTHETIC_TRIANGLE in builtin_names()

    def test_unknown_name(self):
        with pytest.raises(ConfigError) as exc_info:
            builtin_table("measured-smf")
        assert exc_info.value.details["field"] == "raman_gain"
