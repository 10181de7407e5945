import json

import pytest

from app.crosscutting.reporting import (
    OutputFormat,
    RunManifest,
    Table,
    canonical_json,
    format_float,
    sha256_file,
    sha256_text,
    write_table,
    write_tables,
)


class TestFormatting:
    """Tests for number formatting and hashing helpers."""

    @pytest.mark.parametrize("value, text", [
        (0.1, "0.10000000000000001"),
        (1.0, "1"),
        (-2.5, "-2.5"),
        (float("inf"), "inf"),
        (float("-inf"), "-inf"),
        (float("nan"), "nan"),
    ])
    def test_format_float(self, value, text):
        assert format_float(value) == text

    def test_canonical_json_sorted_and_compact(self):
        assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'

    def test_sha256(self, tmp_path):
        path = tmp_path / "x.txt"
        path.write_bytes(b"abc")
        expected = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        assert sha256_text("abc") == expected
        assert sha256_file(path) == expected


class TestTable:
    """Tests for result tables."""

    def setup_method(self):
        """Set up test fixtures."""
        self.table = Table("nli", ("channel_thz", "nli_dbm", "ok", "mode"))
        self.table.add_row(193.1, -30.5, True, "split")
        self.table.add_row(193.25, float("-inf"), False, "exact")

    def test_row_length_checked(self):
        with pytest.raises(ValueError):
            self.table.add_row(1.0)

    def test_csv(self):
        lines = self.table.to_csv().splitlines()
        assert lines[0] == "channel_thz,nli_dbm,ok,mode"
        assert lines[1] == "193.09999999999999,-30.5,true,split"
        assert lines[2] == "193.25,-inf,false,exact"

    def test_json_non_finite_as_text(self):
        data = self.table.to_json()
        assert data["columns"] == ["channel_thz", "nli_dbm", "ok", "mode"]
        assert data["rows"][1]["nli_dbm"] == "-inf"
        assert data["rows"][0]["ok"] is True

    def test_write_csv_uses_lf(self, tmp_path):
        path = write_table(self.table, tmp_path, OutputFormat.CSV)
        assert path.name == "nli.csv"
        assert b"\r\n" not in path.read_bytes()

    def test_write_json(self, tmp_path):
        path = write_table(self.table, tmp_path, "json")
        assert path.name == "nli.json"
        assert json.loads(path.read_text(encoding="utf-8"))["name"] == "nli"


class TestRunManifest:
    """Tests for the run manifest."""

    def setup_method(self):
        """Set up test fixtures."""
        self.manifest = RunManifest(config_path="link.json", config_sha256="abc", subcommand="nli",
                                    version="0.1.0", overrides={"step_m": 25.0})

    def test_hash_ignores_outputs_and_path(self, tmp_path):
        before = self.manifest.manifest_hash
        table = Table("t", ("a",))
        table.add_row(1)
        write_tables([table], tmp_path, OutputFormat.CSV, self.manifest)
        self.manifest.config_path = "/elsewhere/link.json"

        assert self.manifest.manifest_hash == before
        assert self.manifest.outputs[0].name == "t.csv"

    def test_hash_tracks_overrides(self):
        other = RunManifest("link.json", "abc", "nli", "0.1.0", {"step_m": 50.0})
        assert other.manifest_hash != self.manifest.manifest_hash

    def test_save_and_load(self, tmp_path):
        table = Table("b", ("a",))
        table.add_row(2)
        write_tables([table], tmp_path, OutputFormat.CSV, self.manifest)
        path = self.manifest.save(tmp_path)
        loaded = RunManifest.load(path)

        assert path.name == RunManifest.FILENAME
        assert loaded.manifest_hash == self.manifest.manifest_hash
        assert [o.name for o in loaded.outputs] == ["b.csv"]
        assert json.loads(path.read_text(encoding="utf-8"))["manifestHash"] == self.manifest.manifest_hash
