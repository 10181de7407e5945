import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

Cell = Union[str, int, float]


class OutputFormat(str, Enum):
    """Serialization of the result tables."""

    CSV = "csv"
    JSON = "json"


def format_float(value: float) -> str:
    """17 significant digits; non-finite values as inf, -inf, nan."""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, ".17g")


def _cell_text(value: Cell) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def _cell_json(value: Cell) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return format_float(value)
    return value


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass
class Table:
    """One result table with a fixed column order."""

    name: str
    columns: Tuple[str, ...]
    rows: List[Tuple[Cell, ...]] = field(default_factory=list)

    def add_row(self, *values: Cell) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"{self.name}: expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(tuple(values))

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        lines.extend(",".join(_cell_text(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"

    def to_json(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "columns": list(self.columns),
            "rows": [{c: _cell_json(v) for c, v in zip(self.columns, row)} for row in self.rows],
        }

    def filename(self, fmt: OutputFormat) -> str:
        return f"{self.name}.{OutputFormat(fmt).value}"


def write_table(table: Table, out_dir: Union[str, Path], fmt: OutputFormat = OutputFormat.CSV) -> Path:
    """Write a table as CSV (\\n line endings) or a single JSON document."""
    fmt = OutputFormat(fmt)
    path = Path(out_dir) / table.filename(fmt)
    if fmt is OutputFormat.CSV:
        text = table.to_csv()
    else:
        text = json.dumps(table.to_json(), indent=2, ensure_ascii=False) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    return path


def write_json_document(data: Dict[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
    return path


@dataclass
class OutputFile:
    """One file written by a run, by name relative to the output directory."""

    name: str
    sha256: str

    def to_json(self) -> Dict[str, Any]:
        return {"name": self.name, "sha256": self.sha256}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "OutputFile":
        return cls(name=data["name"], sha256=data["sha256"])


@dataclass
class RunManifest:
    """Inputs and outputs of one run. Carries no timestamps."""

    config_path: str
    config_sha256: str
    subcommand: str
    version: str
    overrides: Dict[str, Any] = field(default_factory=dict)
    outputs: List[OutputFile] = field(default_factory=list)

    FILENAME = "manifest.json"

    @property
    def manifest_hash(self) -> str:
        return sha256_text(canonical_json({
            "configSha256": self.config_sha256,
            "subcommand": self.subcommand,
            "overrides": self.overrides,
            "version": self.version,
        }))

    def record(self, path: Union[str, Path]) -> None:
        path = Path(path)
        self.outputs.append(OutputFile(path.name, sha256_file(path)))

    def to_json(self) -> Dict[str, Any]:
        """Serialize the manifest to JSON."""
        return {
            "configPath": self.config_path,
            "configSha256": self.config_sha256,
            "subcommand": self.subcommand,
            "version": self.version,
            "overrides": self.overrides,
            "outputs": [o.to_json() for o in sorted(self.outputs, key=lambda o: o.name)],
            "manifestHash": self.manifest_hash,
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "RunManifest":
        """Deserialize a manifest from JSON."""
        return cls(
            config_path=data["configPath"],
            config_sha256=data["configSha256"],
            subcommand=data["subcommand"],
            version=data["version"],
            overrides=data.get("overrides", {}),
            outputs=[OutputFile.from_json(o) for o in data.get("outputs", [])],
        )

    def save(self, out_dir: Union[str, Path]) -> Path:
        return write_json_document(self.to_json(), Path(out_dir) / self.FILENAME)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunManifest":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(json.load(f))


def write_tables(tables: Sequence[Table], out_dir: Union[str, Path],
                 fmt: OutputFormat, manifest: Optional[RunManifest] = None) -> List[Path]:
    """Write several tables and register each in the manifest."""
    paths = []
    for table in tables:
        path = write_table(table, out_dir, fmt)
        if manifest is not None:
            manifest.record(path)
        paths.append(path)
    return paths
