import json
import threading
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional


@dataclass
class StageMetrics:
    """Wall-clock timing of one pipeline stage."""
    name: str
    duration_ms: float = 0.0
    succeeded: bool = True


@dataclass
class RunCounters:
    """Work counters accumulated over a run."""
    spans_solved: int = 0
    bvp_sweeps: int = 0
    fits: int = 0
    series_terms: int = 0
    oracle_refinements: int = 0
    oracle_grid: int = 0

    @property
    def sweeps_per_span(self) -> float:
        if self.spans_solved == 0:
            return 0.0
        return self.bvp_sweeps / self.spans_solved


class RunMetrics:
    """Collects stage durations and counters for one CLI run."""

    def __init__(self, run_id: str, subcommand: str):
        self.run_id = run_id
        self.subcommand = subcommand
        self.stages: List[StageMetrics] = []
        self.counters = RunCounters()
        self._lock = threading.Lock()

    @contextmanager
    def stage(self, name: str):
        """Time the enclosed block; a stage that raises is recorded as failed."""
        record = StageMetrics(name=name)
        started = time.perf_counter()
        try:
            yield record
        except BaseException:
            record.succeeded = False
            raise
        finally:
            record.duration_ms = (time.perf_counter() - started) * 1000.0
            with self._lock:
                self.stages.append(record)

    def add(self, counter: str, amount: int = 1) -> None:
        with self._lock:
            setattr(self.counters, counter, getattr(self.counters, counter) + int(amount))

    def set(self, counter: str, value: int) -> None:
        with self._lock:
            setattr(self.counters, counter, int(value))

    def stage_duration_ms(self, name: str) -> Optional[float]:
        with self._lock:
            for record in self.stages:
                if record.name == name:
                    return record.duration_ms
        return None

    @property
    def total_duration_ms(self) -> float:
        with self._lock:
            return sum(record.duration_ms for record in self.stages)

    def to_dict(self) -> Dict[str, Any]:
        """Convert metrics to a dictionary for JSON serialization."""
        with self._lock:
            counters = asdict(self.counters)
            counters["sweeps_per_span"] = self.counters.sweeps_per_span
            return {
                "run_id": self.run_id,
                "subcommand": self.subcommand,
                "stages": [asdict(record) for record in self.stages],
                "counters": counters,
                "total_duration_ms": sum(record.duration_ms for record in self.stages),
            }

    def save_to_file(self, file_path: str) -> None:
        """Save metrics to a JSON file."""
        with open(file_path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
