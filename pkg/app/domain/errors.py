from typing import Any, Dict


class RamanNliError(Exception):
    """Base class for every error raised by the estimator. Carries a process exit code."""

    exit_code: int = 1

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.details = details

    def to_record(self) -> Dict[str, Any]:
        """Machine-readable error record written by the CLI."""
        return {
            "error": type(self).__name__,
            "message": str(self),
            "exitCode": self.exit_code,
            **self.details,
        }


class ConfigError(RamanNliError):
    """Invalid or inconsistent link configuration."""

    exit_code = 2


class TableCoverageError(ConfigError):
    """A fiber parameter table does not cover the channel and pump band."""


class FrequencyTieError(ConfigError):
    """Two waves share a center frequency after merging channels and pumps."""


class ChannelOverlapError(ConfigError):
    """Two channel bands overlap."""


class SolverConvergenceError(RamanNliError):
    """Backward-pump boundary value sweeps did not converge. Includes the last residual."""

    exit_code = 3

    def __init__(self, residual: float, iterations: int, message: str = "Raman BVP did not converge") -> None:
        super().__init__(f"{message} after {iterations} sweeps (residual {residual:.3e})",
                         residual=residual, iterations=iterations)
        self.residual = residual
        self.iterations = iterations


class FitError(RamanNliError):
    """Segment samples cannot be fitted (too few samples or non-positive power)."""


class EngineError(RamanNliError):
    """Closed-form evaluation produced an invalid value."""


class QuadratureError(RamanNliError):
    """Oracle island quadrature did not converge at the maximum refinement depth."""

    exit_code = 4

    def __init__(self, change_db: float, grid: int, message: str = "Oracle quadrature did not converge") -> None:
        super().__init__(f"{message}: last refinement changed the result by {change_db:.4f} dB at grid {grid}",
                         changeDb=change_db, grid=grid)
        self.change_db = change_db
        self.grid = grid


class ComparisonGateError(RamanNliError):
    """Closed-form vs oracle deviation exceeds the configured gate."""

    exit_code = 5

    def __init__(self, max_delta_db: float, gate_db: float) -> None:
        super().__init__(f"max |delta| {max_delta_db:.4f} dB exceeds gate {gate_db:.4f} dB",
                         maxDeltaDb=max_delta_db, gateDb=gate_db)
        self.max_delta_db = max_delta_db
        self.gate_db = gate_db
