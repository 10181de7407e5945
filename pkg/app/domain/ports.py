from __future__ import annotations

from typing import Protocol

import numpy as np


class PowerEnvelope(Protocol):
    """Port for the normalized power evolution of one interferer within one span.

    The numerical reference integrates whatever envelope it is handed, so the same
    quadrature runs on solver profiles and on fitted loss models.
    """

    @property
    def z(self) -> np.ndarray:
        """Uniform distance grid in metres, starting at 0."""

    @property
    def values(self) -> np.ndarray:
        """P(z) / P(0) on the grid."""

    @property
    def split_index(self) -> int:
        """Grid index of the segment boundary; len(z) - 1 when there is no end segment."""
