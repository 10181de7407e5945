"""Nonlinear coefficient and dispersion kernel of one fiber."""

from __future__ import annotations

import numpy as np
from scipy.constants import speed_of_light

from .entities import FiberSpec


def gamma_nl(f1, f2, fiber: FiberSpec):
    """Frequency-dependent nonlinear coefficient in 1/(W·m).

    Uses the mean effective area of the two frequencies; with equal areas this is the
    textbook 2π f n2 / (c A_eff).
    """
    f1 = np.asarray(f1, dtype=float)
    area_sum = fiber.area(f1) + fiber.area(np.asarray(f2, dtype=float))
    return (2.0 * np.pi * f1 / speed_of_light) * 2.0 * fiber.n2 / area_sum


def beta2_eff(f1, f2, fiber: FiberSpec):
    """Effective group velocity dispersion seen by the (f1, f2) interaction, s²/m."""
    d1 = np.asarray(f1, dtype=float) - fiber.f_ref
    d2 = np.asarray(f2, dtype=float) - fiber.f_ref
    return (
        fiber.beta2
        + np.pi * fiber.beta3 * (d1 + d2)
        + (2.0 / 3.0) * np.pi ** 2 * fiber.beta4 * (d1 ** 2 + d1 * d2 - d2 ** 2)
    )


def chi(f1, f2, f, fiber: FiberSpec):
    """Phase mismatch rate of the (f1, f2, f1 + f2 - f) four-wave interaction, 1/m."""
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    return 4.0 * np.pi ** 2 * (f1 - f) * (f2 - f) * beta2_eff(f1, f2, fiber)
