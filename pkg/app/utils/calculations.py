# Utility functions for pure calculations
import math

import numpy as np
from scipy.ndimage import uniform_filter

from app.errors import StructuralError

PEAK_GREY = 255.0


def eval_pm(m: int, x):
    """P_m(x) = (1 - x)^m * sum_{j<m} C(m+j-1, j) x^j, elementwise over arrays."""
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    for j in range(m):
        total = total + math.comb(m + j - 1, j) * x**j
    result = (1.0 - x) ** m * total
    return result.item() if result.ndim == 0 else result


def periodic_window_mean(values: np.ndarray, radius: int) -> np.ndarray:
    """Mean over the (2r+1)x(2r+1) window centred at each entry, wrapping at the borders."""
    return uniform_filter(np.asarray(values, dtype=float), size=2 * radius + 1, mode="wrap")


def psnr(reference: np.ndarray, estimate: np.ndarray) -> float:
    """PSNR in dB with peak 255; identical images give +inf."""
    reference = np.asarray(reference, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if reference.shape != estimate.shape:
        raise StructuralError(
            f"psnr needs equal shapes, got {reference.shape} and {estimate.shape}"
        )
    error_energy = float(np.sum((reference - estimate) ** 2))
    if error_energy == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK_GREY**2 * reference.size / error_energy)
