import math
from typing import Iterable

import numpy as np

def frequency_grid(n: int) -> np.ndarray:
    """xi_k = 2*pi*k/n for k = 0..n-1, shifted into (-pi, pi]."""
    k = np.arange(n)
    xi = 2.0 * np.pi * k / n
    return np.where(k <= n // 2, xi, xi - 2.0 * np.pi)

def fold_angle_degrees(angle: float) -> float:
    """Map an orientation angle into (-90, 90]."""
    folded = math.fmod(angle, 180.0)
    if folded <= -90.0:
        folded += 180.0
    elif folded > 90.0:
        folded -= 180.0
    return folded

def format_real(value: float) -> str:
    return repr(float(value))

def format_complex_row(values: Iterable[complex]) -> str:
    return " ".join(f"{v.real!r}{v.imag:+.17g}j" for v in values)

def format_psnr(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.4f}"
