import math
from typing import Callable

import numpy as np

from app.errors import ConfigurationError

# Small synthetic greymaps shipped with the repo; standard test images are user supplied.

FIXTURE_PREFIX = "fixture:"


def gradient(size: int = 64) -> np.ndarray:
    ramp = np.arange(size, dtype=float) / max(size - 1, 1)
    return 255.0 * (ramp[:, None] + ramp[None, :]) / 2.0


def checkerboard(size: int = 64, cell: int = 8) -> np.ndarray:
    index = np.arange(size) // cell
    return np.where((index[:, None] + index[None, :]) % 2 == 0, 200.0, 56.0)


def sinusoid_texture(size: int = 64, period: float = 9.0, angle_degrees: float = 30.0) -> np.ndarray:
    theta = math.radians(angle_degrees)
    rows, cols = np.mgrid[0:size, 0:size].astype(float)
    phase = 2.0 * math.pi * (cols * math.cos(theta) + rows * math.sin(theta)) / period
    return 128.0 + 80.0 * np.sin(phase)


def piecewise_blocks(size: int = 64) -> np.ndarray:
    image = np.full((size, size), 100.0)
    quarter = size // 4
    image[quarter : 2 * quarter, quarter : 3 * quarter] = 180.0
    image[2 * quarter + quarter // 2 :, : 2 * quarter] = 40.0
    image[: quarter // 2 + 1, 3 * quarter :] = 230.0
    return image


FIXTURES: dict[str, Callable[..., np.ndarray]] = {
    "gradient": gradient,
    "checkerboard": checkerboard,
    "sinusoid": sinusoid_texture,
    "blocks": piecewise_blocks,
}


def is_fixture(source: str) -> bool:
    return source.startswith(FIXTURE_PREFIX)


def load_fixture(source: str, size: int = 64) -> np.ndarray:
    """Resolve "fixture:<name>" to an image of side `size`."""
    name = source[len(FIXTURE_PREFIX) :] if is_fixture(source) else source
    try:
        builder = FIXTURES[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown fixture {name!r}; choose one of {', '.join(sorted(FIXTURES))}"
        ) from None
    return builder(size)
