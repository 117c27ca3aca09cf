import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.config import active_config
from app.errors import ConfigurationError, StructuralError
from app.services.transform_service import CoeffPyramid, TransformSpec, band_norms
from app.utils.calculations import periodic_window_mean

SQRT3 = math.sqrt(3.0)
SQRT2 = math.sqrt(2.0)
LOCAL_SOFT_NOISE_DIVISOR = 7.0
LOCAL_SOFT_SIGMA_FLOOR = 1e-3


def _finish(result: np.ndarray, original):
    return result.item() if np.ndim(original) == 0 and np.ndim(result) == 0 else result


def soft(c, lam):
    """c - lam * c/|c| where |c| > lam, else 0."""
    values = np.asarray(c, dtype=complex)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ConfigurationError("threshold must be nonnegative")
    magnitude = np.abs(values)
    keep = magnitude > lam
    safe = np.where(keep, magnitude, 1.0)
    result = np.where(keep, values - lam * values / safe, 0.0 + 0.0j)
    return _finish(result, c)


def hard(c, lam):
    values = np.asarray(c, dtype=complex)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ConfigurationError("threshold must be nonnegative")
    result = np.where(np.abs(values) > lam, values, 0.0 + 0.0j)
    return _finish(result, c)


@dataclass
class ShrinkContext:
    lam: float
    norms: dict[tuple[int, str], float]
    levels: int
    decimated: bool = True
    window_radius: int = 3

    def __post_init__(self):
        if self.window_radius < 1:
            raise ConfigurationError(f"window radius must be >= 1, got {self.window_radius}")
        if self.lam < 0:
            raise ConfigurationError(f"threshold must be nonnegative, got {self.lam}")

    def noise_level(self, level: int, band: str) -> float:
        try:
            return self.lam * self.norms[(level, band)]
        except KeyError:
            raise StructuralError(f"no filter norm for band {band!r} at level {level}") from None

    def with_lambda(self, lam: float) -> "ShrinkContext":
        return ShrinkContext(lam, self.norms, self.levels, self.decimated, self.window_radius)


def make_shrink_context(
    spec: TransformSpec,
    size: int,
    lam: float,
    window_radius: Optional[int] = None,
    norm_mode: Optional[str] = None,
) -> ShrinkContext:
    config = active_config()
    return ShrinkContext(
        lam=lam,
        norms=band_norms(spec, size, norm_mode or config.FILTER_NORM_MODE),
        levels=spec.levels,
        decimated=spec.decimated,
        window_radius=config.BIVARIATE_WINDOW_RADIUS if window_radius is None else window_radius,
    )


def parent_of(ctx: ShrinkContext, level: int, band: str, i: int, j: int) -> Optional[tuple[int, str, int, int]]:
    """(level+1, band, i//2, j//2) for decimated pyramids, same indices when undecimated; None at the coarsest level."""
    if not 1 <= level <= ctx.levels:
        raise StructuralError(f"level {level} outside 1..{ctx.levels}")
    if (level, band) not in ctx.norms:
        raise StructuralError(f"unknown band {band!r}")
    if level == ctx.levels:
        return None
    if ctx.decimated:
        return (level + 1, band, i // 2, j // 2)
    return (level + 1, band, i, j)


def _parent_grid(pyramid: CoeffPyramid, level: int, band: str) -> np.ndarray:
    coeffs = pyramid.band(level, band)
    if level == pyramid.levels:
        return np.zeros_like(coeffs)
    parent = pyramid.band(level + 1, band)
    if pyramid.decimated:
        return np.repeat(np.repeat(parent, 2, axis=0), 2, axis=1)
    return parent


def bivariate_threshold(c, c_parent, sigma_n, local_energy):
    """Elementwise bivariate rule; local_energy is the window mean of |c|^2."""
    c = np.asarray(c, dtype=complex)
    c_parent = np.asarray(c_parent, dtype=complex)
    sigma_n = np.asarray(sigma_n, dtype=float)
    sigma_c = np.sqrt(np.maximum(np.asarray(local_energy, dtype=float) - sigma_n**2, 0.0))
    magnitude = np.abs(c)
    active = (sigma_c > 0) & (magnitude > 0)
    joint = np.sqrt(magnitude**2 + np.abs(c_parent) ** 2)
    denominator = np.where(active, sigma_c * joint, 1.0)
    lam_c = np.where(active, SQRT3 * sigma_n**2 * magnitude / denominator, 0.0)
    result = np.where(active, soft(c, lam_c), 0.0 + 0.0j)
    return result.item() if result.ndim == 0 else result


def bivariate_shrink(pyramid: CoeffPyramid, ctx: ShrinkContext) -> CoeffPyramid:
    """Shrink every detail coefficient; statistics come from the input pyramid only."""
    if pyramid.levels != ctx.levels:
        raise StructuralError(f"pyramid has {pyramid.levels} levels, context {ctx.levels}")

    def shrink(level: int, band: str, coeffs: np.ndarray) -> np.ndarray:
        local_energy = periodic_window_mean(np.abs(coeffs) ** 2, ctx.window_radius)
        shrunk = bivariate_threshold(
            coeffs,
            _parent_grid(pyramid, level, band),
            ctx.noise_level(level, band),
            local_energy,
        )
        return shrunk if np.iscomplexobj(coeffs) else np.real(shrunk)

    return pyramid.map_bands(shrink)


def local_soft_shrink(pyramid: CoeffPyramid, sigma: float, ctx: ShrinkContext) -> CoeffPyramid:
    """Soft threshold sqrt(2) sigma_n^2 / sigma_c with sigma_n = sigma/7 and a floored local sigma_c."""
    if sigma < 0:
        raise ConfigurationError(f"sigma must be nonnegative, got {sigma}")
    sigma_n = sigma / LOCAL_SOFT_NOISE_DIVISOR

    def shrink(level: int, band: str, coeffs: np.ndarray) -> np.ndarray:
        local_mean = periodic_window_mean(SQRT2 * np.abs(coeffs), ctx.window_radius)
        sigma_c = np.maximum(
            np.sqrt(np.maximum(local_mean**2 - sigma_n**2, 0.0)), LOCAL_SOFT_SIGMA_FLOOR
        )
        shrunk = soft(coeffs, SQRT2 * sigma_n**2 / sigma_c)
        return shrunk if np.iscomplexobj(coeffs) else shrunk.real

    return pyramid.map_bands(shrink)


def threshold_pyramid(
    pyramid: CoeffPyramid,
    thresholds: dict[tuple[int, str], float],
    rule: str,
    threshold_lowpass: bool = False,
) -> CoeffPyramid:
    """Soft or hard thresholding with one threshold per (level, band)."""
    if rule not in ("soft", "hard"):
        raise ConfigurationError(f"rule must be soft or hard, got {rule!r}")
    apply = soft if rule == "soft" else hard

    def shrink(level: int, band: str, coeffs: np.ndarray) -> np.ndarray:
        try:
            lam = thresholds[(level, band)]
        except KeyError:
            raise StructuralError(f"no threshold for band {band!r} at level {level}") from None
        shrunk = apply(coeffs, lam)
        return shrunk if np.iscomplexobj(coeffs) else shrunk.real

    result = pyramid.map_bands(shrink)
    if threshold_lowpass:
        lam = thresholds[(pyramid.levels, pyramid.lowpass_name)]
        shrunk = apply(pyramid.lowpass, lam)
        result.lowpass = shrunk if np.iscomplexobj(pyramid.lowpass) else shrunk.real
    return result
