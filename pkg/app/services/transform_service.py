import logging
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from app.errors import ConfigurationError, StructuralError
from app.services.filterbank_service import (
    MIN_TPCTF_GRID,
    FilterBank2D,
    TapFilter,
    sampled_responses,
)
from app.utils.helpers import format_complex_row
from cache import NORM_CACHE

logger = logging.getLogger(__name__)

DECIMATED = "decimated"
UNDECIMATED = "undecimated"
ISOMETRIC = "isometric"
# Analysis scale per decimation step that makes the transform an isometry.
DECIMATION_GAIN = 2.0

_PARTNER_FACTOR = re.compile(r"^(a|b\d+)([pn])$")


@dataclass(frozen=True)
class TransformSpec:
    bank: FilterBank2D
    levels: int
    mode: str = DECIMATED
    normalization: str = ISOMETRIC

    def __post_init__(self):
        if self.levels < 1:
            raise ConfigurationError(f"levels must be >= 1, got {self.levels}")
        if self.mode not in (DECIMATED, UNDECIMATED):
            raise ConfigurationError(f"unknown transform mode {self.mode!r}")
        if self.normalization != ISOMETRIC:
            raise ConfigurationError("only isometric normalization is supported")
        if self.mode == UNDECIMATED and not self.bank.has_taps:
            raise ConfigurationError(
                f"undecimated transform needs a tap-defined bank, {self.bank.key} has none"
            )

    @property
    def decimated(self) -> bool:
        return self.mode == DECIMATED


@dataclass
class CoeffPyramid:
    """Detail bands per level (index 0 is level 1) plus the coarsest low-pass grid."""

    levels: int
    bands: list[dict[str, np.ndarray]]
    lowpass: np.ndarray
    bank_key: str
    mode: str
    image_shape: tuple[int, int]
    lowpass_name: str = "a-a"
    meta: dict = field(default_factory=dict)

    @property
    def band_names(self) -> tuple[str, ...]:
        return tuple(self.bands[0]) if self.bands else ()

    @property
    def decimated(self) -> bool:
        return self.mode == DECIMATED

    def band(self, level: int, name: str) -> np.ndarray:
        if not 1 <= level <= self.levels:
            raise StructuralError(f"level {level} outside 1..{self.levels}")
        try:
            return self.bands[level - 1][name]
        except KeyError:
            raise StructuralError(f"pyramid has no band {name!r}") from None

    def energy(self) -> float:
        total = float(np.sum(np.abs(self.lowpass) ** 2))
        for level_bands in self.bands:
            total += sum(float(np.sum(np.abs(c) ** 2)) for c in level_bands.values())
        return total

    def map_bands(self, transform: Callable[[int, str, np.ndarray], np.ndarray]) -> "CoeffPyramid":
        """New pyramid with every detail band replaced; the low-pass grid is copied."""
        bands = [
            {name: transform(level, name, coeffs) for name, coeffs in level_bands.items()}
            for level, level_bands in enumerate(self.bands, start=1)
        ]
        return self.replace(bands=bands, lowpass=self.lowpass.copy())

    def replace(self, **changes) -> "CoeffPyramid":
        values = {
            "levels": self.levels,
            "bands": self.bands,
            "lowpass": self.lowpass,
            "bank_key": self.bank_key,
            "mode": self.mode,
            "image_shape": self.image_shape,
            "lowpass_name": self.lowpass_name,
            "meta": dict(self.meta),
        }
        values.update(changes)
        return CoeffPyramid(**values)

    def copy(self) -> "CoeffPyramid":
        return self.map_bands(lambda level, name, coeffs: coeffs.copy())

    def zeros_like(self) -> "CoeffPyramid":
        zeroed = self.map_bands(lambda level, name, coeffs: np.zeros_like(coeffs))
        zeroed.lowpass = np.zeros_like(self.lowpass)
        return zeroed


def default_levels(size: int) -> int:
    """4 levels from 256 up, 3 below, reduced until the coarsest grid still holds 8 samples."""
    levels = 4 if size >= 256 else 3
    while levels > 1 and size < MIN_TPCTF_GRID * 2**levels:
        levels -= 1
    return levels


def _check_image(image: np.ndarray, spec: TransformSpec) -> None:
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ConfigurationError(f"expected a square image, got shape {image.shape}")
    size = image.shape[0]
    if spec.decimated:
        if size % 2**spec.levels:
            raise ConfigurationError(
                f"image side {size} is not divisible by 2^{spec.levels}"
            )
        if size < MIN_TPCTF_GRID * 2**spec.levels:
            raise ConfigurationError(
                f"image side {size} < 8 * 2^{spec.levels}; use fewer levels"
            )
        return
    widest = max(
        factor.support_width(2 ** (spec.levels - 1))
        for factor in spec.bank.factors
        if isinstance(factor, TapFilter)
    )
    if size < 4 or size % 2 or widest > size:
        raise ConfigurationError(
            f"image side {size} cannot hold dilated filters of width {widest}"
        )


def _fold(spectrum: np.ndarray) -> np.ndarray:
    half = spectrum.shape[0] // 2
    return spectrum.reshape(2, half, 2, half).sum(axis=(0, 2))


def _analyze(spectrum: np.ndarray, response: np.ndarray) -> np.ndarray:
    folded = _fold(spectrum * np.conj(response)) / 4.0
    return np.fft.ifft2(DECIMATION_GAIN * folded)


def _synthesize(coeffs: np.ndarray, response: np.ndarray) -> np.ndarray:
    return DECIMATION_GAIN * response * np.tile(np.fft.fft2(coeffs), (2, 2))


def forward(image: np.ndarray, spec: TransformSpec) -> CoeffPyramid:
    """Multilevel analysis; dispatches on spec.mode."""
    if not spec.decimated:
        return forward_undecimated(image, spec)
    current = np.asarray(image, dtype=float)
    _check_image(current, spec)
    bank = spec.bank
    bands: list[dict[str, np.ndarray]] = []
    for _ in range(spec.levels):
        responses = sampled_responses(bank, current.shape[0])
        spectrum = np.fft.fft2(current)
        bands.append(
            {
                name: _analyze(spectrum, response)
                for name, response in zip(bank.highpass_names, responses[1:])
            }
        )
        current = _analyze(spectrum, responses[0])
    return CoeffPyramid(
        levels=spec.levels,
        bands=bands,
        lowpass=current,
        bank_key=bank.key,
        mode=DECIMATED,
        image_shape=tuple(np.shape(image)),
        lowpass_name=bank.lowpass.name,
    )


def _check_pyramid(pyramid: CoeffPyramid, spec: TransformSpec) -> None:
    if pyramid.bank_key != spec.bank.key or pyramid.mode != spec.mode:
        raise StructuralError(
            f"pyramid built for {pyramid.bank_key}/{pyramid.mode}, "
            f"spec is {spec.bank.key}/{spec.mode}"
        )
    if pyramid.levels != spec.levels or len(pyramid.bands) != spec.levels:
        raise StructuralError(
            f"pyramid has {len(pyramid.bands)} levels, spec expects {spec.levels}"
        )
    expected_names = set(spec.bank.highpass_names)
    size = pyramid.image_shape[0]
    for level, level_bands in enumerate(pyramid.bands, start=1):
        if set(level_bands) != expected_names:
            raise StructuralError(f"level {level} band set does not match the bank")
        side = size // 2**level if spec.decimated else size
        for name, coeffs in level_bands.items():
            if coeffs.shape != (side, side):
                raise StructuralError(
                    f"band {name} at level {level} has shape {coeffs.shape}, expected {(side, side)}"
                )
    side = size // 2**spec.levels if spec.decimated else size
    if pyramid.lowpass.shape != (side, side):
        raise StructuralError(f"low-pass grid has shape {pyramid.lowpass.shape}")


def inverse(pyramid: CoeffPyramid, spec: TransformSpec, keep_complex: bool = False) -> np.ndarray:
    """Adjoint of forward; real part unless keep_complex."""
    if not spec.decimated:
        return inverse_undecimated(pyramid, spec)
    _check_pyramid(pyramid, spec)
    bank = spec.bank
    current = np.asarray(pyramid.lowpass, dtype=complex)
    for level in range(spec.levels, 0, -1):
        size = current.shape[0] * 2
        responses = sampled_responses(bank, size)
        spectrum = _synthesize(current, responses[0])
        level_bands = pyramid.bands[level - 1]
        for name, response in zip(bank.highpass_names, responses[1:]):
            spectrum = spectrum + _synthesize(level_bands[name], response)
        current = np.fft.ifft2(spectrum)
    if keep_complex:
        return current
    residue = float(np.max(np.abs(current.imag))) if current.size else 0.0
    if residue > 1e-6 * max(1.0, float(np.max(np.abs(current.real)))):
        logger.debug("[inverse] discarding imaginary residue %.3e", residue)
    return current.real


def forward_undecimated(image: np.ndarray, spec: TransformSpec) -> CoeffPyramid:
    """Stationary transform: level j filters at 2^(j-1) xi, full-size real bands."""
    if not spec.bank.has_taps:
        raise ConfigurationError(f"bank {spec.bank.key} lacks taps for the undecimated transform")
    current = np.asarray(image, dtype=float)
    _check_image(current, spec if spec.mode == UNDECIMATED else _as_undecimated(spec))
    bank = spec.bank
    size = current.shape[0]
    bands: list[dict[str, np.ndarray]] = []
    for level in range(1, spec.levels + 1):
        responses = sampled_responses(bank, size, 2 ** (level - 1))
        spectrum = np.fft.fft2(current)
        bands.append(
            {
                name: np.fft.ifft2(spectrum * np.conj(response)).real
                for name, response in zip(bank.highpass_names, responses[1:])
            }
        )
        current = np.fft.ifft2(spectrum * np.conj(responses[0])).real
    return CoeffPyramid(
        levels=spec.levels,
        bands=bands,
        lowpass=current,
        bank_key=bank.key,
        mode=UNDECIMATED,
        image_shape=tuple(np.shape(image)),
        lowpass_name=bank.lowpass.name,
    )


def inverse_undecimated(pyramid: CoeffPyramid, spec: TransformSpec) -> np.ndarray:
    if not spec.bank.has_taps:
        raise ConfigurationError(f"bank {spec.bank.key} lacks taps for the undecimated transform")
    checked = spec if spec.mode == UNDECIMATED else _as_undecimated(spec)
    _check_pyramid(pyramid, checked)
    bank = spec.bank
    size = pyramid.image_shape[0]
    current = np.asarray(pyramid.lowpass, dtype=float)
    for level in range(spec.levels, 0, -1):
        responses = sampled_responses(bank, size, 2 ** (level - 1))
        spectrum = responses[0] * np.fft.fft2(current)
        level_bands = pyramid.bands[level - 1]
        for name, response in zip(bank.highpass_names, responses[1:]):
            spectrum = spectrum + response * np.fft.fft2(level_bands[name])
        current = np.fft.ifft2(spectrum).real
    return current


def _as_undecimated(spec: TransformSpec) -> TransformSpec:
    return TransformSpec(spec.bank, spec.levels, UNDECIMATED)


def _effective_response(spec: TransformSpec, size: int, level: int, name: str) -> np.ndarray:
    """Spectrum on the size x size grid of the frame element behind one coefficient of (level, band)."""
    bank = spec.bank
    index = bank.names.index(name)
    if spec.decimated:
        side = size // 2 ** (level - 1)
        rows = np.arange(size) % side
        effective = (DECIMATION_GAIN**level) * sampled_responses(bank, side)[index][np.ix_(rows, rows)]
        for coarser in range(1, level):
            side = size // 2 ** (coarser - 1)
            rows = np.arange(size) % side
            effective = effective * sampled_responses(bank, side)[0][np.ix_(rows, rows)]
        return effective
    effective = sampled_responses(bank, size, 2 ** (level - 1))[index].copy()
    for coarser in range(1, level):
        effective = effective * sampled_responses(bank, size, 2 ** (coarser - 1))[0]
    return effective


def filter_l2_norm(spec: TransformSpec, level: int, band: str, size: int) -> float:
    """l2 norm of the frame element of one coefficient in (level, band) for a size x size image.

    The low-pass name is accepted at the coarsest level.
    """
    if not 1 <= level <= spec.levels:
        raise StructuralError(f"level {level} outside 1..{spec.levels}")
    if band not in spec.bank.names:
        raise StructuralError(f"unknown band {band!r} for bank {spec.bank.key}")
    if band == spec.bank.lowpass.name and level != spec.levels:
        raise StructuralError("the low-pass band only exists at the coarsest level")
    key = (spec.bank.key, spec.mode, size, level, band)

    def compute() -> float:
        effective = _effective_response(spec, size, level, band)
        return float(np.sqrt(np.mean(np.abs(effective) ** 2)))

    return NORM_CACHE.get_or_create(key, compute)


def band_norms(spec: TransformSpec, size: int, mode: str = "level") -> dict[tuple[int, str], float]:
    """Filter norms ||b||_2 per (level, band), the scale that maps a threshold lambda to sigma_n.

    Decimated pyramids apply one analysis gain on top of the filter that produces
    a band from the previous low-pass, so the frame element norm is divided by
    DECIMATION_GAIN; at level 1 this is exactly the tensor filter norm.
    Mode "first-level" reuses the level-1 value at every level.
    """
    if mode not in ("level", "first-level"):
        raise ConfigurationError(f"unknown filter norm mode {mode!r}")
    gain = DECIMATION_GAIN if spec.decimated else 1.0
    norms: dict[tuple[int, str], float] = {}
    for level in range(1, spec.levels + 1):
        source_level = 1 if mode == "first-level" else level
        for name in spec.bank.highpass_names:
            norms[(level, name)] = filter_l2_norm(spec, source_level, name, size) / gain
    norms[(spec.levels, spec.bank.lowpass.name)] = (
        filter_l2_norm(spec, spec.levels, spec.bank.lowpass.name, size) / gain
    )
    return norms


def conjugate_partner(name: str) -> str:
    """Band whose filter is F(-xi): p and n factors swap, real factors stay."""
    factors = []
    for factor in name.split("-"):
        match = _PARTNER_FACTOR.match(factor)
        if match:
            flipped = "n" if match.group(2) == "p" else "p"
            factors.append(match.group(1) + flipped)
        else:
            factors.append(factor)
    return "-".join(factors)


def real_degrees_of_freedom(pyramid: CoeffPyramid) -> int:
    """Real numbers needed to store the pyramid of a real image once conjugate partners are shared."""
    if not pyramid.decimated:
        return sum(c.size for level_bands in pyramid.bands for c in level_bands.values()) + pyramid.lowpass.size
    total = pyramid.lowpass.size
    for level_bands in pyramid.bands:
        seen: set[str] = set()
        for name, coeffs in level_bands.items():
            if name in seen:
                continue
            partner = conjugate_partner(name)
            if partner == name or partner not in level_bands:
                total += coeffs.size
            else:
                total += 2 * coeffs.size
                seen.add(partner)
            seen.add(name)
    return total


def _is_real_band(name: str, mode: str) -> bool:
    return mode == UNDECIMATED or conjugate_partner(name) == name


def pyramid_to_vector(pyramid: CoeffPyramid) -> np.ndarray:
    """Real coefficient vector in frame_matrix column order (real bands keep their real part only)."""
    parts = [np.asarray(pyramid.lowpass).real.ravel()]
    for level_bands in pyramid.bands:
        for name, coeffs in level_bands.items():
            parts.append(np.real(coeffs).ravel())
            if not _is_real_band(name, pyramid.mode):
                parts.append(np.imag(coeffs).ravel())
    return np.concatenate(parts)


def vector_to_pyramid(vector: np.ndarray, template: CoeffPyramid) -> CoeffPyramid:
    vector = np.asarray(vector, dtype=float)
    offset = 0

    def take(shape: tuple[int, ...]) -> np.ndarray:
        nonlocal offset
        count = int(np.prod(shape))
        if offset + count > vector.size:
            raise StructuralError("coefficient vector is shorter than the pyramid layout")
        chunk = vector[offset : offset + count].reshape(shape)
        offset += count
        return chunk

    lowpass = take(template.lowpass.shape).astype(template.lowpass.dtype)
    bands = []
    for level_bands in template.bands:
        rebuilt = {}
        for name, coeffs in level_bands.items():
            real_part = take(coeffs.shape)
            if _is_real_band(name, template.mode):
                rebuilt[name] = real_part.astype(coeffs.dtype)
            else:
                rebuilt[name] = real_part + 1j * take(coeffs.shape)
        bands.append(rebuilt)
    if offset != vector.size:
        raise StructuralError("coefficient vector is longer than the pyramid layout")
    return template.replace(bands=bands, lowpass=lowpass)


def frame_matrix(spec: TransformSpec, size: int) -> np.ndarray:
    """Real synthesis matrix D (size^2 x n) assembled from analysis impulse responses, so D D^T = I."""
    pixels = size * size
    columns = []
    for pixel in range(pixels):
        impulse = np.zeros(pixels)
        impulse[pixel] = 1.0
        columns.append(pyramid_to_vector(forward(impulse.reshape(size, size), spec)))
    return np.array(columns)


def dump_pyramid(pyramid: CoeffPyramid) -> str:
    size = pyramid.image_shape[0]
    lines = [f"pyramid N={size} levels={pyramid.levels} bank={pyramid.bank_key} mode={pyramid.mode}"]
    for level, level_bands in enumerate(pyramid.bands, start=1):
        for name, coeffs in level_bands.items():
            lines.append(f"band {level} {name} {coeffs.shape[0]}x{coeffs.shape[1]}")
            for row in np.asarray(coeffs, dtype=complex):
                lines.append(format_complex_row(row))
    lowpass = np.asarray(pyramid.lowpass, dtype=complex)
    lines.append(f"band {pyramid.levels} {pyramid.lowpass_name} {lowpass.shape[0]}x{lowpass.shape[1]}")
    for row in lowpass:
        lines.append(format_complex_row(row))
    return "\n".join(lines) + "\n"
