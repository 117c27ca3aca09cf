import asyncio
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from app.clients import pgm_client
from app.data import fixtures
from app.errors import ConfigurationError, DegenerateMaskError, StructuralError
from app.services import filterbank_service, inpaint_service, transform_service
from app.services.inpaint_service import InpaintConfig, InpaintResult, Mask
from app.services.transform_service import UNDECIMATED, TransformSpec
from app.utils.calculations import psnr
from app.utils.helpers import format_psnr

logger = logging.getLogger(__name__)

MASK_STREAM = 0
NOISE_STREAM = 1
SEED_LIMIT = 2**64
UNIT_53 = 2.0**-53
DCT_BASELINE_SIZE = 7

Algorithm = Literal["tpctf6", "spline", "dct"]
PathLike = Union[str, Path]


def _bit_generator(seed: int, stream: int) -> np.random.Philox:
    """Philox-4x64-10 keyed by seed in the low word and stream in the high word, counter at 0."""
    if not 0 <= seed < SEED_LIMIT:
        raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Philox(key=seed + (stream << 64))


def raw_stream(seed: int, stream: int, count: int) -> np.ndarray:
    return _bit_generator(seed, stream).random_raw(count)


def gen_random_mask(width: int, height: int, rate: float, seed: int) -> Mask:
    """Pixel p is missing when the p-th raw output is below floor(rate * 2^64)."""
    if not 0 < rate < 1:
        raise ConfigurationError(f"missing rate must lie in (0, 1), got {rate}")
    if width < 1 or height < 1:
        raise ConfigurationError(f"mask size {width}x{height} is empty")
    threshold = np.uint64(int(rate * 2**64))
    missing = raw_stream(seed, MASK_STREAM, width * height).reshape(height, width) < threshold
    if missing.all():
        raise DegenerateMaskError(seed)
    return Mask(~missing)


def standard_normals(seed: int, count: int) -> np.ndarray:
    """Box-Muller pairs from 53-bit uniforms; output 2k is the cosine branch, 2k+1 the sine branch."""
    pairs = (count + 1) // 2
    raw = raw_stream(seed, NOISE_STREAM, 2 * pairs)
    uniforms = (raw >> np.uint64(11)).astype(float) * UNIT_53
    u1, u2 = uniforms[0::2], uniforms[1::2]
    radius = np.sqrt(-2.0 * np.log1p(-u1))
    angle = 2.0 * math.pi * u2
    normals = np.empty(2 * pairs)
    normals[0::2] = radius * np.cos(angle)
    normals[1::2] = radius * np.sin(angle)
    return normals[:count]


def add_gaussian_noise(image, sigma: float, seed: int) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if sigma < 0:
        raise ConfigurationError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return image.copy()
    return image + sigma * standard_normals(seed, image.size).reshape(image.shape)


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    image: str
    mask: Optional[str] = None
    rate: Optional[float] = None
    sigma: float = 0.0
    seed: int = 0
    algorithm: Algorithm = "tpctf6"
    levels: Optional[int] = None
    paste_observed: Optional[bool] = None
    fixture_size: int = 64
    output: Optional[str] = None
    mask_output: Optional[str] = None

    @model_validator(mode="after")
    def _check(self) -> "ExperimentSpec":
        if (self.mask is None) == (self.rate is None):
            raise ConfigurationError("give exactly one mask source: a mask file or a random rate")
        if self.rate is not None and not 0 < self.rate < 1:
            raise ConfigurationError(f"missing rate must lie in (0, 1), got {self.rate}")
        if self.sigma < 0:
            raise ConfigurationError(f"sigma must be nonnegative, got {self.sigma}")
        if not 0 <= self.seed < SEED_LIMIT:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        return self

    @property
    def mask_label(self) -> str:
        return self.mask if self.mask is not None else f"random:{self.rate:g}"


@dataclass
class ExperimentReport:
    image: str
    mask: str
    sigma: float
    seed: int
    algorithm: str
    psnr: float
    iterations: int
    seconds: float
    converged: bool
    baseline_psnr: float
    output: np.ndarray


def format_report_line(report: ExperimentReport, include_timing: bool = True) -> str:
    """image, mask, sigma, seed, algorithm, PSNR, iterations, seconds; tab separated."""
    fields = [
        report.image,
        report.mask,
        f"{report.sigma:g}",
        str(report.seed),
        report.algorithm,
        format_psnr(report.psnr),
        str(report.iterations),
        f"{report.seconds:.3f}" if include_timing else "-",
    ]
    return "\t".join(fields)


def load_image(source: str, fixture_size: int = 64) -> np.ndarray:
    if fixtures.is_fixture(source):
        return fixtures.load_fixture(source, fixture_size)
    return pgm_client.load_pgm(source)


def _baseline_spec(algorithm: str, size: int, levels: Optional[int]) -> tuple[TransformSpec, str]:
    if algorithm == "spline":
        bank = filterbank_service.resolve_bank("spline-cubic")
        return TransformSpec(bank, levels or transform_service.default_levels(size), UNDECIMATED), "soft"
    bank = filterbank_service.resolve_bank(f"dct{DCT_BASELINE_SIZE}")
    return TransformSpec(bank, levels or 1, UNDECIMATED), "local_soft"


def run_algorithm(
    algorithm: str,
    y: np.ndarray,
    mask: Mask,
    sigma: float,
    levels: Optional[int] = None,
    paste_observed: Optional[bool] = None,
) -> InpaintResult:
    if algorithm == "tpctf6":
        config = InpaintConfig(sigma=sigma, levels=levels, paste_observed=paste_observed)
        return inpaint_service.inpaint(y, mask, config)
    if algorithm not in ("spline", "dct"):
        raise ConfigurationError(f"unknown algorithm {algorithm!r}; choose tpctf6, spline or dct")
    spec, rule = _baseline_spec(algorithm, y.shape[0], levels)
    schedule = inpaint_service.make_schedule(sigma, mask.missing_ratio)
    return inpaint_service.iterative_inpaint_generic(y, mask, spec, rule, schedule)


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Mask and noise the clean image, inpaint it, and score the clamped output against the clean image."""
    started = time.perf_counter()
    clean = load_image(spec.image, spec.fixture_size)
    height, width = clean.shape
    if spec.mask is not None:
        mask = pgm_client.load_mask(spec.mask)
        if mask.shape != clean.shape:
            raise StructuralError(f"mask shape {mask.shape} does not match image shape {clean.shape}")
    else:
        mask = gen_random_mask(width, height, spec.rate, spec.seed)
    if spec.mask_output:
        pgm_client.save_mask(mask, spec.mask_output)

    noisy = add_gaussian_noise(clean, spec.sigma, spec.seed)
    y = np.where(mask.observed, noisy, 0.0)
    result = run_algorithm(spec.algorithm, y, mask, spec.sigma, spec.levels, spec.paste_observed)
    output = np.clip(result.image, 0.0, 255.0)
    if spec.output:
        pgm_client.save_pgm(output, spec.output)

    report = ExperimentReport(
        image=spec.image,
        mask=spec.mask_label,
        sigma=spec.sigma,
        seed=spec.seed,
        algorithm=spec.algorithm,
        psnr=psnr(clean, output),
        iterations=result.iterations,
        seconds=time.perf_counter() - started,
        converged=result.converged,
        baseline_psnr=psnr(clean, np.clip(y, 0.0, 255.0)),
        output=output,
    )
    logger.info("[run_experiment] %s", format_report_line(report))
    return report


async def run_batch(
    specs: Sequence[ExperimentSpec],
    report_path: Optional[PathLike] = None,
    include_timing: bool = True,
) -> list[ExperimentReport]:
    """Run experiments concurrently in worker threads; report lines are appended one at a time."""
    write_lock = asyncio.Lock()

    async def run_one(spec: ExperimentSpec) -> ExperimentReport:
        report = await asyncio.to_thread(run_experiment, spec)
        if report_path is not None:
            async with write_lock:
                with open(report_path, "a", encoding="utf-8") as handle:
                    handle.write(format_report_line(report, include_timing) + "\n")
        return report

    return list(await asyncio.gather(*(run_one(spec) for spec in specs)))


@dataclass(frozen=True)
class RoundtripCheck:
    size: int
    levels: int
    sup_error: float
    scale: float
    energy_ratio: float

    def passed(self, tolerance: float) -> bool:
        return self.sup_error <= tolerance * self.scale and abs(self.energy_ratio - 1.0) <= tolerance


def _random_geometry(rng: np.random.Generator, min_size: int = 32, max_size: int = 128) -> tuple[int, int]:
    levels = int(rng.integers(1, 5))
    step = 2**levels
    smallest = max(min_size, filterbank_service.MIN_TPCTF_GRID * step)
    size = int(rng.choice(np.arange(smallest, max_size + 1, step)))
    return size, levels


def verify_transforms(bank: filterbank_service.FilterBank2D, seed: int, count: int) -> list[RoundtripCheck]:
    """Forward then inverse on random images of random valid (size, levels)."""
    rng = np.random.default_rng(seed)
    checks = []
    for _ in range(count):
        size, levels = _random_geometry(rng)
        image = rng.uniform(0.0, 255.0, (size, size))
        spec = TransformSpec(bank, levels)
        pyramid = transform_service.forward(image, spec)
        restored = transform_service.inverse(pyramid, spec)
        checks.append(
            RoundtripCheck(
                size=size,
                levels=levels,
                sup_error=float(np.max(np.abs(restored - image))),
                scale=float(np.max(np.abs(image))),
                energy_ratio=pyramid.energy() / float(np.sum(image**2)),
            )
        )
    return checks
