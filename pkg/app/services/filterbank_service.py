import logging
import math
import re
from dataclasses import dataclass
from itertools import product
from typing import Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from app.config import active_config
from app.data.filter_taps import (
    DCT_START,
    DEFAULT_DCT_SIZE,
    SPLINE_TAPS,
    TPCTF6_PARAMS,
    dct_taps,
)
from app.errors import ConfigurationError, StructuralError
from app.utils.calculations import eval_pm
from app.utils.helpers import fold_angle_degrees, format_real, frequency_grid
from cache import BANK_CACHE

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
EDGE_TOLERANCE = 1e-12
MIN_TPCTF_GRID = 8


class BumpSpec(BaseModel):
    """Smooth indicator of [cL, cR] with transition half-widths epsL and epsR."""

    model_config = ConfigDict(frozen=True)

    cL: float
    cR: float
    epsL: float
    epsR: float
    m: int = 4

    @model_validator(mode="after")
    def _check_edges(self) -> "BumpSpec":
        if self.m < 1:
            raise ConfigurationError(f"bump order m must be >= 1, got {self.m}")
        if self.epsL <= 0 or self.epsR <= 0:
            raise ConfigurationError(
                f"epsL > 0 and epsR > 0 violated: epsL={self.epsL}, epsR={self.epsR}"
            )
        if self.epsL + self.epsR > self.cR - self.cL + EDGE_TOLERANCE:
            raise ConfigurationError(
                "epsL + epsR <= cR - cL violated: "
                f"{self.epsL} + {self.epsR} > {self.cR} - {self.cL}"
            )
        if (self.cR + self.epsR) - (self.cL - self.epsL) > TWO_PI + EDGE_TOLERANCE:
            raise ConfigurationError("bump support is longer than one period")
        return self

    def reflected(self) -> "BumpSpec":
        """Bump of xi -> -xi."""
        return BumpSpec(cL=-self.cR, cR=-self.cL, epsL=self.epsR, epsR=self.epsL, m=self.m)


def eval_bump(spec: BumpSpec, xi):
    """Evaluate the bump 2*pi-periodically; scalars in, scalar out."""
    xi_array = np.asarray(xi, dtype=float)
    shape = xi_array.shape
    start = spec.cL - spec.epsL
    t = start + np.mod(np.atleast_1d(xi_array).ravel() - start, TWO_PI)

    values = np.zeros_like(t)
    rising = t < spec.cL + spec.epsL
    values[rising] = np.sin(
        0.5 * np.pi * eval_pm(spec.m, (spec.cL + spec.epsL - t[rising]) / (2.0 * spec.epsL))
    )
    plateau = ~rising & (t <= spec.cR - spec.epsR)
    values[plateau] = 1.0
    falling = (t > spec.cR - spec.epsR) & (t < spec.cR + spec.epsR)
    values[falling] = np.sin(
        0.5 * np.pi * eval_pm(spec.m, (t[falling] - spec.cR + spec.epsR) / (2.0 * spec.epsR))
    )

    if xi_array.ndim == 0:
        return float(values[0])
    return values.reshape(shape)


@dataclass(frozen=True)
class BumpFilter:
    name: str
    pieces: tuple[BumpSpec, ...]
    centre: float

    def response(self, xi, dilation: int = 1) -> np.ndarray:
        scaled = dilation * np.asarray(xi, dtype=float)
        total = np.zeros(np.shape(scaled), dtype=float)
        for piece in self.pieces:
            total = total + eval_bump(piece, scaled)
        return total.astype(complex)

    def describe(self) -> list[str]:
        lines = [f"filter {self.name} bump centre={format_real(self.centre)}"]
        for piece in self.pieces:
            lines.append(
                f"  piece [{format_real(piece.cL)}, {format_real(piece.cR)}] "
                f"eps=({format_real(piece.epsL)}, {format_real(piece.epsR)}) "
                f"edge=sin-pm m={piece.m}"
            )
        return lines


@dataclass(frozen=True)
class TapFilter:
    name: str
    taps: tuple[float, ...]
    start: int
    centre: float = 0.0

    def response(self, xi, dilation: int = 1) -> np.ndarray:
        positions = self.start + np.arange(len(self.taps))
        phases = np.exp(-1j * dilation * np.multiply.outer(np.asarray(xi, dtype=float), positions))
        return phases @ np.asarray(self.taps, dtype=float)

    def support_width(self, dilation: int = 1) -> int:
        return (len(self.taps) - 1) * dilation + 1

    def describe(self) -> list[str]:
        values = " ".join(format_real(tap) for tap in self.taps)
        return [f"filter {self.name} taps start={self.start}", f"  values {values}"]


FrequencyFilter = Union[BumpFilter, TapFilter]


@dataclass(frozen=True)
class Filter2D:
    row: FrequencyFilter
    col: FrequencyFilter
    orientation: Optional[float] = None

    @property
    def name(self) -> str:
        return f"{self.row.name}-{self.col.name}"

    def response(self, xi_rows, xi_cols, dilation: int = 1) -> np.ndarray:
        return np.multiply.outer(
            self.row.response(xi_rows, dilation), self.col.response(xi_cols, dilation)
        )


@dataclass(frozen=True)
class CtfBank1D:
    s: int
    c1: float
    eps0: float
    eps1: float
    eps_high: float
    eps_pi: float
    m: int
    lowpass: BumpFilter
    complex_lowpass: tuple[BumpFilter, BumpFilter]
    highpass: tuple[BumpFilter, ...]

    @property
    def filters(self) -> tuple[BumpFilter, ...]:
        return (self.lowpass, *self.complex_lowpass, *self.highpass)

    @property
    def band_edges(self) -> list[float]:
        width = (math.pi - self.c1) / self.s
        return [self.c1 + width * index for index in range(self.s)] + [math.pi]

    def filter(self, name: str) -> BumpFilter:
        for candidate in self.filters:
            if candidate.name == name:
                return candidate
        raise StructuralError(f"unknown 1D filter {name!r}")


@dataclass(frozen=True)
class FilterBank2D:
    lowpass: Filter2D
    highpass: tuple[Filter2D, ...]
    provenance: str
    key: str
    factors: tuple[FrequencyFilter, ...]

    @property
    def filters(self) -> tuple[Filter2D, ...]:
        return (self.lowpass, *self.highpass)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.filters)

    @property
    def highpass_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.highpass)

    @property
    def has_taps(self) -> bool:
        return all(isinstance(factor, TapFilter) for factor in self.factors)

    def filter(self, name: str) -> Filter2D:
        for candidate in self.filters:
            if candidate.name == name:
                return candidate
        raise StructuralError(f"bank {self.key} has no filter {name!r}")


@dataclass(frozen=True)
class SampledBank:
    size: int
    level: int
    names: tuple[str, ...]
    responses: np.ndarray
    key: str

    @property
    def ndim(self) -> int:
        return self.responses.ndim - 1

    @property
    def lowpass(self) -> np.ndarray:
        return self.responses[0]

    @property
    def highpass(self) -> np.ndarray:
        return self.responses[1:]

    def response(self, name: str) -> np.ndarray:
        try:
            return self.responses[self.names.index(name)]
        except ValueError:
            raise StructuralError(f"sampled bank {self.key} has no filter {name!r}") from None

    def without(self, name: str) -> "SampledBank":
        index = self.names.index(name)
        kept = np.delete(self.responses, index, axis=0)
        kept.setflags(write=False)
        names = self.names[:index] + self.names[index + 1 :]
        return SampledBank(self.size, self.level, names, kept, f"{self.key}-{name}")


@dataclass(frozen=True)
class BankIdentityReport:
    size: int
    ndim: int
    deviations: dict[str, float]

    @property
    def partition_of_unity(self) -> float:
        return self.deviations["partition_of_unity"]

    @property
    def shift_orthogonality(self) -> float:
        shifts = [value for key, value in self.deviations.items() if key != "partition_of_unity"]
        return max(shifts)

    @property
    def max_deviation(self) -> float:
        return max(self.deviations.values())

    def passed(self, tolerance: float = 1e-12) -> bool:
        return self.max_deviation <= tolerance


def _orientation(row: FrequencyFilter, col: FrequencyFilter) -> float:
    angle = math.degrees(math.atan2(row.centre, col.centre))
    return round(fold_angle_degrees(angle), 6)


def build_ctf_bank(
    s: int,
    c1: float,
    eps0: float,
    eps1: float,
    m: Optional[int] = None,
) -> CtfBank1D:
    """Directional complex tight framelet filters a, a^p, a^n, b^{l,p}, b^{l,n}.

    Interior high-pass edges c_2..c_s use the width
    eps_high = min(eps1, (pi - c1)/s - eps1, (pi - c1)/(2s)) so that neighbouring
    transitions never overlap. The edge at c1 keeps eps1 (it is shared with the
    low-pass filter) and the edge at pi takes whatever the last band leaves,
    min(eps1, (pi - c1)/s - eps_high).
    """
    m = active_config().BUMP_ORDER_M if m is None else m
    if s < 1:
        raise ConfigurationError(f"s must be a positive integer, got {s}")
    if m < 1:
        raise ConfigurationError(f"m must be a positive integer, got {m}")

    eps1_bound = min(c1, math.pi / 2 - c1, (c1 + (s - 1) * math.pi) / (2 * s))
    if not 0 < eps1 <= eps1_bound:
        raise ConfigurationError(
            "0 < eps1 <= min(c1, pi/2 - c1, (c1 + (s-1)pi)/(2s)) violated: "
            f"eps1={eps1}, bound={eps1_bound}"
        )
    if not 0 < eps0 < c1 - eps1:
        raise ConfigurationError(
            f"0 < eps0 < c1 - eps1 violated: eps0={eps0}, c1 - eps1={c1 - eps1}"
        )
    band_width = (math.pi - c1) / s
    if eps1 >= band_width:
        raise ConfigurationError(
            f"eps1 < (pi - c1)/s violated: eps1={eps1}, (pi - c1)/s={band_width}"
        )
    eps_high = min(eps1, band_width - eps1, band_width / 2)
    eps_pi = min(eps1, band_width - (eps1 if s == 1 else eps_high))
    if eps_high < eps1:
        logger.debug(
            "[build_ctf_bank] interior high-pass edges narrowed from %.6f to %.6f",
            eps1,
            eps_high,
        )

    lowpass = BumpFilter(
        "a", (BumpSpec(cL=-c1, cR=c1, epsL=eps1, epsR=eps1, m=m),), 0.0
    )
    positive_low = BumpSpec(cL=0.0, cR=c1, epsL=eps0, epsR=eps1, m=m)
    complex_lowpass = (
        BumpFilter("ap", (positive_low,), c1 / 2),
        BumpFilter("an", (positive_low.reflected(),), -c1 / 2),
    )

    edges = [c1 + band_width * index for index in range(s)] + [math.pi]
    highpass: list[BumpFilter] = []
    for level in range(1, s + 1):
        left, right = edges[level - 1], edges[level]
        positive = BumpSpec(
            cL=left,
            cR=right,
            epsL=eps1 if level == 1 else eps_high,
            epsR=eps_pi if level == s else eps_high,
            m=m,
        )
        centre = (left + right) / 2
        highpass.append(BumpFilter(f"b{level}p", (positive,), centre))
        highpass.append(BumpFilter(f"b{level}n", (positive.reflected(),), -centre))

    return CtfBank1D(
        s=s,
        c1=c1,
        eps0=eps0,
        eps1=eps1,
        eps_high=eps_high,
        eps_pi=eps_pi,
        m=m,
        lowpass=lowpass,
        complex_lowpass=complex_lowpass,
        highpass=tuple(highpass),
    )


def _ctf_key(bank: CtfBank1D, family: str) -> str:
    return (
        f"{family}:s={bank.s}:c1={bank.c1!r}:eps0={bank.eps0!r}"
        f":eps1={bank.eps1!r}:m={bank.m}"
    )


def build_tpctf2d(bank: CtfBank1D) -> FilterBank2D:
    """Tensor products of {a^p, a^n, b's} minus the four a^p/a^n-only pairs, plus a x a."""
    factors = (*bank.complex_lowpass, *bank.highpass)
    lowpass_names = {f.name for f in bank.complex_lowpass}
    highpass = tuple(
        Filter2D(row, col, _orientation(row, col))
        for row, col in product(factors, factors)
        if not (row.name in lowpass_names and col.name in lowpass_names)
    )
    expected = 4 * bank.s * (bank.s + 2)
    if len(highpass) != expected:
        raise StructuralError(f"expected {expected} high-pass filters, built {len(highpass)}")
    return FilterBank2D(
        lowpass=Filter2D(bank.lowpass, bank.lowpass),
        highpass=highpass,
        provenance="tpctf",
        key=_ctf_key(bank, "tpctf"),
        factors=bank.filters,
    )


def build_tpctf2d_odd(bank: CtfBank1D) -> FilterBank2D:
    """Plain tensor product {a; b's} x {a; b's}, (2s+1)^2 filters."""
    factors = (bank.lowpass, *bank.highpass)
    highpass = tuple(
        Filter2D(row, col, _orientation(row, col))
        for row, col in product(factors, factors)
        if not (row is bank.lowpass and col is bank.lowpass)
    )
    return FilterBank2D(
        lowpass=Filter2D(bank.lowpass, bank.lowpass),
        highpass=highpass,
        provenance="tpctf",
        key=_ctf_key(bank, "tpctf-odd"),
        factors=factors,
    )


def _tensor_tap_bank(filters: Sequence[TapFilter], provenance: str, key: str) -> FilterBank2D:
    pairs = [Filter2D(row, col) for row, col in product(filters, filters)]
    return FilterBank2D(
        lowpass=pairs[0],
        highpass=tuple(pairs[1:]),
        provenance=provenance,
        key=key,
        factors=tuple(filters),
    )


def spline_filters(variant: str) -> list[TapFilter]:
    if variant not in SPLINE_TAPS:
        raise ConfigurationError(
            f"spline variant must be one of {sorted(SPLINE_TAPS)}, got {variant!r}"
        )
    table = SPLINE_TAPS[variant]
    return [
        TapFilter(name, tuple(taps), table["start"])
        for name, taps in table["filters"].items()
    ]


def build_spline_bank(variant: str) -> FilterBank2D:
    return _tensor_tap_bank(spline_filters(variant), "spline", f"spline-{variant}")


def dct_filters(m: int) -> list[TapFilter]:
    if m < 2:
        raise ConfigurationError(f"DCT bank needs m >= 2, got {m}")
    return [
        TapFilter(f"B{index}", tuple(taps), DCT_START)
        for index, taps in enumerate(dct_taps(m), start=1)
    ]


def build_dct_bank(m: int = DEFAULT_DCT_SIZE) -> FilterBank2D:
    return _tensor_tap_bank(dct_filters(m), "dct", f"dct{m}")


def orientation_count(bank: FilterBank2D) -> int:
    """Distinct high-pass directions; coincident labels (e.g. two 45 degree bands) count once."""
    return len({f.orientation for f in bank.highpass if f.orientation is not None})


def _check_grid(bank: FilterBank2D, size: int) -> None:
    if size < 4 or size % 2:
        raise ConfigurationError(f"grid size must be an even integer >= 4, got {size}")
    if bank.provenance == "tpctf" and size < MIN_TPCTF_GRID:
        raise ConfigurationError(
            f"TP-CTF filters need a grid of at least {MIN_TPCTF_GRID}, got {size}"
        )


def sampled_responses(bank: FilterBank2D, size: int, dilation: int = 1) -> np.ndarray:
    """Read-only (filters, size, size) array of responses at dilation * xi."""
    _check_grid(bank, size)

    def build() -> np.ndarray:
        xi = frequency_grid(size)
        responses = np.stack([f.response(xi, xi, dilation) for f in bank.filters])
        responses.setflags(write=False)
        return responses

    return BANK_CACHE.get_or_create((bank.key, size, dilation), build)


def sample_bank(bank: FilterBank2D, size: int, level: int = 0) -> SampledBank:
    responses = sampled_responses(bank, size)
    return SampledBank(size, level, bank.names, responses, bank.key)


def sample_filters_1d(filters: Sequence[FrequencyFilter], size: int, key: str = "1d") -> SampledBank:
    if size < 4 or size % 2:
        raise ConfigurationError(f"grid size must be an even integer >= 4, got {size}")
    xi = frequency_grid(size)
    responses = np.stack([f.response(xi) for f in filters])
    responses.setflags(write=False)
    return SampledBank(size, 0, tuple(f.name for f in filters), responses, key)


def verify_bank_identities(sampled: SampledBank) -> BankIdentityReport:
    """Max deviation of sum_f F(xi) conj(F(xi + pi e)) from delta_{e,0} for each e in {0,1}^ndim."""
    responses = sampled.responses
    half = sampled.size // 2
    deviations: dict[str, float] = {}
    for shift in product((0, 1), repeat=sampled.ndim):
        shifted = responses
        for axis, bit in enumerate(shift, start=1):
            if bit:
                shifted = np.roll(shifted, -half, axis=axis)
        total = np.sum(responses * np.conj(shifted), axis=0)
        if any(shift):
            deviations[f"shift{shift}"] = float(np.max(np.abs(total)))
        else:
            deviations["partition_of_unity"] = float(np.max(np.abs(total - 1.0)))
    return BankIdentityReport(sampled.size, sampled.ndim, deviations)


def describe_bank(bank: FilterBank2D) -> str:
    lines = [
        f"bank {bank.key}",
        f"provenance {bank.provenance}",
        f"lowpass {bank.lowpass.name}",
        f"highpass {len(bank.highpass)}",
    ]
    for f in bank.highpass:
        orientation = "-" if f.orientation is None else format_real(f.orientation)
        lines.append(f"filter2d {f.name} orientation {orientation}")
    for factor in bank.factors:
        lines.extend(factor.describe())
    return "\n".join(lines) + "\n"


_DCT_NAME = re.compile(r"^dct(\d+)$")


def resolve_bank(name: str) -> FilterBank2D:
    """Named banks: tpctf6, tpctf5, spline-cubic, spline-linear, dct<m>."""

    def build() -> FilterBank2D:
        if name == "tpctf6":
            return build_tpctf2d(build_ctf_bank(**TPCTF6_PARAMS))
        if name == "tpctf5":
            return build_tpctf2d_odd(build_ctf_bank(**TPCTF6_PARAMS))
        if name.startswith("spline-"):
            return build_spline_bank(name.split("-", 1)[1])
        match = _DCT_NAME.match(name)
        if match:
            return build_dct_bank(int(match.group(1)))
        raise ConfigurationError(f"unknown filter bank {name!r}")

    return BANK_CACHE.get_or_create(("bank", name, active_config().BUMP_ORDER_M), build)
