import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from app.config import active_config
from app.data.filter_taps import TPCTF6_PARAMS
from app.errors import ConfigurationError, StructuralError
from app.services import filterbank_service, shrinkage_service, transform_service
from app.services.transform_service import CoeffPyramid, TransformSpec

logger = logging.getLogger(__name__)

LAMBDA_MAX = 512.0
LAMBDA_MID_FLOOR = 20.0
# (N1, tol1, N2, tol2) below and above half missing
PARAMETERS_LOW_MISSING = (5, 5e-3, 8, 1e-4)
PARAMETERS_HIGH_MISSING = (8, 5e-3, 5, 1e-3)


@dataclass(frozen=True)
class Mask:
    """Observable region: True marks an observed pixel."""

    observed: np.ndarray

    def __post_init__(self):
        observed = np.asarray(self.observed, dtype=bool)
        if observed.ndim != 2:
            raise StructuralError(f"mask must be 2D, got shape {observed.shape}")
        if not observed.any():
            raise ConfigurationError("mask has no observed pixel")
        object.__setattr__(self, "observed", observed)

    @property
    def shape(self) -> tuple[int, int]:
        return self.observed.shape

    @property
    def missing_ratio(self) -> float:
        return 1.0 - float(self.observed.sum()) / self.observed.size


def as_mask(mask) -> Mask:
    return mask if isinstance(mask, Mask) else Mask(np.asarray(mask))


def _strictly_decreasing(values: list[float]) -> bool:
    return all(later < earlier for earlier, later in zip(values, values[1:]))


class Schedule(BaseModel):
    model_config = ConfigDict(frozen=True)

    lambda_min: float
    lambda_mid: float
    lambda_max: float
    lambda1: list[float]
    lambda2: list[float]
    n1: int
    n2: int
    tol1: float
    tol2: float
    iteration_cap: int = 2000

    @model_validator(mode="after")
    def _check_sequence(self) -> "Schedule":
        if self.n1 < 1 or self.n2 < 0:
            raise ConfigurationError(f"need N1 >= 1 and N2 >= 0, got {self.n1}, {self.n2}")
        if len(self.lambda1) != self.n1 or len(self.lambda2) != self.n2:
            raise ConfigurationError("threshold lists must have lengths N1 and N2")
        if self.tol1 <= 0 or self.tol2 <= 0 or self.iteration_cap < 1:
            raise ConfigurationError("tolerances and the iteration cap must be positive")
        if not 0 <= self.lambda_min <= self.lambda_mid <= self.lambda_max:
            raise ConfigurationError("0 <= lambda_min <= lambda_mid <= lambda_max violated")
        # a list may only be flat when its two endpoints coincide
        if not (_strictly_decreasing(self.lambda1) or self.lambda_mid == self.lambda_max):
            raise ConfigurationError(f"Lambda1 must be strictly decreasing, got {self.lambda1}")
        if not (_strictly_decreasing(self.lambda2) or self.lambda_min == self.lambda_mid):
            raise ConfigurationError(f"Lambda2 must be strictly decreasing, got {self.lambda2}")
        values = self.thresholds
        if any(later > earlier for earlier, later in zip(values, values[1:])):
            raise ConfigurationError("threshold sequence must be non-increasing")
        return self

    def check_noise_floor(self, sigma: float, r: float) -> None:
        """lambda_min must not undercut the coefficient noise level sigma * sqrt(1 - r)."""
        floor = sigma * math.sqrt(1.0 - r)
        if self.lambda_min < floor - 1e-12:
            raise ConfigurationError(
                f"lambda_min={self.lambda_min:g} is below sigma*sqrt(1 - r)={floor:g} "
                f"(sigma={sigma:g}, r={r:.4f})"
            )

    @property
    def thresholds(self) -> list[float]:
        return [*self.lambda1, *self.lambda2]

    @property
    def total(self) -> int:
        return self.n1 + self.n2

    @classmethod
    def constant(cls, value: float, tol: float, cap: int = 2000) -> "Schedule":
        """Single fixed threshold iterated to tol."""
        return cls(
            lambda_min=value,
            lambda_mid=value,
            lambda_max=value,
            lambda1=[value],
            lambda2=[],
            n1=1,
            n2=0,
            tol1=tol,
            tol2=tol,
            iteration_cap=cap,
        )


def make_schedule(sigma: float, r: float, iteration_cap: Optional[int] = None) -> Schedule:
    """Threshold lists for noise level sigma and missing ratio r.

    Supported while sigma * (1 - r^2/2) <= LAMBDA_MAX; beyond that lambda_min
    would exceed lambda_max and no decreasing schedule exists.
    """
    if not 0 <= r < 1:
        raise ConfigurationError(f"missing ratio must satisfy 0 <= r < 1, got {r}")
    if sigma < 0:
        raise ConfigurationError(f"sigma must be nonnegative, got {sigma}")
    lambda_min = max(1.0, sigma * (1 - r**2 / 2))
    if lambda_min > LAMBDA_MAX:
        raise ConfigurationError(
            f"sigma*(1 - r^2/2)={lambda_min:g} exceeds lambda_max={LAMBDA_MAX:g}; "
            f"sigma up to {LAMBDA_MAX / (1 - r**2 / 2):g} is supported at r={r:.4f}"
        )
    lambda_mid = min(max(2 * lambda_min + 10, LAMBDA_MID_FLOOR), LAMBDA_MAX)
    n1, tol1, n2, tol2 = PARAMETERS_LOW_MISSING if r < 0.5 else PARAMETERS_HIGH_MISSING
    if n1 < 2:
        raise ConfigurationError("N1 >= 2 is required for the first threshold sequence")

    r1 = lambda_mid / LAMBDA_MAX
    r2 = lambda_min / lambda_mid
    lambda1 = [r1 ** ((i - n1) / (n1 - 1)) * lambda_mid for i in range(1, n1 + 1)]
    lambda2 = [r2 ** ((i - n2) / n2) * lambda_min for i in range(1, n2 + 1)]
    # pin the endpoints against pow rounding
    lambda1[0], lambda1[-1] = LAMBDA_MAX, lambda_mid
    lambda2[-1] = lambda_min

    return Schedule(
        lambda_min=lambda_min,
        lambda_mid=lambda_mid,
        lambda_max=LAMBDA_MAX,
        lambda1=lambda1,
        lambda2=lambda2,
        n1=n1,
        n2=n2,
        tol1=tol1,
        tol2=tol2,
        iteration_cap=iteration_cap or active_config().INPAINT_ITERATION_CAP,
    )


class InpaintConfig(BaseModel):
    sigma: float = 0.0
    # filled in from the mask by inpaint when left unset
    missing_ratio: Optional[float] = None
    levels: Optional[int] = None
    s: int = TPCTF6_PARAMS["s"]
    c1: float = TPCTF6_PARAMS["c1"]
    eps0: float = TPCTF6_PARAMS["eps0"]
    eps1: float = TPCTF6_PARAMS["eps1"]
    m: Optional[int] = None
    schedule: Optional[Schedule] = None
    iteration_cap: Optional[int] = None
    paste_observed: Optional[bool] = None
    window_radius: Optional[int] = None
    norm_mode: Optional[str] = None

    @model_validator(mode="after")
    def _check(self) -> "InpaintConfig":
        if self.sigma < 0:
            raise ConfigurationError(f"sigma must be nonnegative, got {self.sigma}")
        if self.levels is not None and self.levels < 1:
            raise ConfigurationError(f"levels must be >= 1, got {self.levels}")
        if self.iteration_cap is not None and self.iteration_cap < 1:
            raise ConfigurationError("iteration cap must be positive")
        if self.missing_ratio is not None:
            if not 0 <= self.missing_ratio < 1:
                raise ConfigurationError(f"missing ratio must satisfy 0 <= r < 1, got {self.missing_ratio}")
            if self.schedule is not None:
                self.schedule.check_noise_floor(self.sigma, self.missing_ratio)
        return self

    def bank(self) -> filterbank_service.FilterBank2D:
        return filterbank_service.build_tpctf2d(
            filterbank_service.build_ctf_bank(self.s, self.c1, self.eps0, self.eps1, self.m)
        )


@dataclass(frozen=True)
class IterationState:
    iteration: int
    lam: float
    working_image: np.ndarray
    estimate: np.ndarray
    error: float


@dataclass
class InpaintResult:
    image: np.ndarray
    iterations: int
    converged: bool
    thresholds_converged: int
    lambdas: list[float]
    final_error: float
    errors: list[float] = field(default_factory=list)
    coefficients: Optional[CoeffPyramid] = None
    # iteration whose estimate is returned; the lowest-error one when the cap is hit
    best_iteration: int = 0


def _observed_energy(y: np.ndarray, mask: Mask) -> float:
    energy = float(np.linalg.norm(np.where(mask.observed, y, 0.0)))
    if energy == 0.0:
        raise ConfigurationError("observed region carries zero energy; nothing to inpaint from")
    return energy


def _prepare(y, mask) -> tuple[np.ndarray, Mask]:
    y = np.asarray(y, dtype=float)
    mask = as_mask(mask)
    if y.shape != mask.shape:
        raise StructuralError(f"image shape {y.shape} does not match mask shape {mask.shape}")
    if not np.all(np.isfinite(y[mask.observed])):
        raise ConfigurationError("observed pixels must be finite")
    return y, mask


def inpaint(
    y,
    mask,
    config: Optional[InpaintConfig] = None,
    on_iteration: Optional[Callable[[IterationState], None]] = None,
) -> InpaintResult:
    """Two-stage thresholding with the directional complex framelet and bivariate shrinkage."""
    config = config or InpaintConfig()
    app_config = active_config()
    y, mask = _prepare(y, mask)
    size = y.shape[0]
    levels = config.levels or transform_service.default_levels(size)
    spec = TransformSpec(config.bank(), levels)

    r = mask.missing_ratio
    if config.missing_ratio is not None and abs(config.missing_ratio - r) > 1e-12:
        raise ConfigurationError(
            f"configured missing ratio {config.missing_ratio} does not match the mask's {r:.6f}"
        )
    cap = config.iteration_cap or app_config.INPAINT_ITERATION_CAP
    schedule = config.schedule or make_schedule(config.sigma, r, cap)
    schedule.check_noise_floor(config.sigma, r)
    cap = config.iteration_cap or schedule.iteration_cap
    paste = app_config.INPAINT_PASTE_OBSERVED if config.paste_observed is None else config.paste_observed

    observed = mask.observed
    missing = ~observed
    observed_norm = _observed_energy(y, mask)
    ctx = shrinkage_service.make_shrink_context(
        spec, size, schedule.lambda1[0], config.window_radius, config.norm_mode
    )

    n1, total = schedule.n1, schedule.total
    i = 1
    lam = schedule.lambda1[0]
    x = np.zeros_like(y)
    lambdas = [lam]
    errors: list[float] = []
    coefficients = None
    converged = False
    best = (math.inf, x, None, 0)
    logger.info(
        "[inpaint] size=%d levels=%d r=%.4f sigma=%g thresholds=%d",
        size, levels, r, config.sigma, total,
    )

    iteration = 0
    while iteration < cap:
        iteration += 1
        working = np.where(observed, y, x)
        coefficients = shrinkage_service.bivariate_shrink(
            transform_service.forward(working, spec), ctx.with_lambda(lam)
        )
        x_next = transform_service.inverse(coefficients, spec)
        error = float(np.linalg.norm(np.where(missing, x_next - x, 0.0))) / observed_norm
        errors.append(error)
        if on_iteration is not None:
            on_iteration(IterationState(iteration, lam, working, x_next, error))
        logger.debug("[inpaint] iteration=%d lambda=%.6g error=%.3e", iteration, lam, error)
        x = x_next
        if error < best[0]:
            best = (error, x, coefficients, iteration)

        if error < schedule.tol1 and i < n1:
            i += 1
            lam = schedule.lambda1[i - 1]
        elif error < schedule.tol2 and n1 <= i < total:
            i += 1
            lam = schedule.lambda2[i - n1 - 1]
        elif error < schedule.tol2 and i == total:
            converged = True
            break
        else:
            continue
        lambdas.append(lam)
        logger.info("[inpaint] threshold %d/%d lambda=%.6g", i, total, lam)

    final_error = errors[-1] if errors else math.nan
    best_iteration = iteration
    if not converged:
        final_error, x, coefficients, best_iteration = best
        logger.warning(
            "[inpaint] iteration cap %d reached at threshold %d/%d; returning iteration %d (error %.3e)",
            cap, i, total, best_iteration, final_error,
        )
    image = np.where(observed, y, x) if paste else x
    return InpaintResult(
        image=image,
        iterations=iteration,
        converged=converged,
        thresholds_converged=i if converged else i - 1,
        lambdas=lambdas,
        final_error=final_error,
        errors=errors,
        coefficients=coefficients,
        best_iteration=best_iteration,
    )


Rule = Literal["soft", "hard", "bivariate", "local_soft"]


def _shrink_step(
    pyramid: CoeffPyramid,
    rule: str,
    lam: float,
    ctx: shrinkage_service.ShrinkContext,
    threshold_lowpass: bool,
) -> CoeffPyramid:
    if rule in ("soft", "hard"):
        thresholds = {key: lam * norm for key, norm in ctx.norms.items()}
        return shrinkage_service.threshold_pyramid(pyramid, thresholds, rule, threshold_lowpass)
    if rule == "bivariate":
        return shrinkage_service.bivariate_shrink(pyramid, ctx.with_lambda(lam))
    if rule == "local_soft":
        return shrinkage_service.local_soft_shrink(pyramid, lam, ctx)
    raise ConfigurationError(f"unknown thresholding rule {rule!r}")


def iterative_inpaint_generic(
    y,
    mask,
    spec: TransformSpec,
    rule: Rule,
    schedule: Schedule,
    threshold_lowpass: bool = False,
    window_radius: Optional[int] = None,
    norm_mode: Optional[str] = None,
    on_iteration: Optional[Callable[[IterationState], None]] = None,
) -> InpaintResult:
    """x_l = P y + (I - P) D eta(D^T x_{l-1}) over a decreasing list of thresholds.

    Each threshold is held until ||x_l - x_{l-1}|| / ||P y|| drops below tol1
    (first list) or tol2 (second list).
    """
    y, mask = _prepare(y, mask)
    if rule not in ("soft", "hard", "bivariate", "local_soft"):
        raise ConfigurationError(f"unknown thresholding rule {rule!r}")
    size = y.shape[0]
    observed = mask.observed
    observed_values = np.where(observed, y, 0.0)
    observed_norm = _observed_energy(y, mask)
    if window_radius is None and rule == "local_soft":
        window_radius = active_config().LOCAL_SOFT_WINDOW_RADIUS
    ctx = shrinkage_service.make_shrink_context(spec, size, 0.0, window_radius, norm_mode)

    plan = [(lam, schedule.tol1) for lam in schedule.lambda1]
    plan += [(lam, schedule.tol2) for lam in schedule.lambda2]

    x = observed_values.copy()
    lambdas: list[float] = []
    errors: list[float] = []
    coefficients = None
    iteration = 0
    step = 0
    while step < len(plan) and iteration < schedule.iteration_cap:
        lam, tol = plan[step]
        if len(lambdas) == step:
            lambdas.append(lam)
        iteration += 1
        coefficients = _shrink_step(
            transform_service.forward(x, spec), rule, lam, ctx, threshold_lowpass
        )
        synthesized = transform_service.inverse(coefficients, spec)
        x_next = np.where(observed, y, synthesized)
        error = float(np.linalg.norm(x_next - x)) / observed_norm
        errors.append(error)
        if on_iteration is not None:
            on_iteration(IterationState(iteration, lam, x, x_next, error))
        x = x_next
        if error < tol:
            step += 1
    converged = step == len(plan)
    if not converged:
        logger.warning(
            "[iterative_inpaint_generic] iteration cap %d reached at threshold %d/%d",
            schedule.iteration_cap, step + 1, len(plan),
        )
    return InpaintResult(
        image=x,
        iterations=iteration,
        converged=converged,
        thresholds_converged=step,
        lambdas=lambdas,
        final_error=errors[-1] if errors else math.nan,
        errors=errors,
        coefficients=coefficients,
    )
