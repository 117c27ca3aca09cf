import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.config import active_config
from app.errors import ConfigurationError, StructuralError

logger = logging.getLogger(__name__)

POWER_STEPS = 200
POWER_TOL = 1e-12


@dataclass(frozen=True)
class BalancedProblem:
    """min 1/2||B D c - b||^2 + ||diag(weights) c||_1 + kappa ||(I - D^T D) c||^2.

    D is d x n (any real matrix), B is m x d, b has length m.
    """

    D: np.ndarray
    B: np.ndarray
    b: np.ndarray
    weights: np.ndarray
    kappa: float

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float)
        d, n = D.shape
        if weights.ndim == 0:
            weights = np.full(n, float(weights))
        if d < 1 or n < 1:
            raise StructuralError(f"D must be non-empty, got shape {D.shape}")
        if B.shape[1] != d or B.shape[0] != b.size:
            raise StructuralError(
                f"B has shape {B.shape}; need ({b.size}, {d}) for D {D.shape} and b of length {b.size}"
            )
        if weights.shape != (n,):
            raise StructuralError(f"weights must have length {n}, got shape {weights.shape}")
        if np.any(weights <= 0):
            raise ConfigurationError("all weights must be positive")
        if self.kappa <= 0:
            raise ConfigurationError(f"kappa must be positive, got {self.kappa}")
        for name, value in (("D", D), ("B", B), ("b", b), ("weights", weights)):
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.D.shape[1]

    @property
    def d(self) -> int:
        return self.D.shape[0]

    @property
    def BD(self) -> np.ndarray:
        return self.B @ self.D

    @property
    def balance_operator(self) -> np.ndarray:
        return np.eye(self.n) - self.D.T @ self.D


@dataclass
class SolveResult:
    c_breve: np.ndarray
    objective: float
    iterations: int
    relative_change: float
    converged: bool
    history: list[float] = field(default_factory=list)


def _check_coefficients(problem: BalancedProblem, c) -> np.ndarray:
    c = np.asarray(c, dtype=float).ravel()
    if c.size != problem.n:
        raise StructuralError(f"coefficient vector has length {c.size}, expected {problem.n}")
    return c


def objective(problem: BalancedProblem, c) -> float:
    c = _check_coefficients(problem, c)
    residual = problem.BD @ c - problem.b
    balance = problem.balance_operator @ c
    return float(
        0.5 * residual @ residual
        + np.sum(problem.weights * np.abs(c))
        + problem.kappa * balance @ balance
    )


def spectral_norm_squared(matrix: np.ndarray, steps: int = POWER_STEPS, tol: float = POWER_TOL) -> float:
    """Largest eigenvalue of A^T A by power iteration from a fixed start vector."""
    gram = matrix.T @ matrix
    vector = np.ones(gram.shape[0]) / math.sqrt(gram.shape[0])
    estimate = 0.0
    for _ in range(steps):
        image = gram @ vector
        norm = float(np.linalg.norm(image))
        if norm == 0.0:
            return 0.0
        vector = image / norm
        updated = float(vector @ gram @ vector)
        if abs(updated - estimate) <= tol * max(updated, 1.0):
            return updated
        estimate = updated
    return estimate


def soft_threshold(values: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    return np.sign(values) * np.maximum(np.abs(values) - thresholds, 0.0)


def _quadratic_objective(Q, q, constant, weights, c) -> float:
    return float(0.5 * c @ Q @ c - q @ c + constant + np.sum(weights * np.abs(c)))


def _monotone_fista(
    Q: np.ndarray,
    q: np.ndarray,
    constant: float,
    weights: np.ndarray,
    lipschitz: float,
    tol: float,
    maxit: int,
) -> SolveResult:
    """Minimize 1/2 c^T Q c - q^T c + constant + sum w|c| with monotone FISTA."""
    n = q.size
    if lipschitz <= 0:
        x = np.zeros(n)
        value = _quadratic_objective(Q, q, constant, weights, x)
        return SolveResult(x, value, 0, 0.0, True, [value])

    step = 1.0 / lipschitz
    x = np.zeros(n)
    y = x.copy()
    t = 1.0
    value = _quadratic_objective(Q, q, constant, weights, x)
    history = [value]
    change = math.inf
    for iteration in range(1, maxit + 1):
        z = soft_threshold(y - step * (Q @ y - q), step * weights)
        z_value = _quadratic_objective(Q, q, constant, weights, z)
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        if z_value <= value:
            x_next = z
            accepted = True
        else:
            x_next = x
            accepted = False
        y = x_next + (t / t_next) * (z - x_next) + ((t - 1.0) / t_next) * (x_next - x)
        if accepted:
            scale = max(float(np.linalg.norm(x_next)), 1e-300)
            change = float(np.linalg.norm(x_next - x)) / scale
            value = z_value
        x, t = x_next, t_next
        history.append(value)
        if accepted and change < tol:
            return SolveResult(x, value, iteration, change, True, history)
        if not accepted:
            # restart momentum from the kept iterate
            y = x.copy()
            t = 1.0
    logger.warning("[solve] maxit %d reached, relative change %.3e", maxit, change)
    return SolveResult(x, value, maxit, change, False, history)


def solve_balanced(problem: BalancedProblem, tol: Optional[float] = None, maxit: Optional[int] = None) -> SolveResult:
    config = active_config()
    tol = config.BALANCED_TOL if tol is None else tol
    maxit = config.BALANCED_MAXIT if maxit is None else maxit
    if tol <= 0 or maxit < 1:
        raise ConfigurationError("tol must be positive and maxit at least 1")
    BD = problem.BD
    balance = problem.balance_operator
    Q = BD.T @ BD + 2.0 * problem.kappa * balance.T @ balance
    q = BD.T @ problem.b
    lipschitz = spectral_norm_squared(BD) + 2.0 * problem.kappa * spectral_norm_squared(balance)
    result = _monotone_fista(Q, q, 0.5 * float(problem.b @ problem.b), problem.weights, lipschitz, tol, maxit)
    logger.debug(
        "[solve_balanced] n=%d iterations=%d objective=%.12g", problem.n, result.iterations, result.objective
    )
    return result


def _kkt_gradient(problem: BalancedProblem, c: np.ndarray) -> np.ndarray:
    D, B = problem.D, problem.B
    synthesized = D @ c
    inner = 2.0 * problem.kappa * (2.0 * synthesized - D @ (D.T @ synthesized)) - B.T @ (B @ synthesized - problem.b)
    return D.T @ inner


def kkt_residual(problem: BalancedProblem, c) -> float:
    c = _check_coefficients(problem, c)
    g = _kkt_gradient(problem, c)
    active = c != 0
    residual = np.where(
        active,
        np.abs(g - np.sign(c) * (problem.weights + 2.0 * problem.kappa * np.abs(c))),
        np.maximum(0.0, np.abs(g) - problem.weights),
    )
    return float(np.max(residual))


def _grouping_field(problem: BalancedProblem, c: np.ndarray) -> np.ndarray:
    """h = D^T((2I - D D^T) D c - (1/2kappa) B^T(B D c - b)); bound terms are |h_j - h_k|."""
    D, B = problem.D, problem.B
    synthesized = D @ c
    inner = (2.0 * synthesized - D @ (D.T @ synthesized)) - B.T @ (B @ synthesized - problem.b) / (
        2.0 * problem.kappa
    )
    return D.T @ inner


def _check_pair(problem: BalancedProblem, j: int, k: int) -> None:
    for index in (j, k):
        if not 0 <= index < problem.n:
            raise StructuralError(f"column index {index} outside 0..{problem.n - 1}")


def grouping_bound(problem: BalancedProblem, c, j: int, k: int) -> float:
    """Upper bound on |c_j - c_k| at a minimizer (0-based column indices)."""
    _check_pair(problem, j, k)
    c = _check_coefficients(problem, c)
    h = _grouping_field(problem, c)
    weights = problem.weights
    return float(abs(weights[j] - weights[k]) / (2.0 * problem.kappa) + abs(h[j] - h[k]))


def a_priori_grouping_bound(problem: BalancedProblem, j: int, k: int) -> float:
    """Bound on |c_j - c_k| that needs no minimizer, from ||BDc - b|| <= ||b|| and the l1 bound."""
    _check_pair(problem, j, k)
    D, B = problem.D, problem.B
    difference = D[:, j] - D[:, k]
    b_norm = float(np.linalg.norm(problem.b))
    weight_term = abs(problem.weights[j] - problem.weights[k]) / (2.0 * problem.kappa)
    data_term = b_norm * float(np.linalg.norm(B @ difference)) / (2.0 * problem.kappa)
    row = difference @ (2.0 * np.eye(problem.d) - D @ D.T) @ D
    balance_term = b_norm**2 / (2.0 * float(np.min(problem.weights))) * float(np.linalg.norm(row))
    return weight_term + data_term + balance_term


def elastic_net_bound(E: np.ndarray, b: np.ndarray, kappa: float, c, j: int, k: int) -> tuple[float, float]:
    """(solution-dependent bound, ||b||/(2 kappa) ||E_j - E_k||) for the elastic net."""
    E = np.asarray(E, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    difference = E[:, j] - E[:, k]
    exact = abs(float(difference @ (E @ c - b))) / (2.0 * kappa)
    loose = float(np.linalg.norm(b)) * float(np.linalg.norm(difference)) / (2.0 * kappa)
    return exact, loose


@dataclass
class GroupingReport:
    seed: Optional[int]
    d: int
    n: int
    kappa: float
    worst_margin: float
    worst_pair: tuple[int, int]
    violations: int
    kkt: float
    data_bound_holds: bool
    l1_bound_holds: bool
    converged: bool
    slack: float

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.data_bound_holds and self.l1_bound_holds

    def format_line(self) -> str:
        seed = "-" if self.seed is None else str(self.seed)
        status = "pass" if self.passed else "fail"
        flag = "" if self.converged else " (solver not converged)"
        return (
            f"seed={seed} d={self.d} n={self.n} kappa={self.kappa:g} "
            f"worst_margin={self.worst_margin:.3e} kkt={self.kkt:.3e} {status}{flag}"
        )


def verify_grouping(
    problem: BalancedProblem,
    tol: Optional[float] = None,
    seed: Optional[int] = None,
    maxit: Optional[int] = None,
) -> GroupingReport:
    """Solve, then check |c_j - c_k| <= grouping_bound + slack over all pairs and the two loose bounds."""
    slack = active_config().GROUPING_SLACK
    result = solve_balanced(problem, tol, maxit)
    c = result.c_breve
    h = _grouping_field(problem, c)
    weights = problem.weights

    # all pairs at once: margin_jk = bound_jk - |c_j - c_k|
    bounds = np.abs(weights[:, None] - weights[None, :]) / (2.0 * problem.kappa) + np.abs(h[:, None] - h[None, :])
    margins = bounds - np.abs(c[:, None] - c[None, :])
    upper = np.triu_indices(problem.n, k=1)
    if upper[0].size:
        pair_margins = margins[upper]
        worst_index = int(np.argmin(pair_margins))
        worst_margin = float(pair_margins[worst_index])
        worst_pair = (int(upper[0][worst_index]), int(upper[1][worst_index]))
        violations = int(np.sum(pair_margins < -slack))
    else:
        worst_margin, worst_pair, violations = math.inf, (0, 0), 0

    b_norm = float(np.linalg.norm(problem.b))
    data_residual = float(np.linalg.norm(problem.BD @ c - problem.b))
    l1_norm = float(np.sum(np.abs(c)))
    report = GroupingReport(
        seed=seed,
        d=problem.d,
        n=problem.n,
        kappa=problem.kappa,
        worst_margin=worst_margin,
        worst_pair=worst_pair,
        violations=violations,
        kkt=kkt_residual(problem, c),
        data_bound_holds=data_residual <= b_norm + slack,
        l1_bound_holds=l1_norm <= b_norm**2 / (2.0 * float(np.min(weights))) + slack,
        converged=result.converged,
        slack=slack,
    )
    if not report.passed:
        logger.warning("[verify_grouping] %s", report.format_line())
    return report


def elastic_net_objective(E, b, lam: float, kappa: float, c) -> float:
    E = np.asarray(E, dtype=float)
    c = np.asarray(c, dtype=float)
    residual = E @ c - np.asarray(b, dtype=float)
    return float(0.5 * residual @ residual + lam * np.sum(np.abs(c)) + kappa * c @ c)


def elastic_net_problem(E, b, lam: float, kappa: float) -> BalancedProblem:
    """Balanced problem with D = sqrt(2) I and B = (sqrt(2)/2) E, equal to the elastic net."""
    E = np.asarray(E, dtype=float)
    n = E.shape[1]
    return BalancedProblem(
        D=math.sqrt(2.0) * np.eye(n),
        B=(math.sqrt(2.0) / 2.0) * E,
        b=b,
        weights=np.full(n, float(lam)),
        kappa=kappa,
    )


def solve_elastic_net(
    E,
    b,
    lam: float,
    kappa: float,
    tol: Optional[float] = None,
    maxit: Optional[int] = None,
    path: str = "direct",
) -> SolveResult:
    """min 1/2||Ec - b||^2 + lam||c||_1 + kappa||c||^2.

    path="direct" runs the solver on the elastic net itself, path="reduction" goes through
    solve_balanced with D = sqrt(2) I and B = (sqrt(2)/2) E. Both reach the same minimizer.
    """
    if path not in ("direct", "reduction"):
        raise ConfigurationError(f"path must be direct or reduction, got {path!r}")
    if lam <= 0 or kappa <= 0:
        raise ConfigurationError("lambda and kappa must be positive")
    config = active_config()
    tol = config.BALANCED_TOL if tol is None else tol
    maxit = config.BALANCED_MAXIT if maxit is None else maxit
    E = np.asarray(E, dtype=float)
    b = np.asarray(b, dtype=float).ravel()
    if E.shape[0] != b.size:
        raise StructuralError(f"E has {E.shape[0]} rows but b has length {b.size}")
    if path == "reduction":
        return solve_balanced(elastic_net_problem(E, b, lam, kappa), tol, maxit)
    n = E.shape[1]
    Q = E.T @ E + 2.0 * kappa * np.eye(n)
    lipschitz = spectral_norm_squared(E) + 2.0 * kappa
    return _monotone_fista(Q, E.T @ b, 0.5 * float(b @ b), np.full(n, float(lam)), lipschitz, tol, maxit)


def random_problem(
    rng: np.random.Generator,
    d: int,
    n: int,
    kappa: float,
    tight: bool = True,
    uniform: bool = True,
    duplicate: bool = False,
) -> BalancedProblem:
    """Random instance: tight D from orthonormal rows or a Gaussian D, B a coordinate mask."""
    if tight:
        if n < d:
            raise ConfigurationError("a tight frame needs n >= d")
        orthogonal, _ = np.linalg.qr(rng.standard_normal((n, n)))
        D = orthogonal[:d, :]
    else:
        D = rng.standard_normal((d, n)) / math.sqrt(d)
    if duplicate and n >= 2:
        D = D.copy()
        D[:, 1] = D[:, 0]
    observed = rng.random(d) < 0.7
    observed[rng.integers(d)] = True
    B = np.diag(observed.astype(float))
    signal = D @ (rng.standard_normal(n) * (rng.random(n) < 0.4))
    b = B @ (signal + 0.05 * rng.standard_normal(d))
    if uniform or duplicate:
        weights = np.full(n, 0.1)
    else:
        weights = rng.uniform(0.02, 0.3, n)
    return BalancedProblem(D=D, B=B, b=b, weights=weights, kappa=kappa)


def grouping_corpus(seed: int, count: int) -> list[tuple[int, BalancedProblem]]:
    """Deterministic mix of tight and non-tight, uniform and weighted, duplicated-column instances."""
    kappas = (0.1, 0.5, 2.0)
    instances = []
    for index, (tight, uniform) in zip(range(count), itertools.cycle(itertools.product((True, False), repeat=2))):
        instance_seed = seed + index
        rng = np.random.default_rng(instance_seed)
        d = int(rng.integers(2, 13))
        n = int(rng.integers(d, 37))
        duplicate = index % 7 == 0
        problem = random_problem(rng, d, n, kappas[index % 3], tight, uniform, duplicate)
        instances.append((instance_seed, problem))
    return instances


@dataclass
class ElasticNetCheck:
    seed: int
    disagreement: float
    bound_mismatch: float
    bound_violations: int

    def passed(self, agreement: float = 1e-8) -> bool:
        return self.disagreement <= agreement and self.bound_violations == 0


def verify_elastic_net(seed: int, d: int = 6, n: int = 10, lam: float = 0.1, kappa: float = 0.5) -> ElasticNetCheck:
    """Both solution paths on a random instance, plus the elastic-net grouping inequality on the result."""
    rng = np.random.default_rng(seed)
    E = rng.standard_normal((d, n))
    b = rng.standard_normal(d)
    direct = solve_elastic_net(E, b, lam, kappa, path="direct")
    reduced = solve_elastic_net(E, b, lam, kappa, path="reduction")
    c = direct.c_breve
    problem = elastic_net_problem(E, b, lam, kappa)
    slack = active_config().GROUPING_SLACK
    mismatch = 0.0
    violations = 0
    for j, k in itertools.combinations(range(n), 2):
        exact, loose = elastic_net_bound(E, b, kappa, c, j, k)
        mismatch = max(mismatch, abs(grouping_bound(problem, c, j, k) - exact))
        if abs(c[j] - c[k]) > exact + slack or exact > loose + slack:
            violations += 1
    return ElasticNetCheck(
        seed=seed,
        disagreement=float(np.max(np.abs(direct.c_breve - reduced.c_breve))),
        bound_mismatch=mismatch,
        bound_violations=violations,
    )
