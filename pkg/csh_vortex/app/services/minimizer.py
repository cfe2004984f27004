"""Constrained minimization of the reduced functional J(w) = I(w + c(w)).

The unknown is split as v = w + c with w mean-zero and c constant. For every
w the constants are fixed by the natural constraint (constraint_solver), so
the c-directions of I are stationary and the L2 gradient of J is the
mean-zero part of the Euler-Lagrange expression of I.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

from csh_vortex.app.errors import (
    ConfigurationError,
    ConstraintInfeasibleError,
    ConstraintSolverError,
    ExponentRangeError,
    InadmissibleError,
    NecessaryConditionError,
    NonConvergenceError,
    SeedError,
)
from csh_vortex.app.services.constraint_solver import (
    ConstraintInput,
    ConstraintSolution,
    admissible,
    is_admissible,
    resolve_constraints,
)
from csh_vortex.app.services.lie_cartan import (
    AlgebraSpec,
    CartanData,
    float_vector,
    lambda_threshold,
    load_cartan_data,
    vortex_vector_b,
)
from csh_vortex.app.services.torus_field import (
    BackgroundField,
    TorusGrid,
    VortexConfiguration,
    background,
    default_sigma,
    exponentials,
    integrals_of,
    spectral_laplacian,
)

logger = logging.getLogger(__name__)

OUTCOME_CONVERGED = "converged"
OUTCOME_LAMBDA_TOO_SMALL = "lambda_too_small"
OUTCOME_STALLED = "stalled"
OUTCOME_NOT_CONVERGED = "not_converged"

STOP_GRADIENT = "gradient"
STOP_ROUND_OFF = "round_off_floor"

ROUND_OFF_FLOOR = 1e-14


# ---------------------------------------------------------------------------
# Problem and options
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class VortexProblem:
    """Everything that defines one system at one coupling."""

    data: CartanData
    grid: TorusGrid
    vortices: VortexConfiguration
    lam: float
    sigma: Optional[float] = None
    constraint_method: Optional[str] = None

    def __post_init__(self):
        if self.vortices.n != self.data.n:
            raise ConfigurationError(
                f"{self.data.label} has rank {self.data.n} but vortices are given for {self.vortices.n} indices"
            )
        if not self.lam > 0:
            raise ConfigurationError(f"lambda must be positive, got {self.lam}")
        if self.sigma is None:
            object.__setattr__(self, "sigma", default_sigma(self.grid))

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def area(self) -> float:
        return self.grid.area

    @property
    def N(self) -> Tuple[int, ...]:
        return self.vortices.N

    @cached_property
    def background(self) -> BackgroundField:
        return background(self.grid, self.vortices, self.sigma)

    @cached_property
    def b(self) -> np.ndarray:
        return float_vector(vortex_vector_b(self.data, self.N))

    @cached_property
    def lambda0(self) -> float:
        return lambda_threshold(self.data, self.N, self.area)

    def with_lambda(self, lam: float) -> "VortexProblem":
        return dataclasses.replace(self, lam=lam)

    def zero(self) -> np.ndarray:
        return np.zeros((self.n, self.grid.M1, self.grid.M2))


@dataclass(frozen=True)
class DescentOptions:
    g_tol: float = 1e-8
    max_iterations: int = 100_000
    pde_tol: float = 1e-6
    m_min: float = 0.0
    armijo: float = 1e-4
    shrink: float = 0.5
    min_step: float = 1e-12
    max_step: float = 1e3
    precondition: bool = True
    log_every: int = 100

    def __post_init__(self):
        if not self.g_tol > 0:
            raise ConfigurationError("g_tol must be positive")
        if not self.pde_tol > 0:
            raise ConfigurationError("pde_tol must be positive")
        if self.m_min < 0:
            raise ConfigurationError("m_min must be non-negative")
        if self.max_iterations < 0:
            raise ConfigurationError("max_iterations must be non-negative")


@dataclass(frozen=True)
class SeedOptions:
    kind: str = "zero"  # zero | tarantello
    mu_factor: float = 100.0

    def __post_init__(self):
        if self.kind not in ("zero", "tarantello"):
            raise ConfigurationError(f"unknown seed {self.kind!r}")
        if not self.mu_factor > 1:
            raise ConfigurationError("mu_factor must exceed 1")


@dataclass(frozen=True)
class SolverConfig:
    descent: DescentOptions = field(default_factory=DescentOptions)
    seed: SeedOptions = field(default_factory=SeedOptions)


# ---------------------------------------------------------------------------
# Functionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FunctionalState:
    w: np.ndarray
    J: float
    margins: np.ndarray
    admissible: bool
    constraint: Optional[ConstraintSolution] = None
    E: Optional[np.ndarray] = None
    reason: str = ""

    @property
    def t(self) -> np.ndarray:
        return self.constraint.t

    @property
    def c(self) -> np.ndarray:
        return self.constraint.c

    @property
    def v(self) -> np.ndarray:
        return self.w + self.c[:, None, None]

    @property
    def U(self) -> np.ndarray:
        """exp(u0 + v), the normalized unknowns."""
        return self.t[:, None, None] * self.E


def _apply(matrix: np.ndarray, stack: np.ndarray) -> np.ndarray:
    return np.einsum("ij,jmn->imn", matrix, stack)


def _kinetic(problem: VortexProblem, v: np.ndarray) -> float:
    lap = spectral_laplacian(problem.grid, v)
    return 0.5 * problem.grid.inner(v, -_apply(problem.data.A_float, lap))


def functional_I(problem: VortexProblem, v: np.ndarray) -> float:
    U = exponentials(problem.background, v)
    grid = problem.grid
    potential = 0.5 * problem.lam * grid.inner(U - 1, _apply(problem.data.Q_float, U - 1))
    flux = float(problem.b @ grid.integrate(v)) / problem.area
    return _kinetic(problem, v) + potential + flux


def functional_J(problem: VortexProblem, w: np.ndarray, m_min: float = 0.0) -> FunctionalState:
    """Reduced functional; an inadmissible w yields a state with admissible=False, never an exception."""
    try:
        E = exponentials(problem.background, w)
        a, aM = integrals_of(problem.grid, E)
    except ExponentRangeError as exc:
        return FunctionalState(w=w, J=math.inf, margins=np.full(problem.n, -math.inf),
                               admissible=False, reason=str(exc))

    inp = ConstraintInput(problem.data, a, aM, problem.b, problem.lam, problem.area)
    margins = admissible(inp)
    inside = bool(np.all(margins >= m_min)) if m_min > 0 else is_admissible(inp)
    if not inside:
        return FunctionalState(w=w, J=math.inf, margins=margins, admissible=False, reason="margin")
    try:
        solution = resolve_constraints(inp, problem.constraint_method)
    except ConstraintInfeasibleError as exc:
        return FunctionalState(w=w, J=math.inf, margins=margins, admissible=False, reason=str(exc))

    data = problem.data
    t = solution.t
    weights = data.R_float / data.P_float
    J = (
        _kinetic(problem, w)
        + 0.5 * problem.lam * float(weights @ (problem.area - t * a))
        + float(problem.b @ solution.c)
        - 0.5 * float(problem.b.sum())
    )
    return FunctionalState(w=w, J=J, margins=margins, admissible=True, constraint=solution, E=E)


def euler_lagrange(problem: VortexProblem, state: FunctionalState) -> np.ndarray:
    """-A Lap v + lambda U Q (U - 1) + b / |Omega|, before the mean-zero projection."""
    U = state.U
    lap = spectral_laplacian(problem.grid, state.w)
    return (
        -_apply(problem.data.A_float, lap)
        + problem.lam * U * _apply(problem.data.Q_float, U - 1)
        + (problem.b / problem.area)[:, None, None]
    )


def gradient_J(problem: VortexProblem, state: FunctionalState) -> np.ndarray:
    return problem.grid.project_mean_zero(euler_lagrange(problem, state))


def functional_scalar_S(problem: VortexProblem, v: np.ndarray) -> float:
    """Action of the single equation Lap v = lam e^{u0+v}(e^{u0+v} - 1) + 4 pi N / |Omega|.

    For A1 it relates to I by I = S / 2 + lam |Omega| / 4.
    """
    if problem.n != 1:
        raise ConfigurationError("the scalar action is defined for rank 1 only")
    grid = problem.grid
    v0 = v[0]
    e = np.exp(problem.background.u0[0] + v0)
    gradient_energy = 0.5 * grid.inner(v0, -spectral_laplacian(grid, v0))
    density = 0.5 * problem.lam * e ** 2 - problem.lam * e + 4 * np.pi * problem.N[0] / problem.area * v0
    return gradient_energy + float(grid.integrate(density))


# ---------------------------------------------------------------------------
# Residuals
# ---------------------------------------------------------------------------

def residual_fields(problem: VortexProblem, state: FunctionalState) -> Tuple[np.ndarray, np.ndarray]:
    """Residuals of the system in normalized form and of its A-multiplied form."""
    U = state.U
    K_tilde = problem.data.K_tilde_float
    lap = spectral_laplacian(problem.grid, state.w)
    N = np.asarray(problem.N, dtype=float)
    system_residual = (
        lap
        - problem.lam * _apply(K_tilde, U * _apply(K_tilde, U - 1))
        - (4 * np.pi * N / problem.area)[:, None, None]
    )
    weighted_residual = -euler_lagrange(problem, state)
    return system_residual, weighted_residual


def pde_residual(problem: VortexProblem, state: FunctionalState) -> float:
    """L2 norm of the system residual divided by lam |Omega|^(1/2)."""
    system_residual, _ = residual_fields(problem, state)
    return problem.grid.norm(system_residual) / (problem.lam * math.sqrt(problem.area))


def weighted_residual_consistency(problem: VortexProblem, state: FunctionalState) -> float:
    """max |A r - r_A| over the two residual forms, relative to the largest term of r_A."""
    system_residual, weighted_residual = residual_fields(problem, state)
    U = state.U
    scale = max(
        float(np.max(np.abs(_apply(problem.data.A_float, spectral_laplacian(problem.grid, state.w))))),
        problem.lam * float(np.max(np.abs(U * _apply(problem.data.Q_float, U - 1)))),
        float(np.max(np.abs(problem.b))) / problem.area,
        1e-300,
    )
    return float(np.max(np.abs(_apply(problem.data.A_float, system_residual) - weighted_residual))) / scale


def envelope_residual(problem: VortexProblem, state: FunctionalState) -> np.ndarray:
    """lam (int U Q (U - 1))_i + b_i, relative to b_i or the size of the integral."""
    U = state.U
    grid = problem.grid
    Q = problem.data.Q_float
    value = problem.lam * grid.integrate(U * _apply(Q, U - 1)) + problem.b
    size = problem.lam * grid.integrate(U * _apply(np.abs(Q), U + 1))
    return np.abs(value) / np.maximum(np.maximum(problem.b, size), 1e-300)


# ---------------------------------------------------------------------------
# Descent
# ---------------------------------------------------------------------------

class Preconditioner:
    """Fourier multiplier (|k|^2 A + lam Q)^{-1}, diagonalized by eigh(Q, A)."""

    def __init__(self, problem: VortexProblem):
        mu, W = scipy.linalg.eigh(problem.data.Q_float, problem.data.A_float)
        self.W = W
        self.denominator = problem.grid.k_squared[None] + problem.lam * mu[:, None, None]

    def apply(self, g: np.ndarray) -> np.ndarray:
        transformed = np.fft.fft2(g, axes=(-2, -1))
        modal = np.einsum("ji,jmn->imn", self.W, transformed) / self.denominator
        modal[:, 0, 0] = 0.0
        return np.fft.ifft2(np.einsum("ij,jmn->imn", self.W, modal), axes=(-2, -1)).real


class _Identity:
    def apply(self, g: np.ndarray) -> np.ndarray:
        return g


@dataclass(frozen=True, eq=False)
class MinimizationResult:
    problem: VortexProblem
    state: FunctionalState
    outcome: str
    iterations: int
    grad_norm: float
    grad_tolerance: float
    history: Tuple[float, ...] = ()
    boundary_margins: Optional[np.ndarray] = None
    seed: str = "zero"
    seed_note: str = ""
    stop_rule: str = ""

    @property
    def converged(self) -> bool:
        return self.outcome == OUTCOME_CONVERGED

    @property
    def w(self) -> np.ndarray:
        return self.state.w

    @property
    def v(self) -> np.ndarray:
        return self.state.v

    @property
    def c(self) -> np.ndarray:
        return self.state.c

    @property
    def t(self) -> np.ndarray:
        return self.state.t

    @property
    def J(self) -> float:
        return self.state.J


@dataclass
class _DescentEnd:
    state: FunctionalState
    outcome: str
    iterations: int
    grad_norm: float
    history: List[float]
    boundary_margins: Optional[np.ndarray] = None
    stop_rule: str = ""


def _descend(problem: VortexProblem, state: FunctionalState, options: DescentOptions) -> _DescentEnd:
    """Preconditioned descent with BB steps and Armijo backtracking.

    Stops on the gradient test, or when no step changes J beyond round-off.
    The second stop counts as convergence only if the PDE residual is within
    pde_tol; otherwise the outcome is ``stalled`` (or ``lambda_too_small`` if
    the line search ran into the admissibility boundary).
    """
    grid = problem.grid
    tolerance = options.g_tol * math.sqrt(problem.area)
    preconditioner = Preconditioner(problem) if options.precondition else _Identity()

    grad = gradient_J(problem, state)
    grad_norm = grid.norm(grad)
    history = [state.J]
    previous: Optional[Tuple[np.ndarray, np.ndarray]] = None
    boundary_margins = None

    for iteration in range(options.max_iterations + 1):
        if grad_norm <= tolerance:
            return _DescentEnd(state, OUTCOME_CONVERGED, iteration, grad_norm, history, stop_rule=STOP_GRADIENT)
        if iteration == options.max_iterations:
            break

        direction = -preconditioner.apply(grad)
        slope = grid.inner(grad, direction)
        if slope >= 0:
            direction, slope = -grad, -grad_norm ** 2

        step = 1.0
        if previous is not None:
            s = state.w - previous[0]
            y = grad - previous[1]
            sy = grid.inner(s, y)
            yPy = grid.inner(y, preconditioner.apply(y))
            if sy > 0 and yPy > 0:
                step = min(max(sy / yPy, options.min_step), options.max_step)

        accepted = None
        hit_boundary = False
        while step >= options.min_step:
            trial_w = grid.project_mean_zero(state.w + step * direction)
            try:
                trial = functional_J(problem, trial_w, options.m_min)
            except ConstraintSolverError as exc:
                logger.debug(f"iteration {iteration}: constraint solve failed at step {step:.3g}: {exc}")
                step *= options.shrink
                continue
            if not trial.admissible:
                hit_boundary = True
                boundary_margins = trial.margins
                step *= options.shrink
                continue
            if trial.J <= state.J + options.armijo * step * slope:
                accepted = (trial, gradient_J(problem, trial))
                break
            # inside the round-off floor J cannot rank the trial; the gradient can
            if trial.J <= state.J and state.J - trial.J <= ROUND_OFF_FLOOR * max(1.0, abs(state.J)):
                trial_grad = gradient_J(problem, trial)
                if grid.norm(trial_grad) < grad_norm:
                    accepted = (trial, trial_grad)
                    break
            step *= options.shrink

        if accepted is None:
            residual = pde_residual(problem, state)
            if residual <= options.pde_tol:
                logger.info(
                    f"round-off floor reached at iteration {iteration}: |grad|={grad_norm:.3e}, "
                    f"pde residual {residual:.3e} <= {options.pde_tol:g}"
                )
                return _DescentEnd(state, OUTCOME_CONVERGED, iteration, grad_norm, history, stop_rule=STOP_ROUND_OFF)
            outcome = OUTCOME_LAMBDA_TOO_SMALL if hit_boundary else OUTCOME_STALLED
            logger.warning(f"line search failed at iteration {iteration}: {outcome}, pde residual {residual:.3e}")
            return _DescentEnd(
                state, outcome, iteration, grad_norm, history,
                boundary_margins=boundary_margins if hit_boundary else None,
            )

        previous = (state.w, grad)
        state, grad = accepted
        grad_norm = grid.norm(grad)
        history.append(state.J)
        if options.log_every and iteration % options.log_every == 0:
            logger.debug(f"iteration {iteration}: J={state.J:.12g} |grad|={grad_norm:.3e} step={step:.3g}")

    return _DescentEnd(state, OUTCOME_NOT_CONVERGED, options.max_iterations, grad_norm, history)


def tarantello_seed(
    problem: VortexProblem,
    mu_factor: float = 100.0,
    descent: Optional[DescentOptions] = None,
) -> np.ndarray:
    """Mean-zero seed assembled from independent single-equation solutions.

    Index i solves Lap v = mu e^{u0_i+v}(e^{u0_i+v} - 1) + 4 pi N_i / |Omega|
    at mu = mu_factor * 16 pi N_i / |Omega|.
    """
    scalar_data = load_cartan_data(AlgebraSpec("A", 1))
    seed = problem.zero()
    for i in range(problem.n):
        N_i = problem.N[i]
        if N_i == 0:
            continue
        mu = mu_factor * 16 * np.pi * N_i / problem.area
        scalar = VortexProblem(
            data=scalar_data,
            grid=problem.grid,
            vortices=problem.vortices.restricted(i),
            lam=mu,
            sigma=problem.sigma,
            constraint_method="auto",
        )
        try:
            result = minimize(scalar, SolverConfig(descent=descent or DescentOptions()))
        except (NonConvergenceError, InadmissibleError, ExponentRangeError, ConstraintSolverError) as exc:
            raise SeedError(f"scalar problem for index {i + 1} failed: {exc}") from exc
        if not result.converged:
            raise SeedError(f"scalar problem for index {i + 1} ended with {result.outcome}")
        seed[i] = problem.grid.project_mean_zero(result.v[0])

    a, aM = integrals_of(problem.grid, exponentials(problem.background, seed))
    if np.any(aM >= 2 * problem.area):
        raise SeedError(
            f"seed integrals max a_ij = {aM.max():.6g} are not below 2|Omega| = {2 * problem.area:g}"
        )
    logger.info(f"tarantello seed built, a = {np.array2string(a, precision=6)}")
    return seed


def minimize(
    problem: VortexProblem,
    config: Optional[SolverConfig] = None,
    seed: Optional[np.ndarray] = None,
) -> MinimizationResult:
    """Descend J from the configured seed.

    Converged means the gradient fell below g_tol |Omega|^(1/2), or descent
    reached the round-off floor of J with the PDE residual within pde_tol
    (``stop_rule`` tells which).
    """
    config = config or SolverConfig()
    if not problem.lam > problem.lambda0:
        raise NecessaryConditionError(
            f"lambda = {problem.lam:.10g} does not exceed lambda_0 = {problem.lambda0:.10g}; no solution exists"
        )
    logger.info(f"minimize {problem.data.label}: lambda={problem.lam:.6g} (lambda_0={problem.lambda0:.6g}), N={problem.N}")

    seed_kind = "zero" if seed is None else "given"
    seed_note = ""
    if seed is None and config.seed.kind == "tarantello":
        try:
            seed = tarantello_seed(problem, config.seed.mu_factor, config.descent)
            seed_kind = "tarantello"
        except SeedError as exc:
            logger.warning(f"tarantello seed failed, falling back to w = 0: {exc}")
            seed_note = str(exc)
    if seed is None:
        seed = problem.zero()

    state = functional_J(problem, seed, config.descent.m_min)
    if not state.admissible and seed_kind != "zero":
        logger.warning(f"{seed_kind} seed is not admissible, falling back to w = 0")
        seed_note = seed_note or f"{seed_kind} seed not admissible: {state.reason}"
        seed_kind = "zero"
        state = functional_J(problem, problem.zero(), config.descent.m_min)
    if not state.admissible:
        raise InadmissibleError(
            f"seed is not admissible at lambda = {problem.lam:.6g}: margins {np.array2string(state.margins, precision=4)}"
        )

    end = _descend(problem, state, config.descent)
    logger.info(f"minimize {problem.data.label}: {end.outcome} after {end.iterations} iterations, J={end.state.J:.12g}")
    return MinimizationResult(
        problem=problem,
        state=end.state,
        outcome=end.outcome,
        iterations=end.iterations,
        grad_norm=end.grad_norm,
        grad_tolerance=config.descent.g_tol * math.sqrt(problem.area),
        history=tuple(end.history),
        boundary_margins=end.boundary_margins,
        seed=seed_kind,
        seed_note=seed_note,
        stop_rule=end.stop_rule,
    )


# ---------------------------------------------------------------------------
# Empirical sufficiency threshold
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProbeResult:
    lam_low: float
    lam_high: float
    estimate: Optional[float]
    evaluations: Tuple[Tuple[float, Optional[MinimizationResult], str], ...]


def _attempt(problem: VortexProblem, config: SolverConfig) -> Tuple[Optional[MinimizationResult], str]:
    try:
        result = minimize(problem, config)
    except (NecessaryConditionError, InadmissibleError, ConstraintSolverError, ExponentRangeError) as exc:
        return None, exc.code
    return result, result.outcome


def smallest_convergent_coupling(
    problem: VortexProblem,
    lam_low: float,
    lam_high: float,
    config: Optional[SolverConfig] = None,
    rtol: float = 1e-2,
    max_evaluations: int = 20,
) -> ProbeResult:
    """Geometric bisection for the smallest lambda in [lam_low, lam_high] where descent converges."""
    if not 0 < lam_low < lam_high:
        raise ConfigurationError(f"need 0 < lam_low < lam_high, got {lam_low}, {lam_high}")
    config = config or SolverConfig()
    evaluations: List[Tuple[float, Optional[MinimizationResult], str]] = []

    result, outcome = _attempt(problem.with_lambda(lam_high), config)
    evaluations.append((lam_high, result, outcome))
    if result is None or not result.converged:
        logger.warning(f"no convergence at the top of the range lambda={lam_high:.6g}")
        return ProbeResult(lam_low, lam_high, None, tuple(evaluations))

    low, high = lam_low, lam_high
    while high / low - 1 > rtol and len(evaluations) < max_evaluations:
        mid = math.sqrt(low * high)
        result, outcome = _attempt(problem.with_lambda(mid), config)
        evaluations.append((mid, result, outcome))
        if result is not None and result.converged:
            high = mid
        else:
            low = mid
    logger.info(f"smallest convergent coupling in [{low:.6g}, {high:.6g}]")
    return ProbeResult(lam_low, lam_high, high, tuple(evaluations))
