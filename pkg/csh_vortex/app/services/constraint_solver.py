"""Resolution of the coupled quadratic constraints for t_i = e^{c_i}.

Substituting v = w + c into the natural constraint
lambda * (int U Q (U - 1))_i + b_i = 0 gives, per component,

    D_i t_i^2 - B_i(t) t_i + C_i = 0,
    D_i = R_i^2 S_ii a_ii,
    B_i(t) = R_i a_i / P_i + sum_{j != i} M_ij t_j,  M_ij = -R_i R_j S_ij a_ij >= 0,
    C_i = b_i / lambda,

with a_i, a_ij the integrals of the exponentials of u0 + w. Every solver
takes the "+" root of each quadratic.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.optimize

from csh_vortex.app.config import get_settings
from csh_vortex.app.errors import (
    ConstraintInfeasibleError,
    ConstraintInputError,
    ConstraintSolverError,
)
from csh_vortex.app.services.lie_cartan import AlgebraSpec, CartanData, cartan_matrix

logger = logging.getLogger(__name__)

FIXED_POINT_TOL = 1e-13
RESIDUAL_TOL = 1e-10
MARGIN_TOL = 1e-12
BOX_TOL = 1e-10
NEWTON_MAX_ITERATIONS = 60
EPSILON_STEPS = 10

METHODS = ("auto", "homotopy", "squeeze", "closed_form")


# ---------------------------------------------------------------------------
# Input and solution records
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConstraintInput:
    data: CartanData
    a: np.ndarray
    aM: np.ndarray
    b: np.ndarray
    lam: float
    area: float = 1.0

    def __post_init__(self):
        n = self.data.n
        a = np.asarray(self.a, dtype=float)
        aM = np.asarray(self.aM, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.shape != (n,) or b.shape != (n,) or aM.shape != (n, n):
            raise ConstraintInputError(
                f"expected a, b of length {n} and aM of shape {n}x{n}, "
                f"got {a.shape}, {b.shape}, {aM.shape}"
            )
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(aM)) and np.all(np.isfinite(b))):
            raise ConstraintInputError("coefficients must be finite")
        if np.any(a <= 0) or np.any(aM <= 0):
            raise ConstraintInputError("a and aM must be positive")
        if not np.allclose(aM, aM.T, rtol=1e-12, atol=0.0):
            raise ConstraintInputError("aM must be symmetric")
        if np.any(b < 0):
            raise ConstraintInputError("b must be non-negative")
        if not self.lam > 0:
            raise ConstraintInputError(f"lambda must be positive, got {self.lam}")
        if not self.area > 0:
            raise ConstraintInputError(f"domain area must be positive, got {self.area}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "aM", aM)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.data.n

    @cached_property
    def Qa(self) -> np.ndarray:
        """Q o aM, the entrywise weighted Q (the matrix of the linear problem)."""
        return self.data.Q_float * self.aM

    @cached_property
    def D(self) -> np.ndarray:
        return np.diag(self.Qa).copy()

    @cached_property
    def M(self) -> np.ndarray:
        M = -self.Qa
        np.fill_diagonal(M, 0.0)
        return M

    @cached_property
    def base(self) -> np.ndarray:
        return self.data.R_float * self.a / self.data.P_float

    @cached_property
    def C(self) -> np.ndarray:
        return self.b / self.lam


@dataclass(frozen=True, eq=False)
class ConstraintSolution:
    t: np.ndarray
    residual: float
    method: str
    iterations: int = 0
    monotone: bool = True
    trace: Tuple[str, ...] = ()

    @property
    def c(self) -> np.ndarray:
        return np.log(self.t)


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

def q_tilde(inp: ConstraintInput) -> np.ndarray:
    return inp.Qa


def admissible(inp: ConstraintInput) -> np.ndarray:
    """Margins m_i = a_i^2 / a_ii - 4 S_ii P_i^2 b_i / lambda.

    Each m_i is the discriminant of component i at t_j = 0 (j != i) up to a
    positive factor; the input is admissible iff every margin is >= 0.
    """
    S_diag = np.diag(inp.data.S_float)
    return inp.a ** 2 / np.diag(inp.aM) - 4 * S_diag * inp.data.P_float ** 2 * inp.b / inp.lam


def is_admissible(inp: ConstraintInput) -> bool:
    return bool(np.all(_scaled_margins(inp) >= -MARGIN_TOL))


def _scaled_margins(inp: ConstraintInput) -> np.ndarray:
    return admissible(inp) / (inp.a ** 2 / np.diag(inp.aM))


def _require_admissible(inp: ConstraintInput) -> None:
    scaled = _scaled_margins(inp)
    if np.any(scaled < -MARGIN_TOL):
        worst = int(np.argmin(scaled))
        raise ConstraintInfeasibleError(
            f"inadmissible coefficients: margin of index {worst + 1} is {admissible(inp)[worst]:.6g}"
        )


def _discriminant(inp: ConstraintInput, eps: float, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    B = inp.base + inp.M @ t
    disc = B ** 2 - 4 * eps * inp.C * inp.D
    if np.any(disc < -MARGIN_TOL * B ** 2):
        i = int(np.argmin(disc / B ** 2))
        raise ConstraintInfeasibleError(f"negative discriminant {disc[i]:.6g} at index {i + 1}")
    return B, np.maximum(disc, 0.0)


def f_map(inp: ConstraintInput, eps: float, t: np.ndarray) -> np.ndarray:
    """Componentwise "+" root with the other components frozen at t."""
    t = np.asarray(t, dtype=float)
    B, disc = _discriminant(inp, eps, t)
    return (B + np.sqrt(disc)) / (2 * inp.D)


def f_jacobian(inp: ConstraintInput, eps: float, t: np.ndarray) -> np.ndarray:
    """d f_i / d t_j = f_i / sqrt(disc_i) * M_ij; singular where a discriminant vanishes."""
    t = np.asarray(t, dtype=float)
    B, disc = _discriminant(inp, eps, t)
    f = (B + np.sqrt(disc)) / (2 * inp.D)
    root = np.sqrt(np.maximum(disc, np.finfo(float).tiny))
    return (f / root)[:, None] * inp.M


def linear_start(inp: ConstraintInput) -> np.ndarray:
    """The eps = 0 solution: Q o aM t = P^{-1} R a."""
    try:
        factor = scipy.linalg.cho_factor(inp.Qa)
    except scipy.linalg.LinAlgError as exc:
        raise ConstraintSolverError(
            "weighted Q is not positive definite; the integrals violate the Hoelder inequalities"
        ) from exc
    t0 = scipy.linalg.cho_solve(factor, inp.base)
    if np.any(t0 <= 0):
        raise ConstraintSolverError(f"linear start is not positive: {t0}")
    return t0


def lower_bound(inp: ConstraintInput) -> np.ndarray:
    """a_i / (2 P_i R_i alpha_ii a_ii), a floor for every "+" root."""
    alpha_diag = np.diag(inp.data.S_float)
    return inp.a / (2 * inp.data.P_float * inp.data.R_float * alpha_diag * np.diag(inp.aM))


def box_margins(inp: ConstraintInput, t: np.ndarray) -> np.ndarray:
    """min(1 - t_i, (|Omega| - a_i t_i) / |Omega|); non-negative inside the a-priori box."""
    t = np.asarray(t, dtype=float)
    return np.minimum(1.0 - t, (inp.area - inp.a * t) / inp.area)


def constraint_residual(inp: ConstraintInput, t: np.ndarray) -> np.ndarray:
    """Per-component |D t^2 - B t + C| relative to its largest term."""
    t = np.asarray(t, dtype=float)
    B = inp.base + inp.M @ t
    quad = inp.D * t ** 2
    lin = B * t
    scale = np.maximum.reduce([np.abs(quad), np.abs(lin), np.abs(inp.C)])
    return np.abs(quad - lin + inp.C) / scale


def _certify(
    inp: ConstraintInput,
    t: np.ndarray,
    method: str,
    iterations: int,
    monotone: bool = True,
    trace: Optional[List[str]] = None,
) -> ConstraintSolution:
    trace = list(trace or [])
    residual = float(np.max(constraint_residual(inp, t)))
    if residual > RESIDUAL_TOL:
        raise ConstraintSolverError(
            f"{method}: residual {residual:.3g} exceeds {RESIDUAL_TOL:g}; trace: {'; '.join(trace)}"
        )
    if np.any(t <= 0):
        raise ConstraintSolverError(f"{method}: non-positive solution {t}")
    box = box_margins(inp, t)
    if np.any(box < -BOX_TOL):
        raise ConstraintSolverError(f"{method}: solution leaves the a-priori box, margins {box}")
    floor = lower_bound(inp)
    if np.any(t < floor * (1 - BOX_TOL)):
        raise ConstraintSolverError(f"{method}: solution below the lower bound {floor}")
    return ConstraintSolution(
        t=np.asarray(t, dtype=float),
        residual=residual,
        method=method,
        iterations=iterations,
        monotone=monotone,
        trace=tuple(trace),
    )


# ---------------------------------------------------------------------------
# General solver: linear start, monotone Picard, Newton and eps-stepping
# ---------------------------------------------------------------------------

def _newton(inp: ConstraintInput, t0: np.ndarray, eps: float) -> Optional[Tuple[np.ndarray, int]]:
    t = np.array(t0, dtype=float)
    identity = np.eye(inp.n)
    for k in range(1, NEWTON_MAX_ITERATIONS + 1):
        try:
            F = t - f_map(inp, eps, t)
            if np.max(np.abs(F)) <= FIXED_POINT_TOL:
                return t, k
            jac = identity - f_jacobian(inp, eps, t)
            delta = np.linalg.solve(jac, -F)
        except (ConstraintInfeasibleError, np.linalg.LinAlgError):
            return None
        step = 1.0
        while np.any(t + step * delta <= 0) and step > 1e-12:
            step *= 0.5
        t = t + step * delta
    return None


def _epsilon_stepping(inp: ConstraintInput, t0: np.ndarray) -> Optional[Tuple[np.ndarray, int]]:
    t = np.array(t0, dtype=float)
    total = 0
    for k in range(1, EPSILON_STEPS + 1):
        result = _newton(inp, t, k / EPSILON_STEPS)
        if result is None:
            return None
        t, iterations = result
        total += iterations
    return t, total


def solve_homotopy(
    inp: ConstraintInput,
    theta: float = 1.0,
    max_iterations: Optional[int] = None,
) -> ConstraintSolution:
    """Fixed point of t = f(1, t) reached from the eps = 0 solution.

    With theta = 1 the iterates decrease componentwise and stay above
    ``lower_bound``; the limit is the largest solution below the start.
    """
    _require_admissible(inp)
    if not 0 < theta <= 1:
        raise ConstraintInputError(f"damping must lie in (0, 1], got {theta}")
    if max_iterations is None:
        max_iterations = get_settings().picard_max_iterations

    t = linear_start(inp)
    floor = lower_bound(inp)
    trace = [f"linear start {np.array2string(t, precision=6)}"]
    monotone = True

    for k in range(1, max_iterations + 1):
        ft = f_map(inp, 1.0, t)
        step = ft - t
        if np.max(np.abs(step)) <= FIXED_POINT_TOL:
            trace.append(f"picard converged in {k} iterations")
            return _certify(inp, ft, "homotopy", k, monotone, trace)
        new = t + theta * step
        if theta == 1.0 and (np.any(new > t * (1 + 1e-14)) or np.any(new < floor * (1 - 1e-12))):
            monotone = False
        t = new

    logger.warning(f"picard did not reach {FIXED_POINT_TOL:g} in {max_iterations} iterations, trying newton")
    trace.append(f"picard stopped after {max_iterations} iterations")
    result = _newton(inp, t, 1.0)
    if result is not None:
        trace.append(f"newton converged in {result[1]} iterations")
        return _certify(inp, result[0], "homotopy", max_iterations + result[1], monotone, trace)

    logger.warning("newton failed, falling back to eps-stepping")
    trace.append("newton failed")
    result = _epsilon_stepping(inp, linear_start(inp))
    if result is not None:
        trace.append(f"eps-stepping converged in {result[1]} newton iterations")
        return _certify(inp, result[0], "homotopy", max_iterations + result[1], monotone, trace)

    trace.append("eps-stepping failed")
    raise ConstraintSolverError("constraint system not resolved: " + "; ".join(trace))


# ---------------------------------------------------------------------------
# SU(4): reduction to a scalar equation in t_2
# ---------------------------------------------------------------------------

def _require_a3(inp: ConstraintInput) -> None:
    if inp.n != 3 or inp.data.K != cartan_matrix(AlgebraSpec("A", 3)):
        raise ConstraintInputError(f"the squeeze method needs the A3 Cartan matrix, got {inp.data.label}")


def _outer(inp: ConstraintInput, t2: float) -> Tuple[float, float]:
    """t_1 and t_3 as functions of t_2 (their equations only couple to index 2)."""
    f = f_map(inp, 1.0, np.array([0.0, t2, 0.0]))
    return float(f[0]), float(f[2])


def squeeze_function(inp: ConstraintInput) -> Callable[[float], float]:
    """F(t) = t - f_2(f_1(t), f_3(t)); its positive zero is t_2."""
    _require_a3(inp)

    def F(t: float) -> float:
        t1, t3 = _outer(inp, t)
        return t - float(f_map(inp, 1.0, np.array([t1, 0.0, t3]))[1])

    return F


def _squeeze_derivative(inp: ConstraintInput, t: float) -> float:
    t1, t3 = _outer(inp, t)
    inner = f_jacobian(inp, 1.0, np.array([0.0, t, 0.0]))
    outer = f_jacobian(inp, 1.0, np.array([t1, 0.0, t3]))
    return 1.0 - outer[1, 0] * inner[0, 1] - outer[1, 2] * inner[2, 1]


def squeeze_limits(inp: ConstraintInput) -> Tuple[float, float, float]:
    """Limits of f_1(t)/t, f_3(t)/t and F(t)/t as t grows without bound."""
    _require_a3(inp)
    D, M = inp.D, inp.M
    l1 = M[0, 1] / D[0]
    l3 = M[2, 1] / D[2]
    return l1, l3, 1.0 - (M[1, 0] * l1 + M[1, 2] * l3) / D[1]


def solve_squeeze(inp: ConstraintInput, r0: Optional[float] = None) -> ConstraintSolution:
    _require_admissible(inp)
    if r0 is None:
        r0 = get_settings().box_radius
    F = squeeze_function(inp)
    left, right = F(0.0), F(r0)
    if not (left < 0 < right):
        raise ConstraintSolverError(f"no sign change of F on [0, {r0}]: F(0)={left:.6g}, F(r0)={right:.6g}")

    t2, info = scipy.optimize.bisect(F, 0.0, r0, xtol=1e-12, full_output=True)
    iterations = info.iterations
    try:
        polished = scipy.optimize.newton(
            F, t2, fprime=lambda x: _squeeze_derivative(inp, x), tol=1e-15, maxiter=20,
        )
        if 0 < polished <= r0 and abs(F(polished)) <= abs(F(t2)):
            t2 = polished
    except (RuntimeError, ConstraintInfeasibleError):
        logger.debug("newton polish failed, keeping the bisection root")

    t1, t3 = _outer(inp, t2)
    return _certify(inp, np.array([t1, t2, t3]), "squeeze", iterations)


# ---------------------------------------------------------------------------
# Rank one and dispatch
# ---------------------------------------------------------------------------

def scalar_closed_form(inp: ConstraintInput) -> ConstraintSolution:
    if inp.n != 1:
        raise ConstraintInputError(f"closed form needs rank 1, got rank {inp.n}")
    _require_admissible(inp)
    t = f_map(inp, 1.0, np.zeros(1))
    return _certify(inp, t, "scalar_closed_form", 0)


def resolve_constraints(inp: ConstraintInput, method: Optional[str] = None) -> ConstraintSolution:
    if method is None:
        method = get_settings().constraint_method
    if method not in METHODS:
        raise ConstraintInputError(f"unknown constraint method {method!r}; expected one of {', '.join(METHODS)}")
    if method == "auto":
        method = "closed_form" if inp.n == 1 else "homotopy"
    if method == "closed_form":
        return scalar_closed_form(inp)
    if method == "squeeze":
        return solve_squeeze(inp)
    return solve_homotopy(inp)
