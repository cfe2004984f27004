"""Checks on solver output and lambda sweeps."""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from csh_vortex.app.config import get_settings
from csh_vortex.app.errors import ConfigurationError, CshError
from csh_vortex.app.schemas.reports import (
    InterpolationCheck,
    NecessaryCheck,
    ProbeReport,
    QuantizedIntegral,
    SolveReport,
    SweepReport,
    SweepRow,
)
from csh_vortex.app.services.constraint_solver import (
    RESIDUAL_TOL,
    ConstraintInput,
    box_margins,
)
from csh_vortex.app.services.lie_cartan import (
    CartanData,
    coercivity_constants,
    lambda_threshold,
)
from csh_vortex.app.services.minimizer import (
    FunctionalState,
    MinimizationResult,
    ProbeResult,
    SolverConfig,
    VortexProblem,
    weighted_residual_consistency,
    envelope_residual,
    minimize,
    pde_residual,
)
from csh_vortex.app.services.torus_field import exponentials, integrals_of

logger = logging.getLogger(__name__)

QUANTIZED_TOL = 1e-4
PDE_TOL = 1e-6
IDENTITY_TOL = 1e-8
ASYMPTOTIC_FRACTION = 1e-2


def check_necessary(lam: float, data: CartanData, N: Sequence[int], area: float) -> NecessaryCheck:
    lambda0 = lambda_threshold(data, N, area)
    return NecessaryCheck(lam=lam, lambda0=lambda0, passed=lam > lambda0)


def quantized_integrals(
    problem: VortexProblem,
    state: FunctionalState,
    tolerance: float = QUANTIZED_TOL,
) -> List[QuantizedIntegral]:
    """int (sum_j K_ji e^{u_j} - sum_jk K_kj K_ji e^{u_j} e^{u_k}) against 4 pi N_i / lam."""
    K = problem.data.K_float
    e_u = problem.data.R_float[:, None, None] * state.U
    linear = np.einsum("ji,jmn->imn", K, e_u)
    inner = np.einsum("kj,kmn->jmn", K, e_u)
    quadratic = np.einsum("ji,jmn->imn", K, e_u * inner)
    values = problem.grid.integrate(linear - quadratic)

    reports = []
    for i, value in enumerate(values):
        target = 4 * np.pi * problem.N[i] / problem.lam
        scale = max(target, 4 * np.pi / problem.lam)
        error = abs(float(value) - target) / scale
        reports.append(QuantizedIntegral(
            index=i + 1,
            value=float(value),
            target=target,
            relative_error=error,
            tolerance=tolerance,
            passed=error <= tolerance,
        ))
    return reports


def asymptotic_distance(problem: VortexProblem, state: FunctionalState) -> np.ndarray:
    """d_i = int (e^{u_i} - R_i)^2 in the original variables."""
    R = problem.data.R_float
    return R ** 2 * problem.grid.integrate((state.U - 1) ** 2)


def identity_residuals(problem: VortexProblem, state: FunctionalState) -> Dict[str, float]:
    """Relative residuals of the summed natural constraint and its completed-square form."""
    grid = problem.grid
    Q = problem.data.Q_float
    U = state.U
    b_sum = float(problem.b.sum())

    summed = grid.inner(U, np.einsum("ij,jmn->imn", Q, U - 1)) + b_sum / problem.lam
    summed_scale = max(b_sum / problem.lam, grid.inner(U, np.einsum("ij,jmn->imn", np.abs(Q), U + 1)))

    weights = float((problem.data.R_float / problem.data.P_float).sum())
    rhs = problem.area / 4 * weights - b_sum / problem.lam
    lhs = grid.inner(U - 0.5, np.einsum("ij,jmn->imn", Q, U - 0.5))
    squared_scale = max(abs(rhs), problem.area / 4 * weights)

    return {
        "summed_constraint": abs(summed) / summed_scale,
        "completed_square": abs(lhs - rhs) / squared_scale,
    }


def interpolation_check(problem: VortexProblem, w: np.ndarray, s: float, index: int) -> InterpolationCheck:
    """Log margin of int e^{u0+w} <= (lam / (4 P^2 b alpha))^{(1-s)/s} (int e^{s(u0+w)})^{1/s}.

    ``index`` is 0-based; the report carries it 1-based.
    """
    if not 0 < s <= 1:
        raise ConfigurationError(f"interpolation exponent must lie in (0, 1], got {s}")
    data = problem.data
    b_i = float(problem.b[index])
    exponent = problem.background.u0[index] + w[index]
    lhs = float(problem.grid.integrate(np.exp(exponent)))
    if b_i == 0:
        return InterpolationCheck(index=index + 1, s=s, log_margin=math.inf, passed=True)

    base = problem.lam / (4 * data.P_float[index] ** 2 * b_i * data.S_float[index, index])
    partial = float(problem.grid.integrate(np.exp(s * exponent)))
    log_rhs = (1 - s) / s * math.log(base) + math.log(partial) / s
    margin = log_rhs - math.log(lhs)
    return InterpolationCheck(index=index + 1, s=s, log_margin=margin, passed=margin >= -1e-12)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def build_solve_report(
    result: MinimizationResult,
    config: Optional[Dict[str, Any]] = None,
    quantized_tol: float = QUANTIZED_TOL,
    pde_tol: float = PDE_TOL,
    identity_tol: float = IDENTITY_TOL,
    interpolation_s: Sequence[float] = (),
) -> SolveReport:
    problem, state = result.problem, result.state
    interpolation = [
        interpolation_check(problem, state.w, s, i) for s in interpolation_s for i in range(problem.n)
    ]
    a, aM = integrals_of(problem.grid, exponentials(problem.background, state.w))
    inp = ConstraintInput(problem.data, a, aM, problem.b, problem.lam, problem.area)
    identities = identity_residuals(problem, state)
    alpha0, beta0 = coercivity_constants(problem.data)
    weights = problem.data.R_float / problem.data.P_float

    return SolveReport(
        algebra=problem.data.label,
        lam=problem.lam,
        lambda0=problem.lambda0,
        necessary=check_necessary(problem.lam, problem.data, problem.N, problem.area),
        outcome=result.outcome,
        converged=result.converged,
        stop_rule=result.stop_rule,
        iterations=result.iterations,
        J=state.J,
        c=state.c.tolist(),
        t=state.t.tolist(),
        grad_norm=result.grad_norm,
        grad_tolerance=result.grad_tolerance,
        pde_residual=pde_residual(problem, state),
        pde_tolerance=pde_tol,
        weighted_residual_consistency=weighted_residual_consistency(problem, state),
        constraint_residual=state.constraint.residual,
        constraint_tolerance=RESIDUAL_TOL,
        envelope_residual=envelope_residual(problem, state).tolist(),
        margins=state.margins.tolist(),
        box_margins=box_margins(inp, state.t).tolist(),
        quantized=quantized_integrals(problem, state, quantized_tol),
        asymptotic_distance=asymptotic_distance(problem, state).tolist(),
        summed_constraint_residual=identities["summed_constraint"],
        completed_square_residual=identities["completed_square"],
        identity_tolerance=identity_tol,
        alpha0=alpha0,
        beta0=beta0,
        boundary_estimate=problem.area * problem.lam / 2 * float(weights.min()),
        seed=result.seed,
        seed_note=result.seed_note,
        interpolation=interpolation,
        config=config or {},
    )


def sweep_row(lam: float, result: Optional[MinimizationResult], outcome: str) -> SweepRow:
    if result is None:
        return SweepRow(lam=lam, outcome=outcome)
    problem, state = result.problem, result.state
    return SweepRow(
        lam=lam,
        J=state.J,
        distances=asymptotic_distance(problem, state).tolist(),
        quantized_errors=[q.relative_error for q in quantized_integrals(problem, state)],
        iterations=result.iterations,
        converged=result.converged,
        outcome=result.outcome,
    )


def _sweep_point(problem: VortexProblem, lam: float, config: SolverConfig) -> SweepRow:
    try:
        result = minimize(problem.with_lambda(lam), config)
    except CshError as exc:
        logger.warning(f"sweep point lambda={lam:.6g} failed: {exc}")
        return sweep_row(lam, None, exc.code)
    return sweep_row(lam, result, result.outcome)


def asymptotic_sweep(
    problem: VortexProblem,
    lams: Sequence[float],
    config: Optional[SolverConfig] = None,
    max_workers: Optional[int] = None,
    run_config: Optional[Dict[str, Any]] = None,
) -> SweepReport:
    """Solve at every lambda; a failed point is recorded and the sweep continues."""
    config = config or SolverConfig()
    if max_workers is None:
        max_workers = get_settings().max_workers
    lams = sorted(float(x) for x in lams)

    if max_workers > 1 and len(lams) > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            futures = [pool.submit(_sweep_point, problem, lam, config) for lam in lams]
            rows = [f.result() for f in futures]
    else:
        rows = []
        for lam in lams:
            rows.append(_sweep_point(problem, lam, config))
            logger.info(f"sweep: lambda={lam:.6g} {rows[-1].outcome}")

    converged = [row for row in rows if row.converged]
    monotone: List[bool] = []
    below: List[bool] = []
    R = problem.data.R_float
    for i in range(problem.n):
        d = [row.distances[i] for row in converged]
        monotone.append(all(later < earlier for earlier, later in zip(d, d[1:])))
        below.append(bool(d) and d[-1] < ASYMPTOTIC_FRACTION * R[i] ** 2 * problem.area)
        if not monotone[-1]:
            logger.warning(f"distance of index {i + 1} is not decreasing along the sweep")

    return SweepReport(
        lambda0=problem.lambda0,
        rows=rows,
        monotone=monotone,
        below_threshold=below,
        config=run_config or {},
    )


def build_probe_report(probe: ProbeResult, lambda0: float, config: Optional[Dict[str, Any]] = None) -> ProbeReport:
    return ProbeReport(
        lambda0=lambda0,
        lam_low=probe.lam_low,
        lam_high=probe.lam_high,
        lambda1_estimate=probe.estimate,
        evaluations=[sweep_row(lam, result, outcome) for lam, result, outcome in probe.evaluations],
        config=config or {},
    )
