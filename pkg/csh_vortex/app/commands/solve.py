"""``solve``: one minimization at the configured coupling."""

import logging
from pathlib import Path

from csh_vortex.app.errors import NecessaryConditionError, NonConvergenceError
from csh_vortex.app.schemas.config import RunConfig
from csh_vortex.app.services import diagnostics
from csh_vortex.app.services import minimizer as svc
from csh_vortex.app.storage.writer import write_fields, write_report
from csh_vortex.app.commands.common import build_problem, require_lambda, solver_config

logger = logging.getLogger(__name__)


def run_solve(config: RunConfig, out_dir: Path) -> int:
    lam = require_lambda(config)
    resolved = config.resolved()
    problem = build_problem(resolved, lam)

    necessary = diagnostics.check_necessary(lam, problem.data, problem.N, problem.area)
    if not necessary.passed:
        raise NecessaryConditionError(
            f"lambda = {lam:.10g} <= lambda_0 = {necessary.lambda0:.10g}; no solve attempted"
        )

    result = svc.minimize(problem, solver_config(resolved))
    tol = resolved.tolerances
    report = diagnostics.build_solve_report(
        result,
        config=resolved.dump(),
        quantized_tol=tol.quantized,
        pde_tol=tol.pde,
        identity_tol=tol.identity,
        interpolation_s=resolved.interpolation.s,
    )
    write_report(report, out_dir, "solve")
    if resolved.output.write_fields:
        write_fields(problem.grid, result.v, out_dir, resolved.output.field_format)

    print(
        f"{report.algebra} lambda={report.lam:.6g} outcome={report.outcome} "
        f"iterations={report.iterations} J={report.J:.12g} pde_residual={report.pde_residual:.3g}"
    )
    if not result.converged:
        raise NonConvergenceError(f"descent ended with {result.outcome} after {result.iterations} iterations")
    return 0
