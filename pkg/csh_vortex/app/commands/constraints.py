"""``constraints``: resolve the constants for given integral coefficients."""

import logging
from pathlib import Path

import numpy as np

from csh_vortex.app.errors import ConfigParseError, ConstraintInfeasibleError
from csh_vortex.app.schemas.config import RunConfig
from csh_vortex.app.schemas.reports import ConstraintReport
from csh_vortex.app.services import constraint_solver as svc
from csh_vortex.app.services.lie_cartan import float_vector, vortex_vector_b
from csh_vortex.app.services.torus_field import VortexConfiguration, background, coefficients_a
from csh_vortex.app.storage.writer import write_report
from csh_vortex.app.commands.common import cartan_data, require_lambda, torus_grid

logger = logging.getLogger(__name__)


def _coefficients(config: RunConfig):
    """Explicit (a, aM) from the config, or the integrals at w = 0 of the configured vortices."""
    given = config.constraints
    if (given.a is None) != (given.aM is None):
        raise ConfigParseError("constraints: give both a and aM or neither")
    if given.a is not None:
        return np.array(given.a, dtype=float), np.array(given.aM, dtype=float)
    resolved = config.resolved()
    grid = torus_grid(resolved)
    bg = background(grid, VortexConfiguration.create(grid, resolved.sites()), resolved.sigma)
    return coefficients_a(bg, np.zeros((bg.n, grid.M1, grid.M2)))


def run_constraints(config: RunConfig, out_dir: Path) -> int:
    lam = require_lambda(config)
    resolved = config.resolved()
    data = cartan_data(resolved)
    N = resolved.constraints.N if resolved.constraints.N is not None else resolved.multiplicities()
    b = float_vector(vortex_vector_b(data, N))
    a, aM = _coefficients(resolved)
    inp = svc.ConstraintInput(data, a, aM, b, lam, resolved.domain.area)

    margins = svc.admissible(inp)
    report = ConstraintReport(
        algebra=data.label,
        method=resolved.constraints.method,
        lam=lam,
        margins=margins.tolist(),
        admissible=svc.is_admissible(inp),
        t=[],
        c=[],
        residual=float("nan"),
        lower_bound=svc.lower_bound(inp).tolist(),
        box_margins=[],
        iterations=0,
        monotone=False,
        config=resolved.dump(),
    )
    if not report.admissible:
        write_report(report, out_dir, "constraints")
        raise ConstraintInfeasibleError(f"inadmissible coefficients, margins {margins.tolist()}")

    solution = svc.resolve_constraints(inp, resolved.constraints.method)
    report = report.model_copy(update={
        "method": solution.method,
        "t": solution.t.tolist(),
        "c": solution.c.tolist(),
        "residual": solution.residual,
        "box_margins": svc.box_margins(inp, solution.t).tolist(),
        "iterations": solution.iterations,
        "monotone": solution.monotone,
        "trace": list(solution.trace),
    })
    write_report(report, out_dir, "constraints")
    print(report.model_dump_json(indent=2, exclude={"config"}))
    logger.info(f"constraints: {solution.method} t={solution.t.tolist()} residual={solution.residual:.3g}")
    return 0
