"""``sweep`` and ``probe``: runs over a range of couplings."""

import logging
from pathlib import Path

from csh_vortex.app.errors import ConfigParseError
from csh_vortex.app.schemas.config import RunConfig
from csh_vortex.app.services import diagnostics
from csh_vortex.app.services import minimizer as svc
from csh_vortex.app.storage.writer import write_report, write_sweep_csv
from csh_vortex.app.commands.common import build_problem, solver_config

logger = logging.getLogger(__name__)


def run_sweep(config: RunConfig, out_dir: Path) -> int:
    if config.sweep is None:
        raise ConfigParseError("sweep: section required for this command")
    resolved = config.resolved()
    lams = resolved.sweep.values()
    problem = build_problem(resolved, lams[0])

    report = diagnostics.asymptotic_sweep(problem, lams, solver_config(resolved), run_config=resolved.dump())
    write_report(report, out_dir, "sweep")
    write_sweep_csv(report, out_dir)
    converged = sum(1 for row in report.rows if row.converged)
    print(f"sweep: {converged}/{len(report.rows)} converged, lambda_0={report.lambda0:.6g}")
    return 0


def run_probe(config: RunConfig, out_dir: Path) -> int:
    if config.probe is None:
        raise ConfigParseError("probe: section required for this command")
    resolved = config.resolved()
    probe = resolved.probe
    problem = build_problem(resolved, probe.lambda_high)

    result = svc.smallest_convergent_coupling(
        problem,
        probe.lambda_low,
        probe.lambda_high,
        solver_config(resolved),
        rtol=probe.rtol,
        max_evaluations=probe.max_evaluations,
    )
    report = diagnostics.build_probe_report(result, problem.lambda0, resolved.dump())
    write_report(report, out_dir, "probe")
    print(f"probe: lambda_1 estimate {report.lambda1_estimate} (lambda_0={report.lambda0:.6g})")
    return 0
