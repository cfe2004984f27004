"""Helpers shared by the command modules."""

from pathlib import Path
from typing import Optional

from csh_vortex.app.errors import ConfigParseError
from csh_vortex.app.schemas.config import RunConfig, parse_config
from csh_vortex.app.services.lie_cartan import CartanData, load_cartan_data
from csh_vortex.app.services.minimizer import DescentOptions, SeedOptions, SolverConfig, VortexProblem
from csh_vortex.app.services.torus_field import TorusGrid, VortexConfiguration


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def require_lambda(config: RunConfig) -> float:
    if config.lam is None:
        raise ConfigParseError("lambda: required for this command")
    return config.lam


def torus_grid(config: RunConfig) -> TorusGrid:
    return TorusGrid(config.domain.L1, config.domain.L2, config.grid.M1, config.grid.M2)


def cartan_data(config: RunConfig) -> CartanData:
    return load_cartan_data(config.algebra.to_spec())


def build_problem(config: RunConfig, lam: float, data: Optional[CartanData] = None) -> VortexProblem:
    resolved = config.resolved()
    grid = torus_grid(resolved)
    return VortexProblem(
        data=data or cartan_data(resolved),
        grid=grid,
        vortices=VortexConfiguration.create(grid, resolved.sites()),
        lam=lam,
        sigma=resolved.sigma,
        constraint_method=resolved.constraints.method,
    )


def solver_config(config: RunConfig) -> SolverConfig:
    tol = config.tolerances
    return SolverConfig(
        descent=DescentOptions(
            g_tol=tol.g_tol, max_iterations=tol.max_iterations, pde_tol=tol.pde, m_min=tol.m_min,
        ),
        seed=SeedOptions(kind=config.seed.kind, mu_factor=config.seed.mu_factor),
    )
