"""Pydantic schemas for the run configuration (one TOML document per run)."""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from csh_vortex.app.config import get_settings
from csh_vortex.app.errors import ConfigParseError, ConfigurationError
from csh_vortex.app.services.lie_cartan import AlgebraSpec


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class AlgebraConfig(_Strict):
    family: Optional[str] = None
    rank: Optional[int] = None
    matrix: Optional[List[List[int]]] = None

    @model_validator(mode="after")
    def _check(self):
        try:
            self.to_spec()
        except ConfigurationError as exc:
            raise ValueError(str(exc)) from exc
        return self

    def to_spec(self) -> AlgebraSpec:
        if self.matrix is not None:
            if self.family is not None or self.rank is not None:
                raise ConfigurationError("give either family/rank or matrix, not both")
            return AlgebraSpec.from_matrix(self.matrix)
        family = self.family.upper() if self.family else None
        return AlgebraSpec(family=family, rank=self.rank)

    @property
    def rank_value(self) -> int:
        return len(self.matrix) if self.matrix is not None else int(self.rank)


class DomainConfig(_Strict):
    L1: float = Field(default=1.0, gt=0)
    L2: float = Field(default=1.0, gt=0)

    @property
    def area(self) -> float:
        return self.L1 * self.L2


class GridConfig(_Strict):
    M1: int = 128
    M2: int = 128

    @field_validator("M1", "M2")
    @classmethod
    def _even(cls, value: int) -> int:
        if value <= 0 or value % 2:
            raise ValueError(f"grid size must be a positive even integer, got {value}")
        return value


class VortexPoint(_Strict):
    index: int = Field(ge=1)
    x: float
    y: float
    multiplicity: int = Field(default=1, ge=1)


class SweepConfig(_Strict):
    lambda_min: float = Field(gt=0)
    lambda_max: float = Field(gt=0)
    count: int = Field(default=5, ge=1)
    spacing: Literal["log", "linear"] = "log"

    @model_validator(mode="after")
    def _ordered(self):
        if self.lambda_max < self.lambda_min:
            raise ValueError("lambda_max must not be below lambda_min")
        if self.count == 1 and self.lambda_max != self.lambda_min:
            raise ValueError("count = 1 needs lambda_min == lambda_max")
        return self

    def values(self) -> List[float]:
        """``count`` values, both endpoints included."""
        if self.spacing == "log":
            return np.geomspace(self.lambda_min, self.lambda_max, self.count).tolist()
        return np.linspace(self.lambda_min, self.lambda_max, self.count).tolist()


class ProbeConfig(_Strict):
    lambda_low: float = Field(gt=0)
    lambda_high: float = Field(gt=0)
    rtol: float = Field(default=1e-2, gt=0)
    max_evaluations: int = Field(default=20, ge=2)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.lambda_low < self.lambda_high:
            raise ValueError("lambda_low must be below lambda_high")
        return self


class ToleranceConfig(_Strict):
    g_tol: float = Field(default=1e-8, gt=0)
    max_iterations: int = Field(default=100_000, ge=0)
    m_min: float = Field(default=0.0, ge=0)
    pde: float = Field(default=1e-6, gt=0)
    quantized: float = Field(default=1e-4, gt=0)
    identity: float = Field(default=1e-8, gt=0)


class SeedConfig(_Strict):
    kind: Literal["zero", "tarantello"] = "zero"
    mu_factor: float = Field(default=100.0, gt=1)


class ConstraintsConfig(_Strict):
    """Coefficients for the standalone ``constraints`` command."""

    a: Optional[List[float]] = None
    aM: Optional[List[List[float]]] = None
    N: Optional[List[int]] = None
    method: Optional[Literal["auto", "homotopy", "squeeze", "closed_form"]] = None


class InterpolationConfig(_Strict):
    s: List[float] = [0.5]

    @field_validator("s")
    @classmethod
    def _unit_interval(cls, values: List[float]) -> List[float]:
        for s in values:
            if not 0 < s <= 1:
                raise ValueError(f"interpolation exponent must lie in (0, 1], got {s}")
        return values


class OutputConfig(_Strict):
    write_fields: bool = False
    field_format: Literal["csv", "binary"] = "csv"


class CatalogConfig(_Strict):
    types: List[str] = []


class RunConfig(_Strict):
    algebra: AlgebraConfig = Field(default_factory=lambda: AlgebraConfig(family="A", rank=1))
    domain: DomainConfig = Field(default_factory=DomainConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    vortices: List[VortexPoint] = []
    lam: Optional[float] = Field(default=None, alias="lambda", gt=0)
    sweep: Optional[SweepConfig] = None
    probe: Optional[ProbeConfig] = None
    sigma: Optional[float] = Field(default=None, gt=0)
    tolerances: ToleranceConfig = Field(default_factory=ToleranceConfig)
    seed: SeedConfig = Field(default_factory=SeedConfig)
    constraints: ConstraintsConfig = Field(default_factory=ConstraintsConfig)
    interpolation: InterpolationConfig = Field(default_factory=InterpolationConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    catalog: CatalogConfig = Field(default_factory=CatalogConfig)

    @model_validator(mode="after")
    def _indices(self):
        n = self.algebra.rank_value
        for k, point in enumerate(self.vortices):
            if point.index > n:
                raise ValueError(f"vortices[{k}].index = {point.index} exceeds the rank {n}")
        return self

    @property
    def rank(self) -> int:
        return self.algebra.rank_value

    def sites(self) -> List[List[tuple]]:
        """(x, y, multiplicity) per equation index."""
        per_index: List[List[tuple]] = [[] for _ in range(self.rank)]
        for point in self.vortices:
            per_index[point.index - 1].append((point.x, point.y, point.multiplicity))
        return per_index

    def multiplicities(self) -> List[int]:
        return [sum(m for _, _, m in row) for row in self.sites()]

    def resolved(self) -> "RunConfig":
        """Copy with every default materialized, sigma and reduced vortex points included."""
        sigma = self.sigma
        if sigma is None:
            sigma = 2.0 * max(self.domain.L1 / self.grid.M1, self.domain.L2 / self.grid.M2)
        vortices = [
            p.model_copy(update={"x": p.x % self.domain.L1, "y": p.y % self.domain.L2})
            for p in self.vortices
        ]
        constraints = self.constraints.model_copy(
            update={"method": self.constraints.method or get_settings().constraint_method}
        )
        return self.model_copy(
            update={"sigma": sigma, "vortices": vortices, "constraints": constraints}, deep=True
        )

    def dump(self) -> Dict[str, Any]:
        return self.resolved().model_dump(mode="json", by_alias=True)


def _location(error: Dict[str, Any]) -> str:
    parts = []
    for item in error.get("loc", ()):
        if isinstance(item, int):
            parts.append(f"[{item}]")
        else:
            parts.append(("." if parts else "") + str(item))
    return "".join(parts) or "<root>"


def parse_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParseError(f"malformed TOML: {exc}") from exc
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigParseError(f"{_location(first)}: {first['msg']}") from exc
