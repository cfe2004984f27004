"""Pydantic schemas for the reports written by the CLI commands."""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel


class CertificateCheck(BaseModel):
    name: str
    passed: bool
    witness: str = ""


class CartanCertificate(BaseModel):
    label: str
    n: int
    K: List[List[int]]
    P: List[str]
    S: List[List[str]]
    R: List[str] = []
    checks: List[CertificateCheck]
    passed: bool
    config: Dict[str, Any] = {}


class CatalogReport(BaseModel):
    certificates: List[CartanCertificate]
    passed: int
    failed: int
    config: Dict[str, Any] = {}


class ConstraintReport(BaseModel):
    algebra: str
    method: str
    lam: float
    margins: List[float]
    admissible: bool
    t: List[float]
    c: List[float]
    residual: float
    lower_bound: List[float]
    box_margins: List[float]
    iterations: int
    monotone: bool
    trace: List[str] = []
    config: Dict[str, Any] = {}


class NecessaryCheck(BaseModel):
    lam: float
    lambda0: float
    passed: bool


class QuantizedIntegral(BaseModel):
    index: int
    value: float
    target: float
    relative_error: float
    tolerance: float
    passed: bool


class InterpolationCheck(BaseModel):
    index: int
    s: float
    log_margin: float
    passed: bool


class SolveReport(BaseModel):
    algebra: str
    lam: float
    lambda0: float
    necessary: NecessaryCheck
    outcome: str
    converged: bool
    stop_rule: str = ""
    iterations: int
    J: float
    c: List[float]
    t: List[float]
    grad_norm: float
    grad_tolerance: float
    pde_residual: float
    pde_tolerance: float
    weighted_residual_consistency: float
    constraint_residual: float
    constraint_tolerance: float
    envelope_residual: List[float]
    margins: List[float]
    box_margins: List[float]
    quantized: List[QuantizedIntegral]
    asymptotic_distance: List[float]
    summed_constraint_residual: float
    completed_square_residual: float
    identity_tolerance: float
    alpha0: float
    beta0: float
    boundary_estimate: float
    seed: str
    seed_note: str = ""
    interpolation: List[InterpolationCheck] = []
    config: Dict[str, Any] = {}


class SweepRow(BaseModel):
    lam: float
    J: Optional[float] = None
    distances: List[float] = []
    quantized_errors: List[float] = []
    iterations: int = 0
    converged: bool = False
    outcome: str = ""


class SweepReport(BaseModel):
    lambda0: float
    rows: List[SweepRow]
    monotone: List[bool]
    below_threshold: List[bool]
    config: Dict[str, Any] = {}


class ProbeReport(BaseModel):
    lambda0: float
    lam_low: float
    lam_high: float
    lambda1_estimate: Optional[float]
    evaluations: List[SweepRow]
    config: Dict[str, Any] = {}
