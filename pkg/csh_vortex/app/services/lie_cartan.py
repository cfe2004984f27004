"""Cartan matrices and the matrix data derived from them.

All matrices here are exact: sympy matrices over the rationals. The factor
pi that enters the vortex vector and the coupling threshold stays symbolic
until a caller converts with ``float_vector`` / ``float``.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp

from csh_vortex.app.errors import (
    CartanValidationError,
    ConfigurationError,
    DecompositionError,
)
from csh_vortex.app.schemas.reports import CartanCertificate, CertificateCheck

logger = logging.getLogger(__name__)

FAMILIES = ("A", "B", "C", "D", "E", "F", "G")


# ---------------------------------------------------------------------------
# Algebra specification
# ---------------------------------------------------------------------------

def check_family_rank(family: str, rank: int) -> None:
    """Raise ConfigurationError unless (family, rank) names a simple type."""
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")
    if rank < 1:
        raise ConfigurationError(f"rank must be positive, got {rank}")
    allowed = {
        "A": rank >= 1,
        "B": rank >= 2,
        "C": rank >= 2,
        "D": rank >= 3,
        "E": 6 <= rank <= 8,
        "F": rank == 4,
        "G": rank == 2,
    }[family]
    if not allowed:
        raise ConfigurationError(f"{family}{rank} is not a simple type")


def check_explicit_matrix(matrix: Sequence[Sequence[int]]) -> None:
    n = len(matrix)
    if n == 0 or any(len(row) != n for row in matrix):
        raise ConfigurationError("explicit matrix must be square and non-empty")
    for i in range(n):
        for j in range(n):
            if i == j and matrix[i][j] <= 0:
                raise ConfigurationError(f"diagonal entry ({i + 1},{j + 1}) must be positive")
            if i != j and matrix[i][j] > 0:
                raise ConfigurationError(f"off-diagonal entry ({i + 1},{j + 1}) must be non-positive")


@dataclass(frozen=True)
class AlgebraSpec:
    """Either a (family, rank) pair or an explicit integer matrix."""

    family: Optional[str] = None
    rank: Optional[int] = None
    explicit_matrix: Optional[Tuple[Tuple[int, ...], ...]] = None

    def __post_init__(self):
        if self.explicit_matrix is not None:
            if self.family is not None or self.rank is not None:
                raise ConfigurationError("give either family/rank or an explicit matrix, not both")
            check_explicit_matrix(self.explicit_matrix)
            return
        if self.family is None or self.rank is None:
            raise ConfigurationError("family and rank are both required")
        check_family_rank(self.family, self.rank)

    @classmethod
    def parse(cls, label: str) -> "AlgebraSpec":
        """``"A3"`` → AlgebraSpec("A", 3)."""
        label = label.strip().upper()
        if len(label) < 2 or not label[1:].isdigit():
            raise ConfigurationError(f"cannot read algebra label {label!r}")
        return cls(family=label[0], rank=int(label[1:]))

    @classmethod
    def from_matrix(cls, matrix: Sequence[Sequence[int]]) -> "AlgebraSpec":
        return cls(explicit_matrix=tuple(tuple(int(x) for x in row) for row in matrix))

    @property
    def label(self) -> str:
        if self.explicit_matrix is not None:
            n = len(self.explicit_matrix)
            return f"custom{n}x{n}"
        return f"{self.family}{self.rank}"


def catalog_specs() -> List[AlgebraSpec]:
    """Every simple type covered by the certificate catalog."""
    specs = [AlgebraSpec("A", r) for r in range(1, 11)]
    specs += [AlgebraSpec("B", r) for r in range(2, 11)]
    specs += [AlgebraSpec("C", r) for r in range(2, 11)]
    specs += [AlgebraSpec("D", r) for r in range(3, 11)]
    specs += [AlgebraSpec("E", r) for r in (6, 7, 8)]
    specs += [AlgebraSpec("F", 4), AlgebraSpec("G", 2)]
    return specs


# ---------------------------------------------------------------------------
# Cartan matrices from Dynkin data
# ---------------------------------------------------------------------------
#
# Convention K_ij = 2(a_i, a_j)/(a_j, a_j) with Bourbaki numbering. Each edge
# is (i, j, K_ij, K_ji) with 0-based indices.

def _dynkin_edges(family: str, n: int) -> List[Tuple[int, int, int, int]]:
    chain = [(i, i + 1, -1, -1) for i in range(n - 1)]
    if family == "A":
        return chain
    if family == "B":
        return chain[:-1] + [(n - 2, n - 1, -2, -1)]
    if family == "C":
        return chain[:-1] + [(n - 2, n - 1, -1, -2)]
    if family == "D":
        return [(i, i + 1, -1, -1) for i in range(n - 2)] + [(n - 3, n - 1, -1, -1)]
    if family == "E":
        return [(0, 2, -1, -1), (1, 3, -1, -1)] + [(i, i + 1, -1, -1) for i in range(2, n - 1)]
    if family == "F":
        return [(0, 1, -1, -1), (1, 2, -2, -1), (2, 3, -1, -1)]
    if family == "G":
        return [(0, 1, -1, -3)]
    raise ConfigurationError(f"unknown family {family!r}")


def cartan_matrix(spec: AlgebraSpec) -> sp.ImmutableMatrix:
    """Integer Cartan matrix for a simple type, or the explicit matrix as given."""
    if spec.explicit_matrix is not None:
        return sp.ImmutableMatrix(spec.explicit_matrix)
    check_family_rank(spec.family, spec.rank)
    n = spec.rank
    K = sp.Matrix(2 * sp.eye(n))
    for i, j, kij, kji in _dynkin_edges(spec.family, n):
        K[i, j] = kij
        K[j, i] = kji
    return sp.ImmutableMatrix(K)


# ---------------------------------------------------------------------------
# Symmetrization K^T = P S
# ---------------------------------------------------------------------------

def decompose(K: sp.Matrix) -> Tuple[Tuple[sp.Rational, ...], sp.ImmutableMatrix]:
    """Return (P, S) with K^T = diag(P) S, S symmetric and P_1 = 1.

    P is propagated along the graph of non-zero off-diagonal entries; every
    connected component starts from 1 at its lowest index.
    """
    n = K.shape[0]
    if K.shape != (n, n):
        raise DecompositionError("matrix must be square")
    for i in range(n):
        if K[i, i] <= 0:
            raise DecompositionError(f"diagonal entry ({i + 1},{i + 1}) must be positive")
        for j in range(n):
            if i == j:
                continue
            if K[i, j] > 0:
                raise DecompositionError(f"off-diagonal entry ({i + 1},{j + 1}) must be non-positive")
            if (K[i, j] == 0) != (K[j, i] == 0):
                raise DecompositionError(
                    f"zero pattern is not symmetric at ({i + 1},{j + 1})"
                )

    P: List[Optional[sp.Rational]] = [None] * n
    for root in range(n):
        if P[root] is not None:
            continue
        P[root] = sp.Integer(1)
        stack = [root]
        while stack:
            i = stack.pop()
            for j in range(n):
                if j == i or K[i, j] == 0 or P[j] is not None:
                    continue
                # K_ji / P_i = K_ij / P_j
                P[j] = P[i] * K[i, j] / K[j, i]
                stack.append(j)

    for i in range(n):
        for j in range(i + 1, n):
            if K[i, j] == 0:
                continue
            if K[j, i] / P[i] != K[i, j] / P[j]:
                raise DecompositionError(
                    f"K is not symmetrizable: cycle products disagree at ({i + 1},{j + 1})"
                )

    S = sp.Matrix(n, n, lambda i, j: K[j, i] / P[i])
    return tuple(P), sp.ImmutableMatrix(S)


# ---------------------------------------------------------------------------
# CartanData
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CartanData:
    """Exact matrix data for one algebra.

    Inverses and the derived R, A, Q are None when S is singular; ``validate``
    then reports the failure and ``require_valid`` refuses the data.
    """

    label: str
    K: sp.ImmutableMatrix
    P: Tuple[sp.Rational, ...]
    S: sp.ImmutableMatrix
    alpha: sp.ImmutableMatrix
    K_inv: Optional[sp.ImmutableMatrix] = None
    S_inv: Optional[sp.ImmutableMatrix] = None
    R: Optional[Tuple[sp.Rational, ...]] = None
    A: Optional[sp.ImmutableMatrix] = None
    Q: Optional[sp.ImmutableMatrix] = None

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def invertible(self) -> bool:
        return self.S_inv is not None

    # Float views for the numerical modules.

    @cached_property
    def K_float(self) -> np.ndarray:
        return _to_array(self.K)

    @cached_property
    def P_float(self) -> np.ndarray:
        return np.array([float(p) for p in self.P])

    @cached_property
    def S_float(self) -> np.ndarray:
        return _to_array(self.S)

    @cached_property
    def R_float(self) -> np.ndarray:
        return np.array([float(r) for r in self.R])

    @cached_property
    def A_float(self) -> np.ndarray:
        return _to_array(self.A)

    @cached_property
    def Q_float(self) -> np.ndarray:
        return _to_array(self.Q)

    @cached_property
    def K_tilde_float(self) -> np.ndarray:
        """K^T R, the coupling matrix of the normalized system."""
        return self.K_float.T * self.R_float[None, :]


def _to_array(m: sp.Matrix) -> np.ndarray:
    return np.array(m.tolist(), dtype=float)


def build_cartan_data(spec: AlgebraSpec) -> CartanData:
    K = cartan_matrix(spec)
    P, S = decompose(K)
    n = K.shape[0]
    alpha = sp.ImmutableMatrix(n, n, lambda i, j: abs(S[i, j]))

    if S.det() == 0:
        logger.warning(f"{spec.label}: S is singular, derived data left empty")
        return CartanData(label=spec.label, K=K, P=P, S=S, alpha=alpha)

    K_inv = sp.ImmutableMatrix(K.inv())
    S_inv = sp.ImmutableMatrix(S.inv())
    KT_inv = K_inv.T
    R = tuple(sum(KT_inv[i, j] for j in range(n)) for i in range(n))
    P_inv = sp.diag(*[1 / p for p in P])
    R_diag = sp.diag(*R)
    A = sp.ImmutableMatrix(P_inv * S_inv * P_inv)
    Q = sp.ImmutableMatrix(R_diag * S * R_diag)
    return CartanData(
        label=spec.label, K=K, P=P, S=S, alpha=alpha,
        K_inv=K_inv, S_inv=S_inv, R=R, A=A, Q=Q,
    )


def _fmt(x) -> str:
    return str(x)


def validate(data: CartanData) -> CartanCertificate:
    """Exact certificate: each invariant is checked and reported, never raised."""
    n = data.n
    K, S = data.K, data.S
    checks: List[CertificateCheck] = []

    P_diag = sp.diag(*data.P)
    checks.append(CertificateCheck(
        name="transpose_factorization",
        passed=bool(K.T == P_diag * S),
        witness="K^T - P S = 0" if K.T == P_diag * S else "K^T != P S",
    ))
    checks.append(CertificateCheck(name="S_symmetric", passed=bool(S == S.T)))
    off_ok = all(S[i, j] <= 0 for i in range(n) for j in range(n) if i != j)
    checks.append(CertificateCheck(name="S_off_diagonal_nonpositive", passed=off_ok))

    minors = [S[:k, :k].det() for k in range(1, n + 1)]
    checks.append(CertificateCheck(
        name="S_positive_definite",
        passed=all(m > 0 for m in minors),
        witness="leading minors " + ", ".join(_fmt(m) for m in minors),
    ))

    if data.invertible:
        KT_inv = data.K_inv.T
        Q_inv = data.Q.inv()
        min_s = min(data.S_inv)
        checks.append(CertificateCheck(
            name="S_inverse_positive", passed=bool(min_s > 0), witness=f"min entry {_fmt(min_s)}",
        ))
        min_k = min(KT_inv)
        checks.append(CertificateCheck(
            name="KT_inverse_positive", passed=bool(min_k > 0), witness=f"min entry {_fmt(min_k)}",
        ))
        min_q = min(Q_inv)
        checks.append(CertificateCheck(
            name="Q_inverse_positive", passed=bool(min_q > 0), witness=f"min entry {_fmt(min_q)}",
        ))
        checks.append(CertificateCheck(
            name="R_positive",
            passed=all(r > 0 for r in data.R),
            witness="R = (" + ", ".join(_fmt(r) for r in data.R) + ")",
        ))
        lhs = sp.Matrix([1 / p for p in data.P])
        rhs = S * sp.Matrix(data.R)
        checks.append(CertificateCheck(
            name="identity_P_inv_one_eq_S_R_one", passed=bool(lhs == rhs),
        ))
    else:
        for name in ("S_inverse_positive", "KT_inverse_positive", "Q_inverse_positive",
                     "R_positive", "identity_P_inv_one_eq_S_R_one"):
            checks.append(CertificateCheck(name=name, passed=False, witness="S is singular"))

    return CartanCertificate(
        label=data.label,
        n=n,
        K=[[int(x) for x in K.row(i)] for i in range(n)],
        P=[_fmt(p) for p in data.P],
        S=[[_fmt(x) for x in S.row(i)] for i in range(n)],
        R=[_fmt(r) for r in data.R] if data.R is not None else [],
        checks=checks,
        passed=all(c.passed for c in checks),
    )


def require_valid(data: CartanData) -> CartanData:
    cert = validate(data)
    if not cert.passed:
        failed = ", ".join(c.name for c in cert.checks if not c.passed)
        raise CartanValidationError(f"{data.label} fails: {failed}")
    return data


def load_cartan_data(spec: AlgebraSpec) -> CartanData:
    """Build and certify; the entry point used by the solver modules."""
    return require_valid(build_cartan_data(spec))


# ---------------------------------------------------------------------------
# Vortex vector and coupling threshold
# ---------------------------------------------------------------------------

def _check_N(data: CartanData, N: Sequence[int]) -> None:
    if len(N) != data.n:
        raise ConfigurationError(f"expected {data.n} multiplicities, got {len(N)}")
    if any(int(x) < 0 for x in N):
        raise ConfigurationError("multiplicities must be non-negative")


def vortex_vector_b(data: CartanData, N: Sequence[int]) -> sp.ImmutableMatrix:
    """b = 4 pi A N, entries are exact rational multiples of pi."""
    _check_N(data, N)
    return sp.ImmutableMatrix(4 * sp.pi * data.A * sp.Matrix([int(x) for x in N]))


def float_vector(m: sp.Matrix) -> np.ndarray:
    return np.array([float(x) for x in m], dtype=float)


def threshold_coefficient(data: CartanData, N: Sequence[int]) -> sp.Rational:
    """Exact r with lambda_0 = r * pi / |Omega|."""
    _check_N(data, N)
    n = data.n
    num = sp.Integer(0)
    den = sp.Integer(0)
    for i in range(n):
        for j in range(n):
            w = data.K_inv[j, i] / data.P[i]
            num += w * int(N[j])
            den += w
    return sp.Rational(16) * num / den


def lambda_threshold(data: CartanData, N: Sequence[int], domain_area: float) -> float:
    if domain_area <= 0:
        raise ConfigurationError("domain area must be positive")
    return float(threshold_coefficient(data, N) * sp.pi) / domain_area


def coercivity_constants(data: CartanData) -> Tuple[float, float]:
    """Smallest eigenvalues of A and Q."""
    return (
        float(np.linalg.eigvalsh(data.A_float)[0]),
        float(np.linalg.eigvalsh(data.Q_float)[0]),
    )
