"""Doubly periodic grid, background functions and spectral calculus.

Fields are sampled on a uniform M1 x M2 grid over the rectangle
[0, L1) x [0, L2). Derivatives are spectral (FFT), integrals are the uniform
node sum times the cell area. Several fields of one system are handled as a
stacked array of shape (n, M1, M2); every operation acts on the last two axes.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Sequence, Tuple, Union

import numpy as np

from csh_vortex.app.errors import ConfigurationError, ExponentRangeError, ResolutionError

logger = logging.getLogger(__name__)

EXPONENT_LIMIT = 700.0
MEAN_ZERO_TOL = 1e-12


# ---------------------------------------------------------------------------
# Grid and fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TorusGrid:
    L1: float = 1.0
    L2: float = 1.0
    M1: int = 128
    M2: int = 128

    def __post_init__(self):
        if self.L1 <= 0 or self.L2 <= 0:
            raise ResolutionError(f"side lengths must be positive, got {self.L1} x {self.L2}")
        for name, m in (("M1", self.M1), ("M2", self.M2)):
            if m <= 0 or m % 2:
                raise ResolutionError(f"{name} must be a positive even integer, got {m}")

    @property
    def h1(self) -> float:
        return self.L1 / self.M1

    @property
    def h2(self) -> float:
        return self.L2 / self.M2

    @property
    def spacing(self) -> float:
        return max(self.h1, self.h2)

    @property
    def area(self) -> float:
        return self.L1 * self.L2

    @property
    def cell(self) -> float:
        """Quadrature weight of one node."""
        return self.h1 * self.h2

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.M1, self.M2)

    @cached_property
    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.M1) * self.h1
        y = np.arange(self.M2) * self.h2
        return np.meshgrid(x, y, indexing="ij")

    @cached_property
    def wavenumbers(self) -> Tuple[np.ndarray, np.ndarray]:
        """k = 2 pi m / L with m in [-M/2, M/2), broadcastable to the grid."""
        k1 = 2 * np.pi * np.fft.fftfreq(self.M1, d=self.h1)
        k2 = 2 * np.pi * np.fft.fftfreq(self.M2, d=self.h2)
        return k1[:, None], k2[None, :]

    @cached_property
    def k_squared(self) -> np.ndarray:
        k1, k2 = self.wavenumbers
        return k1 ** 2 + k2 ** 2

    def integrate(self, values: np.ndarray) -> Union[float, np.ndarray]:
        return values.sum(axis=(-2, -1)) * self.cell

    def mean(self, values: np.ndarray) -> Union[float, np.ndarray]:
        return self.integrate(values) / self.area

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Quadrature inner product, summed over a leading stack axis if present."""
        return float(np.sum(f * g) * self.cell)

    def norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(self.inner(f, f)))

    def project_mean_zero(self, values: np.ndarray) -> np.ndarray:
        return values - self.mean(values)[..., None, None]


@dataclass(frozen=True, eq=False)
class Field:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ConfigurationError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def mean(self) -> float:
        return float(self.grid.mean(self.values))

    def integral(self) -> float:
        return float(self.grid.integrate(self.values))

    def is_mean_zero(self, tol: float = MEAN_ZERO_TOL) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.values))))
        return abs(self.mean()) <= tol * scale


def as_stack(w: Union[np.ndarray, Sequence[Field]]) -> np.ndarray:
    if isinstance(w, np.ndarray):
        return w if w.ndim == 3 else w[None]
    return np.stack([f.values for f in w])


# ---------------------------------------------------------------------------
# Spectral calculus
# ---------------------------------------------------------------------------

def spectral_laplacian(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    transformed = np.fft.fft2(values, axes=(-2, -1))
    return np.fft.ifft2(-grid.k_squared * transformed, axes=(-2, -1)).real


def spectral_inverse_laplacian(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Mean-zero solution u of Laplacian(u) = f - mean(f)."""
    transformed = np.fft.fft2(values, axes=(-2, -1))
    ksq = grid.k_squared.copy()
    ksq[0, 0] = 1.0
    solved = -transformed / ksq
    solved[..., 0, 0] = 0.0
    return np.fft.ifft2(solved, axes=(-2, -1)).real


def laplacian(f: Field) -> Field:
    return Field(f.grid, spectral_laplacian(f.grid, f.values))


def inverse_laplacian(f: Field) -> Field:
    return Field(f.grid, spectral_inverse_laplacian(f.grid, f.values))


# ---------------------------------------------------------------------------
# Vortex configuration and background functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VortexSite:
    x: float
    y: float
    multiplicity: int = 1


@dataclass(frozen=True)
class VortexConfiguration:
    """Vortex sites per equation index, reduced into the fundamental cell."""

    sites: Tuple[Tuple[VortexSite, ...], ...]

    @classmethod
    def create(cls, grid: TorusGrid, sites: Sequence[Sequence[Tuple[float, float, int]]]) -> "VortexConfiguration":
        reduced: List[Tuple[VortexSite, ...]] = []
        for index_sites in sites:
            row = []
            for x, y, m in index_sites:
                if int(m) < 1:
                    raise ConfigurationError(f"multiplicity must be at least 1, got {m}")
                row.append(VortexSite(float(np.mod(x, grid.L1)), float(np.mod(y, grid.L2)), int(m)))
            reduced.append(tuple(row))
        return cls(tuple(reduced))

    @classmethod
    def empty(cls, n: int) -> "VortexConfiguration":
        return cls(tuple(() for _ in range(n)))

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def N(self) -> Tuple[int, ...]:
        return tuple(sum(s.multiplicity for s in index_sites) for index_sites in self.sites)

    def restricted(self, index: int) -> "VortexConfiguration":
        """The single-index configuration used for scalar sub-problems."""
        return VortexConfiguration((self.sites[index],))


@dataclass(frozen=True, eq=False)
class BackgroundField:
    grid: TorusGrid
    u0: np.ndarray
    source: np.ndarray
    N: Tuple[int, ...]
    sigma: float

    @property
    def n(self) -> int:
        return self.u0.shape[0]

    def field(self, i: int) -> Field:
        return Field(self.grid, self.u0[i])

    def flux(self, i: int) -> float:
        """Quadrature of the mollified vortex source, 4 pi N_i up to round-off."""
        return float(self.grid.integrate(self.source[i]))


def default_sigma(grid: TorusGrid) -> float:
    return 2.0 * grid.spacing


def background(grid: TorusGrid, vortices: VortexConfiguration, sigma: float = None) -> BackgroundField:
    """Mean-zero u0 with Laplacian(u0) = 4 pi sum of Gaussians - 4 pi N / |Omega|.

    Each Dirac mass is replaced by a periodic Gaussian of width sigma; the
    Gaussian is built from its Fourier series, so its discrete mass is exact.
    """
    if sigma is None:
        sigma = default_sigma(grid)
    if sigma < grid.spacing * (1 - 1e-12):
        raise ResolutionError(
            f"mollification width {sigma:g} is below the grid spacing {grid.spacing:g}"
        )

    n = vortices.n
    k1, k2 = grid.wavenumbers
    damping = np.exp(-0.5 * sigma ** 2 * grid.k_squared)
    scale = 4 * np.pi / grid.area * grid.M1 * grid.M2
    ksq = grid.k_squared.copy()
    ksq[0, 0] = 1.0

    u0 = np.zeros((n, grid.M1, grid.M2))
    source = np.zeros((n, grid.M1, grid.M2))
    for i, index_sites in enumerate(vortices.sites):
        if not index_sites:
            continue
        spectrum = np.zeros(grid.shape, dtype=complex)
        for site in index_sites:
            spectrum += site.multiplicity * np.exp(-1j * (k1 * site.x + k2 * site.y))
        spectrum *= scale * damping
        source[i] = np.fft.ifft2(spectrum).real
        solved = -spectrum / ksq
        solved[0, 0] = 0.0
        u0[i] = np.fft.ifft2(solved).real

    logger.debug(f"background: n={n}, N={vortices.N}, sigma={sigma:g}, min u0={u0.min() if n else 0:.6g}")
    return BackgroundField(grid=grid, u0=u0, source=source, N=vortices.N, sigma=float(sigma))


# ---------------------------------------------------------------------------
# Exponentials and the integral coefficients
# ---------------------------------------------------------------------------

def exponentials(bg: BackgroundField, v: np.ndarray) -> np.ndarray:
    """exp(u0 + v) with an explicit range check instead of silent overflow."""
    exponent = bg.u0 + v
    if not np.all(np.isfinite(exponent)):
        raise ExponentRangeError("exponent is not finite")
    peak = float(np.max(np.abs(exponent)))
    if peak > EXPONENT_LIMIT:
        raise ExponentRangeError(f"|u0 + v| reaches {peak:.4g} > {EXPONENT_LIMIT:g}")
    return np.exp(exponent)


def integrals_of(grid: TorusGrid, E: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a = grid.integrate(E)
    aM = np.einsum("imn,jmn->ij", E, E) * grid.cell
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(aM))):
        raise ExponentRangeError("integral coefficients overflow")
    return a, aM


def coefficients_a(bg: BackgroundField, w: Union[np.ndarray, Sequence[Field]]) -> Tuple[np.ndarray, np.ndarray]:
    """a_i = int exp(u0_i + w_i), a_ij = int exp(u0_i + u0_j + w_i + w_j)."""
    return integrals_of(bg.grid, exponentials(bg, as_stack(w)))
