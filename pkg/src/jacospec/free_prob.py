"""Free-probability transform calculus.

Grid-sampled spectral densities with an explicit zero atom, Stieltjes
transforms and their inversion, raw moments, and the closed-form
S-transforms of the building-block ensembles together with the product
rule that composes them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    BranchSelectionError,
    DegenerateLawError,
    SupportDomainError,
    VariableMismatchError,
)

EIGENVALUE = "eigenvalue"
SINGULAR_VALUE = "singular_value"

#: Numerical dust below which a negative density is clipped rather than
#: treated as a wrong-branch signal.
NEGATIVE_DENSITY_TOL = -1e-6

MASS_TOL = 1e-3


@dataclass(frozen=True)
class SpectralDensity:
    """A continuous density sampled on a grid plus a point mass at 0.

    The grid is strictly increasing and the total mass (zero_atom plus
    trapezoidal integral of the density) is 1 within MASS_TOL.
    """

    abscissa: np.ndarray
    density: np.ndarray
    zero_atom: float = 0.0
    variable: str = EIGENVALUE

    def __post_init__(self):
        object.__setattr__(self, "abscissa", np.asarray(self.abscissa, dtype=float))
        object.__setattr__(self, "density", np.asarray(self.density, dtype=float))
        if self.abscissa.ndim != 1 or self.abscissa.shape != self.density.shape:
            raise ValueError("abscissa and density must be 1-d arrays of equal length")
        if np.any(np.diff(self.abscissa) <= 0.0):
            raise ValueError("abscissa must be strictly increasing")
        if np.any(self.abscissa < 0.0):
            raise ValueError("abscissa must be nonnegative")
        if self.density.min(initial=0.0) < NEGATIVE_DENSITY_TOL:
            raise ValueError("density must be nonnegative")
        object.__setattr__(self, "density", np.maximum(self.density, 0.0))
        if not 0.0 <= self.zero_atom <= 1.0:
            raise ValueError("zero_atom must lie in [0, 1]")
        if self.variable not in (EIGENVALUE, SINGULAR_VALUE):
            raise ValueError(f"unknown variable {self.variable!r}")
        if abs(self.mass() - 1.0) > MASS_TOL:
            raise ValueError(f"total mass {self.mass():.6f} is not 1 within {MASS_TOL}")

    def continuous_mass(self) -> float:
        return float(np.trapezoid(self.density, self.abscissa))

    def mass(self) -> float:
        return self.zero_atom + self.continuous_mass()

    def cdf(self, x) -> np.ndarray:
        """Cumulative mass up to x, including the jump at 0."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        cum = np.concatenate(
            ([0.0], np.cumsum(np.diff(self.abscissa) * 0.5 * (self.density[1:] + self.density[:-1])))
        )
        out = np.interp(x, self.abscissa, cum, left=0.0, right=cum[-1])
        out = np.where(x >= 0.0, out + self.zero_atom, 0.0)
        return out

    def moment(self, k: int) -> float:
        return float(np.trapezoid(self.density * self.abscissa**k, self.abscissa))


@dataclass(frozen=True)
class MomentSeries:
    """Raw moments m_1 ... m_K of a spectral density."""

    moments: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "moments", np.asarray(self.moments, dtype=float))


@dataclass(frozen=True)
class BernoulliSlopeLaw:
    """Squared-slope law of a piecewise-linear activation: mass p at 1, 1-p at 0."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")


@dataclass(frozen=True)
class STransform:
    """Closed-form S-transform, finite and positive on (0, 1) for in-scope ensembles."""

    fn: Callable[[complex], complex]
    label: str = ""

    def __call__(self, z):
        return self.fn(z)


def stieltjes_from_density(rho: SpectralDensity, z: complex) -> complex:
    """G(z) = zero_atom / z + integral of rho(t) / (z - t) dt (trapezoidal)."""
    z = complex(z)
    if z.imag == 0.0:
        lo, hi = rho.abscissa[0], rho.abscissa[-1]
        inside = lo <= z.real <= hi or (rho.zero_atom > 0.0 and z.real == 0.0)
        if inside:
            raise SupportDomainError(
                f"z={z} lies on the support; the transform requires Im z != 0"
            )
    out = np.trapezoid(rho.density / (z - rho.abscissa), rho.abscissa)
    if rho.zero_atom:
        out = out + rho.zero_atom / z
    return complex(out)


def density_from_stieltjes(
    g: Callable[[float], complex],
    grid,
    epsilon: float,
    variable: str = EIGENVALUE,
) -> SpectralDensity:
    """Invert a Stieltjes transform on a grid: rho = -Im G / pi.

    ``g`` maps a real grid point to G evaluated just above the axis (the
    caller owns the offset; ``epsilon`` documents it).  The zero atom is
    estimated as the mass deficit of the continuous part, clamped to
    [0, 1].  A density more negative than NEGATIVE_DENSITY_TOL signals
    that a wrong polynomial root was tracked upstream.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    grid = np.asarray(grid, dtype=float)
    values = np.array([g(x) for x in grid], dtype=complex)
    density = -values.imag / np.pi
    worst = density.min(initial=0.0)
    if worst < NEGATIVE_DENSITY_TOL:
        at = grid[int(np.argmin(density))]
        raise BranchSelectionError(
            f"density {worst:.3e} < {NEGATIVE_DENSITY_TOL} at {variable}={at:.6g}; "
            "wrong branch selected upstream",
            z=complex(at, epsilon),
        )
    density = np.maximum(density, 0.0)
    cont = float(np.trapezoid(density, grid))
    zero_atom = min(max(1.0 - cont, 0.0), 1.0)
    return SpectralDensity(abscissa=grid, density=density, zero_atom=zero_atom, variable=variable)


def moments_from_density(rho: SpectralDensity, K: int) -> MomentSeries:
    """Raw moments m_1 ... m_K; the zero atom contributes nothing."""
    if K < 1:
        raise ValueError("K must be at least 1")
    return MomentSeries(np.array([rho.moment(k) for k in range(1, K + 1)]))


def s_bernoulli(law: BernoulliSlopeLaw) -> STransform:
    """S-transform of the Bernoulli squared-slope law: (z + 1) / (z + p)."""
    p = law.p
    if p == 0.0:
        raise DegenerateLawError("all slopes vanish; the spectrum is identically 0")
    return STransform(fn=lambda z, p=p: (z + 1.0) / (z + p), label=f"bernoulli(p={p})")


def s_wishart(sigma_w_sq: float) -> STransform:
    """S-transform of W W^T for i.i.d. Gaussian W with variance sigma_w_sq / N."""
    if sigma_w_sq <= 0.0:
        raise ValueError("sigma_w_sq must be positive")
    return STransform(
        fn=lambda z, s=sigma_w_sq: 1.0 / (s * (1.0 + z)), label=f"wishart({sigma_w_sq})"
    )


def s_orthogonal(sigma_w_sq: float) -> STransform:
    """S-transform of W W^T for scaled Haar-orthogonal W: the constant 1 / sigma_w_sq."""
    if sigma_w_sq <= 0.0:
        raise ValueError("sigma_w_sq must be positive")
    return STransform(
        fn=lambda z, s=sigma_w_sq: np.full_like(np.asarray(z, dtype=complex), 1.0 / s)
        if np.ndim(z)
        else 1.0 / s,
        label=f"orthogonal({sigma_w_sq})",
    )


def s_jjt(weight_s: STransform, slope_s: STransform, L: int) -> STransform:
    """Depth-L product rule: S(z) = weight_s(z)^L * slope_s(z)^L."""
    if L < 1:
        raise ValueError("L must be at least 1")
    return STransform(
        fn=lambda z: weight_s(z) ** L * slope_s(z) ** L,
        label=f"jjt[{weight_s.label} x {slope_s.label}]^{L}",
    )


def m_inverse_from_s(s: STransform) -> Callable[[complex], complex]:
    """Functional inverse of the moment generating function: M^{-1}(z) = (1+z) / (z S(z))."""

    def m_inv(z):
        if np.any(np.asarray(z) == 0.0):
            raise SupportDomainError("M^{-1} has a pole at z = 0")
        return (1.0 + z) / (z * s(z))

    return m_inv


def singular_from_eigen(rho_lambda: SpectralDensity) -> SpectralDensity:
    """Change of variables s = sqrt(lambda): rho_s(s) = 2 s rho_lambda(s^2)."""
    if rho_lambda.variable != EIGENVALUE:
        raise VariableMismatchError("input density must be over eigenvalues")
    s = np.sqrt(rho_lambda.abscissa)
    return SpectralDensity(
        abscissa=s,
        density=2.0 * s * rho_lambda.density,
        zero_atom=rho_lambda.zero_atom,
        variable=SINGULAR_VALUE,
    )
