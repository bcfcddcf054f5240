"""Theoretical Jacobian spectra via master-polynomial root tracking.

Builds the polynomial satisfied by the Stieltjes transform of J J^T,
selects the physical (Herglotz) root by homotopy continuation, inverts
to a density, and provides closed-form spectral edges and moments.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from . import free_prob, signal_prop
from .errors import (
    BranchSelectionError,
    NoRootInBracketError,
    NumericalOverflowError,
)

GAUSSIAN = "gaussian"
ORTHOGONAL = "orthogonal"

#: Companion-matrix root finding is accurate and fast up to this depth.
#: Beyond it, a simultaneous (Aberth-style) iteration would be needed;
#: the closed-form edge and moment routines have no such cap.
MAX_POLY_DEPTH = 64

#: Tolerance on the sign of Im G when filtering physical roots.
HERGLOTZ_TOL = 1e-12

#: A slope law this close to 1 is numerically indistinguishable from the
#: linear network; the orthogonal pipeline then degenerates to a point mass.
NEAR_LINEAR_TOL = 1e-9


@dataclass(frozen=True)
class EnsembleSpec:
    """Weight ensemble, slope law, and depth: everything the theory needs.

    ``p`` is the linear-regime fraction of the squared-slope Bernoulli
    law; it equals 1 exactly iff the nonlinearity is linear.
    """

    weights: str
    nonlinearity: str
    depth: int
    sigma_w_sq: float
    p: float

    def __post_init__(self):
        if self.weights not in (GAUSSIAN, ORTHOGONAL):
            raise ValueError(f"unknown weight ensemble {self.weights!r}")
        if self.nonlinearity not in ("linear", "relu", "hardtanh"):
            raise ValueError(
                f"nonlinearity {self.nonlinearity!r} has no Bernoulli slope law"
            )
        if self.depth < 1:
            raise ValueError("depth must be at least 1")
        if self.sigma_w_sq <= 0.0:
            raise ValueError("sigma_w_sq must be positive")
        if not 0.0 < self.p <= 1.0:
            raise ValueError("p must lie in (0, 1]")
        if (self.p == 1.0) != (self.nonlinearity == "linear"):
            raise ValueError("p = 1 exactly iff the nonlinearity is linear")

    @classmethod
    def from_fixed_point(cls, weights, nonlinearity, depth, sigma_w_sq, fp) -> "EnsembleSpec":
        if fp.p_linear is None:
            raise ValueError("the fixed point carries no Bernoulli slope law")
        return cls(weights, nonlinearity, depth, sigma_w_sq, fp.p_linear)

    @property
    def chi(self) -> float:
        return self.sigma_w_sq * self.p

    @property
    def near_linear(self) -> bool:
        return 1.0 - self.p < NEAR_LINEAR_TOL


@dataclass(frozen=True)
class StieltjesPolynomial:
    """Coefficients (ascending powers of G) of the master polynomial at z."""

    coefficients: np.ndarray
    ensemble: str
    z: complex

    def __post_init__(self):
        object.__setattr__(
            self, "coefficients", np.asarray(self.coefficients, dtype=complex)
        )

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, g: complex) -> complex:
        return complex(np.polyval(self.coefficients[::-1], g))


@dataclass(frozen=True)
class SpectrumSummary:
    """Scalar diagnostics of a J J^T spectrum."""

    m1: float
    m2: float
    variance: float
    lambda_max: float
    s_max: float
    chi_to_L: float


def _check_depth(L: int):
    if L > MAX_POLY_DEPTH:
        raise NumericalOverflowError(
            f"depth {L} exceeds the companion-matrix cap {MAX_POLY_DEPTH}; "
            "a simultaneous (Aberth) root iteration would be required"
        )


def build_polynomial(spec: EnsembleSpec, z: complex) -> StieltjesPolynomial:
    """Master polynomial in G, expanded exactly by the binomial theorem.

    Gaussian:    w G (G z + p - 1)^L - (G z - 1) = 0
    Orthogonal:  w G (G z + p - 1)^L - (z G)^L (G z - 1) = 0
    with w = sigma_w_sq^L.  Both have degree L + 1.
    """
    z = complex(z)
    if z == 0.0:
        raise ValueError("the polynomial is parameterized by z != 0")
    L, p = spec.depth, spec.p
    _check_depth(L)
    w = spec.sigma_w_sq**L
    coeffs = np.zeros(L + 2, dtype=complex)
    zk = z ** np.arange(L + 1)
    for k in range(L + 1):
        coeffs[k + 1] += w * math.comb(L, k) * zk[k] * (p - 1.0) ** (L - k)
    if spec.weights == GAUSSIAN:
        coeffs[1] -= z
        coeffs[0] += 1.0
    else:
        coeffs[L + 1] -= z ** (L + 1)
        coeffs[L] += z**L
    if not np.all(np.isfinite(coeffs)):
        raise NumericalOverflowError(
            f"polynomial coefficients overflow at L={L}, sigma_w_sq={spec.sigma_w_sq}"
        )
    return StieltjesPolynomial(coefficients=coeffs, ensemble=spec.weights, z=z)


def _u_roots(spec: EnsembleSpec, z: complex) -> np.ndarray:
    """Roots in u = z G of the rescaled master polynomial.

    The substitution keeps roots O(1) and coefficients independent of z
    except for two entries, which conditions the companion matrix far
    better than the raw G polynomial at large |z| or L.

    For the orthogonal ensemble, clearing the (z+p)^L denominator plants
    a spurious root at u = 0 that the physical branch never visits; it
    is deflated here so root tracking cannot collapse onto it near hard
    edges where |G| diverges.
    """
    L, p = spec.depth, spec.p
    w = spec.sigma_w_sq**L
    c = np.zeros(L + 2, dtype=complex)
    for k in range(L + 1):
        c[k + 1] += w * math.comb(L, k) * (p - 1.0) ** (L - k)
    if spec.weights == GAUSSIAN:
        c[1] -= z
        c[0] += z
    else:
        c[L + 1] -= z
        c[L] += z
        c = c[1:]  # deflate the spurious u = 0 root (c[0] is identically 0)
    if not np.all(np.isfinite(c)):
        raise NumericalOverflowError(
            f"polynomial coefficients overflow at L={L}, sigma_w_sq={spec.sigma_w_sq}"
        )
    desc = c[::-1]
    nz = np.nonzero(np.abs(desc) > 0.0)[0]
    return np.roots(desc[nz[0] :])


def _candidate_g(spec: EnsembleSpec, z: complex) -> np.ndarray:
    return _u_roots(spec, z) / z


def _pick_physical(roots: np.ndarray, z: complex, target: complex) -> complex:
    """Nearest root to ``target`` among those with the Herglotz sign."""
    ok = roots.imag <= HERGLOTZ_TOL
    if not np.any(ok):
        raise BranchSelectionError(
            f"no root with Im G <= {HERGLOTZ_TOL} at z={z}", z=z
        )
    good = roots[ok]
    return complex(good[np.argmin(np.abs(good - target))])


#: A continuation step is accepted only when the tracked root moved less
#: than this fraction of its distance to the nearest other sheet.
_SAFE_STEP = 0.4

_MAX_SUBSTEP_DEPTH = 14


def _track(spec: EnsembleSpec, z_from: complex, g_from: complex, z_to: complex, depth: int = 0) -> complex:
    """Continue the physical root from (z_from, g_from) to z_to.

    Near z -> 0 the candidate roots arrange into a ring of L-th roots
    whose spacing can shrink below the per-step motion; whenever the
    motion is not small against the local sheet separation the step is
    halved recursively, so tracking never hops sheets.
    """
    cands = _candidate_g(spec, z_to)
    g_new = _pick_physical(cands, z_to, g_from)
    d_move = abs(g_new - g_from)
    others = cands[np.abs(cands - g_new) > 0.0]
    d_sheet = np.abs(others - g_new).min() if len(others) else math.inf
    if d_move <= _SAFE_STEP * d_sheet or depth >= _MAX_SUBSTEP_DEPTH:
        return g_new
    z_mid = 0.5 * (z_from + z_to)
    g_mid = _track(spec, z_from, g_from, z_mid, depth + 1)
    return _track(spec, z_mid, g_mid, z_to, depth + 1)


def solve_stieltjes(
    spec: EnsembleSpec,
    z: complex,
    prev_root: complex | None = None,
) -> complex:
    """Physical root of the master polynomial at z with Im z > 0.

    Selected by homotopy continuation from large |z| (where the root
    nearest 1/z is physical), or by proximity to ``prev_root`` when
    continuing along a grid.
    """
    z = complex(z)
    if z.imag <= 0.0:
        raise ValueError("solve_stieltjes requires Im z > 0")
    _check_depth(spec.depth)
    if prev_root is not None:
        return _pick_physical(_candidate_g(spec, z), z, complex(prev_root))
    radius = 10.0 * max(lambda_max(spec), abs(z), 1.0)
    z0 = complex(radius, max(z.imag, 1e-3 * radius))
    lz, lz0 = cmath.log(z), cmath.log(z0)
    g = 1.0 / z0
    z_prev = z0
    for t in np.linspace(0.0, 1.0, 48)[1:]:
        zt = cmath.exp(lz + (1.0 - t) * (lz0 - lz))
        g = _track(spec, z_prev, g, zt)
        z_prev = zt
    return g


def _sweep(
    spec: EnsembleSpec,
    grid: np.ndarray,
    eps_scale: float,
    check_continuity: bool,
) -> np.ndarray:
    """G(lambda + i eps) along a grid, tracked by descending continuation.

    Seeds from the 1/z asymptote far to the right of the support, then
    walks the grid from its top end downwards so each step reuses the
    previous root.
    """
    eps = eps_scale * np.maximum(1.0, grid)
    top = grid[-1] + 1j * eps[-1]
    g = solve_stieltjes(spec, top)
    out = np.empty(len(grid), dtype=complex)
    out[-1] = g
    z_prev = top
    for i in range(len(grid) - 2, -1, -1):
        z = grid[i] + 1j * eps[i]
        g = _track(spec, z_prev, g, z)
        out[i] = g
        z_prev = z
    if check_continuity:
        _check_jumps(grid, out, eps_scale)
    return out


def _check_jumps(grid: np.ndarray, g: np.ndarray, eps_scale: float):
    """Flag continuation jumps an order beyond the locally implied bound.

    Jumps are normalized by the grid spacing (a discrete derivative) so
    that refinement boundaries in non-uniform grids do not false-fire;
    genuine branch capture moves the root by O(|G|) in a single step.
    """
    jump = np.abs(np.diff(g))
    deriv = jump / np.diff(grid)
    floor = 1e-3 * np.abs(g).max() / (grid[-1] - grid[0])
    for i in range(1, len(deriv) - 1):
        local = max(deriv[i - 1], deriv[i + 1], floor)
        # support edges make the local derivative spike while the jump
        # itself stays small; capture moves the root by O(|G|) at once
        big_jump = jump[i] > 0.3 * max(abs(g[i]), abs(g[i + 1]))
        if deriv[i] > 10.0 * local and big_jump:
            raise BranchSelectionError(
                f"root jump |dG| = {jump[i]:.3e} at lambda={grid[i]:.6g} "
                f"exceeds 10x the locally implied bound; branch capture",
                z=complex(grid[i], eps_scale * max(1.0, grid[i])),
            )


def _spike_density(
    spec: EnsembleSpec, grid: np.ndarray | None, n_grid: int
) -> free_prob.SpectralDensity:
    """Point-mass spectrum of the (near-)isometric orthogonal network.

    All nonzero eigenvalues sit at sigma_w_sq^L; the spike is drawn three
    grid points wide (relative width 1e-9) so the mass is kept while the
    location stays sharp.
    """
    lam0 = spec.sigma_w_sq**spec.depth
    if grid is None:
        grid = np.geomspace(1e-6 * lam0, 1.05 * lam0, n_grid)
    grid = np.asarray(grid, dtype=float)
    half = 1e-9 * lam0
    pts = np.unique(np.concatenate([grid, [lam0 - half, lam0, lam0 + half]]))
    density = np.zeros_like(pts)
    k = int(np.searchsorted(pts, lam0))
    mass = spec.p
    density[k] = mass / half
    return free_prob.SpectralDensity(
        abscissa=pts,
        density=density,
        zero_atom=1.0 - spec.p,
        variable=free_prob.EIGENVALUE,
    )


def default_grid(spec: EnsembleSpec, n: int = 2000, epsilon: float = 1e-6) -> np.ndarray:
    """Grid refined near 0 (mass pile-up) and on both sides of the edge.

    Covers roughly [1e-6, 1.05] x lambda_max with geometric clustering
    near 0 and near the spectral edge, where (inverse-)square-root
    behaviour needs resolving down to the smearing scale.  The lower
    bound stays two orders above epsilon so the zero atom's smeared pole
    does not leak into the continuous density.
    """
    lam_max = lambda_max(spec)
    lam_lo = max(1e-6 * lam_max, 200.0 * epsilon)
    lo = np.geomspace(lam_lo, 0.9 * lam_max, int(0.68 * n))
    below = lam_max - np.geomspace(1e-7 * lam_max, 0.1 * lam_max, int(0.22 * n))
    above = lam_max + np.geomspace(1e-7 * lam_max, 0.05 * lam_max, n - len(lo) - len(below))
    return np.unique(np.concatenate([lo, below, above]))


def theory_density(
    spec: EnsembleSpec,
    grid=None,
    epsilon: float = 1e-6,
    n_grid: int = 2000,
    check_continuity: bool = True,
) -> free_prob.SpectralDensity:
    """Eigenvalue density of J J^T on a grid, with the zero atom reported.

    Evaluates the physical root at eps and eps/2 above the axis
    (both scaled by max(1, lambda)) and Richardson-extrapolates the
    imaginary part to the real axis.
    """
    if spec.weights == ORTHOGONAL and spec.near_linear:
        return _spike_density(spec, grid, n_grid)
    if grid is None:
        grid = default_grid(spec, n_grid, epsilon)
    grid = np.asarray(grid, dtype=float)
    if np.any(grid <= 0.0) or np.any(np.diff(grid) <= 0.0):
        raise ValueError("grid must be strictly increasing and positive")
    g1 = _sweep(spec, grid, epsilon, check_continuity)
    # the half-offset pass is tracked pointwise from the first so both
    # levels stay on the same branch where candidate roots cluster
    eps1 = epsilon * np.maximum(1.0, grid)
    g2 = np.empty_like(g1)
    for i, lam in enumerate(grid):
        z1 = complex(lam, eps1[i])
        z2 = complex(lam, 0.5 * eps1[i])
        g2[i] = _track(spec, z1, g1[i], z2)
    extrapolated = 2.0 * g2 - g1
    lookup = dict(zip(grid.tolist(), extrapolated.tolist()))
    return free_prob.density_from_stieltjes(
        lambda lam: lookup[lam], grid, epsilon, variable=free_prob.EIGENVALUE
    )


def linear_gaussian_density(L: int, n_phi: int = 20_000) -> free_prob.SpectralDensity:
    """Critical linear-Gaussian singular-value density, parametric in phi.

    rho(s(phi)) = (2/pi) sqrt(sin^3(phi) sin^{L-2}(L phi) / sin^{L-1}((L+1) phi))
    s(phi)      = sqrt(sin^{L+1}((L+1) phi) / (sin(phi) sin^L(L phi)))
    on phi in (0, pi / (L+1)), resorted by s.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    if n_phi < 2:
        raise ValueError("n_phi must be at least 2")
    phi = np.linspace(0.0, np.pi / (L + 1), n_phi + 2)[1:-1]
    sin_p = np.sin(phi)
    sin_L = np.sin(L * phi)
    sin_L1 = np.sin((L + 1) * phi)
    log_rho = 0.5 * (
        3.0 * np.log(sin_p) + (L - 2) * np.log(sin_L) - (L - 1) * np.log(sin_L1)
    )
    rho = (2.0 / np.pi) * np.exp(log_rho)
    log_s2 = (L + 1) * np.log(sin_L1) - np.log(sin_p) - L * np.log(sin_L)
    s = np.exp(0.5 * log_s2)
    order = np.argsort(s)
    s, rho = s[order], rho[order]
    keep = np.concatenate([[True], np.diff(s) > 0.0])
    return free_prob.SpectralDensity(
        abscissa=s[keep],
        density=rho[keep],
        zero_atom=0.0,
        variable=free_prob.SINGULAR_VALUE,
    )


def lambda_max(spec: EnsembleSpec) -> float:
    """Closed-form upper edge of the J J^T spectrum.

    Gaussian: exact edge from the branch point of M^{-1} (the vanishing
    discriminant), valid for every p in (0, 1]; reduces to
    sigma_w^{2L} L^{-L} (L+1)^{L+1} in the linear case.

    Orthogonal: for L (1 - p) > 1 the branch-point formula
    (sigma_w^2 p)^L (1-p)/p L^L / (L-1)^{L-1}; otherwise the continuous
    part piles up against the hard edge sigma_w^{2L} (the two branches
    agree at L (1 - p) = 1, and p = 1 is the isometric point mass).
    """
    L, p, sw = spec.depth, spec.p, spec.sigma_w_sq
    if spec.weights == GAUSSIAN:
        m = (-(L - 1) + math.sqrt((L - 1) ** 2 + 4.0 * L * p)) / (2.0 * L)
        log_lam = L * math.log(sw * (m + p)) + math.log1p(1.0 / m)
    else:
        if L * (1.0 - p) <= 1.0:
            log_lam = L * math.log(sw)
        else:
            log_lam = (
                L * math.log(sw * p)
                + math.log((1.0 - p) / p)
                + L * math.log(L)
                - (L - 1) * math.log(L - 1)
            )
    if log_lam > 700.0:
        raise NumericalOverflowError(f"lambda_max overflows: exp({log_lam:.1f})")
    return math.exp(log_lam)


def lambda_max_asymptote(spec: EnsembleSpec) -> float:
    """Large-L edge asymptote at order L; a diagnostic, never exact.

    Gaussian: (sigma_w^2 p)^L (e / p) L.
    Orthogonal: (sigma_w^2 p)^L (1 - p) / p (e L - e / 2).
    """
    L, p = spec.depth, spec.p
    chi_L = spec.chi**L
    if spec.weights == GAUSSIAN:
        return chi_L * (math.e / p) * L
    return chi_L * (1.0 - p) / p * (math.e * L - 0.5 * math.e)


def spectral_edge_numeric(
    spec: EnsembleSpec,
    bracket: tuple[float, float],
    tol: float = 1e-4,
    epsilon: float = 1e-6,
    density_threshold: float = 1e-8,
) -> float:
    """Largest lambda where the continuous density vanishes, by bisection.

    Classifies a point as inside the support when the Richardson-
    extrapolated density exceeds ``density_threshold``; the bracket must
    straddle the edge.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ValueError("bracket must be ordered")

    def rho_at(lam: float) -> float:
        e1 = epsilon * max(1.0, lam)
        g1 = solve_stieltjes(spec, complex(lam, e1))
        g2 = solve_stieltjes(spec, complex(lam, 0.5 * e1))
        return -(2.0 * g2 - g1).imag / math.pi

    inside_lo = rho_at(lo) > density_threshold
    inside_hi = rho_at(hi) > density_threshold
    if not (inside_lo and not inside_hi):
        raise NoRootInBracketError(
            f"bracket ({lo}, {hi}) does not straddle the spectral edge"
        )
    while hi - lo > tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if rho_at(mid) > density_threshold:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def moments_lagrange(spec: EnsembleSpec) -> SpectrumSummary:
    """First two moments of J J^T from series reversion of M^{-1}.

    Gaussian:    m1 = chi^L,  m2 = chi^{2L} (L + p) / p.
    Orthogonal:  m1 = chi^L,  m2 = chi^{2L} (1 + L (1 - p) / p).
    The variances chi^{2L} L / p and chi^{2L} L (1 - p) / p follow
    without cancellation.
    """
    L, p = spec.depth, spec.p
    chi = spec.chi
    m1 = chi**L
    chi_2L = chi ** (2 * L)
    if spec.weights == GAUSSIAN:
        m2 = chi_2L * (L + p) / p
        variance = chi_2L * L / p
    else:
        m2 = chi_2L * (1.0 + L * (1.0 - p) / p)
        variance = chi_2L * L * (1.0 - p) / p
    lam_max = lambda_max(spec)
    return SpectrumSummary(
        m1=m1,
        m2=m2,
        variance=variance,
        lambda_max=lam_max,
        s_max=math.sqrt(lam_max),
        chi_to_L=m1,
    )


@dataclass(frozen=True)
class SweepRow:
    """One cell of an s_max depth/q* sweep."""

    depth: int
    q_star: float
    weights: str
    nonlinearity: str
    s_max: float


def smax_sweep(specs) -> list[SweepRow]:
    """Tabulate s_max = sqrt(lambda_max) for a batch of ensemble specs.

    q* is recovered from p for hardtanh; it is reported as NaN where the
    slope law does not pin it down (linear, relu).
    """
    rows = []
    for spec in specs:
        if spec.nonlinearity == "hardtanh" and spec.p < 1.0:
            q_star = signal_prop.q_star_for_p(spec.p)
        else:
            q_star = float("nan")
        rows.append(
            SweepRow(
                depth=spec.depth,
                q_star=q_star,
                weights=spec.weights,
                nonlinearity=spec.nonlinearity,
                s_max=math.sqrt(lambda_max(spec)),
            )
        )
    return rows
