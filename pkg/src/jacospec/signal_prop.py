"""Mean-field signal propagation for deep random networks.

The layer-to-layer variance map, its fixed point q*, the squared-slope
mean chi, the linear-regime fraction p, and critical lines in the
(sigma_w^2, sigma_b^2) plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfinv

from .errors import (
    ConvergenceError,
    DegenerateCriticalLineError,
    NoRootInBracketError,
    NumericalOverflowError,
    UnsupportedNonlinearityError,
)

NONLINEARITY_KINDS = ("linear", "relu", "hardtanh", "tanh")

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Nonlinearity:
    """Pointwise activation with slope map.

    ``phi`` and ``dphi`` accept scalars or arrays.  Slopes are exact:
    relu has phi'(0) = 0 and hardtanh has phi'(h) = 1 iff |h| < 1.
    """

    kind: str

    def __post_init__(self):
        if self.kind not in NONLINEARITY_KINDS:
            raise ValueError(f"unknown nonlinearity {self.kind!r}")

    def phi(self, h):
        h = np.asarray(h, dtype=float)
        if self.kind == "linear":
            return h
        if self.kind == "relu":
            return np.maximum(h, 0.0)
        if self.kind == "hardtanh":
            return np.clip(h, -1.0, 1.0)
        return np.tanh(h)

    def dphi(self, h):
        h = np.asarray(h, dtype=float)
        if self.kind == "linear":
            return np.ones_like(h)
        if self.kind == "relu":
            return (h > 0.0).astype(float)
        if self.kind == "hardtanh":
            return (np.abs(h) < 1.0).astype(float)
        t = np.tanh(h)
        return 1.0 - t * t

    @property
    def piecewise_linear(self) -> bool:
        """True when the slope only takes the values 0 and 1."""
        return self.kind in ("linear", "relu", "hardtanh")


@dataclass(frozen=True)
class MeanFieldParams:
    """Weight and bias variance scales: Var(W_ij) = sigma_w_sq / N, Var(b_i) = sigma_b_sq."""

    sigma_w_sq: float
    sigma_b_sq: float = 0.0

    def __post_init__(self):
        if not self.sigma_w_sq > 0.0:
            raise ValueError("sigma_w_sq must be positive")
        if self.sigma_b_sq < 0.0:
            raise ValueError("sigma_b_sq must be nonnegative")


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for the unit-variance Gaussian measure."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    @classmethod
    def gauss_hermite(cls, order: int = 101) -> "QuadratureRule":
        """Gauss-Hermite rule mapped onto the standard Gaussian measure."""
        x, w = np.polynomial.hermite.hermgauss(order)
        return cls(nodes=x * math.sqrt(2.0), weights=w / math.sqrt(math.pi), order=order)

    def mean(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


@dataclass(frozen=True)
class FixedPoint:
    """Converged mean-field state.

    ``p_linear`` is None for tanh, where the slope law is not Bernoulli.
    ``degenerate`` marks maps for which every q is a fixed point.
    """

    q_star: float
    chi: float
    p_linear: float | None
    iterations: int
    residual: float
    degenerate: bool = False


def _gauss_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def _hardtanh_sq_mean(q: float) -> float:
    """E[hardtanh(sqrt(q) h)^2] for h ~ N(0, 1), in closed form.

    Splits into the truncated second moment on |h| < 1/sqrt(q) plus the
    saturated tail mass.
    """
    if q <= 0.0:
        return 0.0
    a = 1.0 / math.sqrt(q)
    inner = math.erf(a / math.sqrt(2.0))
    return q * inner - 2.0 * math.sqrt(q) * _gauss_pdf(a) + (1.0 - inner)


def q_step(
    q_prev: float,
    nl: Nonlinearity,
    params: MeanFieldParams,
    quad: QuadratureRule,
) -> float:
    """One application of the pre-activation variance map.

    Closed forms for linear/relu/hardtanh; quadrature for tanh.
    """
    if q_prev < 0.0:
        raise ValueError("q_prev must be nonnegative")
    sw, sb = params.sigma_w_sq, params.sigma_b_sq
    if nl.kind == "linear":
        out = sw * q_prev + sb
    elif nl.kind == "relu":
        out = 0.5 * sw * q_prev + sb
    elif nl.kind == "hardtanh":
        out = sw * _hardtanh_sq_mean(q_prev) + sb
    else:
        vals = nl.phi(math.sqrt(q_prev) * quad.nodes) ** 2
        out = sw * quad.mean(vals) + sb
    if not math.isfinite(out):
        raise NumericalOverflowError(f"variance map overflowed at q={q_prev!r}")
    return out


def p_linear(nl: Nonlinearity, q_star: float) -> float:
    """Probability that a neuron's slope equals 1 at the fixed point."""
    if q_star < 0.0:
        raise ValueError("q_star must be nonnegative")
    if nl.kind == "linear":
        return 1.0
    if nl.kind == "relu":
        return 0.5
    if nl.kind == "hardtanh":
        if q_star == 0.0:
            return 1.0
        return math.erf(1.0 / math.sqrt(2.0 * q_star))
    raise UnsupportedNonlinearityError(
        "p is defined only for slopes in {0, 1}; tanh has a continuous slope law"
    )


def chi(
    nl: Nonlinearity,
    params: MeanFieldParams,
    q_star: float,
    quad: QuadratureRule,
) -> float:
    """Mean squared singular value of DW at the fixed point."""
    if q_star < 0.0:
        raise ValueError("q_star must be nonnegative")
    sw = params.sigma_w_sq
    if nl.piecewise_linear:
        return sw * p_linear(nl, q_star)
    vals = nl.dphi(math.sqrt(q_star) * quad.nodes) ** 2
    out = sw * quad.mean(vals)
    if not math.isfinite(out):
        raise NumericalOverflowError(f"chi overflowed at q_star={q_star!r}")
    return out


def _is_degenerate_map(nl: Nonlinearity, params: MeanFieldParams) -> bool:
    """Maps for which q_step is the identity, so every q is a fixed point."""
    if params.sigma_b_sq != 0.0:
        return False
    if nl.kind == "linear":
        return params.sigma_w_sq == 1.0
    if nl.kind == "relu":
        return params.sigma_w_sq == 2.0
    return False


def fixed_point(
    nl: Nonlinearity,
    params: MeanFieldParams,
    quad: QuadratureRule,
    q0: float = 1.0,
    tol: float = 1e-12,
    max_iter: int = 10_000,
) -> FixedPoint:
    """Damped iteration q <- (1-a) q + a q_step(q) with a = 1/2.

    For degenerate maps (critical linear / relu with zero bias) every q
    is fixed; q0 is returned with the ``degenerate`` flag set.
    """
    if q0 < 0.0:
        raise ValueError("q0 must be nonnegative")
    p_of = (lambda q: p_linear(nl, q)) if nl.piecewise_linear else (lambda q: None)
    if _is_degenerate_map(nl, params):
        return FixedPoint(
            q_star=q0,
            chi=chi(nl, params, q0, quad),
            p_linear=p_of(q0),
            iterations=0,
            residual=0.0,
            degenerate=True,
        )
    alpha = 0.5
    q = q0
    for it in range(1, max_iter + 1):
        q_next = q_step(q, nl, params, quad)
        residual = abs(q_next - q)
        if residual <= tol:
            return FixedPoint(
                q_star=q_next,
                chi=chi(nl, params, q_next, quad),
                p_linear=p_of(q_next),
                iterations=it,
                residual=abs(q_step(q_next, nl, params, quad) - q_next),
            )
        q = (1.0 - alpha) * q + alpha * q_next
    raise ConvergenceError(
        f"no fixed point after {max_iter} iterations (last q={q!r})",
        last_iterate=q,
        iterations=max_iter,
        residual=abs(q_step(q, nl, params, quad) - q),
    )


def q_star_for_p(target_p: float) -> float:
    """The hardtanh fixed-point variance with linear fraction target_p.

    Inverts erf(1/sqrt(2 q*)) = p; the map is strictly monotone so the
    inverse is unique.
    """
    if not 0.0 < target_p < 1.0:
        raise ValueError("target_p must lie in (0, 1)")
    u = float(erfinv(target_p))
    return 1.0 / (2.0 * u * u)


def critical_line(
    nl: Nonlinearity,
    sigma_w_sq_grid,
    quad: QuadratureRule,
    tol: float = 1e-10,
    sigma_b_sq_max: float = 4.0,
) -> list[tuple[float, float, float, float]]:
    """For each sigma_w^2, the sigma_b^2 with chi = 1 at the induced fixed point.

    chi decreases monotonically in sigma_b_sq through q*, so bisection
    applies; the initial bracket [0, sigma_b_sq_max] is doubled until it
    straddles the root.  Returns rows (sigma_w_sq, sigma_b_sq, q_star,
    p_linear); p_linear is NaN for tanh.

    For linear and relu the critical set is a single point and a
    DegenerateCriticalLineError carrying it is raised instead.
    """
    if nl.kind == "linear":
        raise DegenerateCriticalLineError(
            "chi is independent of sigma_b_sq for linear networks; "
            "the only critical point is sigma_w_sq=1, sigma_b_sq=0",
            critical_point=(1.0, 0.0),
        )
    if nl.kind == "relu":
        raise DegenerateCriticalLineError(
            "chi is independent of sigma_b_sq for relu networks; "
            "the only critical point is sigma_w_sq=2, sigma_b_sq=0",
            critical_point=(2.0, 0.0),
        )

    def chi_at(sw: float, sb: float) -> tuple[float, FixedPoint]:
        fp = fixed_point(nl, MeanFieldParams(sw, sb), quad)
        return fp.chi - 1.0, fp

    rows = []
    for sw in sigma_w_sq_grid:
        sw = float(sw)
        f_lo, fp_lo = chi_at(sw, 0.0)
        if f_lo < -tol:
            raise NoRootInBracketError(
                f"chi < 1 for all sigma_b_sq >= 0 at sigma_w_sq={sw}"
            )
        if abs(f_lo) <= tol:
            rows.append((sw, 0.0, fp_lo.q_star, _p_or_nan(nl, fp_lo.q_star)))
            continue
        hi = sigma_b_sq_max
        f_hi, _ = chi_at(sw, hi)
        while f_hi > 0.0 and hi < 2.0**12:
            hi *= 2.0
            f_hi, _ = chi_at(sw, hi)
        if f_hi > 0.0:
            raise NoRootInBracketError(
                f"chi > 1 up to sigma_b_sq={hi} at sigma_w_sq={sw}"
            )
        lo = 0.0
        sb, fp = None, None
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            f_mid, fp_mid = chi_at(sw, mid)
            if abs(f_mid) <= tol:
                sb, fp = mid, fp_mid
                break
            if f_mid > 0.0:
                lo = mid
            else:
                hi = mid
        if sb is None:
            raise ConvergenceError(
                f"bisection stalled at sigma_w_sq={sw}", last_iterate=0.5 * (lo + hi)
            )
        rows.append((sw, sb, fp.q_star, _p_or_nan(nl, fp.q_star)))
    return rows


def _p_or_nan(nl: Nonlinearity, q_star: float) -> float:
    return p_linear(nl, q_star) if nl.piecewise_linear else float("nan")
