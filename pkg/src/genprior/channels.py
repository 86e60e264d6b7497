"""Scalar measurement channels: the linear channel y = x and the
absolute-value channel y = |x| (noiseless real phase retrieval).

For a scalar Gaussian cavity N(omega, V) the channel partition function is

    Z_y(y; omega, V) = int dx N(x; omega, V) delta(y - phi(x)),

i.e. the density of the observation given the cavity.  The three objects the
fixed-point machinery needs are

    log Z_y,
    Lambda_y(q)  -- the overlap update, an expectation of (d_omega log Z_y)^2
                    under the teacher measure at overlap q,
    Psi_y(q)     -- the channel potential, an expectation of log Z_y,

with the teacher parametrized as omega = sqrt(q) xi and x0 = omega +
sqrt(V) u for independent standard Gaussians (xi, u) and V = rho_x - q.
Writing the observation integral through x0 keeps every integrand smooth, so
Gauss-Hermite converges fast; for the |.| channel the two mirror branches
combine into even functions of x0.

Lambda_y equals 2 dPsi_y/dq; that identity is enforced by tests rather than
used for the implementation (the squared-score integrand is smoother than a
finite difference).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr, ndtri

from .quadrature import QuadratureRule

V_FLOOR = 1e-12
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class ChannelKind(Enum):
    LINEAR = "linear"
    ABS = "abs"


class UnsupportedOperation(ValueError):
    """Operation undefined for this channel/layer configuration."""


@dataclass(frozen=True)
class ChannelPoint:
    """Scalar channel evaluation point (cavity mean, cavity variance, observation)."""

    omega: float
    v: float
    y: float

    def __post_init__(self):
        if not self.v > 0:
            raise ValueError(f"cavity variance v must be positive, got {self.v}")
        if not np.isfinite([self.omega, self.v, self.y]).all():
            raise ValueError("channel point entries must be finite")


def _log_norm_pdf(x, mean, var):
    return -_LOG_SQRT_2PI - 0.5 * np.log(var) - 0.5 * (x - mean) ** 2 / var


def channel_log_partition(kind: ChannelKind, p: ChannelPoint) -> float:
    """log Z_y(y; omega, V).

    Linear: Gaussian density at y.  Abs (y >= 0): sum of the two mirror
    branches +-y.
    """
    if kind is ChannelKind.LINEAR:
        return float(_log_norm_pdf(p.y, p.omega, p.v))
    if p.y < 0:
        raise ValueError(f"absolute-value channel observations must be >= 0, got y={p.y}")
    return float(
        np.logaddexp(
            _log_norm_pdf(p.y, p.omega, p.v),
            _log_norm_pdf(-p.y, p.omega, p.v),
        )
    )


def _g_abs(y, omega, v):
    """d_omega log Z_y for the |.| channel, tanh form (vectorized)."""
    return (y * np.tanh(y * omega / v) - omega) / v


def _dg_abs(y, omega, v):
    t = np.cosh(y * omega / v)
    sech2 = 1.0 / (t * t)
    return (y * y * sech2 / v - 1.0) / v


def _g_linear(y, omega, v):
    return (y - omega) / v


def _dg_linear(y, omega, v):
    return -np.ones_like(np.broadcast_arrays(y, omega)[0]) / v


def channel_score(kind: ChannelKind, y, omega, v):
    """d_omega log Z_y and its omega-derivative, vectorized (AMP output step)."""
    if kind is ChannelKind.LINEAR:
        return _g_linear(y, omega, v), _dg_linear(y, omega, v)
    return _g_abs(y, omega, v), _dg_abs(y, omega, v)


def _check_q(q: float, rho_x: float) -> float:
    if not rho_x > 0:
        raise ValueError(f"rho_x must be positive, got {rho_x}")
    if q < 0 or q > rho_x * (1.0 + 1e-9):
        raise ValueError(f"overlap q={q} outside [0, rho_x={rho_x}]")
    return max(rho_x - q, V_FLOOR)


@lru_cache(maxsize=None)
def _gl_cached(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w  # mapped to (0, 1)


_LAYER_HALFWIDTH = 8.0  # tanh crossover region, in units of sqrt(V)


def _abs_teacher_expect(fn, q: float, v: float, rule: QuadratureRule) -> float:
    """E over the |.|-channel teacher of fn(x0, omega, v).

    The teacher draws omega ~ N(0, q) and x0 ~ N(omega, v); fn must be even
    under (omega, x0) -> (-omega, -x0).  The integrand develops an
    O(sqrt(v))-wide crossover in omega around zero (the two mirror branches
    exchange dominance there), so for q >> v the omega integral is split
    into a rescaled layer region |omega| < c sqrt(v) and inverse-cdf-mapped
    Gaussian tails; the inner x0 integral is plain Gauss-Hermite throughout.
    """
    sq = math.sqrt(max(q, 0.0))
    sv = math.sqrt(v)
    u_nodes, u_weights = rule.nodes, rule.weights

    def inner(omega):
        x0 = omega[:, None] + sv * u_nodes[None, :]
        return np.asarray(fn(x0, omega[:, None], v)) @ u_weights

    if q == 0.0:
        return float(inner(np.zeros(1))[0])

    n_sub = min(rule.order, 64)
    t, wt = _gl_cached(n_sub)
    # the layer region must resolve both the crossover (sqrt(v)) and the
    # measure (sqrt(q)); beyond 12 sigma of the measure nothing is left
    cut = min(_LAYER_HALFWIDTH * sv, 12.0 * sq)
    omega_a = cut * t
    dens_a = np.exp(-0.5 * (omega_a / sq) ** 2) / (sq * math.sqrt(2.0 * math.pi))
    val_a = 2.0 * cut * np.sum(wt * dens_a * inner(omega_a))
    # tail region: inverse-cdf map of the truncated gaussian beyond the cut
    mass = ndtr(-cut / sq)
    p = np.clip(1.0 - mass * (1.0 - t), 1e-300, 1.0 - 1e-16)
    omega_b = sq * ndtri(p)
    val_b = 2.0 * mass * np.sum(wt * inner(omega_b))
    return float(val_a + val_b)


def channel_update(kind: ChannelKind, q: float, rho_x: float, rule: QuadratureRule) -> float:
    """Lambda_y(q): expectation of (d_omega log Z_y)^2 at overlap q.

    Linear channel in closed form, 1/(rho_x - q); |.| channel by teacher
    quadrature over (omega, x0).
    """
    v = _check_q(q, rho_x)
    if kind is ChannelKind.LINEAR:
        return 1.0 / v

    def fn(x0, omega, vv):
        g = _g_abs(x0, omega, vv)  # |x0| tanh(|x0| w / v) = x0 tanh(x0 w / v)
        return g * g

    return _abs_teacher_expect(fn, q, v, rule)


def channel_potential(kind: ChannelKind, q: float, rho_x: float, rule: QuadratureRule) -> float:
    """Psi_y(q): expectation of log Z_y under the teacher at overlap q."""
    v = _check_q(q, rho_x)
    if kind is ChannelKind.LINEAR:
        return -0.5 * math.log(2.0 * math.pi * v) - 0.5

    def fn(x0, omega, vv):
        return (
            -_LOG_SQRT_2PI
            - 0.5 * math.log(vv)
            + np.logaddexp(-0.5 * (x0 - omega) ** 2 / vv, -0.5 * (x0 + omega) ** 2 / vv)
        )

    return _abs_teacher_expect(fn, q, v, rule)


def channel_stability_coeff(kind: ChannelKind, rho_x: float, rule: QuadratureRule) -> float:
    """Small-overlap coefficient of the even channel at the zero fixed point.

    Returns (1/rho_x^2) * int dy Z_y(y; 0, rho_x) (E[rho_x - x^2 | y])^2,
    which for y = |x| is E[(rho_x - x0^2)^2]/rho_x^2 = 2 for any rho_x.
    The linear channel has no zero fixed point (Lambda_y(0) > 0).
    """
    if kind is ChannelKind.LINEAR:
        raise UnsupportedOperation("linear channel has no uninformative fixed point")
    if not rho_x > 0:
        raise ValueError(f"rho_x must be positive, got {rho_x}")
    x0 = math.sqrt(rho_x) * rule.nodes
    vals = (rho_x - x0 * x0) ** 2
    return float(rule.weights @ vals) / (rho_x * rho_x)
