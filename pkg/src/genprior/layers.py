"""Generative-layer and latent-prior scalar blocks.

A layer maps an input variable z (pre-activation, Gaussian with second
moment rho_prev in the wide-network limit) to an output x = sigma(z), with
sigma either the identity (LinearPass) or relu.  The layer partition
function couples a quadratic field (B, A) on the output to a Gaussian cavity
N(omega, V) on the input:

    Z_out(B, A, omega, V) = int dz N(z; omega, V) exp(-A sigma(z)^2/2 + B sigma(z)).

LinearPass is Gaussian-times-Gaussian and fully closed form.  Relu splits
into a point mass at x = 0 (z < 0) plus a truncated-Gaussian branch
(x = z > 0), both expressed through the normal cdf; the point mass is why
this Z_out is never quadratured over x.

The update functions of the fixed-point system are expectations under the
teacher measure at field strength r and input overlap s (V = rho_prev - s):

    Lambda_x(r, s)   = E[(E_Q[x])^2]          new output overlap,
    Lambda_out(r, s) = E[(d_omega log Z_out)^2]   hat-message to the input,
    Psi_out(r, s)    = E[log Z_out]           layer potential,

where the teacher draws omega = sqrt(s) eta, z* = omega + sqrt(V) w,
x* = sigma(z*), B = r x* + sqrt(r) xi for independent standard Gaussians
(eta, w, xi).  This parametrization stays well conditioned arbitrarily close
to perfect recovery (r ~ 1/V_FLOOR), where the raw E_{xi,eta}[Z_out ...]
form concentrates on an unresolvable sliver of the (xi, eta) plane.

For the free energy we also expose the tilted potential

    Psi_out~(r, s) = Psi_out(r, s) - (r/2) * rho_out,

whose integrand log Z_out - (B x* - r x*^2 / 2) is evaluated with the
divergent pieces cancelled analytically, never numerically.

The latent prior block (Z_z, Lambda_z, Psi_z) is the same structure one
level down, for a Gaussian or Gauss-Bernoulli prior.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import log_ndtr, ndtr, ndtri

from .channels import UnsupportedOperation
from .quadrature import QuadratureRule

VAR_FLOOR = 1e-12
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# internal teacher-grid sizes for the relu layer; the integrands are analytic
# on each quadrature panel, so these converge far below the 1e-5 identity
# tolerances (probed directly in the test suite by raising them)
_RELU_GRID = {
    "omega_body": 24,  # Gauss-Legendre per body half-panel of the cavity mean
    "omega_side": 28,  # Gauss-Legendre per Gaussian side panel
    "trunc": 16,       # Gauss-Legendre per positive-branch half-panel
    "field": 16,       # Gauss-Hermite for the output-field noise
}
# denser grid for the potential path: the tilted log-partition has a
# branch-swap crease inside the positive window that converges only
# algebraically, but potentials are evaluated once per solve, not per sweep
_RELU_GRID_PSI = {"omega_body": 24, "omega_side": 28, "trunc": 48, "field": 32}
_WINDOW = 8.5   # crossover half-width, in units of sqrt(V)
_RANGE = 12.0   # Gaussian support half-width, in units of sqrt(s)


class LayerKind(Enum):
    LINEAR_PASS = "linear"
    RELU = "relu"


class PriorKind(Enum):
    GAUSSIAN = "gaussian"
    GAUSS_BERNOULLI = "gauss_bernoulli"


@dataclass(frozen=True)
class LatentPrior:
    """Separable latent prior: standard Gaussian, or Gauss-Bernoulli with a
    fraction ``sparsity`` of standard-Gaussian nonzeros (so rho_z = sparsity)."""

    kind: PriorKind = PriorKind.GAUSSIAN
    sparsity: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.sparsity <= 1.0:
            raise ValueError(f"sparsity must be in (0, 1], got {self.sparsity}")
        if self.kind is PriorKind.GAUSSIAN and self.sparsity != 1.0:
            raise ValueError("gaussian prior requires sparsity = 1")

    @property
    def rho(self) -> float:
        return self.sparsity


@dataclass(frozen=True)
class LayerPoint:
    """Layer evaluation point: output field (b, a), input cavity (omega, v)."""

    b: float
    a: float
    omega: float
    v: float

    def __post_init__(self):
        if not self.v > 0:
            raise ValueError(f"cavity variance v must be positive, got {self.v}")
        if self.a < 0:
            raise ValueError(f"field precision a must be >= 0, got {self.a}")


@lru_cache(maxsize=None)
def _gh(order: int) -> tuple[np.ndarray, np.ndarray]:
    from .quadrature import _gh_cached

    return _gh_cached(order)


@lru_cache(maxsize=None)
def _gl_unit(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights mapped to (0, 1)."""
    x, w = leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _log_npdf(x):
    return -_LOG_SQRT_2PI - 0.5 * x * x


class _Moments(NamedTuple):
    log_z: np.ndarray
    ex: np.ndarray
    exx: np.ndarray
    ez: np.ndarray
    ezz: np.ndarray
    var_x: np.ndarray


def _linear_moments(B, A, omega, V) -> _Moments:
    B, A, omega, V = np.broadcast_arrays(B, A, omega, V)
    V = np.maximum(V, VAR_FLOOR)
    a_q = np.maximum(A + 1.0 / V, VAR_FLOOR)
    m = (B + omega / V) / a_q
    # fused exponent: b'^2/(2 a') - omega^2/(2V) without cancellation
    log_z = -0.5 * np.log1p(A * V) + (V * B * B + 2.0 * B * omega - A * omega * omega) / (
        2.0 * (1.0 + A * V)
    )
    var = 1.0 / a_q
    exx = m * m + var
    return _Moments(log_z=log_z, ex=m, exx=exx, ez=m, ezz=exx, var_x=var)


def _relu_moments(B, A, omega, V) -> _Moments:
    B, A, omega, V = np.broadcast_arrays(
        np.asarray(B, float), np.asarray(A, float), np.asarray(omega, float), np.asarray(V, float)
    )
    V = np.maximum(V, VAR_FLOOR)
    sv = np.sqrt(V)
    a_q = np.maximum(A + 1.0 / V, VAR_FLOOR)
    s = 1.0 / np.sqrt(a_q)
    m = (B + omega / V) * s * s
    u = (B + omega / V) * s

    c = omega / sv
    log_w0 = log_ndtr(-c)
    log_wp = (
        -0.5 * np.log1p(A * V)
        + (V * B * B + 2.0 * B * omega - A * omega * omega) / (2.0 * (1.0 + A * V))
        + log_ndtr(u)
    )
    log_z = np.logaddexp(log_w0, log_wp)
    wp = np.exp(log_wp - log_z)
    w0 = np.exp(log_w0 - log_z)

    h_u = np.exp(_log_npdf(u) - log_ndtr(u))  # inverse Mills, z > 0 branch
    h_c = np.exp(_log_npdf(c) - log_ndtr(-c))  # z < 0 branch
    ez_p = m + s * h_u
    var_p = np.maximum(s * s * (1.0 - u * h_u - h_u * h_u), VAR_FLOOR)
    ez_0 = omega - sv * h_c
    var_0 = np.maximum(V * (1.0 - c * h_c - h_c * h_c), VAR_FLOOR)

    ex = wp * ez_p
    ezz_p = var_p + ez_p * ez_p
    ezz_0 = var_0 + ez_0 * ez_0
    exx = wp * ezz_p
    ez = w0 * ez_0 + wp * ez_p
    ezz = w0 * ezz_0 + wp * ezz_p
    # mixture variance in stable spread form
    var_x = wp * var_p + wp * (ez_p - ex) ** 2 + w0 * ex * ex
    var_x = np.maximum(var_x, VAR_FLOOR)
    return _Moments(log_z=log_z, ex=ex, exx=exx, ez=ez, ezz=ezz, var_x=var_x)


def _moments(kind: LayerKind, B, A, omega, V) -> _Moments:
    if kind is LayerKind.LINEAR_PASS:
        return _linear_moments(B, A, omega, V)
    return _relu_moments(B, A, omega, V)


def layer_log_partition(kind: LayerKind, p: LayerPoint) -> float:
    """log Z_out(B, A, omega, V), closed form for both layer kinds."""
    mom = _moments(kind, p.b, p.a, p.omega, p.v)
    val = float(mom.log_z)
    if not np.isfinite(val):
        from .quadrature import NumericDomainError

        raise NumericDomainError(f"layer partition diverged at {p}", node=p)
    return val


def layer_posterior(kind: LayerKind, B, A, omega, V):
    """Vectorized output-posterior mean/variance and input score (AMP denoisers).

    Returns (E[x], Var[x], d_omega log Z, d^2_omega log Z).
    """
    mom = _moments(kind, B, A, omega, V)
    Vf = np.maximum(np.asarray(V, float), VAR_FLOOR)
    g = (mom.ez - omega) / Vf
    var_z = mom.ezz - mom.ez * mom.ez
    dg = (var_z - Vf) / (Vf * Vf)
    return mom.ex, mom.var_x, g, dg


# ---------------------------------------------------------------------------
# teacher grids


def _check_rs(r: float, s: float, rho_prev: float) -> float:
    if not rho_prev > 0:
        raise ValueError(f"rho_prev must be positive, got {rho_prev}")
    if r < 0:
        raise ValueError(f"field strength r must be >= 0, got {r}")
    if s < 0 or s > rho_prev * (1.0 + 1e-9):
        raise ValueError(f"input overlap s={s} outside [0, rho_prev={rho_prev}]")
    return max(rho_prev - s, VAR_FLOOR)


class _LayerValues(NamedTuple):
    lam_x: float
    lam_out: float
    psi: float
    psi_tilde: float


def _linear_se_values(r: float, s: float, rho_prev: float) -> _LayerValues:
    v = max(rho_prev - s, VAR_FLOOR)
    rv = r * v
    lam_x = rho_prev - 1.0 / max(r + 1.0 / v, VAR_FLOOR)
    lam_out = r / (1.0 + rv)
    psi_tilde = -0.5 * math.log1p(rv)
    psi = psi_tilde + 0.5 * r * rho_prev
    return _LayerValues(lam_x, lam_out, psi, psi_tilde)


def _gl_panel(lo: float, hi: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = _gl_unit(order)
    return lo + (hi - lo) * t, (hi - lo) * w


def _omega_grid(s: float, v: float, grid: dict) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature for the cavity mean omega ~ N(0, s).

    The teacher integrands cross over on the omega-scale sqrt(v) around zero
    (the sign of the pre-activation flips there).  The measure is covered by
    Gauss-Legendre panels in the standardized variable t = omega/sqrt(s):
    two body half-panels meeting at the crossover (nodes cluster at zero)
    plus one plain Gaussian panel per side.  Weights carry the density;
    everything is analytic per panel, so convergence is spectral.
    """
    if s <= 0.0:
        return np.zeros(1), np.ones(1)
    sq = math.sqrt(s)
    cut = min(_WINDOW * math.sqrt(v) / sq, _RANGE)
    panels = [
        _gl_panel(-cut, 0.0, grid["omega_body"]),
        _gl_panel(0.0, cut, grid["omega_body"]),
    ]
    if cut < _RANGE:
        panels.append(_gl_panel(cut, _RANGE, grid["omega_side"]))
        panels.append(_gl_panel(-_RANGE, -cut, grid["omega_side"]))
    t = np.concatenate([p[0] for p in panels])
    w = np.concatenate([p[1] for p in panels])
    dens = np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    return sq * t, w * dens


def _positive_branch_window(omega: np.ndarray, sv: float, grid: dict) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights for int_{z>0} N(z; omega, sv^2) h(z) dz.

    The standardized variable w = (z - omega)/sv runs over
    [max(-omega/sv, -W), max(-omega/sv, 0) + W]; beyond that window the
    Gaussian mass is O(1e-16) relative to the branch.  The window is split
    at the density peak w = 0 (two panels, possibly one degenerate) so no
    panel spans more than W sigmas.  Weights carry the density.
    """
    t, w_gl = _gl_unit(grid["trunc"])
    a = -omega / sv
    lo = np.maximum(a, -_WINDOW)
    hi = np.maximum(a, 0.0) + _WINDOW
    mid = np.clip(0.0, lo, hi)
    w_std = np.concatenate(
        [
            lo[:, None] + (mid - lo)[:, None] * t[None, :],
            mid[:, None] + (hi - mid)[:, None] * t[None, :],
        ],
        axis=1,
    )
    lengths = np.concatenate(
        [np.broadcast_to((mid - lo)[:, None], (a.size, t.size)),
         np.broadcast_to((hi - mid)[:, None], (a.size, t.size))],
        axis=1,
    )
    dens = np.exp(-0.5 * w_std * w_std) / math.sqrt(2.0 * math.pi)
    weights = lengths * np.tile(w_gl, 2)[None, :] * dens
    return omega[:, None] + sv * w_std, weights


def _relu_se_values(
    r: float, s: float, rho_prev: float, rule: QuadratureRule, want_psi: bool = True
) -> _LayerValues:
    v = max(rho_prev - s, VAR_FLOOR)
    sv = math.sqrt(v)
    sr = math.sqrt(r)
    rv = r * v
    a_q = r + 1.0 / v
    inv_sqrt_aq = 1.0 / math.sqrt(a_q)

    grid = _RELU_GRID if not want_psi else _RELU_GRID_PSI
    omega, w_omega = _omega_grid(s, v, grid)
    xi, w_xi = _gh(grid["field"])
    z_pos, w_pos = _positive_branch_window(omega, sv, grid)  # (no, nt)

    # omega-only pieces
    c = omega / sv
    log_w0 = log_ndtr(-c)
    h_c = np.exp(_log_npdf(c) - log_w0)
    ez_0 = omega - sv * h_c
    p_neg = ndtr(-omega / sv)

    def lean(b, om, lw0, ez0):
        """f = E[x], g = (E[z] - omega)/v for field b, cavity om (arrays)."""
        bo = b + om / v
        u = bo * inv_sqrt_aq
        log_phi_u = log_ndtr(u)
        log_wp = (
            -0.5 * math.log1p(rv)
            + (v * b * b + 2.0 * b * om - r * om * om) / (2.0 * (1.0 + rv))
            + log_phi_u
        )
        log_z = np.logaddexp(lw0, log_wp)
        wp = np.exp(log_wp - log_z)
        w0 = 1.0 - wp
        m = bo / a_q
        h_u = np.exp(_log_npdf(u) - log_phi_u)
        ez_p = m + inv_sqrt_aq * h_u
        f = wp * ez_p
        g = (w0 * ez0 + f - om) / v
        return f, g, log_phi_u

    # x* = 0 branch: B = sqrt(r) xi, shapes (no, nb)
    b0 = sr * xi[None, :]
    om0 = omega[:, None]
    f0, g0, lphi0 = lean(b0, om0, log_w0[:, None], ez_0[:, None])
    f2_0 = (f0 * f0) @ w_xi
    g2_0 = (g0 * g0) @ w_xi

    # x* = z > 0 branch: B = r z + sqrt(r) xi, shapes (no, nt, nb)
    bp = r * z_pos[:, :, None] + sr * xi[None, None, :]
    omp = omega[:, None, None]
    fp, gp, lphip = lean(bp, omp, log_w0[:, None, None], ez_0[:, None, None])
    f2_p = np.einsum("otb,b,ot->o", fp * fp, w_xi, w_pos)
    g2_p = np.einsum("otb,b,ot->o", gp * gp, w_xi, w_pos)

    lam_x = float(w_omega @ (p_neg * f2_0 + f2_p))
    lam_out = float(w_omega @ (p_neg * g2_0 + g2_p))

    rho_out = 0.5 * rho_prev
    if not want_psi:
        return _LayerValues(lam_x, lam_out, math.nan, math.nan)

    # tilted log-partition; on the x*=0 branch T = 0 so log Z~ = log Z
    lz0 = np.logaddexp(
        log_w0[:, None],
        -0.5 * math.log1p(rv)
        + (v * b0 * b0 + 2.0 * b0 * om0 - r * om0 * om0) / (2.0 * (1.0 + rv))
        + lphi0,
    )
    psi_0 = lz0 @ w_xi
    # positive branch: log Z~ = logaddexp(log Phi(-omega/sv) - T, logG~ + log Phi(u))
    t_std = (z_pos - omega[:, None]) / sv
    srv = math.sqrt(rv)
    core = (rv * (xi[None, None, :] ** 2 - t_std[:, :, None] ** 2)) / (2.0 * (1.0 + rv)) - (
        srv * t_std[:, :, None] * xi[None, None, :]
    ) / (1.0 + rv)
    log_g_tilde = -0.5 * math.log1p(rv) + core + lphip
    big_t = 0.5 * r * z_pos[:, :, None] ** 2 + sr * xi[None, None, :] * z_pos[:, :, None]
    lztp = np.logaddexp(log_w0[:, None, None] - big_t, log_g_tilde)
    psi_t_p = np.einsum("otb,b,ot->o", lztp, w_xi, w_pos)

    psi_tilde = float(w_omega @ (p_neg * psi_0 + psi_t_p))
    psi = psi_tilde + 0.5 * r * rho_out
    return _LayerValues(lam_x, lam_out, psi, psi_tilde)


def _layer_se_values(
    kind: LayerKind,
    r: float,
    s: float,
    rho_prev: float,
    rule: QuadratureRule,
    want_psi: bool = True,
) -> _LayerValues:
    _check_rs(r, s, rho_prev)
    if kind is LayerKind.LINEAR_PASS:
        vals = _linear_se_values(r, s, rho_prev)
        rho_out = rho_prev
    else:
        vals = _relu_se_values(r, s, rho_prev, rule, want_psi=want_psi)
        rho_out = 0.5 * rho_prev
    lam_x = min(max(vals.lam_x, 0.0), rho_out)
    lam_out = max(vals.lam_out, 0.0)
    return _LayerValues(lam_x, lam_out, vals.psi, vals.psi_tilde)


def layer_update_x(kind: LayerKind, r: float, s: float, rho_prev: float, rule: QuadratureRule) -> float:
    """Lambda_x(r, s): new overlap of the layer output, in [0, rho_out]."""
    return _layer_se_values(kind, r, s, rho_prev, rule, want_psi=False).lam_x


def layer_update_out(kind: LayerKind, r: float, s: float, rho_prev: float, rule: QuadratureRule) -> float:
    """Lambda_out(r, s): hat-message passed to the layer input."""
    return _layer_se_values(kind, r, s, rho_prev, rule, want_psi=False).lam_out


def layer_potential(kind: LayerKind, r: float, s: float, rho_prev: float, rule: QuadratureRule) -> float:
    """Psi_out(r, s) with independent Gaussians on the two slots."""
    return _layer_se_values(kind, r, s, rho_prev, rule).psi


def layer_potential_tilde(
    kind: LayerKind, r: float, s: float, rho_prev: float, rule: QuadratureRule
) -> float:
    """Psi_out(r, s) - (r/2) rho_out, finite in the perfect-recovery limit."""
    return _layer_se_values(kind, r, s, rho_prev, rule).psi_tilde


def layer_output_moment(kind: LayerKind, rho_prev: float) -> float:
    """Second moment of sigma(z) for z ~ N(0, rho_prev)."""
    return rho_prev if kind is LayerKind.LINEAR_PASS else 0.5 * rho_prev


# ---------------------------------------------------------------------------
# latent prior


def _log1m(p: float) -> float:
    return -math.inf if p >= 1.0 else math.log1p(-p)


def prior_log_partition(prior: LatentPrior, b: float, a: float) -> float:
    """log Z_z(B, A) for the latent prior."""
    if a < 0:
        raise ValueError(f"precision a must be >= 0, got {a}")
    log_gauss = b * b / (2.0 * (1.0 + a)) - 0.5 * math.log1p(a)
    if prior.sparsity >= 1.0:
        return log_gauss
    rho_s = prior.sparsity
    return float(np.logaddexp(_log1m(rho_s), math.log(rho_s) + log_gauss))


def prior_posterior(prior: LatentPrior, B, A):
    """Vectorized posterior mean/variance of the latent scalar (AMP input step)."""
    B = np.asarray(B, float)
    one_a = np.maximum(1.0 + A, VAR_FLOOR)
    if prior.sparsity >= 1.0:
        mean = B / one_a
        var = np.broadcast_to(1.0 / one_a, mean.shape).copy()
        return mean, var
    rho_s = prior.sparsity
    log_odds = math.log((1.0 - rho_s) / rho_s) + 0.5 * np.log(one_a) - B * B / (2.0 * one_a)
    wg = 1.0 / (1.0 + np.exp(np.clip(log_odds, -700, 700)))
    mean = wg * B / one_a
    ezz = wg * (B * B / (one_a * one_a) + 1.0 / one_a)
    var = np.maximum(ezz - mean * mean, VAR_FLOOR)
    return mean, var


def _prior_teacher_grid(prior: LatentPrior, rule: QuadratureRule):
    """(z* nodes, xi nodes, 2D weights) for the scalar denoising teacher."""
    xi, w_xi = _gh(rule.order)
    if prior.sparsity >= 1.0:
        return xi[:, None], xi[None, :], np.outer(w_xi, w_xi)
    # mixture: zero atom (weight 1 - rho_s) + gaussian component
    z = np.concatenate([[0.0], xi])[:, None]
    w_z = np.concatenate([[1.0 - prior.sparsity], prior.sparsity * w_xi])
    return z, xi[None, :], np.outer(w_z, w_xi)


def prior_update(prior: LatentPrior, t: float, rule: QuadratureRule) -> float:
    """Lambda_z(t) in [0, rho_z]: squared posterior-mean overlap of scalar denoising."""
    if t < 0:
        raise ValueError(f"snr t must be >= 0, got {t}")
    if prior.sparsity >= 1.0:
        return t / (1.0 + t)
    z, xi, w = _prior_teacher_grid(prior, rule)
    b = t * z + math.sqrt(t) * xi
    mean, _ = prior_posterior(prior, b, t)
    val = float(np.sum(w * mean * mean))
    return min(max(val, 0.0), prior.rho)


def prior_potential(prior: LatentPrior, t: float, rule: QuadratureRule) -> float:
    """Psi_z(t) = E[log Z_z] under the scalar denoising teacher."""
    if t < 0:
        raise ValueError(f"snr t must be >= 0, got {t}")
    return prior_potential_tilde(prior, t, rule) + 0.5 * t * prior.rho


def prior_potential_tilde(prior: LatentPrior, t: float, rule: QuadratureRule) -> float:
    """Psi_z(t) - (t/2) rho_z, finite as t -> infinity.

    The integrand log Z_z - (B z* - t z*^2 / 2) is assembled branchwise with
    the large-t pieces cancelled analytically:

        zero branch:     log(1 - rho_s) - t z*^2 / 2 - sqrt(t) xi z*
        gaussian branch: log(rho_s) + (sqrt(t) xi - z*)^2 / (2 (1 + t))
                         - z*^2 / 2 - log(1 + t) / 2
    """
    if t < 0:
        raise ValueError(f"snr t must be >= 0, got {t}")
    if prior.sparsity >= 1.0:
        return -0.5 * math.log1p(t)
    z, xi, w = _prior_teacher_grid(prior, rule)
    sqt = math.sqrt(t)
    log_zero = _log1m(prior.sparsity) - 0.5 * t * z * z - sqt * xi * z
    diff = sqt * xi - z
    log_gauss = (
        math.log(prior.sparsity)
        + diff * diff / (2.0 * (1.0 + t))
        - 0.5 * z * z
        - 0.5 * math.log1p(t)
    )
    log_z_tilde = np.logaddexp(log_zero, log_gauss)
    return float(np.sum(w * log_z_tilde))


# ---------------------------------------------------------------------------
# structure helpers


def second_moment_propagate(kinds: Sequence[LayerKind], rho_z: float) -> list[float]:
    """Second moments [rho_1 = rho_z, ..., rho_{L+1} = rho_x] through the stack.

    LinearPass preserves the pre-activation second moment (weights have
    variance 1/k_in), relu halves it.
    """
    if not rho_z > 0:
        raise ValueError(f"rho_z must be positive, got {rho_z}")
    moments = [float(rho_z)]
    for kind in kinds:
        moments.append(layer_output_moment(kind, moments[-1]))
    return moments


def layer_stability_coeffs(
    kind: LayerKind, rho_prev: float, rule: QuadratureRule
) -> tuple[float, float, float]:
    """Raw squared moments ((E0[x^2])^2, (E0[xz])^2, (E0[z^2]-rho_prev)^2)
    under the unconditioned layer measure Q0, for the zero-fixed-point Jacobian.

    Only layers with E0[x] = 0 admit the expansion; relu is rejected.
    """
    if kind is LayerKind.RELU:
        raise UnsupportedOperation(
            "relu layer biases estimation (E0[x] != 0): no uninformative fixed point"
        )
    if not rho_prev > 0:
        raise ValueError(f"rho_prev must be positive, got {rho_prev}")
    # LinearPass: x = z exactly, all moments closed form
    return (rho_prev * rho_prev, rho_prev * rho_prev, 0.0)


def uninformative_fixed_point_exists(spec) -> bool:
    """True iff the all-zero overlap state is a fixed point: zero-mean prior,
    unbiased layers (no relu), and an even channel."""
    from .channels import ChannelKind

    if spec.channel is not ChannelKind.ABS:
        return False
    return all(kind is LayerKind.LINEAR_PASS for kind, _ in spec.layers)
