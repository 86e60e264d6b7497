"""Network-level fixed-point system and free energy.

A `NetworkSpec` stacks a measurement channel on top of L generative layers
and a latent prior.  The asymptotic state is one overlap per variable,

    q_x  for the signal  x = h^{L+1}        (mmse = rho_x - q_x),
    q_l  for the hidden variables h^l, l = 1..L   (q_1 is the latent overlap),

plus conjugate hat-overlaps.  One synchronous sweep updates the hat
variables top-down with the freshly computed upstream hat (the measurement
side first), then all overlaps from the new hats and the previous overlaps:

    qhat_x = alpha * Lambda_y(q_x)
    qhat_l = beta_l * Lambda_out^{(l)}(qhat_{l+1}, q_l),   qhat_{L+1} = qhat_x
    q_1    = Lambda_z(qhat_1)
    q_l    = Lambda_x^{(l-1)}(qhat_l, q_{l-1})
    q_x    = Lambda_x^{(L)}(qhat_x, q_L)

This is exactly the update schedule of the multi-layer AMP state evolution,
so trajectories are comparable iteration by iteration with the simulator in
`genprior.amp`.

The free energy is assembled per variable block with weights
kappa_m = k_m / d = rho * prod_{j<m} beta_j (kappa_{L+1} = 1):

    Phi = - sum_m kappa_m [ (qhat_m / 2) (rho_m - q_m) + Psi~_m ]
          - alpha * Psi_y(q_x)

where Psi~ are the tilted potentials (Psi minus its linear-in-qhat part).
This grouping is an algebraic identity with the plain sum of potentials but
stays finite and accurate at perfect-recovery fixed points, where qhat
diverges like 1/V_FLOOR and the naive terms would cancel catastrophically.
Gradients of Phi vanish exactly at fixed points of the sweep; the Bayes
branch is the global minimum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from .channels import ChannelKind, channel_potential, channel_update
from .layers import (
    LatentPrior,
    LayerKind,
    layer_potential_tilde,
    layer_update_out,
    layer_update_x,
    prior_potential_tilde,
    prior_update,
    second_moment_propagate,
)
from .quadrature import QuadratureRule, gauss_hermite_rule

PERFECT_RECOVERY_FRACTION = 1e-6  # mmse < fraction * rho_x counts as exact
INFORMED_GAP = 1e-6
UNINFORMATIVE_EPS = 1e-6


def default_rule(order: int = 100) -> QuadratureRule:
    return gauss_hermite_rule(order)


class InitKind(Enum):
    INFORMED = "informed"
    UNINFORMATIVE = "uninformative"


@dataclass(frozen=True)
class NetworkSpec:
    """Measurement channel + ordered generative stack + latent prior.

    ``layers`` runs from the input side (l = 1, fed by the latent) to the
    output side (l = L, producing the signal); each entry is
    (LayerKind, beta_l) with beta_l = k_{l+1} / k_l.  The compression
    rho = k/d must satisfy prod_l (1/beta_l) = rho, so an empty stack
    (L = 0, signal drawn from the prior) forces rho = 1.
    """

    channel: ChannelKind
    layers: tuple[tuple[LayerKind, float], ...]
    prior: LatentPrior
    rho: float

    def __post_init__(self):
        object.__setattr__(
            self, "layers", tuple((LayerKind(k), float(b)) for k, b in self.layers)
        )
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        prod = 1.0
        for _, beta in self.layers:
            if not beta > 0:
                raise ValueError(f"aspect ratios beta must be positive, got {beta}")
            prod /= beta
        if abs(prod - self.rho) > 1e-10 * max(1.0, self.rho):
            raise ValueError(
                f"product of 1/beta over layers is {prod}, inconsistent with rho={self.rho}"
            )

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def betas(self) -> tuple[float, ...]:
        return tuple(b for _, b in self.layers)

    @property
    def kinds(self) -> tuple[LayerKind, ...]:
        return tuple(k for k, _ in self.layers)

    @property
    def second_moments(self) -> tuple[float, ...]:
        """(rho_1 = rho_z, ..., rho_{L+1} = rho_x)."""
        return _moments_cached(self.kinds, self.prior.rho)

    @property
    def rho_x(self) -> float:
        return self.second_moments[-1]

    @property
    def kappas(self) -> tuple[float, ...]:
        """kappa_m = k_m / d for m = 1..L+1 (kappa_{L+1} = 1)."""
        out = [self.rho]
        for _, beta in self.layers:
            out.append(out[-1] * beta)
        return tuple(out)


@lru_cache(maxsize=None)
def _moments_cached(kinds: tuple[LayerKind, ...], rho_z: float) -> tuple[float, ...]:
    return tuple(second_moment_propagate(kinds, rho_z))


@dataclass(frozen=True)
class OverlapState:
    """Order parameters (q_x, qhat_x, {q_l, qhat_l}) of the fixed-point system."""

    q_x: float
    qhat_x: float
    q: tuple[float, ...] = ()
    qhat: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))
        object.__setattr__(self, "qhat", tuple(float(v) for v in self.qhat))
        if len(self.q) != len(self.qhat):
            raise ValueError("q and qhat must have the same length")
        vals = (self.q_x, self.qhat_x, *self.q, *self.qhat)
        if not np.isfinite(vals).all():
            raise ValueError("overlap state entries must be finite")
        if self.q_x < 0 or self.qhat_x < 0 or any(v < 0 for v in self.q + self.qhat):
            raise ValueError("overlaps and hat-overlaps must be nonnegative")


@dataclass(frozen=True)
class FixedPointResult:
    state: OverlapState
    mmse: float
    free_energy: float
    iterations: int
    converged: bool
    init: InitKind


def _hat_sweep(spec: NetworkSpec, alpha: float, q_x: float, q: list, rule: QuadratureRule):
    """Top-down hat update: returns (qhat_x, qhat list)."""
    moments = spec.second_moments
    qhat_x = alpha * channel_update(spec.channel, q_x, moments[-1], rule)
    depth = spec.depth
    qhat = [0.0] * depth
    r_next = qhat_x
    for l in range(depth, 0, -1):
        kind, beta = spec.layers[l - 1]
        qhat[l - 1] = beta * layer_update_out(kind, r_next, q[l - 1], moments[l - 1], rule)
        r_next = qhat[l - 1]
    return qhat_x, qhat


def _overlap_sweep(spec: NetworkSpec, qhat_x: float, qhat: list, q_old: list, rule: QuadratureRule):
    """Bottom-up overlap update from new hats and previous overlaps."""
    moments = spec.second_moments
    depth = spec.depth
    if depth == 0:
        return prior_update(spec.prior, qhat_x, rule), []
    q_new = [0.0] * depth
    q_new[0] = prior_update(spec.prior, qhat[0], rule)
    for l in range(2, depth + 1):
        kind, _ = spec.layers[l - 2]
        q_new[l - 1] = layer_update_x(kind, qhat[l - 1], q_old[l - 2], moments[l - 2], rule)
    kind_top, _ = spec.layers[depth - 1]
    q_x_new = layer_update_x(kind_top, qhat_x, q_old[depth - 1], moments[depth - 1], rule)
    return q_x_new, q_new


def se_step(spec: NetworkSpec, alpha: float, state: OverlapState, rule: QuadratureRule) -> OverlapState:
    """One synchronous sweep of the fixed-point system (hats, then overlaps)."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    q_old = list(state.q)
    qhat_x, qhat = _hat_sweep(spec, alpha, state.q_x, q_old, rule)
    q_x_new, q_new = _overlap_sweep(spec, qhat_x, qhat, q_old, rule)
    return OverlapState(q_x=q_x_new, qhat_x=qhat_x, q=tuple(q_new), qhat=tuple(qhat))


def initial_state(
    spec: NetworkSpec,
    init: InitKind,
    eps: float = UNINFORMATIVE_EPS,
    informed_gap: float = INFORMED_GAP,
) -> OverlapState:
    moments = spec.second_moments
    depth = spec.depth
    if init is InitKind.INFORMED:
        q_x = moments[-1] * (1.0 - informed_gap)
        q = tuple(moments[l] * (1.0 - informed_gap) for l in range(depth))
    else:
        q_x = eps
        q = tuple(eps for _ in range(depth))
    return OverlapState(q_x=q_x, qhat_x=0.0, q=q, qhat=tuple(0.0 for _ in range(depth)))


def se_solve(
    spec: NetworkSpec,
    alpha: float,
    init: InitKind = InitKind.UNINFORMATIVE,
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 5000,
    rule: QuadratureRule | None = None,
    eps_init: float = UNINFORMATIVE_EPS,
    informed_gap: float = INFORMED_GAP,
    start: OverlapState | None = None,
) -> FixedPointResult:
    """Damped iteration of `se_step` to convergence from the given initialization.

    Non-convergence is reported through ``converged=False``, not raised.  The
    damping factor is the weight of the old state; it is bumped to 0.9 if the
    residual grows for three consecutive sweeps (oscillation near spinodals).
    ``start`` overrides the standard initialization (the ``init`` tag is still
    recorded on the result).
    """
    if not 0.0 <= damping < 1.0:
        raise ValueError(f"damping must be in [0, 1), got {damping}")
    if rule is None:
        rule = default_rule()
    state = start if start is not None else initial_state(spec, init, eps_init, informed_gap)
    q_x = state.q_x
    q = list(state.q)
    gamma = damping
    prev_residual = math.inf
    grew = 0
    converged = False
    iterations = 0
    qhat_x, qhat = 0.0, list(state.qhat)
    for iterations in range(1, max_iter + 1):
        qhat_x, qhat = _hat_sweep(spec, alpha, q_x, q, rule)
        q_x_new, q_new = _overlap_sweep(spec, qhat_x, qhat, q, rule)
        q_x_d = (1.0 - gamma) * q_x_new + gamma * q_x
        q_d = [(1.0 - gamma) * n + gamma * o for n, o in zip(q_new, q)]
        residual = abs(q_x_d - q_x)
        for n, o in zip(q_d, q):
            residual = max(residual, abs(n - o))
        q_x, q = q_x_d, q_d
        if residual < tol:
            converged = True
            break
        if residual > prev_residual:
            grew += 1
            if grew >= 3:
                gamma = max(gamma, 0.9)
        else:
            grew = 0
        prev_residual = residual
    qhat_x, qhat = _hat_sweep(spec, alpha, q_x, q, rule)
    final = OverlapState(q_x=q_x, qhat_x=qhat_x, q=tuple(q), qhat=tuple(qhat))
    mmse = spec.rho_x - q_x
    phi = free_energy(spec, alpha, final, rule)
    return FixedPointResult(
        state=final, mmse=mmse, free_energy=phi, iterations=iterations, converged=converged, init=init
    )


def se_trajectory(
    spec: NetworkSpec,
    alpha: float,
    init: InitKind,
    n_iter: int,
    rule: QuadratureRule | None = None,
    damping: float = 0.0,
    eps_init: float = UNINFORMATIVE_EPS,
) -> np.ndarray:
    """Per-sweep mmse trace (for iteration-level comparison against AMP)."""
    if rule is None:
        rule = default_rule()
    state = initial_state(spec, init, eps_init)
    q_x = state.q_x
    q = list(state.q)
    out = np.empty(n_iter + 1)
    out[0] = spec.rho_x - q_x
    for it in range(1, n_iter + 1):
        qhat_x, qhat = _hat_sweep(spec, alpha, q_x, q, rule)
        q_x_new, q_new = _overlap_sweep(spec, qhat_x, qhat, q, rule)
        q_x = (1.0 - damping) * q_x_new + damping * q_x
        q = [(1.0 - damping) * n + damping * o for n, o in zip(q_new, q)]
        out[it] = spec.rho_x - q_x
    return out


def free_energy(spec: NetworkSpec, alpha: float, state: OverlapState, rule: QuadratureRule | None = None) -> float:
    """Scalar potential Phi at the given overlaps (minimization convention).

    Stationary at every fixed point of `se_step`; the Bayes-optimal branch is
    the global minimum, and at the statistical transition the two branch
    values cross.
    """
    if rule is None:
        rule = default_rule()
    moments = spec.second_moments
    kappas = spec.kappas
    depth = spec.depth
    q_all = list(state.q) + [state.q_x]
    qhat_all = list(state.qhat) + [state.qhat_x]
    total = 0.0
    for m in range(1, depth + 2):
        q_m = q_all[m - 1]
        qhat_m = qhat_all[m - 1]
        if m == 1:
            psi_t = prior_potential_tilde(spec.prior, qhat_m, rule)
        else:
            kind, _ = spec.layers[m - 2]
            psi_t = layer_potential_tilde(kind, qhat_m, q_all[m - 2], moments[m - 2], rule)
        total -= kappas[m - 1] * (0.5 * qhat_m * (moments[m - 1] - q_m) + psi_t)
    total -= alpha * channel_potential(spec.channel, state.q_x, moments[-1], rule)
    return float(total)


# ---------------------------------------------------------------------------
# constrained landscape


@dataclass(frozen=True)
class LandscapePoint:
    q_x: float
    phi: float
    converged: bool


def _invert_top_update(
    spec: NetworkSpec, target: float, q: list, rule: QuadratureRule
) -> float | None:
    """Solve Lambda_x^{(L)}(r, q_L) = target for the conjugate field r >= 0.

    With q_x clamped, stationarity of Phi in qhat_x fixes qhat_x implicitly;
    this keeps d(Phi)/d(q_x) = 0 exactly at full fixed points (envelope).
    """
    moments = spec.second_moments
    depth = spec.depth
    if depth == 0:
        if spec.prior.sparsity >= 1.0:
            if target >= 1.0:
                return None
            return max(target / (1.0 - target), 0.0)
        lo, hi = 0.0, 1.0
        f = lambda r: prior_update(spec.prior, r, rule) - target
    else:
        kind, _ = spec.layers[depth - 1]
        rho_prev = moments[depth - 1]
        v = max(rho_prev - q[depth - 1], 1e-12)
        if kind is LayerKind.LINEAR_PASS:
            rho_out = rho_prev
            if target >= rho_out:
                return None
            return max(1.0 / (rho_out - target) - 1.0 / v, 0.0)
        lo, hi = 0.0, 1.0
        f = lambda r: layer_update_x(kind, r, q[depth - 1], rho_prev, rule) - target
    if f(lo) >= 0.0:
        return 0.0
    while f(hi) < 0.0:
        hi *= 10.0
        if hi > 1e14:
            return None
    from scipy.optimize import brentq

    return float(brentq(f, lo, hi, xtol=1e-12, rtol=1e-12))


def landscape_profile(
    spec: NetworkSpec,
    alpha: float,
    qx_grid,
    rule: QuadratureRule | None = None,
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 5000,
) -> list[LandscapePoint]:
    """Free-energy slice Phi(q_x) with all other overlaps at their conditional
    fixed point (clamped q_x, implicit qhat_x).  Warm-starts along the grid;
    non-converged grid points are flagged, not fatal.
    """
    if rule is None:
        rule = default_rule()
    moments = spec.second_moments
    depth = spec.depth
    q = [UNINFORMATIVE_EPS] * depth
    out = []
    for qx in qx_grid:
        if not 0.0 <= qx < moments[-1]:
            raise ValueError(f"grid q_x={qx} outside [0, rho_x={moments[-1]})")
        ok = True
        qhat_x = 0.0
        if depth == 0:
            r = _invert_top_update(spec, qx, q, rule)
            if r is None:
                out.append(LandscapePoint(qx, math.nan, False))
                continue
            state = OverlapState(q_x=qx, qhat_x=r)
            out.append(LandscapePoint(qx, free_energy(spec, alpha, state, rule), True))
            continue
        converged = False
        for _ in range(max_iter):
            r = _invert_top_update(spec, qx, q, rule)
            if r is None:
                ok = False
                break
            qhat_x = r
            _, qhat = _hat_sweep_clamped(spec, qhat_x, q, rule)
            _, q_new = _overlap_sweep(spec, qhat_x, qhat, q, rule)
            q_d = [(1.0 - damping) * n + damping * o for n, o in zip(q_new, q)]
            residual = max(abs(n - o) for n, o in zip(q_d, q))
            q = q_d
            if residual < tol:
                converged = True
                break
        if not ok:
            out.append(LandscapePoint(qx, math.nan, False))
            continue
        _, qhat = _hat_sweep_clamped(spec, qhat_x, q, rule)
        state = OverlapState(q_x=qx, qhat_x=qhat_x, q=tuple(q), qhat=tuple(qhat))
        out.append(LandscapePoint(qx, free_energy(spec, alpha, state, rule), converged))
    return out


def _hat_sweep_clamped(spec: NetworkSpec, qhat_x: float, q: list, rule: QuadratureRule):
    """Hat sweep with qhat_x imposed rather than set by the channel."""
    moments = spec.second_moments
    depth = spec.depth
    qhat = [0.0] * depth
    r_next = qhat_x
    for l in range(depth, 0, -1):
        kind, beta = spec.layers[l - 1]
        qhat[l - 1] = beta * layer_update_out(kind, r_next, q[l - 1], moments[l - 1], rule)
        r_next = qhat[l - 1]
    return qhat_x, qhat
