"""Threshold location: weak recovery (alpha_c), perfect recovery (alpha_IT),
and the algorithmic transition (alpha_alg).

alpha_c is where the all-zero fixed point loses linear stability.  The
Jacobian of the update sweep at zero is assembled from the small-overlap
coefficients of channel, layers and prior; the zero state is unstable as
soon as its spectral radius exceeds one.  For all-LinearPass stacks with a
Gaussian latent the instability point is available in closed form,

    alpha_c = (1/2) * (1 + sum_{l=1..L} prod_{k=0..l-1} beta_{L-k})^(-1)

for the |.| channel, and the same without the 1/2 for the linear channel.

alpha_IT is located by bisection on the informed branch: perfect recovery
reached AND its free energy not above the uninformative branch.  For pure
LinearPass or pure relu stacks the dimension-counting values

    linear: min(1, {prod_{k=1..l} 1/beta_{L-k+1}}_{l=1..L-1}, rho)
    relu:   min(1/2, {(1/2) prod_{k=1..l} 1/beta_{L-k+1}}_{l=1..L-1}, rho)

serve as an independent oracle.  alpha_alg bisects the uninformative branch
on perfect recovery alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import ChannelKind, UnsupportedOperation, channel_stability_coeff
from .layers import LayerKind, layer_stability_coeffs, uninformative_fixed_point_exists
from .quadrature import QuadratureRule
from .state_evolution import (
    PERFECT_RECOVERY_FRACTION,
    FixedPointResult,
    InitKind,
    NetworkSpec,
    default_rule,
    se_solve,
)

THRESHOLD_MAX_ITER = 40000  # continuous transitions need ~3e4 sweeps at 1e-4 resolution


@dataclass(frozen=True)
class ThresholdReport:
    """Thresholds for one spec; alpha_c is None when no zero fixed point exists."""

    alpha_c: float | None
    alpha_it: float
    alpha_alg: float
    delta_alg: float
    methods: dict
    resolution: float


class PhaseRegion:
    UNDETECTABLE = "undetectable"
    WEAK_RECOVERY = "weak_recovery"
    HARD = "hard"
    EASY = "easy"


def jacobian_at_zero(spec: NetworkSpec, alpha: float, rule: QuadratureRule | None = None) -> np.ndarray:
    """Jacobian of the update sweep at the all-zero fixed point.

    State ordering (q_x, qhat_x, q_1, qhat_1, ..., q_L, qhat_L), dimension
    2(L+1).  Entries carry the alpha, beta_l and 1/rho^2 prefactors of the
    small-overlap expansions; all entries are nonnegative squared moments.
    """
    if rule is None:
        rule = default_rule()
    if not uninformative_fixed_point_exists(spec):
        raise UnsupportedOperation("spec has no uninformative fixed point")
    depth = spec.depth
    moments = spec.second_moments
    dim = 2 * (depth + 1)
    jac = np.zeros((dim, dim))

    def iq(m):  # q_m column/row, m = 1..L+1 with L+1 = x
        return 0 if m == depth + 1 else 2 * m

    def iqh(m):
        return 1 if m == depth + 1 else 2 * m + 1

    c_y = channel_stability_coeff(spec.channel, moments[-1], rule)
    jac[iqh(depth + 1), iq(depth + 1)] = alpha * c_y / moments[-1] ** 2

    rho_z = spec.prior.rho
    jac[iq(1), iqh(1)] = rho_z * rho_z

    for l in range(1, depth + 1):
        kind, beta = spec.layers[l - 1]
        rho_prev = moments[l - 1]
        cxx, cxz, czz = layer_stability_coeffs(kind, rho_prev, rule)
        # q_{l+1} = Lambda_x^{(l)}(qhat_{l+1}, q_l)
        jac[iq(l + 1), iqh(l + 1)] = cxx / rho_prev**2
        jac[iq(l + 1), iq(l)] = cxz / rho_prev**2
        # qhat_l = beta_l * Lambda_out^{(l)}(qhat_{l+1}, q_l)
        jac[iqh(l), iqh(l + 1)] = beta * cxz / rho_prev**2
        jac[iqh(l), iq(l)] = beta * czz / rho_prev**2
    return jac


def spectral_radius(matrix: np.ndarray, tol: float = 1e-10, max_iter: int = 100000) -> float:
    """Spectral radius by power iteration on M @ M.

    The sweep Jacobian alternates hat and overlap blocks, so its spectrum
    comes in +- pairs; squaring makes the dominant eigenvalue unique.
    """
    m2 = matrix @ matrix
    n = m2.shape[0]
    v = np.ones(n) + 1e-3 * np.arange(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = m2 @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        w /= norm
        lam_new = float(w @ m2 @ w)
        if abs(lam_new - lam) < tol * max(1.0, abs(lam_new)):
            lam = lam_new
            break
        lam = lam_new
        v = w
    return math.sqrt(max(lam, 0.0))


def _bisect(predicate, lo: float, hi: float, resolution: float) -> float:
    """Bisect a monotone boolean predicate; requires P(lo)=False, P(hi)=True."""
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _expand_bracket(predicate, lo: float, hi: float, cap: float = 64.0):
    """Grow/shrink the bracket until P(lo)=False and P(hi)=True."""
    while predicate(lo):
        hi = lo
        lo *= 0.5
        if lo < 1e-6:
            return lo, hi
    while not predicate(hi):
        lo = hi
        hi *= 2.0
        if hi > cap:
            raise RuntimeError(f"threshold bracket expansion exceeded alpha={cap}")
    return lo, hi


def alpha_c_analytic(channel: ChannelKind, betas) -> float:
    """Closed-form weak-recovery threshold for an all-LinearPass stack with a
    Gaussian latent; |.| channel carries the global 1/2, linear does not."""
    betas = list(betas)
    depth = len(betas)
    total = 1.0
    for l in range(1, depth + 1):
        prod = 1.0
        for k in range(l):
            prod *= betas[depth - 1 - k]
        total += prod
    base = 1.0 / total
    return 0.5 * base if channel is ChannelKind.ABS else base


def alpha_c_numeric(
    spec: NetworkSpec, resolution: float = 1e-3, rule: QuadratureRule | None = None
) -> float:
    """Bisection on [spectral radius of the zero-point Jacobian - 1]."""
    if rule is None:
        rule = default_rule()
    if not uninformative_fixed_point_exists(spec):
        raise UnsupportedOperation("spec has no uninformative fixed point")

    def unstable(alpha):
        return spectral_radius(jacobian_at_zero(spec, alpha, rule)) > 1.0

    lo, hi = _expand_bracket(unstable, 1e-3, 1.0)
    return _bisect(unstable, lo, hi, resolution)


def alpha_it_counting(spec: NetworkSpec) -> float:
    """Dimension-counting perfect-recovery threshold (pure linear or pure relu
    stacks with a dense latent); valid for both channels."""
    kinds = set(spec.kinds)
    if len(kinds) > 1:
        raise UnsupportedOperation("counting threshold needs a uniform layer stack")
    relu = kinds == {LayerKind.RELU}
    head = 0.5 if relu else 1.0
    vals = [head]
    betas = spec.betas
    depth = spec.depth
    prod = 1.0
    for l in range(1, depth):
        prod /= betas[depth - l]
        vals.append(head * prod)
    vals.append(spec.rho)
    return min(vals)


def _is_perfect(result: FixedPointResult, spec: NetworkSpec) -> bool:
    return result.mmse < PERFECT_RECOVERY_FRACTION * spec.rho_x


def _solve_branch(
    spec: NetworkSpec,
    alpha: float,
    init: InitKind,
    rule: QuadratureRule,
    max_iter: int,
    damping: float = 0.5,
    tol: float = 1e-10,
):
    """Branch solve with perfect-recovery early exits (threshold predicates only).

    Near a transition the sweep drifts at rate |alpha - alpha_*|, so waiting
    for full convergence costs ~1/resolution iterations.  The predicates only
    need the flow direction around the perfect-recovery point, which is
    monotone there: once the mmse falls below half the recovery cutoff the
    branch is in the perfect basin; once an informed start has grown
    monotonically well above the cutoff it has left it for good.

    Returns True iff the branch flows to (or stays at) perfect recovery.
    """
    from .state_evolution import _hat_sweep, _overlap_sweep, initial_state

    cutoff = PERFECT_RECOVERY_FRACTION * spec.rho_x
    state = initial_state(spec, init)
    q_x = state.q_x
    q = list(state.q)
    rho_x = spec.rho_x
    mmse = rho_x - q_x
    grew = 0
    fell = 0
    # sweeps for the informed transient (hidden overlaps relaxing from the
    # uniform informed gap) to settle onto the slow manifold; the transient
    # dips the signal mmse to ~0.2 cutoff even below the transition
    warmup = 150 + 120 * spec.depth
    for it in range(1, max_iter + 1):
        qhat_x, qhat = _hat_sweep(spec, alpha, q_x, q, rule)
        q_x_new, q_new = _overlap_sweep(spec, qhat_x, qhat, q, rule)
        q_x_d = (1.0 - damping) * q_x_new + damping * q_x
        q_d = [(1.0 - damping) * n + damping * o for n, o in zip(q_new, q)]
        residual = abs(q_x_d - q_x)
        for n, o in zip(q_d, q):
            residual = max(residual, abs(n - o))
        mmse_new = rho_x - q_x_d
        if init is InitKind.INFORMED:
            grew = grew + 1 if mmse_new > mmse else 0
            fell = fell + 1 if mmse_new < mmse else 0
        q_x, q, mmse = q_x_d, q_d, mmse_new
        if mmse < 0.02 * cutoff:
            return True
        if init is InitKind.INFORMED and it > warmup:
            # near the transition the drift rate vanishes; once the fast
            # modes are gone the persistent flow direction is the answer
            if grew >= 60 and mmse > 2.0 * cutoff:
                return False
            if fell >= 60 and mmse < cutoff:
                return True
        if residual < tol:
            return mmse < cutoff
    return mmse < cutoff


def alpha_it_numeric(
    spec: NetworkSpec,
    resolution: float = 1e-3,
    rule: QuadratureRule | None = None,
    max_iter: int = THRESHOLD_MAX_ITER,
    verify: bool = False,
) -> float:
    """Bisection on [informed branch reaches perfect recovery AND the
    perfect-recovery state minimises the free energy as v -> 0].

    In the noiseless model the informed branch value behaves like
    Phi(v) = A(alpha) + B(alpha) log v at recovery depth v = rho_x - q_x, and
    the global minimum as v -> 0 is decided by the sign of B.  By the
    envelope theorem (the conditional state is stationary in every other
    coordinate),

        B = dPhi/d(log v) = (alpha/2) (1 - V_post / v),

    with V_post the one-sweep update of v, so B > 0 is *identical* to the
    informed map contracting toward perfect recovery.  The free-energy
    minimality condition in the v -> 0 limit therefore coincides with the
    informed branch being dynamically retained (the observation that the
    statistical transition and the informed spinodal coincide for noiseless
    channels is this identity), and the predicate reduces to the retention
    test.  Comparing floored free energies instead would misplace the
    threshold by O(1/log(1/V_FLOOR)) ~ 1e-2.
    """
    if rule is None:
        rule = default_rule()

    def predicate(alpha):
        return _solve_branch(spec, alpha, InitKind.INFORMED, rule, max_iter)

    guess = _counting_guess(spec)
    lo, hi = _expand_bracket(predicate, 0.5 * guess, 3.0 * guess)
    alpha = _bisect(predicate, lo, hi, resolution)
    if verify:
        _verify_monotone(predicate, alpha, resolution)
    return alpha


def alpha_alg_numeric(
    spec: NetworkSpec,
    resolution: float = 1e-3,
    rule: QuadratureRule | None = None,
    max_iter: int = THRESHOLD_MAX_ITER,
    verify: bool = False,
) -> float:
    """Bisection on [uninformative branch reaches perfect recovery]."""
    if rule is None:
        rule = default_rule()

    def predicate(alpha):
        return _solve_branch(spec, alpha, InitKind.UNINFORMATIVE, rule, max_iter)

    guess = _counting_guess(spec)
    lo, hi = _expand_bracket(predicate, 0.5 * guess, 3.0 * guess)
    alpha = _bisect(predicate, lo, hi, resolution)
    if verify:
        _verify_monotone(predicate, alpha, resolution)
    return alpha


def informed_free_energy_at_depth(
    spec: NetworkSpec,
    alpha: float,
    v: float,
    rule: QuadratureRule,
    damping: float = 0.5,
    tol: float = 1e-9,
    max_iter: int = 20000,
    warm_start: list | None = None,
) -> tuple[float, list]:
    """Free energy of the informed state at recovery depth v = rho_x - q_x.

    The signal overlap is clamped at rho_x - v, the hat variables are
    channel-driven, and the hidden overlaps are iterated to their conditional
    fixed point, with Aitken extrapolation on the slow geometric tail.  Phi
    is stationary in the hidden overlaps there, so a 1e-9 residual leaves a
    second-order (~1e-14) energy error.  In the noiseless model the
    perfect-recovery branch carries a c(alpha) * log(v) term whose
    coefficient changes sign exactly at the statistical transition, so
    comparing two depths gives the v -> 0 minimality test that a single
    floored evaluation cannot (its crossing is shifted by
    O(1/log(1/v_floor))).

    Returns (free energy, hidden overlaps) for warm-starting the next depth.
    """
    from .state_evolution import OverlapState, _hat_sweep, _overlap_sweep, free_energy, initial_state

    moments = spec.second_moments
    q_x = moments[-1] - v
    if warm_start is not None:
        q = list(warm_start)
    else:
        q = list(initial_state(spec, InitKind.INFORMED).q)
    prev_delta = None
    for it in range(1, max_iter + 1):
        qhat_x, qhat = _hat_sweep(spec, alpha, q_x, q, rule)
        _, q_new = _overlap_sweep(spec, qhat_x, qhat, q, rule)
        q_d = [(1.0 - damping) * n + damping * o for n, o in zip(q_new, q)]
        delta = [n - o for n, o in zip(q_d, q)]
        # tolerance relative to each coordinate's distance from its ceiling:
        # pinned coordinates descend through many decades and an absolute
        # criterion would strand them mid-flight, biasing the log v terms
        converged = all(
            abs(d) < tol * max(moments[i] - qi, 1e-12) + 1e-16
            for i, (d, qi) in enumerate(zip(delta, q_d))
        )
        q = q_d
        if converged:
            break
        if prev_delta is not None and it % 25 == 0:
            # Aitken extrapolation of the dominant geometric mode
            for i, (d2, d1) in enumerate(zip(delta, prev_delta)):
                denom = d1 - d2
                if denom != 0.0 and d1 * d2 > 0.0:
                    ratio = d2 / d1
                    if 0.0 < ratio < 0.999:
                        target = q[i] + d2 * ratio / (1.0 - ratio)
                        q[i] = min(max(target, 0.0), moments[i] - 1e-12)
        prev_delta = delta
    qhat_x, qhat = _hat_sweep(spec, alpha, q_x, q, rule)
    final = OverlapState(q_x=q_x, qhat_x=qhat_x, q=tuple(q), qhat=tuple(qhat))
    return free_energy(spec, alpha, final, rule), q


def _counting_guess(spec: NetworkSpec) -> float:
    try:
        return max(alpha_it_counting(spec), 1e-2)
    except UnsupportedOperation:
        return max(min(spec.rho, 1.0), 1e-2)


def _verify_monotone(predicate, alpha: float, resolution: float) -> None:
    below = predicate(alpha - 2.0 * resolution)
    above = predicate(alpha + 2.0 * resolution)
    if below or not above:
        raise RuntimeError(
            f"threshold predicate not monotone around alpha={alpha}: "
            f"P(alpha-2r)={below}, P(alpha+2r)={above}"
        )


def phase_region(spec: NetworkSpec, alpha: float, report: ThresholdReport) -> str:
    """Classify alpha into undetectable / weak-recovery / hard / easy."""
    if report.alpha_c is not None and alpha < report.alpha_c:
        return PhaseRegion.UNDETECTABLE
    if alpha < report.alpha_it:
        return PhaseRegion.WEAK_RECOVERY
    if alpha < report.alpha_alg:
        return PhaseRegion.HARD
    return PhaseRegion.EASY


def compute_threshold_report(
    spec: NetworkSpec,
    resolution: float = 1e-3,
    rule: QuadratureRule | None = None,
    max_iter: int = THRESHOLD_MAX_ITER,
) -> ThresholdReport:
    """Full report for one spec: alpha_c (if defined), alpha_IT, alpha_alg."""
    if rule is None:
        rule = default_rule()
    methods = {}
    if uninformative_fixed_point_exists(spec):
        all_linear = all(k is LayerKind.LINEAR_PASS for k in spec.kinds)
        if all_linear and spec.prior.sparsity >= 1.0 and spec.depth > 0:
            alpha_c = alpha_c_analytic(spec.channel, spec.betas)
            methods["alpha_c"] = "analytic"
        else:
            alpha_c = alpha_c_numeric(spec, resolution, rule)
            methods["alpha_c"] = "numeric"
    else:
        alpha_c = None
    alpha_it = alpha_it_numeric(spec, resolution, rule, max_iter=max_iter)
    methods["alpha_it"] = "numeric"
    alpha_alg = alpha_alg_numeric(spec, resolution, rule, max_iter=max_iter)
    methods["alpha_alg"] = "numeric"
    return ThresholdReport(
        alpha_c=alpha_c,
        alpha_it=alpha_it,
        alpha_alg=alpha_alg,
        delta_alg=max(alpha_alg - alpha_it, 0.0),
        methods=methods,
        resolution=resolution,
    )
