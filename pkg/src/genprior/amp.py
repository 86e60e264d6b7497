"""Finite-size instance generation and multi-layer AMP.

The generative chain z -> W_1 -> ... -> W_L -> x -> A -> y is run as a
cascade of GAMP blocks with scalar variances.  Each matrix block keeps an
Onsager memory term in its output mean,

    omega = M @ mean_in - V * g_prev,

and produces the field (B, A) for the variable below it:

    g  = d_omega log Z(.., omega, V),        dg = d^2_omega log Z,
    A  = -(sum_mu M_mu_j^2) mean(dg) ~ -(rows/cols) * mean(dg),
    B  = A * mean_in + M^T g.

The denoisers are exactly the scalar partition functions of
`genprior.layers` / `genprior.channels`, so one sweep of this algorithm is
the finite-size mirror of one `se_step`: hats top-down, means bottom-up.
Means start at zero and variances at the propagated second moments,
matching the uninformative state-evolution initialization.

For the |.| channel the estimate is defined up to a global sign, so MSE is
reported after sign alignment with the ground truth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import ChannelKind, channel_score
from .layers import VAR_FLOOR, LayerKind, PriorKind, layer_posterior, prior_posterior
from .quadrature import QuadratureRule
from .state_evolution import InitKind, NetworkSpec, default_rule, se_solve


@dataclass(frozen=True)
class Instance:
    """One synthetic problem: matrices, planted signal, observations.

    ``dims`` stores the realized integer widths (k_1, ..., k_{L+1} = d); the
    realized aspect ratios k_{m+1}/k_m differ from the nominal ones by
    rounding and are what state evolution should be compared against.
    """

    matrix: np.ndarray
    weights: tuple[np.ndarray, ...]
    z_star: np.ndarray
    x_star: np.ndarray
    y: np.ndarray
    dims: tuple[int, ...]
    n: int
    seed: int

    @property
    def d(self) -> int:
        return self.dims[-1]

    @property
    def realized_alpha(self) -> float:
        return self.n / self.d

    @property
    def realized_betas(self) -> tuple[float, ...]:
        return tuple(self.dims[m + 1] / self.dims[m] for m in range(len(self.dims) - 1))

    @property
    def realized_rho(self) -> float:
        return self.dims[0] / self.d


@dataclass(frozen=True)
class AmpTrace:
    mse_per_iter: np.ndarray
    converged: bool
    iterations: int


def _activation(kind: LayerKind, h: np.ndarray) -> np.ndarray:
    if kind is LayerKind.LINEAR_PASS:
        return h
    return np.maximum(h, 0.0)


def generate_instance(spec: NetworkSpec, d: int, alpha: float, seed: int) -> Instance:
    """Reproducible synthetic instance at signal dimension d and rate alpha.

    Layer widths are rounded from the nominal ratios, k_m = round(d * rho *
    prod_{j<m} beta_j); the exact integers are recorded on the instance.
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    kappas = spec.kappas
    dims = tuple(int(round(d * kap)) for kap in kappas)
    if any(k < 1 for k in dims):
        raise ValueError(f"degenerate layer widths {dims} at d={d}")
    n = int(round(alpha * d))
    if n < 1:
        raise ValueError(f"degenerate measurement count n={n}")
    rng = np.random.Generator(np.random.Philox(seed))

    k1 = dims[0]
    if spec.prior.kind is PriorKind.GAUSS_BERNOULLI and spec.prior.sparsity < 1.0:
        mask = rng.random(k1) < spec.prior.sparsity
        z = np.where(mask, rng.standard_normal(k1), 0.0)
    else:
        z = rng.standard_normal(k1)

    weights = []
    h = z
    for m, (kind, _) in enumerate(spec.layers):
        w = rng.standard_normal((dims[m + 1], dims[m])) / math.sqrt(dims[m])
        weights.append(w)
        h = _activation(kind, w @ h)
    x = h
    a = rng.standard_normal((n, dims[-1])) / math.sqrt(dims[-1])
    ax = a @ x
    y = np.abs(ax) if spec.channel is ChannelKind.ABS else ax
    return Instance(
        matrix=a,
        weights=tuple(weights),
        z_star=z,
        x_star=x,
        y=y,
        dims=dims,
        n=n,
        seed=seed,
    )


def realized_spec(instance: Instance, spec: NetworkSpec) -> NetworkSpec:
    """NetworkSpec with the instance's realized (rounded) aspect ratios."""
    layers = tuple(
        (kind, instance.realized_betas[m]) for m, (kind, _) in enumerate(spec.layers)
    )
    return NetworkSpec(
        channel=spec.channel, layers=layers, prior=spec.prior, rho=instance.realized_rho
    )


def _signal_mse(x_hat: np.ndarray, x_star: np.ndarray, channel: ChannelKind) -> float:
    d = x_star.size
    mse = float(np.sum((x_hat - x_star) ** 2) / d)
    if channel is ChannelKind.ABS:
        flipped = float(np.sum((x_hat + x_star) ** 2) / d)
        mse = min(mse, flipped)
    return mse


def amp_run(
    instance: Instance,
    spec: NetworkSpec,
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 1000,
    onsager: bool = True,
) -> AmpTrace:
    """Multi-layer AMP on one instance; per-iteration MSE against x_star.

    ``onsager=False`` drops the memory terms in the block outputs (negative
    control: this is exactly what breaks the state-evolution agreement).
    Numeric blow-up truncates the trace with converged=False.
    """
    depth = spec.depth
    moments = spec.second_moments
    dims = instance.dims
    n, d = instance.n, instance.d
    a = instance.matrix
    w = instance.weights
    y = instance.y

    means = [np.zeros(dims[m]) for m in range(depth + 1)]
    cvar = [moments[m] for m in range(depth + 1)]
    g_chan = np.zeros(n)
    g_blocks = [np.zeros(dims[m + 1]) for m in range(depth)]

    mse = [_signal_mse(means[-1], instance.x_star, spec.channel)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # measurement block
        v_chan = max(cvar[-1], VAR_FLOOR)
        omega_chan = a @ means[-1]
        if onsager:
            omega_chan -= v_chan * g_chan
        g_new, dg = channel_score(spec.channel, y, omega_chan, v_chan)
        a_field = -float(np.sum(dg)) / d
        b_field = a_field * means[-1] + a.T @ g_new
        g_chan = g_new
        fields = {depth + 1: (b_field, a_field)}

        # weight blocks, top-down
        omegas = {}
        for l in range(depth, 0, -1):
            kind, _ = spec.layers[l - 1]
            v_l = max(cvar[l - 1], VAR_FLOOR)
            omega_l = w[l - 1] @ means[l - 1]
            if onsager:
                omega_l -= v_l * g_blocks[l - 1]
            b_up, a_up = fields[l + 1]
            _, _, g_l, dg_l = layer_posterior(kind, b_up, a_up, omega_l, v_l)
            a_down = -float(np.sum(dg_l)) / dims[l - 1]
            b_down = a_down * means[l - 1] + w[l - 1].T @ g_l
            fields[l] = (b_down, a_down)
            g_blocks[l - 1] = g_l
            omegas[l] = (omega_l, v_l)

        # denoising, bottom-up
        b1, a1 = fields[1]
        mean_new, var_new = prior_posterior(spec.prior, b1, a1)
        means[0] = (1.0 - damping) * mean_new + damping * means[0]
        cvar[0] = (1.0 - damping) * float(np.mean(var_new)) + damping * cvar[0]
        for l in range(1, depth + 1):
            kind, _ = spec.layers[l - 1]
            b_up, a_up = fields[l + 1]
            omega_l, v_l = omegas[l]
            ex, var_x, _, _ = layer_posterior(kind, b_up, a_up, omega_l, v_l)
            means[l] = (1.0 - damping) * ex + damping * means[l]
            cvar[l] = (1.0 - damping) * float(np.mean(var_x)) + damping * cvar[l]

        if not all(np.isfinite(m).all() for m in means):
            return AmpTrace(np.asarray(mse), False, it)
        mse.append(_signal_mse(means[-1], instance.x_star, spec.channel))
        if abs(mse[-1] - mse[-2]) < tol:
            converged = True
            break
    return AmpTrace(np.asarray(mse), converged, it)


@dataclass(frozen=True)
class AmpSeRow:
    alpha: float
    mse_amp_mean: float
    mse_amp_stderr: float
    mse_se: float
    n_failed: int = 0


def compare_amp_se(
    spec: NetworkSpec,
    d: int,
    n_samples: int,
    alpha_grid,
    rule: QuadratureRule | None = None,
    seed: int = 0,
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 1000,
    se_max_iter: int = 5000,
) -> list[AmpSeRow]:
    """Final AMP MSE (averaged over seeded instances) next to the
    state-evolution MSE from the uninformative branch, per grid rate.

    State evolution runs on the realized (rounded) dimension ratios.
    Per-instance failures are counted, not fatal.
    """
    if rule is None:
        rule = default_rule()
    rows = []
    for ai, alpha in enumerate(alpha_grid):
        finals = []
        failed = 0
        rspec = None
        alpha_real = alpha
        for i in range(n_samples):
            inst = generate_instance(spec, d, alpha, seed=seed + 10007 * ai + i)
            if rspec is None:
                rspec = realized_spec(inst, spec)
                alpha_real = inst.realized_alpha
            trace = amp_run(inst, spec, damping=damping, tol=tol, max_iter=max_iter)
            if trace.mse_per_iter.size == 0 or not np.isfinite(trace.mse_per_iter[-1]):
                failed += 1
                continue
            finals.append(trace.mse_per_iter[-1])
        finals = np.asarray(finals)
        se = se_solve(rspec, alpha_real, InitKind.UNINFORMATIVE, rule=rule, max_iter=se_max_iter)
        mean = float(np.mean(finals)) if finals.size else math.nan
        stderr = (
            float(np.std(finals, ddof=1) / math.sqrt(finals.size)) if finals.size > 1 else 0.0
        )
        rows.append(
            AmpSeRow(
                alpha=float(alpha),
                mse_amp_mean=mean,
                mse_amp_stderr=stderr,
                mse_se=se.mmse,
                n_failed=failed,
            )
        )
    return rows
