"""Gauss-Hermite quadrature and a Monte-Carlo oracle for Gaussian expectations.

Everything downstream reduces to expectations over one or two independent
standard Gaussians,

    E_xi[f(xi)]        = (2*pi)^(-1/2) * int exp(-xi^2/2) f(xi) dxi,
    E_{xi,eta}[f]      = tensor product of the above,

which we evaluate with Gauss-Hermite rules rescaled to the standard normal
measure: `hermgauss` provides nodes/weights for int exp(-x^2) g(x) dx, so
nodes are scaled by sqrt(2) and weights by 1/sqrt(pi).  The weights then sum
to 1 and a rule of order n is exact for polynomials of degree < 2n.

`mc_expect` is the independent cross-check: a seeded, counter-based
(Philox) Monte-Carlo estimate of the same expectations, reproducible
bit-for-bit across platforms for a fixed seed.
"""
from __future__ import annotations

import inspect
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.hermite import hermgauss


class NumericDomainError(ValueError):
    """An integrand produced a non-finite value.

    Carries the offending node (or node pair) in ``node``.
    """

    def __init__(self, message: str, node=None):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights for E_{xi ~ N(0,1)}[f(xi)] = sum_i w_i f(z_i)."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int


@lru_cache(maxsize=None)
def _gh_cached(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = hermgauss(order)
    if not (np.isfinite(x).all() and np.isfinite(w).all()):
        # the Hermite weight recurrence overflows double precision near order 385
        raise ValueError(f"order {order} exceeds double-precision Gauss-Hermite range")
    # enforce exact +- node pairing and weight symmetry
    nodes = math.sqrt(2.0) * 0.5 * (x - x[::-1])
    weights = 0.5 * (w + w[::-1]) / math.sqrt(math.pi)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_hermite_rule(order: int) -> QuadratureRule:
    """Return the standard-normal Gauss-Hermite rule of the given order.

    Exact for polynomials of degree < 2*order; weights sum to 1.
    """
    if not isinstance(order, (int, np.integer)) or order < 2:
        raise ValueError(f"quadrature order must be an integer >= 2, got {order!r}")
    nodes, weights = _gh_cached(int(order))
    return QuadratureRule(nodes=nodes, weights=weights, order=int(order))


def _check_finite(vals: np.ndarray, nodes) -> None:
    bad = ~np.isfinite(vals)
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        node = nodes[tuple(idx)] if isinstance(nodes, np.ndarray) else nodes
        raise NumericDomainError(f"integrand not finite at node {node}", node=node)


def expect_gaussian_1d(f: Callable, rule: QuadratureRule) -> float:
    """E_{xi ~ N(0,1)}[f(xi)] by Gauss-Hermite quadrature.

    ``f`` must accept an ndarray of nodes and evaluate elementwise.
    """
    vals = np.asarray(f(rule.nodes), dtype=float)
    _check_finite(vals, rule.nodes)
    return float(rule.weights @ vals)


def expect_gaussian_2d(f: Callable, rule: QuadratureRule) -> float:
    """E over two independent standard Gaussians via the tensor-product rule."""
    z1 = rule.nodes[:, None]
    z2 = rule.nodes[None, :]
    vals = np.asarray(f(z1, z2), dtype=float)
    vals = np.broadcast_to(vals, (rule.order, rule.order))
    grid = np.broadcast_to(z1 + 1j * z2, vals.shape)  # node lookup for error reporting
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise NumericDomainError(
            f"integrand not finite at node ({rule.nodes[i]}, {rule.nodes[j]})",
            node=(rule.nodes[i], rule.nodes[j]),
        )
    del grid
    return float(rule.weights @ vals @ rule.weights)


def _arity(f: Callable) -> int:
    params = [
        p
        for p in inspect.signature(f).parameters.values()
        if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD)
    ]
    return len(params)


def mc_expect(f: Callable, n_samples: int, seed: int) -> tuple[float, float]:
    """Seeded Monte-Carlo Gaussian expectation: returns (mean, stderr).

    Accepts one- or two-argument vectorized integrands.  Uses the Philox
    counter-based generator so results are reproducible for a fixed seed.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    if _arity(f) == 2:
        a = rng.standard_normal(n_samples)
        b = rng.standard_normal(n_samples)
        vals = np.asarray(f(a, b), dtype=float)
    else:
        a = rng.standard_normal(n_samples)
        vals = np.asarray(f(a), dtype=float)
    _check_finite(vals, a)
    mean = float(np.mean(vals))
    if n_samples == 1:
        return mean, 0.0
    stderr = float(np.std(vals, ddof=1) / math.sqrt(n_samples))
    return mean, stderr
