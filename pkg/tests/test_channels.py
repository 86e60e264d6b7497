import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genprior.channels import (
    ChannelKind,
    ChannelPoint,
    UnsupportedOperation,
    channel_log_partition,
    channel_potential,
    channel_stability_coeff,
    channel_update,
)
from genprior.quadrature import gauss_hermite_rule, mc_expect

RULE = gauss_hermite_rule(100)


def fd_update(kind, q, rho_x, rule, h=None):
    """Independent oracle: 2 * centered finite difference of the potential."""
    if h is None:
        h = 1e-6 * max(min(q, rho_x - q), 1e-3)
    lo = channel_potential(kind, q - h, rho_x, rule)
    hi = channel_potential(kind, q + h, rho_x, rule)
    return (hi - lo) / h


def test_log_partition_values():
    p = ChannelPoint(omega=0.0, v=1.0, y=0.0)
    assert channel_log_partition(ChannelKind.LINEAR, p) == pytest.approx(
        math.log(1.0 / math.sqrt(2.0 * math.pi)), abs=1e-12
    )
    assert channel_log_partition(ChannelKind.ABS, p) == pytest.approx(
        math.log(2.0 / math.sqrt(2.0 * math.pi)), abs=1e-12
    )


@settings(max_examples=40, deadline=None)
@given(
    mu=st.floats(min_value=-5.0, max_value=5.0),
    v=st.floats(min_value=0.05, max_value=5.0),
    y=st.floats(min_value=0.0, max_value=5.0),
)
def test_abs_channel_even_in_omega(mu, v, y):
    plus = channel_log_partition(ChannelKind.ABS, ChannelPoint(mu, v, y))
    minus = channel_log_partition(ChannelKind.ABS, ChannelPoint(-mu, v, y))
    assert plus == pytest.approx(minus, rel=1e-12, abs=1e-12)


def test_abs_rejects_negative_observation():
    with pytest.raises(ValueError):
        channel_log_partition(ChannelKind.ABS, ChannelPoint(0.0, 1.0, -0.5))


def test_invalid_channel_point():
    with pytest.raises(ValueError):
        ChannelPoint(0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        ChannelPoint(0.0, -1.0, 1.0)


def test_linear_update_closed_form_vs_quadrature_definition():
    # oracle: evaluate the defining expectation E[(d_omega log Z)^2]
    # directly on a quadrature grid for the teacher at overlap q
    rho_x, q = 1.7, 0.6
    v = rho_x - q
    xi = RULE.nodes[:, None]
    u = RULE.nodes[None, :]
    omega = math.sqrt(q) * xi
    y = omega + math.sqrt(v) * u
    g = (y - omega) / v
    direct = float(RULE.weights @ (g * g) @ RULE.weights)
    assert channel_update(ChannelKind.LINEAR, q, rho_x, RULE) == pytest.approx(1.0 / v, rel=1e-12)
    assert direct == pytest.approx(1.0 / v, rel=1e-10)


def test_abs_update_zero_at_zero_overlap():
    assert channel_update(ChannelKind.ABS, 0.0, 1.0, RULE) == 0.0


def test_abs_update_small_overlap_slope():
    for rho_x in (1.0, 5.0):
        eps = 1e-6 * rho_x
        slope = channel_update(ChannelKind.ABS, eps, rho_x, RULE) / eps
        assert slope == pytest.approx(2.0 / rho_x**2, rel=1e-3)


def test_update_matches_derivative_identity():
    for kind in (ChannelKind.LINEAR, ChannelKind.ABS):
        for frac in (0.1, 0.3, 0.5, 0.7, 0.9):
            for rho_x in (1.0, 2.3):
                q = frac * rho_x
                lam = channel_update(kind, q, rho_x, RULE)
                fd = fd_update(kind, q, rho_x, RULE)
                assert lam == pytest.approx(fd, rel=1e-6), (kind, frac, rho_x)


def test_abs_potential_flat_at_zero():
    h = 1e-5
    slope = (
        channel_potential(ChannelKind.ABS, h, 1.0, RULE)
        - channel_potential(ChannelKind.ABS, 0.0, 1.0, RULE)
    ) / h
    assert abs(slope) < 1e-4  # Lambda_y(0) = 0 implies quadratic start


def test_abs_potential_value_at_zero():
    # Psi_y(0) = log 2 - log(2 pi rho)/2 - 1/2 for y = |x0|, x0 ~ N(0, rho)
    for rho_x in (1.0, 3.0):
        expect = math.log(2.0) - 0.5 * math.log(2.0 * math.pi * rho_x) - 0.5
        assert channel_potential(ChannelKind.ABS, 0.0, rho_x, RULE) == pytest.approx(expect, abs=1e-10)


def test_update_monotone_in_overlap():
    for kind in (ChannelKind.LINEAR, ChannelKind.ABS):
        grid = np.linspace(0.0, 0.95, 18)
        vals = [channel_update(kind, q, 1.0, RULE) for q in grid]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


def test_stability_coeff_scale_free():
    assert channel_stability_coeff(ChannelKind.ABS, 1.0, RULE) == pytest.approx(2.0, abs=1e-4)
    assert channel_stability_coeff(ChannelKind.ABS, 5.0, RULE) == pytest.approx(2.0, abs=1e-4)


def test_stability_coeff_matches_update_slope():
    # at rho_x = 1 the scale-free coefficient equals the slope of Lambda_y
    rho_x = 1.0
    coeff = channel_stability_coeff(ChannelKind.ABS, rho_x, RULE)
    slope = channel_update(ChannelKind.ABS, 1e-6, rho_x, RULE) / 1e-6
    assert coeff == pytest.approx(slope, rel=1e-3)


def test_stability_coeff_rejects_linear():
    with pytest.raises(UnsupportedOperation):
        channel_stability_coeff(ChannelKind.LINEAR, 1.0, RULE)


def test_update_rejects_out_of_range():
    with pytest.raises(ValueError):
        channel_update(ChannelKind.ABS, -0.1, 1.0, RULE)
    with pytest.raises(ValueError):
        channel_update(ChannelKind.ABS, 1.5, 1.0, RULE)


@pytest.mark.slow
def test_quadrature_matches_monte_carlo_oracle():
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(10):
        rho_x = float(rng.uniform(0.5, 3.0))
        q = float(rng.uniform(0.05, 0.9) * rho_x)
        v = rho_x - q
        sq, sv = math.sqrt(q), math.sqrt(v)

        def lam_raw(xi, u):
            omega = sq * xi
            x0 = omega + sv * u
            g = (x0 * np.tanh(x0 * omega / v) - omega) / v
            return g * g

        def psi_raw(xi, u):
            omega = sq * xi
            x0 = omega + sv * u
            return (
                -0.5 * math.log(2.0 * math.pi * v)
                + np.logaddexp(-0.5 * (x0 - omega) ** 2 / v, -0.5 * (x0 + omega) ** 2 / v)
            )

        for fn, op in ((lam_raw, channel_update), (psi_raw, channel_potential)):
            mean, stderr = mc_expect(fn, 10**6, seed=1000 + checked)
            quad = op(ChannelKind.ABS, q, rho_x, RULE)
            assert abs(quad - mean) <= 3.0 * stderr + 1e-9, (q, rho_x, quad, mean, stderr)
            checked += 1
    assert checked == 20


def test_potential_doubling_plateau():
    r100 = gauss_hermite_rule(100)
    r200 = gauss_hermite_rule(200)
    for q in (0.2, 0.5, 0.9):
        a = channel_potential(ChannelKind.ABS, q, 1.0, r100)
        b = channel_potential(ChannelKind.ABS, q, 1.0, r200)
        assert abs(a - b) < 1e-8
