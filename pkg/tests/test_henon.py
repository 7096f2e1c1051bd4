from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blender_lab.henon import (
    WINDOW,
    HenonParams,
    SigmaVector,
    conjugate_check,
    eval_E,
    eval_G,
    fixed_points_G,
    jacobian_G,
    theta_inverse,
    theta_map,
)


def test_G_direct_substitution():
    out = eval_G(HenonParams(1.185, -9.5), [1, 2, 3])
    assert np.allclose(out, [2, -5.5, 5.555], atol=1e-12)


def test_G_with_eta():
    # 4 + 0.01*2*3 + 0.02*9 - 9.5
    out = eval_G(HenonParams(1.185, -9.5, 0.01, 0.02), [1, 2, 3])
    assert np.allclose(out, [2, -5.26, 5.555], atol=1e-12)


def test_G_origin_fixed_at_mu_zero():
    assert np.array_equal(eval_G(HenonParams(1.185, 0.0), [0, 0, 0]), [0, 0, 0])


def test_G_rejects_xi_le_one():
    with pytest.raises(ValueError):
        HenonParams(1.0, -9.5)


def test_E_direct_substitution():
    s = SigmaVector(1, 1, 0, 0, 1)
    assert np.allclose(eval_E(s, 1.185, -9.5, [1, 2, 3]), [3.185, -5.5, 2], atol=1e-12)


def test_E_y_axis_collapse():
    s = SigmaVector(1, 1, 0, 0, 1)
    assert np.allclose(eval_E(s, 1.185, 0.0, [2.0, 0.0, 7.0]), [2.37, 0, 0])


def test_theta_is_swap_for_unit_sigma():
    s = SigmaVector(1, 1, 0, 0, 1)
    assert np.allclose(theta_map(s, [1, 2, 3]), [3, 2, 1])
    assert s.eta_bar() == (0.0, 0.0)
    assert conjugate_check(s, 1.185, -9.5, np.random.default_rng(0).uniform(-5, 5, (50, 3))) < 1e-13


def _sym_E_conj(s, xi, mu, v):
    # independent oracle: expand Theta^-1 E Theta by hand with exact rationals
    from fractions import Fraction as F

    s1, s2, s3, s4, s5 = (F(c) for c in s)
    x, y, z = (F(c) for c in v)
    X, Y, Z = s1 * z / s2, y / s2, s5 * x / s2  # Theta
    e = (F(xi) * X + s1 * Y, F(mu) / s2 + s2 * Y * Y + s3 * X * X + s4 * X * Y, s5 * Y)
    return (s2 * e[2] / s5, s2 * e[1], s2 * e[0] / s1)


def test_conjugacy_against_symbolic_expansion():
    s = SigmaVector(0.7, -1.3, 0.4, 0.25, 2.1)
    v = (0.3, -1.2, 2.5)
    exact = _sym_E_conj(s.as_tuple(), 1.185, -9.5, v)
    e1, e2 = s.eta_bar()
    g = eval_G(HenonParams(1.185, -9.5, e1, e2), v)
    assert np.allclose(g, [float(c) for c in exact], atol=1e-12)


def test_conjugacy_random():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        c = rng.uniform(0.2, 2.0, 5) * rng.choice([-1, 1], 5)
        worst = max(worst, conjugate_check(SigmaVector(*c), 1.185, -9.5,
                                           rng.uniform(-5, 5, (100, 3))))
    assert worst < 1e-10


def test_conjugacy_needs_nonzero_product():
    with pytest.raises(ValueError):
        conjugate_check(SigmaVector(0, 1, 0, 0, 1), 1.185, -9.5, [[0, 0, 0]])


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
@settings(max_examples=50, deadline=None)
def test_theta_roundtrip(v):
    s = SigmaVector(0.5, 2.0, 0.1, 0.3, -1.5)
    assert np.allclose(theta_inverse(s, theta_map(s, v)), v, atol=1e-12)


def test_jacobian_structure():
    J = jacobian_G(HenonParams(1.185, -9.5), [0, 3, 0])
    assert np.all(J[:, 0] == 0)
    assert np.array_equal(J[1], [0, 6, 0])


def test_jacobian_finite_differences():
    rng = np.random.default_rng(2)
    p = HenonParams(1.185, -9.5, 0.01, -0.007)
    h = 1e-5
    for v in rng.uniform(-5, 5, (50, 3)):
        fd = np.column_stack([(eval_G(p, v + h * e) - eval_G(p, v - h * e)) / (2 * h)
                              for e in np.eye(3)])
        assert np.max(np.abs(fd - jacobian_G(p, v))) < 1e-6


def test_fixed_points_reference_values():
    fp = fixed_points_G(HenonParams(1.185, -9.5))
    assert fp.PPlus == pytest.approx((3.622499, 3.622499, -19.581076), abs=1e-6)
    assert fp.PMinus == pytest.approx((-2.622499, -2.622499, 14.175670), abs=1e-6)


def test_fixed_point_bounds_on_grid():
    for xi, mu in WINDOW.grid(10, 10):
        assert all(fixed_points_G(HenonParams(xi, mu)).window_bounds_hold().values())


def test_fixed_points_double_root():
    with pytest.raises(ValueError):
        fixed_points_G(HenonParams(1.185, 0.25))


def test_fixed_points_with_eta_are_fixed():
    p = HenonParams(1.185, -9.5, 0.01, -0.01)
    fp = fixed_points_G(p)
    for P in (fp.PMinus, fp.PPlus):
        assert np.max(np.abs(eval_G(p, P) - np.array(P))) < 1e-10


def test_window_contains():
    assert WINDOW.contains(1.185, -9.5)
    assert not WINDOW.contains(1.185, -9.5, (0.02, 0))
    assert not WINDOW.contains(1.2)
    assert math.isclose(len(WINDOW.grid(3, 4)), 12)
