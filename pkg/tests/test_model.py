from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blender_lab.model import (
    XT,
    YT,
    BumpProfile,
    ModelFileError,
    ModelKernel,
    RegionError,
    UnfoldingParams,
    bump_pi,
    canonical_model,
    dump_model,
    load_model,
    model_step,
    parse_model,
    parse_number,
    parse_poly,
    perturb_rotation,
    perturb_translation,
    return_map_orbit,
    rotation_c0_constant,
    sigma_params,
    validate_model,
)

M = canonical_model()
U0 = UnfoldingParams()


def test_canonical_model_valid():
    rep = validate_model(M, 1.185)
    assert rep.passed, rep.failures()
    assert M.tau == pytest.approx(1.0)
    assert rep.eta_bar == (0.0, 0.0)


def test_spectral_check_fails_for_large_lambdaP():
    rep = validate_model(M.with_(lambdaP=0.5), 1.185)
    names = {c.name for c in rep.failures()}
    assert "spectral" in names
    assert (math.sqrt(0.5) * 3) ** (math.log(2) / math.log(3)) * 2 > 1


def test_equal_a2_a3_rejected():
    rep = validate_model(M.with_(a2=1.0, a3=1.0), 1.185)
    assert not rep.passed
    assert M.with_(a2=1.0, a3=1.0).tau == 0.0
    with pytest.raises(ZeroDivisionError):
        sigma_params(M.with_(a2=1.0, a3=1.0), 1.185)


def test_sigma_of_canonical_model():
    s = sigma_params(M, 1.185)
    assert s.as_tuple() == pytest.approx((1, 1, 0, 0, 1), abs=1e-15)


def test_sigma_homogeneity_in_beta2():
    s1 = sigma_params(M, 1.185)
    s2 = sigma_params(M.with_(beta2=2.0), 1.185)
    assert s2.s1 == pytest.approx(2 * s1.s1)
    assert s2.s5 == pytest.approx(2 * s1.s5)
    assert s2.s2 == pytest.approx(4 * s1.s2)


@given(st.floats(0.1, 3), st.floats(0.1, 3), st.floats(0.5, 2))
@settings(max_examples=50, deadline=None)
def test_sigma_product_nonzero(a3, c, b):
    m = M.with_(a3=a3, c2=c, c3=c, b2=b, b3=b)
    if validate_model(m, 1.185).passed:
        assert sigma_params(m, 1.185).conjugable


def test_bump_values():
    bp = BumpProfile(2.0, 2)
    assert bump_pi(bp, 0.25, (0.0, 0.0, 0.0)) == 1
    assert bump_pi(bp, 0.25, (0.5, 0.0, 0.0)) == 0
    xs = np.linspace(-3, 3, 601)
    vals = bp.vectorized(xs)
    assert np.all((vals >= 0) & (vals <= 1))
    assert np.allclose(vals, [bp(x) for x in xs], atol=1e-14)


def test_bump_smooth_at_plateau_edges():
    bp = BumpProfile(2.0, 2)
    h = 1e-4
    for x0 in (1.0, 2.0):
        d1 = (bp(x0 + h) - bp(x0 - h)) / (2 * h)
        d2 = (bp(x0 + h) - 2 * bp(x0) + bp(x0 - h)) / h ** 2
        assert abs(d1) < 1e-6 and abs(d2) < 1e-3


def test_bump_pi_cr_norm_bound():
    bp = BumpProfile(2.0, 2)
    rho, h = 0.25, 1e-5
    bound = bp.cr_norm() ** 3 * rho ** -2
    worst = 0.0
    rng = np.random.default_rng(0)
    for w in rng.uniform(-2 * rho, 2 * rho, (300, 3)):
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            d2 = (bump_pi(bp, rho, w + e) - 2 * bump_pi(bp, rho, w) + bump_pi(bp, rho, w - e)) / h ** 2
            worst = max(worst, abs(d2))
    assert worst <= bound


def test_translation():
    z0, w = (1.0, 0.0, 1.0), (0.01, -0.02, 0.03)
    assert perturb_translation(z0, w, 0.25, z0) == pytest.approx((1.01, -0.02, 1.03))
    far = (2.0, 0.0, 1.0)
    assert perturb_translation(z0, w, 0.25, far) == far
    rng = np.random.default_rng(1)
    worst = max(np.linalg.norm(np.subtract(perturb_translation(z0, w, 0.25, z0 + d), z0 + d))
                for d in rng.uniform(-0.5, 0.5, (500, 3)))
    assert worst <= np.linalg.norm(w) + 1e-15


def test_rotation_quarter_turn():
    assert perturb_rotation("x", 0.25, 2.0, 1.0, (0.0, 1.0, 0.0)) == pytest.approx((0, 0, 1), abs=1e-15)


def test_rotation_identity_outside_and_at_zero():
    assert perturb_rotation("x", 0.25, 2.0, 1.0, (0.0, 2.5, 0.0)) == (0.0, 2.5, 0.0)
    assert perturb_rotation("y", 0.0, 2.0, 1.0, (0.3, 0.2, 0.1)) == (0.3, 0.2, 0.1)


def test_rotation_c0_bound():
    C = rotation_c0_constant(2.0, 1.0)
    rng = np.random.default_rng(2)
    om = 1e-3
    for w in rng.uniform(-3, 3, (200, 3)):
        r = perturb_rotation("y", om, 2.0, 1.0, tuple(w))
        assert np.linalg.norm(np.subtract(r, w)) <= C * om


def test_step_X_at_anchor():
    assert model_step(M, U0, "X", (0.0, 1.0, 0.0)) == pytest.approx(XT)


def test_step_Y_diagonal():
    w = 0.1
    out = model_step(M, U0, "Y", (0.0, 1.0 + w, 1.0 + w))
    exp = (YT[0] + (M.a2 + M.a3) * w, YT[1] + (M.b2 + M.b3 + M.b4) * w * w,
           YT[2] + (M.c2 + M.c3) * w)
    assert out == pytest.approx(exp, abs=1e-14)


def test_step_Q_half_turn():
    m = M.with_(phiQ=0.5)
    out = model_step(m, U0, "Q", (1.0, 1.0, 1.0))
    assert out == pytest.approx((-M.lambdaQ, M.sigmaQ, -M.lambdaQ), abs=1e-15)


def test_step_region_error():
    with pytest.raises(RegionError):
        model_step(M, U0, "P", (5.0, 0.0, 0.0))


def test_float_and_mp_kernels_agree():
    z = (0.3, 0.2, -0.1)
    for region in ("Q", "P"):
        a = model_step(M, U0, region, z)
        b = model_step(M, U0, region, z, dps=40)
        assert np.allclose([float(c) for c in b], a, rtol=1e-14)


def test_orbit_far_from_start_fails_at_zero():
    res = return_map_orbit(M, U0, (3, 2), (0.0, 0.0, 0.0))
    assert not res.admissible and res.escape_index == 0


def test_return_time_bookkeeping():
    res = return_map_orbit(M, U0, (18, 12), YT)
    assert res.return_time == 18 + M.N1 + 12 + M.N2


def test_parse_number_forms():
    assert parse_number("1/sqrt(2)") == pytest.approx(1 / math.sqrt(2))
    assert parse_number("-0.25") == -0.25
    with pytest.raises(ModelFileError):
        parse_number("__import__('os')")
    with pytest.raises(ModelFileError):
        parse_number("1 +")


def test_parse_poly():
    p = parse_poly("0.01*x^3, -0.2*x*y")
    assert p.coefficient((3, 0, 0)) == 0.01
    assert p.coefficient((1, 1, 0)) == -0.2
    assert p((2.0, 1.0, 0.0)) == pytest.approx(0.08 - 0.4)


def test_model_file_roundtrip():
    m = M.with_(phiP=0.123456789012345)
    assert parse_model(dump_model(m)) == m


def test_shipped_models(scenario_dir):
    assert load_model(scenario_dir / "models" / "canonical.model") == M
    cub = load_model(scenario_dir / "models" / "cubic_htilde.model")
    assert cub.Htilde.comps[0].coefficient((3, 0, 0)) == 0.01
    assert validate_model(cub, 1.185).passed


def test_model_file_errors():
    with pytest.raises(ModelFileError):
        parse_model("[local]\nlambdaP = 0.01\n")
    with pytest.raises(ModelFileError):
        parse_model(dump_model(M) + "\n[extra]\nbogus = 1\n")
