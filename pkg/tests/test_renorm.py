from __future__ import annotations

import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from blender_lab.henon import eval_E
from blender_lab.model import canonical_model, load_model, sigma_params
from blender_lab.renorm import (
    ClosedForm,
    ScaleUnderflow,
    SojournNotFound,
    SojournState,
    adjust_arguments,
    chart_psi,
    convergence_report,
    delta_grid,
    find_sojourn,
    renormalized_map_direct,
    reparam_at,
    return_map_closed_form,
)
from blender_lab.renorm import phi_totals

M = canonical_model()
XI, MU = 1.185, -9.5


@pytest.fixture(scope="module")
def sojourns():
    return find_sojourn(M, XI, 1100)


def test_sojourn_example_pair():
    # exact integer arithmetic: 3^12 / 2^18 = 531441 / 262144
    exact = Fraction(3 ** 12, 2 ** 18)
    assert float(exact) == pytest.approx(2.027286, abs=1e-6)
    lst = find_sojourn(M, XI, 100, target=2.0, constrained=False)
    rec = {s.key: s.error for s in lst}
    assert (12, 18) in rec
    assert rec[(12, 18)] == pytest.approx(float(exact - 2), rel=1e-12)


def test_sojourn_deeper_search():
    lst = find_sojourn(M, XI, 10_000, target=2.0, constrained=False)
    assert lst[-1].error < 0.01 and lst[-1].n <= 10_000


def test_sojourn_records_decrease_and_respect_constraint(sojourns):
    errs = [s.error for s in sojourns]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    eta, eta_t = M.eta, M.eta_tilde(XI)
    for s in sojourns:
        assert s.m < eta * s.n + eta_t + 1
        exact = abs(mpmath.mpf(3) ** s.m * mpmath.mpf(0.5) ** s.n - XI / M.tau)
        assert s.error == pytest.approx(float(exact), rel=1e-9)


def test_resonant_ratio():
    m2 = M.with_(sigmaP=2.0)
    assert find_sojourn(m2, XI, 50, target=4.0, constrained=False)[-1].error == 0.0
    with pytest.raises(SojournNotFound) as exc:
        find_sojourn(m2, XI, 200, tol=0.01, target=3.0, constrained=False)
    assert exc.value.best_error == 1.0


def test_sojourn_bad_arguments():
    with pytest.raises(ValueError):
        find_sojourn(M, XI, 0, nMin=5)
    with pytest.raises(ValueError):
        SojournState(0, 3)


@pytest.mark.parametrize("mn", [(9, 14), (303, 480), (13603, 21560)])
def test_adjusted_arguments_exact(mn):
    s = adjust_arguments(M, SojournState(*mn))
    assert s.ct == s.st == pytest.approx(1 / math.sqrt(2), abs=2.3e-16)
    assert s.c == 0 and s.s == 1
    ctx = mpmath.MPContext()
    ctx.dps = 60
    pP, pQ = phi_totals(ctx, M, s)
    twopi = 2 * ctx.pi
    assert abs(ctx.fmod(twopi * s.m * pP, twopi) - ctx.pi / 4) < 1e-40
    assert abs(ctx.fmod(twopi * s.n * pQ, twopi) - ctx.pi / 2) < 1e-40


def test_adjusted_offset():
    s = adjust_arguments(M, SojournState(9, 14, zeta=0.1, vartheta=0.2))
    assert s.ct == pytest.approx(math.cos(math.pi / 4 + 0.1), abs=1e-15)
    assert s.st == pytest.approx(math.sin(math.pi / 4 + 0.1), abs=1e-15)
    assert s.c == pytest.approx(math.cos(math.pi / 2 + 0.2), abs=1e-15)


def test_reparam(sojourns):
    norms_mu, norms_nu = [], []
    for s in sojourns[1:]:
        r = reparam_at(M, s, MU)
        assert r.rhoTilde2 == r.rhoTilde3 == 0
        assert float(r.muBar[2]) == pytest.approx(-(0.01 ** s.m) * M.c1, rel=1e-12)
        f = r.floats()
        norms_mu.append(max(abs(c) for c in f["muBar"]))
        norms_nu.append(max(abs(c) for c in f["nuBar"]))
    assert all(b < a for a, b in zip(norms_mu, norms_mu[1:]))
    assert all(b < a for a, b in zip(norms_nu, norms_nu[1:]))


def test_chart_anchor_and_inverse():
    s = SojournState(9, 14)
    ch = chart_psi(s, M, XI)
    assert ch.psi_float([0, 0, 0]) == pytest.approx([1, 2.0 ** -14, 1], abs=1e-16)
    # the float chart keeps only ~1e-8 of x after 1 + S x; the mpmath chart is exact
    g = delta_grid(5)
    back = [ch.psi_inv(ch.psi(tuple(mpmath.mpf(c) for c in p))) for p in g]
    assert max(abs(float(b - a)) for p, q in zip(g, back) for a, b in zip(p, q)) < 1e-12


def test_chart_coordinate_relation():
    s = SojournState(9, 14)
    ch = chart_psi(s, M, XI)
    sig = sigma_params(M, XI)
    z = 1e-9
    xt = ch.phi_inv((1 + 0.0, float(ch.offset_y), 1 + z))[0]
    assert xt == pytest.approx(2.0 ** 14 * 3.0 ** 9 * sig.s2 / sig.s5 * z, rel=1e-6)


def test_chart_float_underflow():
    ch = chart_psi(SojournState(13603, 21560), M, XI)
    with pytest.raises(ScaleUnderflow):
        ch.psi_float([0, 0, 0])


def test_direct_agrees_with_closed_form(sojourns):
    rng = np.random.default_rng(0)
    pts = rng.uniform(-2, 2, (20, 3))
    for s in sojourns[2:5]:
        cf = ClosedForm(M, s, MU)
        checked = 0
        for p in pts:
            d = renormalized_map_direct(M, s, MU, p)
            if d.admissible and d.plateau:
                assert np.max(np.abs(np.asarray(d.value) - cf(p))) < 1e-6
                checked += 1
        assert checked > 0


def test_center_is_admissible(sojourns):
    for s in sojourns[2:5]:
        d = renormalized_map_direct(M, s, MU, (0.0, 0.0, 0.0))
        assert d.admissible


def test_direct_near_limit_on_small_grid(sojourns):
    s = sojourns[2]
    ax = np.linspace(-2, 2, 5)
    sig = sigma_params(M, XI)
    for p in np.array(np.meshgrid(ax, ax, ax)).reshape(3, -1).T:
        d = renormalized_map_direct(M, s, MU, p)
        if d.admissible:
            assert np.all(np.isfinite(d.value))
            assert np.max(np.abs(np.asarray(d.value) - eval_E(sig, XI, MU, p))) < 1.0


def test_closed_form_limit_coefficients():
    cf = ClosedForm(M, SojournState(13603, 21560), MU)
    sig = sigma_params(M, XI)
    assert cf.coef["xy"] == pytest.approx(sig.s1, abs=1e-15)
    assert cf.coef["qyy"] == pytest.approx(sig.s2, abs=1e-15)
    assert cf.coef["K1"] == 0.0 or cf.coef["K1"] < 1e-300


def test_hot_terms_vanish_for_flat_model():
    cf = ClosedForm(M, SojournState(9, 14), MU)
    assert not cf.has_hot
    assert np.all(cf.hot(delta_grid(3)) == 0)


def test_hot_terms_present_for_cubic(scenario_dir):
    cub = load_model(scenario_dir / "models" / "cubic_htilde.model")
    cf = ClosedForm(cub, SojournState(9, 14), MU)
    h = cf.hot(delta_grid(3))
    assert np.any(h != 0)
    assert np.all(np.isfinite(h))
    s = adjust_arguments(cub, SojournState(9, 14))
    d = renormalized_map_direct(cub, s, MU, (0.5, 0.3, -0.2))
    if d.admissible and d.plateau:
        assert np.max(np.abs(np.asarray(d.value) - cf((0.5, 0.3, -0.2)))) < 1e-6


def test_return_map_closed_form_wrapper():
    s = SojournState(9, 14)
    assert np.array_equal(return_map_closed_form(M, s, MU, [0.1, 0.2, 0.3]),
                          ClosedForm(M, s, MU)([0.1, 0.2, 0.3]))


def test_convergence_five_pairs(sojourns):
    rows = convergence_report(M, XI, MU, sojourns[2:7], grid=delta_grid(5), direct_max_n=60)
    c0 = [r.supC0 for r in rows]
    assert all(b < a for a, b in zip(c0, c0[1:]))
    c1 = [r.supC1 for r in rows]
    assert all(b < a for a, b in zip(c1, c1[1:]))
    assert all(r.admissibleFraction == 1.0 for r in rows)


def test_convergence_cubic(scenario_dir, sojourns):
    cub = load_model(scenario_dir / "models" / "cubic_htilde.model")
    rows = convergence_report(cub, XI, MU, sojourns[2:6], grid=delta_grid(3), direct_max_n=0)
    c0 = [r.supC0 for r in rows]
    assert all(b < a for a, b in zip(c0, c0[1:]))


def test_convergence_threads_order_stable(sojourns):
    a = convergence_report(M, XI, MU, sojourns[1:5], grid=delta_grid(3), direct_max_n=0)
    b = convergence_report(M, XI, MU, sojourns[1:5], grid=delta_grid(3), direct_max_n=0,
                           threads=3)
    assert a == b or all(str(x) == str(y) for x, y in zip(a, b))
