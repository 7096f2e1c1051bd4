"""Renormalisation of the return maps near the heterodimensional cycle.

Sojourn pairs (m, n) with sigma_P^m lambda_Q^n close to xi / tau, adjusted
rotation arguments, reparametrised unfoldings, the affine charts Psi_k and
three evaluations of the rescaled return map:

* ``renormalized_map_direct``: step-by-step composition of the model in
  mpmath at a precision chosen from the chart scale;
* ``staged_return``: the same composition collapsed block by block (the
  n rotations at Q and the m rotations at P are exact), with the large
  constants cancelled by hand;
* ``ClosedForm``: the resulting explicit polynomial, plus higher-order
  terms taken from the staged evaluation when H or H~ is nonzero.

Scales such as sigma_P^(-2m) sigma_Q^(-2n) are far below the float range
for the deeper pairs, so every scale is held as an mpmath number and only
pre-combined coefficients are rounded to float.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import mpmath
import numpy as np

from .henon import SigmaVector, eval_E, theta_inverse, theta_map
from .model import (CycleModel, ModelKernel, UnfoldingParams, return_map_orbit,
                    sigma_params)

__all__ = [
    "SojournState",
    "SojournNotFound",
    "ScaleUnderflow",
    "find_sojourn",
    "adjust_arguments",
    "Reparam",
    "reparam_at",
    "Chart",
    "chart_psi",
    "StageValues",
    "staged_return",
    "DirectResult",
    "renormalized_map_direct",
    "ClosedForm",
    "return_map_closed_form",
    "ConvergenceRow",
    "convergence_report",
    "delta_grid",
    "direct_dps",
]


class SojournNotFound(RuntimeError):
    def __init__(self, best_error: float, best_pair: tuple[int, int] | None) -> None:
        super().__init__(f"no sojourn pair within tolerance; best error {best_error:.3g} at {best_pair}")
        self.best_error = best_error
        self.best_pair = best_pair


class ScaleUnderflow(ArithmeticError):
    """A chart scale is below the float range; use the mpmath entry points."""


# ------------------------------------------------------------------ sojourns

@dataclass(frozen=True)
class SojournState:
    m: int
    n: int
    zeta: float = 0.0
    vartheta: float = 0.0
    error: float = math.nan
    c: float = math.nan
    s: float = math.nan
    ct: float = math.nan
    st: float = math.nan
    alpha_k: float = math.nan
    beta_k: float = math.nan

    def __post_init__(self) -> None:
        if self.m < 1 or self.n < 1:
            raise ValueError("sojourn times must be positive")

    @property
    def adjusted(self) -> bool:
        return not math.isnan(self.c)

    @property
    def key(self) -> tuple[int, int]:
        return (self.m, self.n)


def find_sojourn(model: CycleModel, xi: float, maxN: int, tol: float | None = None,
                 nMin: int = 1, target: float | None = None,
                 constrained: bool = True) -> list[SojournState]:
    """Record-breaking pairs (m, n), n in [nMin, maxN], approaching the target.

    Candidates are screened in extended precision on the log scale and every
    record is confirmed in mpmath before it is kept.  The constraint
    m < eta n + eta~ + 1 is enforced unless ``constrained`` is False.
    """
    if maxN < nMin:
        raise ValueError("maxN must be at least nMin")
    tgt = xi / model.tau if target is None else target
    if not tgt > 0:
        raise ValueError("target must be positive")
    ls = np.longdouble(mpmath.log(model.sigmaP))
    ll = np.longdouble(mpmath.log(model.lambdaQ))
    lt = np.longdouble(mpmath.log(tgt))
    eta = -ll / ls
    eta_t = -lt / ls  # equals log(tau / xi) / log(sigma_P) for the default target
    n = np.arange(nMin, maxN + 1, dtype=np.longdouble)
    exact = (lt - n * ll) / ls
    best = math.inf
    best_pair = None
    out: list[SojournState] = []
    lo = np.floor(exact)
    ms = np.stack([lo, lo + 1])
    ok = (ms >= 1) & ((ms < eta * n + eta_t + 1) | (not constrained))
    d = np.abs(ms * ls + n * ll - lt)
    d = np.where(ok, d, np.inf)
    pick = np.argmin(d, axis=0)
    dmin = d[pick, np.arange(n.size)]
    mbest = ms[pick, np.arange(n.size)]
    with mpmath.workdps(40):
        st = mpmath.mpf(tgt)
        for i in range(n.size):
            if not np.isfinite(dmin[i]):
                continue
            approx = float(tgt * abs(math.expm1(float(dmin[i]))))
            if approx >= best * (1 + 1e-9):
                continue
            mi, ni = int(mbest[i]), int(n[i])
            err = abs(mpmath.mpf(model.sigmaP) ** mi * mpmath.mpf(model.lambdaQ) ** ni - st)
            if err < best:
                best = float(err)
                best_pair = (mi, ni)
                out.append(SojournState(mi, ni, error=best))
    if tol is not None and (not out or best > tol):
        raise SojournNotFound(best, best_pair)
    return out


def _frac_terms(ctx, k: int, phi: float):
    """(1, floor(k phi) / k) pieces of an adjusted argument, in the given context."""
    kp = ctx.mpf(k) * ctx.mpf(phi)
    return ctx.floor(kp) / k


def phi_totals(ctx, model: CycleModel, s: SojournState):
    """Adjusted arguments phi_P + alpha_k and phi_Q + beta_k in an mpmath context."""
    m, n = s.m, s.n
    two_pi = 2 * ctx.pi
    pP = 1 / ctx.mpf(8 * m) + _frac_terms(ctx, m, model.phiP) + ctx.mpf(s.zeta) / (two_pi * m)
    pQ = 1 / ctx.mpf(4 * n) + _frac_terms(ctx, n, model.phiQ) + ctx.mpf(s.vartheta) / (two_pi * n)
    return pP, pQ


def adjust_arguments(model: CycleModel, s: SojournState) -> SojournState:
    """Choose alpha_k, beta_k so that 2 pi m phi_P,k = pi/4 + zeta and 2 pi n phi_Q,k = pi/2 + vartheta.

    The four trigonometric values follow from the reductions modulo 2 pi,
    so c = -sin(vartheta), s = cos(vartheta), ct = cos(pi/4 + zeta) and
    st = sin(pi/4 + zeta) hold without rounding from the large angles.
    """
    ctx = mpmath.MPContext()
    ctx.dps = 40
    pP, pQ = phi_totals(ctx, model, s)
    r2 = math.sqrt(0.5)
    cz, sz = math.cos(s.zeta), math.sin(s.zeta)
    return replace(
        s,
        c=-math.sin(s.vartheta), s=math.cos(s.vartheta),
        ct=r2 * (cz - sz), st=r2 * (cz + sz),
        alpha_k=float(pP - ctx.mpf(model.phiP)), beta_k=float(pQ - ctx.mpf(model.phiQ)),
    )


def _ensure(model: CycleModel, s: SojournState) -> SojournState:
    return s if s.adjusted else adjust_arguments(model, s)


# ------------------------------------------------------------------ scales

@dataclass(frozen=True)
class _Scales:
    lp: object  # lambda_P^m
    L: object  # lambda_Q^n
    Sig: object  # sigma_P^m
    Sq: object  # sigma_Q^n
    S: object  # sigma_P^-m sigma_Q^-n

    @property
    def S2(self):
        return self.S * self.S


def _scales(ctx, model: CycleModel, s: SojournState) -> _Scales:
    F = ctx.mpf
    Sig = F(model.sigmaP) ** s.m
    Sq = F(model.sigmaQ) ** s.n
    return _Scales(F(model.lambdaP) ** s.m, F(model.lambdaQ) ** s.n, Sig, Sq, 1 / (Sig * Sq))


def _log10_inv_S(model: CycleModel, s: SojournState) -> float:
    return s.m * math.log10(model.sigmaP) + s.n * math.log10(abs(model.sigmaQ))


def direct_dps(model: CycleModel, s: SojournState) -> int:
    """Digits needed to resolve S^2-sized offsets on top of O(1) coordinates."""
    return int(math.ceil(2 * _log10_inv_S(model, s))) + 30


def _trig(ctx, s: SojournState):
    F = ctx.mpf
    r2 = 1 / ctx.sqrt(2)
    cz, sz = ctx.cos(F(s.zeta)), ctx.sin(F(s.zeta))
    return -ctx.sin(F(s.vartheta)), ctx.cos(F(s.vartheta)), r2 * (cz - sz), r2 * (cz + sz)


# ------------------------------------------------------------------ reparametrisation

@dataclass(frozen=True)
class Reparam:
    muBar: tuple
    nuBar: tuple
    alpha_k: object
    beta_k: object
    rhoTilde2: float
    rhoTilde3: float

    def floats(self) -> dict:
        return {
            "muBar": tuple(float(c) for c in self.muBar),
            "nuBar": tuple(float(c) for c in self.nuBar),
            "alpha_k": float(self.alpha_k),
            "beta_k": float(self.beta_k),
        }

    def unfolding(self, rho: float = 0.25) -> UnfoldingParams:
        return UnfoldingParams(self.muBar, self.nuBar, self.alpha_k, self.beta_k, rho)


def _rho_tilde(model: CycleModel, c: float, s: float) -> tuple[float, float]:
    """Quadratic part of H~_2, H~_3 at W = (c - s, 0, s + c)."""
    out = []
    for comp in model.Htilde.comps[1:]:
        dxx = comp.second_derivative_at_zero(0, 0)
        dzz = comp.second_derivative_at_zero(2, 2)
        dxz = comp.second_derivative_at_zero(0, 2)
        out.append(0.5 * dxx * (c - s) ** 2 + 0.5 * dzz * (s + c) ** 2 + dxz * (c - s) * (s + c))
    return out[0], out[1]


def reparam_at(model: CycleModel, s: SojournState, mu: float, ctx=None) -> Reparam:
    s = _ensure(model, s)
    if ctx is None:
        ctx = mpmath.MPContext()
        ctx.dps = 40
    sc = _scales(ctx, model, s)
    c, sn, ct, st = _trig(ctx, s)
    r2, r3 = _rho_tilde(model, s.c, s.s)
    F = ctx.mpf
    mu_bar = (
        -sc.lp * F(model.a1),
        1 / sc.Sq + sc.S2 * F(mu) - sc.lp * F(model.b1),
        -sc.lp * F(model.c1),
    )
    nu_bar = (
        -F(model.alpha1) * sc.L * (c - sn) - F(model.alpha3) * sc.L * (sn + c),
        (ct + st) / sc.Sig - sc.L ** 2 * F(r2),
        (ct - st) / sc.Sig - F(model.gamma3) * sc.L * (sn + c) - sc.L ** 2 * F(r3),
    )
    pP, pQ = phi_totals(ctx, model, s)
    return Reparam(mu_bar, nu_bar, pP - F(model.phiP), pQ - F(model.phiQ), r2, r3)


# ------------------------------------------------------------------ charts

@dataclass(frozen=True)
class Chart:
    scale1: object
    scale2: object
    offset_y: object  # sigma_Q^-n
    sigma: SigmaVector

    def psi(self, v):
        x, y, z = v
        return (1 + self.scale1 * x, self.offset_y + self.scale2 * y, 1 + self.scale1 * z)

    def psi_inv(self, w):
        x, y, z = w
        return ((x - 1) / self.scale1, (y - self.offset_y) / self.scale2, (z - 1) / self.scale1)

    def _float_scales(self):
        if abs(self.scale2) < 1e-300:
            raise ScaleUnderflow("scale2 below 1e-300; use psi/psi_inv with mpmath numbers")
        return float(self.scale1), float(self.scale2), float(self.offset_y)

    def psi_float(self, v) -> np.ndarray:
        s1, s2, oy = self._float_scales()
        v = np.asarray(v, dtype=float)
        return np.stack([1 + s1 * v[..., 0], oy + s2 * v[..., 1], 1 + s1 * v[..., 2]], axis=-1)

    def psi_inv_float(self, w) -> np.ndarray:
        s1, s2, oy = self._float_scales()
        w = np.asarray(w, dtype=float)
        return np.stack([(w[..., 0] - 1) / s1, (w[..., 1] - oy) / s2, (w[..., 2] - 1) / s1], axis=-1)

    def phi(self, v):
        """Phi_k = Psi_k o Theta."""
        t = theta_map(self.sigma, np.asarray([float(c) for c in v]))
        return self.psi(tuple(t))

    def phi_inv(self, w):
        return tuple(theta_inverse(self.sigma, np.asarray([float(c) for c in self.psi_inv(w)])))


def chart_psi(s: SojournState, model: CycleModel, xi: float = 1.185, ctx=None) -> Chart:
    if ctx is None:
        ctx = mpmath.MPContext()
        ctx.dps = 40
    sc = _scales(ctx, model, s)
    return Chart(sc.S, sc.S2, 1 / sc.Sq, sigma_params(model, xi))


# ------------------------------------------------------------------ staged evaluation

@dataclass
class StageValues:
    """Offsets of the orbit from the anchors at the block boundaries."""

    Z0: tuple  # start minus Y~
    W: tuple  # end of the Q block minus X
    AW: tuple  # T1 output minus X~, before the translation
    V: tuple  # after the translation, minus X~
    What: tuple  # end of the P block minus Y
    BW: tuple  # T2 output minus Y~, before the translation
    out: tuple  # rescaled output (x, y, z)


def staged_return(model: CycleModel, s: SojournState, mu: float, v, ctx) -> StageValues:
    """Return map in chart coordinates on the plateau of every perturbation."""
    s = _ensure(model, s)
    F = ctx.mpf
    sc = _scales(ctx, model, s)
    c, sn, ct, st = _trig(ctx, s)
    x, y, z = (F(t) for t in v)
    S, L, Sig, lp = sc.S, sc.L, sc.Sig, sc.lp
    m = model
    u1 = c * x - sn * z
    w = sn * x + c * z
    W = (L * (c - sn) + L * S * u1, sc.Sq * sc.S2 * y, L * (sn + c) + L * S * w)
    Ht = m.Htilde(W) if not m.Htilde.is_zero else (0, 0, 0)
    r2, r3 = _rho_tilde(m, s.c, s.s)
    a1, a2, a3 = F(m.alpha1), F(m.alpha2), F(m.alpha3)
    AW = (a1 * W[0] + a2 * W[1] + a3 * W[2] + Ht[0], F(m.beta2) * W[1] + Ht[1],
          F(m.gamma3) * W[2] + Ht[2])
    # translation by nu cancels the large constants exactly
    Vx = a1 * L * S * u1 + a2 * W[1] + a3 * L * S * w + Ht[0]
    Ry = F(m.beta2) * W[1] - L * L * F(r2) + Ht[1]
    Rz = F(m.gamma3) * L * S * w - L * L * F(r3) + Ht[2]
    V = (Vx, (ct + st) / Sig + Ry, (ct - st) / Sig + Rz)
    Wh = (lp * (1 + Vx), Sig * (ct * Ry - st * Rz), Sig * (st * Ry + ct * Rz))
    Hh = m.H(Wh) if not m.H.is_zero else (0, 0, 0)
    BW = m.B(Wh)
    BW = (BW[0] + Hh[0], BW[1] + Hh[1], BW[2] + Hh[2])
    Ox = F(m.a1) * lp * Vx + F(m.a2) * Wh[1] + F(m.a3) * Wh[2] + Hh[0]
    Oy = sc.S2 * F(mu) + F(m.b1) * lp * Vx + F(m.b2) * Wh[1] ** 2 + F(m.b3) * Wh[2] ** 2 \
        + F(m.b4) * Wh[1] * Wh[2] + Hh[1]
    Oz = F(m.c1) * lp * Vx + F(m.c2) * Wh[1] + F(m.c3) * Wh[2] + Hh[2]
    Z0 = (S * x, 1 / sc.Sq + sc.S2 * y, S * z)
    return StageValues(Z0, W, AW, V, Wh, BW, (Ox / S, Oy / sc.S2, Oz / S))


def _hot_dps(model: CycleModel, s: SojournState) -> int:
    return 30 if model.Htilde.is_zero else int(math.ceil(2 * _log10_inv_S(model, s))) + 30


def _sup(v) -> float:
    return max(abs(float(c)) for c in v)


def _norm(v) -> float:
    return math.sqrt(sum(float(c) ** 2 for c in v))


def _block_checks(model: CycleModel, s: SojournState, st: StageValues, pP: float, pQ: float):
    """(admissible, plateau) for the Q and P blocks, from their exact rotations."""
    kinv, aQ, aP = model.kappaInv, model.aQ, model.aP
    # Q block: step j sends (x, z) to lambda^j R^j (x0, z0), y to sigma^(j - n) y_n
    n = s.n
    z0 = complex(1 + float(st.Z0[0]), 1 + float(st.Z0[2]))
    yn = 1 + float(st.W[1])
    j = np.arange(1, n + 1)
    with np.errstate(under="ignore"):
        amp = np.abs(z0) * np.power(model.lambdaQ, j)
        keep = amp > 1e-300
        jj = j[keep]
        xz = z0 * np.power(model.lambdaQ, jj) * np.exp(2j * np.pi * np.mod(jj * pQ, 1.0))
        yj = yn * np.power(float(model.sigmaQ), (j - n).astype(float))
    supQ = np.maximum(np.abs(xz.real), np.abs(xz.imag)).max(initial=0.0)
    supY = np.abs(yj).max()
    adm = max(supQ, supY) <= aQ
    plat = max(supQ, supY) <= kinv
    # P block, walked back from its last point
    m = s.m
    ym = complex(1 + float(st.What[1]), 1 + float(st.What[2]))
    i = np.arange(0, m)  # m - j
    with np.errstate(under="ignore"):
        back = ym * np.power(model.sigmaP, -i.astype(float)) * np.exp(-2j * np.pi * np.mod(i * pP, 1.0))
        xs = abs(1 + float(st.V[0])) * abs(model.lambdaP)
    supP = max(np.maximum(np.abs(back.real), np.abs(back.imag)).max(), xs)
    adm = adm and supP <= aP
    plat = plat and supP <= kinv
    return bool(adm), bool(plat)


def _admissibility(model, s, st: StageValues, rho, pP, pQ) -> tuple[bool, bool]:
    rH = model.rHet
    adm = _norm(st.Z0) < 2 * rho
    adm = adm and _sup((st.W[0], st.W[1], st.W[2])) <= rH
    adm = adm and _norm(st.V) < 2 * rho
    adm = adm and _sup(st.What) <= rH
    plat = _sup(st.AW) <= rho and _sup(st.BW) <= rho
    if not adm:
        return False, False
    badm, bplat = _block_checks(model, s, st, pP, pQ)
    return badm, plat and bplat


# ------------------------------------------------------------------ direct composition

@dataclass
class DirectResult:
    value: tuple[float, float, float] | None
    admissible: bool
    plateau: bool
    escape_index: int | None
    dps: int


def renormalized_map_direct(model: CycleModel, s: SojournState, mu: float, v,
                            rho: float = 0.25, dps: int | None = None) -> DirectResult:
    """Psi_k^-1 o (T2 o f^m o T1 o f^n) o Psi_k, stepping the model one iterate at a time."""
    s = _ensure(model, s)
    dps = dps or direct_dps(model, s)
    k = ModelKernel(model, UnfoldingParams(rho=rho), dps)
    rep = reparam_at(model, s, mu, k.ctx)
    k = ModelKernel(model, rep.unfolding(rho), dps)
    sc = _scales(k.ctx, model, s)
    ch = Chart(sc.S, sc.S2, 1 / sc.Sq, SigmaVector(1, 1, 0, 0, 1))
    z0 = ch.psi(tuple(k.ctx.mpf(c) for c in v))
    orb = return_map_orbit(model, k.u, (s.n, s.m), z0, kernel=k)
    if not orb.admissible:
        return DirectResult(None, False, orb.plateau, orb.escape_index, dps)
    out = ch.psi_inv(orb.final())
    return DirectResult(tuple(float(c) for c in out), True, orb.plateau, None, dps)


# ------------------------------------------------------------------ closed form

@dataclass
class ClosedForm:
    """Polynomial return map in chart coordinates, coefficients pre-combined."""

    model: CycleModel
    sojourn: SojournState
    mu: float
    coef: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        m, s = self.model, _ensure(self.model, self.sojourn)
        self.sojourn = s
        ctx = mpmath.MPContext()
        ctx.dps = 40
        sc = _scales(ctx, m, s)
        c, sn, ct, st = s.c, s.s, s.ct, s.st
        K1 = float(sc.lp * sc.L)
        K2 = float(sc.lp / sc.Sig)
        K3 = float(sc.lp * sc.L * sc.Sig * sc.Sq)
        K4 = float(sc.lp * sc.Sq)
        g = float(m.gamma3 * sc.Sig * sc.L)
        b2 = m.beta2
        self.coef = dict(
            c=c, s=sn, K1=K1, K2=K2, K3=K3, K4=K4, g=g,
            xy=(ct * m.a2 + st * m.a3) * b2, xw=(ct * m.a3 - st * m.a2) * g,
            zy=(ct * m.c2 + st * m.c3) * b2, zw=(ct * m.c3 - st * m.c2) * g,
            qyy=b2 * b2 * (ct * ct * m.b2 + st * st * m.b3 + ct * st * m.b4),
            qww=g * g * (st * st * m.b2 + ct * ct * m.b3 - ct * st * m.b4),
            qyw=b2 * g * (2 * ct * st * (m.b3 - m.b2) + m.b4 * (ct * ct - st * st)),
        )
        self.has_hot = not (m.H.is_zero and m.Htilde.is_zero)

    def polynomial(self, v) -> np.ndarray:
        m, k = self.model, self.coef
        v = np.asarray(v, dtype=float)
        x, y, z = v[..., 0], v[..., 1], v[..., 2]
        u1 = k["c"] * x - k["s"] * z
        w = k["s"] * x + k["c"] * z
        lin = m.alpha1 * u1 + m.alpha3 * w
        ox = m.a1 * (k["K1"] * lin + k["K2"] * m.alpha2 * y) + k["xy"] * y + k["xw"] * w
        oy = (self.mu + m.b1 * (k["K3"] * lin + k["K4"] * m.alpha2 * y)
              + k["qyy"] * y * y + k["qww"] * w * w + k["qyw"] * y * w)
        oz = m.c1 * (k["K1"] * lin + k["K2"] * m.alpha2 * y) + k["zy"] * y + k["zw"] * w
        return np.stack([ox, oy, oz], axis=-1)

    def hot(self, v) -> np.ndarray:
        """Contribution of H and H~; identically zero when both vanish."""
        v = np.atleast_2d(np.asarray(v, dtype=float))
        out = np.zeros_like(v)
        if not self.has_hot:
            return out
        ctx = mpmath.MPContext()
        ctx.dps = _hot_dps(self.model, self.sojourn)
        flat = self.model.with_(H=type(self.model.H)(), Htilde=type(self.model.Htilde)())
        for i, p in enumerate(v):
            a = staged_return(self.model, self.sojourn, self.mu, p, ctx).out
            b = staged_return(flat, self.sojourn, self.mu, p, ctx).out
            out[i] = [float(ai - bi) for ai, bi in zip(a, b)]
        return out

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        p = self.polynomial(v)
        if self.has_hot:
            p = p + self.hot(v).reshape(p.shape)
        return p


def return_map_closed_form(model: CycleModel, s: SojournState, mu: float, v) -> np.ndarray:
    return ClosedForm(model, s, mu)(v)


# ------------------------------------------------------------------ convergence

def delta_grid(n: int = 7, box=((-4.0, 4.0), (-4.0, 4.0), (-40.0, 22.0))) -> np.ndarray:
    axes = [np.linspace(a, b, n) for a, b in box]
    g = np.meshgrid(*axes, indexing="ij")
    return np.stack([c.ravel() for c in g], axis=-1)


@dataclass(frozen=True)
class ConvergenceRow:
    k: int
    m: int
    n: int
    sojournError: float
    supC0: float
    supC1: float
    admissibleFraction: float
    directAgreement: float  # max |direct - closed| over admissible plateau points, nan if skipped
    directPoints: int

    @property
    def flagged(self) -> bool:
        return self.admissibleFraction == 0.0


def _row(model, xi, mu, k, s, grid, sig, h, direct_max_n, rho) -> ConvergenceRow:
    s = _ensure(model, s)
    cf = ClosedForm(model, s, mu)
    R = cf(grid)
    E = eval_E(sig, xi, mu, grid)
    c0 = float(np.max(np.abs(R - E)))
    c1 = 0.0
    for ax in range(3):
        e = np.zeros(3)
        e[ax] = h
        dR = (cf(grid + e) - R) / h
        dE = (eval_E(sig, xi, mu, grid + e) - E) / h
        c1 = max(c1, float(np.max(np.abs(dR - dE))))
    ctx = mpmath.MPContext()
    ctx.dps = _hot_dps(model, s)
    pP, pQ = (float(t) for t in phi_totals(ctx, model, s))
    adm = np.zeros(len(grid), dtype=bool)
    plat = np.zeros(len(grid), dtype=bool)
    for i, p in enumerate(grid):
        st = staged_return(model, s, mu, p, ctx)
        adm[i], plat[i] = _admissibility(model, s, st, rho, pP, pQ)
    agree = math.nan
    npts = 0
    if s.n <= direct_max_n:
        dps = direct_dps(model, s)
        diffs = []
        for i in np.flatnonzero(adm & plat):
            d = renormalized_map_direct(model, s, mu, grid[i], rho, dps)
            if d.admissible and d.plateau:
                diffs.append(float(np.max(np.abs(np.asarray(d.value) - R[i]))))
        if diffs:
            agree, npts = max(diffs), len(diffs)
    return ConvergenceRow(k, s.m, s.n, s.error, c0, c1, float(adm.mean()), agree, npts)


def convergence_report(model: CycleModel, xi: float, mu: float, sojournList,
                       grid=None, h: float = 1e-4, direct_max_n: int = 100,
                       rho: float = 0.25, threads: int = 1) -> list[ConvergenceRow]:
    """Distance of the rescaled return maps to E_{xi, mu, sigma} on a grid, per sojourn pair."""
    grid = delta_grid() if grid is None else np.asarray(grid, dtype=float)
    sig = sigma_params(model, xi)
    items = sorted(enumerate(sojournList), key=lambda t: t[1].n)
    args = [(model, xi, mu, k, s, grid, sig, h, direct_max_n, rho) for k, s in items]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda a: _row(*a), args))
    else:
        rows = [_row(*a) for a in args]
    return sorted(rows, key=lambda r: (r.n, r.m))
