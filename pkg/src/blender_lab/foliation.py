"""Diagonal foliation near Y, parabola limits of rescaled leaves, and the
derivative chain along the return orbit."""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .model import Y, YT, CycleModel, ModelKernel, return_map_orbit, sigma_params
from .renorm import (Chart, SojournState, _ensure, _scales, _trig, direct_dps, reparam_at,
                     staged_return)

__all__ = [
    "DiagonalLeaf",
    "LeafError",
    "RescaledLeaf",
    "rescaled_leaf",
    "ParabolaLimit",
    "parabola_limit",
    "leaf_distance",
    "DerivativeChain",
    "derivative_chain",
    "composed_map_fd",
    "chain_fd_check",
    "AngleRow",
    "AngleReport",
    "angle_report",
    "LEAF_SAMPLES",
]

LEAF_SAMPLES = 1000


class LeafError(ValueError):
    """A leaf left U_Y before transport, or its base point is outside J_k."""


@dataclass(frozen=True)
class DiagonalLeaf:
    s: float
    a: float
    aP: float = 3.0

    def __post_init__(self) -> None:
        if abs(self.s) > self.aP or abs(self.a) > self.aP:
            raise ValueError("leaf parameters must lie in [-aP, aP]")

    def points(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        pts = np.stack([np.full_like(t, self.s), self.a + t, -self.a + t], axis=-1)
        inside = np.all(np.abs(pts) <= self.aP, axis=-1)
        return pts[inside]


@dataclass(frozen=True)
class ParabolaLimit:
    alpha: float
    beta: float

    def __call__(self, x):
        return np.asarray(x) ** 2 + self.alpha * np.asarray(x) + self.beta


def parabola_limit(m: CycleModel, xi: float, mu: float, s0: float, a0: float) -> ParabolaLimit:
    s2 = sigma_params(m, xi).s2
    alpha = math.sqrt(2.0) * m.beta2 * (m.b2 - m.b3) * a0
    beta = mu + m.b1 * s2 * s0 + (m.b2 + m.b3 - m.b4) * s2 * a0 * a0
    return ParabolaLimit(alpha, beta)


@dataclass
class RescaledLeaf:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    sojourn: SojournState
    exact: list | None = None  # (x, y) pairs as mpmath numbers


def rescaled_leaf(m: CycleModel, s: SojournState, mu: float, s0: float, a0: float,
                  tGrid=None, xi: float = 1.185) -> RescaledLeaf:
    """Leaf l(s_k, a_k) through T2, back through Phi_k^-1, projected to (x, y).

    s_k = S^2 s0 and a_k = S a0 with S = sigma_P^-m sigma_Q^-n.  The leaf
    parameter is t_k = sqrt(2) / (beta2 (b2 + b3 + b4)) S t, which makes the
    limiting first coordinate equal to t.
    """
    s = _ensure(m, s)
    if abs(s0) > m.aP:
        raise LeafError("s0 outside J_k")
    tGrid = np.linspace(-4.0, 4.0, LEAF_SAMPLES) if tGrid is None else np.asarray(tGrid, float)
    ctx = mpmath.MPContext()
    ctx.dps = direct_dps(m, s)
    F = ctx.mpf
    sc = _scales(ctx, m, s)
    rep = reparam_at(m, s, mu, ctx)
    s2 = F(m.beta2) ** 2 * (F(m.b2) + F(m.b3) + F(m.b4)) / 2
    s5 = F(m.beta2) * (F(m.c2) + F(m.c3)) / ctx.sqrt(2)
    kappa = F(math.sqrt(2.0)) / (F(m.beta2) * F(m.b2 + m.b3 + m.b4))
    sk, ak = sc.S2 * F(s0), sc.S * F(a0)
    xs, ys = np.empty_like(tGrid), np.empty_like(tGrid)
    exact = []
    for i, t in enumerate(tGrid):
        tk = kappa * sc.S * F(t)
        W = (sk, ak + tk, -ak + tk)  # leaf point minus Y
        if max(abs(c) for c in W) > m.rHet:
            raise LeafError(f"leaf point at t={t} outside U_Y")
        bw = m.B(W)
        hw = m.H(W) if not m.H.is_zero else (0, 0, 0)
        O = tuple(F(a) + b + c + d for a, b, c, d in zip(YT, rep.muBar, bw, hw))
        u = ((O[0] - 1) / sc.S, (O[1] - 1 / sc.Sq) / sc.S2, (O[2] - 1) / sc.S)
        # Theta^-1 then the first two coordinates
        px, py = s2 * u[2] / s5, s2 * u[1]
        exact.append((px, py))
        xs[i], ys[i] = float(px), float(py)
    return RescaledLeaf(tGrid, xs, ys, s, exact)


def leaf_distance(leaf: RescaledLeaf, lim: ParabolaLimit) -> float:
    """Sup over the samples of the vertical distance to the limit parabola.

    Uses the mpmath samples when present, so distances below float rounding
    are still resolved.
    """
    if leaf.exact is None:
        return float(np.max(np.abs(leaf.y - lim(leaf.x))))
    return float(max(abs(y - (x * x + lim.alpha * x + lim.beta)) for x, y in leaf.exact))


# ------------------------------------------------------------------ derivative chain

@dataclass
class DerivativeChain:
    """Tangent vector after T1 o f^n (v_ups), after f^m (v_tilde), after T2 (v_hat).

    Components are mpmath numbers: the middle stages carry factors of
    sigma_P^m sigma_Q^n, which overflow float for deep sojourn pairs.
    """

    v: tuple
    v_ups: tuple
    v_tilde: tuple
    v_hat: tuple
    based: bool

    def as_float(self, stage: str) -> tuple[float, float, float]:
        return tuple(float(c) for c in getattr(self, stage))


def _matvec(J, v):
    return tuple(sum(J[i][j] * v[j] for j in range(3)) for i in range(3))


def derivative_chain(m: CycleModel, s: SojournState, v, base=None, mu: float = -9.5,
                     ctx=None) -> DerivativeChain:
    """Stage-by-stage image of v under the derivative of the return map.

    Without ``base`` the transitions are differentiated at the anchors X and
    Y, so only the linear parts A and B enter.  With a base point (chart
    coordinates) the jets of H~ at W and of B + H at W-hat are added.
    """
    s = _ensure(m, s)
    if ctx is None:
        ctx = mpmath.MPContext()
        ctx.dps = 50 if base is None else direct_dps(m, s)
    F = ctx.mpf
    sc = _scales(ctx, m, s)
    c, sn, ct, st = _trig(ctx, s)
    vx, vy, vz = (F(t) for t in v)
    L, Sig, lp = sc.L, sc.Sig, sc.lp
    q = (L * (c * vx - sn * vz), sc.Sq * vy, L * (sn * vx + c * vz))
    ups = m.A(q)
    stage = None
    if base is not None:
        stage = staged_return(m, s, mu, base, ctx)
        if not m.Htilde.is_zero:
            ups = tuple(a + b for a, b in zip(ups, _matvec(m.Htilde.jacobian(stage.W), q)))
    til = (lp * ups[0], Sig * (ct * ups[1] - st * ups[2]), Sig * (st * ups[1] + ct * ups[2]))
    if stage is None:
        wy = wz = 0
    else:
        wy, wz = stage.What[1], stage.What[2]
    hat = (
        m.a1 * til[0] + m.a2 * til[1] + m.a3 * til[2],
        m.b1 * til[0] + (2 * m.b2 * wy + m.b4 * wz) * til[1] + (2 * m.b3 * wz + m.b4 * wy) * til[2],
        m.c1 * til[0] + m.c2 * til[1] + m.c3 * til[2],
    )
    if stage is not None and not m.H.is_zero:
        hat = tuple(a + b for a, b in zip(hat, _matvec(m.H.jacobian(stage.What), til)))
    return DerivativeChain((vx, vy, vz), ups, til, hat, base is not None)


def composed_map_fd(m: CycleModel, s: SojournState, mu: float, base, v, h: float = 1e-8,
                    rho: float = 0.25):
    """Central difference of T2 o f^m o T1 o f^n at Psi_k(base) along v (physical coordinates)."""
    s = _ensure(m, s)
    dps = direct_dps(m, s) + 20
    k0 = ModelKernel(m, dps=dps)
    rep = reparam_at(m, s, mu, k0.ctx)
    k = ModelKernel(m, rep.unfolding(rho), dps)
    F = k.ctx.mpf
    sc = _scales(k.ctx, m, s)
    ch = Chart(sc.S, sc.S2, 1 / sc.Sq, sigma_params(m, 1.185))
    z0 = ch.psi(tuple(F(c) for c in base))
    hh = F(h) * sc.S2  # stay inside the plateau of every bump
    outs = []
    for sgn in (1, -1):
        z = tuple(a + sgn * hh * F(b) for a, b in zip(z0, v))
        orb = return_map_orbit(m, k.u, (s.n, s.m), z, kernel=k)
        if not (orb.admissible and orb.plateau):
            raise ValueError("base point is not on an admissible plateau orbit")
        outs.append(orb.final())
    return tuple((a - b) / (2 * hh) for a, b in zip(*outs))


def chain_fd_check(m: CycleModel, s: SojournState, mu: float = -9.5, count: int = 20,
                   seed: int = 0, box: float = 1.0) -> float:
    """Largest relative discrepancy between derivative_chain and central differences."""
    rng = np.random.default_rng(seed)
    s = _ensure(m, s)
    worst = 0.0
    ctx = mpmath.MPContext()
    ctx.dps = direct_dps(m, s) + 20
    for _ in range(count):
        base = rng.uniform(-box, box, 3)
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        chain = derivative_chain(m, s, v, base=base, mu=mu, ctx=ctx).v_hat
        fd = composed_map_fd(m, s, mu, base, v)
        num = math.sqrt(sum(float(a - b) ** 2 for a, b in zip(chain, fd)))
        den = math.sqrt(sum(float(b) ** 2 for b in fd))
        worst = max(worst, num / den)
    return worst


# ------------------------------------------------------------------ angle report

@dataclass(frozen=True)
class AngleRow:
    k: int
    m: int
    n: int
    expansion: float
    angleToFu: float
    diagRatio: float
    log_scale: float  # log(|lambda_P|^m |sigma_Q|^n)
    log_angle: float  # natural log of angleToFu, resolved below float range


@dataclass
class AngleReport:
    rows: list[AngleRow]
    K: float
    C: float  # sqrt(2) |beta2| |c2 + c3|
    slope: float  # regression of log angleToFu on log_scale
    slope_inv_q: float = math.nan  # same against log(|lambda_P|^m |sigma_Q|^-n), diagnostic only

    @property
    def expansion_ok(self) -> bool:
        return all(r.expansion >= self.C * self.K for r in self.rows)

    @property
    def slope_ok(self) -> bool:
        return abs(self.slope - 1.0) <= 0.1

    @property
    def diag_ok(self) -> bool:
        tail = [r.diagRatio for r in self.rows[2:]]
        return all(b <= a for a, b in zip(tail, tail[1:])) and (not tail or tail[-1] < 1e-9)


def angle_report(m: CycleModel, sojournList, K: float = 1.0) -> AngleReport:
    """Expansion, angle to the (y, z)-plane and diagonal defect for v = (0, sin th, cos th),
    th = K sigma_Q^-n sigma_P^-m."""
    if not K > 0:
        raise ValueError("K must be positive")
    rows = []
    ctx = mpmath.MPContext()
    ctx.dps = 50
    for k, s in enumerate(sorted(sojournList, key=lambda t: t.n)):
        s = _ensure(m, s)
        sc = _scales(ctx, m, s)
        th = ctx.mpf(K) * sc.S
        ch = derivative_chain(m, s, (0, ctx.sin(th), ctx.cos(th)), ctx=ctx)
        til, hat = ch.v_tilde, ch.v_hat
        nt = ctx.sqrt(sum(c * c for c in til))
        expansion = ctx.sqrt(hat[1] ** 2 + hat[2] ** 2)
        ang = ctx.asin(abs(til[0]) / nt)
        diag = abs(abs(til[1] / til[2]) - 1) if til[2] != 0 else ctx.inf
        logsc = s.m * math.log(abs(m.lambdaP)) + s.n * math.log(abs(m.sigmaQ))
        lang = float(ctx.log(ang)) if ang > 0 else -math.inf
        rows.append(AngleRow(k, s.m, s.n, float(expansion), float(ang), float(diag), logsc, lang))
    C = math.sqrt(2.0) * abs(m.beta2) * abs(m.c2 + m.c3)
    slope = math.nan
    pos = [r for r in rows if math.isfinite(r.log_angle)]
    if len(pos) >= 2:
        xs = np.array([r.log_scale for r in pos])
        ys = np.array([r.log_angle for r in pos])
        slope = float(np.polyfit(xs, ys, 1)[0])
        alt = np.array([r.m * math.log(abs(m.lambdaP)) - r.n * math.log(abs(m.sigmaQ)) for r in pos])
        slope_q = float(np.polyfit(alt, ys, 1)[0])
    else:
        slope_q = math.nan
    return AngleReport(rows, K, C, slope, slope_q)
