"""Model diffeomorphism with a heterodimensional cycle between P and Q.

Local coordinates
-----------------
U_Q (around Q = 0): y expands by sigma_Q, (x, z) contract by lambda_Q and
rotate by 2 pi phi_Q.  U_P (around P = 0): x contracts by lambda_P, (y, z)
expand by sigma_P and rotate by 2 pi phi_P.  Heteroclinic anchors are
X = (0,1,0), Y~ = (1,0,1) in U_Q and X~ = (1,0,0), Y = (0,1,1) in U_P.

    T1(X + W) = X~ + A W + H~(W)
    T2(Y + W) = Y~ + B(W) + H(W)

The unfolding adds translations by nu (near X~) and mu (near Y~) and extra
rotations by alpha (at P) and beta (at Q), each cut off by a bump.

Every map here accepts plain floats or mpmath numbers.  A ``ModelKernel``
fixes the arithmetic (float, or an mpmath context at a chosen precision).
"""

from __future__ import annotations

import ast
import configparser
import math
import operator
import re
from dataclasses import dataclass, field, fields, replace
from math import comb

import mpmath
import numpy as np

from .henon import WINDOW, ParamWindow, SigmaVector

__all__ = [
    "Poly3",
    "PolyMap",
    "ZERO_MAP",
    "CycleModel",
    "canonical_model",
    "UnfoldingParams",
    "BumpProfile",
    "Check",
    "ValidationReport",
    "RegionError",
    "ModelFileError",
    "validate_model",
    "sigma_params",
    "bump_pi",
    "perturb_translation",
    "perturb_rotation",
    "rotation_c0_constant",
    "ModelKernel",
    "model_step",
    "OrbitResult",
    "return_map_orbit",
    "parse_model",
    "load_model",
    "dump_model",
    "X", "XT", "Y", "YT",
]

X = (0.0, 1.0, 0.0)
YT = (1.0, 0.0, 1.0)
XT = (1.0, 0.0, 0.0)
Y = (0.0, 1.0, 1.0)


class RegionError(ValueError):
    """A point handed to model_step lies outside the declared region."""


class ModelFileError(ValueError):
    """A model file could not be parsed."""


# ------------------------------------------------------------------ polynomials

@dataclass(frozen=True)
class Poly3:
    """Polynomial in (x, y, z): a tuple of ((i, j, k), coefficient) terms."""

    terms: tuple[tuple[tuple[int, int, int], float], ...] = ()

    def __call__(self, w):
        x, y, z = w
        out = 0 * x
        for (i, j, k), c in self.terms:
            out = out + c * x ** i * y ** j * z ** k
        return out

    def grad(self, w):
        x, y, z = w
        g = [0 * x, 0 * x, 0 * x]
        for (i, j, k), c in self.terms:
            if i:
                g[0] = g[0] + c * i * x ** (i - 1) * y ** j * z ** k
            if j:
                g[1] = g[1] + c * j * x ** i * y ** (j - 1) * z ** k
            if k:
                g[2] = g[2] + c * k * x ** i * y ** j * z ** (k - 1)
        return tuple(g)

    def coefficient(self, powers: tuple[int, int, int]) -> float:
        return sum(c for p, c in self.terms if p == powers)

    def second_derivative_at_zero(self, a: int, b: int) -> float:
        """d^2/dw_a dw_b at the origin."""
        p = [0, 0, 0]
        p[a] += 1
        p[b] += 1
        c = self.coefficient(tuple(p))
        return 2.0 * c if a == b else c

    @property
    def is_zero(self) -> bool:
        return all(c == 0 for _, c in self.terms)

    def degree_terms(self, degree: int) -> list[tuple[tuple[int, int, int], float]]:
        return [(p, c) for p, c in self.terms if sum(p) == degree and c != 0]


@dataclass(frozen=True)
class PolyMap:
    comps: tuple[Poly3, Poly3, Poly3] = (Poly3(), Poly3(), Poly3())

    def __call__(self, w):
        return tuple(c(w) for c in self.comps)

    def jacobian(self, w):
        return [list(c.grad(w)) for c in self.comps]

    @property
    def is_zero(self) -> bool:
        return all(c.is_zero for c in self.comps)


ZERO_MAP = PolyMap()


# ------------------------------------------------------------------ the model

@dataclass(frozen=True)
class CycleModel:
    lambdaP: float
    sigmaP: float
    phiP: float
    lambdaQ: float
    sigmaQ: float
    phiQ: float
    alpha1: float
    alpha2: float
    alpha3: float
    beta2: float
    gamma3: float
    a1: float
    a2: float
    a3: float
    b1: float
    b2: float
    b3: float
    b4: float
    c1: float
    c2: float
    c3: float
    H: PolyMap = ZERO_MAP
    Htilde: PolyMap = ZERO_MAP
    aP: float = 3.0
    aQ: float = 3.0
    rHet: float = 0.5  # half-width of the cubes U_X, U_Y around the anchors
    N1: int = 1
    N2: int = 1
    kappaInv: float = 1.5  # rotation perturbations are exact on [-1.5, 1.5]^3
    theta: float = 2.0
    smoothness: int = 2

    @property
    def tau(self) -> float:
        return self.gamma3 * (self.a3 - self.a2) / math.sqrt(2.0)

    @property
    def eta(self) -> float:
        return math.log(1.0 / self.lambdaQ) / math.log(self.sigmaP)

    def eta_tilde(self, xi: float) -> float:
        return math.log(self.tau / xi) / math.log(self.sigmaP)

    @property
    def spectral_value(self) -> float:
        return abs((math.sqrt(abs(self.lambdaP)) * self.sigmaP) ** self.eta * self.sigmaQ)

    def A(self, w):
        x, y, z = w
        return (self.alpha1 * x + self.alpha2 * y + self.alpha3 * z,
                self.beta2 * y, self.gamma3 * z)

    def B(self, w):
        x, y, z = w
        return (self.a1 * x + self.a2 * y + self.a3 * z,
                self.b1 * x + self.b2 * y * y + self.b3 * z * z + self.b4 * y * z,
                self.c1 * x + self.c2 * y + self.c3 * z)

    def with_(self, **kw) -> "CycleModel":
        return replace(self, **kw)


def canonical_model() -> CycleModel:
    r2 = math.sqrt(2.0)
    return CycleModel(
        lambdaP=0.01, sigmaP=3.0, phiP=0.17, lambdaQ=0.5, sigmaQ=2.0, phiQ=0.31,
        alpha1=1.0, alpha2=0.3, alpha3=0.2, beta2=1.0, gamma3=1.0,
        a1=0.1, a2=0.0, a3=r2, b1=1.0, b2=0.5, b3=0.5, b4=1.0,
        c1=0.1, c2=1.0 / r2, c3=1.0 / r2,
    )


@dataclass(frozen=True)
class UnfoldingParams:
    muBar: tuple[float, float, float] = (0.0, 0.0, 0.0)
    nuBar: tuple[float, float, float] = (0.0, 0.0, 0.0)
    alpha: float = 0.0
    beta: float = 0.0
    rho: float = 0.25

    def __post_init__(self) -> None:
        if not self.rho > 0:
            raise ValueError("rho must be positive")


# ------------------------------------------------------------------ validation

@dataclass(frozen=True)
class Check:
    name: str
    value: float
    passed: bool


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)
    sigma: SigmaVector | None = None
    eta_bar: tuple[float, float] | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def add(self, name: str, value: float, passed: bool) -> None:
        self.checks.append(Check(name, float(value), bool(passed)))


def _flatness_defects(m: CycleModel) -> tuple[float, float]:
    """Largest offending coefficient in H and in H~."""
    bad_h = 0.0
    for idx, comp in enumerate(m.H.comps):
        for deg in (0, 1):
            bad_h = max([bad_h] + [abs(c) for _, c in comp.degree_terms(deg)])
        if idx == 1:
            for p in ((0, 2, 0), (0, 0, 2), (0, 1, 1)):
                bad_h = max(bad_h, abs(comp.coefficient(p)))
    bad_t = 0.0
    for comp in m.Htilde.comps:
        for deg in (0, 1):
            bad_t = max([bad_t] + [abs(c) for _, c in comp.degree_terms(deg)])
    return bad_h, bad_t


def validate_model(m: CycleModel, xi: float, window: ParamWindow = WINDOW) -> ValidationReport:
    rep = ValidationReport()
    rep.add("0<|lambdaP|<1", abs(m.lambdaP), 0 < abs(m.lambdaP) < 1)
    rep.add("sigmaP>1", m.sigmaP, m.sigmaP > 1)
    rep.add("0<lambdaQ<1", m.lambdaQ, 0 < m.lambdaQ < 1)
    rep.add("|sigmaQ|>1", abs(m.sigmaQ), abs(m.sigmaQ) > 1)
    rep.add("alpha1*beta2*gamma3!=0", m.alpha1 * m.beta2 * m.gamma3,
            m.alpha1 * m.beta2 * m.gamma3 != 0)
    v = m.b1 * (m.a2 * m.c3 - m.a3 * m.c2)
    rep.add("b1(a2c3-a3c2)!=0", v, v != 0)
    rep.add("c2=c3", m.c2 - m.c3, m.c2 == m.c3)
    rep.add("gamma3(a3-a2)>0", m.gamma3 * (m.a3 - m.a2), m.gamma3 * (m.a3 - m.a2) > 0)
    v = (m.a2 + m.a3) * (m.b2 + m.b3 + m.b4)
    rep.add("(a2+a3)(b2+b3+b4)!=0", v, v != 0)
    ok_spec = 0 < abs(m.lambdaP) < 1 and m.sigmaP > 1 and 0 < m.lambdaQ < 1
    spec = m.spectral_value if ok_spec else math.nan
    rep.add("spectral", spec, ok_spec and 0 < spec < 1)
    bad_h, bad_t = _flatness_defects(m)
    rep.add("H flat", bad_h, bad_h == 0)
    rep.add("Htilde flat", bad_t, bad_t == 0)
    rep.add("tau", m.tau, m.tau > 0)
    rep.add("xi in window", xi, window.xiRange[0] < xi < window.xiRange[1])
    try:
        s = sigma_params(m, xi)
    except ZeroDivisionError:
        rep.add("sigma defined", math.nan, False)
        return rep
    rep.sigma = s
    rep.add("s1*s2*s5!=0", s.s1 * s.s2 * s.s5, s.conjugable)
    if s.s2 != 0:
        eb = s.eta_bar()
        rep.eta_bar = eb
        rep.add("|eta1|<etaBound", eb[0], abs(eb[0]) < window.etaBound)
        rep.add("|eta2|<etaBound", eb[1], abs(eb[1]) < window.etaBound)
    return rep


def sigma_params(m: CycleModel, xi: float) -> SigmaVector:
    if m.a3 == m.a2:
        raise ZeroDivisionError("a3 = a2 makes s3 and s4 undefined")
    r2 = math.sqrt(2.0)
    d = m.a3 - m.a2
    return SigmaVector(
        m.beta2 * (m.a2 + m.a3) / r2,
        m.beta2 ** 2 * (m.b2 + m.b3 + m.b4) / 2.0,
        xi ** 2 * (m.b2 + m.b3 - m.b4) / d ** 2,
        xi * r2 * m.beta2 * (m.b3 - m.b2) / d,
        m.beta2 * (m.c2 + m.c3) / r2,
    )


# ------------------------------------------------------------------ bumps

def _smoothstep_coeffs(order: int) -> np.ndarray:
    """Coefficients (ascending) of the smoothstep S_N, flat to order N at 0 and 1."""
    n = order
    c = np.zeros(2 * n + 2)
    for k in range(n + 1):
        c[n + 1 + k] = comb(n + k, k) * comb(2 * n + 1, n - k) * (-1) ** k
    return c


@dataclass(frozen=True)
class BumpProfile:
    """b(x) = 1 on [-1, 1], 0 off [-theta, theta], smoothstep of order r+1 between.

    On 1 <= |x| <= theta, b(x) = 1 - S_{r+1}((|x| - 1) / (theta - 1)), where
    S_N(u) = u^(N+1) sum_k C(N+k, k) C(2N+1, N-k) (-u)^k is the polynomial
    smoothstep whose first N derivatives vanish at u = 0 and u = 1.
    """

    theta: float = 2.0
    r: int = 2

    def __post_init__(self) -> None:
        if not self.theta > 1:
            raise ValueError("theta must exceed 1")

    @property
    def coeffs(self) -> np.ndarray:
        return _smoothstep_coeffs(self.r + 1)

    def __call__(self, x):
        ax = abs(x)
        if ax <= 1:
            return 1 + 0 * ax
        if ax >= self.theta:
            return 0 * ax
        u = (ax - 1) / (self.theta - 1)
        acc = 0 * u
        for c in self.coeffs[::-1]:
            acc = acc * u + float(c)
        return 1 - acc

    def vectorized(self, x) -> np.ndarray:
        ax = np.abs(np.asarray(x, dtype=float))
        u = np.clip((ax - 1.0) / (self.theta - 1.0), 0.0, 1.0)
        return 1.0 - np.polynomial.polynomial.polyval(u, self.coeffs)

    def derivative_sup(self, j: int, samples: int = 20001) -> float:
        """sup |b^(j)| from the exact polynomial derivative."""
        if j == 0:
            return 1.0
        dc = np.polynomial.polynomial.polyder(self.coeffs, j)
        u = np.linspace(0.0, 1.0, samples)
        return float(np.max(np.abs(np.polynomial.polynomial.polyval(u, dc)))
                     / (self.theta - 1.0) ** j)

    def cr_norm(self, r: int | None = None) -> float:
        r = self.r if r is None else r
        return max(self.derivative_sup(j) for j in range(r + 1))


def bump_pi(bp: BumpProfile, rho: float, w):
    if not rho > 0:
        raise ValueError("rho must be positive")
    x, y, z = w
    return bp(x / rho) * bp(y / rho) * bp(z / rho)


def _norm2(v):
    return (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) ** 0.5


def perturb_translation(z0, w, rho: float, z, bp: BumpProfile = BumpProfile()):
    """Z + Pi_rho(Z - Z0) w inside B(Z0, 2 rho), identity outside."""
    d = tuple(a - b for a, b in zip(z, z0))
    if _norm2(d) >= 2 * rho:
        return tuple(z)
    s = bump_pi(bp, rho, d)
    return tuple(a + s * b for a, b in zip(z, w))


def _rotate(axis: str, c, s, w):
    x, y, z = w
    if axis == "x":
        return (x, c * y - s * z, s * y + c * z)
    return (c * x - s * z, y, s * x + c * z)


def perturb_rotation(axis: str, omega, theta: float, kappa: float, w,
                     cos=math.cos, sin=math.sin, two_pi=2 * math.pi):
    """Rotate by 2 pi b(kappa |w|_inf) omega about the given axis.

    The sup norm makes the rotation exact on the cube [-1/kappa, 1/kappa]^3
    and the identity off [-theta/kappa, theta/kappa]^3.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    if axis not in ("x", "y"):
        raise ValueError("axis must be 'x' or 'y'")
    r = max(abs(w[0]), abs(w[1]), abs(w[2]))
    b = BumpProfile(theta)(kappa * r)
    if b == 0 or omega == 0:
        return tuple(w)
    ang = two_pi * b * omega
    return _rotate(axis, cos(ang), sin(ang), w)


def rotation_c0_constant(theta: float, kappa: float) -> float:
    """C with |R(w) - w| <= C |omega| for all w: 2 pi times the largest support radius."""
    return 2 * math.pi * math.sqrt(3.0) * theta / kappa


# ------------------------------------------------------------------ kernel

class ModelKernel:
    """Model and unfolding bound to one arithmetic (float or an mpmath context)."""

    def __init__(self, m: CycleModel, u: UnfoldingParams = UnfoldingParams(),
                 dps: int | None = None, phiP_total=None, phiQ_total=None) -> None:
        self.m = m
        self.u = u
        self.bump = BumpProfile(m.theta, m.smoothness)
        if dps is None:
            self.ctx = None
            self.num = float
            self.cos, self.sin = math.cos, math.sin
            self.two_pi = 2 * math.pi
        else:
            ctx = mpmath.MPContext()
            ctx.dps = dps
            self.ctx = ctx
            self.num = ctx.mpf
            self.cos, self.sin = ctx.cos, ctx.sin
            self.two_pi = 2 * ctx.pi
        N = self.num
        self.lP, self.sP, self.lQ, self.sQ = N(m.lambdaP), N(m.sigmaP), N(m.lambdaQ), N(m.sigmaQ)
        self.kappa = 1 / N(m.kappaInv)
        # optional exact totals phi + alpha, phi + beta (used by the renormalisation)
        self.phiP_total = phiP_total
        self.phiQ_total = phiQ_total
        self.rotP = self._cs(N(m.phiP))
        self.rotQ = self._cs(N(m.phiQ))
        self.rotA = self._cs(N(u.alpha))
        self.rotB = self._cs(N(u.beta))
        self.mu = tuple(N(c) for c in u.muBar)
        self.nu = tuple(N(c) for c in u.nuBar)
        self.rho = N(u.rho)
        self.bump_evals = 0
        self.off_plateau = 0

    def _cs(self, phi):
        a = self.two_pi * phi
        return self.cos(a), self.sin(a)

    def vec(self, v):
        return tuple(self.num(c) for c in v)

    # regions -----------------------------------------------------------
    def in_region(self, region: str, z) -> bool:
        m = self.m
        if region == "Q":
            return max(abs(c) for c in z) <= m.aQ
        if region == "P":
            return max(abs(c) for c in z) <= m.aP
        anchor = X if region == "X" else Y
        return max(abs(a - b) for a, b in zip(z, anchor)) <= m.rHet

    def _rot_bump(self, w):
        r = max(abs(w[0]), abs(w[1]), abs(w[2]))
        b = self.bump(self.kappa * r)
        if b != 1:
            self.off_plateau += 1
        return b

    def _translate(self, z0, shift, z):
        d = tuple(a - b for a, b in zip(z, z0))
        if _norm2(d) >= 2 * self.rho:
            self.off_plateau += 1
            return z
        s = self.bump(d[0] / self.rho) * self.bump(d[1] / self.rho) * self.bump(d[2] / self.rho)
        if s != 1:
            self.off_plateau += 1
        return tuple(a + s * b for a, b in zip(z, shift))

    # local maps --------------------------------------------------------
    def step_Q(self, z):
        c, s = self.rotQ
        x, y, w = z
        out = (self.lQ * (c * x - s * w), self.sQ * y, self.lQ * (s * x + c * w))
        if self.u.beta != 0:
            b = self._rot_bump(out)
            cb, sb = self.rotB if b == 1 else self._cs(b * self.num(self.u.beta))
            out = _rotate("y", cb, sb, out)
        else:
            self._rot_bump(out)
        return out

    def step_P(self, z):
        c, s = self.rotP
        x, y, w = z
        out = (self.lP * x, self.sP * (c * y - s * w), self.sP * (s * y + c * w))
        if self.u.alpha != 0:
            b = self._rot_bump(out)
            ca, sa = self.rotA if b == 1 else self._cs(b * self.num(self.u.alpha))
            out = _rotate("x", ca, sa, out)
        else:
            self._rot_bump(out)
        return out

    def step_X(self, z):
        m = self.m
        W = tuple(a - b for a, b in zip(z, X))
        lin = m.A(W)
        hot = m.Htilde(W) if not m.Htilde.is_zero else (0, 0, 0)
        out = tuple(self.num(c) + a + h for c, a, h in zip(XT, lin, hot))
        return self._translate(XT, self.nu, out)

    def step_Y(self, z):
        m = self.m
        W = tuple(a - b for a, b in zip(z, Y))
        lin = m.B(W)
        hot = m.H(W) if not m.H.is_zero else (0, 0, 0)
        out = tuple(self.num(c) + a + h for c, a, h in zip(YT, lin, hot))
        return self._translate(YT, self.mu, out)

    def step(self, region: str, z, check: bool = True):
        z = self.vec(z)
        if check and not self.in_region(region, z):
            raise RegionError(f"point {tuple(float(c) for c in z)} outside U_{region}")
        return {"Q": self.step_Q, "P": self.step_P, "X": self.step_X, "Y": self.step_Y}[region](z)


def model_step(m: CycleModel, u: UnfoldingParams, region: str, z, dps: int | None = None):
    return ModelKernel(m, u, dps).step(region, z)


# ------------------------------------------------------------------ orbits

@dataclass
class OrbitResult:
    points: list
    admissible: bool
    escape_index: int | None
    plateau: bool
    return_time: int

    def final(self):
        return self.points[-1]


def _in_ball(z, c, r) -> bool:
    return _norm2(tuple(a - b for a, b in zip(z, c))) < 2 * r


def return_map_orbit(m: CycleModel, u: UnfoldingParams, sojourn: tuple[int, int], z,
                     dps: int | None = None, kernel: ModelKernel | None = None) -> OrbitResult:
    """n steps in U_Q, T1, m steps in U_P, T2, checking the itinerary en route.

    ``sojourn`` is (n, m).  Index i of the orbit is the i-th recorded point;
    index 0 is the start, which must lie in B(Y~, 2 rho).
    """
    n, mm = sojourn
    k = kernel or ModelKernel(m, u, dps)
    k.off_plateau = 0
    z = k.vec(z)
    pts = [z]
    ret = n + m.N1 + mm + m.N2

    def fail(i):
        return OrbitResult(pts, False, i, k.off_plateau == 0, ret)

    if not _in_ball(z, YT, k.rho):
        return fail(0)
    for _ in range(n):
        z = k.step_Q(z)
        pts.append(z)
        if not k.in_region("Q", z):
            return fail(len(pts) - 1)
    if not k.in_region("X", z):
        return fail(len(pts) - 1)
    z = k.step_X(z)
    pts.append(z)
    if not _in_ball(z, XT, k.rho):
        return fail(len(pts) - 1)
    for _ in range(mm):
        z = k.step_P(z)
        pts.append(z)
        if not k.in_region("P", z):
            return fail(len(pts) - 1)
    if not k.in_region("Y", z):
        return fail(len(pts) - 1)
    z = k.step_Y(z)
    pts.append(z)
    if not _in_ball(z, YT, k.rho):
        return fail(len(pts) - 1)
    return OrbitResult(pts, True, None, k.off_plateau == 0, ret)


# ------------------------------------------------------------------ model files

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_FUNCS = {"sqrt": math.sqrt}


def parse_number(text: str) -> float:
    """Decimal literal, or a small arithmetic expression using sqrt, e.g. 1/sqrt(2)."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ModelFileError(f"bad number {text!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ModelFileError(f"unsupported expression {text!r}")

    return ev(tree)


_TERM = re.compile(r"^([xyz])(?:\^(\d+))?$")


def parse_poly(text: str) -> Poly3:
    """Terms separated by ',' such as '0.01*x^3, -0.2*x*y'."""
    terms = []
    for raw in text.split(","):
        raw = raw.strip()
        if not raw or raw == "0":
            continue
        coef = 1.0
        powers = [0, 0, 0]
        for factor in raw.split("*"):
            factor = factor.strip()
            mt = _TERM.match(factor)
            if mt:
                powers["xyz".index(mt.group(1))] += int(mt.group(2) or 1)
            else:
                coef *= parse_number(factor)
        terms.append((tuple(powers), coef))
    return Poly3(tuple(terms))


def _format_poly(p: Poly3) -> str:
    if p.is_zero:
        return "0"
    parts = []
    for (i, j, k), c in p.terms:
        fs = [repr(c)] + [f"{v}^{e}" for v, e in zip("xyz", (i, j, k)) if e]
        parts.append("*".join(fs))
    return ", ".join(parts)


_SCALARS = {f.name for f in fields(CycleModel)} - {"H", "Htilde"}
_INTS = {"N1", "N2", "smoothness"}


def parse_model(text: str) -> CycleModel:
    """Model file: key = value lines under any sections; H1..H3, Htilde1..3 polynomials."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ModelFileError(str(exc)) from exc
    vals: dict[str, object] = {}
    h = {"H": [Poly3(), Poly3(), Poly3()], "Htilde": [Poly3(), Poly3(), Poly3()]}
    for sec in cp.sections():
        for key, raw in cp.items(sec):
            mt = re.fullmatch(r"(Htilde|H)([123])", key)
            if mt:
                h[mt.group(1)][int(mt.group(2)) - 1] = parse_poly(raw)
            elif key in _SCALARS:
                v = parse_number(raw)
                vals[key] = int(v) if key in _INTS else v
            else:
                raise ModelFileError(f"unknown key {key!r} in section [{sec}]")
    required = _SCALARS - {"aP", "aQ", "rHet", "N1", "N2", "kappaInv", "theta", "smoothness"}
    missing = sorted(required - vals.keys())
    if missing:
        raise ModelFileError(f"missing keys: {', '.join(missing)}")
    return CycleModel(**vals, H=PolyMap(tuple(h["H"])), Htilde=PolyMap(tuple(h["Htilde"])))


def load_model(path) -> CycleModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def dump_model(m: CycleModel) -> str:
    groups = {
        "local": ["lambdaP", "sigmaP", "phiP", "lambdaQ", "sigmaQ", "phiQ"],
        "transition1": ["alpha1", "alpha2", "alpha3", "beta2", "gamma3"],
        "transition2": ["a1", "a2", "a3", "b1", "b2", "b3", "b4", "c1", "c2", "c3"],
        "neighbourhoods": ["aP", "aQ", "rHet", "N1", "N2", "kappaInv", "theta", "smoothness"],
    }
    lines = []
    for sec, keys in groups.items():
        lines.append(f"[{sec}]")
        lines += [f"{k} = {getattr(m, k)!r}" for k in keys]
        lines.append("")
    lines.append("[higher_order]")
    for name in ("H", "Htilde"):
        for i, comp in enumerate(getattr(m, name).comps, 1):
            lines.append(f"{name}{i} = {_format_poly(comp)}")
    return "\n".join(lines) + "\n"
