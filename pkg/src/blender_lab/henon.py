"""Center-unstable Henon-like families G and E.

    G(x, y, z) = (y, mu + y^2 + eta1*y*z + eta2*z^2, xi*z + y)
    E(x, y, z) = (xi*x + s1*y, mu + s2*y^2 + s3*x^2 + s4*x*y, s5*y)

Points are numpy arrays whose last axis has length 3, so every evaluator
works on a single point or on a stack of points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "HenonParams",
    "SigmaVector",
    "FixedPointPair",
    "ParamWindow",
    "WINDOW",
    "eval_G",
    "eval_E",
    "theta_map",
    "theta_inverse",
    "conjugate_check",
    "jacobian_G",
    "fixed_points_G",
    "NewtonFailure",
]


class NewtonFailure(RuntimeError):
    """Newton refinement of a fixed point did not converge."""


@dataclass(frozen=True)
class HenonParams:
    xi: float
    mu: float
    eta1: float = 0.0
    eta2: float = 0.0

    def __post_init__(self) -> None:
        if not self.xi > 1.0:
            raise ValueError(f"xi must exceed 1, got {self.xi}")

    @property
    def eta_is_zero(self) -> bool:
        return self.eta1 == 0.0 and self.eta2 == 0.0


@dataclass(frozen=True)
class SigmaVector:
    s1: float
    s2: float
    s3: float
    s4: float
    s5: float

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.s1, self.s2, self.s3, self.s4, self.s5)

    @property
    def conjugable(self) -> bool:
        return self.s1 * self.s2 * self.s5 != 0.0

    def eta_bar(self) -> tuple[float, float]:
        """(eta1, eta2) of the conjugate G-family, in the order G uses them.

        eta1 multiplies y*z and equals s1*s4/s2; eta2 multiplies z^2 and
        equals s1^2*s3/s2.
        """
        if self.s2 == 0.0:
            raise ValueError("s2 must be nonzero")
        return (self.s1 * self.s4 / self.s2, self.s1 ** 2 * self.s3 / self.s2)


@dataclass(frozen=True)
class FixedPointPair:
    pMinus: float
    pTildeMinus: float
    pPlus: float
    pTildePlus: float
    # full coordinates; equal to (p, p, p~) when eta = 0
    PMinus: tuple[float, float, float] | None = None
    PPlus: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        if self.PMinus is None:
            object.__setattr__(self, "PMinus", (self.pMinus, self.pMinus, self.pTildeMinus))
        if self.PPlus is None:
            object.__setattr__(self, "PPlus", (self.pPlus, self.pPlus, self.pTildePlus))

    def window_bounds_hold(self) -> dict[str, bool]:
        return {
            "pMinus": -2.7 < self.pMinus < -2.5,
            "pTildeMinus": 13.0 < self.pTildeMinus < 15.0,
            "pPlus": 3.5 < self.pPlus < 3.71,
            "pTildePlus": -20.6 < self.pTildePlus < -18.4,
        }


@dataclass(frozen=True)
class ParamWindow:
    xiRange: tuple[float, float] = (1.18, 1.19)
    muRange: tuple[float, float] = (-10.0, -9.0)
    etaBound: float = 0.01

    def __post_init__(self) -> None:
        if not self.etaBound > 0:
            raise ValueError("etaBound must be positive")

    def contains(self, xi: float, mu: float | None = None, eta=(0.0, 0.0)) -> bool:
        ok = self.xiRange[0] < xi < self.xiRange[1]
        if mu is not None:
            ok = ok and self.muRange[0] < mu < self.muRange[1]
        return ok and all(abs(e) < self.etaBound for e in eta)

    def grid(self, nxi: int, nmu: int) -> list[tuple[float, float]]:
        """Interior grid (endpoints excluded, the window is open)."""
        xs = np.linspace(*self.xiRange, nxi + 2)[1:-1]
        ms = np.linspace(*self.muRange, nmu + 2)[1:-1]
        return [(float(a), float(b)) for a in xs for b in ms]


WINDOW = ParamWindow()


def eval_G(p: HenonParams, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out = np.empty(np.broadcast(x, y, z).shape + (3,))
    out[..., 0] = y
    out[..., 1] = p.mu + y * y + p.eta1 * y * z + p.eta2 * z * z
    out[..., 2] = p.xi * z + y
    return out


def eval_E(s: SigmaVector, xi: float, mu: float, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out = np.empty(np.broadcast(x, y, z).shape + (3,))
    out[..., 0] = xi * x + s.s1 * y
    out[..., 1] = mu + s.s2 * y * y + s.s3 * x * x + s.s4 * x * y
    out[..., 2] = s.s5 * y
    return out


def theta_map(s: SigmaVector, v) -> np.ndarray:
    """Theta(x, y, z) = (s1 z, y, s5 x) / s2."""
    v = np.asarray(v, dtype=float)
    return np.stack([s.s1 * v[..., 2], v[..., 1], s.s5 * v[..., 0]], axis=-1) / s.s2


def theta_inverse(s: SigmaVector, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.stack(
        [s.s2 * v[..., 2] / s.s5, s.s2 * v[..., 1], s.s2 * v[..., 0] / s.s1], axis=-1
    )


def conjugate_check(s: SigmaVector, xi: float, mu: float, samples) -> float:
    """Max sup-norm defect of Theta^-1 o E o Theta against G on the samples.

    The parameter coordinate is conjugated too: E runs at mu / s2 and the
    result is compared with G at mu.
    """
    if not s.conjugable:
        raise ValueError("conjugation needs s1*s2*s5 != 0")
    eta1, eta2 = s.eta_bar()
    g = HenonParams(xi, mu, eta1, eta2)
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    lhs = theta_inverse(s, eval_E(s, xi, mu / s.s2, theta_map(s, pts)))
    rhs = eval_G(g, pts)
    # the parameter coordinate of Theta-hat is linear, so its defect is exact zero
    mu_defect = abs(s.s2 * (mu / s.s2) - mu)
    return float(max(np.max(np.abs(lhs - rhs)), mu_defect))


def jacobian_G(p: HenonParams, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    y, z = v[..., 1], v[..., 2]
    J = np.zeros(np.broadcast(y, z).shape + (3, 3))
    J[..., 0, 1] = 1.0
    J[..., 1, 1] = 2.0 * y + p.eta1 * z
    J[..., 1, 2] = p.eta1 * y + 2.0 * p.eta2 * z
    J[..., 2, 1] = 1.0
    J[..., 2, 2] = p.xi
    return J


def _closed_form_roots(xi: float, mu: float) -> tuple[float, float, float, float]:
    disc = 1.0 - 4.0 * mu
    if disc <= 0.0:
        raise ValueError(f"discriminant 1-4mu = {disc} is not positive")
    r = math.sqrt(disc)
    pm, pp = (1.0 - r) / 2.0, (1.0 + r) / 2.0
    return pm, pm / (1.0 - xi), pp, pp / (1.0 - xi)


def _newton_fixed_point(p: HenonParams, seed: np.ndarray, tol: float = 1e-12,
                        max_iter: int = 50) -> np.ndarray:
    v = seed.astype(float).copy()
    eye = np.eye(3)
    for _ in range(max_iter):
        F = eval_G(p, v) - v
        if np.max(np.abs(F)) < tol:
            return v
        v = v - np.linalg.solve(jacobian_G(p, v) - eye, F)
    if np.max(np.abs(eval_G(p, v) - v)) < tol:
        return v
    raise NewtonFailure(f"no convergence in {max_iter} steps from {seed}")


def fixed_points_G(p: HenonParams) -> FixedPointPair:
    pm, ptm, pp, ptp = _closed_form_roots(p.xi, p.mu)
    if p.eta_is_zero:
        return FixedPointPair(pm, ptm, pp, ptp)
    vm = _newton_fixed_point(p, np.array([pm, pm, ptm]))
    vp = _newton_fixed_point(p, np.array([pp, pp, ptp]))
    # fixed points of G always have x = y, so report the y and z coordinates
    return FixedPointPair(
        float(vm[1]), float(vm[2]), float(vp[1]), float(vp[2]),
        PMinus=tuple(float(c) for c in vm), PPlus=tuple(float(c) for c in vp),
    )
