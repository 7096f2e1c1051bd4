"""Blender-horseshoe checks for G on the reference domain.

Discs are y-monotone polylines.  A disc may carry a scalar ``param`` per
sample recording where the sample came from on some original disc; the
superposition certificate reads its nested intervals off that array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .henon import FixedPointPair, HenonParams, eval_G, fixed_points_G, jacobian_G

__all__ = [
    "Box3",
    "DELTA",
    "ConeSpec",
    "UUDisc",
    "StableSegment",
    "ConeVerdict",
    "DiscPreconditionError",
    "CoveringFailure",
    "Certificate",
    "SeparatrixTrace",
    "disc_L",
    "stable_segments",
    "validate_uu_disc",
    "crossing",
    "in_between_margin",
    "in_between_test",
    "iterate_disc",
    "covering_step",
    "certify_superposition",
    "cone_invariance_sample",
    "separatrix_trace",
]

DEFAULT_SAMPLES = 2000
CROSSING_TOL = 1e-9


class DiscPreconditionError(ValueError):
    """A disc does not satisfy the precondition of an operation."""


class CoveringFailure(RuntimeError):
    """No branch of the image is in-between (blender property fails here)."""


@dataclass(frozen=True)
class Box3:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self) -> None:
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"degenerate box {self.lo} .. {self.hi}")

    def contains(self, pts, inflate: float = 0.0) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        lo = np.asarray(self.lo) - inflate
        hi = np.asarray(self.hi) + inflate
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, 3))

    @property
    def z_extent(self) -> float:
        return self.hi[2] - self.lo[2]


DELTA = Box3((-4.0, -4.0, -40.0), (4.0, 4.0, 22.0))


@dataclass(frozen=True)
class ConeSpec:
    uuRatio: float = 0.5
    uRatio: float = 0.5

    def __post_init__(self) -> None:
        for r in (self.uuRatio, self.uRatio):
            if not 0.0 < r < 1.0:
                raise ValueError("cone ratios must lie in (0, 1)")

    def in_uu(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.hypot(v[..., 0], v[..., 2]) < self.uuRatio * np.abs(v[..., 1])

    def in_u(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.abs(v[..., 0]) < self.uRatio * np.hypot(v[..., 1], v[..., 2])


@dataclass
class UUDisc:
    pts: np.ndarray
    param: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.pts = np.asarray(self.pts, dtype=float)
        if self.pts.ndim != 2 or self.pts.shape[1] != 3:
            raise ValueError("disc samples must have shape (N, 3)")
        if self.param is None:
            self.param = self.pts[:, 1].copy()
        else:
            self.param = np.asarray(self.param, dtype=float)

    @property
    def y(self) -> np.ndarray:
        return self.pts[:, 1]

    @property
    def yRange(self) -> tuple[float, float]:
        return float(self.pts[0, 1]), float(self.pts[-1, 1])

    @property
    def y_extent(self) -> float:
        a, b = self.yRange
        return b - a

    def at_y(self, y: float) -> np.ndarray:
        return np.array([np.interp(y, self.y, self.pts[:, k]) for k in range(3)])

    def param_at_y(self, y: float) -> float:
        return float(np.interp(y, self.y, self.param))

    def point_at_param(self, s) -> np.ndarray:
        order = np.argsort(self.param)
        return np.stack(
            [np.interp(s, self.param[order], self.pts[order, k]) for k in range(3)], axis=-1
        )


@dataclass(frozen=True)
class StableSegment:
    anchor: str
    point: tuple[float, float, float]

    def sample(self, box: Box3 = DELTA, n: int = 3) -> np.ndarray:
        xs = np.linspace(box.lo[0], box.hi[0], n)
        return np.array([[x, self.point[1], self.point[2]] for x in xs])


def stable_segments(fp: FixedPointPair) -> tuple[StableSegment, StableSegment]:
    return StableSegment("P-", fp.PMinus), StableSegment("P+", fp.PPlus)


def disc_L(n: int = DEFAULT_SAMPLES, half: float = 4.0) -> UUDisc:
    """The disc {(0, y, 0) : |y| <= half} sampled at n points."""
    ys = np.linspace(-half, half, n)
    return UUDisc(np.stack([np.zeros(n), ys, np.zeros(n)], axis=1))


@dataclass(frozen=True)
class ConeVerdict:
    passed: bool
    worst_index: int
    worst_ratio: float  # sqrt(dx^2 + dz^2) / |dy| of the worst chord


def _chord_ratio(pts: np.ndarray) -> np.ndarray:
    d = np.diff(pts, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.hypot(d[:, 0], d[:, 2]) / np.abs(d[:, 1])
    return np.where(np.isnan(r), np.inf, r)


def validate_uu_disc(d: UUDisc, c: ConeSpec = ConeSpec()) -> ConeVerdict:
    if len(d.pts) < 2:
        raise DiscPreconditionError("a disc needs at least two samples")
    r = _chord_ratio(d.pts)
    i = int(np.argmax(r))
    return ConeVerdict(bool(np.all(r < c.uuRatio)), i, float(r[i]))


def crossing(d: UUDisc, y: float) -> np.ndarray:
    lo, hi = d.yRange
    if not (lo - CROSSING_TOL <= y <= hi + CROSSING_TOL):
        raise DiscPreconditionError(f"disc y-range [{lo}, {hi}] misses y = {y}")
    return d.at_y(min(max(y, lo), hi))


def in_between_margin(d: UUDisc, fp: FixedPointPair, box: Box3 = DELTA) -> float:
    """Signed margin: positive iff the disc is in-between.

    The value is the smallest distance from the two crossing z-values to the
    ends of (p~+, p~-), negative when one of them falls outside, and -inf
    when a crossing point leaves the box.
    """
    cm = crossing(d, fp.PMinus[1])
    cp = crossing(d, fp.PPlus[1])
    if not (box.contains(cm) and box.contains(cp)):
        return -math.inf
    lo, hi = fp.PPlus[2], fp.PMinus[2]
    return float(min(cm[2] - lo, hi - cm[2], cp[2] - lo, hi - cp[2]))


def in_between_test(d: UUDisc, fp: FixedPointPair, box: Box3 = DELTA) -> bool:
    return in_between_margin(d, fp, box) > 0.0


def _split_runs(ok: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True chords as (first_point, last_point) index pairs."""
    flags = np.concatenate([[0], np.asarray(ok, dtype=np.int8), [0]])
    edges = np.flatnonzero(np.diff(flags))
    return [(int(a), int(b)) for a, b in zip(edges[::2], edges[1::2])]


def iterate_disc(p: HenonParams, d: UUDisc, box: Box3 = DELTA,
                 cone: ConeSpec = ConeSpec(), n_samples: int | None = None) -> list[UUDisc]:
    n_out = n_samples or len(d.pts)
    img = eval_G(p, d.pts)
    par = d.param
    dy = np.diff(img[:, 1])
    good = _chord_ratio(img) < cone.uuRatio
    branches: list[UUDisc] = []
    for sign in (1.0, -1.0):
        for a, b in _split_runs(good & (np.sign(dy) == sign)):
            seg, sp = img[a:b + 1], par[a:b + 1]
            if sign < 0:
                seg, sp = seg[::-1], sp[::-1]
            y0 = max(seg[0, 1], box.lo[1])
            y1 = min(seg[-1, 1], box.hi[1])
            if not y1 > y0:
                continue
            ys = np.linspace(y0, y1, n_out)
            res = np.stack([np.interp(ys, seg[:, 1], seg[:, k]) if k != 1 else ys
                            for k in range(3)], axis=1)
            rp = np.interp(ys, seg[:, 1], sp)
            inside = box.contains(res)
            for c0, c1 in _split_runs(inside[:-1] & inside[1:]):
                if c1 - c0 >= 1:
                    branches.append(UUDisc(res[c0:c1 + 1], rp[c0:c1 + 1]))
    branches.sort(key=lambda br: br.yRange[0])
    return branches


def _branch_rank(br: UUDisc, fp: FixedPointPair, box: Box3) -> tuple[float, float]:
    return (round(br.y_extent, 9), in_between_margin(br, fp, box))


def covering_step(p: HenonParams, d: UUDisc, fp: FixedPointPair,
                  box: Box3 = DELTA) -> UUDisc | None:
    if not in_between_test(d, fp, box):
        raise DiscPreconditionError("covering_step needs an in-between disc")
    best, best_rank = None, None
    lo, hi = fp.PMinus[1], fp.PPlus[1]
    for br in iterate_disc(p, d, box):
        a, b = br.yRange
        if a > lo + CROSSING_TOL or b < hi - CROSSING_TOL:
            continue
        if not in_between_test(br, fp, box):
            continue
        rank = _branch_rank(br, fp, box)
        if best_rank is None or rank > best_rank:
            best, best_rank = br, rank
    return best


@dataclass
class Certificate:
    params: HenonParams
    intervals: list[tuple[float, float]]
    margins: list[float]
    witness_param: float
    witness_point: np.ndarray
    orbit: np.ndarray
    orbit_inside: bool
    widths: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.widths = [b - a for a, b in self.intervals]

    def contraction_ratio(self) -> float:
        """Largest ratio of consecutive interval widths."""
        w = self.widths
        if len(w) < 2:
            return 0.0
        return max(w[i + 1] / w[i] for i in range(len(w) - 1))


def _forward(p: HenonParams, d: UUDisc, s, steps: int) -> np.ndarray:
    pts = d.point_at_param(np.atleast_1d(np.asarray(s, dtype=float)))
    for _ in range(steps):
        pts = eval_G(p, pts)
    return pts


def _refine_end(p: HenonParams, d: UUDisc, steps: int, s_guess: float, y_end: float,
                outer: tuple[float, float], scale: float) -> float:
    """Parameter s near s_guess with y(G^steps(d(s))) = y_end."""

    def g(s: float) -> float:
        return float(_forward(p, d, s, steps)[0, 1]) - y_end

    delta = max(1e-3 * scale, 1e-15 * max(1.0, abs(s_guess)))
    for _ in range(60):
        a = max(outer[0], s_guess - delta)
        b = min(outer[1], s_guess + delta)
        ga, gb = g(a), g(b)
        if ga == 0.0:
            return a
        if gb == 0.0:
            return b
        if ga * gb < 0.0:
            return float(brentq(g, a, b, xtol=1e-16, rtol=4 * np.finfo(float).eps))
        if a == outer[0] and b == outer[1]:
            break
        delta *= 2.0
    return s_guess


def certify_superposition(p: HenonParams, d: UUDisc, n: int,
                          box: Box3 = DELTA, inflate: float = 1e-6) -> Certificate:
    """Nested preimage intervals of in-between branches on the disc d.

    Every stage is rebuilt from the original disc: parameters are sampled
    inside the current interval and pushed forward, and the interval ends
    are refined by root finding on the forward orbit.  Resampling the image
    instead would leak interpolation error from early stages into the tiny
    late intervals.  Float64 forward orbits keep this accurate up to about a
    dozen steps.
    """
    fp = fixed_points_G(p)
    if not in_between_test(d, fp, box):
        raise DiscPreconditionError("certify_superposition needs an in-between disc")
    n_pts = len(d.pts)
    lo, hi = float(np.min(d.param)), float(np.max(d.param))
    intervals = [(lo, hi)]
    disc = UUDisc(d.pts.copy(), d.param.copy())
    margins = [in_between_margin(disc, fp, box)]
    for step in range(1, n + 1):
        nxt = covering_step(p, disc, fp, box)
        if nxt is None:
            raise CoveringFailure(f"covering step {step} found no in-between branch")
        outer = intervals[-1]
        width = float(np.max(nxt.param) - np.min(nxt.param))
        ends = []
        for idx in (0, -1):
            ends.append(_refine_end(p, d, step, float(nxt.param[idx]), float(nxt.pts[idx, 1]),
                                    outer, width))
        a, b = min(ends), max(ends)
        intervals.append((a, b))
        ss = np.linspace(a, b, n_pts)
        pts = _forward(p, d, ss, step)
        order = np.argsort(pts[:, 1])
        disc = UUDisc(pts[order], ss[order])
        margins.append(in_between_margin(disc, fp, box))
    a, b = intervals[-1]
    s_star = 0.5 * (a + b)
    w = d.point_at_param(s_star)
    orbit = [w]
    for _ in range(n):
        orbit.append(eval_G(p, orbit[-1]))
    orbit = np.array(orbit)
    inside = bool(np.all(box.contains(orbit, inflate)))
    return Certificate(p, intervals, margins, s_star, w, orbit, inside)


def _sample_u_cone(rng: np.random.Generator, n: int, ratio: float) -> np.ndarray:
    vw = rng.normal(size=(n, 2))
    vw /= np.linalg.norm(vw, axis=1, keepdims=True)
    # open cone: the boundary |u| = ratio * |(v, w)| is never drawn
    r = rng.uniform(-1.0, 1.0, size=n)
    r = r[np.abs(r) < 1.0]
    while len(r) < n:
        extra = rng.uniform(-1.0, 1.0, size=n - len(r))
        r = np.concatenate([r, extra[np.abs(extra) < 1.0]])
    u = r * ratio
    v = np.column_stack([u, vw])
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sample_points(rng: np.random.Generator, region: Box3, yMin: float, n: int) -> np.ndarray:
    out = np.empty((0, 3))
    while len(out) < n:
        pts = region.sample(rng, 2 * (n - len(out)) + 16)
        out = np.vstack([out, pts[np.abs(pts[:, 1]) >= yMin]])
    return out[:n]


def cone_invariance_sample(p: HenonParams, region: Box3, yMin: float, samples: int,
                           seed: int = 0, cone: ConeSpec = ConeSpec()) -> int:
    """Count (point, vector) pairs breaking invariance or yz-expansion of C^u."""
    if yMin < math.sqrt(5.0):
        raise ValueError("yMin must be at least sqrt(5)")
    rng = np.random.default_rng(seed)
    pts = _sample_points(rng, region, yMin, samples)
    vs = _sample_u_cone(rng, samples, cone.uRatio)
    img = np.einsum("nij,nj->ni", jacobian_G(p, pts), vs)
    invariant = cone.in_u(img)
    expands = np.hypot(img[:, 1], img[:, 2]) > np.hypot(vs[:, 1], vs[:, 2])
    return int(np.count_nonzero(~(invariant & expands)))


@dataclass
class SeparatrixTrace:
    line: list[np.ndarray]
    sheet: list[np.ndarray]
    t_extent: list[float]
    y_extent: list[float]
    z_extent: list[float]
    overflow_step: int | None = None


def separatrix_trace(p: HenonParams, steps: int, n_samples: int = 200) -> SeparatrixTrace:
    """Iterate fundamental segments of the unstable set of P+.

    ``line`` follows the invariant line {(p+, p+, p~+ + t) : t in [0, 1]}.
    ``sheet`` follows {(p+, p+ + s, p~+) : s in [0, 1]} inside the half-space
    y >= p+, whose image lies in the unstable set.  Extents are cumulative
    over all iterates, so they never decrease.
    """
    if not p.eta_is_zero:
        raise ValueError("separatrix_trace uses the closed-form seeds and needs eta = 0")
    fp = fixed_points_G(p)
    pp, ptp = fp.pPlus, fp.pTildePlus
    s = np.linspace(0.0, 1.0, n_samples)
    line = np.stack([np.full_like(s, pp), np.full_like(s, pp), ptp + s], axis=1)
    sheet = np.stack([np.full_like(s, pp), pp + s, np.full_like(s, ptp)], axis=1)
    tr = SeparatrixTrace([line], [sheet], [1.0], [], [])
    seen = np.vstack([line, sheet])
    tr.y_extent.append(float(np.ptp(seen[:, 1])))
    tr.z_extent.append(float(np.ptp(seen[:, 2])))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, steps + 1):
            line = eval_G(p, line)
            sheet = eval_G(p, sheet)
            if not (np.all(np.isfinite(line)) and np.all(np.isfinite(sheet))):
                tr.overflow_step = k
                break
            tr.line.append(line)
            tr.sheet.append(sheet)
            tr.t_extent.append(float(np.ptp(line[:, 2])))
            seen = np.vstack([seen[[np.argmin(seen[:, 1]), np.argmax(seen[:, 1]),
                                    np.argmin(seen[:, 2]), np.argmax(seen[:, 2])]],
                              line, sheet])
            tr.y_extent.append(float(np.ptp(seen[:, 1])))
            tr.z_extent.append(float(np.ptp(seen[:, 2])))
    return tr
