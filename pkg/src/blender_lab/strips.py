"""u-strips, uu-tubes and folding manifolds under G.

A family of uu-discs is stored as one array of shape (M, N, 3): M discs
indexed by t, each a graph over a common uniform y-grid of N samples.
Strips use t in [0, 1] inclusive; tubes use t = i/M and close up (D_0 = D_1).

Image branches are split by the sign of the source y, which G records as
the image x-coordinate.  Branch "A" (source y < 0) contains P-, branch "B"
(source y > 0) contains P+.  This stands in for the Markov sub-rectangles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from .blender import DELTA, Box3, ConeSpec, UUDisc
from .henon import FixedPointPair, HenonParams, eval_G

__all__ = [
    "DiscFamily",
    "UStrip",
    "UUTube",
    "FoldingSurface",
    "WidthBounds",
    "StripTransverse",
    "StripGrown",
    "TubeTangency",
    "TubeFolding",
    "TubeGrown",
    "FamilyDegenerate",
    "TubeRun",
    "vertical_strip",
    "ellipse_tube",
    "strip_width",
    "tube_width",
    "gap_functions",
    "iterate_family",
    "classify_strip_step",
    "run_strip",
    "classify_tube_step",
    "run_tube_until_tangency",
    "random_seed_tubes",
]

WIDTH_BOUND = DELTA.z_extent  # 62
TANGENCY_TOL = 1e-6
TANGENCY_RADIUS = 0.02
TUBE_SAMPLES = 256
DISC_SAMPLES = 400
SHOOTING_STARTS = 64


class FamilyDegenerate(RuntimeError):
    """The image of a disc family has no usable in-between branch."""


@dataclass
class DiscFamily:
    pts: np.ndarray  # (M, N, 3)
    t: np.ndarray  # (M,)

    def __post_init__(self) -> None:
        self.pts = np.asarray(self.pts, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        if self.pts.ndim != 3 or self.pts.shape[2] != 3 or len(self.t) != len(self.pts):
            raise ValueError("family samples must have shape (M, N, 3) with M t-values")

    @property
    def ys(self) -> np.ndarray:
        return self.pts[0, :, 1]

    def disc(self, i: int) -> UUDisc:
        return UUDisc(self.pts[i])

    def z_at(self, y: float) -> np.ndarray:
        """z of every disc at height y (linear interpolation on the shared grid)."""
        return np.array([np.interp(y, self.ys, self.pts[i, :, 2]) for i in range(len(self.t))])

    def at(self, y: float) -> np.ndarray:
        ys = self.ys
        j = int(np.clip(np.searchsorted(ys, y) - 1, 0, len(ys) - 2))
        w = (y - ys[j]) / (ys[j + 1] - ys[j])
        return (1.0 - w) * self.pts[:, j, :] + w * self.pts[:, j + 1, :]

    def min_separation(self, closed: bool) -> float:
        d = np.diff(self.pts, axis=0)
        if closed:
            d = np.concatenate([d, (self.pts[:1] - self.pts[-1:])], axis=0)
        return float(np.min(np.max(np.hypot(d[..., 0], d[..., 2]), axis=1)))


@dataclass
class WidthBounds:
    upper: float
    lower: float

    @property
    def value(self) -> float:
        return self.upper


@dataclass
class UStrip:
    family: DiscFamily
    disjoint: bool = True
    width: float = math.nan
    bounds: WidthBounds | None = None

    def __post_init__(self) -> None:
        self.disjoint = self.family.min_separation(closed=False) > 1e-12
        if math.isnan(self.width):
            self.bounds = strip_width(self)
            self.width = self.bounds.upper


@dataclass
class UUTube:
    family: DiscFamily
    width: float = math.nan

    def __post_init__(self) -> None:
        if math.isnan(self.width):
            self.width = tube_width(self)

    def closes(self, tol: float = 1e-9) -> bool:
        """D_0 = D_1: the sample at t = 1 would repeat t = 0 by construction."""
        t = self.family.t
        return bool(abs(t[0]) < tol and abs(1.0 - (t[-1] + (t[1] - t[0]))) < tol)


@dataclass
class FoldingSurface:
    family: DiscFamily
    side: str
    t_range: tuple[float, float]


@dataclass
class StripTransverse:
    side: str
    t_star: float
    tag: str = "StripTransverse"


@dataclass
class StripGrown:
    newStrip: UStrip
    ratio: float
    branch: str
    tag: str = "StripGrown"


@dataclass
class TubeTangency:
    side: str
    t_star: float
    pre_step: bool
    tag: str = "TubeTangency"


@dataclass
class TubeFolding:
    surface: FoldingSurface
    tag: str = "TubeFolding"


@dataclass
class TubeGrown:
    newTube: UUTube
    ratio: float
    branch: str
    tag: str = "TubeGrown"


# ---------------------------------------------------------------- builders

def vertical_strip(c0: float = 0.0, c1: float = 1.0, x: float = 0.0, half: float = 4.0,
                   m: int = 65, n: int = DISC_SAMPLES) -> UStrip:
    """{(x, y, c) : |y| <= half, c in [c0, c1]}."""
    t = np.linspace(0.0, 1.0, m)
    ys = np.linspace(-half, half, n)
    pts = np.empty((m, n, 3))
    pts[..., 0] = x
    pts[..., 1] = ys[None, :]
    pts[..., 2] = (c0 + (c1 - c0) * t)[:, None]
    return UStrip(DiscFamily(pts, t))


def ellipse_tube(zc: float = 5.0, rz: float = 3.0, rx: float = 0.1, phase: float = 0.0,
                 slope: float = 0.0, half: float = 4.0, m: int = TUBE_SAMPLES,
                 n: int = DISC_SAMPLES) -> UUTube:
    """D_t = {(rx sin(2 pi t + phase), y, zc + rz cos(2 pi t) + slope y)}."""
    t = np.arange(m) / m
    ys = np.linspace(-half, half, n)
    pts = np.empty((m, n, 3))
    pts[..., 0] = (rx * np.sin(2 * np.pi * t + phase))[:, None]
    pts[..., 1] = ys[None, :]
    pts[..., 2] = (zc + rz * np.cos(2 * np.pi * t))[:, None] + slope * ys[None, :]
    return UUTube(DiscFamily(pts, t))


# ---------------------------------------------------------------- widths

def _central_length(fam: DiscFamily, y: float, cone_ratio: float) -> float:
    """Length of the curve t -> D_t(y); inf if a chord leaves the cu-cone."""
    pts = fam.at(y)
    d = np.diff(pts, axis=0)
    # center-unstable cone: sqrt(u^2 + v^2) <= ratio * |w|
    if np.any(np.hypot(d[:, 0], d[:, 1]) > cone_ratio * np.abs(d[:, 2]) + 1e-15):
        return math.inf
    return float(np.sum(np.linalg.norm(d, axis=1)))


def strip_width(s: UStrip, cu_ratio: float = 2.0, starts: int = SHOOTING_STARTS) -> WidthBounds:
    """Central width by shooting from D_0, plus the straight-chord lower bound.

    Central curves are the polylines t -> D_t(y) at fixed height y; their
    chords must lie in the center-unstable cone sqrt(u^2 + v^2) <= 2|w|,
    the complement of the strong-unstable cone.  The best of 64 start heights
    is refined by golden-section search.  The lower bound is the distance
    between D_0 and D_1, which no joining curve can beat.
    """
    fam = s.family
    if np.max(np.abs(fam.pts[0] - fam.pts[-1])) < 1e-12:
        raise ValueError("degenerate strip: D_0 = D_1")
    ys = fam.ys
    grid = np.linspace(ys[0], ys[-1], starts)
    lengths = np.array([_central_length(fam, y, cu_ratio) for y in grid])
    i = int(np.argmin(lengths))
    best = float(lengths[i])
    if math.isfinite(best) and 0 < i < starts - 1:
        bracket = (grid[i - 1], grid[i], grid[i + 1])
        if lengths[i - 1] > best and lengths[i + 1] > best:
            res = minimize_scalar(lambda y: _central_length(fam, y, cu_ratio),
                                  bracket=bracket, method="golden", options={"xtol": 1e-10})
            if ys[0] <= res.x <= ys[-1]:
                best = min(best, float(res.fun))
    lower = float(cKDTree(fam.pts[-1]).query(fam.pts[0])[0].min())
    return WidthBounds(best, lower)


def tube_width(t: UUTube) -> float:
    """Width of the widest strip inside the tube.

    A strip in Delta_T runs between two discs of the tube; at each height y
    its central extent is at most the z-diameter of the tube's cross-section,
    and full discs are limited by the narrowest height.  So the width is the
    minimum over y of (max_t z - min_t z).
    """
    z = t.family.pts[..., 2]
    return float(np.min(np.max(z, axis=0) - np.min(z, axis=0)))


# ---------------------------------------------------------------- iteration

def gap_functions(fam: DiscFamily, fp: FixedPointPair) -> dict[str, np.ndarray]:
    """Crossing data of every disc at the heights of P- and P+.

    h_minus = z(p-) - p~-  (>= 0: on or across W^s_loc(P-))
    h_plus  = p~+ - z(p+)  (>= 0: on or across W^s_loc(P+))
    margin  = in-between margin of each disc (positive iff in-between)
    """
    ym, zm = fp.PMinus[1], fp.PMinus[2]
    yp, zp = fp.PPlus[1], fp.PPlus[2]
    cm = fam.at(ym)
    cp = fam.at(yp)
    inside = DELTA.contains(cm) & DELTA.contains(cp)
    h_minus = cm[:, 2] - zm
    h_plus = zp - cp[:, 2]
    margin = np.minimum.reduce([cm[:, 2] - zp, zm - cm[:, 2], cp[:, 2] - zp, zm - cp[:, 2]])
    margin = np.where(inside, margin, -np.inf)
    return {"h_minus": h_minus, "h_plus": h_plus, "margin": margin}


def iterate_family(p: HenonParams, fam: DiscFamily, side: str, box: Box3 = DELTA,
                   cone: ConeSpec = ConeSpec(), n_out: int | None = None,
                   span: tuple[float, float] | None = None) -> DiscFamily | None:
    """Image of every disc restricted to one branch, on a shared y-grid.

    side "A" keeps source y < 0, side "B" keeps source y > 0.  Each image is
    cut to its longest y-monotone run of strong-unstable chords and resampled
    on a uniform grid over the common y-range (clipped to the box).  Returns
    None when the common range does not contain ``span``.
    """
    n_out = n_out or fam.pts.shape[1]
    img = eval_G(p, fam.pts)
    sgn = -1.0 if side == "A" else 1.0
    runs = []
    lo, hi = box.lo[1], box.hi[1]
    for i in range(len(fam.t)):
        src_y = fam.pts[i, :, 1]
        im = img[i]
        d = np.diff(im, axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.hypot(d[:, 0], d[:, 2]) / np.abs(d[:, 1])
        # y' = mu + y^2 + ... grows with |y|, so it runs the same way as sgn * y
        ok = (np.sign(src_y[:-1]) == sgn) & (np.sign(src_y[1:]) == sgn)
        ok &= (ratio < cone.uuRatio) & (np.sign(d[:, 1]) == sgn)
        flags = np.concatenate([[0], ok.astype(np.int8), [0]])
        edges = np.flatnonzero(np.diff(flags))
        if len(edges) == 0:
            return None
        lens = edges[1::2] - edges[::2]
        k = int(np.argmax(lens))
        a, b = int(edges[2 * k]), int(edges[2 * k + 1])
        seg = im[a:b + 1]
        if seg[0, 1] > seg[-1, 1]:
            seg = seg[::-1]
        runs.append(seg)
        lo = max(lo, seg[0, 1])
        hi = min(hi, seg[-1, 1])
    if not hi > lo:
        return None
    if span is not None and not (lo <= span[0] and hi >= span[1]):
        return None
    ys = np.linspace(lo, hi, n_out)
    out = np.empty((len(runs), n_out, 3))
    for i, seg in enumerate(runs):
        out[i, :, 0] = np.interp(ys, seg[:, 1], seg[:, 0])
        out[i, :, 1] = ys
        out[i, :, 2] = np.interp(ys, seg[:, 1], seg[:, 2])
    return DiscFamily(out, fam.t.copy())


def _span(fp: FixedPointPair) -> tuple[float, float]:
    return (fp.PMinus[1], fp.PPlus[1])


def _branches(p: HenonParams, fam: DiscFamily, fp: FixedPointPair):
    out = {}
    for side in ("A", "B"):
        img = iterate_family(p, fam, side, span=_span(fp))
        if img is not None:
            out[side] = (img, gap_functions(img, fp))
    return out


def _has_sign_change(h: np.ndarray, tol: float = 0.0) -> bool:
    return bool(np.any(h > tol) and np.any(h < -tol))


def _assert_width(w: float, what: str) -> None:
    if w > WIDTH_BOUND + 1e-9:
        raise AssertionError(f"{what} width {w} exceeds the bound {WIDTH_BOUND}")


def classify_strip_step(p: HenonParams, s: UStrip, fp: FixedPointPair):
    g0 = gap_functions(s.family, fp)
    if not np.all(g0["margin"] > 0):
        raise ValueError("classify_strip_step needs an in-between strip")
    _assert_width(s.width, "strip")
    branches = _branches(p, s.family, fp)
    if not branches:
        raise FamilyDegenerate("no branch of the image spans the fixed-point heights")
    for side, (img, g) in sorted(branches.items()):
        for key, anchor in (("h_minus", "P-"), ("h_plus", "P+")):
            h = g[key]
            if _has_sign_change(h):
                i = int(np.argmin(np.abs(h)))
                return StripTransverse(anchor, float(s.family.t[i]))
    best = None
    for side, (img, g) in sorted(branches.items()):
        if np.all(g["margin"] > 0):
            m = float(np.min(g["margin"]))
            if best is None or m > best[0]:
                best = (m, side, img)
    if best is None:
        raise FamilyDegenerate("no branch of the image strip is in-between")
    new = UStrip(best[2])
    _assert_width(new.width, "strip")
    return StripGrown(new, new.width / s.width, best[1])


def run_strip(p: HenonParams, s: UStrip, fp: FixedPointPair, max_steps: int = 40) -> list:
    trace = []
    for _ in range(max_steps):
        out = classify_strip_step(p, s, fp)
        trace.append(out)
        if not isinstance(out, StripGrown):
            return trace
        s = out.newStrip
    raise RuntimeError(f"strip still growing after {max_steps} steps")


def _tangency(fam: DiscFamily, g: dict[str, np.ndarray]) -> TubeTangency | None:
    t = fam.t
    for key, anchor in (("h_minus", "P-"), ("h_plus", "P+")):
        h = g[key]
        i = int(np.argmax(h))
        if abs(h[i]) >= TANGENCY_TOL:
            continue
        # periodic neighbourhood of radius 0.02 in t
        dist = np.abs((t - t[i] + 0.5) % 1.0 - 0.5)
        near = dist <= TANGENCY_RADIUS
        if not np.any(h[near] > TANGENCY_TOL):
            return TubeTangency(anchor, float(t[i]), False)
    return None


def _zero_crossing(t0: float, t1: float, h0: float, h1: float) -> float:
    return t0 + (t1 - t0) * h0 / (h0 - h1)


def _folding(fam: DiscFamily, g: dict[str, np.ndarray]) -> FoldingSurface | None:
    """Longest in-between arc whose two ends cross the same stable segment."""
    m = len(fam.t)
    t = fam.t
    good = g["margin"] > 0
    if np.all(good) or not np.any(good):
        return None
    best = None
    # rotate so the loop starts on a bad sample, then scan good arcs
    start = int(np.flatnonzero(~good)[0])
    idx = np.roll(np.arange(m), -start)
    k = 0
    while k < m:
        if not good[idx[k]]:
            k += 1
            continue
        a = k
        while k < m and good[idx[k]]:
            k += 1
        first, last = idx[a], idx[k - 1]
        before, after = idx[a - 1], idx[k % m]
        for key, anchor in (("h_minus", "P-"), ("h_plus", "P+")):
            h = g[key]
            if h[before] >= 0 and h[after] >= 0:
                length = k - a
                if best is None or length > best[0]:
                    best = (length, anchor, [idx[j] for j in range(a, k)], before, first,
                            last, after, key)
    if best is None:
        return None
    _, anchor, members, before, first, last, after, key = best
    h = g[key]
    period = 1.0
    tb = t[before] if t[before] < t[first] else t[before] - period
    ta = t[after] if t[after] > t[last] else t[after] + period
    t1 = _zero_crossing(tb, t[first], h[before], h[first])
    t2 = _zero_crossing(t[last], ta, h[last], h[after])
    sub = DiscFamily(fam.pts[members], fam.t[members])
    return FoldingSurface(sub, anchor, (float(t1), float(t2)))


def classify_tube_step(p: HenonParams, tube: UUTube, fp: FixedPointPair):
    g0 = gap_functions(tube.family, fp)
    tang = _tangency(tube.family, g0)
    if tang is not None:
        return TubeTangency(tang.side, tang.t_star, True)
    if not np.all(g0["margin"] > 0):
        raise ValueError("classify_tube_step needs an in-between tube")
    _assert_width(tube.width, "tube")
    branches = _branches(p, tube.family, fp)
    if not branches:
        raise FamilyDegenerate("no branch of the image tube spans the fixed-point heights")
    grown = []
    for side, (img, g) in sorted(branches.items()):
        if np.all(g["margin"] > 0):
            grown.append((float(np.min(g["margin"])), side, img))
    if grown:
        _, side, img = max(grown, key=lambda c: c[0])
        new = UUTube(img)
        _assert_width(new.width, "tube")
        ratio = new.width / tube.width
        if not ratio > 1.0:
            raise AssertionError(f"grown tube did not widen (ratio {ratio})")
        return TubeGrown(new, ratio, side)
    # the branch in-between for the most parameters plays the role of A
    order = sorted(branches.items(), key=lambda kv: -int(np.count_nonzero(kv[1][1]["margin"] > 0)))
    for side, (img, g) in order:
        tang = _tangency(img, g)
        if tang is not None:
            return tang
    for side, (img, g) in order:
        fold = _folding(img, g)
        if fold is not None:
            return TubeFolding(fold)
    raise FamilyDegenerate("image tube is neither grown, tangent nor folding")


@dataclass
class TubeRun:
    trace: list
    widths: list[float]
    terminated: bool
    ratios: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.ratios = [o.ratio for o in self.trace if isinstance(o, TubeGrown)]

    @property
    def lambda_hat(self) -> float:
        """Geometric mean of the grown-step ratios (nan without growth)."""
        if not self.ratios:
            return math.nan
        return float(np.exp(np.mean(np.log(self.ratios))))

    @property
    def final_tag(self) -> str:
        return self.trace[-1].tag if self.trace else "none"


def run_tube_until_tangency(p: HenonParams, tube: UUTube, fp: FixedPointPair,
                            max_steps: int = 40) -> TubeRun:
    trace = []
    widths = [tube.width]
    for _ in range(max_steps):
        out = classify_tube_step(p, tube, fp)
        trace.append(out)
        if not isinstance(out, TubeGrown):
            return TubeRun(trace, widths, True)
        tube = out.newTube
        if not tube.width > widths[-1]:
            raise AssertionError("widths in the grown prefix must increase strictly")
        widths.append(tube.width)
    return TubeRun(trace, widths, False)


def random_seed_tubes(fp: FixedPointPair, count: int, seed: int = 0,
                      m: int = TUBE_SAMPLES, n: int = DISC_SAMPLES) -> list[UUTube]:
    """Elliptic tubes with random center, radii, phase and tilt, all in-between."""
    rng = np.random.default_rng(seed)
    lo, hi = fp.PPlus[2], fp.PMinus[2]
    tubes = []
    while len(tubes) < count:
        rz = rng.uniform(0.5, 4.0)
        slope = rng.uniform(-0.2, 0.2)
        pad = rz + 4.0 * abs(slope) + 1.0
        zc = rng.uniform(lo + pad, hi - pad)
        tube = ellipse_tube(zc, rz, rx=rng.uniform(0.05, 0.5), phase=rng.uniform(0, 2 * np.pi),
                            slope=slope, m=m, n=n)
        if np.all(gap_functions(tube.family, fp)["margin"] > 0):
            tubes.append(tube)
    return tubes
