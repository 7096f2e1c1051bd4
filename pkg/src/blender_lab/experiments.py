"""One runner per scenario kind.  Each returns a ResultRecord."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .blender import (DELTA, CoveringFailure, DiscPreconditionError, certify_superposition,
                      cone_invariance_sample, covering_step, disc_L, in_between_margin)
from .foliation import angle_report, leaf_distance, parabola_limit, rescaled_leaf
from .henon import WINDOW, HenonParams, NewtonFailure, fixed_points_G
from .model import validate_model
from .renorm import convergence_report, delta_grid, find_sojourn
from .report import ResultRecord
from .scenario import Scenario
from .strips import (WIDTH_BOUND, FamilyDegenerate, StripGrown, random_seed_tubes, run_strip,
                     run_tube_until_tangency, vertical_strip)

__all__ = ["RUNNERS", "run_kind"]


def _pmap(fn, items, threads: int) -> list:
    """Order-stable map; rows come back in input order whatever the pool does."""
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _params(sc: Scenario) -> list[HenonParams]:
    xs, ms = sc.nums("xi"), sc.nums("mu")
    etas = sc.pairs("eta_pairs", [(0.0, 0.0)])
    return [HenonParams(x, m, e1, e2) for x in xs for m in ms for e1, e2 in etas]


def _window_grid(sc: Scenario) -> list[tuple[float, float]]:
    lo_x, hi_x = sc.nums("xi_range", list(WINDOW.xiRange))
    lo_m, hi_m = sc.nums("mu_range", list(WINDOW.muRange))
    nx, nm = sc.integer("n_xi"), sc.integer("n_mu")
    if nx < 1 or nm < 1:
        raise ValueError("grids must be nonempty")
    xs = np.linspace(lo_x, hi_x, nx + 2)[1:-1]
    ms = np.linspace(lo_m, hi_m, nm + 2)[1:-1]
    return [(float(a), float(b)) for a in xs for b in ms]


# ------------------------------------------------------------------ henon / blender kinds

def run_fixed_points(sc: Scenario, seed: int, threads: int) -> ResultRecord:
    e1, e2 = sc.num("eta1", 0.0), sc.num("eta2", 0.0)
    rows = []
    for xi, mu in _window_grid(sc):
        try:
            fp = fixed_points_G(HenonParams(xi, mu, e1, e2))
        except (ValueError, NewtonFailure) as exc:
            rows.append({"xi": xi, "mu": mu, "ok": False, "error": str(exc)})
            continue
        b = fp.window_bounds_hold()
        rows.append({"xi": xi, "mu": mu, "pMinus": fp.pMinus, "pTildeMinus": fp.pTildeMinus,
                     "pPlus": fp.pPlus, "pTildePlus": fp.pTildePlus, "ok": all(b.values()),
                     "error": ""})
    cols = ["xi", "mu", "pMinus", "pTildeMinus", "pPlus", "pTildePlus", "ok", "error"]
    return ResultRecord("fixed-points", "", cols, rows,
                        {"all bounds hold": all(r["ok"] for r in rows)})


def run_cone_check(sc: Scenario, seed: int, threads: int) -> ResultRecord:
    rows = []
    n = sc.integer("samples")
    ymin = sc.num("ymin", math.sqrt(5.0))
    for i, p in enumerate(_params(sc)):
        bad = cone_invariance_sample(p, DELTA, ymin, n, seed=seed + i)
        rows.append({"xi": p.xi, "mu": p.mu, "eta1": p.eta1, "eta2": p.eta2,
                     "samples": n, "violations": bad})
    return ResultRecord("cone-check", "", ["xi", "mu", "eta1", "eta2", "samples", "violations"],
                        rows, {"no violations": all(r["violations"] == 0 for r in rows)})


def _cover_one(args):
    p, steps = args
    row = {"xi": p.xi, "mu": p.mu, "eta1": p.eta1, "eta2": p.eta2, "steps_ok": 0,
           "min_margin": math.nan, "error": ""}
    try:
        fp = fixed_points_G(p)
        d = disc_L()
        margins = [in_between_margin(d, fp)]
        for _ in range(steps):
            d = covering_step(p, d, fp)
            if d is None:
                row["error"] = "no in-between branch"
                break
            row["steps_ok"] += 1
            margins.append(in_between_margin(d, fp))
        row["min_margin"] = float(min(margins))
    except (DiscPreconditionError, ValueError, NewtonFailure) as exc:
        row["error"] = str(exc).split("\n")[0]
    row["ok"] = row["steps_ok"] == steps
    return row


def run_cover(sc: Scenario, seed: int, threads: int) -> ResultRecord:
    steps = sc.integer("steps")
    rows = _pmap(_cover_one, [(p, steps) for p in _params(sc)], threads)
    cols = ["xi", "mu", "eta1", "eta2", "steps_ok", "min_margin", "ok", "error"]
    margins = [r["min_margin"] for r in rows if not math.isnan(r["min_margin"])]
    rec = ResultRecord("cover", "", cols, rows,
                       {f"{steps} covering steps everywhere": all(r["ok"] for r in rows)},
                       worst_margin=min(margins) if margins else None)
    # largest |eta| box on which every tested point passes
    etas = sorted({max(abs(r["eta1"]), abs(r["eta2"])) for r in rows})
    good = [e for e in etas if all(r["ok"] for r in rows
                                   if max(abs(r["eta1"]), abs(r["eta2"])) <= e)]
    rec.notes.append(f"largest passing |eta| level: {good[-1] if good else 'none'}")
    return rec


def run_certify(sc: Scenario, seed: int, threads: int) -> ResultRecord:
    steps = sc.integer("steps")
    max_ratio = sc.num("max_ratio", 0.9)
    rows, verdicts = [], {}
    for p in _params(sc):
        try:
            cert = certify_superposition(p, disc_L(), steps)
        except (DiscPreconditionError, CoveringFailure, ValueError) as exc:
            rows.append({"xi": p.xi, "mu": p.mu, "eta1": p.eta1, "eta2": p.eta2, "stage": -1,
                         "lo": math.nan, "hi": math.nan, "width": math.nan,
                         "margin": math.nan, "error": str(exc)})
            verdicts[f"certified at {p.xi},{p.mu}"] = False
            continue
        for i, ((a, b), m) in enumerate(zip(cert.intervals, cert.margins)):
            rows.append({"xi": p.xi, "mu": p.mu, "eta1": p.eta1, "eta2": p.eta2, "stage": i,
                         "lo": a, "hi": b, "width": b - a, "margin": m, "error": ""})
        key = f"{p.xi},{p.mu},{p.eta1},{p.eta2}"
        verdicts[f"contraction <= {max_ratio} at {key}"] = cert.contraction_ratio() <= max_ratio
        verdicts[f"witness orbit inside at {key}"] = cert.orbit_inside
    cols = ["xi", "mu", "eta1", "eta2", "stage", "lo", "hi", "width", "margin", "error"]
    series = {"widths": [(r["stage"], r["width"]) for r in rows if r["stage"] >= 0]}
    return ResultRecord("certify", "", cols, rows, verdicts, series)


def run_tube(sc: Scenario, seed: int, threads: int) -> ResultRecord:
    p = HenonParams(sc.num("xi"), sc.num("mu"), sc.num("eta1", 0.0), sc.num("eta2", 0.0))
    fp = fixed_points_G(p)
    count, max_steps = sc.integer("count"), sc.integer("max_steps")
    tubes = random_seed_tubes(fp, count, seed=seed)
    runs = _pmap(lambda t: run_tube_until_tangency(p, t, fp, max_steps), tubes, threads)
    rows = []
    ratios = [r for run in runs for r in run.ratios]
    lam = float(np.exp(np.mean(np.log(ratios)))) if ratios else math.nan
    for i, run in enumerate(runs):
        w0 = run.widths[0]
        bound = (math.ceil(math.log(WIDTH_BOUND / w0) / math.log(lam)) + 5
                 if lam > 1 else max_steps)
        rows.append({"tube": i, "w0": w0, "steps": len(run.trace), "final": run.final_tag,
                     "w_final": run.widths[-1], "bound": bound, "lambda_hat": run.lambda_hat,
                     "ok": run.terminated and run.final_tag in ("TubeTangency", "TubeFolding")
                     and len(run.trace) <= bound})
    cols = ["tube", "w0", "steps", "final", "w_final", "bound", "lambda_hat", "ok"]
    series = {"widths_tube0": list(enumerate(runs[0].widths))} if runs else {}
    return ResultRecord("tube-run", "", cols, rows,
                        {"all tubes end in tangency or folding within bound":
                         all(r["ok"] for r in rows), "lambda_hat > 1": lam > 1}, series,
                        notes=[f"pooled lambda_hat {lam!r}"])


def run_strip_kind(sc: Scenario, seed: int, threads: int) -> ResultRecord:
    p = HenonParams(sc.num("xi"), sc.num("mu"), sc.num("eta1", 0.0), sc.num("eta2", 0.0))
    fp = fixed_points_G(p)
    s = vertical_strip(sc.num("c0"), sc.num("c1"))
    rows, ok = [], True
    try:
        trace = run_strip(p, s, fp, sc.integer("max_steps"))
    except (RuntimeError, FamilyDegenerate, ValueError) as exc:
        trace, ok = [], False
        rows.append({"step": -1, "tag": "error", "ratio": math.nan, "width": math.nan,
                     "detail": str(exc)})
    w = s.width
    for i, out in enumerate(trace):
        if isinstance(out, StripGrown):
            w = out.newStrip.width
            rows.append({"step": i, "tag": out.tag, "ratio": out.ratio, "width": w,
                         "detail": out.branch})
        else:
            rows.append({"step": i, "tag": out.tag, "ratio": math.nan, "width": w,
                         "detail": f"{out.side} t*={out.t_star!r}"})
    grown = [r["ratio"] for r in rows if r["tag"] == "StripGrown"]
    verdicts = {"terminates transverse": ok and bool(trace) and trace[-1].tag == "StripTransverse",
                "growth ratios > 1": all(g > 1 for g in grown)}
    series = {"widths": [(r["step"], r["width"]) for r in rows if r["step"] >= 0]}
    return ResultRecord("strip-run", "", ["step", "tag", "ratio", "width", "detail"], rows,
                        verdicts, series)


# ------------------------------------------------------------------ model kinds

def run_validate(sc: Scenario, seed: int, threads: int) -> ResultRecord:
    rep = validate_model(sc.model(), sc.num("xi"))
    rows = [{"check": c.name, "value": c.value, "passed": c.passed} for c in rep.checks]
    return ResultRecord("validate", "", ["check", "value", "passed"], rows,
                        {"model valid": rep.passed})


def _sojourns(sc: Scenario, m):
    tgt = sc.num("target") if sc.has("target") else None
    return find_sojourn(m, sc.num("xi"), sc.integer("max_n"), nMin=sc.integer("n_min", 1),
                        target=tgt, constrained=sc.text("constrained", "true") != "false")


def run_sojourn(sc: Scenario, seed: int, threads: int) -> ResultRecord:
    m = sc.model()
    lst = _sojourns(sc, m)
    tol = sc.num("tol", math.inf)
    rows = [{"k": i, "m": s.m, "n": s.n, "error": s.error} for i, s in enumerate(lst)]
    best = lst[-1].error if lst else math.inf
    return ResultRecord("sojourn", "", ["k", "m", "n", "error"], rows,
                        {"best error within tol": best <= tol},
                        {"error": [(s.n, s.error) for s in lst]})


def run_renorm(sc: Scenario, seed: int, threads: int) -> ResultRecord:
    m = sc.model()
    lst = _sojourns(sc, m)
    grid = delta_grid(sc.integer("grid_n", 7))
    rows = convergence_report(m, sc.num("xi"), sc.num("mu"), lst, grid=grid,
                              direct_max_n=sc.integer("direct_max_n", 100), threads=threads)
    c0 = [r.supC0 for r in rows]
    tail = c0[2:]
    agree = [r.directAgreement for r in rows if not math.isnan(r.directAgreement)]
    tol0 = sc.num("final_tol", 1e-3)
    verdicts = {
        "at least 5 rows": len(rows) >= 5,
        "supC0 nonincreasing after row 2": all(b <= a for a, b in zip(tail, tail[1:])),
        f"final supC0 < {tol0}": bool(c0) and c0[-1] < tol0,
        "direct vs closed form < 1e-6": bool(agree) and max(agree) < 1e-6,
    }
    cols = ["k", "m", "n", "sojournError", "supC0", "supC1", "admissibleFraction",
            "directAgreement", "directPoints"]
    out = [{c: getattr(r, c) for c in cols} for r in rows]
    return ResultRecord("renorm", "", cols, out, verdicts,
                        {"supC0": [(r.k, r.supC0) for r in rows],
                         "supC1": [(r.k, r.supC1) for r in rows]})


def run_parabola(sc: Scenario, seed: int, threads: int) -> ResultRecord:
    m = sc.model()
    xi, mu = sc.num("xi"), sc.num("mu")
    s0, a0 = sc.num("s0", 0.0), sc.num("a0", 0.0)
    lst = _sojourns(sc, m)
    lim = parabola_limit(m, xi, mu, s0, a0)
    leaves = _pmap(lambda s: rescaled_leaf(m, s, mu, s0, a0, xi=xi), lst, threads)
    rows = [{"k": i, "m": s.m, "n": s.n, "distance": leaf_distance(lf, lim)}
            for i, (s, lf) in enumerate(zip(lst, leaves))]
    d = [r["distance"] for r in rows]
    tol = sc.num("final_tol", 1e-2)
    verdicts = {"distance strictly decreasing": all(b < a for a, b in zip(d, d[1:])),
                f"final distance < {tol}": bool(d) and d[-1] < tol}
    series = {"distance": [(r["k"], r["distance"]) for r in rows]}
    if leaves:
        step = max(1, len(leaves[-1].x) // 200)
        series["curve_last"] = list(zip(leaves[-1].x[::step], leaves[-1].y[::step]))
    return ResultRecord("parabola", "", ["k", "m", "n", "distance"], rows, verdicts, series,
                        notes=[f"limit alpha={lim.alpha!r} beta={lim.beta!r}"])


def run_angles(sc: Scenario, seed: int, threads: int) -> ResultRecord:
    m = sc.model()
    rep = angle_report(m, _sojourns(sc, m), sc.num("K"))
    cols = ["k", "m", "n", "expansion", "angleToFu", "log_angle", "diagRatio", "log_scale"]
    rows = [{c: getattr(r, c) for c in cols} for r in rep.rows]
    verdicts = {f"expansion >= C K (C={rep.C!r})": rep.expansion_ok,
                "angle slope within 10% of 1": rep.slope_ok,
                "diagRatio -> 0 monotonically": rep.diag_ok}
    return ResultRecord("angles", "", cols, rows, verdicts,
                        {"log_angle": [(r.log_scale, r.log_angle) for r in rep.rows]},
                        notes=[f"slope {rep.slope!r}",
                               f"slope against lambda_P^m sigma_Q^-n {rep.slope_inv_q!r}"])


RUNNERS = {
    "fixed-points": run_fixed_points,
    "cone-check": run_cone_check,
    "cover": run_cover,
    "certify": run_certify,
    "tube-run": run_tube,
    "strip-run": run_strip_kind,
    "validate": run_validate,
    "sojourn": run_sojourn,
    "renorm": run_renorm,
    "parabola": run_parabola,
    "angles": run_angles,
}


def run_kind(sc: Scenario, seed: int | None = None, threads: int = 1) -> ResultRecord:
    seed = sc.seed if seed is None else seed
    rec = RUNNERS[sc.kind](sc, seed, threads)
    rec.scenario_hash = sc.hash_with_seed(seed)
    return rec
