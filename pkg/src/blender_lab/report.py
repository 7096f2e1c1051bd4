"""Result records, their CSV/JSON persistence, and the plain-text summary."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

__all__ = [
    "SCHEMA_VERSION",
    "ResultRecord",
    "format_value",
    "write_record",
    "emit_report",
]

SCHEMA_VERSION = 1


def format_value(v) -> str:
    """Round-trip text for CSV cells: repr for floats, str otherwise."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return format_value(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


@dataclass
class ResultRecord:
    kind: str
    scenario_hash: str
    columns: list[str]
    rows: list[dict]
    verdicts: dict[str, bool]
    series: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    worst_margin: float | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([format_value(r.get(c, "")) for c in self.columns])
        return buf.getvalue()

    def json_text(self) -> str:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "scenario_hash": self.scenario_hash,
            "verdicts": self.verdicts,
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "notes": self.notes,
            "rows": self.rows,
        }
        return json.dumps(_jsonable(doc), sort_keys=True, indent=1) + "\n"


def _write(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def write_record(rec: ResultRecord, out_dir) -> list[Path]:
    """<kind>.csv and <kind>.json (deterministic) plus <kind>.meta.json (timestamp)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = rec.kind
    paths = [out / f"{stem}.csv", out / f"{stem}.json"]
    _write(paths[0], rec.csv_text())
    _write(paths[1], rec.json_text())
    meta = {"timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "scenario_hash": rec.scenario_hash}
    _write(out / f"{stem}.meta.json", json.dumps(meta, sort_keys=True) + "\n")
    return paths


def _series_text(pts) -> str:
    return "".join(f"{format_value(float(x))} {format_value(float(y))}\n" for x, y in pts)


def emit_report(records: list[ResultRecord], out_dir, figures: bool = False) -> list[Path]:
    """summary.txt with pass/fail counts and worst margins, and one .dat file per series.

    With ``figures`` each series is also drawn to a PNG (needs matplotlib).
    """
    if not records:
        raise ValueError("emit_report needs at least one record")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    lines = []
    for rec in records:
        npass = sum(rec.verdicts.values())
        lines.append(f"{rec.kind}: {'PASS' if rec.passed else 'FAIL'} "
                     f"({npass}/{len(rec.verdicts)} verdicts, {len(rec.rows)} rows)")
        for name, ok in sorted(rec.verdicts.items()):
            lines.append(f"  {'ok  ' if ok else 'FAIL'} {name}")
        if rec.worst_margin is not None:
            lines.append(f"  worst margin {format_value(float(rec.worst_margin))}")
        lines += [f"  note: {n}" for n in rec.notes]
        for name, pts in sorted(rec.series.items()):
            p = out / f"{rec.kind}_{name}.dat"
            _write(p, _series_text(pts))
            written.append(p)
    p = out / "summary.txt"
    _write(p, "\n".join(lines) + "\n")
    written.insert(0, p)
    if figures:
        written += _figures(records, out)
    return written


def _figures(records: list[ResultRecord], out: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for rec in records:
        for name, pts in sorted(rec.series.items()):
            if not pts:
                continue
            xs, ys = zip(*pts)
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.plot(xs, ys, ".-", lw=0.8, ms=3)
            if all(y > 0 for y in ys) and max(ys) / min(ys) > 1e3:
                ax.set_yscale("log")
            ax.set_title(f"{rec.kind}: {name}")
            p = out / f"{rec.kind}_{name}.png"
            fig.tight_layout()
            fig.savefig(p, dpi=120)
            plt.close(fig)
            paths.append(p)
    return paths
