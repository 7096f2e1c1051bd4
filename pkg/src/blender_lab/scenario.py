"""Scenario files: INI text with a [scenario] header and a [params] section.

    [scenario]
    kind = cover
    model = models/canonical.model     # renormalisation kinds only
    seed = 7

    [params]
    xi = 1.181, 1.183, 1.185
    eta_pairs = 0 0; 0.01 0.01

Numbers accept the same forms as model files (decimal literals, simple
arithmetic, sqrt).  Lists are comma separated; pairs are separated by ';'.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .model import CycleModel, ModelFileError, load_model, parse_number

__all__ = [
    "KINDS",
    "REQUIRED",
    "Scenario",
    "ScenarioParseError",
    "ScenarioValidationError",
    "load_scenario",
    "parse_scenario",
]

KINDS = ("fixed-points", "cone-check", "cover", "certify", "tube-run", "strip-run",
         "validate", "sojourn", "renorm", "parabola", "angles")

REQUIRED: dict[str, tuple[str, ...]] = {
    "fixed-points": ("n_xi", "n_mu"),
    "cone-check": ("xi", "mu", "samples"),
    "cover": ("xi", "mu", "steps"),
    "certify": ("xi", "mu", "steps"),
    "tube-run": ("xi", "mu", "count", "max_steps"),
    "strip-run": ("xi", "mu", "c0", "c1", "max_steps"),
    "validate": ("xi",),
    "sojourn": ("xi", "max_n"),
    "renorm": ("xi", "mu", "max_n"),
    "parabola": ("xi", "mu", "max_n"),
    "angles": ("xi", "max_n", "K"),
}
NEEDS_MODEL = {"validate", "sojourn", "renorm", "parabola", "angles"}


class ScenarioParseError(ValueError):
    """The scenario text is not well formed (exit status 2)."""


class ScenarioValidationError(ValueError):
    """The scenario parses but is inconsistent or incomplete (exit status 3)."""


@dataclass
class Scenario:
    kind: str
    params: dict[str, str]
    seed: int = 0
    model_path: Path | None = None
    source_hash: str = ""
    base_dir: Path = field(default_factory=Path)

    # typed accessors; a bad value is a parse problem of the scenario text
    def has(self, key: str) -> bool:
        return key in self.params

    def num(self, key: str, default: float | None = None) -> float:
        if key not in self.params:
            if default is None:
                raise ScenarioValidationError(f"missing parameter {key!r}")
            return default
        try:
            return parse_number(self.params[key])
        except ModelFileError as exc:
            raise ScenarioParseError(f"{key}: {exc}") from exc

    def integer(self, key: str, default: int | None = None) -> int:
        v = self.num(key, None if default is None else float(default))
        if v != int(v):
            raise ScenarioValidationError(f"{key} must be an integer")
        return int(v)

    def nums(self, key: str, default: list[float] | None = None) -> list[float]:
        if key not in self.params:
            if default is None:
                raise ScenarioValidationError(f"missing parameter {key!r}")
            return list(default)
        raw = [p.strip() for p in self.params[key].split(",") if p.strip()]
        if not raw:
            raise ScenarioValidationError(f"{key} is an empty list")
        try:
            return [parse_number(p) for p in raw]
        except ModelFileError as exc:
            raise ScenarioParseError(f"{key}: {exc}") from exc

    def pairs(self, key: str, default: list[tuple[float, float]]) -> list[tuple[float, float]]:
        if key not in self.params:
            return list(default)
        out = []
        for chunk in self.params[key].split(";"):
            parts = chunk.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ScenarioParseError(f"{key}: expected pairs, got {chunk!r}")
            try:
                out.append((parse_number(parts[0]), parse_number(parts[1])))
            except ModelFileError as exc:
                raise ScenarioParseError(f"{key}: {exc}") from exc
        if not out:
            raise ScenarioValidationError(f"{key} is empty")
        return out

    def text(self, key: str, default: str) -> str:
        return self.params.get(key, default)

    def model(self) -> CycleModel:
        if self.model_path is None:
            raise ScenarioValidationError(f"kind {self.kind} needs a model file")
        try:
            return load_model(self.model_path)
        except (OSError, ModelFileError) as exc:
            raise ScenarioValidationError(f"model {self.model_path}: {exc}") from exc

    def hash_with_seed(self, seed: int) -> str:
        return hashlib.sha256(f"{self.source_hash}:{seed}".encode()).hexdigest()[:16]


def parse_scenario(text: str, base_dir: Path = Path(".")) -> Scenario:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioParseError(str(exc).splitlines()[0]) from exc
    if not cp.has_section("scenario"):
        raise ScenarioParseError("missing [scenario] section")
    head = dict(cp.items("scenario"))
    kind = head.get("kind", "").strip()
    if kind not in KINDS:
        raise ScenarioValidationError(f"unknown kind {kind!r}")
    params = dict(cp.items("params")) if cp.has_section("params") else {}
    try:
        seed = int(head.get("seed", "0"))
    except ValueError as exc:
        raise ScenarioParseError(f"seed must be an integer: {head.get('seed')!r}") from exc
    if seed < 0 or seed >= 2 ** 64:
        raise ScenarioValidationError("seed must fit in an unsigned 64-bit integer")
    model_path = None
    if "model" in head:
        model_path = (base_dir / head["model"].strip()).resolve()
    sc = Scenario(kind, params, seed, model_path,
                  hashlib.sha256(text.encode()).hexdigest(), base_dir)
    missing = [k for k in REQUIRED[kind] if k not in params]
    if missing:
        raise ScenarioValidationError(f"{kind} scenario misses: {', '.join(missing)}")
    if kind in NEEDS_MODEL and model_path is None:
        raise ScenarioValidationError(f"{kind} scenario needs 'model' in [scenario]")
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioParseError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_scenario(text, path.parent)
