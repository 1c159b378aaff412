"""Plain-text experiment specs (INI-style sections of key = value lines).

    [experiment]
    kind = minimize
    label = planar
    seed = 0
    output = runs/planar

    [grid]
    n = 1
    h = 1/128

    [data]
    profile = U

Numbers may be written as fractions; comma-separated values become lists.
All sections other than [experiment] are merged into one parameter dict.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import ConfigError

KIND_REQUIRED: dict[str, tuple] = {
    "barrier-audit": (),
    "hodograph-roundtrip": (),
    "linearized-extract": ("c1",),
    "minimize": ("n", "h", "profile"),
    "flatness-decay": ("n", "h", "profile"),
    "improvement-fit": ("n", "h"),
}


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [parse_value(p) for p in text.split(",") if p.strip()]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        pass
    try:
        return float(text)
    except ValueError:
        return text


@dataclass
class ExperimentSpec:
    kind: str
    label: str
    seed: int
    output: Path
    sections: dict = field(default_factory=dict)

    def params(self) -> dict:
        out = {"label": self.label, "seed": self.seed}
        for sec in self.sections.values():
            out.update(sec)
        return out

    def echo(self) -> dict:
        head = {"kind": self.kind, "label": self.label, "seed": self.seed, "output": str(self.output)}
        return {"experiment": head, **self.sections}


def _is_tolerance(key: str) -> bool:
    return key == "tol" or key.endswith("_tol") or key.startswith("tol_")


def validate(spec: ExperimentSpec) -> ExperimentSpec:
    if spec.kind not in KIND_REQUIRED:
        raise ConfigError(f"unknown kind {spec.kind!r}; expected one of {sorted(KIND_REQUIRED)}")
    params = spec.params()
    missing = [k for k in KIND_REQUIRED[spec.kind] if k not in params]
    if missing:
        raise ConfigError(f"kind {spec.kind} needs {', '.join(missing)}")
    for name, sec in spec.sections.items():
        for k, v in sec.items():
            if name == "tolerances" or _is_tolerance(k):
                vals = v if isinstance(v, list) else [v]
                if not all(isinstance(x, (int, float)) and x > 0 for x in vals):
                    raise ConfigError(f"tolerance {name}.{k} must be positive, got {v!r}")
    if "n" in params and params["n"] not in (1, 2):
        raise ConfigError("grid.n must be 1 or 2")
    if "h" in params and not (isinstance(params["h"], float) and 0 < params["h"] <= 0.25):
        raise ConfigError("grid.h must be a number in (0, 1/4]")
    if spec.kind == "improvement-fit" and params.get("n") != 2:
        raise ConfigError("improvement-fit needs n = 2 (it fits the curvature M)")
    return spec


def parse_spec(text: str, base: Path | None = None) -> ExperimentSpec:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (C1 vs c1)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable spec: {exc}") from exc
    if not cp.has_section("experiment"):
        raise ConfigError("spec needs an [experiment] section")
    exp = cp["experiment"]
    if "kind" not in exp:
        raise ConfigError("[experiment] needs a kind")
    try:
        seed = int(exp.get("seed", "0"))
    except ValueError as exc:
        raise ConfigError("seed must be an integer") from exc
    label = exp.get("label", exp["kind"])
    out = Path(exp.get("output", f"runs/{label}"))
    if base is not None and not out.is_absolute():
        out = base / out
    sections = {name: {k: parse_value(v) for k, v in cp[name].items()}
                for name in cp.sections() if name != "experiment"}
    return validate(ExperimentSpec(exp["kind"].strip(), label, seed, out, sections))


def load_spec(path) -> ExperimentSpec:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"spec file {p} does not exist")
    return parse_spec(p.read_text(), base=None)
