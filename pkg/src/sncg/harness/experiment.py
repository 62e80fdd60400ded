"""Experiment configuration: YAML schema, CLI overrides and validation.

Schema (version 1)::

    name: demo                     # experiment name, used for the output folder
    output_dir: runs               # SNCG_OUTPUT_DIR overrides this
    workers: 1                     # thread pool size for the run matrix
    seeds: [0, 1, 2]               # or {start: 0, count: 10}
    algorithms: [sncg1, sncg2, sgd]
    problems:
      - id: quartic10              # optional; defaults to "<kind><dim>"
        kind: quartic              # quadratic | quartic | pca | file
        dim: 10
        x0: origin                 # origin | corner | [..] | {random: s, seed: k}
        params: {n_samples: 200, weight_spread: 0.1, box_radius: 1.2, seed: 0}
    settings:
      eps1: 0.2
      alpha: 0.5
      delta: 0.2
      mode: theoretical            # theoretical | practical | full
      grad_cap: null               # required in practical mode
      hess_cap: null
      replace: true
      max_iters: null
      budget_constant: 8.0
      verification: true

Precedence is CLI override > file > defaults; overrides use dotted keys,
e.g. ``settings.eps1=0.1`` or ``workers=4``.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..config import SncgConfig
from ..driver import ALGORITHMS
from ..estimator import BatchPolicy
from ..oracle import ContractError
from ..problems import PROBLEM_KINDS, make_problem

SCHEMA_VERSION = 1
OUTPUT_ENV = "SNCG_OUTPUT_DIR"

DEFAULTS: dict[str, Any] = {
    "schema": SCHEMA_VERSION,
    "name": "experiment",
    "output_dir": "runs",
    "workers": 1,
    "seeds": [0],
    "algorithms": ["sncg1"],
    "problems": [],
    "settings": {
        "eps1": 0.1,
        "alpha": 0.5,
        "delta": 0.1,
        "mode": "theoretical",
        "grad_cap": None,
        "hess_cap": None,
        "replace": True,
        "max_iters": None,
        "budget_constant": 8.0,
        "verification": True,
    },
}
_PROBLEM_KEYS = {"id", "kind", "dim", "x0", "params"}


class ConfigError(Exception):
    """Invalid configuration, reported as ``source:line: message``."""

    def __init__(self, message, source="<config>", line=None):
        self.source, self.line, self.message = source, line, message
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------- yaml + lines

def _construct(node, path, lines):
    """Build plain Python data from a YAML node, recording 1-based lines per dotted path."""
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for key_node, value_node in node.value:
            key = yaml.safe_load(yaml.serialize(key_node))
            sub = f"{path}.{key}" if path else str(key)
            lines.setdefault(sub, key_node.start_mark.line + 1)
            out[key] = _construct(value_node, sub, lines)
            lines[sub] = key_node.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(item, f"{path}[{i}]", lines) for i, item in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def parse_yaml(text: str, source: str = "<config>"):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", source, line)
    lines: dict[str, int] = {}
    if node is None:
        return {}, lines
    data = _construct(node, "", lines)
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", source, 1)
    return data, lines


def apply_overrides(data: dict, overrides, lines: dict) -> dict:
    """Apply ``dotted.key=value`` overrides; values are parsed as YAML scalars/lists."""
    data = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value", "<cli>")
        key, raw = item.split("=", 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            raise ConfigError(f"override {key}: cannot parse value {raw!r}", "<cli>")
        target = data
        parts = key.strip().split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"override {key}: {part} is not a mapping", "<cli>")
        target[parts[-1]] = value
        lines[key.strip()] = f"<cli {item}>"
    return data


def _merge(defaults, data):
    out = copy.deepcopy(defaults)
    for key, value in data.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


# ---------------------------------------------------------------- validation

@dataclass
class ProblemSpec:
    id: str
    kind: str
    dim: int | None
    x0: Any
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, "dim": self.dim, "x0": self.x0,
                "params": self.params}

    def build(self):
        params = dict(self.params)
        params["x0"] = self.x0
        if self.kind == "file":
            params.pop("x0")
        return make_problem(self.kind, self.dim, **params)


@dataclass
class Experiment:
    name: str
    output_dir: Path
    workers: int
    seeds: list
    algorithms: list
    problems: list
    settings: dict
    resolved: dict

    def sncg_config(self, constants) -> SncgConfig:
        s = self.settings
        policy = BatchPolicy(mode=s["mode"], grad_cap=s["grad_cap"], hess_cap=s["hess_cap"],
                             replace=bool(s["replace"]))
        return SncgConfig(eps1=float(s["eps1"]), constants=constants, alpha=float(s["alpha"]),
                          delta=float(s["delta"]), policy=policy,
                          max_iters_override=s["max_iters"],
                          budget_constant=float(s["budget_constant"]),
                          verification=bool(s["verification"]))


def _line_of(lines, path):
    while path:
        if path in lines:
            line = lines[path]
            return line
        path = path.rpartition(".")[0] if "." in path else path.rpartition("[")[0]
    return None


def validate(data: dict, lines: dict, source: str, base_dir: Path) -> Experiment:
    def fail(path, message):
        where = _line_of(lines, path)
        if isinstance(where, str):
            raise ConfigError(f"{path}: {message}", where)
        raise ConfigError(f"{path}: {message}", source, where)

    for key in data:
        if key not in DEFAULTS:
            fail(key, f"unknown key (expected one of {sorted(DEFAULTS)})")
    for key in data.get("settings", {}) or {}:
        if key not in DEFAULTS["settings"]:
            fail(f"settings.{key}", "unknown setting")
    cfg = _merge(DEFAULTS, data)
    if cfg["schema"] != SCHEMA_VERSION:
        fail("schema", f"unsupported schema version {cfg['schema']!r}")

    s = cfg["settings"]

    def number(key, lo, hi, lo_closed=False, hi_closed=False):
        value = s[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail(f"settings.{key}", f"must be a number, got {value!r}")
        ok_lo = value >= lo if lo_closed else value > lo
        ok_hi = value <= hi if hi_closed else value < hi
        if not (ok_lo and ok_hi):
            fail(f"settings.{key}", f"must lie in {'[' if lo_closed else '('}{lo}, {hi}"
                                    f"{']' if hi_closed else ')'}, got {value!r}")

    number("eps1", 0, 1)
    number("alpha", 0, 1, hi_closed=True)
    number("delta", 0, 1)
    number("budget_constant", 0, float("inf"))
    if s["mode"] not in ("theoretical", "practical", "full"):
        fail("settings.mode", f"unknown mode {s['mode']!r}")
    for key in ("grad_cap", "hess_cap", "max_iters"):
        value = s[key]
        if value is not None and (isinstance(value, bool) or not isinstance(value, int) or value < 1):
            fail(f"settings.{key}", f"must be a positive integer or null, got {value!r}")
    if s["mode"] == "practical" and (s["grad_cap"] is None or s["hess_cap"] is None):
        fail("settings.mode", "practical mode requires grad_cap and hess_cap")

    seeds = cfg["seeds"]
    if isinstance(seeds, dict):
        try:
            seeds = list(range(int(seeds.get("start", 0)),
                               int(seeds.get("start", 0)) + int(seeds["count"])))
        except (KeyError, TypeError, ValueError):
            fail("seeds", "mapping form needs integer 'start' and 'count'")
    if not isinstance(seeds, list) or not seeds:
        fail("seeds", "must be a non-empty list of integers")
    if not all(isinstance(k, int) and not isinstance(k, bool) and k >= 0 for k in seeds):
        fail("seeds", "seeds must be non-negative integers")
    if len(set(seeds)) != len(seeds):
        fail("seeds", "duplicate seeds")

    algorithms = cfg["algorithms"]
    if isinstance(algorithms, str):
        algorithms = [algorithms]
    if not isinstance(algorithms, list) or not algorithms:
        fail("algorithms", "must be a non-empty list")
    for i, name in enumerate(algorithms):
        if name not in ALGORITHMS:
            fail(f"algorithms[{i}]", f"unknown algorithm {name!r} (choose from {sorted(ALGORITHMS)})")

    workers = cfg["workers"]
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        fail("workers", "must be a positive integer")

    raw_problems = cfg["problems"]
    if not isinstance(raw_problems, list) or not raw_problems:
        fail("problems", "must be a non-empty list")
    problems = []
    for i, p in enumerate(raw_problems):
        path = f"problems[{i}]"
        if not isinstance(p, dict):
            fail(path, "each problem must be a mapping")
        for key in p:
            if key not in _PROBLEM_KEYS:
                fail(f"{path}.{key}", f"unknown problem key (expected {sorted(_PROBLEM_KEYS)})")
        kind = p.get("kind")
        if kind not in PROBLEM_KINDS:
            fail(f"{path}.kind", f"unknown kind {kind!r} (choose from {sorted(PROBLEM_KINDS)})")
        dim = p.get("dim")
        if kind != "file" and (isinstance(dim, bool) or not isinstance(dim, int) or dim < 1):
            fail(f"{path}.dim", "must be a positive integer")
        params = dict(p.get("params") or {})
        if kind == "file":
            if "path" not in params:
                fail(f"{path}.params", "file problems need params.path")
            params["path"] = str((base_dir / params["path"]).resolve())
        spec = ProblemSpec(id=str(p.get("id", f"{kind}{dim if dim else ''}")), kind=kind, dim=dim,
                           x0=p.get("x0"), params=params)
        try:
            spec.build()
        except (ContractError, TypeError, ValueError, OSError) as exc:
            fail(path, f"cannot build problem: {exc}")
        problems.append(spec)
    ids = [p.id for p in problems]
    if len(set(ids)) != len(ids):
        fail("problems", f"duplicate problem ids {ids}")

    output_dir = Path(os.environ.get(OUTPUT_ENV) or cfg["output_dir"])
    resolved = dict(cfg)
    resolved.update(seeds=seeds, algorithms=algorithms,
                    problems=[p.to_dict() for p in problems])
    resolved.pop("output_dir")
    return Experiment(name=str(cfg["name"]), output_dir=output_dir, workers=workers,
                      seeds=seeds, algorithms=algorithms, problems=problems,
                      settings=s, resolved=resolved)


def load_experiment(path, overrides=()) -> Experiment:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path))
    data, lines = parse_yaml(text, str(path))
    data = apply_overrides(data, overrides, lines)
    return validate(data, lines, str(path), path.parent)
