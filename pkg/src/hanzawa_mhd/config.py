"""Run configuration: YAML ingestion with source positions and schema validation.

Schema (all sections optional)::

    surface:   {kind, params, grid: {nu, nv}, rho0, center, fd_step}
    hanzawa:   {delta0, newton_tol, newton_max_iter}
    fluid:     {nu_plus, nu_minus, sigma, kappa}
    verify:    {suites, seeds, draws, n_points, tolerances: {suite: tol}}
    output:    {report, dir}
    evolution: {box: {lo, hi, n}, dt, T, T0, sigma, cg_tol, max_iter, q, snapshots,
                velocity: {name, amp}, magnetic: {name, amp},
                height: {kind: zero | const | random, value, sup, seed},
                surface: {...}, require_contraction}

A file whose top level has ``kind`` is read as a bare surface section.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigParseError(Exception):
    def __init__(self, msg: str, path: str = "", line: int | None = None, col: int | None = None):
        where = f"{path}:{line}:{col}: " if line is not None else (f"{path}: " if path else "")
        super().__init__(where + msg)
        self.line, self.col = line, col


NUM = (int, float)
SCHEMA = {
    "surface": {"kind": str, "params": dict, "grid": {"nu": int, "nv": int}, "rho0": NUM,
                "center": list, "fd_step": NUM},
    "hanzawa": {"delta0": NUM, "newton_tol": NUM, "newton_max_iter": int},
    "fluid": {"nu_plus": NUM, "nu_minus": NUM, "sigma": NUM, "kappa": NUM},
    "verify": {"suites": list, "seeds": list, "draws": int, "n_points": int, "tolerances": dict},
    "output": {"report": str, "dir": str},
    "evolution": {"box": {"lo": list, "hi": list, "n": int}, "dt": NUM, "T": NUM, "T0": NUM,
                  "sigma": NUM, "cg_tol": NUM, "max_iter": int, "q": NUM, "snapshots": int,
                  "velocity": {"name": str, "amp": NUM}, "magnetic": {"name": str, "amp": NUM},
                  "height": {"kind": str, "value": NUM, "sup": NUM, "seed": int},
                  "surface": dict, "require_contraction": bool},
}


def _construct(node, marks: dict, path: tuple):
    """Plain Python data from a composed YAML node, recording each node's position."""
    marks[path] = (node.start_mark.line + 1, node.start_mark.column + 1)
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = k.value if isinstance(k, yaml.ScalarNode) else yaml.safe_load(yaml.serialize(k))
            out[key] = _construct(v, marks, path + (key,))
            # errors about a key point at the key, not its value
            marks[path + (key,)] = (k.start_mark.line + 1, k.start_mark.column + 1)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(v, marks, path + (i,)) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


@dataclass
class RunConfig:
    data: dict
    path: str = ""
    marks: dict = field(default_factory=dict, repr=False)

    def section(self, name: str) -> dict:
        return dict(self.data.get(name) or {})

    def digest(self) -> str:
        body = json.dumps(self.data, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(body.encode()).hexdigest()

    def error(self, msg: str, key_path: tuple = ()) -> ConfigParseError:
        line, col = self.marks.get(tuple(key_path), (None, None))
        return ConfigParseError(msg, self.path, line, col)


def _check(value, schema, cfg: RunConfig, path: tuple) -> None:
    if isinstance(schema, dict):
        if not isinstance(value, dict):
            raise cfg.error(f"'{'.'.join(map(str, path))}' must be a mapping", path)
        for k, v in value.items():
            if k not in schema:
                raise cfg.error(f"unknown key '{'.'.join(map(str, path + (k,)))}'; "
                                f"allowed: {sorted(schema)}", path + (k,))
            _check(v, schema[k], cfg, path + (k,))
        return
    types = schema if isinstance(schema, tuple) else (schema,)
    if schema is NUM and isinstance(value, str):
        try:
            float(value)          # YAML 1.1 reads 1e-10 as a string
            return
        except ValueError:
            pass
    if isinstance(value, bool) and bool not in types:
        raise cfg.error(f"'{'.'.join(map(str, path))}' must be {_tname(types)}", path)
    if not isinstance(value, types):
        raise cfg.error(f"'{'.'.join(map(str, path))}' must be {_tname(types)}", path)


def _tname(types) -> str:
    return " or ".join(t.__name__ for t in types)


def validate(cfg: RunConfig) -> RunConfig:
    _check(cfg.data, SCHEMA, cfg, ())
    for p in (("hanzawa", "delta0"),):
        v = cfg.data.get(p[0], {}).get(p[1])
        if v is not None and not 0 < float(v) < 1:
            raise cfg.error("delta0 must lie in (0, 1)", p)
    tols = cfg.section("verify").get("tolerances") or {}
    for k, v in tols.items():
        try:
            ok = float(v) > 0
        except (TypeError, ValueError):
            ok = False
        if not ok:
            raise cfg.error(f"tolerance for '{k}' must be a positive number",
                            ("verify", "tolerances", k))
    from .suites import SUITES
    for i, name in enumerate(cfg.section("verify").get("suites") or []):
        if name != "all" and name not in SUITES:
            raise cfg.error(f"unknown suite '{name}'; known: all, {', '.join(SUITES)}",
                            ("verify", "suites", i))
    seeds = cfg.section("verify").get("seeds")
    if seeds is not None and len(seeds) == 0:
        raise cfg.error("seed list must be non-empty", ("verify", "seeds"))
    return cfg


def parse_text(text: str, path: str = "<string>") -> RunConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        m = exc.problem_mark
        raise ConfigParseError(exc.problem or str(exc), path,
                               m.line + 1 if m else None, m.column + 1 if m else None) from exc
    except yaml.YAMLError as exc:
        raise ConfigParseError(str(exc), path) from exc
    marks: dict = {}
    data = {} if node is None else _construct(node, marks, ())
    if not isinstance(data, dict):
        raise ConfigParseError("top level must be a mapping", path, 1, 1)
    if "kind" in data:
        data = {"surface": data}
        marks = {("surface",) + k: v for k, v in marks.items()}
    return validate(RunConfig(data, path, marks))


def load(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigParseError(f"config file not found: {p}", str(p))
    return parse_text(p.read_text(), str(p))
