"""Command-line entry point: ``hanzawa-mhd {verify,curvature,norms,evolve,report}``.

Exit codes: 0 all selected checks pass, 1 a check failed (summary on stderr),
2 bad usage or an invalid config (with line and column when known).

Reports are JSON objects ``{"body": ..., "meta": ...}``. The body is a pure
function of the config and seeds; wall-clock data lives only in ``meta``.
Worker count for the pair-sum quadrature comes from ``--workers`` or the
``HANZAWA_WORKERS`` environment variable.

CSV field orders:
  curvature   u, v, H_formula, H_oracle, abs_err
  B snapshots t, x, y, z, Bx, By, Bz
  h snapshots t, u, v, h
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import inspect
import io
import json
import os
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import evolution as ev
from . import norms as nm
from .config import ConfigParseError, RunConfig, load
from .hanzawa import HeightError, HeightField
from .interface_geometry import interface_geometry, oracle_geometry
from .surface import GeometryError, Sphere, surface_from_config
from .suites import SUITES, run_suite

TOOL = "hanzawa-mhd"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# output helpers


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def make_report(command: str, cfg: RunConfig | None, selection: dict, body_extra: dict,
                passed: bool, wall: dict) -> dict:
    body = {"tool": TOOL, "version": __version__, "command": command,
            "config_hash": cfg.digest() if cfg else None, "selection": selection,
            "pass": bool(passed), **body_extra}
    body = _jsonable(body)
    digest = hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()
    meta = {"created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "wall_clock_s": wall, "workers": nm.workers(), "body_sha256": digest}
    return {"body": body, "meta": meta}


# ---------------------------------------------------------------------------
# config plumbing


def _load_cfg(path) -> RunConfig:
    return load(path) if path else RunConfig({})


def _surface(cfg: RunConfig, key: tuple = ("surface",), default=None):
    data = cfg.data
    for k in key:
        data = (data or {}).get(k)
    if data is None:
        if default is None:
            raise cfg.error("a surface section is required")
        return default
    try:
        return surface_from_config(data, cfg.section("hanzawa"))
    except (GeometryError, TypeError, ValueError) as exc:
        raise cfg.error(str(exc), key) from exc


def _delta0(cfg: RunConfig) -> float:
    return float(cfg.section("hanzawa").get("delta0", 0.3))


def _suite_kwargs(name: str, cfg: RunConfig, seeds: int | None) -> dict:
    ver = cfg.section("verify")
    cand = {}
    if "surface" in cfg.data:
        S = _surface(cfg)
        cand["surfaces"] = {S.kind: S}
        if isinstance(S, Sphere):
            cand["radii"] = (S.R,)
    n_seeds = seeds if seeds is not None else (len(ver["seeds"]) if "seeds" in ver else None)
    if n_seeds is not None:
        seed_list = list(range(n_seeds)) if seeds is not None else [int(s) for s in ver["seeds"]]
        cand["seeds"] = seed_list
        cand["draws"] = len(seed_list)
    if "draws" in ver:
        cand["draws"] = int(ver["draws"])
    if "n_points" in ver:
        cand["n_points"] = int(ver["n_points"])
    tol = (ver.get("tolerances") or {}).get(name)
    if tol is not None:
        cand["tol"] = float(tol)
    accepted = inspect.signature(SUITES[name]).parameters
    return {k: v for k, v in cand.items() if k in accepted}


def _suite_names(spec) -> list[str]:
    names = []
    for part in ([spec] if isinstance(spec, str) else spec):
        for name in str(part).split(","):
            name = name.strip()
            if name == "all":
                names.extend(SUITES)
            elif name in SUITES:
                names.append(name)
            else:
                raise UsageError(f"unknown suite {name!r}; choose from all, {', '.join(SUITES)}")
    return list(dict.fromkeys(names))


def _run_suites(command: str, names, cfg: RunConfig, seeds, out) -> int:
    results, wall, selection = [], {}, {}
    for name in names:
        kw = _suite_kwargs(name, cfg, seeds)
        selection[name] = {k: (sorted(v) if k == "surfaces" else v) for k, v in kw.items()}
        res = run_suite(name, **kw)
        wall[name] = round(res.runtime, 3)
        results.append(res)
        mark = "PASS" if res.passed else "FAIL"
        print(f"[{mark}] {name}: {len(res.records)} checks, {res.runtime:.1f}s", file=sys.stderr)
    passed = all(r.passed for r in results)
    suites = [{"suite": r.suite, "pass": r.passed, "records": [x.to_dict() for x in r.records]}
              for r in results]
    report = make_report(command, cfg, selection, {"suites": suites}, passed, wall)
    _emit(dumps(report), out)
    if not passed:
        for r in results:
            for f in r.failures():
                print(f"FAILED {r.suite}/{f.name}: max_rel_err={f.max_rel_err:.3e} "
                      f"tol={f.tolerance:g} order={f.observed_order} min={f.min_order}",
                      file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# subcommands


def cmd_verify(args) -> int:
    cfg = _load_cfg(args.config or args.surface)
    if args.config and args.surface:
        cfg.data["surface"] = _load_cfg(args.surface).data.get("surface")
    return _run_suites("verify", _suite_names(args.suite), cfg, args.seeds, args.out)


def cmd_report(args) -> int:
    cfg = _load_cfg(args.config)
    names = _suite_names(cfg.section("verify").get("suites") or ["all"])
    out = args.out or cfg.section("output").get("report")
    return _run_suites("report", names, cfg, None, out)


def parse_height(spec: str, S, delta0: float) -> HeightField:
    """``zero``, ``const:c``, ``wave:amp[:seed]`` or ``expr:<expression in x, y, z>``."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "zero":
            return HeightField.zero(S, delta0=delta0)
        if kind == "const":
            return HeightField.constant(S, float(rest), delta0=delta0)
        if kind == "wave":
            from .samples import random_plane_wave
            amp, _, seed = rest.partition(":")
            f = random_plane_wave(np.random.default_rng(int(seed or 0)), 0, time=False)
            vals = f.value(S.grid_points)
            return HeightField(S, values=float(amp) * vals / np.max(np.abs(vals)), delta0=delta0)
        if kind == "expr":
            from .fields import parse_expr
            return HeightField.from_function(S, parse_expr(rest, self_test=False), delta0=delta0)
    except ValueError as exc:
        raise UsageError(f"bad height spec {spec!r}: {exc}") from exc
    raise UsageError(f"bad height spec {spec!r}; use zero, const:c, wave:amp[:seed] or expr:...")


def cmd_curvature(args) -> int:
    cfg = _load_cfg(args.surface)
    S = _surface(cfg)
    h = parse_height(args.height, S, _delta0(cfg))
    h.require_valid()
    H = interface_geometry(h).H
    Ho = oracle_geometry(h).mean_curvature
    U, V = S.grid_params
    rows = zip(U.ravel(), V.ravel(), H.ravel(), Ho.ravel(), np.abs(H - Ho).ravel())
    _emit(_csv_text(["u", "v", "H_formula", "H_oracle", "abs_err"], rows), args.out)
    return 0


BUILTIN_FUNCS = {
    # name: (lo, hi, periodic, f)
    "x": (0.0, 1.0, False, lambda x: x),
    "x2": (0.0, 1.0, False, lambda x: x ** 2),
    "sqrt": (0.0, 1.0, False, np.sqrt),
    "abs": (0.0, 1.0, False, lambda x: np.abs(x - 0.5)),
    "one": (0.0, 1.0, False, np.ones_like),
    "sin": (0.0, 2 * np.pi, True, np.sin),
    "gauss": (0.0, 1.0, False, lambda x: np.exp(-50 * (x - 0.5) ** 2)),
}


def builtin_sample(name: str, n: int) -> nm.SampledFunction:
    if name not in BUILTIN_FUNCS:
        raise UsageError(f"unknown builtin {name!r}; known: {', '.join(BUILTIN_FUNCS)}")
    lo, hi, per, f = BUILTIN_FUNCS[name]
    dom = nm.BoxDomain.uniform([lo], [hi], [n], periodic=per)
    return nm.SampledFunction(f(dom.axes[0]), dom)


def csv_sample(path) -> nm.SampledFunction:
    """Tensor-grid samples: coordinate columns among x, y, z and one value column."""
    try:
        data = np.genfromtxt(path, delimiter=",", names=True)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    names = data.dtype.names or ()
    coords = [c for c in ("x", "y", "z") if c in names]
    vals = [c for c in names if c not in coords]
    if not coords or len(vals) != 1:
        raise UsageError(f"{path}: need coordinate columns among x, y, z and exactly one value column")
    data = np.atleast_1d(data)
    axes = [np.unique(data[c]) for c in coords]
    if np.prod([len(a) for a in axes]) != len(data):
        raise UsageError(f"{path}: samples do not form a tensor grid")
    order = np.lexsort([data[c] for c in reversed(coords)])
    values = data[vals[0]][order].reshape([len(a) for a in axes])
    return nm.SampledFunction(values, nm.BoxDomain(tuple(axes)))


def cmd_norms(args) -> int:
    try:
        spec = nm.NormSpec.parse(args.norm)
    except nm.NormError as exc:
        raise UsageError(str(exc)) from exc
    if args.probe:
        if spec.family not in ("W", "G"):
            raise UsageError("the probe takes a fractional spec W:s:q or G:s:q")
        t0 = time.perf_counter()
        runs = []
        for n in args.grids:
            pairs = nm.random_probe_pairs(args.pairs, n, n, np.random.default_rng(args.seed))
            res = nm.product_estimate_probe(pairs, spec.s, spec.s, spec.q)
            runs.append({"grid": n, "constant": res.constant, "median": res.median,
                         "skipped": res.skipped, "n_ratios": len(res.ratios)})
        drift = max(r["constant"] for r in runs) / min(r["constant"] for r in runs)
        report = make_report("norms --probe", None,
                             {"norm": str(spec), "pairs": args.pairs, "grids": args.grids,
                              "seed": args.seed},
                             {"probe": runs, "grid_drift": drift}, drift < 10.0,
                             {"probe": round(time.perf_counter() - t0, 3)})
        _emit(dumps(report), args.out)
        return 0 if report["body"]["pass"] else 1
    f = csv_sample(args.csv) if args.csv else builtin_sample(args.builtin, args.n)
    value = nm.space_norm(f, spec)
    _emit(f"{value:.12g}\n", args.out)
    return 0


def _initial_height(S, spec: dict, delta0: float) -> HeightField:
    kind = spec.get("kind", "random")
    if kind == "zero":
        return HeightField.zero(S, delta0=delta0)
    if kind == "const":
        return HeightField(S, values=float(spec.get("value", 0.0)), delta0=delta0)
    if kind == "random":
        from .samples import random_plane_wave
        f = random_plane_wave(np.random.default_rng(int(spec.get("seed", 0))), 0, time=False)
        vals = f.value(S.grid_points)
        return HeightField(S, values=float(spec.get("sup", 1e-2)) * vals / np.max(np.abs(vals)),
                           delta0=delta0)
    raise UsageError(f"unknown initial height kind {kind!r}; use zero, const or random")


def cmd_evolve(args) -> int:
    cfg = _load_cfg(args.config)
    e = cfg.section("evolution")
    box = e.get("box") or {}
    try:
        grid = ev.BoxGrid(box.get("lo", (0.0, 0.0, 0.0)), box.get("hi", (1.0, 1.0, 1.0)),
                          int(box.get("n", 17)))
        ecfg = ev.EvolutionConfig(**{k: float(e[k]) for k in ("dt", "T", "sigma", "T0", "cg_tol")
                                     if k in e},
                                  **{k: int(e[k]) for k in ("max_iter",) if k in e},
                                  **({"q": float(e["q"])} if "q" in e else {}))
    except (ValueError, TypeError) as exc:
        raise cfg.error(str(exc), ("evolution",)) from exc
    S = _surface(cfg, ("evolution", "surface"),
                 default=Sphere(0.25, center=(0.5, 0.5, 0.5), nu=16, nv=32))
    vel = e.get("velocity") or {}
    mag = e.get("magnetic") or {}
    try:
        u = ev.builtin_velocity(vel.get("name", "shear"), amp=float(vel.get("amp", 0.2)))
        B0 = ev.builtin_magnetic(mag.get("name", "bump"), grid, float(mag.get("amp", 1e-2)))
    except ValueError as exc:
        raise cfg.error(str(exc), ("evolution",)) from exc
    h0 = _initial_height(S, e.get("height") or {}, _delta0(cfg))
    t0 = time.perf_counter()
    trace = ev.fixed_point_probe(B0, h0, u, ecfg, grid, keep_iterates=True)
    wall = round(time.perf_counter() - t0, 3)

    out_dir = Path(args.out_dir or cfg.section("output").get("dir") or ".")
    if trace.iterates:
        last = trace.iterates[-1]
        k_snap = np.unique(np.linspace(0, len(last.times) - 1,
                                       int(e.get("snapshots", 5))).round().astype(int))
        pts = grid.points.reshape(-1, 3)
        rows_b, rows_h = [], []
        U, V = S.grid_params
        for k in k_snap:
            t = float(last.times[k])
            Bk = last.B[k].reshape(-1, 3)
            rows_b.extend((t, *p, *b) for p, b in zip(pts, Bk))
            rows_h.extend(zip([t] * U.size, U.ravel(), V.ravel(), last.h[k].values.ravel()))
        atomic_write(out_dir / "B_snapshots.csv",
                     _csv_text(["t", "x", "y", "z", "Bx", "By", "Bz"], rows_b))
        atomic_write(out_dir / "h_snapshots.csv", _csv_text(["t", "u", "v", "h"], rows_h))
    need = bool(e.get("require_contraction", False))
    ok = (trace.contracting or not need) and not trace.gate_tripped
    report = make_report("evolve", cfg, {"evolution": ecfg.to_dict(), "grid_n": grid.n,
                                         "surface": S.describe()},
                         {"trace": trace.to_dict()}, ok, {"evolve": wall})
    atomic_write(out_dir / "trace.json", dumps(report))
    print(f"iterations={trace.iterations} final_ratio={trace.final_ratio} "
          f"contracting={trace.contracting} gate_tripped={trace.gate_tripped}", file=sys.stderr)
    return 0 if ok else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=TOOL, description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    p.add_argument("--workers", type=int, help="pair-sum worker threads (HANZAWA_WORKERS)")
    sub = p.add_subparsers(dest="command", required=True, metavar="{verify,curvature,norms,evolve,report}")

    v = sub.add_parser("verify", help="run verification suites and write a JSON report")
    v.add_argument("--suite", default="all", help="suite name, comma list or 'all'")
    v.add_argument("--surface", help="surface config (YAML)")
    v.add_argument("--config", help="full run config (YAML)")
    v.add_argument("--seeds", type=int, help="number of seeds for randomized suites")
    v.add_argument("--out", help="report path (default stdout)")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("curvature", help="interface mean curvature on the surface grid as CSV")
    c.add_argument("--surface", required=True)
    c.add_argument("--height", default="zero", help="zero | const:c | wave:amp[:seed] | expr:...")
    c.add_argument("--out")
    c.set_defaults(func=cmd_curvature)

    n = sub.add_parser("norms", help="evaluate a norm of sampled data, or run the product probe")
    src = n.add_mutually_exclusive_group()
    src.add_argument("--func", dest="builtin", default="x", help=f"builtin: {', '.join(BUILTIN_FUNCS)}")
    src.add_argument("--csv", help="CSV with columns among x, y, z plus one value column")
    n.add_argument("--norm", default="W:0.5:2", help="C:k | L:q | W:s:q | Wdot:k:q | G:s:q")
    n.add_argument("--n", type=int, default=201, help="grid nodes for builtins")
    n.add_argument("--probe", action="store_true", help="product-estimate probe, JSON output")
    n.add_argument("--pairs", type=int, default=50)
    n.add_argument("--grids", type=int, nargs="+", default=[17, 33])
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--out")
    n.set_defaults(func=cmd_norms)

    e = sub.add_parser("evolve", help="fixed-point probe of the reduced map")
    e.add_argument("--config", required=True)
    e.add_argument("--out-dir", help="directory for snapshots and trace.json")
    e.set_defaults(func=cmd_evolve)

    r = sub.add_parser("report", help="run the suites listed in a run config")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)          # exits 2 on usage errors
    if args.workers is not None:
        os.environ["HANZAWA_WORKERS"] = str(max(1, args.workers))
    try:
        return args.func(args)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except UsageError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except HeightError as exc:
        print(f"height rejected: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    try:
        code = run()
    except BrokenPipeError:
        # downstream closed the pipe (e.g. ``| head``)
        sys.stdout = None
        code = 0
    sys.exit(code)


if __name__ == "__main__":
    main()
