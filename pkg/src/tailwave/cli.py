"""Command line: scenario runs, parameter sweeps and the property suite.

    tailwave run <cfg> [--jobs N] [--dry-run]
    tailwave check [--filter NAME]
    tailwave sweep <cfg> [--jobs N]

Config files are flat ``key = value`` lines with dotted sections; ``#``
starts a comment.  See the README for the full key list.  Exit codes: 0 all
verdicts pass, 1 a verdict or property failed, 2 configuration error,
3 numerical/runtime error.
"""
from __future__ import annotations

import argparse
import hashlib
import itertools
import math
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import analysis as A
from . import energy as En
from . import fields as F
from .background import Background
from .errors import ConfigError, TailwaveError
from .evolve import GridSpec, evolve_mode
from .initial_data import bump_data, static_tail_data, tabulated_data

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

# ---------------------------------------------------------------- config grammar
# key -> (type, default); a default of REQUIRED must be given in the file
REQUIRED = object()
SCHEMA = {
    "name": (str, REQUIRED),
    "seed": (int, 0),
    "background.kind": (str, "schwarzschild"),
    "background.M": (float, 1.0),
    "background.e": (float, 0.0),
    "background.R_norm": (float, 10.0),
    "data.family": (str, "bump"),
    "data.ell": (int, 0),
    "data.profile": (str, "polynomial_bump"),
    "data.v_lo": (float, 20.0),
    "data.v_hi": (float, 40.0),
    "data.amplitude": (float, 1.0),
    "data.power": (int, 4),
    "data.C0": (float, 1.0),
    "data.cutoff": (float, 4.0),
    "data.path": (str, ""),
    "data.predicted_I0": (str, ""),
    "grid.u0": (float, 0.0),
    "grid.u1": (float, 1000.0),
    "grid.v0": (float, 0.0),
    "grid.v1": (float, 3000.0),
    "grid.h": (float, 0.125),
    "grid.levels": (int, 2),
    "grid.rows": (int, 200),
    "grid.delta_floor": (float, 0.0),
    "output.dir": (str, "tailwave_out"),
    "output.plots": (bool, True),
}
MEASURE_KINDS = ("pointwise", "scri", "energy", "rp_flux", "np", "tk_pointwise", "sharpness")
MEASURE_SCHEMA = {
    "kind": (str, REQUIRED),
    "theorem": (str, ""),
    "r": (float, 10.0),
    "k": (int, 1),
    "R": (float, 10.0),
    "p": (float, 2.0),
    "field": (str, "phi"),
    "r_cut_hi": (str, ""),
    "band": (str, ""),
    "rate": (str, ""),
    "eps": (float, A.EPS_BAND),
    "window": (str, ""),
    "u": (str, "0"),
    "tol": (float, 0.05),
    "expect": (str, "non-integrable"),
}
DEFAULT_REF = {
    "pointwise": "pointwise tail at fixed r",
    "scri": "radiation field on the outermost cone",
    "energy": "T-energy flux through truncated cones",
    "rp_flux": "r^p-weighted flux",
    "np": "Newman-Penrose constant conservation",
    "tk_pointwise": "T^k pointwise tail at fixed r",
    "sharpness": "non-integrability of the r^p flux",
}
_KEY_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*")


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Raw key -> string map; rejects malformed and duplicate keys."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        s = line.split(" #", 1)[0].strip() if not line.lstrip().startswith("#") else ""
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"line{n}", f"{source}:{n}: expected key = value")
        k, v = (t.strip() for t in s.split("=", 1))
        if not _KEY_RE.fullmatch(k):
            raise ConfigError(k, f"{source}:{n}: malformed key {k!r}")
        if k in out:
            raise ConfigError(k, f"{source}:{n}: duplicate key {k!r}")
        out[k] = v
    return out


def _convert(key, typ, raw):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            val = float(raw)
            if not math.isfinite(val):
                raise ValueError(raw)
            return val
        return str(raw)
    except ValueError:
        raise ConfigError(key, f"{key}: cannot read {raw!r} as {typ.__name__}") from None


def _pair(key, raw):
    if not raw:
        return None
    parts = [t for t in re.split(r"[,\s]+", raw.strip()) if t]
    if len(parts) != 2:
        raise ConfigError(key, f"{key}: expected two numbers 'lo,hi'")
    lo, hi = (_convert(key, float, t) for t in parts)
    if not hi > lo:
        raise ConfigError(key, f"{key}: need lo < hi")
    return (lo, hi)


def resolve(raw: dict) -> dict:
    """Typed, defaulted, validated config (dict with sorted keys)."""
    cfg = {}
    sweep = {}
    measures = {}
    for k, v in raw.items():
        if k.startswith("sweep."):
            sweep[k[len("sweep."):]] = v
            continue
        if k.startswith("measure."):
            parts = k.split(".")
            if len(parts) != 3:
                raise ConfigError(k, f"{k}: measurement keys look like measure.<id>.<field>")
            _, mid, attr = parts
            if attr not in MEASURE_SCHEMA:
                raise ConfigError(k, f"{k}: unknown measurement field {attr!r}")
            measures.setdefault(mid, {})[attr] = v
            continue
        if k not in SCHEMA:
            raise ConfigError(k, f"unknown key {k!r}")
        cfg[k] = _convert(k, SCHEMA[k][0], v)
    for k, (typ, default) in SCHEMA.items():
        if k not in cfg:
            if default is REQUIRED:
                raise ConfigError(k, f"missing required key {k!r}")
            cfg[k] = default
    for mid, attrs in measures.items():
        for attr, (typ, default) in MEASURE_SCHEMA.items():
            key = f"measure.{mid}.{attr}"
            if attr in attrs:
                cfg[key] = _convert(key, typ, attrs[attr])
            elif default is REQUIRED:
                raise ConfigError(key, f"missing required key {key!r}")
            else:
                cfg[key] = default
        kind = cfg[f"measure.{mid}.kind"]
        if kind not in MEASURE_KINDS:
            raise ConfigError(f"measure.{mid}.kind", f"measure.{mid}.kind: unknown kind {kind!r}")
    _validate(cfg)
    for k, v in sweep.items():
        if k not in SCHEMA:
            raise ConfigError(f"sweep.{k}", f"sweep.{k}: cannot sweep unknown key {k!r}")
        vals = [t.strip() for t in v.split(",") if t.strip()]
        for t in vals:
            _convert(f"sweep.{k}", SCHEMA[k][0], t)
        cfg[f"sweep.{k}"] = ",".join(vals)
    return dict(sorted(cfg.items()))


def _validate(cfg):
    try:
        Background.from_config(cfg["background.kind"], cfg["background.M"], cfg["background.e"],
                               cfg["background.R_norm"])
    except ValueError as exc:
        raise ConfigError("background.kind", f"background: {exc}") from None
    if cfg["background.M"] < 0:
        raise ConfigError("background.M", "background.M must be >= 0")
    if abs(cfg["background.e"]) > cfg["background.M"] and cfg["background.kind"] != "minkowski":
        raise ConfigError("background.e", "background.e: |e| > M has no horizon")
    if cfg["grid.h"] <= 0:
        raise ConfigError("grid.h", "grid.h must be positive")
    if cfg["grid.u1"] <= cfg["grid.u0"]:
        raise ConfigError("grid.u1", "grid.u1 must exceed grid.u0")
    if cfg["grid.v1"] <= cfg["grid.v0"]:
        raise ConfigError("grid.v1", "grid.v1 must exceed grid.v0")
    for a, b in (("grid.u0", "grid.u1"), ("grid.v0", "grid.v1")):
        n = (cfg[b] - cfg[a]) / cfg["grid.h"]
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ConfigError(b, f"{b}: span is not a multiple of grid.h")
    if cfg["grid.levels"] < 1:
        raise ConfigError("grid.levels", "grid.levels must be >= 1")
    if cfg["grid.rows"] < 2:
        raise ConfigError("grid.rows", "grid.rows must be >= 2")
    if cfg["data.ell"] < 0:
        raise ConfigError("data.ell", "data.ell must be >= 0")
    fam = cfg["data.family"]
    if fam not in ("bump", "static_tail", "tabulated"):
        raise ConfigError("data.family", f"data.family: unknown family {fam!r}")
    if fam == "bump":
        if not cfg["data.v_hi"] > cfg["data.v_lo"] >= cfg["grid.v0"]:
            raise ConfigError("data.v_lo", "data.v_lo/v_hi: need grid.v0 <= v_lo < v_hi")
        if cfg["data.profile"] not in ("polynomial_bump", "gaussian_truncated"):
            raise ConfigError("data.profile", f"data.profile: unknown profile {cfg['data.profile']!r}")
    if fam == "tabulated" and not cfg["data.path"]:
        raise ConfigError("data.path", "data.path is required for tabulated data")
    if cfg["data.predicted_I0"]:
        _convert("data.predicted_I0", float, cfg["data.predicted_I0"])
    for k in [k for k in cfg if k.startswith("measure.") and k.endswith(".kind")]:
        mid = k.split(".")[1]
        pre = f"measure.{mid}."
        _pair(pre + "band", cfg[pre + "band"])
        _pair(pre + "window", cfg[pre + "window"])
        if cfg[pre + "rate"] and cfg[pre + "rate"] not in ("price", "price_scri"):
            _convert(pre + "rate", float, cfg[pre + "rate"])
        kind = cfg[k]
        if kind in ("pointwise", "scri", "energy", "tk_pointwise") and not (
                cfg[pre + "band"] or cfg[pre + "rate"]):
            raise ConfigError(pre + "band", f"{pre}band (or {pre}rate) is required for {kind}")
        if kind in ("np", "sharpness") and cfg["data.ell"] != 0:
            raise ConfigError(k, f"{k}: {kind} needs data.ell = 0")
        if kind == "np":
            for t in cfg[pre + "u"].split(","):
                u = _convert(pre + "u", float, t)
                if not cfg["grid.u0"] <= u <= cfg["grid.u1"]:
                    raise ConfigError(pre + "u", f"{pre}u: {u} lies outside the grid")
        if cfg[pre + "r_cut_hi"]:
            _convert(pre + "r_cut_hi", float, cfg[pre + "r_cut_hi"])
        try:
            F.parse_selector(cfg[pre + "field"])
        except ValueError:
            raise ConfigError(pre + "field", f"{pre}field: bad selector") from None


def bundled_scenario(name):
    """Path of a scenario shipped with the package (name with or without .cfg)."""
    base = os.path.join(os.path.dirname(__file__), "scenarios")
    for cand in (name, name + ".cfg"):
        p = os.path.join(base, os.path.basename(cand))
        if os.path.isfile(p):
            return p
    return None


def load_config(path) -> dict:
    if not os.path.exists(path):
        path = bundled_scenario(str(path)) or path
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("path", f"cannot read config {path}: {exc}") from None
    return resolve(parse_config_text(text, str(path)))


def config_hash(cfg: dict) -> str:
    blob = "\n".join(f"{k}={cfg[k]!r}" for k in sorted(cfg) if not k.startswith("sweep."))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def measures_of(cfg):
    ids = sorted({k.split(".")[1] for k in cfg if k.startswith("measure.")})
    return [{a: cfg[f"measure.{m}.{a}"] for a in MEASURE_SCHEMA} | {"id": m} for m in ids]


def output_dir(cfg) -> str:
    root = os.environ.get("TAILWAVE_OUT") or cfg["output.dir"]
    return os.path.join(root, cfg["name"])


# ---------------------------------------------------------------- scenario execution
def build_background(cfg):
    return Background.from_config(cfg["background.kind"], cfg["background.M"],
                                  cfg["background.e"], cfg["background.R_norm"])


def build_data(cfg, bg):
    fam = cfg["data.family"]
    u0, v0 = cfg["grid.u0"], cfg["grid.v0"]
    if fam == "bump":
        return bump_data(cfg["data.ell"], cfg["data.v_lo"], cfg["data.v_hi"], cfg["data.amplitude"],
                         cfg["data.profile"], u0=u0, v0=v0, power=cfg["data.power"])
    if fam == "static_tail":
        if cfg["data.ell"] != 0:
            raise ConfigError("data.ell", "static tail data is an ell = 0 family")
        cut = cfg["data.cutoff"] if cfg["data.cutoff"] > 0 else None
        return static_tail_data(bg, cfg["data.C0"], u0=u0, v0=v0, cutoff=cut)
    pred = float(cfg["data.predicted_I0"]) if cfg["data.predicted_I0"] else None
    return tabulated_data(cfg["data.path"], cfg["data.ell"], u0=u0, v0=v0, predicted_I0=pred)


def plan(cfg) -> dict:
    """Resolved execution plan (what --dry-run prints)."""
    h = cfg["grid.h"]
    levels = [h / 2 ** n for n in range(cfg["grid.levels"])]
    nu = round((cfg["grid.u1"] - cfg["grid.u0"]) / h)
    nv = round((cfg["grid.v1"] - cfg["grid.v0"]) / h)
    return {"name": cfg["name"], "config_hash": config_hash(cfg), "levels": levels,
            "cells": [nu * nv * 4 ** n for n in range(len(levels))],
            "measures": [(m["id"], m["kind"]) for m in measures_of(cfg)],
            "output": output_dir(cfg)}


def _band(m, ell):
    if m["band"]:
        return _pair("band", m["band"])
    rate = m["rate"]
    if rate == "price":
        rate = -2 * ell - 3
    elif rate == "price_scri":
        rate = -ell - 2
    return A.band_for_rate(float(rate), m["eps"])


def _level_job(args):
    """Evolve one grid level and take every measurement (runs in a worker)."""
    cfg, h = args
    bg = build_background(cfg)
    data = build_data(cfg, bg)
    ms = measures_of(cfg)
    grid = GridSpec(cfg["grid.u0"], cfg["grid.u1"], cfg["grid.v0"], cfg["grid.v1"], h,
                    delta_floor=cfg["grid.delta_floor"])
    stations = sorted({m["r"] for m in ms if m["kind"] in ("pointwise", "tk_pointwise")})
    need_rows = any(m["kind"] in ("energy", "rp_flux", "np", "sharpness") for m in ms)
    extra = []
    for m in ms:
        if m["kind"] == "np":
            extra += [float(t) for t in m["u"].split(",")]
    stride = max(1, grid.nu // cfg["grid.rows"])
    store = "auto" if need_rows else "checkpoints"
    sol = evolve_mode(bg, data, grid, store=store, store_stride=stride, stations=stations,
                      extra_rows=extra)
    out = {}
    rows_u = [float(sol.u[i]) for i in sol.row_index]
    if sol.is_full:
        rows_u = rows_u[::stride]
    for m in ms:
        kind, mid = m["kind"], m["id"]
        if kind in ("pointwise", "tk_pointwise"):
            u, st = sol.station(m["r"])
            y = np.asarray(st, dtype=float) / m["r"]
            if kind == "tk_pointwise":
                for _ in range(m["k"]):
                    y = np.gradient(y, sol.h)
            out[mid] = _series(u, np.abs(y), sol, f"{kind}(r={m['r']})")
        elif kind == "scri":
            u, col = sol.scri()
            out[mid] = _series(u, np.abs(np.asarray(col, dtype=float)), sol, "scri")
        elif kind == "energy":
            out[mid] = En.t_energy_series(sol, m["R"], rows_u)
        elif kind == "rp_flux":
            hi = float(m["r_cut_hi"]) if m["r_cut_hi"] else None
            out[mid] = En.flux_series(sol, En.FluxSpec(m["field"], m["p"], m["R"], hi), rows_u)
        elif kind == "np":
            us = [float(t) for t in m["u"].split(",")]
            window = F.common_window(sol, us)
            vals = [F.extract_np_constant(sol, u, window) for u in us]
            out[mid] = {"u": us, "I0": [v[0] for v in vals], "tol": [v[1] for v in vals],
                        "predicted": data.predicted_I0}
        elif kind == "sharpness":
            win = _pair("window", m["window"])
            v = A.sharpness_scan(sol, m["p"], m["field"], m["R"], win, us=rows_u)
            out[mid] = {"verdict": v.verdict, "I0": v.I0, "inf": v.late_infimum,
                        "threshold": v.threshold, "flux_exponent": v.flux_exponent,
                        "series": v.series}
    return h, out


def _series(u, y, sol, label, max_points=2000):
    u = np.asarray(u, dtype=float)
    good = np.isfinite(y)
    idx = np.flatnonzero(good)
    if len(idx) > max_points:
        idx = idx[np.unique(np.linspace(0, len(idx) - 1, max_points).round().astype(int))]
    prov = En._provenance(sol)
    prov["measurable"] = label
    return En.FluxSeries(None, [(float(u[i]), float(y[i]), float("nan")) for i in idx], prov)


def _attach_richardson(fine, coarse):
    """rich_err = |y_h - y_2h| / 3 at the u-samples both series share."""
    cu = {round(u, 9): v for u, v, _ in coarse.samples}
    smp = []
    for u, v, _ in fine.samples:
        c = cu.get(round(u, 9))
        smp.append((u, v, abs(v - c) / 3.0 if c is not None else float("nan")))
    return En.FluxSeries(fine.spec, smp, fine.provenance, fine.aux)


def _evaluate(cfg, results):
    """Report rows from per-level results (finest level first)."""
    ell = cfg["data.ell"]
    rows = []
    for m in measures_of(cfg):
        mid, kind = m["id"], m["kind"]
        ref = m["theorem"] or DEFAULT_REF[kind]
        per = [res[mid] for _, res in results]
        if kind == "np":
            r0 = per[0]
            I0 = np.array(r0["I0"])
            dev = float(np.max(np.abs(I0 - I0[0])))
            pred = r0["predicted"]
            ok = all(float(np.max(np.abs(np.array(p["I0"]) - p["I0"][0]))) <= m["tol"] * abs(p["I0"][0])
                     for p in per)
            lo = hi = float("nan")
            if pred is not None and pred != 0:
                lo, hi = pred - m["tol"] * abs(pred), pred + m["tol"] * abs(pred)
                ok &= all(lo <= v <= hi for p in per for v in p["I0"])
            rows.append(A.ReportRow(f"{mid}:I0", ref, float(I0[0]), dev, lo, hi,
                                    "PASS" if ok else "FAIL"))
            continue
        if kind == "sharpness":
            verdicts = {p["verdict"] for p in per}
            ok = verdicts == {m["expect"]}
            rows.append(A.ReportRow(f"{mid}:{per[0]['verdict']}", ref, per[0]["flux_exponent"],
                                    float("nan"), float("nan"), float("nan"),
                                    "PASS" if ok else "FAIL"))
            continue
        lo, hi = _band(m, ell)
        meas = A.Measurable(mid, ref, mid, (lo, hi), _pair("window", m["window"]))
        rows += A.decay_report({mid: per}, [meas])
    return rows


def _write_outputs(cfg, results, rows, outdir):
    os.makedirs(outdir, exist_ok=True)
    ch = config_hash(cfg)
    meta = {"config_hash": ch, "scenario": cfg["name"]}
    written = []
    for n, (h, res) in enumerate(results):
        for mid in sorted(res):
            val = res[mid]
            s = val.get("series") if isinstance(val, dict) else val
            if s is None:
                continue
            if n + 1 < len(results) and not isinstance(val, dict):
                coarse = results[n + 1][1][mid]
                s = _attach_richardson(s, coarse)
            path = os.path.join(outdir, f"series_{mid}_level{n}.csv")
            s.to_csv(path, dict(meta, level=n, h=repr(h)))
            written.append(path)
    grid_txt = ",".join(f"{k}={cfg[k]!r}" for k in ("grid.u0", "grid.u1", "grid.v0", "grid.v1", "grid.h"))
    with open(os.path.join(outdir, "report.csv"), "w") as fh:
        fh.write("measurable,theorem_ref,exponent,stderr,band_lo,band_hi,verdict\n")
        for r in rows:
            fh.write(r.csv() + "\n")
        fh.write(f"#config_hash={ch}\n#grid={grid_txt}\n#levels={[h for h, _ in results]!r}\n")
    with open(os.path.join(outdir, "report.txt"), "w") as fh:
        fh.write(f"tailwave report: {cfg['name']}\nconfig_hash: {ch}\ngrid: {grid_txt}\n")
        fh.write(f"levels (h): {', '.join(repr(h) for h, _ in results)}\n\n")
        for r in rows:
            fh.write(f"{r.verdict:15s} {r.measurable:24s} value={_fmt(r.exponent)} "
                     f"stderr={_fmt(r.stderr)} band=[{_fmt(r.band_lo)}, {_fmt(r.band_hi)}]  {r.theorem_ref}\n")
        n_fail = sum(r.verdict == "FAIL" for r in rows)
        fh.write(f"\n{len(rows) - n_fail}/{len(rows)} verdicts passed\n")
    if cfg["output.plots"]:
        with open(os.path.join(outdir, "plots.gp"), "w") as fh:
            fh.write(f"# tailwave plot script (gnuplot syntax)\n# config_hash={ch}\n# grid: {grid_txt}\n")
            fh.write("set datafile separator ','\nset logscale xy\nset xlabel 'u'\n")
            for p in written:
                name = os.path.basename(p)
                fh.write(f"set title '{name}'\nplot '{name}' skip 2 using 1:(abs($2)) with lines title '{name}'\npause -1\n")


def _fmt(x):
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6g}"


def run_scenario(cfg, jobs=None, outdir=None):
    """Evolve every level, measure, write the artifacts; return the report rows."""
    hs = [cfg["grid.h"] / 2 ** n for n in range(cfg["grid.levels"])]
    jobs = jobs or os.cpu_count() or 1
    tasks = [(cfg, h) for h in hs]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            results = list(ex.map(_level_job, tasks))
    else:
        results = [_level_job(t) for t in tasks]
    results.sort(key=lambda t: t[0])             # finest level first
    rows = _evaluate(cfg, results)
    _write_outputs(cfg, results, rows, outdir or output_dir(cfg))
    return rows


def _exit_for(rows):
    return EXIT_FAIL if any(r.verdict == "FAIL" for r in rows) else EXIT_OK


# ---------------------------------------------------------------- commands
def cmd_run(args):
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dry_run:
        for k, v in plan(cfg).items():
            print(f"{k}: {v}")
        return EXIT_OK
    try:
        rows = run_scenario(cfg, args.jobs)
    except ConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TailwaveError, ValueError, FloatingPointError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for r in rows:
        print(f"{r.verdict:15s} {r.measurable:24s} {_fmt(r.exponent)}")
    return _exit_for(rows)


def sweep_cells(cfg):
    """[(cell_name, cell_cfg)] for the cross product of the sweep axes."""
    axes = [(k[len("sweep."):], v.split(",")) for k, v in cfg.items() if k.startswith("sweep.")]
    base = {k: v for k, v in cfg.items() if not k.startswith("sweep.")}
    if not axes:
        return [(cfg["name"], base)]
    cells, seen = [], set()
    for combo in itertools.product(*[vals for _, vals in axes]):
        c = dict(base)
        tags = []
        for (key, _), val in zip(axes, combo):
            c[key] = _convert(key, SCHEMA[key][0], val)
            tags.append(f"{key.split('.')[-1]}={val}")
        name = "_".join(tags)
        if name in seen:
            raise ConfigError("sweep", f"duplicate sweep cell name {name!r}")
        seen.add(name)
        _validate(c)
        cells.append((name, c))
    return cells


def _sweep_job(args):
    name, c, outdir = args
    try:
        return name, run_scenario(c, jobs=1, outdir=outdir), None
    except (TailwaveError, ValueError, FloatingPointError) as exc:
        return name, [], f"{type(exc).__name__}: {exc}"


def cmd_sweep(args):
    try:
        cfg = load_config(args.config)
        cells = sweep_cells(cfg)
    except ConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if len(cells) == 1 and not any(k.startswith("sweep.") for k in cfg):
        return cmd_run(argparse.Namespace(config=args.config, jobs=args.jobs, dry_run=False))
    root = output_dir(cfg)
    tasks = [(n, c, os.path.join(root, n)) for n, c in cells]
    jobs = args.jobs or os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
            results = list(ex.map(_sweep_job, tasks))
    else:
        results = [_sweep_job(t) for t in tasks]
    os.makedirs(root, exist_ok=True)
    code = EXIT_OK
    with open(os.path.join(root, "sweep_summary.csv"), "w") as fh:
        fh.write("cell,measurable,theorem_ref,exponent,stderr,band_lo,band_hi,verdict\n")
        for name, rows, err in results:
            if err is not None:
                fh.write(f"{name},error,,,,,,{err.replace(',', ';')}\n")
                print(f"{name}: runtime error: {err}", file=sys.stderr)
                code = max(code, EXIT_RUNTIME)
                continue
            for r in rows:
                fh.write(f"{name},{r.csv()}\n")
                print(f"{name:20s} {r.verdict:15s} {r.measurable:20s} {_fmt(r.exponent)}")
            if _exit_for(rows) == EXIT_FAIL and code == EXIT_OK:
                code = EXIT_FAIL
        fh.write(f"#config_hash={config_hash(cfg)}\n")
    return code


def cmd_check(args):
    from . import checks
    names = [n for n in checks.PROPERTIES if not args.filter or args.filter in n]
    if not names:
        print(f"no property matches {args.filter!r}", file=sys.stderr)
        return EXIT_CONFIG
    failed = 0
    t0 = time.time()
    for name in names:
        t = time.time()
        try:
            ok, detail = checks.PROPERTIES[name](seed=args.seed)
        except TailwaveError as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        status = "ok  " if ok else "FAIL"
        print(f"{status} {name:22s} {time.time() - t:6.1f}s  {detail}")
        failed += not ok
    print(f"{len(names) - failed}/{len(names)} properties passed in {time.time() - t0:.1f}s")
    return EXIT_FAIL if failed else EXIT_OK


def main(argv=None):
    ap = argparse.ArgumentParser(prog="tailwave", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("config")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(fn=cmd_run)
    p = sub.add_parser("sweep", help="cross product over sweep.* axes")
    p.add_argument("config")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(fn=cmd_sweep)
    p = sub.add_parser("check", help="run the property suite")
    p.add_argument("--filter", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_check)
    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
