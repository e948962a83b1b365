"""Command line runner: certify, ode-run, pde-run, verify-identities.

Each subcommand reads a JSON config, writes CSV series and ``summary.json``
into ``--out`` and exits 0 when every declared tolerance is met, 1 when a
tolerance fails, 2 on a config error and 3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import algebra as al
from . import cones as cn
from . import geometry as geo
from . import ode
from . import pde
from .io import operator_from_json, write_csv, write_json

log = logging.getLogger("hcflab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config helpers


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e.strerror})") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return obj


def _get(cfg, key, kind, default=None, where=""):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing field '{where}{key}'")
        return default
    val = cfg[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or isinstance(val, bool) and kind is not bool:
        raise ConfigError(f"field '{where}{key}' must be {kind.__name__}, got {type(val).__name__}")
    return val


def _cones(cfg, where="cones"):
    raw = cfg.get("cones")
    if raw is None:
        return None
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"field '{where}' must be a non-empty list")
    out = []
    for i, c in enumerate(raw):
        try:
            out.append(cn.ConeSpec.from_json(c if isinstance(c, dict) else {"s": c}))
        except (ValueError, TypeError, KeyError) as e:
            raise ConfigError(f"field '{where}[{i}]': {e}") from None
    return out


def _metric(cfg, seed):
    m = cfg.get("metric")
    if not isinstance(m, dict):
        raise ConfigError("field 'metric' must be an object")
    if "file" in m:
        return geo.MetricField.load(m["file"]).validate()
    n = _get(m, "n", int, 2, "metric.")
    grid = _get(m, "grid", int, 32, "metric.")
    period = _get(m, "period", float, 1.0, "metric.")
    try:
        chart = geo.TorusChart.uniform(n, grid, period)
    except ValueError as e:
        raise ConfigError(f"field 'metric': {e}") from None
    name = _get(m, "preset", str, "flat", "metric.")
    params = _get(m, "params", dict, {}, "metric.")
    if name == "griffiths_start":
        return pde.constructed_griffiths_start(chart, seed=seed, **params)
    try:
        return geo.make_metric(name, chart, **params)
    except TypeError as e:
        raise ConfigError(f"field 'metric.params': {e}") from None
    except geo.MetricError:
        raise
    except ValueError as e:
        raise ConfigError(f"field 'metric': {e}") from None


def _tol(cfg, key, default):
    tols = cfg.get("tolerances", {})
    if not isinstance(tols, dict):
        raise ConfigError("field 'tolerances' must be an object")
    return float(_get(tols, key, float, default, "tolerances."))


# ---------------------------------------------------------------------------
# subcommands


def run_certify(cfg, seed, out):
    if "operator" not in cfg:
        raise ConfigError("missing field 'operator'")
    try:
        H, g = operator_from_json(cfg["operator"])
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"field 'operator': {e}") from None
    specs = _cones(cfg) or cn.standard_cones()
    tol = _tol(cfg, "margin", 1e-9)
    restarts = _get(cfg, "restarts", int, 32)
    rows, results = [], {}
    for spec in specs:
        try:
            rep = cn.margin(H, spec, g=g, restarts=restarts, seed=seed)
        except cn.UnsupportedCone as e:
            raise ConfigError(f"field 'cones': {e}") from None
        results[spec.label] = {"margin": rep.margin, "certified": rep.certified,
                               "member": rep.margin >= -tol}
        rows.append((spec.label, rep.margin, int(rep.certified), int(rep.margin >= -tol)))
    write_csv(out / "certify.csv", ["cone", "margin", "certified", "member"], rows)
    ok = all(r["member"] for r in results.values())
    return {"kind": "certify", "cones": results, "tolerances": {"margin": tol}, "pass": ok}


def run_ode(cfg, seed, out):
    specs = _cones(cfg) or cn.standard_cones()
    samples = _get(cfg, "samples", int, 50)
    n = _get(cfg, "n", int, 2)
    tol = _tol(cfg, "margin", 1e-6)
    try:
        ocfg = ode.OdeConfig(
            integrator=_get(cfg, "integrator", str, "rk4"),
            dt=cfg.get("dt"),
            t_end=_get(cfg, "t_end", float, 0.05),
            record_every=_get(cfg, "record_every", int, 1),
        )
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None
    rng = np.random.default_rng(seed)
    results, rows = {}, []
    for spec in specs:
        rep = ode.invariance_experiment(spec, samples, ocfg, rng, n=n, tol=tol)
        results[spec.label] = {
            "worst_margin": rep.worst_margin,
            "worst_relative": rep.worst_relative,
            "first_violation": rep.first_violation,
            "blowups": rep.blowups,
            "pass": rep.worst_relative >= -tol,
        }
        rows += [(spec.label,) + r for r in rep.rows]
    write_csv(out / "ode_trajectories.csv", ["cone", "sample_id", "t", "margin", "norm"], rows)
    worst = min(r["worst_relative"] for r in results.values())
    return {"kind": "ode_invariance", "samples": samples, "n": n, "cones": results,
            "worst_margin": worst, "tolerances": {"margin_relative": tol},
            "pass": all(r["pass"] for r in results.values())}


def run_pde(cfg, seed, out):
    g0 = _metric(cfg, seed)
    specs = _cones(cfg) or []
    monitors = tuple(_get(cfg, "monitors", list, ["shat_inf", "rho_check"]))
    try:
        pcfg = pde.PdeConfig(
            dt=cfg.get("dt"),
            t_end=cfg.get("t_end"),
            steps=cfg.get("steps", None if "t_end" in cfg else 50),
            time_integrator=_get(cfg, "integrator", str, "rk4"),
            monitors=monitors,
            cones=tuple(specs),
            record_every=_get(cfg, "record_every", int, 10),
            c_h=_get(cfg, "c_h", float, pde.C_H),
        )
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None
    tol_drop = _tol(cfg, "shat_drop", 1e-6)
    tol_rho = _tol(cfg, "rho", 1e-7)
    tol_margin = _tol(cfg, "margin", 1e-5)
    rec = pde.evolve(g0, pcfg)
    pde.write_record_csv(out / "pde_record.csv", rec)
    summary = {"kind": "pde_run", "dt": rec.dt, "steps": len(rec.times) - 1, "t_final": rec.times[-1],
               "tolerances": {"shat_drop": tol_drop, "rho": tol_rho, "margin": tol_margin}}
    checks = []
    if rec.shat_inf:
        v = pde.shat_monitor(rec, tol_drop)
        summary["shat"] = {"initial": v.series[0], "final": v.series[-1], "worst_drop": v.worst_drop,
                           "max_residual": v.max_residual, "monotone": v.monotone}
        checks.append(v.monotone)
        pde.write_svg(out / "shat_inf.svg", rec.times, {"inf shat": rec.shat_inf}, title="inf shat")
    if rec.rho_residual:
        summary["rho_residual"] = max(rec.rho_residual)
        checks.append(summary["rho_residual"] <= tol_rho)
    if rec.margins:
        summary["margins"] = {k: {"initial": s[0], "worst": min(s)} for k, s in rec.margins.items()}
        for k, s in rec.margins.items():
            if s[0] >= 0:
                checks.append(min(s) >= -tol_margin)
        pde.write_svg(out / "margins.svg", rec.snapshot_times, rec.margins, title="worst margins")
    summary["pass"] = all(checks)
    return summary


def run_identities(cfg, seed, out):
    m = _metric(cfg, seed)
    backend = _get(cfg, "backend", str, "spectral")
    if backend not in ("spectral", "fd2"):
        raise ConfigError(f"field 'backend': unknown backend {backend!r}")
    tb = _tol(cfg, "bianchi", 1e-7)
    tt = _tol(cfg, "trace", 1e-10)
    tr_ = _tol(cfg, "rho", 1e-8)
    tn = _tol(cfg, "nabla_g", 1e-10)
    G = geo.Geometry(m, backend)
    R = G.ricci
    trace = lambda S: np.einsum("...ij,...ij->...", G.gi, S)
    bianchi = G.bianchi_residuals()
    Dg, Dbg = G.nabla(G.g, "lL")
    res = {
        "bianchi": bianchi,
        "trace_S1_S2": float(np.max(np.abs(trace(R.S1) - trace(R.S2)))),
        "trace_S3_S4": float(np.max(np.abs(trace(R.S3) - trace(R.S4)))),
        "rho": G.lee_rho_check()[3],
        "d_rho": G.d_rho_norm(),
        "nabla_g": float(max(np.max(np.abs(Dg)), np.max(np.abs(Dbg)))),
        "dnablaT_min_eig": float(np.min(np.linalg.eigvalsh(G.dnablaT))),
    }
    rows = [(f"bianchi_{i + 1}", r, tb) for i, r in enumerate(bianchi)]
    rows += [("trace_S1_S2", res["trace_S1_S2"], tt), ("trace_S3_S4", res["trace_S3_S4"], tt),
             ("rho", res["rho"], tr_), ("d_rho", res["d_rho"], tr_), ("nabla_g", res["nabla_g"], tn)]
    write_csv(out / "identities.csv", ["identity", "residual", "tolerance"], rows)
    ok = all(r <= t for _, r, t in rows) and res["dnablaT_min_eig"] >= -1e-11
    return {"kind": "verify_identities", "backend": backend, "residuals": res,
            "tolerances": {"bianchi": tb, "trace": tt, "rho": tr_, "nabla_g": tn}, "pass": ok}


COMMANDS = {
    "certify": run_certify,
    "ode-run": run_ode,
    "pde-run": run_pde,
    "verify-identities": run_identities,
}


def build_parser():
    p = argparse.ArgumentParser(prog="hcflab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON config file")
        s.add_argument("--seed", type=int, default=0, help="random seed (u64)")
        s.add_argument("--out", default="out", help="output directory")
        s.add_argument("--quiet", action="store_true", help="only report errors")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s")
    if not 0 <= args.seed < 2**64:
        log.error("--seed must be an unsigned 64-bit integer")
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        cfg = load_config(args.config)
        out.mkdir(parents=True, exist_ok=True)
        summary = COMMANDS[args.command](cfg, args.seed, out)
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except (geo.MetricError, pde.NumericalBlowup, FloatingPointError, np.linalg.LinAlgError,
            cn.BracketError, al.NonHermitianError) as e:
        log.error("numerical failure: %s", e)
        write_json(out / "summary.json", {"kind": args.command, "error": str(e), "pass": False})
        return EXIT_NUMERIC
    summary["seed"] = args.seed
    write_json(out / "summary.json", summary)
    log.info("%s: %s", args.command, "pass" if summary["pass"] else "FAIL")
    for key in ("worst_margin", "rho_residual"):
        if key in summary and isinstance(summary[key], float) and math.isfinite(summary[key]):
            log.info("  %s = %.3e", key, summary[key])
    return EXIT_OK if summary["pass"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
