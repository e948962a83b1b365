"""Hermitian curvature flow  dg/dt = -S2 - Q  on torus charts, with monitors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import algebra as al
from . import cones as cn
from . import geometry as geo
from .io import write_csv

C_H = 0.2
MONITORS = {"shat_inf", "cone_margins", "rho_check", "consistency"}


class PositivityLoss(geo.MetricError):
    pass


class NumericalBlowup(RuntimeError):
    pass


@dataclass
class PdeConfig:
    dt: float | None = None
    t_end: float | None = None
    steps: int | None = None
    time_integrator: str = "rk4"
    monitors: tuple = ("shat_inf",)
    cones: tuple = ()
    record_every: int = 1
    c_h: float = C_H
    dealias: bool = True
    backend: str = "spectral"
    pd_floor: float = geo.PD_FLOOR
    blowup_factor: float = 1e6

    def __post_init__(self):
        if self.time_integrator not in ("rk4", "euler"):
            raise ValueError(f"unknown time integrator {self.time_integrator!r}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end is not None and not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.t_end is None and self.steps is None:
            raise ValueError("give t_end or steps")
        bad = set(self.monitors) - MONITORS
        if bad:
            raise ValueError(f"unknown monitors {sorted(bad)}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if not self.c_h > 0:
            raise ValueError("c_h must be positive")


@dataclass
class FlowRecord:
    times: list = field(default_factory=list)  # every step
    snapshot_times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    shat_inf: list = field(default_factory=list)  # every step
    shat_residual: list = field(default_factory=list)  # interior steps, centred
    margins: dict = field(default_factory=dict)  # cone label -> series at snapshots
    rho_residual: list = field(default_factory=list)  # at snapshots
    dt: float = 0.0
    chart: object = None


def hcf_rhs(metric: geo.MetricField, backend="spectral"):
    """``-S2 - Q`` as a Hermitian field shaped like the metric."""
    return geo.Geometry(metric, backend).hcf_rhs


def stability_cap(metric: geo.MetricField, c_h=C_H):
    """Largest step allowed for explicit stepping.

    ``c_h * min(h^2 lam_min(g), 1 / |Omega|)`` with ``h`` the smallest grid
    spacing along axes the metric resolves, ``lam_min`` the smallest metric
    eigenvalue and ``|Omega|`` the largest curvature entry.
    """
    chart = metric.chart
    hs = [chart.spacing[a] for a in range(chart.ndim) if metric.g.shape[a] > 1]
    if not hs:
        return math.inf
    h = min(hs)
    lam = metric.min_eigenvalue()
    curv = float(np.max(np.abs(geo.Geometry(metric).curvature)))
    react = 1.0 / curv if curv > 0 else math.inf
    return c_h * min(h * h * lam, react)


def _rhs(g, chart, cfg):
    G = geo.Geometry(geo.MetricField(chart, g), cfg.backend, cfg.pd_floor)
    r = G.hcf_rhs
    if cfg.dealias and cfg.backend == "spectral":
        r = geo.dealias(r, chart)
        r = 0.5 * (r + al.dagger(r))
    return r, G


def _check(g, chart, cfg, scale, t):
    if not np.all(np.isfinite(g)) or float(np.max(np.abs(g))) > cfg.blowup_factor * scale:
        raise NumericalBlowup(f"metric norm exploded at t = {t:.6g}; reduce dt")
    lam = float(np.min(np.linalg.eigvalsh(g)[..., 0]))
    if lam < cfg.pd_floor:
        raise PositivityLoss(f"metric lost positivity at t = {t:.6g} (min eigenvalue {lam:.3e})")


def step(g, chart, dt, cfg):
    """One explicit step; returns ``(g_new, Geometry of g)``."""
    k1, G = _rhs(g, chart, cfg)
    if cfg.time_integrator == "euler":
        out = g + dt * k1
    else:
        k2, _ = _rhs(g + dt / 2 * k1, chart, cfg)
        k3, _ = _rhs(g + dt / 2 * k2, chart, cfg)
        k4, _ = _rhs(g + dt * k3, chart, cfg)
        out = g + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return 0.5 * (out + al.dagger(out)), G


def resolve_steps(metric, cfg):
    """``(dt, steps)``; a metric with no resolved axis has no step limit."""
    cap = stability_cap(metric, cfg.c_h)
    if cfg.dt is not None and cfg.dt > cap * (1 + 1e-12):
        raise ValueError(f"dt = {cfg.dt:.3e} exceeds the stability cap {cap:.3e}")
    dt = cfg.dt
    if dt is None:
        if math.isfinite(cap):
            dt = cap
        elif cfg.t_end is not None:
            dt = cfg.t_end / (cfg.steps or 1)
        else:
            dt = 1e-3
    if cfg.steps is not None:
        return dt, cfg.steps
    n = max(1, int(math.ceil(cfg.t_end / dt - 1e-9)))
    return cfg.t_end / n, n


def evolve(g0: geo.MetricField, cfg: PdeConfig):
    """Integrate the flow from ``g0``; monitors follow ``cfg.monitors``."""
    g0.validate(cfg.pd_floor)
    chart = g0.chart
    dt, nsteps = resolve_steps(g0, cfg)
    rec = FlowRecord(dt=dt, chart=chart)
    for cone in cfg.cones:
        rec.margins[cone.label] = []
    scale = max(1.0, float(np.max(np.abs(g0.g))))
    want = set(cfg.monitors)
    g = g0.g.copy()
    hist = []  # (shat, shat_rhs) of the last two steps

    for k in range(nsteps + 1):
        t = k * dt
        G = geo.Geometry(geo.MetricField(chart, g), cfg.backend, cfg.pd_floor)
        rec.times.append(t)
        if "shat_inf" in want:
            shat = np.real(G.ricci.shat)
            rec.shat_inf.append(float(np.min(shat)))
            if len(hist) == 2:
                # centred difference at the previous step
                d = (shat - hist[0][0]) / (2 * dt) - hist[1][1]
                rec.shat_residual.append(float(np.max(np.abs(d))))
            hist = (hist + [(shat, G.shat_rhs())])[-2:]
        if k % cfg.record_every == 0 or k == nsteps:
            rec.snapshot_times.append(t)
            rec.snapshots.append(g.copy())
            if "rho_check" in want:
                rec.rho_residual.append(G.lee_rho_check()[3])
            for cone in cfg.cones:
                rec.margins[cone.label].append(worst_margin(G, cone))
        if k == nsteps:
            break
        g, _ = step(g, chart, dt, cfg)
        _check(g, chart, cfg, scale, t + dt)
    return rec


def worst_margin(G: geo.Geometry, cone, restarts=16, seed=0):
    """Minimum pointwise margin of the curvature in the unitary frame."""
    m, _ = cn.margin_field(G.operator, cone, g=G.g, restarts=restarts, seed=seed)
    return float(np.min(m))


def curvature_rhs_clear(metric: geo.MetricField, backend="spectral"):
    """``Delta^T Omega + Omega^2 + Omega^# + D(nabla T) + ad_v Omega`` in coordinates."""
    return geo.Geometry(metric, backend).curvature_rhs()


def consistency_defect(g0: geo.MetricField, dt, cfg: PdeConfig | None = None):
    """Sup norm of the centred time derivative of the curvature operator
    after one step minus ``curvature_rhs_clear`` evaluated there."""
    cfg = cfg or PdeConfig(steps=2)
    chart = g0.chart
    states = [g0.g]
    for _ in range(2):
        states.append(step(states[-1], chart, dt, cfg)[0])
    ops = [geo.Geometry(geo.MetricField(chart, s), cfg.backend).operator for s in states]
    fd = (ops[2] - ops[0]) / (2 * dt)
    ref = curvature_rhs_clear(geo.MetricField(chart, states[1]), cfg.backend)
    return float(np.max(np.abs(fd - ref)))


@dataclass
class ShatVerdict:
    series: list
    worst_drop: float
    monotone: bool
    max_residual: float


def shat_monitor(rec: FlowRecord, tol=1e-6):
    s = rec.shat_inf
    drops = [b - a for a, b in zip(s[:-1], s[1:])]
    worst = min(drops) if drops else 0.0
    return ShatVerdict(
        series=list(s),
        worst_drop=worst,
        monotone=worst >= -tol,
        max_residual=max(rec.shat_residual) if rec.shat_residual else 0.0,
    )


def pointwise_cone_monitor(rec: FlowRecord, cones, restarts=16, seed=0):
    """Worst margin per cone at every snapshot."""
    out = {}
    for cone in cones:
        series = []
        for g in rec.snapshots:
            G = geo.Geometry(geo.MetricField(rec.chart, g))
            series.append(worst_margin(G, cone, restarts, seed))
        out[cone.label] = series
    return out


def constructed_griffiths_start(chart, seed=0, spread=0.5):
    """Griffiths-nonnegative initial metric for a torus chart.

    On a compact torus every Griffiths-nonnegative Hermitian metric is
    constant: the first Chern-Ricci form ``-i d dbar log det g`` would be
    nonnegative with zero integral against any constant metric, so
    ``log det g`` is harmonic, hence constant, ``S1 = 0`` and then
    nonnegativity forces the curvature to vanish; a Chern-flat metric on the
    torus lifts to ``A^* A`` with ``A`` a bounded entire matrix function.
    The construction therefore returns a random constant, non-diagonal
    metric.
    """
    rng = np.random.default_rng(seed)
    return geo.preset_flat(chart, al.random_metric(chart.n, rng, spread))


# ---------------------------------------------------------------------------
# export


def record_rows(rec: FlowRecord):
    rows = []
    for t, v in zip(rec.times, rec.shat_inf):
        rows.append((t, "shat_inf", v))
    for t, v in zip(rec.times[1:-1], rec.shat_residual):
        rows.append((t, "shat_residual", v))
    for t, v in zip(rec.snapshot_times, rec.rho_residual):
        rows.append((t, "rho_residual", v))
    for label, series in rec.margins.items():
        for t, v in zip(rec.snapshot_times, series):
            rows.append((t, f"margin:{label}", v))
    return rows


def write_record_csv(path, rec: FlowRecord):
    write_csv(path, ["t", "monitor", "value"], record_rows(rec))


def write_svg(path, xs, series: dict, title=""):
    """Plain line chart of one or more series against ``xs``."""
    W, H, pad = 640, 400, 50
    vals = [v for s in series.values() for v in s if math.isfinite(v)]
    if not xs or not vals:
        lo, hi, x0, x1 = 0.0, 1.0, 0.0, 1.0
    else:
        lo, hi = min(vals), max(vals)
        x0, x1 = min(xs), max(xs)
    if hi - lo < 1e-300:
        lo, hi = lo - 1, hi + 1
    if x1 - x0 < 1e-300:
        x1 = x0 + 1

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (W - 2 * pad)

    def py(y):
        return H - pad - (y - lo) / (hi - lo) * (H - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle">{title}</text>',
        f'<text x="5" y="{pad}">{hi:.3g}</text>',
        f'<text x="5" y="{H - pad}">{lo:.3g}</text>',
    ]
    for i, (name, s) in enumerate(series.items()):
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, s) if math.isfinite(y))
        col = colors[i % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{col}" points="{pts}"/>')
        parts.append(f'<text x="{W - pad}" y="{pad + 15 * i}" fill="{col}" text-anchor="end">{name}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
