"""Pointwise curvature ODE  dH/dt = H^2 + H^# + ad_v H + A A*  in a unitary frame."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import algebra as al
from . import cones as cn
from .io import write_csv

WORKERS_ENV = "HCFLAB_WORKERS"


class BlowUp(RuntimeError):
    pass


def _table_lookup(table, t):
    """Piecewise-constant lookup in a list of ``(t_start, value)`` pairs."""
    cur = table[0][1]
    for t0, val in table:
        if t + 1e-15 >= t0:
            cur = val
        else:
            break
    return cur


def _as_source(spec, default):
    if spec is None:
        return lambda t: default
    if callable(spec):
        return spec
    if isinstance(spec, list) and spec and isinstance(spec[0], tuple):
        table = sorted(spec, key=lambda p: p[0])
        return lambda t: _table_lookup(table, t)
    return lambda t: spec


@dataclass
class OdeConfig:
    """Integrator settings.

    ``v`` is an Endo, a callable ``t -> Endo`` or a list of ``(t_start, Endo)``
    pairs (piecewise constant, no continuity enforced); ``A`` likewise with
    lists of Endos.
    """

    v: object = None
    A: object = None
    integrator: str = "rk4"
    dt: float | None = None
    t_end: float = 0.05
    record_every: int = 1
    rtol: float = 1e-10
    atol: float = 1e-12
    blowup_factor: float = 1e8

    def __post_init__(self):
        if self.integrator not in ("rk4", "rk45"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("RK45 tolerances must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    def default_dt(self, H0):
        return 1e-3 / (1.0 + al.operator_norm(H0))


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    blew_up: bool = False
    margins: dict = field(default_factory=dict)
    max_hermitian_drift: float = 0.0


def phi_rhs(H, v=None, A=()):
    """``H^2 + H^# + ad_v H + A A*``."""
    H = al.hermitize(H, what="curvature operator")
    n = al.operator_dim(H)
    out = al.square_coord(H) + al.sharp_square(H)
    if v is not None:
        v = np.asarray(v, dtype=complex)
        if v.shape != (n, n):
            raise al.DimensionError(f"v has shape {v.shape}, expected {(n, n)}")
        out = out + al.ad_action(v, H)
    if A is not None and len(A):
        out = out + al.gram(list(A), n)
    return out


def _raw_rhs(H, v, A):
    # same as phi_rhs without the symmetrization, used to measure drift
    n = al.operator_dim(H)
    out = al.square_coord(H) + al.sharp_square(H)
    if v is not None:
        L = al.ad_matrix(np.asarray(v, dtype=complex))
        out = out + L @ H + H @ al.dagger(L)
    if A is not None and len(A):
        out = out + al.gram(list(A), n)
    return out


def integrate(H0, cfg: OdeConfig):
    """Integrate from ``H0`` to ``cfg.t_end``; returns a :class:`Trajectory`.

    A state with norm above ``blowup_factor * |H0|`` (at least 1) ends the run
    and sets ``blew_up``.
    """
    H0 = al.hermitize(H0, what="initial operator")
    vsrc = _as_source(cfg.v, None)
    Asrc = _as_source(cfg.A, ())
    limit = cfg.blowup_factor * max(1.0, al.operator_norm(H0))
    traj = Trajectory(times=[0.0], states=[H0.copy()])
    if cfg.t_end == 0:
        return traj
    if cfg.integrator == "rk45":
        return _integrate_rk45(H0, cfg, vsrc, Asrc, limit, traj)

    dt = cfg.dt or cfg.default_dt(H0)
    nsteps = max(1, int(math.ceil(cfg.t_end / dt - 1e-9)))
    dt = cfg.t_end / nsteps

    def f(t, H):
        return _raw_rhs(H, vsrc(t), Asrc(t))

    H = H0
    drift = 0.0
    for k in range(nsteps):
        t = k * dt
        k1 = f(t, H)
        k2 = f(t + dt / 2, H + dt / 2 * k1)
        k3 = f(t + dt / 2, H + dt / 2 * k2)
        k4 = f(t + dt, H + dt * k3)
        Hn = H + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        scale = max(1.0, float(np.max(np.abs(Hn)))) if np.all(np.isfinite(Hn)) else math.inf
        if not math.isfinite(scale) or al.operator_norm(Hn) > limit:
            traj.blew_up = True
            break
        drift = max(drift, float(np.max(np.abs(Hn - al.dagger(Hn)))) / scale)
        H = 0.5 * (Hn + al.dagger(Hn))
        if (k + 1) % cfg.record_every == 0 or k + 1 == nsteps:
            traj.times.append((k + 1) * dt)
            traj.states.append(H)
    traj.max_hermitian_drift = drift
    return traj


def _integrate_rk45(H0, cfg, vsrc, Asrc, limit, traj):
    N = H0.shape[-1]

    def pack(H):
        return np.concatenate([H.real.ravel(), H.imag.ravel()])

    def unpack(y):
        return (y[: N * N] + 1j * y[N * N :]).reshape(N, N)

    def f(t, y):
        return pack(_raw_rhs(unpack(y), vsrc(t), Asrc(t)))

    def blow(t, y):
        return limit - np.linalg.norm(unpack(y), 2)

    blow.terminal = True
    n_out = max(2, int(round(cfg.t_end / (cfg.dt or cfg.default_dt(H0)) / cfg.record_every)) + 1)
    t_eval = np.linspace(0.0, cfg.t_end, n_out)
    sol = solve_ivp(f, (0.0, cfg.t_end), pack(H0), method="RK45", rtol=cfg.rtol,
                    atol=cfg.atol, t_eval=t_eval, events=blow)
    if sol.status == -1:
        raise FloatingPointError(f"adaptive integrator failed: {sol.message}")
    traj.blew_up = sol.status == 1
    traj.times, traj.states = [], []
    for t, y in zip(sol.t, sol.y.T):
        H = unpack(y)
        traj.times.append(float(t))
        traj.states.append(0.5 * (H + al.dagger(H)))
    return traj


# ---------------------------------------------------------------------------


def p4_terms(H, u, v=None, A=()):
    """Pairings of ``u u*`` with the four parts of the right-hand side."""
    H = al.hermitize(H)
    n = al.operator_dim(H)
    terms = {
        "square": al.evaluate(al.square_coord(H), u),
        "sharp": al.evaluate(al.sharp_square(H), u),
        "ad": al.evaluate(al.ad_action(v, H), u) if v is not None else 0.0,
        "gram": al.evaluate(al.gram(list(A), n), u) if len(A) else 0.0,
    }
    terms["total"] = sum(terms.values())
    return terms


def p4_check(H, u, v=None, A=(), *, f=None, tol=1e-8):
    """``<phi(H), u u*>`` for a boundary pair; expected to be >= 0.

    Raises ``ValueError`` when ``<H, u u*> != F(u)`` beyond ``tol`` (relative
    to ``|H| |u|^2``), since then ``(H, u)`` is not a contact pair.
    """
    H = al.hermitize(H)
    f = f or cn.Zero()
    defect = al.evaluate(H, u) - float(f(u))
    scale = max(1.0, float(np.max(np.abs(H)))) * max(1.0, float(np.linalg.norm(u)) ** 2)
    if abs(defect) > tol * scale:
        raise ValueError(f"pairing defect {defect:.3e} exceeds tolerance; not a boundary pair")
    return float(al.evaluate(phi_rhs(H, v, A), u))


# ---------------------------------------------------------------------------


@dataclass
class InvarianceReport:
    cone: str
    samples: int
    worst_margin: float
    worst_relative: float
    first_violation: float | None
    blowups: int
    rows: list


def random_drive(n, rng, v_scale=1.0, a_scale=0.5, n_a=2):
    v = al.random_endo(n, rng, scale=v_scale)
    A = [al.random_endo(n, rng, scale=a_scale) for _ in range(n_a)]
    return v, A


def _one_sample(args):
    k, spec, n, cfg, seed, boundary, tol = args
    rng = np.random.default_rng(seed)
    H0, _ = cn.boundary_sample(spec, rng, n)
    if not boundary:
        H0 = H0 + 0.1 * al.random_psd(n, rng)
    v, A = random_drive(n, rng)
    local = OdeConfig(v=v, A=A, integrator=cfg.integrator, dt=cfg.dt, t_end=cfg.t_end,
                      record_every=cfg.record_every, rtol=cfg.rtol, atol=cfg.atol)
    traj = integrate(H0, local)
    scale = max(1.0, al.operator_norm(H0))
    rows, worst, first = [], math.inf, None
    warm = None
    for t, H in zip(traj.times, traj.states):
        rep = cn.margin(H, spec, seed=seed, warm_start=warm)
        warm = rep.minimizer if spec.s.kind in ("rank_one", "rank_m") else None
        rows.append((k, t, rep.margin, al.operator_norm(H)))
        worst = min(worst, rep.margin)
        if first is None and rep.margin < -tol * scale:
            first = t
    return rows, worst, worst / scale, first, traj.blew_up


def invariance_experiment(spec, samples, cfg: OdeConfig, rng, n=2, tol=1e-6, workers=None):
    """Integrate ``samples`` trajectories starting in ``spec`` and track margins.

    Half of the initial operators sit on the boundary, half are pushed inside
    by a small positive operator.  Each trajectory gets a random constant
    ``v`` and ``A``.
    """
    rng = np.random.default_rng(rng)
    seeds = rng.integers(0, 2**31 - 1, size=samples)
    jobs = [(k, spec, n, cfg, int(seeds[k]), k % 2 == 0, tol) for k in range(samples)]
    workers = workers or int(os.environ.get(WORKERS_ENV, "1"))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_one_sample, jobs))
    else:
        results = [_one_sample(j) for j in jobs]
    rows = [r for res in results for r in res[0]]
    first = [res[3] for res in results if res[3] is not None]
    return InvarianceReport(
        cone=spec.label,
        samples=samples,
        worst_margin=min(res[1] for res in results),
        worst_relative=min(res[2] for res in results),
        first_violation=min(first) if first else None,
        blowups=sum(res[4] for res in results),
        rows=rows,
    )


def write_trajectory_csv(path, rows):
    write_csv(path, ["sample_id", "t", "margin", "norm"], rows)
