"""Hermitian geometry on flat complex tori.

Coordinates are ``z_j = x_j + i y_j`` with real axes ordered
``(x_1, y_1, ..., x_n, y_n)`` and ``d_j = (d_x - i d_y) / 2``.

Grid fields are numpy arrays whose first ``2n`` axes are spatial and the
rest are tensor slots.  A spatial axis may have length 1, meaning the field
is constant along it; derivatives along such an axis are exactly zero and
broadcasting does the rest.  This keeps metrics that depend on few
coordinates cheap on fine grids.

Metric ``g[..., i, j] = g_{i jbar}``; inverse ``gi[..., i, j] = g^{i jbar}``.
Christoffel symbols ``Gam[..., k, i, j] = Gamma^k_{ij} = g^{k lbar} d_i g_{j lbar}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import algebra as al

PD_FLOOR = 1e-8


class MetricError(ValueError):
    pass


# ---------------------------------------------------------------------------
# chart and derivatives


@dataclass(frozen=True)
class TorusChart:
    n: int
    grid: tuple
    periods: tuple

    def __post_init__(self):
        if len(self.grid) != 2 * self.n or len(self.periods) != 2 * self.n:
            raise ValueError("need 2n grid sizes and periods")
        for N in self.grid:
            if N < 4 or N % 2:
                raise ValueError(f"grid sizes must be even and >= 4, got {N}")
        if any(p <= 0 for p in self.periods):
            raise ValueError("periods must be positive")

    @classmethod
    def uniform(cls, n, N, period=1.0):
        return cls(n, (N,) * (2 * n), (float(period),) * (2 * n))

    @property
    def ndim(self):
        return 2 * self.n

    @property
    def spacing(self):
        return tuple(L / N for L, N in zip(self.periods, self.grid))

    def coord(self, axis):
        """Coordinate values along ``axis`` shaped to broadcast over the grid."""
        N, L = self.grid[axis], self.periods[axis]
        shape = [1] * self.ndim
        shape[axis] = N
        return (np.arange(N) * (L / N)).reshape(shape)

    def axis_x(self, j):
        return 2 * j

    def axis_y(self, j):
        return 2 * j + 1

    def wavenumbers(self, axis):
        N, L = self.grid[axis], self.periods[axis]
        k = 2 * np.pi * np.fft.fftfreq(N, d=L / N)
        k[N // 2] = 0.0  # Nyquist mode has no odd derivative
        return k

    def full_shape(self):
        return tuple(self.grid)


def _check_axis_len(f, axis, chart):
    N = f.shape[axis]
    if N not in (1, chart.grid[axis]):
        raise ValueError(f"field axis {axis} has length {N}, chart expects {chart.grid[axis]} or 1")
    return N


def d_real(f, axis, chart, backend="spectral"):
    """Partial derivative along a real axis."""
    f = np.asarray(f)
    N = _check_axis_len(f, axis, chart)
    if N == 1:
        return np.zeros(f.shape, dtype=complex)
    if backend == "spectral":
        k = chart.wavenumbers(axis)
        shape = [1] * f.ndim
        shape[axis] = N
        F = np.fft.fft(f, axis=axis)
        return np.fft.ifft(1j * k.reshape(shape) * F, axis=axis)
    if backend == "fd2":
        h = chart.spacing[axis]
        return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)).astype(complex) / (2 * h)
    raise ValueError(f"unknown derivative backend {backend!r}")


def _add(a, b):
    shape = np.broadcast_shapes(a.shape, b.shape)
    return np.broadcast_to(a, shape) + np.broadcast_to(b, shape)


def d_holo(f, j, chart, backend="spectral"):
    """``d/dz_j``."""
    return 0.5 * _add(d_real(f, chart.axis_x(j), chart, backend), -1j * d_real(f, chart.axis_y(j), chart, backend))


def d_antiholo(f, j, chart, backend="spectral"):
    """``d/dzbar_j``."""
    return 0.5 * _add(d_real(f, chart.axis_x(j), chart, backend), 1j * d_real(f, chart.axis_y(j), chart, backend))


def _stack_directions(parts, nspatial):
    """Stack per-direction derivatives into a new axis right after the spatial ones."""
    shape = np.broadcast_shapes(*(p.shape for p in parts))
    parts = [np.broadcast_to(p, shape) for p in parts]
    return np.stack(parts, axis=nspatial)


def grad_holo(f, chart, backend="spectral"):
    return _stack_directions([d_holo(f, j, chart, backend) for j in range(chart.n)], chart.ndim)


def grad_antiholo(f, chart, backend="spectral"):
    return _stack_directions([d_antiholo(f, j, chart, backend) for j in range(chart.n)], chart.ndim)


def dealias(f, chart):
    """2/3-rule truncation along every resolved spatial axis."""
    f = np.asarray(f)
    out = f
    for axis in range(chart.ndim):
        N = f.shape[axis]
        if N == 1:
            continue
        m = np.abs(np.fft.fftfreq(N, d=1.0 / N))
        keep = (m <= N // 3).reshape([N if a == axis else 1 for a in range(f.ndim)])
        out = np.fft.ifft(np.fft.fft(out, axis=axis) * keep, axis=axis)
    return out if np.iscomplexobj(f) else out.real


def spectral_tail_fraction(f, chart):
    """Energy fraction in the upper half of the spectrum along resolved axes."""
    f = np.asarray(f)
    axes = [a for a in range(chart.ndim) if f.shape[a] > 1]
    if not axes:
        return 0.0
    F = np.abs(np.fft.fftn(f, axes=axes)) ** 2
    mask = np.zeros(F.shape, dtype=bool)
    for a in axes:
        N = f.shape[a]
        m = np.abs(np.fft.fftfreq(N, d=1.0 / N)) > N // 4
        mask |= m.reshape([N if b == a else 1 for b in range(F.ndim)])
    total = F.sum()
    return float(F[mask].sum() / total) if total > 0 else 0.0


# ---------------------------------------------------------------------------
# metric fields


@dataclass
class MetricField:
    chart: TorusChart
    g: np.ndarray

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=complex)
        n = self.chart.n
        if self.g.ndim != self.chart.ndim + 2 or self.g.shape[-2:] != (n, n):
            raise ValueError(f"metric array has shape {self.g.shape}")
        for a in range(self.chart.ndim):
            _check_axis_len(self.g, a, self.chart)

    def validate(self, pd_floor=PD_FLOOR):
        defect = np.max(np.abs(self.g - al.dagger(self.g)))
        if defect > 1e-10 * max(1.0, float(np.max(np.abs(self.g)))):
            raise MetricError(f"metric is not Hermitian (defect {defect:.2e})")
        lam = np.linalg.eigvalsh(0.5 * (self.g + al.dagger(self.g)))[..., 0]
        if np.min(lam) < pd_floor:
            raise MetricError(f"metric not positive definite: min eigenvalue {np.min(lam):.3e}")
        return self

    def min_eigenvalue(self):
        return float(np.min(np.linalg.eigvalsh(self.g)[..., 0]))

    def to_json(self):
        return {
            "n": self.chart.n,
            "grid": list(self.chart.grid),
            "periods": list(self.chart.periods),
            "shape": list(self.g.shape),
            "re": self.g.real.ravel().tolist(),
            "im": self.g.imag.ravel().tolist(),
        }

    @classmethod
    def from_json(cls, obj):
        chart = TorusChart(int(obj["n"]), tuple(obj["grid"]), tuple(obj["periods"]))
        g = (np.asarray(obj["re"]) + 1j * np.asarray(obj["im"])).reshape(obj["shape"])
        return cls(chart, g)

    def save(self, path):
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(json.dumps(self.to_json()))
        else:
            np.savez(path, g=self.g, n=self.chart.n, grid=np.array(self.chart.grid),
                     periods=np.array(self.chart.periods))

    @classmethod
    def load(cls, path):
        path = Path(path)
        if path.suffix == ".json":
            return cls.from_json(json.loads(path.read_text()))
        d = np.load(path)
        chart = TorusChart(int(d["n"]), tuple(int(x) for x in d["grid"]), tuple(float(x) for x in d["periods"]))
        return cls(chart, d["g"])


def _const(chart, M):
    return np.asarray(M, dtype=complex).reshape((1,) * chart.ndim + M.shape)


def preset_flat(chart, g0=None):
    n = chart.n
    g0 = np.eye(n, dtype=complex) if g0 is None else np.asarray(g0, dtype=complex)
    return MetricField(chart, _const(chart, g0))


def preset_kahler_potential(chart, amplitude=0.05, modes=None):
    """``g = I + d dbar phi`` with ``phi = sum amplitude cos(w . X) / |c|^2``.

    Each mode is a tuple of integer wavenumbers per real axis.  The complex
    Hessian is evaluated in closed form: for ``theta = w . X`` one has
    ``d_i dbar_j cos(theta) = -cos(theta) c_i conj(c_j)``,
    ``c_i = (w_{x_i} - i w_{y_i}) / 2``.  Dividing by ``|c|^2`` makes
    ``amplitude`` the sup norm of each mode's contribution to ``g``.
    """
    n = chart.n
    if modes is None:
        modes = [tuple(1 if a in (0, chart.ndim - 1) else 0 for a in range(chart.ndim))]
        if n == 1:
            modes = [(1, 0), (0, 1)]
    g = np.eye(n, dtype=complex).reshape((1,) * chart.ndim + (n, n))
    for mode in modes:
        w = np.array([2 * np.pi * m / L for m, L in zip(mode, chart.periods)])
        theta = sum(w[a] * chart.coord(a) for a in range(chart.ndim) if mode[a] != 0)
        if np.isscalar(theta):
            theta = np.zeros((1,) * chart.ndim)
        c = 0.5 * (w[0::2] - 1j * w[1::2])
        hess = -np.cos(theta)[..., None, None] * np.outer(c, c.conj()) / np.vdot(c, c).real
        g = g + amplitude * hess
    return MetricField(chart, g)


def preset_nonkahler_sin(chart, amplitude=0.1, frequency=1):
    """``g_{1 1bar} = 1 + a sin(2 pi f y_n / L)``, other entries as the identity."""
    n = chart.n
    if n < 2:
        raise ValueError("nonkahler_sin needs n >= 2")
    ax = chart.axis_y(n - 1)
    y = chart.coord(ax)
    g = np.broadcast_to(np.eye(n, dtype=complex), y.shape + (n, n)).copy()
    g[..., 0, 0] = 1 + amplitude * np.sin(2 * np.pi * frequency * y / chart.periods[ax])
    return MetricField(chart, g)


def preset_nonkahler_mixed(chart, amplitude=0.1, coupling=0.05, frequency=1):
    """n = 2 metric varying in ``x_1`` and ``y_2`` with an off-diagonal entry."""
    if chart.n != 2:
        raise ValueError("nonkahler_mixed needs n = 2")
    x1 = 2 * np.pi * frequency * chart.coord(0) / chart.periods[0]
    y2 = 2 * np.pi * frequency * chart.coord(3) / chart.periods[3]
    shape = np.broadcast_shapes(x1.shape, y2.shape)
    g = np.zeros(shape + (2, 2), dtype=complex)
    g[..., 0, 0] = 1 + amplitude * np.sin(y2)
    g[..., 1, 1] = 1 + amplitude * np.cos(x1)
    off = coupling * (np.sin(y2) + 1j * np.cos(x1))
    g[..., 0, 1] = off
    g[..., 1, 0] = np.conj(off)
    return MetricField(chart, g)


def preset_conformal(chart, a=0.3, b=0.2):
    """n = 1, ``g = exp(u)`` with ``u = a sin(2 pi x / L) + b cos(2 pi y / L)``."""
    if chart.n != 1:
        raise ValueError("conformal preset is for n = 1")
    x = 2 * np.pi * chart.coord(0) / chart.periods[0]
    y = 2 * np.pi * chart.coord(1) / chart.periods[1]
    u = a * np.sin(x) + b * np.cos(y)
    return MetricField(chart, np.exp(u)[..., None, None].astype(complex))


PRESETS = {
    "flat": preset_flat,
    "kahler_potential": preset_kahler_potential,
    "nonkahler_sin": preset_nonkahler_sin,
    "nonkahler_mixed": preset_nonkahler_mixed,
    "conformal": preset_conformal,
}


def make_metric(name, chart, **params):
    if name not in PRESETS:
        raise ValueError(f"unknown metric preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name](chart, **params).validate()


# ---------------------------------------------------------------------------
# geometry


@dataclass
class RicciData:
    S1: np.ndarray
    S2: np.ndarray
    S3: np.ndarray
    S4: np.ndarray
    sc: np.ndarray
    shat: np.ndarray


SLOT_TYPES = set("ulUL.")


class Geometry:
    """Chern geometry of a metric field; every derived quantity is cached."""

    def __init__(self, metric: MetricField, backend="spectral", pd_floor=PD_FLOOR):
        metric.validate(pd_floor)
        self.metric = metric
        self.chart = metric.chart
        self.n = metric.chart.n
        self.backend = backend
        self.g = metric.g

    # -- derivatives ------------------------------------------------------
    def dh(self, f):
        """Holomorphic gradient: new direction axis right after the spatial axes."""
        return grad_holo(f, self.chart, self.backend)

    def dbh(self, f):
        return grad_antiholo(f, self.chart, self.backend)

    @cached_property
    def gi(self):
        return al.inverse_metric(self.g)

    @cached_property
    def dg(self):
        """``dg[..., a, j, l] = d_a g_{j lbar}``."""
        return self.dh(self.g)

    @cached_property
    def dbg(self):
        """``dbg[..., a, j, l] = dbar_a g_{j lbar}``."""
        return self.dbh(self.g)

    @cached_property
    def christoffel(self):
        return np.einsum("...kl,...ijl->...kij", self.gi, self.dg)

    @cached_property
    def torsion(self):
        """``T[..., k, i, j] = T^k_{ij}``."""
        G = self.christoffel
        return G - np.swapaxes(G, -1, -2)

    @cached_property
    def torsion_lowered(self):
        """``T_{i j lbar} = T^k_{ij} g_{k lbar}``."""
        return np.einsum("...kij,...kl->...ijl", self.torsion, self.g)

    @cached_property
    def curvature(self):
        """``Omega[..., i, j, k, l] = Omega_{i jbar k lbar}``."""
        ddg = self.dh(self.dbg)  # [..., i, j, k, l] = d_i dbar_j g_{k lbar}
        quad = np.einsum("...ps,...jpl,...iks->...ijkl", self.gi, self.dbg, self.dg)
        return -ddg + quad

    @cached_property
    def operator(self):
        """Curvature as an operator field ``(..., n^2, n^2)`` in coordinates."""
        return al.from_indexed(self.curvature, self.g)

    @cached_property
    def ricci(self):
        O, gi = self.curvature, self.gi
        S1 = np.einsum("...ijmn,...mn->...ij", O, gi)
        S2 = np.einsum("...mnij,...mn->...ij", O, gi)
        S3 = np.einsum("...ab,...ajib->...ij", gi, O)
        S4 = np.einsum("...mn,...inmj->...ij", gi, O)
        sc = np.einsum("...ij,...ij->...", gi, S1)
        shat = np.einsum("...ij,...ij->...", gi, S3)
        return RicciData(S1, S2, S3, S4, sc, shat)

    @cached_property
    def q_term(self):
        Tl, gi = self.torsion_lowered, self.gi
        return 0.5 * np.einsum("...mn,...ps,...mpj,...nsi->...ij", gi, gi, Tl, np.conj(Tl))

    @cached_property
    def hcf_rhs(self):
        out = -self.ricci.S2 - self.q_term
        return 0.5 * (out + al.dagger(out))

    # -- covariant derivatives -------------------------------------------
    def _connection(self, kind):
        """``(C, Cb)`` with ``nabla_d xi^p = d_d xi^p + C[p,d,q] xi^q`` and the same
        for the antiholomorphic direction with ``Cb``."""
        G = self.christoffel
        zero = np.zeros((1,) * self.chart.ndim + (self.n,) * 3, dtype=complex)
        if kind == "chern":
            return G, zero
        if kind == "T":
            # Gamma^p_{dq} - T^p_{dq} = Gamma^p_{qd}
            return np.swapaxes(G, -1, -2), zero
        if kind == "Tsharp":
            Cb = np.einsum("...ps,...ads,...qa->...pdq", self.gi, np.conj(self.torsion), self.g)
            return G, Cb
        raise ValueError(f"unknown connection {kind!r}")

    def nabla(self, F, sig, conn="chern"):
        """Covariant derivative of a field whose trailing axes follow ``sig``.

        ``sig`` letters: ``u`` holomorphic upper, ``l`` holomorphic lower,
        ``U``/``L`` the conjugate (barred) versions, ``.`` inert.  ``conn`` is a
        connection name or one name per slot.  Returns ``(D, Db)`` where the
        new direction index is the first tensor axis.
        """
        if any(ch not in SLOT_TYPES for ch in sig):
            raise ValueError(f"undeclared index signature {sig!r}")
        F = np.asarray(F, dtype=complex)
        sp = self.chart.ndim
        if F.ndim != sp + len(sig):
            raise ValueError(f"field rank {F.ndim - sp} does not match signature {sig!r}")
        conns = [conn] * len(sig) if isinstance(conn, str) else list(conn)
        D = self.dh(F)
        Db = self.dbh(F)
        cache = {}
        letters = "abcdefgh"
        for pos, (ch, kind) in enumerate(zip(sig, conns)):
            if ch == ".":
                continue
            if kind not in cache:
                cache[kind] = self._connection(kind)
            C, Cb = cache[kind]
            slots = letters[: len(sig)]
            src = slots.replace(slots[pos], "q")
            dst = "d" + slots
            dst = dst.replace("d", "z", 1)  # direction label
            p = slots[pos]
            if ch == "u":
                termD = np.einsum(f"...{p}zq,...{src}->...z{slots}", C, F)
                termDb = np.einsum(f"...{p}zq,...{src}->...z{slots}", Cb, F)
            elif ch == "l":
                termD = -np.einsum(f"...qz{p},...{src}->...z{slots}", C, F)
                termDb = -np.einsum(f"...qz{p},...{src}->...z{slots}", Cb, F)
            elif ch == "U":
                termD = np.einsum(f"...{p}zq,...{src}->...z{slots}", np.conj(Cb), F)
                termDb = np.einsum(f"...{p}zq,...{src}->...z{slots}", np.conj(C), F)
            else:  # "L"
                termD = -np.einsum(f"...qz{p},...{src}->...z{slots}", np.conj(Cb), F)
                termDb = -np.einsum(f"...qz{p},...{src}->...z{slots}", np.conj(C), F)
            D = _add(D, termD)
            Db = _add(Db, termDb)
        return D, Db

    def laplacian(self, F, sig, conn="T"):
        """``1/2 g^{p qbar} (nabla_p nabla_qbar + nabla_qbar nabla_p) F``.

        The inner derivative index is treated as an inert label, i.e. the
        derivatives are taken along the coordinate fields, whose constant
        combinations give a unitary holomorphic frame at each point.
        """
        conns = [conn] * len(sig) if isinstance(conn, str) else list(conn)
        D, Db = self.nabla(F, sig, conns)
        DDb, _ = self.nabla(Db, "." + sig, ["chern"] + conns)  # [p, q, ...] = nabla_p nabla_qbar
        _, DbD = self.nabla(D, "." + sig, ["chern"] + conns)  # [q, p, ...] = nabla_qbar nabla_p
        gi = self.gi
        extra = "abcdefgh"[: len(sig)]
        return 0.5 * (
            np.einsum(f"...pq,...pq{extra}->...{extra}", gi, DDb)
            + np.einsum(f"...pq,...qp{extra}->...{extra}", gi, DbD)
        )

    def scalar_laplacian(self, f):
        """``g^{p qbar} d_p dbar_q f``."""
        return np.einsum("...pq,...pq->...", self.gi, self.dh(self.dbh(f)))

    # -- torsion derivatives and identities -------------------------------
    @cached_property
    def nabla_torsion(self):
        """``(DT, DbT)`` with ``DT[..., i, k, m, p] = nabla_i T^k_{mp}``."""
        return self.nabla(self.torsion, "ull")

    @cached_property
    def div_torsion(self):
        """``(div T)_{jk} = nabla_i T^i_{jk}``."""
        return np.einsum("...iijk->...jk", self.nabla_torsion[0])

    @cached_property
    def dnablaT(self):
        """``D(nabla T)`` as an operator field ``(..., n^2, n^2)``."""
        DT = self.nabla_torsion[0]  # [i, k, m, p]
        gi = self.gi
        out = 0.5 * np.einsum("...mn,...ps,...ikmp,...jlns->...kilj", gi, gi, DT, np.conj(DT))
        n = self.n
        return out.reshape(out.shape[:-4] + (n * n, n * n))

    @cached_property
    def v_endo(self):
        """``V[b, a] = v_a^b = -1/2 S4_{a sbar} g^{b sbar}``."""
        return -0.5 * np.einsum("...as,...bs->...ba", self.ricci.S4, self.gi)

    def bianchi_residuals(self):
        """Sup norms of the five Bianchi identities (left minus right)."""
        O = self.curvature
        Tl = self.torsion_lowered
        T = self.torsion
        # 1: Omega_{i j k l} = Omega_{k j i l} + nabla_jbar T_{k i lbar}
        _, DbTl = self.nabla(Tl, "llL")  # [j, k, i, l]
        r1 = O - np.einsum("...kjil->...ijkl", O) - np.einsum("...jkil->...ijkl", DbTl)
        # 2: Omega_{i j k l} = Omega_{i l k j} + nabla_i T_{lbar jbar k}
        Tbar = np.conj(Tl)  # [l, j, k] = T_{lbar jbar k}
        DTbar, _ = self.nabla(Tbar, "LLl")  # [i, l, j, k]
        r2 = O - np.einsum("...ilkj->...ijkl", O) - np.einsum("...iljk->...ijkl", DTbar)
        DO, DbO = self.nabla(O, "lLlL")  # [m, i, j, k, l]
        # 3: nabla_m Omega_{ijkl} = nabla_i Omega_{mjkl} + T^p_{im} Omega_{pjkl}
        r3 = DO - np.einsum("...imjkl->...mijkl", DO) - np.einsum("...pim,...pjkl->...mijkl", T, O)
        # 4: nabla_nbar Omega_{ijkl} = nabla_jbar Omega_{inkl} + conj(T^s_{jn}) Omega_{iskl}
        r4 = DbO - np.einsum("...jinkl->...nijkl", DbO) - np.einsum("...sjn,...iskl->...nijkl", np.conj(T), O)
        # 5: cyclic sum of nabla T against quadratic torsion
        DT = self.nabla_torsion[0]  # [i, l, j, k] = nabla_i T^l_{jk}
        lhs = (
            np.einsum("...iljk->...ijkl", DT)
            + np.einsum("...klij->...ijkl", DT)
            + np.einsum("...jlki->...ijkl", DT)
        )
        rhs = (
            np.einsum("...pij,...lkp->...ijkl", T, T)
            + np.einsum("...pjk,...lip->...ijkl", T, T)
            + np.einsum("...pki,...ljp->...ijkl", T, T)
        )
        r5 = lhs - rhs
        return [float(np.max(np.abs(r))) for r in (r1, r2, r3, r4, r5)]

    # -- forms --------------------------------------------------------------
    @cached_property
    def lee_alpha(self):
        """``alpha_k`` with ``alpha = i T^p_{kp} dz^k``."""
        return 1j * np.einsum("...pkp->...k", self.torsion)

    def d_one_form(self, a):
        """``d`` of a (1,0)-form ``a_k dz^k``.

        Two-forms are stored as ``(B, C)`` meaning
        ``1/2 B_{jk} dz^j ^ dz^k + C_{k s} dz^k ^ dzbar^s``.
        """
        Da = self.dh(a)  # [i, k] = d_i a_k
        B = Da - np.swapaxes(Da, -1, -2)
        C = -np.swapaxes(self.dbh(a), -1, -2)  # C_{k s} = -dbar_s a_k
        return B, C

    def lee_rho_check(self):
        """Return ``(alpha, rho, rhoT, residual)`` for ``rho - rhoT - d alpha``."""
        R = self.ricci
        zeros = np.zeros(R.S1.shape, dtype=complex)
        rho = (zeros, 1j * R.S1)
        rhoT = (1j * self.div_torsion, 1j * R.S3)
        B, C = self.d_one_form(self.lee_alpha)
        res = max(
            float(np.max(np.abs(_add(rho[0] - rhoT[0], -B)))),
            float(np.max(np.abs(_add(rho[1] - rhoT[1], -C)))),
        )
        return self.lee_alpha, rho, rhoT, res

    def d_rho_norm(self):
        """Sup norm of ``d rho`` for ``rho = i S1_{k s} dz^k ^ dzbar^s``."""
        C = 1j * self.ricci.S1
        DC = self.dh(C)  # [i, k, s]
        DbC = self.dbh(C)  # [r, k, s]
        a = DC - np.swapaxes(DC, -3, -2)
        b = DbC - np.einsum("...rks->...skr", DbC)
        return max(float(np.max(np.abs(a))), float(np.max(np.abs(b))))

    # -- norms used by the scalar evolution identity ----------------------
    def s3_norm_sq(self):
        S = self.ricci.S3
        return np.real(np.einsum("...il,...kj,...ij,...lk->...", self.gi, self.gi, S, np.conj(S)))

    def div_torsion_norm_sq(self):
        V = self.div_torsion
        return np.real(np.einsum("...ja,...kb,...jk,...ab->...", self.gi, self.gi, V, np.conj(V)))

    def shat_rhs(self):
        """``Delta shat + |S3|^2 + 1/2 |div T|^2``."""
        shat = self.ricci.shat
        return np.real(self.scalar_laplacian(shat)) + self.s3_norm_sq() + 0.5 * self.div_torsion_norm_sq()

    # -- evolution of the curvature operator ---------------------------------
    @cached_property
    def raised_curvature(self):
        """``R[..., i, j, l, k] = Omega_{i jbar}^{lbar k}``."""
        gi = self.gi
        return np.einsum("...ijmn,...ml,...kn->...ijlk", self.curvature, gi, gi)

    def curvature_rhs_terms(self):
        """The five terms of the clean evolution equation as operator fields."""
        n = self.n
        R = self.raised_curvature
        lap = self.laplacian(R, "lLUu", "T")  # [i, j, l, k]
        lap = np.einsum("...ijlk->...kilj", lap).reshape(lap.shape[:-4] + (n * n, n * n))
        H = self.operator
        return {
            "laplacian": lap,
            "square": al.square_coord(H, self.g),
            "sharp": al.sharp_square(H),
            "dnablaT": self.dnablaT,
            # with e_b (x) eps^a stored at row b, column a the drift enters
            # through the commutator [u, v], i.e. ad_{-v}
            "ad": al.ad_action(-self.v_endo, H),
        }

    def curvature_rhs(self):
        terms = self.curvature_rhs_terms()
        shape = np.broadcast_shapes(*(t.shape for t in terms.values()))
        total = np.zeros(shape, dtype=complex)
        for t in terms.values():
            total = total + t
        return total
