"""Invariant sets ``C(S, F)`` of curvature operators and their margins.

A cone is the set of Hermitian operators ``H`` with
``<H, s (x) conj s>_tr >= F(s)`` for every ``s`` in an Ad-invariant family
``S``.  :func:`margin` reports the infimum of ``<H, s s*> - F(s)`` over
``S`` (restricted to ``|s|_F = 1`` when ``S`` is scale invariant), together
with a minimizing ``s``.

Margins for ``FullAlgebra`` and the identity families are exact.  Rank
families are handled by alternating Hermitian eigen-steps over the
factorization ``u = X Y^*`` with random restarts; those margins are upper
bounds of the true infimum and are reported as uncertified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import algebra as al

FAMILY_KINDS = (
    "full",
    "rank_one",
    "rank_one_traceless",
    "rank_m",
    "identity",
    "identity_scalings",
    "zero",
)
NICE_KINDS = ("zero", "trace_square", "spectral_abs_sum")


class UnsupportedCone(ValueError):
    pass


@dataclass(frozen=True)
class SFamily:
    """Ad-invariant subset of End(V).

    ``closure`` marks the topological closure (lower ranks and 0 included);
    margins are identical either way, it only affects :meth:`contains`.
    """

    kind: str
    m: int | None = None
    closure: bool = False

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown S family {self.kind!r}")
        if self.kind == "rank_m" and (self.m is None or self.m < 1):
            raise ValueError("rank_m family needs m >= 1")

    @property
    def scale_invariant(self):
        return self.kind != "identity"

    def rank_bound(self, n):
        if self.kind in ("rank_one", "rank_one_traceless"):
            return 1
        if self.kind == "rank_m":
            return min(self.m, n)
        return n

    def contains(self, u, tol=1e-9):
        u = np.asarray(u, dtype=complex)
        n = u.shape[-1]
        scale = max(1.0, float(np.linalg.norm(u)))
        if self.kind == "zero":
            return bool(np.linalg.norm(u) <= tol * scale)
        if self.kind == "full":
            return True
        if self.kind == "identity":
            return bool(np.linalg.norm(u - np.eye(n)) <= tol * scale)
        if self.kind == "identity_scalings":
            lam = np.trace(u).real / n
            return bool(np.linalg.norm(u - lam * np.eye(n)) <= tol * scale)
        rank = numerical_rank(u, tol)
        want = self.rank_bound(n)
        ok = rank <= want if self.closure else rank == want
        if self.kind == "rank_one_traceless":
            ok = ok and abs(np.trace(u)) <= tol * scale
        return bool(ok)

    def to_json(self):
        if self.kind == "rank_m":
            return {"kind": "rank_m", "m": self.m}
        return self.kind

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            if obj.startswith("rank_m:"):
                return cls("rank_m", int(obj.split(":", 1)[1]))
            return cls(_FAMILY_ALIASES.get(obj, obj))
        if isinstance(obj, dict):
            kind = _FAMILY_ALIASES.get(obj.get("kind"), obj.get("kind"))
            return cls(kind, obj.get("m"))
        raise ValueError(f"cannot parse S family from {obj!r}")


_FAMILY_ALIASES = {
    "full_algebra": "full",
    "dual_nakano": "full",
    "griffiths": "rank_one",
    "orthogonal_bisectional": "rank_one_traceless",
    "identity_only": "identity",
    "scalings_of_identity": "identity_scalings",
}


def FullAlgebra():
    return SFamily("full")


def RankOne():
    return SFamily("rank_one")


def RankOneTraceless():
    return SFamily("rank_one_traceless")


def RankM(m):
    return SFamily("rank_m", m)


def IdentityOnly():
    return SFamily("identity")


def ScalingsOfIdentity():
    return SFamily("identity_scalings")


@dataclass(frozen=True)
class NiceFunction:
    """Ad-invariant function on End(V) with a quadratic scaling limit."""

    kind: str = "zero"
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in NICE_KINDS:
            raise ValueError(f"unknown nice function {self.kind!r}")

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        if self.kind == "zero":
            return np.zeros(s.shape[:-2])
        if self.kind == "trace_square":
            return self.a * np.abs(np.trace(s, axis1=-2, axis2=-1)) ** 2 + self.b
        return np.sum(np.abs(np.linalg.eigvals(s)), axis=-1)

    def f_infty(self, s):
        s = np.asarray(s, dtype=complex)
        if self.kind == "trace_square":
            return self.a * np.abs(np.trace(s, axis1=-2, axis2=-1)) ** 2
        return np.zeros(s.shape[:-2])

    def to_json(self):
        if self.kind == "trace_square":
            return {"kind": "trace_square", "a": self.a, "b": self.b}
        return {"kind": self.kind}

    @classmethod
    def from_json(cls, obj):
        if obj is None:
            return cls()
        if isinstance(obj, (int, float)):
            return cls("trace_square", 0.0, float(obj))
        if isinstance(obj, str):
            return cls(obj)
        kind = obj.get("kind", "zero")
        if kind == "constant":
            return cls("trace_square", 0.0, float(obj.get("q", 0.0)))
        return cls(kind, float(obj.get("a", 0.0)), float(obj.get("b", 0.0)))


def Zero():
    return NiceFunction()


def TraceSquare(a, b=0.0):
    return NiceFunction("trace_square", float(a), float(b))


def Constant(q):
    return NiceFunction("trace_square", 0.0, float(q))


def SpectralAbsSum():
    return NiceFunction("spectral_abs_sum")


@dataclass(frozen=True)
class ConeSpec:
    s: SFamily
    f: NiceFunction = field(default_factory=NiceFunction)

    def to_json(self):
        return {"s": self.s.to_json(), "f": self.f.to_json()}

    @classmethod
    def from_json(cls, obj):
        if "s" not in obj:
            raise ValueError("cone spec needs an 's' field")
        return cls(SFamily.from_json(obj["s"]), NiceFunction.from_json(obj.get("f")))

    @property
    def label(self):
        s = self.s.kind if self.s.kind != "rank_m" else f"rank_{self.s.m}"
        if self.f.kind == "zero":
            return s
        if self.f.kind == "trace_square":
            return f"{s}[a={self.f.a:g},b={self.f.b:g}]"
        return f"{s}[{self.f.kind}]"


DUAL_NAKANO = ConeSpec(FullAlgebra())
GRIFFITHS = ConeSpec(RankOne())
ORTHOGONAL_BISECTIONAL = ConeSpec(RankOneTraceless())


def dual_m(m):
    return ConeSpec(RankM(m))


def second_scalar_bound(q):
    return ConeSpec(IdentityOnly(), Constant(q))


@dataclass
class MembershipReport:
    margin: float
    minimizer: np.ndarray | None
    certified: bool
    restarts_used: int = 0
    iterations: int = 0


def numerical_rank(u, tol=1e-9):
    sv = np.linalg.svd(np.asarray(u, dtype=complex), compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > tol * max(1.0, sv[0])))


# ---------------------------------------------------------------------------
# rank-constrained minimization


def _orthonormalize(X):
    Q, R = np.linalg.qr(X)
    return Q, R


def _min_eig(M):
    w, V = np.linalg.eigh(M)
    return w[..., 0], V[..., :, 0]


def _step_Y(H4, X):
    """Minimize over ``Y`` with ``X`` (orthonormal columns) fixed."""
    # y[k,i] = sum_r conj(X[i,r]) Y[k,r]; value = y^H H y
    M = np.einsum("...ir,...kilj,...js->...krls", X, H4, np.conj(X))
    B, n, m = X.shape
    val, y = _min_eig(M.reshape(B, n * m, n * m))
    return val, y.reshape(B, n, m)


def _step_X(H4, Y):
    """Minimize over ``Z = conj(X)`` with ``Y`` (orthonormal columns) fixed."""
    # y[k,i] = sum_r Z[i,r] Y[k,r]
    M = np.einsum("...kr,...kilj,...ls->...irjs", np.conj(Y), H4, Y)
    B, n, m = Y.shape
    val, z = _min_eig(M.reshape(B, n * m, n * m))
    return val, np.conj(z.reshape(B, n, m))


def _endo_from_factors(X, Y):
    return np.einsum("...ir,...kr->...ik", X, np.conj(Y))


def alternating_minimize(
    H,
    m,
    *,
    restarts=32,
    max_iter=200,
    tol=1e-10,
    rng=None,
    warm_start=None,
    polish_iter=2000,
):
    """Minimize ``<H, u u*>`` over ``|u|_F = 1``, ``rank(u) <= m``.

    ``H`` has shape ``(..., N, N)``; all batch entries and restarts are
    iterated together.  Returns ``(values, minimizers, iterations)`` with
    ``values`` of the batch shape and minimizers of shape ``(..., n, n)``.
    """
    H = np.asarray(H, dtype=complex)
    n = al.operator_dim(H)
    batch_shape = H.shape[:-2]
    Hb = H.reshape((-1,) + H.shape[-2:])
    P = Hb.shape[0]
    R = int(restarts)
    rng = np.random.default_rng(rng)
    H4 = np.repeat(Hb, R, axis=0).reshape(P * R, n, n, n, n)  # [k,i,l,j]

    X = rng.standard_normal((P * R, n, m)) + 1j * rng.standard_normal((P * R, n, m))
    Y = rng.standard_normal((P * R, n, m)) + 1j * rng.standard_normal((P * R, n, m))
    if warm_start is not None:
        U = np.asarray(warm_start, dtype=complex).reshape(P, n, n)
        for p in range(P):
            Uu, s, Vh = np.linalg.svd(U[p])
            X[p * R] = Uu[:, :m] * s[:m]
            Y[p * R] = Vh.conj().T[:, :m]
    X, _ = _orthonormalize(X)

    scale = max(1.0, float(np.max(np.abs(Hb))) if Hb.size else 1.0)
    prev = np.full(P * R, np.inf)
    it = 0
    for it in range(1, max_iter + 1):
        _, Y = _step_Y(H4, X)
        Y, Rf = _orthonormalize(Y)
        X = X @ np.swapaxes(np.conj(Rf), -1, -2)
        val, X = _step_X(H4, Y)
        X, Rf = _orthonormalize(X)
        Y = Y @ np.swapaxes(np.conj(Rf), -1, -2)
        if np.all(np.abs(prev - val) <= tol * scale):
            break
        prev = val

    vals = val.reshape(P, R)
    best = np.argmin(vals, axis=1)
    idx = np.arange(P) * R + best
    Xb, Yb, H4b = X[idx], Y[idx], H4[idx]
    U_prev = _endo_from_factors(Xb, Yb)
    best_val = vals[np.arange(P), best]
    # polish the winning restart until the minimizer itself stops moving
    for _ in range(polish_iter):
        _, Yb = _step_Y(H4b, Xb)
        Yb, Rf = _orthonormalize(Yb)
        Xb = Xb @ np.swapaxes(np.conj(Rf), -1, -2)
        best_val, Xb = _step_X(H4b, Yb)
        Xb, Rf = _orthonormalize(Xb)
        Yb = Yb @ np.swapaxes(np.conj(Rf), -1, -2)
        U = _endo_from_factors(Xb, Yb)
        if np.max(_phase_free_distance(U, U_prev)) < 1e-13:
            break
        U_prev = U
    U = _endo_from_factors(Xb, Yb)
    return best_val.reshape(batch_shape), U.reshape(batch_shape + (n, n)), it


def _expm_antihermitian(A):
    w, V = np.linalg.eigh(1j * A)  # iA is Hermitian
    return np.einsum("...ab,...b,...cb->...ac", V, np.exp(-1j * w), np.conj(V))


def _orbit_gradient(H, U):
    """``K = [u, W]`` with ``d/ds f(e^{sA} u e^{-sA}) = 2 Re tr(A K)``."""
    n = U.shape[-1]
    y = np.conj(al.pairing_vector(U))
    W = np.einsum("...ab,...b->...a", H, y).reshape(U.shape[:-2] + (n, n))
    return U @ W - W @ U


def orbit_minimize(H, *, restarts=32, max_iter=2000, tol=1e-13, rng=None, polish=True):
    """Minimize ``<H, u u*>`` over unit trace-free rank-one ``u``.

    That set is the unitary orbit of ``E_(1,2)`` (up to phase), so this runs
    adaptive steepest descent along ``u -> e^A u e^-A`` with ``A``
    anti-Hermitian, followed by a Newton polish of the best restart.
    Batched over ``(..., N, N)`` and restarts.
    """
    H = np.asarray(H, dtype=complex)
    n = al.operator_dim(H)
    batch_shape = H.shape[:-2]
    Hb = H.reshape((-1,) + H.shape[-2:])
    P, R = Hb.shape[0], int(restarts)
    Hr = np.repeat(Hb, R, axis=0)
    rng = np.random.default_rng(rng)
    xi = rng.standard_normal((P * R, n)) + 1j * rng.standard_normal((P * R, n))
    eta = rng.standard_normal((P * R, n)) + 1j * rng.standard_normal((P * R, n))
    xi /= np.linalg.norm(xi, axis=-1, keepdims=True)
    eta -= xi * np.einsum("bi,bi->b", np.conj(xi), eta)[:, None]
    eta /= np.linalg.norm(eta, axis=-1, keepdims=True)
    U = np.einsum("bi,bk->bik", xi, np.conj(eta))

    scale = max(1.0, float(np.max(np.abs(Hb))))
    val = np.real(al.pairing(Hr, U, U))
    step = np.full(P * R, 0.25 / scale)
    stall = np.zeros(P * R, dtype=int)
    it = 0
    for it in range(1, max_iter + 1):
        U, val, step, ok = _orbit_step(Hr, U, val, step)
        stall = np.where(ok, 0, stall + 1)
        if np.all(stall >= 8):
            break
    vals = val.reshape(P, R)
    best = np.argmin(vals, axis=1)
    idx = np.arange(P) * R + best
    Ub, Hbest = U[idx], Hr[idx]
    if polish:
        Ub = np.stack([_newton_polish(Hbest[p], Ub[p], tol * scale) for p in range(P)])
    val = np.real(al.pairing(Hbest, Ub, Ub))
    return val.reshape(batch_shape), Ub.reshape(batch_shape + (n, n)), it


def _antihermitian_basis(n):
    out = []
    for k in range(n):
        B = np.zeros((n, n), dtype=complex)
        B[k, k] = 1j
        out.append(B)
    for k, l in zip(*np.triu_indices(n, 1)):
        B = np.zeros((n, n), dtype=complex)
        B[k, l], B[l, k] = 1.0, -1.0
        out.append(B)
        B = np.zeros((n, n), dtype=complex)
        B[k, l] = B[l, k] = 1j
        out.append(B)
    return np.array(out)


def _newton_polish(H, u, gtol, max_iter=30, h=1e-5):
    """Newton iteration for a critical point of ``f(e^A u e^-A)``, ``A`` anti-Hermitian."""
    n = u.shape[-1]
    basis = _antihermitian_basis(n)

    def moved(u0, c):
        A = np.einsum("a,aij->ij", c, basis)
        G = _expm_antihermitian(A)
        return G @ u0 @ al.dagger(G)

    def grad(u0):
        K = _orbit_gradient(H, u0)
        return 2 * np.real(np.einsum("aij,ji->a", basis, K))

    f0 = al.evaluate(H, u)
    for _ in range(max_iter):
        g0 = grad(u)
        if np.linalg.norm(g0) <= gtol:
            break
        m = len(basis)
        Hess = np.empty((m, m))
        for a in range(m):
            e = np.zeros(m)
            e[a] = h
            Hess[:, a] = (grad(moved(u, e)) - grad(moved(u, -e))) / (2 * h)
        Hess = 0.5 * (Hess + Hess.T)
        step = -np.linalg.lstsq(Hess, g0, rcond=1e-8)[0]
        un = moved(u, step)
        fn = al.evaluate(H, un)
        # a Newton step that climbs means we were not in the basin; stop there
        if fn > f0 + 1e-10 * max(1.0, abs(f0)):
            break
        u, f0 = un, fn
    return u


def _antihermitian_grad(H, U):
    K = _orbit_gradient(H, U)
    return 0.5 * (al.dagger(K) - K)


def _orbit_step(H, U, val, step):
    Agrad = _antihermitian_grad(H, U)
    G = _expm_antihermitian(-Agrad * step[:, None, None])
    Un = G @ U @ al.dagger(G)
    new = np.real(al.pairing(H, Un, Un))
    ok = new < val
    U = np.where(ok[:, None, None], Un, U)
    val = np.where(ok, new, val)
    step = np.where(ok, np.minimum(step * 1.5, 1e6), step * 0.5)
    return U, val, step, ok


def _phase_free_distance(U, V):
    ip = np.einsum("...ij,...ij->...", np.conj(V), U)
    phase = np.where(np.abs(ip) > 0, ip / np.maximum(np.abs(ip), 1e-300), 1.0)
    return np.linalg.norm(U - phase[..., None, None] * V, axis=(-2, -1))


# ---------------------------------------------------------------------------
# margins


def _homogeneous_operator(H, f, n):
    """Operator whose form on the slice |u|=1 is <H,uu*> - F(u) (b handled separately)."""
    if f.kind == "trace_square" and f.a != 0.0:
        return H - f.a * al.identity_operator(n)
    return H


def _check_supported(cone):
    s, f = cone.s, cone.f
    if s.kind in ("identity", "zero"):
        return
    if f.kind == "spectral_abs_sum":
        raise UnsupportedCone(
            f"nice function {f.kind} is not supported on scale-invariant family {s.kind}"
        )


def margin(
    H,
    cone,
    *,
    g=None,
    restarts=32,
    max_iter=200,
    tol=1e-10,
    seed=0,
    warm_start=None,
):
    """Certify membership of ``H`` in ``C(S, F)``.

    If ``g`` is given, ``H`` is the coordinate-frame operator of a metric
    ``g`` and is first moved to a unitary frame; the returned minimizer is
    expressed back in coordinates.
    """
    H = al.hermitize(H, what="curvature operator")
    if H.ndim != 2:
        raise ValueError("margin() takes a single operator; use margin_field() for batches")
    n = al.operator_dim(H)
    _check_supported(cone)
    frame = None
    if g is not None:
        frame = unitary_frame(g)
        H = al.conjugate_operator(H, np.linalg.inv(frame))
    report = _margin_unitary(H, cone, n, restarts, max_iter, tol, seed, warm_start)
    if frame is not None and report.minimizer is not None:
        report.minimizer = al.conjugate_endo(report.minimizer, frame)
    return report


def unitary_frame(g):
    """Columns ``e_a`` with ``g(e_a, conj e_b) = delta_ab`` (from the Cholesky factor)."""
    g = np.asarray(g, dtype=complex)
    C = np.linalg.cholesky(g)
    return np.linalg.inv(np.swapaxes(C, -1, -2))


def to_unitary_frame(H, g):
    """Express coordinate-frame operators (batched) in the Cholesky unitary frame of ``g``."""
    P = unitary_frame(g)
    Pinv = np.linalg.inv(P)
    M = np.einsum("...ab,...dc->...adbc", Pinv, P)
    n = P.shape[-1]
    M = M.reshape(M.shape[:-4] + (n * n, n * n))
    out = M @ H @ al.dagger(M)
    return 0.5 * (out + al.dagger(out))


def _margin_unitary(H, cone, n, restarts, max_iter, tol, seed, warm_start):
    s, f = cone.s, cone.f
    if s.kind == "zero":
        return MembershipReport(0.0 - float(f.f_infty(np.zeros((n, n)))), np.zeros((n, n)), True)
    if s.kind == "identity":
        u = np.eye(n, dtype=complex)
        return MembershipReport(float(al.evaluate(H, u) - f(u)), u, True)

    Hh = _homogeneous_operator(H, f, n)
    extra = -f.b if (f.kind == "trace_square" and f.b > 0) else math.inf

    if s.kind == "identity_scalings":
        u = np.eye(n, dtype=complex) / math.sqrt(n)
        val = float(al.evaluate(Hh, u))
        return MembershipReport(min(val, extra), u, True)

    m = s.rank_bound(n)
    traceless = s.kind == "rank_one_traceless"
    if traceless and n == 1:
        return MembershipReport(min(math.inf, extra), None, True)
    if s.kind == "full" or (m >= n and not traceless) or n == 1:
        w, V = np.linalg.eigh(Hh)
        u = np.conj(al.from_coefficients(V[:, 0])).T  # x(u) = conj(eigvec)
        return MembershipReport(min(float(w[0]), extra), u, True)
    if traceless:
        vals, U, iters = orbit_minimize(Hh, restarts=restarts, rng=seed)
    else:
        vals, U, iters = alternating_minimize(
            Hh, m, restarts=restarts, max_iter=max_iter, tol=tol, rng=seed, warm_start=warm_start
        )
    return MembershipReport(min(float(vals), extra), U, False, restarts, iters)


def margin_field(H, cone, *, g=None, restarts=16, max_iter=200, tol=1e-10, seed=0):
    """Pointwise margins for a batch of operators ``(..., N, N)``.

    Returns ``(margins, certified)`` where ``margins`` has the batch shape.
    """
    H = np.asarray(H, dtype=complex)
    n = al.operator_dim(H)
    _check_supported(cone)
    if g is not None:
        H = to_unitary_frame(H, g)
    H = 0.5 * (H + al.dagger(H))
    s, f = cone.s, cone.f
    batch = H.shape[:-2]
    if s.kind == "zero":
        return np.zeros(batch), True
    if s.kind == "identity":
        u = np.eye(n, dtype=complex)
        return np.real(al.pairing(H, u, u)) - float(f(u)), True
    Hh = _homogeneous_operator(H, f, n)
    extra = -f.b if (f.kind == "trace_square" and f.b > 0) else math.inf
    if s.kind == "identity_scalings":
        u = np.eye(n, dtype=complex) / math.sqrt(n)
        return np.minimum(np.real(al.pairing(Hh, u, u)), extra), True
    m = s.rank_bound(n)
    traceless = s.kind == "rank_one_traceless"
    if traceless and n == 1:
        return np.full(batch, min(math.inf, extra)), True
    if s.kind == "full" or (m >= n and not traceless) or n == 1:
        return np.minimum(np.linalg.eigvalsh(Hh)[..., 0], extra), True
    if traceless:
        vals, _, _ = orbit_minimize(Hh, restarts=restarts, rng=seed, polish=False)
    else:
        vals, _, _ = alternating_minimize(
            Hh, m, restarts=restarts, max_iter=max_iter, tol=tol, rng=seed
        )
    return np.minimum(vals, extra), False


# ---------------------------------------------------------------------------
# monotone quantity mu(S, g)


def traceless_margin(H, s, *, restarts=32, seed=0):
    """Margin of ``H`` over trace-free elements of ``S`` (``F = 0``)."""
    n = al.operator_dim(H)
    if s.kind == "full":
        t = al.coefficients(np.eye(n, dtype=complex)) / math.sqrt(n)
        Q = np.linalg.svd(np.eye(n * n) - np.outer(t, t.conj()))[0][:, : n * n - 1]
        return float(np.linalg.eigvalsh(al.dagger(Q) @ H @ Q)[0]) if n > 1 else math.inf
    if s.kind in ("rank_one", "rank_one_traceless"):
        return margin(H, ConeSpec(RankOneTraceless()), restarts=restarts, seed=seed).margin
    return None


def mu_value(H, s, *, tol=1e-9, restarts=32, seed=0, reach=1e8):
    """``max{mu : H in C(S, mu |tr s|^2)}`` (``-inf``/``+inf`` encoded as floats).

    Found by bisection on the margin of ``C(S, mu |tr s|^2)``, which is
    non-increasing in ``mu``.  The value is ``-inf`` when ``H`` is negative
    somewhere on the trace-free part of ``S``.
    """
    H = al.hermitize(H)
    n = al.operator_dim(H)
    if s.kind in ("identity", "identity_scalings"):
        return float(al.evaluate(H, np.eye(n))) / n**2
    if s.kind in ("zero", "rank_one_traceless"):
        return math.inf
    scale = max(1.0, float(np.max(np.abs(H))))
    thr = -tol * scale

    def m_of(mu):
        cone = ConeSpec(s, TraceSquare(mu, 0.0))
        return margin(H, cone, restarts=restarts, seed=seed).margin

    tm = traceless_margin(H, s, restarts=restarts, seed=seed)
    if tm is not None and tm < thr:
        return -math.inf
    e00 = al.basis_element(0, 0, n)
    hi = float(al.evaluate(H, e00))  # ratio at a trace-one element
    if m_of(hi) >= thr:
        return hi
    step = scale
    while m_of(hi - step) < thr:
        step *= 2.0
        if step > reach * scale:
            return -math.inf
    lo = hi - step
    for _ in range(200):
        if hi - lo <= 1e-12 * max(1.0, abs(lo), abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if m_of(mid) >= thr:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# boundary points


def boundary_at_infinity(s):
    """``d_inf S``: limits of ``lambda_i s_i`` with ``lambda_i -> 0``."""
    if s.kind == "identity":
        return SFamily("zero", closure=True)
    if s.kind == "zero":
        return s
    return SFamily(s.kind, s.m, closure=True)


class BracketError(RuntimeError):
    pass


def boundary_sample(cone, rng, n, scale=1.0, *, restarts=32, seed=0, base=None):
    """Return ``(H, u)`` with ``H`` on the boundary of the cone and ``u`` attaining it.

    ``base`` (default: random positive definite operator) is shifted by
    ``-t Id (x) conj(Id)``; for families where that direction is invisible
    (trace-free ``S``) the shift uses the identity operator of End(V).
    """
    _check_supported(cone)
    rng = np.random.default_rng(rng)
    H0 = al.random_psd(n, rng, scale=scale) + 0.05 * scale * np.eye(n * n) if base is None else np.asarray(base)
    direction = al.identity_operator(n)
    if cone.s.kind == "rank_one_traceless":
        direction = np.eye(n * n, dtype=complex)

    def m_of(t):
        return margin(H0 - t * direction, cone, restarts=restarts, seed=seed).margin

    lo = 0.0
    if m_of(lo) < 0:
        raise BracketError("base operator is not inside the cone")
    hi = scale
    for _ in range(80):
        if m_of(hi) < 0:
            break
        lo = hi
        hi *= 2.0
    else:
        raise BracketError("bisection failed to bracket the boundary")
    tol = 1e-10 * max(1.0, scale)
    for _ in range(200):
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if m_of(mid) >= 0:
            lo = mid
        else:
            hi = mid
    H = H0 - lo * direction
    rep = margin(H, cone, restarts=restarts, seed=seed)
    if abs(rep.margin) > 1e3 * tol:
        raise BracketError(f"boundary margin {rep.margin:.3e} not resolved")
    return H, rep.minimizer


def standard_cones(q=0.5):
    """The five cones exercised by the invariance experiments."""
    return [DUAL_NAKANO, GRIFFITHS, ORTHOGONAL_BISECTIONAL, dual_m(2), second_scalar_bound(q)]
