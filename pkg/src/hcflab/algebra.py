"""Pointwise algebra of Hermitian forms on End(V).

An algebraic curvature tensor is stored as an ``(N, N)`` complex Hermitian
matrix ``H`` with ``N = n**2``.  Rows and columns are indexed by the basis
elements ``E_(k,i) = e_k (x) eps^i`` of ``End(C^n)`` (single entry 1 at row
``k``, column ``i``) using the flat index ``A = k*n + i``.  The tensor is

    Omega = sum_{A,B} H[A, B] E_A (x) conj(E_B),

so that ``H[(k,i), (l,j)] = Omega_{i jbar}^{lbar k}``.  An endomorphism
``u`` is an ``(n, n)`` array with ``u[a, b] = u^a_b`` (row = output).

All functions accept leading batch dimensions on ``H`` (and on ``g`` where a
metric is taken) so that grid fields can be processed in one call.
"""

from __future__ import annotations

import numpy as np

HERMITIAN_SNAP = 1e-13
HERMITIAN_REJECT = 1e-9


class NonHermitianError(ValueError):
    """Raised when a curvature operator is too far from Hermitian."""


class DimensionError(ValueError):
    pass


def _dim(N):
    n = int(round(np.sqrt(N)))
    if n * n != N:
        raise DimensionError(f"operator size {N} is not a perfect square")
    return n


def operator_dim(H):
    """Complex dimension ``n`` of V for an operator of shape (..., n**2, n**2)."""
    H = np.asarray(H)
    if H.ndim < 2 or H.shape[-1] != H.shape[-2]:
        raise DimensionError(f"expected square operator, got shape {H.shape}")
    return _dim(H.shape[-1])


def dagger(X):
    return np.conj(np.swapaxes(X, -1, -2))


def hermitian_defect(H):
    """Largest entrywise deviation from Hermiticity, relative to max(1, |H|)."""
    H = np.asarray(H)
    if H.size == 0:
        return 0.0
    scale = max(1.0, float(np.max(np.abs(H))))
    return float(np.max(np.abs(H - dagger(H)))) / scale


def _sym(H):
    return 0.5 * (H + dagger(H))


def hermitize(H, *, what="operator"):
    """Absorb roundoff-level anti-Hermitian parts; reject real defects."""
    H = np.asarray(H, dtype=complex)
    defect = hermitian_defect(H)
    if defect > HERMITIAN_REJECT:
        raise NonHermitianError(f"{what} is not Hermitian (defect {defect:.3e})")
    if defect > HERMITIAN_SNAP:
        H = 0.5 * (H + dagger(H))
    return H


# ---------------------------------------------------------------------------
# basis and endomorphisms


def basis_index(k, i, n):
    """Flat index of ``E_(k,i)``."""
    return k * n + i


def basis_element(k, i, n):
    E = np.zeros((n, n), dtype=complex)
    E[k, i] = 1.0
    return E


def coefficients(u):
    """Coordinates of ``u`` in the basis ``E_A`` (row-major flattening)."""
    u = np.asarray(u)
    return u.reshape(u.shape[:-2] + (-1,))


def from_coefficients(c):
    c = np.asarray(c)
    n = _dim(c.shape[-1])
    return c.reshape(c.shape[:-1] + (n, n))


def pairing_vector(u):
    """``x_A = tr(E_A u)``, i.e. ``x_(k,i) = u[i, k]``."""
    u = np.asarray(u)
    return coefficients(np.swapaxes(u, -1, -2))


def trace_pairing(u, v):
    """``<u, v>_tr = tr(u v)``."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape[-2:] != v.shape[-2:]:
        raise DimensionError(f"shape mismatch {u.shape} vs {v.shape}")
    return np.einsum("...ab,...ba->...", u, v)


def commutator(a, b):
    return a @ b - b @ a


def identity_endo(n):
    return np.eye(n, dtype=complex)


def identity_operator(n):
    """The tensor ``Id (x) conj(Id)``; pairs with ``u`` to ``|tr u|^2``."""
    t = coefficients(np.eye(n, dtype=complex))
    return np.outer(t, t.conj())


# ---------------------------------------------------------------------------
# pairings


def pairing(H, a, b):
    """Sesquilinear extension ``<Omega, a (x) conj(b)>_tr``."""
    H = np.asarray(H)
    xa = pairing_vector(a)
    xb = pairing_vector(b)
    if H.shape[-1] != xa.shape[-1] or H.shape[-1] != xb.shape[-1]:
        raise DimensionError("operator and endomorphism dimensions differ")
    return np.einsum("...a,...ab,...b->...", xa, H, np.conj(xb))


def evaluate(H, u):
    """``<Omega, u (x) conj(u)>_tr`` as a real number (or real array)."""
    H = np.asarray(H)
    if hermitian_defect(H) > HERMITIAN_REJECT:
        raise NonHermitianError("evaluate() needs a Hermitian operator")
    return np.real(pairing(H, u, u))


# ---------------------------------------------------------------------------
# index raising


def inverse_metric(g):
    """``ginv[i, j] = g^{i jbar}`` with ``g^{i jbar} g_{k jbar} = delta^i_k``."""
    g = np.asarray(g)
    try:
        inv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular metric") from exc
    return np.swapaxes(inv, -1, -2)


def _check_metric(g):
    g = np.asarray(g, dtype=complex)
    if np.any(~np.isfinite(g)):
        raise np.linalg.LinAlgError("metric has non-finite entries")
    cond = np.linalg.cond(g)
    if np.any(cond > 1e14):
        raise np.linalg.LinAlgError("singular metric")
    return g


def from_indexed(omega4, g=None):
    """Raise the last two indices of ``Omega_{i jbar k lbar}``.

    ``Omega_{i jbar}^{lbar k} = Omega_{i jbar m nbar} g^{m lbar} g^{k nbar}``;
    the result is returned as the ``(n**2, n**2)`` operator matrix.
    """
    omega4 = np.asarray(omega4, dtype=complex)
    n = omega4.shape[-1]
    if g is None:
        up = omega4  # [i, j, l, k] = Omega_{i jbar l kbar}
    else:
        ginv = inverse_metric(_check_metric(g))
        up = np.einsum("...ijmn,...ml,...kn->...ijlk", omega4, ginv, ginv)
    H = np.einsum("...ijlk->...kilj", up)
    return H.reshape(H.shape[:-4] + (n * n, n * n))


def to_indexed(H, g=None):
    """Inverse of :func:`from_indexed`."""
    H = np.asarray(H, dtype=complex)
    n = operator_dim(H)
    H4 = H.reshape(H.shape[:-2] + (n, n, n, n))  # [k, i, l, j]
    up = np.einsum("...kilj->...ijlk", H4)
    if g is None:
        return up
    g = _check_metric(g)
    return np.einsum("...ijlk,...ml,...kn->...ijmn", up, g, g)


# ---------------------------------------------------------------------------
# quadratic operations


def metric_kernel(g):
    """Matrix ``K[(s,n),(p,m)] = g_{p sbar} g^{m nbar}`` with ``Omega^2 = H K H``."""
    g = np.asarray(g, dtype=complex)
    n = g.shape[-1]
    ginv = inverse_metric(g)
    K = np.einsum("...ps,...mn->...snpm", g, ginv)
    return K.reshape(K.shape[:-4] + (n * n, n * n))


def square_coord(H, g=None):
    """``(Omega^2)_{i jbar}^{lbar k} = g^{m nbar} g_{p sbar} Omega_{i nbar}^{sbar k} Omega_{m jbar}^{lbar p}``."""
    H = hermitize(H, what="Omega")
    n = operator_dim(H)
    H4 = H.reshape(H.shape[:-2] + (n,) * 4)  # [k, i, l, j]
    if g is None:
        g = np.broadcast_to(np.eye(n, dtype=complex), H.shape[:-2] + (n, n))
    g = _check_metric(g)
    ginv = inverse_metric(g)
    out = np.einsum("...mn,...ps,...kisn,...pmlj->...kilj", ginv, g, H4, H4)
    return _sym(out.reshape(H.shape))


def unitary_frame_factor(g):
    """Lower-triangular ``L`` with ``metric_kernel(g) = L L^*``."""
    g = _check_metric(g)
    a = np.linalg.cholesky(np.conj(g))
    b = np.linalg.cholesky(np.linalg.inv(g))
    n = g.shape[-1]
    L = np.einsum("...sp,...nm->...snpm", a, b)
    return L.reshape(L.shape[:-4] + (n * n, n * n))


def _spectral_map(H, fn):
    w, V = np.linalg.eigh(H)
    return np.einsum("...ab,...b,...cb->...ac", V, fn(w), V.conj())


def square_spectral(H, g=None):
    """Spectral square of the self-adjoint operator attached to ``Omega``.

    For a non-identity metric the operator is moved to a unitary frame with
    the Cholesky factor of the induced inner product, squared there, and
    moved back.
    """
    H = hermitize(H, what="Omega")
    if g is None:
        return _sym(_spectral_map(H, np.square))
    L = unitary_frame_factor(g)
    Hu = hermitize(dagger(L) @ H @ L)
    S = _spectral_map(Hu, np.square)
    Linv = np.linalg.inv(L)
    return _sym(dagger(Linv) @ S @ Linv)


def sharp(P, Q):
    """Bilinear ``#`` product: ``(a (x) conj b) # (c (x) conj d) = [a, c] (x) conj([b, d])``."""
    P = np.asarray(P, dtype=complex)
    Q = np.asarray(Q, dtype=complex)
    if P.shape[-2:] != Q.shape[-2:]:
        raise DimensionError(f"shape mismatch {P.shape} vs {Q.shape}")
    n = operator_dim(P)
    P4 = P.reshape(P.shape[:-2] + (n,) * 4)
    Q4 = Q.reshape(Q.shape[:-2] + (n,) * 4)
    out = (
        np.einsum("...kilj,...iajb->...kalb", P4, Q4)
        + np.einsum("...kilj,...ckdl->...cidj", P4, Q4)
        - np.einsum("...kilj,...iadl->...kadj", P4, Q4)
        - np.einsum("...kilj,...ckjb->...cilb", P4, Q4)
    )
    shape = np.broadcast_shapes(P.shape, Q.shape)
    return out.reshape(shape)


def sharp_square(H):
    """``Omega^# = 1/2 Omega # Omega`` from the coordinate formula."""
    H = hermitize(H, what="Omega")
    n = operator_dim(H)
    H4 = H.reshape(H.shape[:-2] + (n,) * 4)  # [k, i, l, j]
    out = np.einsum("...kpln,...pinj->...kilj", H4, H4) - np.einsum(
        "...kpnj,...piln->...kilj", H4, H4
    )
    return _sym(out.reshape(H.shape))


def ad_matrix(v):
    """Matrix of ``x -> [v, x]`` acting on basis coefficients."""
    v = np.asarray(v, dtype=complex)
    n = v.shape[-1]
    eye = np.eye(n)
    L = np.einsum("...ab,cd->...acbd", v, eye) - np.einsum("ab,...dc->...acbd", eye, v)
    return L.reshape(v.shape[:-2] + (n * n, n * n))


def ad_action(v, H):
    """``ad_v`` extended to ``a (x) conj b -> [v,a] (x) conj b + a (x) conj [v,b]``."""
    H = np.asarray(H, dtype=complex)
    L = ad_matrix(v)
    if L.shape[-1] != H.shape[-1]:
        raise DimensionError("endomorphism and operator dimensions differ")
    return _sym(L @ H + H @ dagger(L))


def gram(endos, n=None):
    """``A A^* = sum_i a_i (x) conj(a_i)``."""
    endos = [np.asarray(a, dtype=complex) for a in endos]
    if not endos:
        if n is None:
            raise ValueError("gram() of an empty list needs the dimension n")
        return np.zeros((n * n, n * n), dtype=complex)
    C = np.stack([coefficients(a) for a in endos], axis=-1)
    return C @ dagger(C)


def rank1_endo(xi, eta, g=None):
    """``u^i_k = xi^i g_{k sbar} conj(eta^s)``; pairs with Omega to Omega(xi, xibar, eta, etabar)."""
    xi = np.asarray(xi, dtype=complex)
    eta = np.asarray(eta, dtype=complex)
    lowered = np.conj(eta) if g is None else np.asarray(g) @ np.conj(eta)
    return np.einsum("...i,...k->...ik", xi, lowered)


def griffiths_value(omega4, xi, eta):
    """Direct contraction ``Omega_{i jbar k lbar} xi^i conj(xi^j) eta^k conj(eta^l)``."""
    val = np.einsum(
        "...ijkl,...i,...j,...k,...l->...",
        omega4,
        xi,
        np.conj(xi),
        eta,
        np.conj(eta),
    )
    return np.real(val)


def conjugate_operator(H, P):
    """Simultaneous ``Ad_P`` on both tensor slots: ``a (x) conj b -> PaP^-1 (x) conj(PbP^-1)``."""
    P = np.asarray(P, dtype=complex)
    Pinv = np.linalg.inv(P)
    M = np.kron(P, Pinv.T)  # coefficients of P X P^-1
    return _sym(M @ H @ dagger(M))


def conjugate_endo(u, P):
    P = np.asarray(P, dtype=complex)
    return P @ u @ np.linalg.inv(P)


def random_hermitian(n, rng, scale=1.0):
    N = n * n
    X = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    return scale * 0.5 * (X + X.conj().T) / np.sqrt(N)


def random_psd(n, rng, rank=None, scale=1.0):
    N = n * n
    r = N if rank is None else rank
    C = rng.standard_normal((N, r)) + 1j * rng.standard_normal((N, r))
    return scale * (C @ C.conj().T) / N


def random_endo(n, rng, scale=1.0):
    return scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))


def random_metric(n, rng, spread=0.5):
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return np.eye(n) + spread * (X @ X.conj().T) / n


def operator_norm(H):
    return float(np.linalg.norm(np.asarray(H), ord=2)) if np.asarray(H).ndim == 2 else float(
        np.max(np.linalg.norm(np.asarray(H), ord=2, axis=(-2, -1)))
    )
