"""Brute-force references shared by several test modules."""

import itertools

import numpy as np
from scipy.optimize import minimize

from hcflab import algebra as al


def _xi(a, b):
    return np.stack([np.cos(a) + 0j, np.exp(1j * b) * np.sin(a)], axis=-1)


def rank_one_values(H, params):
    """``<H, u u*>`` and ``|tr u|^2`` for ``u = xi eta^*`` on a (..., 4) angle array."""
    xi = _xi(params[..., 0], params[..., 1])
    eta = _xi(params[..., 2], params[..., 3])
    u = np.einsum("...i,...k->...ik", xi, np.conj(eta))
    x = al.pairing_vector(u)
    val = np.real(np.einsum("...a,ab,...b->...", x, H, np.conj(x)))
    tr = np.abs(np.einsum("...ii->...", u)) ** 2
    return val, tr


def grid_rank_one(H, objective="value", m=20, keep=6):
    """Dense grid over CP^1 x CP^1 followed by Nelder-Mead refinement."""
    a = np.linspace(0, np.pi / 2, m)
    b = np.linspace(0, 2 * np.pi, 2 * m, endpoint=False)
    A, B, C, D = np.meshgrid(a, b, a, b, indexing="ij")
    P = np.stack([A, B, C, D], axis=-1).reshape(-1, 4)

    def f(p):
        val, tr = rank_one_values(H, p)
        if objective == "value":
            return val
        return np.where(tr > 1e-3, val / np.maximum(tr, 1e-300), np.inf)

    vals = f(P)
    order = np.argsort(vals)[:keep]
    best = np.inf
    for p0 in P[order]:
        res = minimize(lambda p: float(f(p[None])[0]), p0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
        best = min(best, res.fun)
    return best


def eig_sharp_oracle(H):
    """``1/2 H # H`` from the eigenbasis: sum over pairs of ``l_a l_b [v_a, v_b]`` Grams."""
    n = al.operator_dim(H)
    w, V = np.linalg.eigh(H)
    out = np.zeros_like(H)
    for a, b in itertools.combinations(range(len(w)), 2):
        c = al.commutator(al.from_coefficients(V[:, a]), al.from_coefficients(V[:, b]))
        out += w[a] * w[b] * al.gram([c], n)
    return out


def structure_constants(n):
    """``K[A, C] = coefficients([E_A, E_C])`` over the matrix-unit basis."""
    N = n * n
    Es = [al.from_coefficients(np.eye(N, dtype=complex)[A]) for A in range(N)]
    K = np.zeros((N, N, N), dtype=complex)
    for A in range(N):
        for C in range(N):
            K[A, C] = al.coefficients(al.commutator(Es[A], Es[C]))
    return K


def basis_sharp(P, Q, K=None):
    """``sum P_AB Q_CD [E_A, E_C] (x) conj([E_B, E_D])`` through structure constants."""
    K = structure_constants(al.operator_dim(P)) if K is None else K
    return np.einsum("ab,cd,acx,bdy->xy", P, Q, K, K.conj(), optimize=True)
