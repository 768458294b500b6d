"""Eigenvalues of small symmetric matrices by cyclic Jacobi rotations."""
from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError

MAX_DIM = 32


def _check_symmetric(M, name, tol=1e-10):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigurationError(f"{name} must be square, got shape {M.shape}")
    if M.shape[0] > MAX_DIM:
        raise ConfigurationError(f"{name} is {M.shape[0]}x{M.shape[0]}; at most {MAX_DIM}x{MAX_DIM} supported")
    if not np.all(np.isfinite(M)):
        raise ConfigurationError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if np.max(np.abs(M - M.T), initial=0.0) > tol * scale:
        raise ConfigurationError(f"{name} is not symmetric")
    return M


def small_symmetric_eig(M, *, tol=1e-13, max_sweeps=100):
    """Eigenvalues of a symmetric k x k matrix (k <= 32), ascending.

    Cyclic Jacobi: sweep over all off-diagonal pairs, annihilating each with a
    plane rotation, until the off-diagonal Frobenius norm is at most
    ``tol * ||M||_F``.
    """
    a = _check_symmetric(M, "matrix").copy()
    a = 0.5 * (a + a.T)
    k = a.shape[0]
    norm = np.linalg.norm(a)
    if k <= 1 or norm == 0.0:
        return np.sort(np.diag(a))

    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= tol * norm:
            break
        for p in range(k - 1):
            for q in range(p + 1, k):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # rotation angle from the stable tangent formula
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
    return np.sort(np.diag(a))


def cholesky(P):
    """Lower-triangular G with ``P = G G'``; raises if P is not positive definite."""
    P = _check_symmetric(P, "P")
    n = P.shape[0]
    G = np.zeros_like(P)
    for j in range(n):
        d = P[j, j] - G[j, :j] @ G[j, :j]
        if not d > 0.0:
            raise ConfigurationError("P is not positive definite")
        G[j, j] = math.sqrt(d)
        for i in range(j + 1, n):
            G[i, j] = (P[i, j] - G[i, :j] @ G[j, :j]) / G[j, j]
    return G


def generalized_symmetric_eig(M, P):
    """Eigenvalues of ``M v = lam P v`` for symmetric M and SPD P, ascending.

    Reduced to an ordinary symmetric problem by the congruence
    ``G^{-1} M G^{-T}`` with ``P = G G'``.
    """
    M = _check_symmetric(M, "M")
    G = cholesky(P)
    if G.shape != M.shape:
        raise ConfigurationError(f"M has shape {M.shape} but P has shape {G.shape}")
    X = np.linalg.solve(G, M)
    S = np.linalg.solve(G, X.T).T
    return small_symmetric_eig(0.5 * (S + S.T))
