"""Certified sampling bounds and stability constants.

Two certificate flavours are supported:

* :class:`IOSCertificate` -- scalar constants ``(omega, gamma, L, q)`` of an
  input-to-output stability estimate for a general observer.  The Lyapunov-like
  functions behind them are the user's responsibility; only the constants
  enter the computations here.
* :class:`LinearCertificate` -- matrices ``(C, R, P)`` and constants
  ``(omega, L, q)`` for a linear output map with a quadratic Lyapunov function.
  These give closed-form maximum allowable sampling periods.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigurationError, MASPError
from .linalg import _check_symmetric, generalized_symmetric_eig, small_symmetric_eig
from .simulation import fmt, write_csv

# strict inequalities are enforced with this margin
SIGMA_MARGIN = 1e-9
SIGMA_TOL = 1e-9


def exp_integral(a, T):
    """``int_0^T exp(a s) ds``, with a series near the removable singularity at ``a = 0``."""
    if T < 0:
        raise ConfigurationError(f"T must be non-negative, got {T}")
    if T == 0:
        return 0.0
    if abs(a) > 1e-12 * max(1.0, 1.0 / T):
        return math.expm1(a * T) / a
    aT = a * T
    return T * (1.0 + aT / 2.0 + aT * aT / 6.0)


# --------------------------------------------------------------------------
# Certificates
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IOSCertificate:
    omega: float
    gamma: float
    L: float
    q: float

    def __post_init__(self):
        if not (math.isfinite(self.omega) and self.omega > 0):
            raise ConfigurationError(f"omega must be positive, got {self.omega}")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise ConfigurationError(f"gamma must be non-negative, got {self.gamma}")
        if not (math.isfinite(self.L) and self.L >= 0):
            raise ConfigurationError(f"L must be non-negative, got {self.L}")
        if not math.isfinite(self.q):
            raise ConfigurationError(f"q must be finite, got {self.q}")


@dataclass(frozen=True, eq=False)
class LinearCertificate:
    """Quadratic certificate for ``h(x) = Cx``, ``g = R``, ``K = -q I``.

    ``rPr`` is the induced 2-norm of ``R'PR``; ``c1``/``c2`` are the extreme
    eigenvalues of ``P``.
    """

    C: np.ndarray
    R: np.ndarray
    P: np.ndarray
    omega: float
    L: float
    q: float

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        n = P.shape[0]
        if P.shape != (n, n) or C.shape[1:] != (n,) or R.shape != (n, C.shape[0]):
            raise ConfigurationError(
                f"inconsistent certificate shapes C {C.shape}, R {R.shape}, P {P.shape}"
            )
        if not np.any(R):
            raise ConfigurationError("R must be non-zero")
        if np.max(np.abs(P - P.T)) > 1e-12:
            raise ConfigurationError("P must be symmetric")
        P = 0.5 * (P + P.T)
        eig = small_symmetric_eig(P)
        if not eig[0] > 0:
            raise ConfigurationError("P must be positive definite")
        if not (math.isfinite(self.omega) and self.omega > 0):
            raise ConfigurationError(f"omega must be positive, got {self.omega}")
        if not (math.isfinite(self.L) and self.L > 0):
            raise ConfigurationError(f"L must be positive, got {self.L}")
        if not math.isfinite(self.q):
            raise ConfigurationError(f"q must be finite, got {self.q}")
        rpr = small_symmetric_eig(R.T @ P @ R)
        rpr = float(max(abs(rpr[0]), abs(rpr[-1])))
        if not (math.isfinite(rpr) and rpr > 0):
            raise ConfigurationError("|R'PR| must be finite and positive")
        for name, value in (("C", C), ("R", R), ("P", P)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "rPr", rpr)
        object.__setattr__(self, "c1", float(eig[0]))
        object.__setattr__(self, "c2", float(eig[-1]))

    def with_q(self, q, L):
        return LinearCertificate(self.C, self.R, self.P, self.omega, L, q)


@dataclass(frozen=True)
class Theorem1Result:
    sigma: float
    Omega: float
    noise_gain: float


@dataclass(frozen=True)
class Theorem2Constants:
    """Constants of ``|e(t)| <= Omega exp(-sigma t)|e(0)| + gamma sup|xi|``.

    ``T`` is the sampling diameter they were computed for.
    """

    sigma: float
    Omega: float
    gamma: float
    c1: float
    c2: float
    T: float


# --------------------------------------------------------------------------
# Maximum allowable sampling period
# --------------------------------------------------------------------------

def tmax_from_constants(omega, L, rPr, q):
    """Supremum of admissible diameters for constants ``(omega, L, |R'PR|, q)``.

    Returns ``math.inf`` when ``q <= -L sqrt(rPr) / omega``.
    """
    if not (omega > 0 and L > 0 and rPr > 0) or not all(map(math.isfinite, (omega, L, rPr, q))):
        raise ConfigurationError("tmax needs omega, L, rPr > 0 and finite q")
    beta = L * math.sqrt(rPr)
    x = omega * q / beta
    if abs(x) < 1e-8:
        # log1p(x)/q = (omega/beta)(1 - x/2 + x^2/3 - ...), also safe when x underflows
        return omega / beta * (1.0 - x / 2.0 + x * x / 3.0)
    if x <= -1.0:
        return math.inf
    return math.log1p(x) / q


def tmax_linear(cert):
    """Maximum allowable sampling period of a linear certificate (strict supremum)."""
    return tmax_from_constants(cert.omega, cert.L, cert.rPr, cert.q)


def tmax_curve(cert_family, q_grid):
    """``[(q, tmax_linear(cert_family(q))) for q in q_grid]``."""
    q_grid = list(q_grid)
    if not q_grid:
        raise ConfigurationError("q grid is empty")
    return [(float(q), tmax_linear(cert_family(q))) for q in q_grid]


def write_tmax_csv(curve, path):
    write_csv(path, ["q", "T_max"], ([fmt(q), fmt(t)] for q, t in curve))


class QOptimum(NamedTuple):
    q: float
    tmax: float
    unbounded: bool


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def optimize_q(cert_family, bracket, tol=1e-6, points=101):
    """Maximise ``tmax_linear(cert_family(q))`` over ``q`` in ``bracket``.

    A coarse grid locates the best cell, then golden-section search refines
    it to width ``tol``.  If any grid value is infinite the supremum is
    unbounded and the first such ``q`` is returned.
    """
    lo, hi = map(float, bracket)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
        raise ConfigurationError(f"bracket must be finite with lo <= hi, got {bracket}")
    if not tol > 0:
        raise ConfigurationError(f"tol must be positive, got {tol}")

    def value(q):
        return tmax_linear(cert_family(q))

    if lo == hi:
        t = value(lo)
        return QOptimum(lo, t, math.isinf(t))

    grid = np.linspace(lo, hi, points)
    vals = np.array([value(q) for q in grid])
    inf_idx = np.flatnonzero(np.isinf(vals))
    if inf_idx.size:
        return QOptimum(float(grid[inf_idx[0]]), math.inf, True)

    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, points - 1)]
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = value(c), value(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = value(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = value(d)
    best_q, best_t = (c, fc) if fc >= fd else (d, fd)
    if vals[i] > best_t:
        best_q, best_t = grid[i], vals[i]
    return QOptimum(float(best_q), float(best_t), False)


# --------------------------------------------------------------------------
# Example family
# --------------------------------------------------------------------------

OSCILLATOR_P = ((1.0, -0.5), (-0.5, 0.5))


def oscillator_certificate(q):
    """Certificate of the harmonic-oscillator example for predictor constant ``q``.

    ``omega = 1``, ``P = [[1, -1/2], [-1/2, 1/2]]`` and
    ``L(q) = sqrt(2 (1 + (1 - q)^2))``.
    """
    from .dynamics import OSCILLATOR_C, OSCILLATOR_R

    L = math.sqrt(2.0 * (1.0 + (1.0 - q) ** 2))
    return LinearCertificate(np.array(OSCILLATOR_C), np.array(OSCILLATOR_R), np.array(OSCILLATOR_P),
                             1.0, L, float(q))


# --------------------------------------------------------------------------
# Certificate derivation for linear plants
# --------------------------------------------------------------------------

class Certification(NamedTuple):
    omega: float
    L: float
    feasible: bool


def certify_linear(A, C, R, P, q):
    """Best constants ``(omega, L)`` for a linear plant ``x' = Ax + Bu``.

    ``omega`` is the largest rate with ``P(A-RC) + (A-RC)'P <= -2 omega P`` and
    ``L`` the smallest constant with ``|C(A - qI)e|^2 <= L^2 e'Pe``; both are
    extreme generalized eigenvalues against ``P``.  ``feasible`` is false when
    ``omega <= 0``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    R = np.asarray(R, dtype=float)
    R = R[:, None] if R.ndim == 1 else np.atleast_2d(R)
    n = A.shape[0]
    if A.shape != (n, n) or C.shape[1] != n or R.shape != (n, C.shape[0]):
        raise ConfigurationError(f"inconsistent shapes A {A.shape}, C {C.shape}, R {R.shape}")
    if not np.any(R):
        raise ConfigurationError("R must be non-zero")
    P = _check_symmetric(P, "P", tol=1e-12)
    if P.shape != (n, n):
        raise ConfigurationError(f"P has shape {P.shape}, expected {(n, n)}")

    F = A - R @ C
    lyap = P @ F + F.T @ P
    omega = -0.5 * float(generalized_symmetric_eig(0.5 * (lyap + lyap.T), P)[-1])
    G = C @ (A - q * np.eye(n))
    L2 = float(generalized_symmetric_eig(G.T @ G, P)[-1])
    L = math.sqrt(max(L2, 0.0))
    return Certification(omega, L, omega > 0)


def linear_certificate(A, C, R, P, q):
    """:class:`LinearCertificate` from :func:`certify_linear`; raises if infeasible."""
    omega, L, feasible = certify_linear(A, C, R, P, q)
    if not feasible:
        raise ConfigurationError(f"P does not certify a positive decay rate (omega = {omega:.6g})")
    return LinearCertificate(C, R, P, omega, L, q)


def linear_certificate_family(A, C, R, P):
    """Map ``q -> LinearCertificate`` for a fixed plant and Lyapunov matrix."""
    return lambda q: linear_certificate(A, C, R, P, q)


# --------------------------------------------------------------------------
# Stability constants
# --------------------------------------------------------------------------

def _largest_feasible(feasible, hi, tol=SIGMA_TOL):
    """Largest ``s`` in ``(0, hi]`` with ``feasible(s)``, assuming monotonicity and feasible(0)."""
    if feasible(hi):
        return hi
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def theorem1_gain(cert, T):
    """Decay rate, overshoot and noise gain of the sampled observer for diameter ``T``.

    Requires ``2 gamma L int_0^T exp(2 q s) ds < 1``.  The returned ``sigma``
    is the largest value in ``(0, omega]`` keeping
    ``2 gamma L int_0^T exp((2q + sigma) s) ds`` below ``1 - 1e-9``.
    """
    if not (math.isfinite(T) and T >= 0):
        raise ConfigurationError(f"T must be non-negative, got {T}")
    c = 2.0 * cert.gamma * cert.L

    def lhs(sigma):
        return c * exp_integral(2.0 * cert.q + sigma, T)

    lhs0 = lhs(0.0)
    if not lhs0 < 1.0 - SIGMA_MARGIN:
        raise MASPError(f"MASP condition failed: 2*gamma*L*int exp(2qs) ds = {lhs0:.17g} >= 1", lhs0)
    sigma = _largest_feasible(lambda s: lhs(s) < 1.0 - SIGMA_MARGIN, cert.omega)
    Omega = 1.0 / (1.0 - lhs(sigma))
    return Theorem1Result(sigma, Omega, cert.gamma * Omega * math.exp(max(0.0, 2.0 * cert.q * T)))


def decay_condition(cert, T, sigma):
    """Left-hand side ``L^2 |R'PR| / (omega (omega - 2 sigma)) (int_0^T exp((q+sigma)s) ds)^2``."""
    return (cert.L**2 * cert.rPr / (cert.omega * (cert.omega - 2.0 * sigma))
            * exp_integral(cert.q + sigma, T) ** 2)


def theorem2_constants(cert, T, sigma=None):
    """Constants ``(sigma, Omega, gamma)`` of the error estimate for a linear certificate.

    By default ``sigma`` is the largest rate below ``omega/2`` for which the
    decay condition holds with margin 1e-9.  That choice maximises the rate
    but makes ``Omega`` and ``gamma`` very large, since both scale with
    ``1/(1 - sqrt(condition))``; pass an explicit ``sigma`` to trade rate for
    tighter constants.
    """
    if not (math.isfinite(T) and T >= 0):
        raise ConfigurationError(f"T must be non-negative, got {T}")
    tmax = tmax_linear(cert)
    if not T < tmax:
        raise MASPError(f"MASP exceeded: T = {T:.17g} >= T_max = {fmt(tmax)}", T)

    cap = 0.5 * cert.omega - SIGMA_MARGIN

    def ok(s):
        return decay_condition(cert, T, s) < 1.0 - SIGMA_MARGIN

    if sigma is None:
        if not ok(0.0):
            raise MASPError(f"MASP exceeded: T = {T:.17g} is numerically at T_max = {fmt(tmax)}", T)
        sigma = _largest_feasible(ok, cap)
    elif not (0 < sigma < 0.5 * cert.omega and ok(sigma)):
        raise ConfigurationError(f"sigma = {sigma} does not satisfy the decay condition for T = {T}")

    root = math.sqrt(cert.rPr / (cert.omega * (cert.omega - 2.0 * sigma)))
    D = 1.0 / (1.0 - cert.L * root * exp_integral(cert.q + sigma, T))
    Omega = math.sqrt(cert.c2 / cert.c1) * D
    gamma = D * root * math.exp(max(0.0, cert.q * T)) / math.sqrt(cert.c1)
    return Theorem2Constants(sigma, Omega, gamma, cert.c1, cert.c2, float(T))
