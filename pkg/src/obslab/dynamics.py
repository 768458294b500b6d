"""Plant, observer and output-predictor right-hand sides.

The sampled-data observer is the triple

    x' = f(x, u)                                   (plant)
    z' = f(z, u) + g(z, w, u) (w - h(z))            (observer)
    w' = dh(z) f(z, u) - K(z, w, u) (w - h(z))      (output predictor)

with ``w`` reset to the fresh measurement at every sampling instant.  The
predictor gain ``K`` selects the flavour of sampled-data observer: zero-order
hold, zero-order hold with an exponentially decaying gain, the pure
inter-sample predictor, or a constant ``-q I``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "PlantModel",
    "LinearData",
    "ObserverSpec",
    "ZOH",
    "ZOHExpGain",
    "InterSamplePredictor",
    "ConstantMinusQ",
    "CustomGain",
    "ZeroInput",
    "ConstantInput",
    "SinusoidInput",
    "TabulatedInput",
    "observer_rhs",
    "predictor_rhs",
    "builtin_oscillator",
    "builtin_linear",
]


def _as_matrix(a, name, shape=None):
    arr = np.atleast_2d(np.asarray(a, dtype=float))
    if arr.ndim != 2:
        raise ConfigurationError(f"{name} must be a matrix, got shape {arr.shape}")
    if shape is not None:
        for got, want in zip(arr.shape, shape):
            if want is not None and got != want:
                raise ConfigurationError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} has non-finite entries")
    return arr


def _as_vector(v, size, name):
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (size,):
        raise ConfigurationError(f"{name} must have length {size}, got shape {np.shape(v)}")
    return arr


# --------------------------------------------------------------------------
# Plant
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearData:
    """Matrices of a linear plant ``x' = Ax + Bu, y = Cx``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


@dataclass(frozen=True)
class PlantModel:
    """Continuous-time plant ``x' = f(x, u)`` with output map ``y = h(x)``.

    ``f`` must be locally Lipschitz in ``x``; this is the caller's obligation
    for user-supplied models and is not checked.  ``grad_h`` is the analytic
    Jacobian of ``h`` (p x n).

    ``linear`` is set for models built by :func:`builtin_linear` and lets the
    simulator assemble a single block matrix instead of calling back into
    Python maps at every stage.
    """

    n: int
    m: int
    p: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    grad_h: Callable[[np.ndarray], np.ndarray]
    linear: Optional[LinearData] = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError(f"state dimension n must be a positive integer, got {self.n}")
        if int(self.m) != self.m or self.m < 0:
            raise ConfigurationError(f"input dimension m must be a non-negative integer, got {self.m}")
        if int(self.p) != self.p or self.p < 1:
            raise ConfigurationError(f"output dimension p must be a positive integer, got {self.p}")

    def check_state(self, x, name="state"):
        return _as_vector(x, self.n, name)

    def check_input(self, u, name="input"):
        return _as_vector(u, self.m, name)

    def check_output(self, y, name="output"):
        return _as_vector(y, self.p, name)


# --------------------------------------------------------------------------
# Predictor gains
# --------------------------------------------------------------------------

class PredictorGain:
    """Base class for the predictor gain ``K(z, w, u)`` (a p x p matrix)."""

    def matrix(self, dh, gz, z, w, u):
        """Evaluate K given ``dh = grad_h(z)`` (p x n) and ``gz = g(z, w, u)`` (n x p)."""
        raise NotImplementedError

    def constant(self, C, R):
        """Return K as a constant matrix when ``grad_h = C`` and ``g = R`` are constant.

        ``None`` means K genuinely depends on its arguments.
        """
        return None


@dataclass(frozen=True)
class ZOH(PredictorGain):
    """Zero-order hold of the innovation: ``K = -grad_h(z) g(z, w, u)``."""

    def matrix(self, dh, gz, z, w, u):
        return -(dh @ gz)

    def constant(self, C, R):
        return -(C @ R)


@dataclass(frozen=True)
class ZOHExpGain(PredictorGain):
    """Zero-order hold with gain decaying as ``exp(-eta (t - t_k))``."""

    eta: float

    def __post_init__(self):
        if not np.isfinite(self.eta) or self.eta < 0:
            raise ConfigurationError(f"eta must be a non-negative finite number, got {self.eta}")

    def matrix(self, dh, gz, z, w, u):
        k = -(dh @ gz)
        return k + self.eta * np.eye(k.shape[0])

    def constant(self, C, R):
        k = -(C @ R)
        return k + self.eta * np.eye(k.shape[0])


@dataclass(frozen=True)
class InterSamplePredictor(PredictorGain):
    """Open-loop inter-sample output predictor, ``K = 0``."""

    def matrix(self, dh, gz, z, w, u):
        return np.zeros((dh.shape[0], dh.shape[0]))

    def constant(self, C, R):
        return np.zeros((C.shape[0], C.shape[0]))


@dataclass(frozen=True)
class ConstantMinusQ(PredictorGain):
    """Constant gain ``K = -q I``; the output error then grows at most like ``exp(q t)``."""

    q: float

    def __post_init__(self):
        if not np.isfinite(self.q):
            raise ConfigurationError(f"q must be finite, got {self.q}")

    def matrix(self, dh, gz, z, w, u):
        return -self.q * np.eye(dh.shape[0])

    def constant(self, C, R):
        return -self.q * np.eye(C.shape[0])


@dataclass(frozen=True)
class CustomGain(PredictorGain):
    """User map ``(z, w, u) -> K`` returning a p x p matrix."""

    fn: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

    def matrix(self, dh, gz, z, w, u):
        k = np.asarray(self.fn(z, w, u), dtype=float)
        p = dh.shape[0]
        if k.shape != (p, p):
            raise ConfigurationError(f"custom predictor gain returned shape {k.shape}, expected {(p, p)}")
        return k


# --------------------------------------------------------------------------
# Observer
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ObserverSpec:
    """Innovation gain ``g(z, w, u)`` (n x p) and predictor gain ``K``.

    ``R`` is recorded when ``g`` is the constant matrix R.
    """

    g: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    K: PredictorGain
    R: Optional[np.ndarray] = field(default=None, compare=False)

    @classmethod
    def constant(cls, R, K):
        R = _as_matrix(R, "R")
        R.setflags(write=False)
        return cls(g=lambda z, w, u: R, K=K, R=R)

    def with_gain(self, K):
        return replace(self, K=K)


def _check_gain_shape(gz, n, p):
    gz = np.asarray(gz, dtype=float)
    if gz.shape != (n, p):
        raise ConfigurationError(f"innovation gain g returned shape {gz.shape}, expected {(n, p)}")
    return gz


def observer_rhs(model, spec, z, w, u):
    """Observer vector field ``f(z, u) + g(z, w, u) (w - h(z))``."""
    z = model.check_state(z, "z")
    w = model.check_output(w, "w")
    u = model.check_input(u, "u")
    gz = _check_gain_shape(spec.g(z, w, u), model.n, model.p)
    return np.asarray(model.f(z, u), dtype=float) + gz @ (w - np.asarray(model.h(z), dtype=float))


def predictor_rhs(model, spec, z, w, u):
    """Output-predictor vector field ``grad_h(z) f(z, u) - K(z, w, u) (w - h(z))``."""
    z = model.check_state(z, "z")
    w = model.check_output(w, "w")
    u = model.check_input(u, "u")
    dh = np.asarray(model.grad_h(z), dtype=float)
    if dh.shape != (model.p, model.n):
        raise ConfigurationError(f"grad_h returned shape {dh.shape}, expected {(model.p, model.n)}")
    gz = _check_gain_shape(spec.g(z, w, u), model.n, model.p)
    k = spec.K.matrix(dh, gz, z, w, u)
    return dh @ np.asarray(model.f(z, u), dtype=float) - k @ (w - np.asarray(model.h(z), dtype=float))


# --------------------------------------------------------------------------
# Inputs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ZeroInput:
    m: int = 1

    def __call__(self, t):
        return np.zeros(self.m)


@dataclass(frozen=True)
class ConstantInput:
    value: tuple

    def __post_init__(self):
        object.__setattr__(self, "value", tuple(float(v) for v in np.atleast_1d(self.value)))

    @property
    def m(self):
        return len(self.value)

    def __call__(self, t):
        return np.array(self.value)


@dataclass(frozen=True)
class SinusoidInput:
    """``u(t) = amplitude * sin(frequency * t + phase)``, frequency in rad/time."""

    amplitude: tuple
    frequency: float
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "amplitude", tuple(float(v) for v in np.atleast_1d(self.amplitude)))

    @property
    def m(self):
        return len(self.amplitude)

    def __call__(self, t):
        return np.array(self.amplitude) * np.sin(self.frequency * t + self.phase)


@dataclass(frozen=True)
class TabulatedInput:
    """Piecewise-constant input; ``values[i]`` holds on ``[breakpoints[i], breakpoints[i+1])``.

    The first value is also used before the first breakpoint and the last
    value beyond the final one.
    """

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float).reshape(-1)
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if bp.size == 0 or vals.shape[0] != bp.size:
            raise ConfigurationError("tabulated input needs one value row per breakpoint")
        if np.any(np.diff(bp) <= 0):
            raise ConfigurationError("tabulated input breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", tuple(bp))
        object.__setattr__(self, "values", tuple(map(tuple, vals)))

    @property
    def m(self):
        return len(self.values[0])

    def __call__(self, t):
        i = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return np.array(self.values[max(i, 0)])


# --------------------------------------------------------------------------
# Builtin models
# --------------------------------------------------------------------------

def builtin_linear(A, B, C, R, K=None):
    """Linear plant ``x' = Ax + Bu, y = Cx`` with constant innovation gain R.

    Returns ``(PlantModel, ObserverSpec)``.  The predictor gain defaults to
    the inter-sample predictor.
    """
    A = _as_matrix(A, "A")
    n = A.shape[0]
    A = _as_matrix(A, "A", (n, n))
    B = np.asarray(B, dtype=float)
    if B.size == 0:
        B = np.zeros((n, 0))
    else:
        # a flat B is a single input column
        B = _as_matrix(B[:, None] if B.ndim == 1 else B, "B", (n, None))
    C = _as_matrix(C, "C", (None, n))
    p = C.shape[0]
    R = _as_matrix(R, "R", (n, p))
    for arr in (A, B, C, R):
        arr.setflags(write=False)

    model = PlantModel(
        n=n,
        m=B.shape[1],
        p=p,
        f=lambda x, u: A @ x + B @ u,
        h=lambda x: C @ x,
        grad_h=lambda x: C,
        linear=LinearData(A, B, C),
    )
    spec = ObserverSpec.constant(R, K if K is not None else InterSamplePredictor())
    return model, spec


OSCILLATOR_A = ((0.0, 1.0), (-1.0, 0.0))
OSCILLATOR_B = ((0.0,), (1.0,))
OSCILLATOR_C = ((1.0, 0.0),)
OSCILLATOR_R = ((2.0,), (1.0,))


def builtin_oscillator(q=0.8):
    """Harmonic oscillator ``x1' = x2, x2' = -x1 + u, y = x1`` with R = [2; 1].

    The predictor gain is ``ConstantMinusQ(q)``.
    """
    return builtin_linear(OSCILLATOR_A, OSCILLATOR_B, OSCILLATOR_C, OSCILLATOR_R, K=ConstantMinusQ(q))
