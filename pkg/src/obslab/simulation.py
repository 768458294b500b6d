"""Hybrid simulation of plant, observer and output predictor under sampling.

Between sampling instants the coupled system ``(x, z, w)`` is integrated by
classical fixed-step RK4 on a mesh containing every sampling time; at each
sampling time ``t_k`` (including ``t_0 = 0``) the predictor is reset to the
noisy measurement ``w(t_k) = h(x(t_k)) + xi(t_k)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import ZeroInput, _check_gain_shape
from .errors import ConfigurationError, SimulationDiverged

DIVERGENCE_THRESHOLD = 1e12


# --------------------------------------------------------------------------
# Sampling schedules
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SamplingSchedule:
    """Strictly increasing sampling times starting at 0, gaps at most ``diameter``."""

    times: tuple
    diameter: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        if not (np.isfinite(self.diameter) and self.diameter > 0):
            raise ConfigurationError(f"schedule diameter must be positive, got {self.diameter}")
        if t.size == 0 or t[0] != 0.0:
            raise ConfigurationError("sampling times must start at t_0 = 0")
        gaps = np.diff(t)
        if np.any(gaps <= 0):
            raise ConfigurationError("sampling times must be strictly increasing")
        # relative slack for gaps built as differences of rounded multiples
        if np.any(gaps > self.diameter * (1 + 1e-12)):
            raise ConfigurationError(f"a sampling gap exceeds the diameter {self.diameter}")
        object.__setattr__(self, "times", tuple(float(v) for v in t))

    @property
    def gaps(self):
        return np.diff(self.times)

    def covers(self, horizon):
        return self.times[-1] >= horizon


def make_schedule(kind, diameter, horizon, min_gap_fraction=1.0, seed=0):
    """Build a schedule covering ``[0, horizon]``.

    ``uniform`` uses gaps of exactly ``diameter``; ``seeded-random`` draws each
    gap uniformly from ``[min_gap_fraction * diameter, diameter]``.  In both
    cases the last time is the first one at or beyond the horizon.
    """
    if not (np.isfinite(diameter) and diameter > 0):
        raise ConfigurationError(f"diameter T must be positive, got {diameter}")
    if not (np.isfinite(horizon) and horizon > 0):
        raise ConfigurationError(f"horizon must be positive, got {horizon}")
    if not 0 < min_gap_fraction <= 1:
        raise ConfigurationError(f"min_gap_fraction must lie in (0, 1], got {min_gap_fraction}")

    if kind == "uniform":
        count = math.ceil(horizon / diameter - 1e-9)
        times = [k * diameter for k in range(count + 1)]
    elif kind in ("seeded-random", "random"):
        rng = np.random.default_rng(seed)
        times = [0.0]
        while times[-1] < horizon:
            times.append(times[-1] + rng.uniform(min_gap_fraction * diameter, diameter))
    else:
        raise ConfigurationError(f"unknown schedule kind {kind!r}")
    return SamplingSchedule(tuple(times), float(diameter))


# --------------------------------------------------------------------------
# Measurement noise
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ZeroNoise:
    def draw(self, count, p):
        return np.zeros((count, p))


@dataclass(frozen=True)
class UniformNoise:
    """Independent uniform noise on ``[-delta, delta]`` per channel, seeded."""

    delta: object
    seed: int = 0

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.delta, dtype=float))
        if np.any(~np.isfinite(d)) or np.any(d < 0):
            raise ConfigurationError(f"noise amplitude must be non-negative, got {self.delta}")
        object.__setattr__(self, "delta", tuple(float(v) for v in d))

    def draw(self, count, p):
        d = np.asarray(self.delta)
        if d.size not in (1, p):
            raise ConfigurationError(f"noise amplitude has {d.size} channels, output has {p}")
        rng = np.random.default_rng(self.seed)
        return rng.uniform(-1.0, 1.0, size=(count, p)) * d


@dataclass(frozen=True)
class TabulatedNoise:
    """Explicit noise values, one row per sampling index."""

    values: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("tabulated noise has non-finite entries")
        object.__setattr__(self, "values", tuple(map(tuple, v)))

    def draw(self, count, p):
        v = np.asarray(self.values, dtype=float).reshape(len(self.values), -1)
        if v.shape[0] < count or v.shape[1] != p:
            raise ConfigurationError(
                f"tabulated noise has shape {v.shape}, need at least {count} rows of {p} channels"
            )
        return v[:count].copy()


# --------------------------------------------------------------------------
# Configuration and results
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    step: float
    horizon: float
    x0: tuple
    z0: tuple

    def __post_init__(self):
        if not (np.isfinite(self.step) and self.step > 0):
            raise ConfigurationError(f"step must be positive, got {self.step}")
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ConfigurationError(f"horizon must be positive, got {self.horizon}")
        for name in ("x0", "z0"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if not np.all(np.isfinite(v)):
                raise ConfigurationError(f"{name} has non-finite entries")
            object.__setattr__(self, name, tuple(float(e) for e in v))


@dataclass
class Trajectory:
    """Sampled solution of the hybrid system.

    At a sampling time ``w`` holds the post-reset value.  ``sample_t``,
    ``y`` and ``xi`` hold the measurement record, one row per sample.
    """

    mesh: np.ndarray
    x: np.ndarray
    z: np.ndarray
    w: np.ndarray
    err_norm: np.ndarray
    sample_t: np.ndarray
    y: np.ndarray
    xi: np.ndarray
    sample_index: np.ndarray  # mesh index of each sampling time

    @property
    def samples(self):
        return list(zip(self.sample_t, self.y, self.xi))

    @property
    def diameter(self):
        """Largest gap between recorded sampling times (0 for a single sample)."""
        return float(np.max(np.diff(self.sample_t), initial=0.0))

    def noise_running_sup(self):
        """``sup_{t_k <= t} |xi(t_k)|`` evaluated at each mesh point."""
        norms = np.linalg.norm(self.xi, axis=1)
        per_sample = np.maximum.accumulate(norms) if norms.size else norms
        # index of the latest sample at or before each mesh point
        idx = np.searchsorted(self.sample_index, np.arange(self.mesh.size), side="right") - 1
        return per_sample[idx]


# --------------------------------------------------------------------------
# Integration
# --------------------------------------------------------------------------

def rk4_step(rhs, t, s, h_step):
    """One classical Runge-Kutta step of ``s' = rhs(t, s)``."""
    if not h_step > 0:
        raise ConfigurationError(f"step must be positive, got {h_step}")
    half = 0.5 * h_step
    k1 = rhs(t, s)
    k2 = rhs(t + half, s + half * k1)
    k3 = rhs(t + half, s + half * k2)
    k4 = rhs(t + h_step, s + h_step * k3)
    out = s + (h_step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise SimulationDiverged(t + h_step)
    return out


def _linear_rhs(model, spec, input_signal):
    """Block-matrix right-hand side when f, h, g and K are all linear/constant."""
    lin = model.linear
    if lin is None or spec.R is None:
        return None
    K = spec.K.constant(lin.C, spec.R)
    if K is None:
        return None
    A, B, C, R = lin.A, lin.B, lin.C, spec.R
    n, p = model.n, model.p
    M = np.zeros((2 * n + p, 2 * n + p))
    M[:n, :n] = A
    M[n:2 * n, n:2 * n] = A - R @ C
    M[n:2 * n, 2 * n:] = R
    M[2 * n:, n:2 * n] = C @ A + K @ C
    M[2 * n:, 2 * n:] = -K
    N = np.vstack([B, B, C @ B])

    if isinstance(input_signal, ZeroInput) or model.m == 0:
        return lambda t, s: M @ s
    return lambda t, s: M @ s + N @ input_signal(t)


def _generic_rhs(model, spec, input_signal):
    n, p = model.n, model.p
    f, h, grad_h, g, K = model.f, model.h, model.grad_h, spec.g, spec.K

    def rhs(t, s):
        x, z, w = s[:n], s[n:2 * n], s[2 * n:]
        u = input_signal(t)
        fz = f(z, u)
        innov = w - h(z)
        dh = grad_h(z)
        gz = _check_gain_shape(g(z, w, u), n, p)
        out = np.empty_like(s)
        out[:n] = f(x, u)
        out[n:2 * n] = fz + gz @ innov
        out[2 * n:] = dh @ fz - K.matrix(dh, gz, z, w, u) @ innov
        return out

    return rhs


def _substeps(gap, step):
    # slack keeps gap/step = 2.9999999999999996 from adding a spurious substep
    return max(1, math.ceil(gap / step - 1e-9))


def simulate(model, spec, sched, noise, input_signal, cfg):
    """Integrate the sampled-data observer over ``[0, cfg.horizon]``.

    Raises
    ------
    SimulationDiverged
        When any state component becomes non-finite or exceeds 1e12 in
        magnitude.  The exception carries the failure time and the trajectory
        recorded up to the last good mesh point.
    """
    n, p = model.n, model.p
    x0 = model.check_state(cfg.x0, "x0")
    z0 = model.check_state(cfg.z0, "z0")
    if input_signal is None:
        input_signal = ZeroInput(model.m)
    u0 = np.asarray(input_signal(0.0), dtype=float).reshape(-1)
    if u0.shape != (model.m,):
        raise ConfigurationError(f"input signal has dimension {u0.size}, model expects {model.m}")
    if not sched.covers(cfg.horizon):
        raise ConfigurationError(
            f"schedule ends at {sched.times[-1]} before the horizon {cfg.horizon}"
        )
    if cfg.step > 0.5 * float(np.min(sched.gaps, initial=np.inf)):
        raise ConfigurationError(
            f"step {cfg.step} exceeds half the smallest sampling gap {float(np.min(sched.gaps))}"
        )

    times = np.asarray(sched.times)
    sample_t = times[times <= cfg.horizon]
    xi = noise.draw(sample_t.size, p)

    # interval end points clipped to the horizon
    ends = np.append(sample_t[1:], cfg.horizon) if sample_t[-1] < cfg.horizon else sample_t[1:]
    counts = [_substeps(b - a, cfg.step) for a, b in zip(sample_t, ends)]
    size = 1 + sum(counts)

    mesh = np.empty(size)
    states = np.empty((size, 2 * n + p))
    sample_index = np.empty(sample_t.size, dtype=int)
    y = np.empty((sample_t.size, p))

    rhs = _linear_rhs(model, spec, input_signal) or _generic_rhs(model, spec, input_signal)
    h = model.h

    def reset(s, k):
        y[k] = np.asarray(h(s[:n]), dtype=float) + xi[k]
        s[2 * n:] = y[k]

    def partial(i):
        return _assemble(mesh[:i], states[:i], n, sample_t[:k_done], y[:k_done], xi[:k_done],
                         sample_index[:k_done])

    s = np.concatenate([x0, z0, np.zeros(p)])
    reset(s, 0)
    mesh[0] = 0.0
    states[0] = s
    sample_index[0] = 0
    k_done = 1
    i = 1
    for k, (a, b, m) in enumerate(zip(sample_t, ends, counts)):
        dt = (b - a) / m
        for j in range(1, m + 1):
            t0 = a + (j - 1) * dt
            try:
                s = rk4_step(rhs, t0, s, dt)
            except SimulationDiverged as exc:
                raise SimulationDiverged(exc.time, partial(i)) from None
            t1 = b if j == m else a + j * dt
            if not np.max(np.abs(s)) <= DIVERGENCE_THRESHOLD:
                raise SimulationDiverged(t1, partial(i))
            if j == m and k + 1 < sample_t.size:
                reset(s, k + 1)
                sample_index[k + 1] = i
                k_done = k + 2
            mesh[i] = t1
            states[i] = s
            i += 1
    return _assemble(mesh, states, n, sample_t, y, xi, sample_index)


def _assemble(mesh, states, n, sample_t, y, xi, sample_index):
    x = states[:, :n].copy()
    z = states[:, n:2 * n].copy()
    w = states[:, 2 * n:].copy()
    return Trajectory(
        mesh=mesh.copy(),
        x=x,
        z=z,
        w=w,
        err_norm=np.linalg.norm(z - x, axis=1),
        sample_t=np.asarray(sample_t, dtype=float).copy(),
        y=np.asarray(y).copy(),
        xi=np.asarray(xi).copy(),
        sample_index=np.asarray(sample_index).copy(),
    )


# --------------------------------------------------------------------------
# Export
# --------------------------------------------------------------------------

def fmt(v):
    """17-significant-digit float formatting; infinities as ``inf``/``-inf``."""
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([c if isinstance(c, str) else fmt(c) for c in row])


def trajectory_header(n, p):
    return (["t"] + [f"x{i + 1}" for i in range(n)] + [f"z{i + 1}" for i in range(n)]
            + [f"w{i + 1}" for i in range(p)] + ["err_norm"])


def write_trajectory_csv(traj, path):
    n, p = traj.x.shape[1], traj.w.shape[1]
    rows = (
        [t, *x, *z, *w, e]
        for t, x, z, w, e in zip(traj.mesh, traj.x, traj.z, traj.w, traj.err_norm)
    )
    write_csv(path, trajectory_header(n, p), rows)


def write_samples_csv(traj, path):
    p = traj.y.shape[1]
    header = ["k", "t_k"] + [f"y{i + 1}" for i in range(p)] + [f"xi{i + 1}" for i in range(p)]
    rows = ([str(k), t, *yk, *xk] for k, (t, yk, xk) in enumerate(zip(traj.sample_t, traj.y, traj.xi)))
    write_csv(path, header, rows)
