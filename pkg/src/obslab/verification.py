"""Empirical checks of the certified bounds against simulated trajectories."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .bounds import oscillator_certificate, theorem2_constants, tmax_linear
from .dynamics import ConstantMinusQ, builtin_oscillator
from .errors import ConfigurationError, SimulationDiverged
from .simulation import (
    SimConfig,
    UniformNoise,
    ZeroNoise,
    fmt,
    make_schedule,
    simulate,
    write_csv,
)

ERR_FLOOR = 1e-12
BOUND_TOL = 1e-6
CONVERGENCE_FACTOR = 1e-6


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit ``err ~ prefactor * exp(-rate t)``.

    ``rate`` is ``inf`` when every point of the window is already below the
    numerical floor.
    """

    rate: float
    prefactor: float
    r_squared: float
    window: tuple

    @property
    def converged(self):
        return math.isinf(self.rate)


@dataclass(frozen=True)
class BoundCheckReport:
    holds: bool
    max_violation_ratio: float
    first_violation_time: Optional[float] = None


def fit_decay(traj, window, floor=ERR_FLOOR, min_points=10):
    """Fit a line to ``log err_norm`` over ``window``, ignoring points below ``floor``."""
    t0, t1 = window
    if not (t0 < t1) or t0 < traj.mesh[0] - 1e-12 or t1 > traj.mesh[-1] + 1e-12:
        raise ConfigurationError(f"window {window} is not inside [{traj.mesh[0]}, {traj.mesh[-1]}]")
    inside = (traj.mesh >= t0) & (traj.mesh <= t1)
    usable = inside & (traj.err_norm > floor)
    if not np.any(usable):
        return DecayFit(math.inf, 0.0, 1.0, (t0, t1))
    if np.count_nonzero(usable) < min_points:
        raise ConfigurationError(
            f"only {np.count_nonzero(usable)} usable points in window {window}, need {min_points}"
        )
    t = traj.mesh[usable]
    logs = np.log(traj.err_norm[usable])
    slope, intercept = np.polyfit(t, logs, 1)
    resid = logs - (slope * t + intercept)
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - float(np.sum(resid**2)) / ss_tot)
    return DecayFit(float(-slope), float(math.exp(intercept)), r2, (t0, t1))


def check_error_bound(traj, consts, noise_sup=None, atol=1e-10):
    """Evaluate ``|e(t)| <= Omega exp(-sigma t)|e(0)| + gamma sup|xi|`` on the mesh.

    The noise term uses the running supremum of the realised samples unless
    a constant a-priori bound ``noise_sup`` is given.  Where the right-hand
    side vanishes, errors up to ``atol`` (integration round-off) count as zero.
    """
    if traj.diameter > consts.T * (1 + 1e-12):
        raise ConfigurationError(
            f"trajectory diameter {traj.diameter} exceeds the T = {consts.T} of the constants"
        )
    lhs = traj.err_norm
    sup = traj.noise_running_sup() if noise_sup is None else np.full(lhs.shape, float(noise_sup))
    rhs = consts.Omega * np.exp(-consts.sigma * traj.mesh) * lhs[0] + consts.gamma * sup
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs <= atol, 0.0, np.inf))
    worst = float(np.max(ratio))
    holds = worst <= 1.0 + BOUND_TOL
    first = None
    if not holds:
        first = float(traj.mesh[np.argmax(ratio > 1.0 + BOUND_TOL)])
    return BoundCheckReport(holds, worst, first)


# --------------------------------------------------------------------------
# Randomised campaigns
# --------------------------------------------------------------------------

def ball_point(rng, n, radius):
    """Uniform sample from the closed Euclidean ball of given radius."""
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    return v * radius * rng.uniform() ** (1.0 / n)


def initial_conditions(n, trials, seed, radius=5.0, explicit=()):
    """``explicit`` pairs first, then seeded random ``(x0, z0)`` pairs up to ``trials``."""
    out = [(np.asarray(x, float), np.asarray(z, float)) for x, z in explicit][:trials]
    for i in range(len(out), trials):
        rng = np.random.default_rng([seed, i])
        out.append((ball_point(rng, n, radius), ball_point(rng, n, radius)))
    return out


def _map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


@dataclass(frozen=True)
class RunOutcome:
    converged: bool
    diverged: bool
    err0: float
    err_final: float
    rate: float
    traj: object = field(default=None, repr=False)


def run_trial(model, spec, sched, noise, cfg, fit_window=None):
    """Simulate once and summarise convergence; divergence is an outcome, not an error."""
    try:
        traj = simulate(model, spec, sched, noise, None, cfg)
    except SimulationDiverged:
        err0 = float(np.linalg.norm(np.subtract(cfg.z0, cfg.x0)))
        return RunOutcome(False, True, err0, math.inf, math.nan)
    err0, err_final = float(traj.err_norm[0]), float(traj.err_norm[-1])
    window = fit_window or (0.1 * cfg.horizon, cfg.horizon)
    try:
        rate = fit_decay(traj, window).rate
    except ConfigurationError:
        rate = math.nan
    converged = err_final < CONVERGENCE_FACTOR * err0
    return RunOutcome(converged, False, err0, err_final, rate, traj)


@dataclass(frozen=True)
class StressRow:
    T: float
    converged_fraction: float
    mean_rate: float


def _pick_step(step, sched):
    return min(step, 0.5 * float(np.min(sched.gaps, initial=np.inf)))


def masp_stress(model, spec, cert, T_list, trials, seed, *, horizon=40.0, step=0.02,
                schedule_kind="uniform", min_gap_fraction=0.5, radius=5.0,
                explicit_initial_conditions=(), workers=1):
    """Convergence statistics of noiseless runs from random initial conditions.

    For every diameter in ``T_list`` runs ``trials`` simulations with
    ``(x0, z0)`` drawn from the ball of radius ``radius``; a run converges when
    ``err_norm(horizon) < 1e-6 err_norm(0)``.  Diverged runs count as not
    converged.  If ``cert`` is given its ``q`` fixes the predictor gain.
    """
    if cert is not None:
        spec = spec.with_gain(ConstantMinusQ(cert.q))
    ics = initial_conditions(model.n, trials, seed, radius, explicit_initial_conditions)
    rows = []
    for T in T_list:
        if not T > 0:
            raise ConfigurationError(f"sampling diameters must be positive, got {T}")
        sched = make_schedule(schedule_kind, T, horizon, min_gap_fraction, seed)
        h = _pick_step(step, sched)

        def one(ic):
            return run_trial(model, spec, sched, ZeroNoise(), SimConfig(h, horizon, ic[0], ic[1]))

        outcomes = _map(one, ics, workers)
        rates = [o.rate for o in outcomes if np.isfinite(o.rate)]
        frac = sum(o.converged for o in outcomes) / len(outcomes) if outcomes else math.nan
        rows.append(StressRow(float(T), frac, float(np.mean(rates)) if rates else math.nan))
    return rows


@dataclass
class Comparison:
    rows: list  # (q, T, converged_fraction, mean_rate)
    certified: dict  # q -> T_max

    def write(self, path, certified_path=None):
        write_csv(path, ["q", "T", "converged_fraction", "mean_rate"],
                  ([q, T, f, r] for q, T, f, r in self.rows))
        if certified_path is not None:
            write_csv(certified_path, ["q", "T_max"], ([q, t] for q, t in self.certified.items()))


def compare_presets(T_list, q_list, trials, seed, *, horizon=40.0, step=0.02, workers=1):
    """Run :func:`masp_stress` on the oscillator example for each ``q``."""
    T_list, q_list = list(T_list), list(q_list)
    if not T_list or not q_list:
        raise ConfigurationError("T list and q list must be non-empty")
    if trials < 1:
        raise ConfigurationError(f"trials must be positive, got {trials}")
    model, spec = builtin_oscillator()
    rows, certified = [], {}
    for q in q_list:
        cert = oscillator_certificate(q)
        certified[float(q)] = tmax_linear(cert)
        for r in masp_stress(model, spec, cert, T_list, trials, seed, horizon=horizon, step=step,
                             workers=workers):
            rows.append((float(q), r.T, r.converged_fraction, r.mean_rate))
    return Comparison(rows, certified)


# --------------------------------------------------------------------------
# Certified soundness campaign
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SoundnessRecord:
    q: float
    schedule: str
    T: float
    trial: int
    converged: bool
    diverged: bool
    err0: float
    err_final: float
    rate: float
    bound_ratio: float
    tight_bound_ratio: float

    @property
    def passed(self):
        return (self.converged and not self.diverged and self.rate > 0
                and self.bound_ratio <= 1 + BOUND_TOL and self.tight_bound_ratio <= 1 + BOUND_TOL)


SOUNDNESS_HEADER = ["q", "schedule", "T", "trial", "converged", "diverged", "err0", "err_final",
                    "rate", "bound_ratio", "tight_bound_ratio"]


def soundness_campaign(q_list=(0.0, 0.8, 2.0), *, fraction=0.99, T_list=None,
                       schedules=("uniform", "seeded-random"), trials=20, seed=0, horizon=40.0,
                       step=0.02, min_gap_fraction=0.5, model=None, spec=None,
                       cert_family=oscillator_certificate, workers=1):
    """Noiseless runs at certified diameters; every run must converge and respect the bound.

    Diameters are ``fraction * T_max(q)`` unless an explicit ``T_list`` is
    given, in which case any ``T >= T_max(q)`` raises :class:`MASPError`.
    Each run is checked against the estimate with the default (maximal)
    ``sigma`` and, as ``tight_bound_ratio``, with ``sigma`` halved, which gives
    far smaller constants.
    """
    if trials < 1:
        raise ConfigurationError(f"trials must be positive, got {trials}")
    if model is None:
        model, spec = builtin_oscillator()
    ics = initial_conditions(model.n, trials, seed)
    plan = []
    for q in q_list:
        cert = cert_family(q)
        tmax = tmax_linear(cert)
        Ts = [fraction * tmax] if T_list is None else list(T_list)
        for T in Ts:
            consts = theorem2_constants(cert, T)  # raises past the bound
            tight = theorem2_constants(cert, T, sigma=0.5 * consts.sigma)
            plan.append((q, T, consts, tight))

    records = []
    for q, T, consts, tight in plan:
        qspec = spec.with_gain(ConstantMinusQ(q))
        for kind in schedules:
            sched = make_schedule(kind, T, horizon, min_gap_fraction, seed)
            h = _pick_step(step, sched)

            def one(item, sched=sched, h=h, qspec=qspec):
                i, (x0, z0) = item
                out = run_trial(model, qspec, sched, ZeroNoise(), SimConfig(h, horizon, x0, z0))
                if out.diverged:
                    ratio = tight_ratio = math.inf
                else:
                    ratio = check_error_bound(out.traj, consts).max_violation_ratio
                    tight_ratio = check_error_bound(out.traj, tight).max_violation_ratio
                return SoundnessRecord(float(q), kind, float(T), i, out.converged, out.diverged,
                                       out.err0, out.err_final, out.rate, ratio, tight_ratio)

            records.extend(_map(one, list(enumerate(ics)), workers))
    return records


def write_soundness_csv(records, path):
    write_csv(path, SOUNDNESS_HEADER, (
        [fmt(r.q), r.schedule, r.T, str(r.trial), str(r.converged).lower(), str(r.diverged).lower(),
         r.err0, r.err_final, r.rate, r.bound_ratio, r.tight_bound_ratio]
        for r in records
    ))


@dataclass(frozen=True)
class NoiseRecord:
    delta: float
    seed: int
    limsup: float
    bound: float

    @property
    def holds(self):
        return self.limsup <= self.bound * (1 + BOUND_TOL)


def noise_campaign(q=0.8, T=0.3, deltas=(0.01, 0.05), seeds=range(20), *, horizon=40.0,
                   step=0.02, tail=(30.0, 40.0), workers=1):
    """Steady-state error under bounded uniform noise versus ``gamma * delta``.

    Initial conditions are seeded per noise seed from the radius-5 ball.  The
    bound uses ``gamma`` from :func:`theorem2_constants` at the maximal sigma.
    """
    model, spec = builtin_oscillator(q)
    cert = oscillator_certificate(q)
    consts = theorem2_constants(cert, T)
    sched = make_schedule("uniform", T, horizon)
    h = _pick_step(step, sched)

    def one(item):
        delta, s = item
        (x0, z0), = initial_conditions(model.n, 1, s)
        traj = simulate(model, spec, sched, UniformNoise(delta, s), None, SimConfig(h, horizon, x0, z0))
        inside = (traj.mesh >= tail[0]) & (traj.mesh <= tail[1])
        return NoiseRecord(float(delta), int(s), float(np.max(traj.err_norm[inside])),
                           consts.gamma * float(delta))

    return _map(one, [(d, s) for d in deltas for s in seeds], workers), consts


def empirical_masp(q, *, trials=20, seed=0, lo=None, hi=math.pi, resolution=0.01, horizon=40.0,
                   step=0.02, workers=1):
    """Largest uniform diameter (to ``resolution``) at which all trials converge.

    Bisects between ``lo`` (default ``0.99 T_max(q)``) and ``hi``, assuming
    convergence is monotone in the diameter.  Returns ``lo`` itself if it
    fails, so a result below the certified value signals a problem.
    """
    model, spec = builtin_oscillator(q)
    cert = oscillator_certificate(q)
    lo = 0.99 * tmax_linear(cert) if lo is None else lo

    def all_converge(T):
        row, = masp_stress(model, spec, cert, [T], trials, seed, horizon=horizon, step=step,
                           workers=workers)
        return row.converged_fraction == 1.0

    if not all_converge(lo):
        return lo
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if all_converge(mid):
            lo = mid
        else:
            hi = mid
    return lo
