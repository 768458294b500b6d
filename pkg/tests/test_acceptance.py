"""Acceptance gate: each test is one criterion, run at its stated tolerance."""
import csv
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obslab import (
    IOSCertificate,
    SimConfig,
    ZeroNoise,
    builtin_oscillator,
    certify_linear,
    exp_integral,
    make_schedule,
    optimize_q,
    oscillator_certificate,
    rk4_step,
    simulate,
    small_symmetric_eig,
    theorem1_gain,
    tmax_curve,
    tmax_linear,
)
from obslab.bounds import OSCILLATOR_P, linear_certificate_family
from obslab.cli import main
from obslab.verification import noise_campaign, soundness_campaign, write_soundness_csv

A = np.array([[0.0, 1.0], [-1.0, 0.0]])
C = np.array([[1.0, 0.0]])
R = np.array([[2.0], [1.0]])
P = np.array(OSCILLATOR_P)
FAMILY = linear_certificate_family(A, C, R, P)


def report(number, ok, detail):
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


@pytest.fixture(scope="module")
def soundness_run(tmp_path_factory):
    start = time.perf_counter()
    records = soundness_campaign((0.0, 0.8, 2.0), fraction=0.99, trials=20, seed=0, horizon=40.0)
    elapsed = time.perf_counter() - start
    path = tmp_path_factory.mktemp("c5") / "soundness.csv"
    write_soundness_csv(records, path)
    return records, elapsed, path


@pytest.mark.criterion(1, "MASP golden values")
def test_criterion_1_masp_golden_values():
    start = time.perf_counter()
    t0, t08, t2 = (tmax_linear(FAMILY(q)) for q in (0.0, 0.8, 2.0))
    elapsed = time.perf_counter() - start
    ok = (abs(t0 - 0.3162278) <= 1e-6 and abs(t08 - 0.37589) <= 1e-4 and abs(t2 - 0.24504) <= 1e-4
          and elapsed < 0.1)
    report(1, ok, f"T_max(0)={t0:.9f} T_max(0.8)={t08:.7f} T_max(2)={t2:.7f} in {elapsed * 1e3:.2f} ms")


@pytest.mark.criterion(2, "improvement ratios")
def test_criterion_2_improvement_ratios():
    t0, t08, t2 = (tmax_linear(FAMILY(q)) for q in (0.0, 0.8, 2.0))
    r_zoh, r_isp = t08 / t2 - 1, t08 / t0 - 1
    ok = abs(r_zoh - 0.534) <= 0.002 and abs(r_isp - 0.188) <= 0.002
    report(2, ok, f"vs q=2: {r_zoh:.5f}, vs q=0: {r_isp:.5f}")


@pytest.mark.criterion(3, "T_max(q) curve over [-1, 3]")
def test_criterion_3_sweep(tmp_path):
    start = time.perf_counter()
    code = main(["sweep-q", "--bracket", "-1", "3", "--points", "401", "--output-dir", str(tmp_path)])
    opt = optimize_q(FAMILY, (-1.0, 3.0), tol=1e-6)
    elapsed = time.perf_counter() - start
    with open(tmp_path / "tmax_curve.csv", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    q = np.array([float(r[0]) for r in rows])
    t = np.array([float(r[1]) for r in rows])
    i = int(np.argmax(t))
    unimodal = bool(np.all(np.diff(t[: i + 1]) > 0) and np.all(np.diff(t[i:]) < 0))

    # brute force on a grid with spacing h locates the maximiser to within h
    fine = np.linspace(-1.0, 3.0, 40001)
    h = fine[1] - fine[0]
    values = np.array([v for _, v in tmax_curve(FAMILY, fine)])
    q_bf = fine[int(np.argmax(values))]
    agrees = abs(opt.q - q_bf) <= h + 1e-6 and opt.tmax >= values.max() - 1e-15

    ok = (code == 0 and len(rows) == 401 and unimodal and 0.3757 <= t[i] <= 0.3761
          and 0.75 <= q[i] <= 0.85 and agrees and not opt.unbounded and elapsed < 1.0)
    report(3, ok, f"grid max {t[i]:.6f} at q={q[i]:.3f}, optimize_q q*={opt.q:.6f} (brute force {q_bf:.4f}), "
                  f"{elapsed:.2f} s")


@pytest.mark.criterion(4, "certificate derivation")
def test_criterion_4_certify_linear():
    worst_omega = worst_L = 0.0
    for q in np.linspace(-1.0, 3.0, 50):
        omega, L, feasible = certify_linear(A, C, R, P, q)
        assert feasible
        worst_omega = max(worst_omega, abs(omega - 1.0))
        oracle = math.sqrt(2.0 * (1.0 + (1.0 - q) ** 2))
        worst_L = max(worst_L, abs(L - oracle) / oracle)
    ok = worst_omega <= 1e-9 and worst_L <= 1e-9
    report(4, ok, f"max |omega-1| = {worst_omega:.2e}, max rel L error = {worst_L:.2e}")


@pytest.mark.criterion(5, "certified soundness campaign")
def test_criterion_5_soundness(soundness_run):
    records, elapsed, _ = soundness_run
    converged = all(r.converged and r.err_final < 1e-6 * r.err0 for r in records)
    ratio = max(r.bound_ratio for r in records)
    rate = min(r.rate for r in records)
    ok = (len(records) == 3 * 2 * 20 and converged and not any(r.diverged for r in records)
          and ratio <= 1 + 1e-6 and rate > 0 and elapsed < 30.0)
    report(5, ok, f"{sum(r.passed for r in records)}/{len(records)} runs passed, max bound ratio {ratio:.3g}, "
                  f"min fitted rate {rate:.3f}, {elapsed:.1f} s")


@pytest.mark.criterion(6, "unobservability at T = pi")
def test_criterion_6_unobservable():
    model, spec = builtin_oscillator(0.8)
    sched = make_schedule("uniform", math.pi, 50.0)
    traj = simulate(model, spec, sched, ZeroNoise(), None, SimConfig(0.01, 50.0, (0.0, 1.0), (0.0, 0.0)))
    y_max = float(np.max(np.abs(traj.y)))
    err_min = float(np.min(traj.err_norm))
    ok = y_max < 1e-8 and err_min >= 0.5 and traj.mesh[-1] == 50.0
    report(6, ok, f"max |y(t_k)| = {y_max:.2e}, min err_norm = {err_min:.4f}")


@given(omega=st.floats(0.01, 10), gamma=st.floats(0, 10), L=st.floats(0, 10), q=st.floats(-3, 3),
       T=st.floats(0, 2))
@settings(max_examples=500, deadline=None)
def noise_gain_dominates(omega, gamma, L, q, T):
    cert = IOSCertificate(omega, gamma, L, q)
    if not 2 * gamma * L * exp_integral(2 * q, T) < 1 - 1e-9:
        return
    assert theorem1_gain(cert, T).noise_gain >= gamma


@pytest.mark.criterion(7, "noise IOS property")
def test_criterion_7_noise():
    records, consts = noise_campaign(q=0.8, T=0.3, deltas=(0.01, 0.05), seeds=range(20))
    held = all(r.limsup <= consts.gamma * r.delta for r in records)
    noise_gain_dominates()
    worst = max(r.limsup / r.delta for r in records)
    ok = len(records) == 40 and held
    report(7, ok, f"max limsup/delta = {worst:.3f} <= gamma = {consts.gamma:.4g}; noise_gain >= gamma on 500 cases")


def _simpson(a, T, n=20000):
    s = np.linspace(0.0, T, n + 1)
    y = np.exp(a * s)
    return T / (3 * n) * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def _char_roots(a, b, d):
    tr, det = a + d, a * d - b * b
    disc = math.hypot(a - d, 2 * b)
    big = 0.5 * (tr + math.copysign(disc, tr)) if tr != 0 else 0.5 * disc
    small = det / big if big != 0 else -big
    return sorted([big, small])


@pytest.mark.criterion(8, "numerics")
def test_criterion_8_numerics():
    # RK4 on x'' = -x against cos t
    rhs = lambda t, s: np.array([s[1], -s[0]])
    errs = []
    for h in (0.1, 0.05, 0.025):
        s = np.array([1.0, 0.0])
        for i in range(round(10.0 / h)):
            s = rk4_step(rhs, i * h, s, h)
        errs.append(abs(s[0] - math.cos(10.0)))
    factors = [errs[0] / errs[1], errs[1] / errs[2]]

    rng = np.random.default_rng(8)
    quad_err = 0.0
    for a, T in zip(rng.uniform(-3, 3, 100), rng.uniform(0, 2, 100)):
        want = _simpson(a, T)
        quad_err = max(quad_err, abs(exp_integral(a, T) - want) / max(1.0, abs(want)))

    eig_err = 0.0
    for a, b, d in rng.uniform(-10, 10, (200, 3)):
        got = small_symmetric_eig([[a, b], [b, d]])
        eig_err = max(eig_err, float(np.max(np.abs(got - _char_roots(a, b, d)))) / max(1, abs(a), abs(b), abs(d)))
    for values in rng.uniform(-10, 10, (50, 5)):
        got = small_symmetric_eig(np.diag(values))
        eig_err = max(eig_err, float(np.max(np.abs(got - np.sort(values)))))

    ok = min(factors) >= 12 and quad_err <= 1e-12 and eig_err <= 1e-12
    report(8, ok, f"RK4 factors {factors[0]:.2f}, {factors[1]:.2f}; exp_integral err {quad_err:.1e}; "
                  f"eig err {eig_err:.1e}")


@pytest.mark.criterion(9, "determinism")
def test_criterion_9_determinism(soundness_run, tmp_path):
    _, _, first = soundness_run
    records = soundness_campaign((0.0, 0.8, 2.0), fraction=0.99, trials=20, seed=0, horizon=40.0)
    write_soundness_csv(records, tmp_path / "again.csv")
    a, b = first.read_bytes(), (tmp_path / "again.csv").read_bytes()
    noise_a = noise_campaign(seeds=range(5))[0]
    noise_b = noise_campaign(seeds=range(5))[0]
    ok = a == b and noise_a == noise_b
    report(9, ok, f"soundness CSV {len(a)} bytes identical: {a == b}")
