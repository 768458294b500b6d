"""Command-line front end.

Exit codes: 0 success, 1 configuration or precondition error, 2 simulation
diverged (``simulate``), 3 verification checks failed (``verify``).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import bounds, verification
from .config import build_experiment, load_config
from .errors import ConfigurationError, MASPError, SimulationDiverged
from .simulation import simulate, write_csv, write_samples_csv, write_trajectory_csv

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_FAILED = 0, 1, 2, 3


def _json_number(v):
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return None
    return v


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def threads_from_env():
    raw = os.environ.get("OBSLAB_THREADS")
    if raw is None or raw == "":
        return 1
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value < 1:
        raise ConfigurationError(f"OBSLAB_THREADS must be a positive integer, got {raw!r}")
    return value


def _matrix_arg(text, name):
    """A JSON matrix given inline or as a path to a JSON file."""
    path = Path(text)
    try:
        raw = path.read_text(encoding="utf-8") if path.is_file() else text
        return json.loads(raw)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"--{name}: not valid JSON ({exc})") from None


def _linear_data(text):
    data = _matrix_arg(text, "linear")
    if not isinstance(data, dict) or set(data) != {"A", "C", "R", "P"}:
        raise ConfigurationError("--linear must be a JSON object with exactly the keys A, C, R, P")
    return {k: np.asarray(v, dtype=float) for k, v in data.items()}


def _float_list(text, name):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"--{name}: expected comma-separated numbers, got {text!r}") from None
    if not values:
        raise ConfigurationError(f"--{name}: empty list")
    return values


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_simulate(args):
    overrides = list(args.set or [])
    if args.output_dir:
        overrides.append(("output_dir", args.output_dir))
    cfg = load_config(args.config, overrides)
    exp = build_experiment(cfg)

    diverged_at = None
    try:
        traj = simulate(exp.model, exp.spec, exp.schedule, exp.noise, exp.input, exp.sim)
    except SimulationDiverged as exc:
        traj, diverged_at = exc.trajectory, exc.time

    rate = r2 = None
    if diverged_at is None:
        try:
            fit = verification.fit_decay(traj, (0.0, exp.sim.horizon))
            rate, r2 = _json_number(fit.rate), fit.r_squared
        except ConfigurationError:
            pass
    summary = {
        "diverged": diverged_at is not None,
        "diverged_at": diverged_at,
        "initial_err_norm": _json_number(traj.err_norm[0]),
        "final_err_norm": _json_number(traj.err_norm[-1]),
        "final_time": _json_number(traj.mesh[-1]),
        "decay_rate": rate,
        "decay_r_squared": r2,
        "mesh_points": int(traj.mesh.size),
        "samples": int(traj.sample_t.size),
    }
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(traj, out / "trajectory.csv")
    write_samples_csv(traj, out / "samples.csv")
    _write_json(out / "summary.json", summary)
    if diverged_at is not None:
        print(f"simulation diverged at t = {diverged_at:.6g}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_tmax(args):
    if args.linear is not None:
        if args.q is None:
            raise ConfigurationError("--linear requires --q")
        d = _linear_data(args.linear)
        cert = bounds.linear_certificate(d["A"], d["C"], d["R"], d["P"], args.q)
        omega, L, rpr = cert.omega, cert.L, cert.rPr
    else:
        missing = [f"--{k}" for k in ("omega", "L", "rPr", "q") if getattr(args, k) is None]
        if missing:
            raise ConfigurationError("missing " + ", ".join(missing) + " (or use --linear)")
        omega, L, rpr = args.omega, args.L, args.rPr
    tmax = bounds.tmax_from_constants(omega, L, rpr, args.q)
    doc = {
        "omega": omega,
        "L": L,
        "rPr": rpr,
        "q": args.q,
        "T_max": _json_number(tmax),
        "recommended_T": _json_number(0.99 * tmax),
    }
    print(json.dumps(doc))
    return EXIT_OK


def cmd_sweep_q(args):
    lo, hi = args.bracket
    if not lo <= hi:
        raise ConfigurationError("--bracket: lo must not exceed hi")
    if args.points < 1:
        raise ConfigurationError("--points must be positive")
    if args.linear is not None:
        d = _linear_data(args.linear)
        family = bounds.linear_certificate_family(d["A"], d["C"], d["R"], d["P"])
    else:
        family = bounds.oscillator_certificate
    grid = [lo] if lo == hi else np.linspace(lo, hi, args.points)
    curve = bounds.tmax_curve(family, grid)
    best = None
    if args.optimize:
        best = bounds.optimize_q(family, (lo, hi), args.tol)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    bounds.write_tmax_csv(curve, out / "tmax_curve.csv")
    if best is not None:
        print(json.dumps({"q_star": best.q, "T_star": _json_number(best.tmax),
                          "unbounded": best.unbounded}))
    return EXIT_OK


def cmd_verify(args):
    if args.trials < 1:
        raise ConfigurationError(f"--trials must be positive, got {args.trials}")
    workers = threads_from_env()
    overrides = list(args.set or [])
    if args.output_dir:
        overrides.append(("output_dir", args.output_dir))
    cfg = load_config(args.config, overrides)
    exp = build_experiment(cfg)
    q_list = _float_list(args.q_list, "q-list")
    T_list = _float_list(args.T_list, "T-list") if args.T_list else None

    if cfg.model.kind == "linear":
        if cfg.certificate is None:
            raise ConfigurationError("certificate.P is required to verify a linear model")
        m = cfg.model
        family = bounds.linear_certificate_family(m.A, m.C, m.R, cfg.certificate.P)
    else:
        P = cfg.certificate.P if cfg.certificate is not None else bounds.OSCILLATOR_P
        family = bounds.linear_certificate_family(
            exp.model.linear.A, exp.model.linear.C, exp.spec.R, P)

    certified = {}
    for q in q_list:
        cert = family(q)
        certified[str(q)] = {"T_max": _json_number(bounds.tmax_linear(cert)),
                             "omega": cert.omega, "L": cert.L, "rPr": cert.rPr}

    common = dict(trials=args.trials, seed=args.seed, horizon=args.horizon, step=args.step,
                  workers=workers)
    records = verification.soundness_campaign(
        q_list, fraction=args.fraction, T_list=T_list, model=exp.model, spec=exp.spec,
        cert_family=family, **common)
    sound = all(r.passed for r in records)

    noise_ok, noise_doc = True, None
    if args.noise and cfg.model.kind == "oscillator":
        recs, consts = verification.noise_campaign(q=args.noise_q, T=args.noise_T, seeds=range(args.trials),
                                                   horizon=args.horizon, step=args.step, workers=workers)
        noise_ok = all(r.holds for r in recs)
        noise_doc = {"q": args.noise_q, "T": args.noise_T, "gamma": consts.gamma, "holds": noise_ok,
                     "max_limsup_over_delta": max(r.limsup / r.delta for r in recs)}
    else:
        recs = []

    empirical = {}
    if args.empirical and cfg.model.kind == "oscillator":
        for q in q_list:
            empirical[str(q)] = verification.empirical_masp(q, trials=args.trials, seed=args.seed,
                                                            horizon=args.horizon, step=args.step,
                                                            workers=workers)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    verification.write_soundness_csv(records, out / "soundness.csv")
    if recs:
        write_csv(out / "noise.csv", ["delta", "seed", "limsup", "bound"],
                  ([r.delta, str(r.seed), r.limsup, r.bound] for r in recs))
    summary = {
        "certified": certified,
        "empirical": {
            "soundness_runs": len(records),
            "soundness_passed": sum(r.passed for r in records),
            "min_decay_rate": _json_number(min((r.rate for r in records), default=math.nan)),
            "max_bound_ratio": _json_number(max((r.bound_ratio for r in records), default=math.nan)),
            "max_tight_bound_ratio": _json_number(
                max((r.tight_bound_ratio for r in records), default=math.nan)),
            "noise": noise_doc,
            "empirical_masp": empirical,
        },
        "passed": sound and noise_ok,
    }
    _write_json(out / "campaign.json", summary)
    if not (sound and noise_ok):
        print("verification failed; see campaign.json", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_compare(args):
    if args.trials < 1:
        raise ConfigurationError(f"--trials must be positive, got {args.trials}")
    table = verification.compare_presets(
        _float_list(args.T_list, "T-list"), _float_list(args.q_list, "q-list"), args.trials, args.seed,
        horizon=args.horizon, step=args.step, workers=threads_from_env())
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    table.write(out / "comparison.csv", out / "certified_tmax.csv")
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # usage errors share the configuration-error exit code
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def build_parser():
    parser = _Parser(prog="obslab", description="Sampled-data observer experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one configured experiment")
    p.add_argument("config", nargs="?", help="JSON experiment config (defaults if omitted)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field, e.g. sim.step=0.01")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tmax", help="maximum allowable sampling period")
    p.add_argument("--omega", type=float)
    p.add_argument("--L", type=float)
    p.add_argument("--rPr", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--linear", help='JSON {"A":..,"C":..,"R":..,"P":..} or a path to one')
    p.set_defaults(func=cmd_tmax)

    p = sub.add_parser("sweep-q", help="T_max as a function of q")
    p.add_argument("--bracket", type=float, nargs=2, default=(-1.0, 3.0), metavar=("LO", "HI"))
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--optimize", action="store_true")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--linear")
    p.add_argument("--output-dir", default="out")
    p.set_defaults(func=cmd_sweep_q)

    p = sub.add_parser("verify", help="certified-soundness campaign")
    p.add_argument("config", nargs="?")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--q-list", default="0,0.8,2")
    p.add_argument("--T-list", help="absolute diameters; each must be below T_max(q)")
    p.add_argument("--fraction", type=float, default=0.99, help="diameter as a fraction of T_max (default 0.99)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=float, default=40.0)
    p.add_argument("--step", type=float, default=0.02)
    p.add_argument("--no-noise", dest="noise", action="store_false")
    p.add_argument("--noise-q", type=float, default=0.8)
    p.add_argument("--noise-T", type=float, default=0.3)
    p.add_argument("--empirical", action="store_true", help="also bisect the empirical MASP (slow)")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", help="compare predictor constants q on the oscillator")
    p.add_argument("--q-list", default="0,0.8,2")
    p.add_argument("--T-list", default="0.1,0.3")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=float, default=40.0)
    p.add_argument("--step", type=float, default=0.02)
    p.add_argument("--output-dir", default="out")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, MASPError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
