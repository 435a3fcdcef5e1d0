"""Command-line interface.

Exit status: 0 on success, 1 for model or configuration errors, 2 for
numerical failures (undetermined predicates, step-size underflow).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import Undetermined, classify_trajectory, find_equilibria, scan_cycles
from .config import ConfigError, load_model_config, load_sweep_config
from .integrate import IntegrationError, integrate
from .lyapunov import PiParams, certify_global_convergence, chain_rule_vdot, lyapunov_vdot
from .model import PI, LeadLag, ModelError, OpticalParams, PDCharacteristic, PhaseModel
from .pullin import default_workers, pull_in_estimate, sweep_diagram
from .signal import photocurrents, pd_identity_residual, squarelaw_consistency
from .svg import diagram_svg, portrait_svg


def _clean(obj):
    """Replace non-finite floats by ``None`` and numpy scalars by Python ones."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _emit_json(data, out):
    # float repr is the shortest string that round-trips exactly
    text = json.dumps(_clean(data), indent=2, sort_keys=False) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _g17(v) -> str:
    return "%.17g" % v


# ---------------------------------------------------------------- subcommands


def cmd_simulate(args):
    cfg = load_model_config(args.config)
    model = cfg.model
    if cfg.simulate is None or not cfg.simulate.inits:
        raise ConfigError("simulate: the config needs a 'simulate' block with initial conditions")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    t_end = args.t_end if args.t_end is not None else cfg.simulate.t_end
    curves, summary = [], []
    for i, init in enumerate(cfg.simulate.inits):
        traj = integrate(model, init, t_end, cfg.integrator)
        (outdir / f"trajectory_{i}.csv").write_text(traj.to_csv())
        fate = classify_trajectory(model, init, cfg=cfg.integrator)
        curves.append((traj.theta, traj.x[:, 0]))
        summary.append({"init": list(init.as_vector()), "t_end": float(traj.t[-1]),
                        "final": list(traj.y[-1]), "steps": len(traj) - 1, **fate.as_dict()})
    eqs = find_equilibria(model)
    orbits, cyc = [], []
    if args.cycles and model.order == 1:
        for c in scan_cycles(model, s=cfg.section, cfg=cfg.integrator).cycles:
            cyc.append(c.as_dict())
            orb = integrate(model, _section_state(c), c.period, cfg.integrator)
            orbits.append((orb.theta, orb.x[:, 0], c.kind == "Stable"))
    eq_marks = [(e.theta, float(e.x[0]), e.stable) for e in eqs]
    (outdir / "portrait.svg").write_text(portrait_svg(curves, eq_marks, orbits))
    _emit_json({"trajectories": summary, "equilibria": [_eq_dict(e) for e in eqs],
                "cycles": cyc}, outdir / "summary.json")
    return 0


def _section_state(c):
    from .model import LoopState
    return LoopState([c.x], c.s)


def _eq_dict(e):
    return {"x": list(e.x), "theta": e.theta, "kind": e.kind, "stable": e.stable,
            "eigenvalues": [[float(v.real), float(v.imag)] for v in e.eigenvalues]}


def cmd_equilibria(args):
    model = load_model_config(args.config).model
    _emit_json({"hold_in": model.hold_in(),
                "equilibria": [_eq_dict(e) for e in find_equilibria(model)]}, args.out)
    return 0


def cmd_cycles(args):
    cfg = load_model_config(args.config)
    s = cfg.section if args.s is None else args.s
    scan = scan_cycles(cfg.model, s=s, grid=args.grid, cfg=cfg.integrator)
    data = {"s": s, "x_range": list(scan.x_range), "cycles": [c.as_dict() for c in scan.cycles],
            "undetermined_probes": scan.undetermined, "notes": scan.notes}
    if scan.tangency is not None:
        data["near_tangency"] = {"x": scan.tangency[0], "g": scan.tangency[1]}
    _emit_json(data, args.out)
    return 0


def _pullin_model(args) -> PhaseModel:
    if args.config:
        return load_model_config(args.config).model
    pd = PDCharacteristic(args.L)
    if args.filter == "leadlag":
        missing = [n for n in ("a", "alpha", "beta") if getattr(args, n) is None]
        if missing:
            raise ConfigError("leadlag filter needs " + ", ".join("--" + m for m in missing))
        filt = LeadLag(args.a, args.alpha, args.beta)
    else:
        if args.tau1 is None or args.tau2 is None:
            raise ConfigError("pi filter needs --tau1 and --tau2")
        filt = PI(args.tau1, args.tau2)
    if args.kvco is None:
        raise ConfigError("--kvco is required")
    return PhaseModel(filt, args.kvco, 0.0, pd)


def cmd_pullin(args):
    model = _pullin_model(args)
    if args.tol is not None and not args.tol > 0:
        raise ConfigError("--tol must be positive")
    hold = model.hold_in()
    tol = args.tol if args.tol is not None else (1e-3 * hold if math.isfinite(hold)
                                                 else 1e-3 * model.K_vco * model.L)
    res = pull_in_estimate(model, tol, args.omega_max)
    _emit_json({"omega_pullin": res.omega_pullin, "hold_in": hold, "tol": tol,
                **res.as_dict()}, args.out)
    return 0


def cmd_sweep(args):
    cfg = load_sweep_config(args.grid)
    workers = args.workers if args.workers is not None else default_workers()
    rows = sweep_diagram(cfg.a_values, cfg.K_values, cfg.alpha, cfg.beta, cfg.L, cfg.tol,
                         workers, cfg.rel_tol)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["a", "kvco", "omega_pullin", "normalized", "status"])
    for r in rows:
        w.writerow([_g17(r.a), _g17(r.K_vco), _g17(r.omega_pullin), _g17(r.normalized), r.status])
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "pullin.csv").write_text(buf.getvalue())
    if args.svg:
        (outdir / "pullin.svg").write_text(diagram_svg(rows))
    return 0


def cmd_lyapunov(args):
    p = PiParams(args.tau1, args.tau2, args.kvco)
    omegas = [m * args.kvco for m in args.omega_multiples]
    rep = certify_global_convergence(p, omegas, n_inits=args.inits, seed=args.seed,
                                     grid=args.grid)
    rng = np.random.default_rng(args.seed)
    xs = rng.uniform(-10.0, 10.0, 10_000)
    ths = rng.uniform(-math.pi, math.pi, 10_000)
    gap = 0.0
    for w in omegas:
        q = p.with_omega(w)
        a, b = lyapunov_vdot(xs + w / args.kvco, ths, q), chain_rule_vdot(xs + w / args.kvco, ths, q)
        gap = max(gap, float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))))
    d = rep.as_dict()
    d["chain_rule_max_rel_gap"] = gap
    if not args.runs:
        d.pop("runs")
    _emit_json(d, args.out)
    return 0 if rep.convergence == "pass" else 2


def cmd_signal(args):
    rng = np.random.default_rng(args.seed)
    n = args.samples
    th1, th2 = rng.uniform(-50, 50, n), rng.uniform(-50, 50, n)
    m = rng.choice([-1, 1], n)
    params = OpticalParams(*(10 ** rng.uniform(-1, 1, n) for _ in range(4)))
    res = pd_identity_residual(th1, th2, m, params)
    rel = float(np.max(np.abs(res) / params.pd_amplitude))
    flip = pd_identity_residual(th1, th2, -m, params)
    cur = photocurrents(th1, th2, m, params)
    total = params.R * (params.P1 + params.P2) / 4.0
    cons = float(max(np.max(np.abs(cur.I1 + cur.I2 - total) / total),
                     np.max(np.abs(cur.I3 + cur.I4 - total) / total)))
    sq = squarelaw_consistency(OpticalParams(1.3, 0.7, 0.9, 2.0), phase1=0.4, phase2=-0.2)
    ok = rel <= 1e-12 and cons <= 1e-12 and not sq["failed"]
    _emit_json({"samples": n, "max_relative_residual": rel,
                "data_invariance": float(np.max(np.abs(res - flip) / params.pd_amplitude)),
                "conservation_max_relative": cons,
                "squarelaw_max_deviation": sq["max_deviation"], "squarelaw_failed": sq["failed"],
                "pass": ok}, args.out)
    return 0 if ok else 2


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phaselock",
                                description="Phase-space analysis of an optical Costas loop.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes for sweeps (default: $PHASELOCK_WORKERS or 1)")
    p.add_argument("--seed", type=int, default=0, help="seed for random sampling")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate initial conditions, write CSV and SVG")
    s.add_argument("config")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--t-end", type=float, default=None)
    s.add_argument("--cycles", action="store_true", help="overlay rotating cycles on the portrait")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("equilibria", help="equilibria and their linear type")
    s.add_argument("config")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_equilibria)

    s = sub.add_parser("cycles", help="rotating cycles via the return map")
    s.add_argument("config")
    s.add_argument("--s", type=float, default=None, help="section phase")
    s.add_argument("--grid", type=int, default=400)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_cycles)

    s = sub.add_parser("pullin", help="pull-in frequency by bisection")
    s.add_argument("--config", default=None, help="model config (detuning is ignored)")
    s.add_argument("--filter", choices=("leadlag", "pi"), default="leadlag")
    s.add_argument("--a", type=float)
    s.add_argument("--alpha", type=float)
    s.add_argument("--beta", type=float)
    s.add_argument("--tau1", type=float)
    s.add_argument("--tau2", type=float)
    s.add_argument("--L", type=float, default=1.0)
    s.add_argument("--kvco", type=float)
    s.add_argument("--tol", type=float, default=None, help="bracket width (default 1e-3 hold-in)")
    s.add_argument("--omega-max", type=float, default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_pullin)

    s = sub.add_parser("sweep", help="pull-in diagram over an (a, K) grid")
    s.add_argument("grid", help="sweep config JSON")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--svg", action="store_true")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("lyapunov-check", help="numerical Lyapunov certificate for the PI loop")
    s.add_argument("--tau1", type=float, default=1.0)
    s.add_argument("--tau2", type=float, default=0.5)
    s.add_argument("--kvco", type=float, default=1.0)
    s.add_argument("--omega-multiples", type=float, nargs="+", default=[1.0, 10.0, 100.0, 1000.0])
    s.add_argument("--inits", type=int, default=25)
    s.add_argument("--grid", type=int, default=1000)
    s.add_argument("--runs", action="store_true", help="include per-trajectory records")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_lyapunov)

    s = sub.add_parser("signal-check", help="photodetector identity and square-law audit")
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_signal)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ModelError, ValueError) as exc:
        print(f"phaselock: error: {exc}", file=sys.stderr)
        return 1
    except Undetermined as exc:
        print(f"phaselock: undetermined: {exc}", file=sys.stderr)
        return 2
    except IntegrationError as exc:
        print(f"phaselock: integration failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
