"""Lyapunov certificate for the loop with an active PI filter.

For ``x' = sin(2 theta)/tau1``, ``theta' = w - K (x + tau2/tau1 sin(2 theta))``
the function

    V = K tau1 / 2 (x - w/K)^2 + (1 - cos 2 theta) / 2

has ``V' = -(K tau2 / tau1) sin^2(2 theta) <= 0`` for every detuning ``w``.
The PD amplitude is normalized to one; other amplitudes map onto this case by
gain lumping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import DELTA_LOCK, EPS_LOCK, find_equilibria
from .integrate import IntegratorConfig, integrate
from .model import PI, LoopState, ModelError, PhaseModel


@dataclass(frozen=True)
class PiParams:
    tau1: float
    tau2: float
    K_vco: float
    omega: float = 0.0

    def __post_init__(self):
        if not (self.tau1 > 0 and self.tau2 > 0 and self.K_vco > 0):
            raise ModelError("tau1, tau2 and K_vco must be positive")

    def model(self, omega: float | None = None) -> PhaseModel:
        w = self.omega if omega is None else omega
        return PhaseModel(PI(self.tau1, self.tau2), self.K_vco, w)

    def with_omega(self, omega: float) -> "PiParams":
        return PiParams(self.tau1, self.tau2, self.K_vco, omega)


def lyapunov_v(x, theta, p: PiParams):
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    e = x - p.omega / p.K_vco
    return 0.5 * p.K_vco * p.tau1 * e * e + 0.5 * (1.0 - np.cos(2.0 * theta))


def lyapunov_vdot(x, theta, p: PiParams):
    """Closed-form derivative along the flow; independent of ``x`` and the detuning."""
    x, theta = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(theta, dtype=float))
    s = np.sin(2.0 * theta)
    return -(p.K_vco * p.tau2 / p.tau1) * s * s


def chain_rule_vdot(x, theta, p: PiParams):
    """``grad V . f`` with ``f`` taken from the closed-loop right-hand side."""
    model = p.model()
    ss = model.ss
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    phi = model.L * np.sin(2.0 * theta)
    fx = ss.A[0, 0] * x + ss.b[0] * phi
    fth = model.omega_free - model.K_vco * (ss.c[0] * x + ss.h * phi)
    dVdx = p.K_vco * p.tau1 * (x - p.omega / p.K_vco)
    dVdth = np.sin(2.0 * theta)
    return dVdx * fx + dVdth * fth


def sign_grid(p: PiParams, n_x: int = 1000, n_theta: int = 1000, x_box=(-10.0, 10.0),
              omegas=None, zero_tol: float = 1e-12):
    """Sign and zero-set of the analytic derivative on an ``n_x * n_theta`` grid.

    Returns ``(max_vdot, violations)``; a violation is a positive value or a
    zero that does not sit on ``sin(2 theta) = 0``.
    """
    xs = np.linspace(x_box[0], x_box[1], n_x)
    ths = np.arange(n_theta) * (math.pi / n_theta)
    X, TH = np.meshgrid(xs, ths, indexing="ij")
    omegas = [p.omega] if omegas is None else list(omegas)
    gain = p.K_vco * p.tau2 / p.tau1
    max_vdot = -math.inf
    violations = []
    for w in omegas:
        q = p.with_omega(w)
        vd = lyapunov_vdot(X, TH, q)
        max_vdot = max(max_vdot, float(vd.max()))
        zero = np.abs(vd) <= zero_tol * gain
        on_set = np.abs(np.sin(2.0 * TH)) <= math.sqrt(zero_tol)
        bad = (vd > 0) | (zero != on_set)
        for i, j in zip(*np.nonzero(bad)):
            violations.append({"omega": w, "x": float(X[i, j]), "theta": float(TH[i, j]),
                               "vdot": float(vd[i, j])})
            if len(violations) >= 20:
                break
    return max_vdot, violations


@dataclass
class ConvergenceReport:
    grid_size: int
    max_vdot: float
    violations: list = field(default_factory=list)
    runs: list = field(default_factory=list)

    @property
    def convergence(self) -> str:
        ok = all(r["outcome"] == "Lock" and r["monotone"] for r in self.runs)
        return "pass" if ok and not self.violations else "fail"

    def as_dict(self) -> dict:
        return {"grid_size": self.grid_size, "max_vdot": self.max_vdot,
                "violations": self.violations, "convergence": self.convergence,
                "runs": self.runs}


def monotone_excess(v: np.ndarray) -> float:
    """Largest rise of ``v`` above its running minimum."""
    return float(np.max(v - np.minimum.accumulate(v))) if len(v) else 0.0


def track(p: PiParams, init: LoopState, budget: float | None = None,
          cfg: IntegratorConfig | None = None) -> dict:
    """Integrate one trajectory to lock and measure the growth of V along it."""
    model = p.model()
    cfg = cfg or IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14)
    budget = budget if budget is not None else 200.0 * 2.0 * math.pi / model.natural_rate()
    eqs = [e.as_vector() for e in find_equilibria(model) if e.stable]
    traj = integrate(model, init, budget, cfg, equilibria=eqs, eps_lock=EPS_LOCK,
                     delta_lock=DELTA_LOCK)
    v = lyapunov_v(traj.x[:, 0], traj.theta, p)
    excess = monotone_excess(v)
    v0 = float(v[0])
    return {"omega": p.omega, "x0": float(init.x[0]), "theta0": init.theta,
            "outcome": "Lock" if traj.status == "locked" else "Undetermined",
            "t": float(traj.t[-1]), "V0": v0, "V_end": float(v[-1]),
            "max_increase": excess, "monotone": excess <= 1e-7 * max(v0, 1e-300)}


def lasalle_check(p: PiParams, n: int = 101, x_box=(-10.0, 10.0)) -> list:
    """On ``sin(2 theta) = 0`` the phase moves unless ``x = w/K``."""
    model = p.model()
    bad = []
    x_lock = p.omega / p.K_vco
    for th in (0.0, math.pi / 2):
        for x in np.linspace(x_lock + x_box[0], x_lock + x_box[1], n):
            _, dth = model.rhs(np.array([x]), th)
            at_eq = abs(x - x_lock) <= 1e-12 * max(1.0, abs(x_lock))
            if at_eq != (abs(dth) <= 1e-9 * max(1.0, abs(p.omega))):
                bad.append({"x": float(x), "theta": th, "dtheta": float(dth)})
    return bad


def certify_global_convergence(p: PiParams, omegas, n_inits: int = 25, seed: int = 0,
                               x_box=(-10.0, 10.0), grid: int = 1000,
                               budget: float | None = None) -> ConvergenceReport:
    """Numerical companion to the Lyapunov argument.

    Initial filter states are drawn around the lock value ``w/K`` inside
    ``x_box``; phases uniformly on ``[0, pi)``.
    """
    omegas = [float(w) for w in omegas]
    max_vdot, violations = sign_grid(p, grid, grid, x_box, omegas)
    violations = violations + lasalle_check(p.with_omega(omegas[0] if omegas else p.omega))
    rng = np.random.default_rng(seed)
    runs = []
    for w in omegas:
        q = p.with_omega(w)
        for _ in range(n_inits):
            x0 = w / p.K_vco + rng.uniform(*x_box)
            th0 = rng.uniform(0.0, math.pi)
            runs.append(track(q, LoopState([x0], th0), budget))
    return ConvergenceReport(grid * grid, max_vdot, violations, runs)
