"""Adaptive integration of the phase model on the cylinder."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import LoopState, PhaseModel


class IntegrationError(RuntimeError):
    """Base class for numerical failures of the integrator."""


class StepUnderflow(IntegrationError):
    pass


class NonFinite(IntegrationError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float | None = None
    max_time: float | None = None
    max_steps: int = 20_000_000

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.rel_tol < 1e-15:
            raise ValueError("rel_tol below 1e-15 is under double-precision round-off")
        if self.max_step is not None and not self.max_step > 0:
            raise ValueError("max_step must be positive")

    def step_cap(self, model: PhaseModel) -> float:
        # a tenth of the fastest rotation keeps steps from skipping whole detector periods
        auto = 2.0 * math.pi / (10.0 * model.fastest_rate())
        return auto if self.max_step is None else min(self.max_step, auto)


@dataclass(frozen=True)
class Event:
    t: float
    state: LoopState
    kind: int  # +1 upward, -1 downward crossing of the section
    k: int     # section index: theta = section + k pi


@dataclass(frozen=True)
class Trajectory:
    """Accepted steps with Dormand-Prince dense output.

    ``y[:, :-1]`` is the filter state and ``y[:, -1]`` the unwrapped phase
    difference.  Segment ``i`` covers ``[t[i], t[i+1]]`` and is interpolated
    with step ``hs[i]``.
    """

    t: np.ndarray
    y: np.ndarray
    hs: np.ndarray
    dense: np.ndarray
    section: float = 0.0
    events: tuple = ()
    status: str = "end"
    backend: str = field(default="python", compare=False)

    @property
    def theta(self) -> np.ndarray:
        return self.y[:, -1]

    @property
    def x(self) -> np.ndarray:
        return self.y[:, :-1]

    @property
    def final(self) -> LoopState:
        return LoopState.from_vector(self.y[-1])

    def __len__(self):
        return len(self.t)

    def segment(self, t: float) -> int:
        i = int(np.searchsorted(self.t, t, side="right")) - 1
        return min(max(i, 0), len(self.hs) - 1)

    def __call__(self, t: float) -> np.ndarray:
        """State vector ``(x, theta)`` at time ``t`` from the dense output."""
        if not self.t[0] <= t <= self.t[-1]:
            raise ValueError(f"t={t} outside [{self.t[0]}, {self.t[-1]}]")
        if len(self.hs) == 0:
            return self.y[0].copy()
        i = self.segment(t)
        return _dense(self.dense[i], (t - self.t[i]) / self.hs[i])

    def to_csv(self) -> str:
        n = self.y.shape[1] - 1
        buf = io.StringIO()
        buf.write(",".join(["t", "theta_delta"] + [f"x_{j}" for j in range(n)]) + "\n")
        for ti, yi in zip(self.t, self.y):
            row = [ti, yi[-1], *yi[:-1]]
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()


def _dense(rc, sig):
    s1 = 1.0 - sig
    return rc[0] + sig * (rc[1] + s1 * (rc[2] + sig * (rc[3] + s1 * rc[4])))


_STATUS = {
    kernels.REACHED_END: "end",
    kernels.CROSSED: "crossed",
    kernels.LOCKED: "locked",
    kernels.BUDGET: "budget",
}


def run_flow(model: PhaseModel, y0, t_end: float, cfg: IntegratorConfig, *,
             section: float = 0.0, stop: int = kernels.STOP_NONE, k_target: int = 0,
             equilibria=None, eps_lock: float = 0.0, delta_lock: float = 0.0,
             record: bool = False, backend: str | None = None):
    """Thin wrapper around the selected flow kernel; raises on numerical failure."""
    ss = model.ss
    fn = kernels.flow_function(ss.order, backend)
    eq = np.zeros((0, ss.order + 1)) if equilibria is None else np.asarray(equilibria, dtype=float)
    out = fn(ss.A, ss.b, ss.c, ss.h, model.K_vco, model.omega_free, model.L,
             np.asarray(y0, dtype=float), float(t_end), cfg.rel_tol, cfg.abs_tol,
             cfg.step_cap(model), 0.0, float(section), stop, k_target, eq,
             eps_lock, delta_lock, model.scale, cfg.max_steps, record)
    status = out[0]
    if status == kernels.UNDERFLOW:
        raise StepUnderflow(f"step size underflow at t={out[1]:.6g}, state={out[2]}")
    if status == kernels.NONFINITE:
        raise NonFinite(f"non-finite state near t={out[1]:.6g}")
    return out


def integrate(model: PhaseModel, init: LoopState, t_end: float,
              cfg: IntegratorConfig | None = None, *, section: float = 0.0,
              equilibria=None, eps_lock: float = 0.0, delta_lock: float = 0.0,
              backend: str | None = None) -> Trajectory:
    """Integrate the closed loop from ``init`` over ``[0, t_end]``.

    With ``equilibria`` and a positive ``eps_lock`` the run stops early once
    the state settles onto one of them.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    cfg = cfg or IntegratorConfig()
    if cfg.max_time is not None:
        t_end = min(t_end, cfg.max_time)
    if len(init.x) != model.order:
        raise ValueError("initial state does not match the filter order")
    out = run_flow(model, init.as_vector(), t_end, cfg, section=section, equilibria=equilibria,
                   eps_lock=eps_lock, delta_lock=delta_lock, record=True, backend=backend)
    status, _, _, _, _, _, ts, ys, hs, dense, events = out
    ev = tuple(Event(te, LoopState.from_vector(ye), kind, k) for te, ye, k, kind in events)
    used = backend or kernels.BACKEND
    if model.order != 1:
        used = "python"
    return Trajectory(ts, ys, hs, dense, section, ev, _STATUS[status], used)


def section_crossings(traj: Trajectory, s: float = 0.0) -> list[tuple[float, np.ndarray]]:
    """Upward crossings of ``theta = s (mod pi)`` located on the dense output."""
    out = []
    th = traj.theta
    lv = np.floor((th - s) / math.pi).astype(np.int64)
    for i in np.nonzero(lv[1:] > lv[:-1])[0]:
        rc = traj.dense[i]
        hi_sig = (traj.t[i + 1] - traj.t[i]) / traj.hs[i]
        for k in range(lv[i] + 1, lv[i + 1] + 1):
            level = s + k * math.pi
            sig = _bisect_level(rc, level, 0.0, hi_sig)
            y = _dense(rc, sig)
            out.append((traj.t[i] + sig * traj.hs[i], y[:-1].copy()))
    return out


def _bisect_level(rc, level, lo, hi):
    glo = _dense(rc, lo)[-1] - level
    sig = hi
    for _ in range(200):
        sig = 0.5 * (lo + hi)
        g = _dense(rc, sig)[-1] - level
        if abs(g) < 1e-12 or hi - lo < 1e-16:
            break
        if (g < 0.0) == (glo < 0.0):
            lo, glo = sig, g
        else:
            hi = sig
    return sig


def live_section_crossings(model: PhaseModel, init: LoopState, t_end: float, s: float = 0.0,
                           cfg: IntegratorConfig | None = None) -> list[tuple[float, np.ndarray]]:
    """Section crossings detected during integration, without keeping the path."""
    cfg = cfg or IntegratorConfig()
    out = []
    y = init.as_vector()
    t0 = 0.0
    while t0 < t_end:
        status, t, y, _, *_ = run_flow(model, y, t_end - t0, cfg, section=s, stop=kernels.STOP_ANY)
        if status != kernels.CROSSED:
            break
        t0 += t
        out.append((t0, y[:-1].copy()))
        # restart on level 0; the field is pi-periodic in the phase
        y = y.copy()
        y[-1] = s
    return out


def wrap_display(theta):
    """Phase difference folded onto ``[-pi/2, pi/2)`` (the detector period)."""
    if np.ndim(theta):
        return np.mod(np.asarray(theta, dtype=float) + math.pi / 2, math.pi) - math.pi / 2
    return (theta + math.pi / 2) % math.pi - math.pi / 2
