"""Equilibria, return maps and rotating (second-kind) limit cycles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .integrate import IntegratorConfig, run_flow
from .model import LoopState, PhaseModel

EPS_LOCK = 1e-6
DELTA_LOCK = 1e-4
TANGENCY_MULTIPLIER = 1e-3
FINE = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-15)


class SingularFilterDC(ArithmeticError):
    """DC gain undefined and no integrator structure to fall back on."""


class Undetermined(RuntimeError):
    """Integration budget exhausted before lock or section return."""

    def __init__(self, msg, omega=None):
        super().__init__(msg)
        self.omega = omega


@dataclass(frozen=True)
class Equilibrium:
    x: np.ndarray
    theta: float
    eigenvalues: np.ndarray
    kind: str  # StableNode | StableFocus | Saddle | Unstable | Nonhyperbolic

    @property
    def stable(self) -> bool:
        return self.kind in ("StableNode", "StableFocus")

    def as_vector(self) -> np.ndarray:
        return np.append(self.x, self.theta)


def classify_eigenvalues(ev, tol: float = 1e-10) -> str:
    re = np.real(ev)
    scale = max(1.0, float(np.max(np.abs(ev))))
    if np.any(np.abs(re) <= tol * scale):
        return "Nonhyperbolic"
    if np.all(re < 0):
        return "StableFocus" if np.any(np.abs(np.imag(ev)) > tol * scale) else "StableNode"
    if np.any(re < 0):
        return "Saddle"
    return "Unstable"


def jacobian(model: PhaseModel, point) -> np.ndarray:
    """Linearization of the loop at ``point = (x..., theta)``."""
    ss = model.ss
    y = point.as_vector() if isinstance(point, (LoopState, Equilibrium)) else np.asarray(point, float)
    dphi = model.pd.derivative(y[-1])
    n = ss.order
    J = np.empty((n + 1, n + 1))
    J[:n, :n] = ss.A
    J[:n, n] = ss.b * dphi
    J[n, :n] = -model.K_vco * ss.c
    J[n, n] = -model.K_vco * ss.h * dphi
    return J


def _make_equilibrium(model, x, theta):
    ev = np.linalg.eigvals(jacobian(model, np.append(x, theta)))
    ev = ev[np.lexsort((np.imag(ev), np.real(ev)))]
    return Equilibrium(np.asarray(x, dtype=float), theta, ev, classify_eigenvalues(ev))


def _fold(theta: float) -> float:
    # a tiny negative angle would round up to pi itself
    t = theta % math.pi
    return 0.0 if t >= math.pi else t


def find_equilibria(model: PhaseModel) -> list[Equilibrium]:
    """All equilibria with phase in ``[0, pi)``, sorted by phase."""
    ss = model.ss
    K, w, L = model.K_vco, model.omega_free, model.L
    try:
        Ainv_b = np.linalg.solve(ss.A, ss.b)
    except np.linalg.LinAlgError:
        Ainv_b = None
    if Ainv_b is None:
        # integrating filter: x' = 0 forces sin(2 theta) = 0
        if ss.order != 1 or ss.b[0] == 0 or ss.c[0] == 0:
            raise SingularFilterDC("filter has a singular state matrix and no integrator structure")
        x = np.array([w / (K * ss.c[0])])
        return [_make_equilibrium(model, x, 0.0), _make_equilibrium(model, x, math.pi / 2)]
    H0 = float(-ss.c @ Ainv_b + ss.h)
    if H0 == 0.0:
        if w != 0.0:
            return []
        raise SingularFilterDC("zero DC gain: every phase is an equilibrium")
    u = w / (K * H0 * L)
    if abs(u) > 1.0:
        return []
    half = 0.5 * math.asin(u)
    thetas = sorted({_fold(half), _fold(math.pi / 2 - half)})
    out = []
    for th in thetas:
        x = -Ainv_b * model.pd(th)
        out.append(_make_equilibrium(model, x, th))
    return out


def stable_equilibria(model: PhaseModel) -> np.ndarray:
    eqs = [e.as_vector() for e in find_equilibria(model) if e.stable]
    return np.array(eqs).reshape(-1, model.order + 1)


def default_budget(model: PhaseModel) -> float:
    return 200.0 * 2.0 * math.pi / model.natural_rate()


# ---------------------------------------------------------------- return map

CAPTURED = "Captured"
UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class ReturnResult:
    """First passage from ``theta = s`` to ``theta = s + pi`` (in the rotation direction)."""

    status: str            # "Return" | CAPTURED | UNDETERMINED
    x: float = math.nan
    period: float = math.nan

    @property
    def returned(self) -> bool:
        return self.status == "Return"


class ReturnMap:
    """Poincare map on the section ``theta = s (mod pi)`` of a first-order loop.

    The section is crossed in the rotation direction of the detuning; for
    ``omega_free < 0`` the work is done on the mirrored loop
    ``(x, theta, w) -> (-x, -theta, -w)``.
    """

    def __init__(self, model: PhaseModel, s: float = 0.0, cfg: IntegratorConfig | None = None,
                 budget: float | None = None, eps_lock: float = EPS_LOCK,
                 delta_lock: float = DELTA_LOCK, backend: str | None = None):
        if model.order != 1:
            raise ValueError("return maps need a first-order filter (2-D phase space)")
        self.model = model
        self.s = s
        self.sign = -1.0 if model.omega_free < 0 else 1.0
        self.work = model.mirrored() if self.sign < 0 else model
        self.cfg = cfg or IntegratorConfig()
        self.budget = budget if budget is not None else default_budget(model)
        self.eps_lock = eps_lock
        self.delta_lock = delta_lock
        self.backend = backend
        self._eq = stable_equilibria(self.work)
        self.calls = 0

    def __call__(self, x0: float, cfg: IntegratorConfig | None = None) -> ReturnResult:
        self.calls += 1
        sg = self.sign
        out = run_flow(self.work, (sg * x0, sg * self.s), self.budget, cfg or self.cfg,
                       section=sg * self.s, stop=kernels.STOP_LEVEL, k_target=1,
                       equilibria=self._eq, eps_lock=self.eps_lock,
                       delta_lock=self.delta_lock, backend=self.backend)
        status, t, y = out[0], out[1], out[2]
        if status == kernels.CROSSED:
            return ReturnResult("Return", sg * float(y[0]), t)
        if status == kernels.LOCKED:
            return ReturnResult(CAPTURED)
        return ReturnResult(UNDETERMINED)

    def g(self, x0: float, cfg: IntegratorConfig | None = None) -> float:
        """Displacement ``P(x) - x``; NaN where the map is undefined."""
        r = self(x0, cfg)
        return r.x - x0 if r.returned else math.nan


def return_map(model: PhaseModel, x0: float, s: float = 0.0, **kw) -> ReturnResult:
    return ReturnMap(model, s, **kw)(x0)


# ---------------------------------------------------------------- cycles


@dataclass(frozen=True)
class CycleResult:
    s: float
    x: float
    period: float
    multiplier: float
    kind: str  # Stable | Unstable | Semistable
    residual: float = 0.0

    def as_dict(self) -> dict:
        return {"s": self.s, "x_star": self.x, "period": self.period,
                "multiplier": self.multiplier, "class": self.kind}


@dataclass
class CycleScan:
    cycles: list[CycleResult]
    x_range: tuple[float, float]
    xs: np.ndarray
    g: np.ndarray
    undetermined: int = 0
    tangency: tuple[float, float] | None = None  # (x, g) of a near-touching minimum of |g|
    evaluations: int = 0
    notes: list[str] = field(default_factory=list)


def default_x_range(model: PhaseModel) -> tuple[float, float]:
    """Section interval that must contain every rotating cycle.

    With a stable filter pole any bounded invariant set obeys
    ``|x| <= |b| L / alpha``.  Integrating filters fall back to a box around
    the lock state.
    """
    ss = model.ss
    alpha = -float(ss.A[0, 0])
    if alpha > 0:
        bound = 1.02 * abs(ss.b[0]) * model.L / alpha
        return -bound, bound
    r = abs(model.omega_free / model.K_vco)
    lo, hi = -2.0 * r, 2.0 * r
    pad = 5.0 * abs(ss.b[0] * model.L)
    for e in find_equilibria(model):
        lo = min(lo, e.x[0] - pad)
        hi = max(hi, e.x[0] + pad)
    if hi - lo <= 0:
        lo, hi = -1.0, 1.0
    # crossings in the rotation direction need theta' of that sign on the
    # section; |h| L covers every section phase
    c = float(ss.c[0])
    if c != 0.0:
        edge = (abs(model.omega_free) / model.K_vco + abs(ss.h) * model.L) / abs(c)
        if (c > 0) == (model.omega_free >= 0):
            hi = min(hi, edge)
        else:
            lo = max(lo, -edge)
    return lo, hi


def _refine_root(P: ReturnMap, a: float, ga: float, b: float, gb: float, tol: float):
    """Safeguarded secant/bisection for ``g = 0`` on a sign-changing bracket."""
    x, gx = (a, ga) if abs(ga) < abs(gb) else (b, gb)
    for _ in range(200):
        if abs(gx) < tol or abs(b - a) < 1e-15 * max(1.0, abs(a)):
            break
        cand = b - gb * (b - a) / (gb - ga)
        lo, hi = min(a, b), max(a, b)
        # secant only if it lands well inside the bracket
        if not (lo + 0.05 * (hi - lo) < cand < hi - 0.05 * (hi - lo)):
            cand = 0.5 * (a + b)
        gc = P.g(cand, FINE)
        if math.isnan(gc):
            cand = 0.5 * (a + b)
            gc = P.g(cand, FINE)
            if math.isnan(gc):
                return None
        x, gx = cand, gc
        if (gc < 0) == (ga < 0):
            a, ga = cand, gc
        else:
            b, gb = cand, gc
    return x, gx


def _domain_edge(P: ReturnMap, x_def: float, x_undef: float, scale: float):
    """Bisect towards the edge of the map's domain; last defined point and its g."""
    gd = P.g(x_def)
    for _ in range(60):
        if abs(x_undef - x_def) < 1e-12 * scale:
            break
        m = 0.5 * (x_def + x_undef)
        gm = P.g(m)
        if math.isnan(gm):
            x_undef = m
        else:
            x_def, gd = m, gm
    return x_def, gd


def _brackets(P: ReturnMap, xs, gs, scale):
    out = []
    for i in range(len(xs) - 1):
        a, b = gs[i], gs[i + 1]
        if not (math.isnan(a) or math.isnan(b)):
            if (a < 0) != (b < 0):
                out.append((xs[i], a, xs[i + 1], b))
        elif math.isnan(a) != math.isnan(b):
            # a fixed point can hide in the sliver next to the domain edge
            if math.isnan(a):
                xe, ge = _domain_edge(P, xs[i + 1], xs[i], scale)
                if not math.isnan(ge) and (ge < 0) != (b < 0):
                    out.append((xe, ge, xs[i + 1], b))
            else:
                xe, ge = _domain_edge(P, xs[i], xs[i + 1], scale)
                if not math.isnan(ge) and (ge < 0) != (a < 0):
                    out.append((xs[i], a, xe, ge))
    return out


def _evaluate(P: ReturnMap, xs):
    gs = np.empty(len(xs))
    und = 0
    for i, x in enumerate(xs):
        r = P(float(x))
        if r.returned:
            gs[i] = r.x - x
        else:
            gs[i] = math.nan
            und += r.status == UNDETERMINED
    return gs, und


def _local_refine(P: ReturnMap, xs, gs, rounds=3, factor=10):
    """Zoom around the minimum of |g| looking for a hidden sign change."""
    finite = np.isfinite(gs)
    if not finite.any():
        return None, None
    for _ in range(rounds):
        i = int(np.nanargmin(np.where(finite, np.abs(gs), np.nan)))
        lo = xs[max(i - 1, 0)]
        hi = xs[min(i + 1, len(xs) - 1)]
        xs = np.linspace(lo, hi, 2 * factor + 1)
        gs, _ = _evaluate(P, xs)
        finite = np.isfinite(gs)
        if not finite.any():
            return None, None
        f = gs[finite]
        if np.any(f < 0) and np.any(f > 0):
            return xs, gs
    return xs, gs


def scan_cycles(model: PhaseModel, x_range=None, s: float = 0.0, grid: int = 400,
                tangency_window: float | None = None, refine_minimum: bool = False,
                cfg: IntegratorConfig | None = None, backend: str | None = None,
                budget: float | None = None) -> CycleScan:
    """Locate fixed points of the return map on ``x_range``.

    The grid is widened (twice, at most three times) whenever a fixed point
    lands within 5% of its edge.
    """
    scale = model.scale
    window = 1e-4 * scale if tangency_window is None else tangency_window
    P = ReturnMap(model, s, cfg=cfg, backend=backend, budget=budget)
    lo, hi = default_x_range(model) if x_range is None else map(float, x_range)
    notes = []
    for _ in range(4):
        xs = np.linspace(lo, hi, grid)
        gs, und = _evaluate(P, xs)
        brackets = _brackets(P, xs, gs, scale)
        tangency = None
        if not brackets:
            finite = np.isfinite(gs)
            if finite.any():
                j = int(np.nanargmin(np.where(finite, np.abs(gs), np.nan)))
                if abs(gs[j]) < window:
                    tangency = (float(xs[j]), float(gs[j]))
            if refine_minimum:
                rx, rg = _local_refine(P, xs, gs)
                if rx is not None:
                    brackets = _brackets(P, rx, rg, scale)
                    if brackets:
                        notes.append("sign change found by local refinement")
        cycles = []
        for a, ga, b, gb in brackets:
            # endpoints re-evaluated at the refinement tolerance
            ga2, gb2 = P.g(a, FINE), P.g(b, FINE)
            if math.isnan(ga2) or math.isnan(gb2) or (ga2 < 0) == (gb2 < 0):
                notes.append(f"bracket [{a:.6g}, {b:.6g}] lost under refinement")
                continue
            res = _refine_root(P, a, ga2, b, gb2, 1e-9 * scale)
            if res is None:
                continue
            cycles.append(_characterize(P, res[0], res[1], s, scale))
        width = hi - lo
        edge = [c for c in cycles if min(c.x - lo, hi - c.x) < 0.05 * width]
        if not edge or x_range is not None:
            break
        lo, hi = lo - width / 2, hi + width / 2
        notes.append(f"widened range to [{lo:.6g}, {hi:.6g}]")
    cycles = _dedupe(cycles, 1e-7 * scale)
    return CycleScan(cycles, (lo, hi), xs, gs, und, tangency, P.calls, notes)


def _dedupe(cycles, tol):
    out = []
    for c in sorted(cycles, key=lambda c: c.x):
        if out and abs(c.x - out[-1].x) < tol:
            continue
        out.append(c)
    return out


def _characterize(P: ReturnMap, x, gx, s, scale) -> CycleResult:
    d = 1e-6 * scale
    rp, rm = P(x + d, FINE), P(x - d, FINE)
    r0 = P(x, FINE)
    if rp.returned and rm.returned:
        mu = (rp.x - rm.x) / (2 * d)
    else:
        # one side left the domain: one-sided difference
        r1 = rp if rp.returned else rm
        sgn = 1 if rp.returned else -1
        mu = (r1.x - r0.x) / (sgn * d)
    if abs(mu - 1.0) < TANGENCY_MULTIPLIER:
        kind = "Semistable"
    elif abs(mu) < 1.0:
        kind = "Stable"
    else:
        kind = "Unstable"
    return CycleResult(s, float(x), r0.period, float(mu), kind, float(abs(gx)))


def find_cycles(model: PhaseModel, x_range=None, s: float = 0.0, grid: int = 400,
                **kw) -> list[CycleResult]:
    """Rotating cycles crossing ``theta = s``, sorted by section coordinate."""
    return scan_cycles(model, x_range, s, grid, **kw).cycles


# ---------------------------------------------------------------- trajectories


@dataclass(frozen=True)
class Outcome:
    kind: str  # Lock | Cycle | Undetermined
    t: float
    state: np.ndarray
    equilibrium: Equilibrium | None = None
    section_x: tuple = ()

    def as_dict(self) -> dict:
        d = {"outcome": self.kind, "t": self.t, "state": [float(v) for v in self.state]}
        if self.equilibrium is not None:
            d["equilibrium"] = {"x": [float(v) for v in self.equilibrium.x],
                                "theta": self.equilibrium.theta}
        if self.section_x:
            d["section_x"] = [float(v) for v in self.section_x[-3:]]
        return d


def classify_trajectory(model: PhaseModel, init: LoopState, budget: float | None = None,
                        s: float = 0.0, cfg: IntegratorConfig | None = None,
                        backend: str | None = None) -> Outcome:
    """Lock, rotating-cycle or undetermined fate of a single initial condition."""
    cfg = cfg or IntegratorConfig()
    budget = default_budget(model) if budget is None else budget
    sg = -1.0 if model.omega_free < 0 else 1.0
    work = model.mirrored() if sg < 0 else model
    eqs = [e for e in find_equilibria(work) if e.stable]
    eq_arr = np.array([e.as_vector() for e in eqs]).reshape(-1, model.order + 1)
    scale = model.scale
    s_w = sg * s
    y = sg * init.as_vector()
    t = 0.0
    offset = 0.0
    xs: list[float] = []
    first = True
    while t < budget:
        out = run_flow(work, y, budget - t, cfg, section=s_w, stop=kernels.STOP_ANY,
                       equilibria=eq_arr, eps_lock=EPS_LOCK, delta_lock=DELTA_LOCK,
                       backend=backend)
        status, dt, y, level = out[0], out[1], out[2], out[3]
        t += dt
        if status == kernels.LOCKED:
            eq = _nearest(eqs, y)
            return Outcome("Lock", t, _unmirror(y, offset, sg), _unmirror_eq(model, eq, sg))
        if status != kernels.CROSSED:
            break
        # restart on level 0 of the section; the field is pi-periodic
        offset += y[-1] - s_w
        y = y.copy()
        y[-1] = s_w
        if first or level != 1:
            xs = [float(y[0])]
        else:
            xs.append(float(y[0]))
        first = False
        if len(xs) >= 4 and np.all(np.abs(np.diff(xs[-4:])) < 1e-8 * scale):
            return Outcome("Cycle", t, _unmirror(y, offset, sg), None, tuple(sg * v for v in xs))
    return Outcome("Undetermined", t, _unmirror(y, offset, sg), None, tuple(sg * v for v in xs))


def _nearest(eqs, y):
    def dist(e):
        d = y[-1] - e.theta
        d -= math.pi * math.floor(d / math.pi + 0.5)
        return float(np.sum((y[:-1] - e.x) ** 2)) + d * d
    return min(eqs, key=dist)


def _unmirror(y, wind, sg):
    v = np.array(y, dtype=float)
    v[-1] += wind
    return sg * v


def _unmirror_eq(model, eq, sg):
    if sg > 0:
        return eq
    th = (-eq.theta) % math.pi
    return _make_equilibrium(model, -eq.x, th)


# ---------------------------------------------------------------- hidden check


@dataclass
class HiddenReport:
    probes: int
    locked: int
    cycled: int
    undetermined: int
    hidden_consistent: bool
    per_equilibrium: list = field(default_factory=list)


def hidden_check(model: PhaseModel, n: int = 100, magnitude: float = 1e-3, seed: int = 0,
                 budget: float | None = None, backend: str | None = None) -> HiddenReport:
    """Fate of small perturbations of every equilibrium.

    A rotating attractor that no perturbation reaches is flagged as hidden
    (a numerical indication only).
    """
    rng = np.random.default_rng(seed)
    eqs = find_equilibria(model)
    tot = {"Lock": 0, "Cycle": 0, "Undetermined": 0}
    per = []
    for e in eqs:
        cnt = {"Lock": 0, "Cycle": 0, "Undetermined": 0}
        J = jacobian(model, e)
        ev, vecs = np.linalg.eig(J)
        unstable = [np.real(vecs[:, i]) for i in range(len(ev)) if np.real(ev[i]) > 0]
        for j in range(n):
            if unstable and j % 2 == 0:
                v = unstable[(j // 2) % len(unstable)] * (1 if (j // 2) % 2 == 0 else -1)
                v = v + 0.1 * rng.standard_normal(len(v))
            else:
                v = rng.standard_normal(model.order + 1)
            v = magnitude * v / np.linalg.norm(v)
            y = e.as_vector() + v
            o = classify_trajectory(model, LoopState.from_vector(y), budget=budget, backend=backend)
            cnt[o.kind] += 1
        per.append({"theta": e.theta, "kind": e.kind, **cnt})
        for k in tot:
            tot[k] += cnt[k]
    return HiddenReport(n * len(eqs), tot["Lock"], tot["Cycle"], tot["Undetermined"],
                        tot["Cycle"] == 0 and tot["Undetermined"] == 0, per)
