"""Pull-in frequency by bisection on the rotating-cycle predicate."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import Undetermined, find_equilibria, scan_cycles
from .model import LeadLag, PDCharacteristic, PhaseModel


def cycle_exists(model: PhaseModel, grid: int = 400, **kw) -> tuple[bool, dict]:
    """Whether the loop has a rotating cycle; evidence records the search."""
    scan = scan_cycles(model, grid=grid, refine_minimum=True, **kw)
    finite = np.isfinite(scan.g)
    if finite.any():
        j = int(np.nanargmin(np.where(finite, np.abs(scan.g), np.nan)))
        gmin, xmin = float(scan.g[j]), float(scan.xs[j])
    else:
        gmin = xmin = math.nan
    evidence = {
        "omega": model.omega_free,
        "cycles": [c.as_dict() for c in scan.cycles],
        "min_abs_g": abs(gmin) if math.isfinite(gmin) else None,
        "min_g_at": xmin if math.isfinite(xmin) else None,
        "equilibria": len(find_equilibria(model)),
        "undetermined": scan.undetermined,
        "evaluations": scan.evaluations,
    }
    if scan.cycles:
        return True, evidence
    if scan.undetermined:
        raise Undetermined(f"{scan.undetermined} return-map probes exhausted their budget "
                           f"at omega={model.omega_free:.17g}", model.omega_free)
    return False, evidence


@dataclass
class PullInResult:
    omega_lo: float
    omega_hi: float
    status: str  # Bounded | ExceedsSearchLimit
    probes: list = field(default_factory=list)

    @property
    def omega_pullin(self) -> float:
        return self.omega_lo

    def as_dict(self) -> dict:
        return {"omega_lo": self.omega_lo,
                "omega_hi": self.omega_hi if math.isfinite(self.omega_hi) else None,
                "status": self.status,
                "probes": self.probes}


def _family(model_family):
    if isinstance(model_family, PhaseModel):
        return model_family.with_omega
    return model_family


def default_search_max(template: PhaseModel) -> float:
    hold = template.hold_in()
    if math.isfinite(hold):
        return 1e3 * hold
    return 1e3 * template.K_vco * template.L


def pull_in_estimate(model_family, tol: float, omega_max: float | None = None,
                     **kw) -> PullInResult:
    """Bisection on ``[0, min(hold-in, omega_max)]`` for the onset of rotating cycles.

    ``model_family`` is a template model (its detuning is replaced) or a
    callable ``omega -> PhaseModel``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    make = _family(model_family)
    template = make(0.0)
    hold = template.hold_in()
    omega_max = default_search_max(template) if omega_max is None else omega_max
    probes = []

    def probe(w):
        exists, ev = cycle_exists(make(w), **kw)
        probes.append({"omega": w, "cycle": exists, "min_abs_g": ev["min_abs_g"],
                       "cycles": len(ev["cycles"])})
        return exists

    lo = 0.0
    if probe(lo):
        raise RuntimeError("rotating cycle found at zero detuning")
    if hold <= omega_max:
        hi = hold
        probes.append({"omega": hi, "cycle": True, "reason": "hold-in bound"})
    else:
        if not probe(omega_max):
            return PullInResult(omega_max, math.inf, "ExceedsSearchLimit", probes)
        hi = omega_max
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            hi = mid
        else:
            lo = mid
    return PullInResult(lo, hi, "Bounded", probes)


def brute_force_pull_in(model_family, step: float, omega_max: float | None = None, **kw):
    """Uniform scan of the predicate; first detuning with a cycle and any non-monotone flips."""
    make = _family(model_family)
    template = make(0.0)
    top = min(template.hold_in(), default_search_max(template) if omega_max is None else omega_max)
    ws = np.arange(0.0, top, step)
    flags = [cycle_exists(make(float(w)), **kw)[0] for w in ws]
    first = next((float(w) for w, f in zip(ws, flags) if f), top)
    flips = [float(ws[i + 1]) for i in range(len(flags) - 1) if flags[i] and not flags[i + 1]]
    return first, flips


@dataclass(frozen=True)
class DiagramRow:
    a: float
    K_vco: float
    omega_pullin: float
    normalized: float
    status: str

    def csv_fields(self):
        return [self.a, self.K_vco, self.omega_pullin, self.normalized, self.status]


def _row(job):
    a, K, alpha, beta, L, tol = job
    try:
        model = PhaseModel(LeadLag(a, alpha, beta), K, 0.0, PDCharacteristic(L))
        res = pull_in_estimate(model, tol)
    except Undetermined:
        return DiagramRow(a, K, math.nan, math.nan, "Undetermined")
    except Exception as exc:  # noqa: BLE001 - reported per row
        return DiagramRow(a, K, math.nan, math.nan, f"Error:{type(exc).__name__}")
    return DiagramRow(a, K, res.omega_lo, res.omega_lo / K, res.status)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("PHASELOCK_WORKERS", "1")))
    except ValueError:
        return 1


def sweep_diagram(a_values, K_grid, alpha: float, beta: float, L: float = 1.0,
                  tol: float | None = None, workers: int | None = None,
                  rel_tol: float = 1e-3) -> list[DiagramRow]:
    """Pull-in frequency over an ``(a, K)`` grid; rows follow input order.

    ``tol`` defaults to ``rel_tol`` times each row's hold-in frequency.
    """
    a_values, K_grid = list(a_values), list(K_grid)
    if not a_values or not K_grid:
        raise ValueError("empty parameter grid")
    jobs = []
    for a in a_values:
        for K in K_grid:
            t = tol if tol is not None else rel_tol * K * (beta / alpha) * L
            jobs.append((float(a), float(K), alpha, beta, L, t))
    workers = default_workers() if workers is None else workers
    if workers <= 1:
        return [_row(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_row, jobs))
