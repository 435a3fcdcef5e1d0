"""One-parameter search for the lumped loop gain ``K L`` at fixed detuning.

Only the product ``K L`` enters the dynamics, so a gain search is a 1-D scan.
The target regime has a stable equilibrium coexisting with exactly one stable
and one unstable rotating cycle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import Undetermined, find_equilibria, scan_cycles
from .model import PDCharacteristic, PhaseModel


@dataclass(frozen=True)
class GainProbe:
    gain: float
    stable: int
    unstable: int
    semistable: int
    stable_equilibrium: bool
    min_abs_g: float
    cycles: tuple = ()

    @property
    def coexistence(self) -> bool:
        return self.stable == 1 and self.unstable == 1 and self.semistable == 0 \
            and self.stable_equilibrium


@dataclass
class GainSearch:
    omega: float
    probes: list[GainProbe] = field(default_factory=list)

    @property
    def found(self) -> GainProbe | None:
        return next((p for p in self.probes if p.coexistence), None)

    def regimes(self) -> list[tuple[float, float, str]]:
        """Contiguous gain intervals with the same (stable, unstable, equilibrium) signature."""
        out = []
        for p in self.probes:
            sig = f"{p.stable}S{p.unstable}U{p.semistable}T" + ("+eq" if p.stable_equilibrium else "")
            if out and out[-1][2] == sig:
                out[-1] = (out[-1][0], p.gain, sig)
            else:
                out.append((p.gain, p.gain, sig))
        return out


def probe_gain(filt, omega: float, gain: float, grid: int = 400) -> GainProbe:
    model = PhaseModel(filt, gain, omega, PDCharacteristic(1.0))
    scan = scan_cycles(model, grid=grid, refine_minimum=True)
    if scan.undetermined and not scan.cycles:
        raise Undetermined(f"return map undetermined at gain {gain:.17g}", omega)
    kinds = [c.kind for c in scan.cycles]
    g = scan.g[np.isfinite(scan.g)]
    return GainProbe(gain, kinds.count("Stable"), kinds.count("Unstable"),
                     kinds.count("Semistable"),
                     any(e.stable for e in find_equilibria(model)),
                     float(np.min(np.abs(g))) if len(g) else math.nan,
                     tuple(scan.cycles))


def gain_grid(filt, omega: float, upper: float = 20.0, n: int = 60) -> np.ndarray:
    """Log-spaced gains from just above the hold-in limit to ``upper`` times it."""
    k0 = abs(omega) / abs(filt.realize().dc_gain())
    return np.geomspace(1.001 * k0, upper * k0, n)


def coexistence_gain_search(filt, omega: float, gains=None, grid: int = 400,
                            stop_at_first: bool = False) -> GainSearch:
    gains = gain_grid(filt, omega) if gains is None else gains
    out = GainSearch(omega)
    for k in gains:
        p = probe_gain(filt, omega, float(k), grid)
        out.probes.append(p)
        if stop_at_first and p.coexistence:
            break
    return out
