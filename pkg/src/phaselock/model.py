"""Closed-loop phase model of the optical Costas loop.

The loop is described in the phase space by a linear loop filter driven by
the phase-detector characteristic ``L sin(2 theta)`` and a linear VCO::

    x'     = A x + b phi(theta)
    theta' = w_free - K (c.x + h phi(theta))

Frequencies are in rad/s everywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np


class ModelError(ValueError):
    """Invalid model parameters."""


@dataclass(frozen=True)
class OpticalParams:
    """Laser powers, photodetector responsivity and TIA gain."""

    P1: float
    P2: float
    R: float
    A_tia: float
    omega1: float = 0.0

    def __post_init__(self):
        for name in ("P1", "P2", "R", "A_tia"):
            if not np.all(np.asarray(getattr(self, name)) > 0):
                raise ModelError(f"{name} must be positive")

    @property
    def pd_amplitude(self) -> float:
        return self.R**2 * self.A_tia**2 * self.P1 * self.P2 / 8.0


@dataclass(frozen=True)
class PDCharacteristic:
    """Phase-detector output ``L sin(2 theta)``; period pi, odd."""

    L: float = 1.0

    def __post_init__(self):
        if not self.L > 0:
            raise ModelError("PD amplitude L must be positive")

    @classmethod
    def from_optics(cls, params: OpticalParams) -> "PDCharacteristic":
        return cls(params.pd_amplitude)

    def __call__(self, theta):
        if np.ndim(theta):
            return self.L * np.sin(2.0 * np.asarray(theta, dtype=float))
        return self.L * math.sin(2.0 * theta)

    def derivative(self, theta: float) -> float:
        return 2.0 * self.L * math.cos(2.0 * theta)


def pd_output(theta: float, pd: PDCharacteristic) -> float:
    return pd(theta)


@dataclass(frozen=True)
class StateSpace:
    """Filter realization ``H(s) = c (sI - A)^-1 b + h``."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    h: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).ravel()
        c = np.atleast_1d(np.asarray(self.c, dtype=float)).ravel()
        n = A.shape[0]
        if A.shape != (n, n) or b.shape != (n,) or c.shape != (n,):
            raise ModelError(
                f"inconsistent state-space dimensions: A{A.shape}, b{b.shape}, c{c.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))
                and np.all(np.isfinite(c)) and math.isfinite(self.h)):
            raise ModelError("state-space entries must be finite")
        for arr in (A, b, c):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "h", float(self.h))

    @property
    def order(self) -> int:
        return self.A.shape[0]

    def transfer(self, s: complex) -> complex:
        n = self.order
        return complex(self.c @ np.linalg.solve(s * np.eye(n) - self.A, self.b.astype(complex)) + self.h)

    def dc_gain(self) -> float:
        """``H(0) = -c A^-1 b + h``; ``inf`` for an integrating filter."""
        try:
            return float(-self.c @ np.linalg.solve(self.A, self.b) + self.h)
        except np.linalg.LinAlgError:
            return math.inf

    def __eq__(self, other):
        if not isinstance(other, StateSpace):
            return NotImplemented
        return (np.array_equal(self.A, other.A) and np.array_equal(self.b, other.b)
                and np.array_equal(self.c, other.c) and self.h == other.h)

    def __hash__(self):
        return hash((self.A.tobytes(), self.b.tobytes(), self.c.tobytes(), self.h))


@dataclass(frozen=True)
class LeadLag:
    """``H(s) = (a s + beta) / (s + alpha)``."""

    a: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ModelError("lead-lag pole alpha must be positive")
        if not self.beta > 0:
            raise ModelError("lead-lag beta must be positive")
        # a = 1 is the all-pass limit used to probe the filterless loop
        if not 0 <= self.a <= 1:
            raise ModelError("lead-lag a must lie in [0, 1]")

    def transfer(self, s: complex) -> complex:
        return (self.a * s + self.beta) / (s + self.alpha)

    def realize(self) -> StateSpace:
        return leadlag_realize(self.a, self.alpha, self.beta)


@dataclass(frozen=True)
class PI:
    """Active proportional-integral filter ``1/(tau1 s) + tau2/tau1``."""

    tau1: float
    tau2: float

    def __post_init__(self):
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise ModelError("PI time constants must be positive")

    def transfer(self, s: complex) -> complex:
        return 1.0 / (self.tau1 * s) + self.tau2 / self.tau1

    def realize(self) -> StateSpace:
        return pi_realize(self.tau1, self.tau2)


FilterSpec = Union[LeadLag, PI, StateSpace]


def leadlag_realize(a: float, alpha: float, beta: float) -> StateSpace:
    if not alpha > 0:
        raise ModelError("lead-lag pole alpha must be positive")
    return StateSpace([[-alpha]], [1.0], [beta - a * alpha], a)


def pi_realize(tau1: float, tau2: float) -> StateSpace:
    if not (tau1 > 0 and tau2 >= 0):
        raise ModelError("PI time constants must be positive")
    return StateSpace([[0.0]], [1.0 / tau1], [1.0], tau2 / tau1)


def realize(filt: FilterSpec) -> StateSpace:
    return filt if isinstance(filt, StateSpace) else filt.realize()


@dataclass(frozen=True)
class LoopState:
    x: np.ndarray
    theta: float

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float)).ravel()
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "theta", float(self.theta))

    def as_vector(self) -> np.ndarray:
        return np.append(self.x, self.theta)

    @classmethod
    def from_vector(cls, v) -> "LoopState":
        v = np.asarray(v, dtype=float)
        return cls(v[:-1], v[-1])


@dataclass(frozen=True)
class PhaseModel:
    """Closed loop: filter realization, VCO gain, free-running detuning, PD."""

    filter: FilterSpec
    K_vco: float
    omega_free: float
    pd: PDCharacteristic = field(default_factory=PDCharacteristic)

    def __post_init__(self):
        if not self.K_vco > 0:
            raise ModelError("K_vco must be positive")
        if not math.isfinite(self.omega_free):
            raise ModelError("omega_free must be finite")
        object.__setattr__(self, "_ss", realize(self.filter))

    @property
    def ss(self) -> StateSpace:
        return self._ss

    @property
    def order(self) -> int:
        return self._ss.order

    @property
    def L(self) -> float:
        return self.pd.L

    def with_omega(self, omega_free: float) -> "PhaseModel":
        return PhaseModel(self.filter, self.K_vco, omega_free, self.pd)

    def hold_in(self) -> float:
        """Largest detuning for which equilibria exist, ``K H(0) L``."""
        return self.K_vco * abs(self._ss.dc_gain()) * self.L

    @property
    def scale(self) -> float:
        return max(1.0, abs(self.omega_free / self.K_vco))

    def rhs(self, x: np.ndarray, theta: float):
        ss = self._ss
        p = self.L * math.sin(2.0 * theta)
        dx = ss.A @ x + ss.b * p
        dth = self.omega_free - self.K_vco * (float(ss.c @ x) + ss.h * p)
        return dx, dth

    def rhs_vector(self, y: np.ndarray) -> np.ndarray:
        dx, dth = self.rhs(y[:-1], y[-1])
        return np.append(dx, dth)

    def natural_rate(self) -> float:
        """Slowest characteristic rate of the loop (1/s), used for time budgets."""
        ss = self._ss
        KL = self.K_vco * self.L
        rates = [abs(ev) for ev in np.linalg.eigvals(ss.A) if abs(ev) > 0]
        rates.append(math.sqrt(2.0 * KL * abs(float(ss.c @ ss.b))))
        rates.append(2.0 * KL * abs(ss.h))
        rates.append(abs(self.omega_free))
        rates = [r for r in rates if r > 0]
        return min(rates) if rates else 1.0

    def fastest_rate(self) -> float:
        ss = self._ss
        KL = self.K_vco * self.L
        r = (abs(self.omega_free) + float(np.max(np.abs(np.linalg.eigvals(ss.A)), initial=0.0))
             + 2.0 * KL * abs(ss.h) + math.sqrt(2.0 * KL * abs(float(ss.c @ ss.b))))
        return r if r > 0 else 1.0

    def mirrored(self) -> "PhaseModel":
        """Model under ``(x, theta, w) -> (-x, -theta, -w)``; the flow is equivariant."""
        return self.with_omega(-self.omega_free)


def phase_rhs(state: LoopState, model: PhaseModel) -> LoopState:
    dx, dth = model.rhs(state.x, state.theta)
    return LoopState(dx, dth)


def initial_vco_frequency(model: PhaseModel, x0, theta0: float, omega2_free: float = 0.0) -> float:
    """VCO frequency at t = 0 given the filter state and initial phase error."""
    ss = model.ss
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    g0 = float(ss.c @ x0) + ss.h * model.pd(theta0)
    return omega2_free + model.K_vco * g0
