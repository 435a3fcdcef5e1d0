"""Waveform-level optical front end: 90-degree hybrid, photodiodes, TIA, mixer.

Used to confirm that the detector output seen by the loop filter depends on
the phase difference only, which is what licenses the phase-space model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as spi

from .model import ModelError, OpticalParams


@dataclass(frozen=True)
class FieldQuad:
    E1: float
    E2: float
    E3: float
    E4: float


@dataclass(frozen=True)
class CurrentQuad:
    I1: float
    I2: float
    I3: float
    I4: float


def _check_m(m):
    if np.any((np.asarray(m) != 1) & (np.asarray(m) != -1)):
        raise ModelError("data symbol m must be +1 or -1")


def hybrid_outputs(theta1, theta2, m, params: OpticalParams) -> FieldQuad:
    _check_m(m)
    s = 0.5 * m * np.sqrt(params.P1) * np.cos(theta1)
    lo = 0.5 * np.sqrt(params.P2) * np.cos(theta2)
    lo_q = 0.5 * np.sqrt(params.P2) * np.cos(theta2 + math.pi / 2)
    return FieldQuad(s + lo, s - lo, s + lo_q, s - lo_q)


def photocurrents(theta1, theta2, m, params: OpticalParams) -> CurrentQuad:
    _check_m(m)
    P1, P2, R = params.P1, params.P2, params.R
    d = theta1 - theta2
    beat_i = 2.0 * m * np.sqrt(P1 * P2) * np.cos(d)
    beat_q = 2.0 * m * np.sqrt(P1 * P2) * np.cos(d - math.pi / 2)
    k = R / 8.0
    return CurrentQuad(k * (P1 + P2 + beat_i), k * (P1 + P2 - beat_i),
                       k * (P1 + P2 + beat_q), k * (P1 + P2 - beat_q))


def tia_outputs(currents: CurrentQuad, A_tia: float):
    """In-phase and quadrature TIA outputs ``(I_I, I_Q)``."""
    return A_tia * currents.I1 - A_tia * currents.I2, A_tia * currents.I3 - A_tia * currents.I4


def pd_identity_residual(theta1, theta2, m, params: OpticalParams):
    """``I_I I_Q`` minus the closed form ``L sin(2 (theta1 - theta2))``."""
    ii, iq = tia_outputs(photocurrents(theta1, theta2, m, params), params.A_tia)
    return ii * iq - params.pd_amplitude * np.sin(2.0 * (theta1 - theta2))


def squarelaw_consistency(params: OpticalParams, omega1: float = 1e4, omega2: float = 1e4,
                          phase1: float = 0.0, phase2: float = 0.0, m: int = 1,
                          rtol: float = 1e-6) -> dict:
    """Carrier-period average of ``R E_k(t)^2`` against the photocurrent formulas.

    The photodiode is modelled as a square-law detector followed by averaging
    over one carrier period; the result should reproduce the photocurrents up
    to quadrature error.  ``failed`` lists the indices ``k`` that miss.
    """
    _check_m(m)
    period = 2.0 * math.pi / omega1
    r = params.R

    def power(t, k):
        q = hybrid_outputs(omega1 * t + phase1, omega2 * t + phase2, m, params)
        e = (q.E1, q.E2, q.E3, q.E4)[k]
        return r * e * e

    avg = []
    for k in range(4):
        val, _ = spi.quad(power, 0.0, period, args=(k,), epsabs=0.0, epsrel=1e-12, limit=200)
        avg.append(val / period)
    # the beat term is slowly varying: compare against its period-average too
    ref = []
    for k in range(4):
        def cur(t, k=k):
            c = photocurrents(omega1 * t + phase1, omega2 * t + phase2, m, params)
            return (c.I1, c.I2, c.I3, c.I4)[k]
        val, _ = spi.quad(cur, 0.0, period, epsabs=0.0, epsrel=1e-12, limit=200)
        ref.append(val / period)
    dev = [abs(a - b) / max(abs(b), 1e-300) for a, b in zip(avg, ref)]
    return {"averaged": avg, "expected": ref, "max_deviation": max(dev),
            "failed": [k + 1 for k, d in enumerate(dev) if d > rtol]}
