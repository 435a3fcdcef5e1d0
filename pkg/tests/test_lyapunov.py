import math

import numpy as np
import pytest

from phaselock.lyapunov import (PiParams, certify_global_convergence, chain_rule_vdot,
                                lasalle_check, lyapunov_v, lyapunov_vdot, monotone_excess,
                                sign_grid, track)
from phaselock.model import LoopState, ModelError
from phaselock.pullin import cycle_exists


def test_v_examples():
    p = PiParams(1.0, 0.5, 2.0, 3.0)
    assert lyapunov_v(1.5, 0.0, p) == 0.0
    assert lyapunov_v(1.5, math.pi / 2, p) == pytest.approx(1.0)
    assert lyapunov_v(1.0, 0.0, PiParams(2.0, 0.5, 1.0, 0.0)) == pytest.approx(1.0)


def test_vdot_examples():
    p = PiParams(2.0, 0.5, 3.0, 1.0)
    assert lyapunov_vdot(0.3, 0.0, p) == 0.0
    assert lyapunov_vdot(0.3, math.pi / 4, p) == pytest.approx(-3.0 * 0.5 / 2.0)


def test_vdot_matches_chain_rule():
    rng = np.random.default_rng(11)
    for w in (0.0, 1.0, 37.0, 1e3):
        p = PiParams(0.7, 0.2, 2.5, w)
        x = rng.uniform(-10, 10, 10_000) + w / 2.5
        th = rng.uniform(-math.pi, math.pi, 10_000)
        a, b = lyapunov_vdot(x, th, p), chain_rule_vdot(x, th, p)
        assert np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))) < 1e-9


def test_sign_grid_clean():
    p = PiParams(1.0, 0.5, 1.0)
    omegas = [0.0] + list(10 ** np.random.default_rng(2).uniform(-2, 4, 5))
    max_vdot, violations = sign_grid(p, 1000, 1000, omegas=omegas)
    assert max_vdot <= 0.0 and violations == []


def test_lasalle_set_is_left():
    assert lasalle_check(PiParams(1.0, 0.5, 1.0, 5.0)) == []


def test_saddle_stays():
    p = PiParams(1.0, 0.5, 1.0, 4.0)
    rec = track(p, LoopState([4.0], math.pi / 2), budget=5.0)
    assert rec["V_end"] == rec["V0"] == pytest.approx(1.0)


def test_monotone_excess():
    assert monotone_excess(np.array([3.0, 2.0, 2.5, 1.0])) == pytest.approx(0.5)
    assert monotone_excess(np.array([3.0, 2.0, 1.0])) == 0.0


def test_convergence_report_small():
    rep = certify_global_convergence(PiParams(1.0, 0.5, 1.0), [100.0], n_inits=5, grid=100)
    d = rep.as_dict()
    assert d["convergence"] == "pass" and d["violations"] == [] and d["grid_size"] == 10_000
    assert all(r["outcome"] == "Lock" and r["monotone"] for r in d["runs"])


@pytest.mark.parametrize("w", [1.0, 100.0, 1000.0])
def test_no_cycles_for_pi(w):
    assert not cycle_exists(PiParams(1.0, 0.5, 1.0, w).model())[0]


def test_params_validated():
    with pytest.raises(ModelError):
        PiParams(0.0, 1.0, 1.0)
