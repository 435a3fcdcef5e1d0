import math

import numpy as np
import pytest

from phaselock import kernels
from phaselock.analysis import find_equilibria
from phaselock.integrate import (IntegratorConfig, StepUnderflow, integrate,
                                 live_section_crossings, run_flow, section_crossings,
                                 wrap_display)
from phaselock.model import PI, LeadLag, LoopState, PhaseModel

ALPHA = 63.1656
# a = 1 with beta = alpha gives c = 0: at theta = 0 and zero detuning the phase
# stays put and the filter obeys x' = -alpha x
DECAY = PhaseModel(LeadLag(1.0, ALPHA, ALPHA), 10.0, 0.0)


def test_linear_decay():
    # the exact value is 3.5e-28, so the absolute floor must sit below it
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-40)
    traj = integrate(DECAY, LoopState([1.0], 0.0), 1.0, cfg)
    assert traj.theta[-1] == 0.0
    assert abs(traj.x[-1, 0] / math.exp(-ALPHA) - 1.0) < 1e-8


def test_tolerance_refinement_reduces_error():
    m = PhaseModel(LeadLag(0.2922, ALPHA, ALPHA), 95.0, 89.5)
    init = LoopState([0.004], 0.3)
    ref = integrate(m, init, 0.5, IntegratorConfig(rel_tol=1e-14, abs_tol=1e-16)).y[-1]
    errs = []
    for tol in (1e-6, 1e-8, 1e-10):
        y = integrate(m, init, 0.5, IntegratorConfig(rel_tol=tol, abs_tol=tol * 1e-3)).y[-1]
        errs.append(np.max(np.abs(y - ref)))
    assert errs[0] > errs[1] > errs[2]


def test_fifth_order_fixed_steps():
    # loose tolerances never reject, so the step cap fixes the step
    errs = []
    for h in (1 / 256, 1 / 512):
        cfg = IntegratorConfig(rel_tol=10.0, abs_tol=10.0, max_step=h)
        x = integrate(DECAY, LoopState([1.0], 0.0), 0.25, cfg).x[-1, 0]
        errs.append(abs(x / math.exp(-ALPHA * 0.25) - 1.0))
    ratio = errs[0] / errs[1]
    assert 20 < ratio < 45  # 2**5 = 32


def test_equilibrium_start_is_constant():
    m = PhaseModel(LeadLag(0.3, 20.0, 25.0), 40.0, 0.0)
    eq = [e for e in find_equilibria(m) if e.stable][0]
    traj = integrate(m, LoopState(eq.x, eq.theta), 2.0)
    assert np.all(traj.y == traj.y[0])


def test_pi_model_locks():
    m = PhaseModel(PI(1.0, 0.5), 1.0, 3.0)
    traj = integrate(m, LoopState([1.0], 2.0), 200.0)
    _, dth = m.rhs(traj.x[-1], traj.theta[-1])
    assert abs(dth) < 1e-6


def test_times_strictly_increasing_and_unwrapped_phase():
    m = PhaseModel(LeadLag(0.2922, ALPHA, ALPHA), 95.0, 89.5)
    traj = integrate(m, LoopState([0.0], 0.3), 2.0)
    assert np.all(np.diff(traj.t) > 0)
    assert traj.theta[-1] > 10 * math.pi  # many rotations, no folding


def test_dense_output_accuracy():
    m = PhaseModel(LeadLag(0.2922, ALPHA, ALPHA), 95.0, 89.5)
    init = LoopState([0.002], 0.1)
    traj = integrate(m, init, 0.3)
    for t in np.linspace(0.01, 0.29, 15):
        exact = integrate(m, init, t, IntegratorConfig(rel_tol=1e-13, abs_tol=1e-16)).y[-1]
        assert np.max(np.abs(traj(t) - exact)) < 1e-7
    with pytest.raises(ValueError):
        traj(0.5)


def test_constant_rotation_crossings():
    # a = 1, beta = alpha: theta' = w - K L sin(2 theta); with K tiny, nearly uniform rotation
    m = PhaseModel(LeadLag(1.0, 5.0, 5.0), 1e-9, 10.0)
    traj = integrate(m, LoopState([0.0], 0.05), 3.0)
    cr = section_crossings(traj, 0.0)
    dt = np.diff([t for t, _ in cr])
    assert len(cr) == 9
    assert np.allclose(dt, math.pi / 10.0, rtol=1e-7)


def test_crossing_levels_advance_by_pi():
    m = PhaseModel(LeadLag(0.2922, ALPHA, ALPHA), 95.0, 89.5)
    traj = integrate(m, LoopState([0.0], 0.3), 1.0)
    cr = section_crossings(traj, 0.2)
    th = np.array([traj(t)[-1] for t, _ in cr])
    assert len(th) > 3
    assert np.allclose(np.diff(th), math.pi, atol=1e-9)
    assert np.allclose(th, 0.2 + math.pi * np.round((th - 0.2) / math.pi), atol=1e-10)


def test_live_and_dense_crossings_agree():
    m = PhaseModel(LeadLag(0.2922, ALPHA, ALPHA), 95.0, 89.5)
    init = LoopState([0.001], 0.4)
    a = section_crossings(integrate(m, init, 0.5), 0.0)
    b = live_section_crossings(m, init, 0.5, 0.0)
    assert len(a) == len(b)
    for (ta, xa), (tb, xb) in zip(a, b):
        assert abs(ta - tb) < 1e-8 and abs(xa[0] - xb[0]) < 1e-8


def test_locked_trajectory_has_finite_crossings():
    m = PhaseModel(LeadLag(0.3, 20.0, 20.0), 100.0, 60.0)
    traj = integrate(m, LoopState([0.0], 0.3), 5.0)
    cr = section_crossings(traj, 0.0)
    assert cr == [] or cr[-1][0] < 1.0


def test_wrap_display():
    assert wrap_display(0.0) == 0.0
    assert wrap_display(math.pi) == pytest.approx(0.0, abs=1e-15)
    assert wrap_display(3 * math.pi / 4) == pytest.approx(-math.pi / 4)
    w = wrap_display(np.linspace(-20, 20, 101))
    assert np.all((w >= -math.pi / 2) & (w < math.pi / 2))


def test_deterministic_csv():
    m = PhaseModel(LeadLag(0.2922, ALPHA, ALPHA), 95.0, 89.5)
    a = integrate(m, LoopState([0.0], 0.3), 0.5).to_csv()
    b = integrate(m, LoopState([0.0], 0.3), 0.5).to_csv()
    assert a == b
    head, first = a.splitlines()[:2]
    assert head == "t,theta_delta,x_0"
    assert first == "0,0.29999999999999999,0"


@pytest.mark.skipif(not kernels.HAVE_COMPILED, reason="compiled kernel not built")
@pytest.mark.parametrize("stop,k", [(kernels.STOP_NONE, 0), (kernels.STOP_ANY, 0),
                                    (kernels.STOP_LEVEL, 1)])
def test_backends_bitwise_equal(stop, k):
    m = PhaseModel(LeadLag(0.2922, ALPHA, ALPHA), 1000.0, 720.0)
    eqs = np.array([e.as_vector() for e in find_equilibria(m) if e.stable])
    cfg = IntegratorConfig()
    outs = [run_flow(m, [0.005, 0.0], 0.4, cfg, stop=stop, k_target=k, equilibria=eqs,
                     eps_lock=1e-6, delta_lock=1e-4, record=True, backend=be)
            for be in ("compiled", "python")]
    for u, v in zip(outs[0][:8], outs[1][:8]):
        assert np.asarray(u, dtype=float).tobytes() == np.asarray(v, dtype=float).tobytes()


def test_step_underflow_raised():
    m = PhaseModel(LeadLag(0.3, 2.0, 3.0), 5.0, 1.0)
    with pytest.raises(StepUnderflow):
        integrate(m, LoopState([0.0], 0.2), 1.0, IntegratorConfig(rel_tol=1e-15, abs_tol=1e-300))


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=1e-20)
    with pytest.raises(ValueError):
        IntegratorConfig(max_step=-1.0)
    with pytest.raises(ValueError):
        integrate(DECAY, LoopState([1.0], 0.0), 0.0)
    with pytest.raises(ValueError):
        integrate(DECAY, LoopState([1.0, 2.0], 0.0), 1.0)


def test_budget_status():
    m = PhaseModel(LeadLag(0.2922, ALPHA, ALPHA), 95.0, 89.5)
    traj = integrate(m, LoopState([0.0], 0.3), 10.0, IntegratorConfig(max_steps=50))
    assert traj.status == "budget" and len(traj) == 51
