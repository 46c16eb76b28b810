"""Reactor model oracles: rate laws, balances, integration, steady state."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uasml.reactor import (
    INPUT_NAMES, NOMINAL_PARAMETERS, PARAMETER_NAMES, TRAJECTORY_HEADER,
    AlgebraicOutputs, InputSchedule, ModelVariant, ReactorInputs,
    ReactorParameters, ReactorState, SteadyStateError, algebraic_outputs,
    find_steady_state, integrate, rate_constants, reactor_rhs,
    read_trajectory_csv, write_trajectory_csv,
)

P = NOMINAL_PARAMETERS
PHYSICAL = ModelVariant.physical()
FLOWS = ReactorInputs(Qi=108.0, Qs=459.0, Qm=378.0, Qc=471.6)


@pytest.fixture(scope="module")
def steady():
    return find_steady_state(P, FLOWS, PHYSICAL)


# -- rate constants ----------------------------------------------------------

def test_decomposition_rate_at_330K():
    k = rate_constants(330.0, P)
    oracle = 2.142e17 * math.exp(-14897.0 / 330.0)
    assert k.kd == pytest.approx(oracle, rel=1e-12)
    assert k.kd == pytest.approx(5.31e-3, rel=5e-3)


def test_propagation_rate_at_330K():
    k = rate_constants(330.0, P)
    oracle = 3.81e10 * math.exp(-3557.0 / 330.0)
    assert k.kp == pytest.approx(oracle, rel=1e-12)
    assert k.kp == pytest.approx(7.94e5, rel=5e-3)


def test_termination_rate_at_330K():
    k = rate_constants(330.0, P)
    assert k.kt == pytest.approx(4.50e12 * math.exp(-843.0 / 330.0), rel=1e-12)


def test_rate_constants_reject_nonpositive_temperature():
    with pytest.raises(ValueError):
        rate_constants(0.0, P)
    with pytest.raises(ValueError):
        rate_constants(-300.0, P)


@given(st.floats(min_value=250.0, max_value=450.0),
       st.floats(min_value=251.0, max_value=451.0))
def test_rate_constants_positive_and_increasing(t1, t2):
    lo, hi = sorted((t1, t2))
    k_lo, k_hi = rate_constants(lo, P), rate_constants(hi, P)
    assert k_lo.kd > 0 and k_lo.kp > 0 and k_lo.kt > 0
    assert k_hi.kd >= k_lo.kd and k_hi.kp >= k_lo.kp and k_hi.kt >= k_lo.kt


# -- algebraic outputs -------------------------------------------------------

def _state(**kw):
    base = dict(I=0.05, M=3.0, T=320.0, Tc=300.0, D0=1.0e-4, D1=10.0, D2=4000.0)
    base.update(kw)
    return ReactorState(**base)


def test_total_flow_is_exact_sum():
    out = algebraic_outputs(_state(), ReactorInputs(108.0, 459.0, 378.0, 471.6), P)
    assert out.Qt == 108.0 + 459.0 + 378.0
    assert out.Qt == 945.0


@given(st.floats(min_value=0.0, max_value=1e4), st.floats(min_value=0.0, max_value=1e4),
       st.floats(min_value=0.0, max_value=1e4))
def test_total_flow_conservation_exact(qi, qs, qm):
    out = algebraic_outputs(_state(), ReactorInputs(qi, qs, qm, 100.0), P)
    assert out.Qt == qi + qs + qm


def test_viscosity_correlation_at_unit_chain():
    # Mw equal to the monomer molar mass: eta = 0.0012 * 104.14**0.71.
    s = _state(D1=1.0, D2=1.0)
    out = algebraic_outputs(s, FLOWS, P)
    assert out.Mw == pytest.approx(104.14, rel=1e-12)
    assert out.eta == pytest.approx(0.0012 * 104.14 ** 0.71, rel=1e-12)
    assert out.eta == pytest.approx(3.25e-2, rel=5e-3)


def test_radical_concentration_closed_form():
    s = _state()
    out = algebraic_outputs(s, FLOWS, P)
    kd = 2.142e17 * math.exp(-14897.0 / 320.0)
    kt = 4.50e12 * math.exp(-843.0 / 320.0)
    assert out.P == pytest.approx(math.sqrt(2.0 * 0.6 * kd * 0.05 / kt), rel=1e-12)


def test_polydispersity_variant_differs_by_molar_mass_factor():
    s = _state()
    printed = algebraic_outputs(s, FLOWS, P, ModelVariant())
    physical = algebraic_outputs(s, FLOWS, P, PHYSICAL)
    assert printed.PD == pytest.approx(physical.PD * 104.14, rel=1e-12)
    assert physical.PD == pytest.approx(4000.0 * 1.0e-4 / 10.0 ** 2, rel=1e-12)


def test_outputs_undefined_before_any_polymer():
    out = algebraic_outputs(_state(D1=0.0), FLOWS, P)
    assert math.isnan(out.Mw) and math.isnan(out.PD) and math.isnan(out.eta)
    assert math.isfinite(out.P) and math.isfinite(out.Qt)


# -- right-hand side ---------------------------------------------------------

def _hand_rhs(y, u, variant):
    """Independent transcription of the balances for cross-checking."""
    I, M, T, Tc, D0, D1, D2 = y
    Qi, Qs, Qm, Qc = u
    Qt = Qi + Qs + Qm
    kd = 2.142e17 * math.exp(-14897.0 / T)
    kp = 3.81e10 * math.exp(-3557.0 / T)
    kt = 4.50e12 * math.exp(-843.0 / T)
    Pr = math.sqrt(2.0 * 0.6 * kd * I / kt)
    V, Vc = 3000.0, 3312.4
    q_en = Qt if variant.energy_balance_flow == "total_flow_Qt" else Qi
    if variant.jacket_capacity == "physical_rhocCpcVc":
        jacket = 1.05e6 / (4043.0 * Vc)
    else:
        jacket = 1.05e6 / (1506.0 * V)
    return [
        (Qi * 0.5888 - Qt * I) / V - kd * I,
        (Qm * 8.6981 - Qt * M) / V - kp * M * Pr,
        q_en * (330.0 - T) / V + 6.99e4 / 1506.0 * kp * M * Pr
        - 1.05e6 / (1506.0 * V) * (T - Tc),
        Qc * (295.0 - Tc) / Vc + jacket * (T - Tc),
        0.5 * kt * Pr * Pr - Qt * D0 / V,
        104.14 * kp * M * Pr - Qt * D1 / V,
        5.0 * 104.14 * kp * M * Pr + 104.14 * kp * kp / kt * M * M - Qt * D2 / V,
    ]


@pytest.mark.parametrize("variant", [ModelVariant(), PHYSICAL])
def test_rhs_matches_hand_coded_balances(variant):
    s = _state()
    u = ReactorInputs(100.0, 400.0, 350.0, 450.0)
    got = reactor_rhs(0.0, s, u, P, variant)
    want = _hand_rhs(s.as_array(), u.as_array(), variant)
    assert got == pytest.approx(want, rel=1e-12)


def test_rhs_rejects_nan_state():
    s = _state()
    bad = ReactorState.__new__(ReactorState)
    object.__setattr__(bad, "I", float("nan"))
    for name in ("M", "T", "Tc", "D0", "D1", "D2"):
        object.__setattr__(bad, name, getattr(s, name))
    with pytest.raises(ValueError):
        reactor_rhs(0.0, bad, FLOWS, P)


# -- parameters --------------------------------------------------------------

def test_parameter_array_round_trip():
    arr = P.as_array()
    assert ReactorParameters.from_array(arr) == P
    assert len(PARAMETER_NAMES) == 18


def test_parameter_scaling_is_componentwise():
    eta = np.full(18, 1.02)
    scaled = P.scaled_by(eta)
    assert scaled.Ed == pytest.approx(14897.0 * 1.02, rel=1e-14)
    assert scaled.V == pytest.approx(3000.0 * 1.02, rel=1e-14)


def test_parameters_reject_nonpositive_and_bad_efficiency():
    with pytest.raises(ValueError):
        ReactorParameters.from_array(np.append(P.as_array()[:-1], -1.0))
    with pytest.raises(ValueError):
        ReactorParameters.from_array(P.as_array() * np.where(
            np.arange(18) == PARAMETER_NAMES.index("fi"), 2.0, 1.0))


# -- integration -------------------------------------------------------------

def test_steady_input_trajectory_stays_at_steady_state(steady):
    sched = InputSchedule(step_levels=np.array([FLOWS.as_array()]), hold_duration=400.0)
    traj = integrate(steady, sched, P, PHYSICAL, grid=np.arange(0.0, 401.0, 50.0))
    rel = np.abs(traj.states - steady.as_array()) / np.maximum(np.abs(steady.as_array()), 1e-30)
    assert rel.max() < 1e-6


def test_trajectory_against_independent_integrator(steady):
    scipy_int = pytest.importorskip("scipy.integrate")
    levels = FLOWS.as_array() * np.array([[1.1, 0.9, 1.05, 0.95],
                                          [0.9, 1.1, 0.95, 1.05],
                                          [1.0, 1.0, 1.0, 1.0]])
    sched = InputSchedule(step_levels=levels, hold_duration=20.0)
    grid = np.arange(0.0, 60.0 + 1e-9, 2.5)
    traj = integrate(steady, sched, P, PHYSICAL, grid)

    from uasml.reactor import _make_rhs
    rhs = _make_rhs(P, PHYSICAL)
    y = steady.as_array()
    ref = [y]
    for seg in range(3):
        u = tuple(levels[seg])
        t0, t1 = 20.0 * seg, 20.0 * (seg + 1)
        sol = scipy_int.solve_ivp(lambda t, yy: rhs(t, yy.tolist(), u), (t0, t1), y,
                                  method="RK45", rtol=1e-11, atol=1e-13,
                                  t_eval=np.arange(t0 + 2.5, t1 + 1e-9, 2.5))
        ref.extend(sol.y.T)
        y = sol.y[:, -1]
    ref = np.array(ref)
    rel = np.abs(traj.states - ref) / np.maximum(np.abs(ref), 1e-12)
    assert rel.max() < 1e-6


def test_inputs_recorded_with_step_change_on_boundary(steady):
    levels = np.array([FLOWS.as_array(), FLOWS.as_array() * 1.1])
    sched = InputSchedule(step_levels=levels, hold_duration=10.0)
    traj = integrate(steady, sched, P, PHYSICAL, grid=np.array([0.0, 5.0, 10.0, 15.0, 20.0]))
    assert np.array_equal(traj.inputs[0], levels[0])
    assert np.array_equal(traj.inputs[2], levels[1])  # boundary sample carries the new level
    assert np.array_equal(traj.outputs[:, 1], traj.inputs[:, :3].sum(axis=1))


def test_integration_deterministic(steady):
    levels = FLOWS.as_array() * np.array([[1.1, 0.9, 1.05, 0.95], [0.9, 1.0, 1.0, 1.1]])
    sched = InputSchedule(step_levels=levels, hold_duration=15.0)
    grid = np.arange(0.0, 30.0 + 1e-9, 1.0)
    a = integrate(steady, sched, P, PHYSICAL, grid)
    b = integrate(steady, sched, P, PHYSICAL, grid)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.outputs, b.outputs)


def test_grid_outside_schedule_rejected(steady):
    sched = InputSchedule(step_levels=np.array([FLOWS.as_array()]), hold_duration=10.0)
    with pytest.raises(ValueError):
        integrate(steady, sched, P, PHYSICAL, grid=np.array([0.0, 20.0]))


# -- steady state ------------------------------------------------------------

def test_steady_state_residual_below_tolerance(steady):
    f = reactor_rhs(0.0, steady, FLOWS, P, PHYSICAL)
    scaled = np.abs(f) / np.maximum(np.abs(steady.as_array()), 1.0)
    assert scaled.max() < 1e-9


def test_steady_state_matches_reported_operating_point(steady):
    assert steady.T == pytest.approx(323.56, rel=0.01)
    assert steady.Tc == pytest.approx(305.17, rel=0.01)
    assert steady.D0 == pytest.approx(2.7547e-4, rel=0.02)
    assert steady.D1 == pytest.approx(16.110, rel=0.02)


def test_long_integration_confirms_steady_state(steady):
    sched = InputSchedule(step_levels=np.array([FLOWS.as_array()]), hold_duration=2000.0)
    traj = integrate(steady, sched, P, PHYSICAL, grid=np.array([0.0, 2000.0]))
    rel = np.abs(traj.states[-1] - steady.as_array()) / np.maximum(np.abs(steady.as_array()), 1e-30)
    assert rel.max() < 1e-5


def test_steady_state_from_poor_guess_converges():
    guess = ReactorState(I=0.2, M=1.0, T=340.0, Tc=310.0, D0=1e-5, D1=1.0, D2=100.0)
    ss = find_steady_state(P, FLOWS, PHYSICAL, guess=guess)
    ref = find_steady_state(P, FLOWS, PHYSICAL)
    assert ss.T == pytest.approx(ref.T, rel=1e-8)


def test_steady_state_error_carries_residual():
    with pytest.raises((SteadyStateError, ValueError)):
        find_steady_state(P, ReactorInputs(0.0, 0.0, 0.0, 0.0), PHYSICAL)


# -- trajectory CSV ----------------------------------------------------------

def test_trajectory_csv_round_trip_bit_exact(tmp_path, steady):
    levels = FLOWS.as_array() * np.array([[1.05, 0.95, 1.0, 1.0], [0.95, 1.05, 1.0, 1.0]])
    sched = InputSchedule(step_levels=levels, hold_duration=12.0)
    traj = integrate(steady, sched, P, PHYSICAL, grid=np.arange(0.0, 24.1, 3.0))
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, path)
    header = path.read_text().splitlines()[0]
    assert header == ",".join(TRAJECTORY_HEADER)
    back = read_trajectory_csv(path)
    assert np.array_equal(back.times, traj.times)
    assert np.array_equal(back.states, traj.states)
    assert np.array_equal(back.outputs, traj.outputs, equal_nan=True)


def test_trajectory_csv_keeps_nan_sentinel(tmp_path):
    times = np.array([0.0, 1.0])
    inputs = np.tile(FLOWS.as_array(), (2, 1))
    states = np.tile(_state(D1=0.0).as_array(), (2, 1))
    outputs = np.array([[1e-8, 945.0, np.nan, np.nan, np.nan]] * 2)
    from uasml.reactor import Trajectory
    path = tmp_path / "t.csv"
    write_trajectory_csv(Trajectory(times, inputs, states, outputs), path)
    back = read_trajectory_csv(path)
    assert np.isnan(back.outputs[:, 2]).all()
