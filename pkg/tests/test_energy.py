import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from energyspace.components import Generator, RlcSource
from energyspace.energy import (
    EffortFlowSample,
    EnergyState,
    InteractionRate,
    RejectedInputError,
    TimeConstants,
    UndefinedTimeConstantError,
    dissipation,
    energy_rhs,
    interaction_rate,
    rate_tuple,
    stored_energy,
    tangent_dissipation,
    tangent_energy,
    tellegen_residual,
    time_constants,
)
from energyspace.sim import simulate

import _builders as B

L1, C1, R1 = 1.12e-3, 6.8e-3, 0.1
J1, D1 = 10.0, 0.01
RLC = RlcSource().lift_params()
GEN = Generator().lift_params()

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_rlc_stored_energy_at_operating_point():
    # 0.5*L*i^2 + 0.5*C*v^2 by hand
    assert stored_energy([12.5, 80.0], RLC) == pytest.approx(21.8475, rel=1e-12)
    assert stored_energy([0.0, 0.0], RLC) == 0.0


def test_stored_energy_matches_independent_quadratic_form():
    x = np.array([12.5, 80.0])
    H = np.diag([L1, C1])
    assert stored_energy(x, RLC) == pytest.approx(0.5 * np.einsum("i,ij,j", x, H, x), rel=1e-14)


def test_generator_stored_energy():
    # 0.5 * 10 * 377**2 = 5 * 142129
    assert stored_energy([377.0, 2421.29], GEN) == 710645.0


def test_nonfinite_state_rejected():
    with pytest.raises(RejectedInputError):
        stored_energy([math.nan, 80.0], RLC)
    with pytest.raises(RejectedInputError):
        tangent_energy([0.0, math.inf], RLC, [12.5, 80.0])


def test_tangent_energy_vanishes_at_equilibrium():
    plant = RlcSource()
    x_dot = plant.rhs((12.5, 80.0), 81.25, 1000.0)
    assert tangent_energy(x_dot, RLC, [12.5, 80.0]) == pytest.approx(0.0, abs=1e-20)
    assert tangent_energy([0.0, 0.0], RLC, [12.5, 80.0]) == 0.0


@given(finite, finite, st.floats(-50, 50))
def test_quadratic_homogeneity(a, b, c):
    x = [a, b]
    assert stored_energy([c * a, c * b], RLC) == pytest.approx(c * c * stored_energy(x, RLC),
                                                               rel=1e-12, abs=1e-12)
    assert tangent_energy([c * a, c * b], RLC, x) == pytest.approx(
        c * c * tangent_energy(x, RLC, x), rel=1e-12, abs=1e-12)


@given(finite, finite)
def test_energies_non_negative(a, b):
    assert stored_energy([a, b], RLC) >= 0.0
    assert tangent_energy([a, b], RLC, [1.0, 1.0]) >= 0.0
    assert dissipation([a, b], RLC) >= 0.0
    assert tangent_dissipation([a, b], RLC, [1.0, 1.0]) >= 0.0


def test_dissipation_values():
    assert dissipation([12.5, 80.0], RLC) == pytest.approx(15.625, rel=1e-14)
    assert dissipation([0.0, 0.0], RLC) == 0.0
    assert dissipation([377.0, 0.0], GEN) == pytest.approx(1421.29, rel=1e-14)


@pytest.mark.parametrize("w", [10.0, 377.0, 1000.0])
def test_generator_time_constant_is_state_independent(w):
    tc = time_constants(stored_energy([w, 0.0], GEN), dissipation([w, 0.0], GEN), 1.0, 1.0)
    assert tc.tau == pytest.approx(J1 / (2 * D1), rel=1e-14)


def test_rlc_time_constant():
    E = stored_energy([12.5, 80.0], RLC)
    D = dissipation([12.5, 80.0], RLC)
    assert time_constants(E, D, 1.0, 1.0).tau == pytest.approx(1.39824, rel=1e-12)
    assert time_constants(3.0 * 7.0, 7.0, 2.0, 1.0) == TimeConstants(3.0, 2.0)


def test_time_constant_reports_failing_denominator():
    with pytest.raises(UndefinedTimeConstantError) as exc:
        time_constants(1.0, 0.0, 1.0, 1.0)
    assert exc.value.which == "D"
    with pytest.raises(UndefinedTimeConstantError) as exc:
        time_constants(1.0, 1.0, 1.0, 0.0)
    assert exc.value.which == "D_t"


def test_interaction_rate_examples():
    assert interaction_rate(EffortFlowSample(2.0, 3.0, 5.0, 7.0)) == InteractionRate(6.0, -1.0, 35.0)
    assert interaction_rate(EffortFlowSample(80.0, 12.5, 0.0, 0.0)) == InteractionRate(1000.0, 0.0, 0.0)
    assert interaction_rate(EffortFlowSample(4.0, 4.0, 9.0, 9.0)).Qdot == 0.0
    with pytest.raises(RejectedInputError):
        interaction_rate(EffortFlowSample(1.0, math.nan, 0.0, 0.0))


@given(finite, finite, finite, finite)
def test_qdot_antisymmetry(e, f, ed, fd):
    P, Q, Pt = rate_tuple(e, f, ed, fd)
    P2, Q2, Pt2 = rate_tuple(f, e, fd, ed)
    assert P == P2 and Pt == Pt2
    assert Q == -Q2


def test_energy_rhs_pure_dissipation():
    xz = EnergyState(21.0, 0.0, 0.0)
    z = InteractionRate()
    d = energy_rhs(xz, TimeConstants(1.5, 2.0), 0.0, z, z, z)
    assert d == EnergyState(-14.0, 0.0, 0.0)


def test_energy_rhs_fixed_point_and_q_signs():
    # E/tau balanced by port power, and Qdot terms balancing 2*Qdot_C
    xz = EnergyState(10.0, 0.0, 0.0)
    r = InteractionRate(3.0, 1.0, 0.0)
    u = InteractionRate(2.0, 2.0, 0.0)
    m = InteractionRate(0.0, 1.0, 0.0)
    d = energy_rhs(xz, TimeConstants(2.0, 1.0), 2.0, r, u, m)
    assert d == EnergyState(0.0, 0.0, 0.0)


def test_energy_rhs_dissipation_substitute():
    xz = EnergyState(10.0, 0.0, 0.0)
    z = InteractionRate()
    assert energy_rhs(xz, None, 0.0, z, z, z, D=4.0, D_t=0.0).E == -4.0
    with pytest.raises(UndefinedTimeConstantError):
        energy_rhs(xz, None, 0.0, z, z, z)


def test_tellegen_residual():
    assert tellegen_residual([InteractionRate(-5, -1, 0)], InteractionRate(5, 1, 0)) == InteractionRate()
    a = InteractionRate(1.5, -2.0, 0.25)
    assert tellegen_residual([-a], a) == InteractionRate()


def test_tellegen_along_rlc_run(rlc_fblc_run):
    traj = rlc_fblc_run
    scale = np.max(np.abs(traj["port_P"]))
    assert np.max(np.abs(traj["tellegen_P"])) <= 1e-9 * scale


def test_lifted_samples_non_negative(rlc_fblc_run, gen_droop_run):
    for traj in (rlc_fblc_run, gen_droop_run):
        assert np.all(traj["E"] >= 0.0)
        assert np.all(traj["E_t"] >= 0.0)


def _fd_gap(traj, t_from=0.01):
    """Max gap between recorded p and the central difference of recorded E.

    The first ~10 ms hold a fast transient on the step scale and are skipped.
    """
    E, p, h = traj["E"], traj["p"], traj.h
    fd = (E[2:] - E[:-2]) / (2.0 * h)
    keep = traj.t[1:-1] >= t_from
    return np.max(np.abs(fd - p[1:-1])[keep])


def test_power_is_derivative_of_energy_to_second_order():
    # central-difference truncation is O(h^2): halving h cuts the gap ~4x
    g1 = _fd_gap(simulate(B.rlc("proportional", T=0.05, h=2e-4)))
    g2 = _fd_gap(simulate(B.rlc("proportional", T=0.05, h=1e-4)))
    assert 3.5 < g1 / g2 < 4.5


def test_energy_rhs_matches_finite_differences(rlc_fblc_run):
    traj = rlc_fblc_run
    h = traj.h
    # a smooth stretch after the initial fast transient
    a, b = 200, 2200
    sl = slice(a, b)
    pred = [energy_rhs(EnergyState(traj["E"][k], traj["p"][k], traj["E_t"][k]), None, traj["Qdot_C"][k],
                       InteractionRate(traj["r_P"][k], traj["r_Qdot"][k], traj["r_Pt"][k]),
                       InteractionRate(traj["u_P"][k], traj["u_Qdot"][k], traj["u_Pt"][k]),
                       InteractionRate(traj["m_P"][k], traj["m_Qdot"][k], traj["m_Pt"][k]),
                       D=traj["D"][k], D_t=traj["D_t"][k]).as_tuple()
            for k in range(a + 1, b - 1)]
    pred = np.array(pred)
    for j, col in enumerate(("E", "p", "E_t")):
        s = traj[col][sl]
        fd = (s[2:] - s[:-2]) / (2.0 * h)
        scale = np.max(np.abs(pred[:, j]))
        assert np.max(np.abs(fd - pred[:, j])) <= 1e-3 * scale, col
