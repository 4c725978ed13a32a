import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bbm_edge import fkpp
from bbm_edge.envelopes import SQRT2
from bbm_edge.kernels import OffspringLaw


def test_heaviside_initial_data():
    state = fkpp.heaviside_state(dx=0.1, width=10)
    assert state.u.size == 101
    assert state.u[50] == 0.5 and state.x[50] == pytest.approx(0.0)
    assert fkpp.front_position(state) == pytest.approx(0.0)
    state.check()
    assert fkpp.mean_of_max(state) == pytest.approx(0.0, abs=1e-12)


def test_pure_diffusion_matches_heat_kernel():
    state = fkpp.heaviside_state(dx=0.02, width=20, reaction=False)
    fkpp.evolve(state, 1.0, moving=False)
    err = np.max(np.abs(state.u - fkpp.heat_kernel_cdf(1.0, state.x)))
    assert err < 2e-3


def test_reaction_pushes_the_cdf_below_the_heat_kernel():
    # the maximum of BBM dominates one Brownian particle: u <= P[B_t <= x]
    state = fkpp.heaviside_state(dx=0.02, width=20)
    fkpp.evolve(state, 0.5, moving=False)
    assert np.all(state.u <= fkpp.heat_kernel_cdf(0.5, state.x) + 2e-3)
    assert fkpp.mean_of_max(state) > 0.1


@settings(max_examples=10)
@given(st.sampled_from([0.02, 0.05, 0.1]), st.floats(0.2, 3.0))
def test_solution_stays_a_distribution_function(dx, t):
    state = fkpp.heaviside_state(dx=dx, width=40)
    fkpp.evolve(state, t)
    state.check()


def test_step_returns_a_new_state_and_checks_dt():
    state = fkpp.heaviside_state(dx=0.05, width=10)
    nxt = fkpp.step(state, 0.01)
    assert state.time == 0.0 and not np.array_equal(nxt.u, state.u)
    with pytest.raises(ValueError):
        fkpp.step(state, 1.5)


def test_front_position_interpolates_and_needs_bracketing():
    state = fkpp.FkppState(offset=-1.0, dx=0.5, u=np.array([0.0, 0.2, 0.6, 1.0, 1.0]), time=0.0,
                           law=OffspringLaw.binary())
    # 0.5 lies three quarters of the way from x=-0.5 (0.2) to x=0 (0.6)
    assert fkpp.front_position(state) == pytest.approx(-0.125)
    flat = fkpp.FkppState(0.0, 0.1, np.full(5, 0.9), 0.0, OffspringLaw.binary())
    with pytest.raises(fkpp.WindowError):
        fkpp.front_position(flat)


def test_recentre_moves_by_whole_cells():
    state = fkpp.heaviside_state(dx=0.1, width=10)
    fkpp.evolve(state, 3.0, moving=False)
    before = fkpp.front_position(state)
    fkpp.recentre(state)
    assert fkpp.front_position(state) == pytest.approx(before, abs=1e-12)
    centre = state.offset + state.dx * (state.u.size // 2)
    assert abs(before - centre) <= state.dx / 2 + 1e-12
    assert round(state.offset / state.dx) == pytest.approx(state.offset / state.dx)


def test_front_speed_approaches_sqrt2():
    run = fkpp.run_front(12.0, dx=0.05)
    speeds = [run.speed(t) for t in (4.0, 8.0, 12.0)]
    assert speeds[0] < speeds[1] < speeds[2] < SQRT2
    # finite-time correction roughly -3 / (2 sqrt2 t)
    assert speeds[2] == pytest.approx(SQRT2 - 3 / (2 * SQRT2 * 12), abs=0.03)


def test_moving_window_does_not_change_the_front():
    fixed = fkpp.heaviside_state(dx=0.05, width=60)
    moving = fkpp.heaviside_state(dx=0.05, width=60)
    fkpp.evolve(fixed, 6.0, moving=False)
    fkpp.evolve(moving, 6.0)
    assert fkpp.front_position(moving) == pytest.approx(fkpp.front_position(fixed), abs=1e-6)


def test_record_every_returns_series():
    state = fkpp.heaviside_state(dx=0.05, width=40)
    series = fkpp.evolve(state, 3.0, record_every=0.5)
    assert [t for t, _ in series] == [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
    fronts = [f for _, f in series]
    assert all(a < b for a, b in zip(fronts, fronts[1:]))


def test_wave_residual_shrinks_in_time():
    state = fkpp.heaviside_state(dx=0.05)
    fkpp.evolve(state, 5.0)
    early = fkpp.wave_shape_residual(state)
    fkpp.evolve(state, 20.0)
    assert fkpp.wave_shape_residual(state) < early


def test_wave_residual_is_binary_only():
    state = fkpp.heaviside_state(OffspringLaw.parse("1:0.5,3:0.5"), dx=0.05, width=20)
    fkpp.evolve(state, 1.0)
    state.check()
    with pytest.raises(NotImplementedError):
        fkpp.wave_shape_residual(state)


def test_general_law_shares_the_asymptotic_speed():
    # the linearization at u = 1 only sees sum k p_k = 2, so the speed limit is sqrt2 for every law
    binary = fkpp.run_front(12.0, dx=0.05)
    other = fkpp.run_front(12.0, OffspringLaw.parse("1:0.5,3:0.5"), dx=0.05)
    assert other.speed(12.0) == pytest.approx(binary.speed(12.0), abs=0.05)
    assert other.speed(4.0) < other.speed(8.0) < other.speed(12.0) < SQRT2


def test_cdf_at_interpolates():
    state = fkpp.heaviside_state(dx=0.1, width=10)
    assert np.allclose(fkpp.cdf_at(state, np.array([-1.0, 0.05, 1.0])), [0.0, 0.75, 1.0])
