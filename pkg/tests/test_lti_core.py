import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import cont2discrete

from cpsres.errors import ContractViolation, DivergenceError, NumericError
from cpsres.lti_core import (
    DecentralizedPI,
    NoiseSpec,
    PILoop,
    SaturationLimits,
    StateFeedback,
    StateSpaceModel,
    discretize_zoh,
    saturate,
    simulate,
    step,
)

from .strategies import stable_systems


def _loop_oracle(A, B, C, K, x0, horizon, lo, hi):
    """Plain for-loop rollout with state feedback and clamping."""
    x = np.array(x0, dtype=float)
    xs, ys = [], []
    for _ in range(horizon):
        xs.append(x.copy())
        ys.append(C @ x)
        u = np.clip(K @ x, lo, hi)
        x = A @ x + B @ u
    return np.array(xs), np.array(ys)


def test_model_rejects_bad_shapes():
    with pytest.raises(ContractViolation):
        StateSpaceModel([[1, 0]], [[1]], [[1]])
    with pytest.raises(ContractViolation):
        StateSpaceModel([[1]], [[1], [1]], [[1]])
    with pytest.raises(ContractViolation):
        StateSpaceModel([[1]], [[1]], [[1]], sample_time=0.0)


def test_limits_contract():
    with pytest.raises(ContractViolation):
        SaturationLimits([1.0], [1.0])
    lim = SaturationLimits([0.0, 0.0], [100.0, 100.0]).shifted([63.053, 24.644])
    np.testing.assert_allclose(lim.u_min, [-63.053, -24.644])
    np.testing.assert_allclose(lim.u_max, [36.947, 75.356])


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
def test_saturate_is_idempotent_and_inside(u):
    lim = SaturationLimits([-1.0, 0.0, -5.0], [1.0, 2.0, 5.0])
    s = saturate(u, lim)
    assert np.all(s >= lim.u_min) and np.all(s <= lim.u_max)
    np.testing.assert_array_equal(saturate(s, lim), s)


def test_step_rejects_nonfinite():
    m = StateSpaceModel([[0.5]], [[1.0]], [[1.0]])
    with pytest.raises(NumericError):
        step(m, [np.nan], [0.0], SaturationLimits.unbounded(1))


@pytest.mark.parametrize("Ts", [0.1, 1.0, 2.5])
def test_zoh_matches_scipy(Ts):
    Ac = np.array([[-0.5, 1.0], [0.0, -2.0]])
    Bc = np.array([[0.0], [1.0]])
    Cc = np.array([[1.0, 0.0]])
    m = discretize_zoh(Ac, Bc, Cc, Ts)
    Ad, Bd, _, _, _ = cont2discrete((Ac, Bc, Cc, np.zeros((1, 1))), Ts, method="zoh")
    np.testing.assert_allclose(m.A, Ad, atol=1e-12)
    np.testing.assert_allclose(m.B, Bd, atol=1e-12)


def test_zoh_first_order_closed_form():
    # x' = -x/tau + u/tau  ->  a = exp(-Ts/tau), b = 1 - a
    tau, Ts = 10.0, 1.0
    m = discretize_zoh([[-1 / tau]], [[1 / tau]], [[1.0]], Ts)
    assert m.A[0, 0] == pytest.approx(np.exp(-Ts / tau), rel=1e-14)
    assert m.B[0, 0] == pytest.approx(1 - np.exp(-Ts / tau), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(stable_systems(max_n=3, max_p=2), st.integers(1, 40))
def test_simulate_matches_loop_oracle(sys_, horizon):
    A, B, C = sys_
    n, p = A.shape[0], B.shape[1]
    K = -0.1 * np.ones((p, n))
    lo, hi = -np.ones(p), 2 * np.ones(p)
    x0 = np.linspace(-1, 1, n)
    traj = simulate(StateSpaceModel(A, B, C), StateFeedback(K), x0, horizon, limits=SaturationLimits(lo, hi))
    xs, ys = _loop_oracle(A, B, C, K, x0, horizon, lo, hi)
    np.testing.assert_allclose(traj.states, xs, atol=1e-12)
    np.testing.assert_allclose(traj.outputs, ys, atol=1e-12)
    assert np.all(traj.saturated_inputs <= hi) and np.all(traj.saturated_inputs >= lo)


def test_simulate_offsets_map_to_engineering_units():
    m = StateSpaceModel([[0.5]], [[1.0]], [[1.0]])
    traj = simulate(m, None, [1.0], 3, u_offset=[5.0], y_offset=[10.0])
    np.testing.assert_allclose(traj.y[:, 0], [11.0, 10.5, 10.25])
    np.testing.assert_allclose(traj.u_abs[:, 0], 5.0)


def test_divergence_raises():
    m = StateSpaceModel([[2.0]], [[0.0]], [[1.0]])
    with pytest.raises(DivergenceError):
        simulate(m, None, [1.0], 2000)


def test_noise_is_seeded():
    m = StateSpaceModel([[0.9]], [[1.0]], [[1.0]])
    noise = NoiseSpec([[0.01]], [[0.04]], seed=3)
    a = simulate(m, None, [0.0], 50, noise=noise)
    b = simulate(m, None, [0.0], 50, noise=noise)
    assert a.csv_text() == b.csv_text()
    c = simulate(m, None, [0.0], 50, noise=NoiseSpec([[0.01]], [[0.04]], seed=4))
    assert a.csv_text() != c.csv_text()


def test_noise_rejects_indefinite():
    with pytest.raises(ContractViolation):
        NoiseSpec([[1.0, 2.0], [2.0, 1.0]], [[1.0]])


def test_pi_tracks_setpoint_without_offset():
    m = discretize_zoh([[-0.1]], [[0.1]], [[1.0]], 1.0)
    ctrl = DecentralizedPI((PILoop(0, 0, 1.0, 5.0),), setpoints=(1.0,))
    traj = simulate(m, ctrl, [0.0], 300)
    assert abs(traj.y[-1, 0] - 1.0) < 1e-6


def test_pi_pairing_must_be_injective():
    with pytest.raises(ContractViolation):
        DecentralizedPI((PILoop(0, 0, 1.0), PILoop(0, 1, 1.0)))


def test_csv_header():
    m = StateSpaceModel([[0.5]], [[1.0]], [[1.0]])
    text = simulate(m, None, [1.0], 2).csv_text()
    assert text.splitlines()[0] == "k,t_seconds,x_0,u_0,usat_0,y_0"
