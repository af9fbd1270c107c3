import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ncs_attacks import numkit as nk
from ncs_attacks import presets as pr
from ncs_attacks.attacks import (
    Variant,
    make_delay_induced_discrete_mapda,
    make_discrete_mapda,
    make_mapda,
    make_tpda_exact,
    make_tpda_nominal,
)
from ncs_attacks.errors import DimensionMismatch, NonFiniteState, NotHurwitz, NotPositiveDefinite

PHI_N = pr.nominal_model().Phi_n


def _regulated(Z=1.0, Q=1.0, dt_int=1e-3):
    return make_mapda(pr.A_N, PHI_N, Q * np.eye(4), Z * np.eye(4), pr.F_A0, pr.AUX0, dt_int=dt_int)


# ---------------------------------------------------------------- TPDA


def test_tpda_first_output_is_aux0():
    eng = make_tpda_nominal(pr.A_N, pr.AUX0)
    assert np.array_equal(eng.emit(0.0, np.zeros(4), 0.01), pr.AUX0)


def test_tpda_zero_matrix_keeps_state():
    eng = make_tpda_exact(np.zeros((3, 3)), [1.0, 2.0, 3.0])
    for _ in range(5):
        eng.advance(np.ones(3), 0.1)
    assert np.array_equal(eng.output(), [1.0, 2.0, 3.0])


def test_tpda_zero_initial_state_stays_zero():
    eng = make_tpda_nominal(pr.A_N, np.zeros(4))
    for _ in range(10):
        eng.advance(np.ones(4), 0.01)
    assert np.all(eng.output() == 0)


@pytest.mark.parametrize("discrete", [False, True])
def test_tpda_matches_exponential(discrete):
    eng = make_tpda_nominal(pr.A_N, pr.AUX0, discrete=discrete)
    for _ in range(100):
        eng.advance(np.zeros(4), 0.01)
    ref = nk.mat_exp(pr.A_N, 1.0) @ pr.AUX0
    tol = 1e-12 if discrete else 1e-9
    assert np.linalg.norm(eng.output() - ref) <= tol * np.linalg.norm(ref)


def test_tpda_variant_names():
    assert make_tpda_exact(pr.A_N, pr.AUX0).variant is Variant.TPDA_EXACT
    assert make_tpda_nominal(pr.A_N, pr.AUX0, discrete=True).variant is Variant.DISCRETE_TPDA_NOMINAL


def test_tpda_growth_rate_is_unstable_pole():
    eng = make_tpda_nominal(pr.A_N, pr.AUX0, discrete=True)
    norms = []
    for k in range(301):
        norms.append(np.linalg.norm(eng.output()))
        eng.advance(np.zeros(4), 0.01)
    rate = np.log(norms[300] / norms[200]) / 1.0
    assert rate == pytest.approx(5.425, abs=1e-3)


@settings(max_examples=25)
@given(hnp.arrays(float, (20, 4), elements=st.floats(-10, 10)))
def test_tpda_ignores_measurements(xs):
    a = make_tpda_nominal(pr.A_N, pr.AUX0)
    b = make_tpda_nominal(pr.A_N, pr.AUX0)
    for row in xs:
        a.advance(row, 0.01)
        b.advance(np.zeros(4), 0.01)
    assert np.array_equal(a.output(), b.output())


def test_tpda_divergence_freezes_engine():
    eng = make_tpda_exact(np.diag([100.0]), [1.0], discrete=True)
    with pytest.raises(NonFiniteState):
        for _ in range(100):
            eng.advance(np.zeros(1), 0.1)
    assert eng.frozen
    with pytest.raises(NonFiniteState):
        eng.advance(np.zeros(1), 0.1)
    eng.reset()
    assert not eng.frozen and np.array_equal(eng.output(), [1.0])


def test_tpda_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        make_tpda_nominal(pr.A_N, np.ones(3))


# ---------------------------------------------------------------- continuous MAPDA


def test_mapda_P_matches_published():
    eng = _regulated()
    assert np.max(np.abs(eng.P - pr.P_PUBLISHED)) <= 1e-3


def test_mapda_rejects_indefinite_Z():
    with pytest.raises(NotPositiveDefinite):
        make_mapda(pr.A_N, PHI_N, np.eye(4), np.diag([1.0, 1.0, -1.0, 1.0]), pr.F_A0, pr.AUX0)


def test_mapda_rejects_asymmetric_Q():
    Q = np.eye(4)
    Q[0, 1] = 0.5
    with pytest.raises(NotPositiveDefinite):
        make_mapda(pr.A_N, PHI_N, Q, np.eye(4), pr.F_A0, pr.AUX0)


def test_mapda_accepts_small_Z():
    assert _regulated(Z=0.5).Z[0, 0] == 0.5


def test_mapda_needs_hurwitz_phi():
    with pytest.raises(NotHurwitz):
        make_mapda(pr.A_N, pr.A_N, np.eye(4), np.eye(4), pr.F_A0, pr.AUX0)


def test_mapda_zero_residual_freezes_gain():
    eng = _regulated(Z=100.0)
    for _ in range(50):
        eng.advance(np.zeros(4), 0.01)
    assert np.array_equal(eng.gain, pr.F_A0)
    ref = nk.mat_exp(pr.A_N + pr.F_A0, 0.5) @ pr.AUX0
    assert np.linalg.norm(eng.output() - ref) <= 1e-9 * np.linalg.norm(ref)


def test_mapda_gain_update_direction():
    # one tiny step: dF ~= dt Z P x_a x_aam^T
    eng = _regulated(Z=2.0)
    x_a = np.array([0.1, -0.2, 0.05, 0.3])
    dt = 1e-6
    eng.advance(x_a, dt)
    expected = dt * np.outer(2.0 * pr.P_PUBLISHED @ x_a, pr.AUX0)
    assert np.allclose(eng.gain - pr.F_A0, expected, rtol=1e-2, atol=1e-14)


def test_mapda_variant_validation():
    with pytest.raises(ValueError):
        make_mapda(pr.A_N, PHI_N, np.eye(4), np.eye(4), pr.F_A0, pr.AUX0, variant=Variant.DISCRETE_MAPDA)


def test_mapda_reset_restores_initial_state():
    eng = _regulated()
    eng.advance(np.ones(4), 0.01)
    eng.reset()
    assert np.array_equal(eng.gain, pr.F_A0) and np.array_equal(eng.output(), pr.AUX0)


# ---------------------------------------------------------------- discrete MAPDA


def _scalar_discrete(h=0.1):
    # A_n = 0, F_a0 = 1, Phi_n = -1, Q = 2 -> P = 1, Z = 3
    return make_discrete_mapda([[0.0]], [[-1.0]], [[2.0]], [[3.0]], [[1.0]], [1.0], h)


def test_discrete_mapda_scalar_step():
    eng = _scalar_discrete()
    assert eng.P[0, 0] == pytest.approx(1.0, abs=1e-14)
    eng.advance(np.array([0.5]))
    assert eng.output()[0] == pytest.approx(np.exp(0.1), rel=1e-14)
    # F+ = F + h Z P x_a x = 1 + 0.1 * 3 * 1 * 0.5 * 1
    assert eng.gain[0, 0] == pytest.approx(1.15, rel=1e-14)


@settings(max_examples=30)
@given(hnp.arrays(float, 4, elements=st.floats(-1, 1)))
def test_discrete_mapda_increment_is_rank_one(x_a):
    eng = make_discrete_mapda(pr.A_N, PHI_N, np.eye(4), 5 * np.eye(4), pr.F_A0, pr.AUX0, 0.01)
    x_before = eng.output()
    F_before = eng.gain.copy()
    eng.advance(x_a)
    dF = eng.gain - F_before
    assert np.allclose(dF, 0.01 * np.outer(5 * eng.P @ x_a, x_before), rtol=1e-9, atol=1e-15)
    assert np.linalg.matrix_rank(dF, tol=1e-12) <= 1


def test_discrete_mapda_tracks_continuous_with_order_one():
    # open loop with a fixed residual; error against the RK4 reference should halve with h
    x_a = np.array([0.01, -0.02, 0.03, 0.0])

    def run_discrete(h, T=0.2):
        eng = make_discrete_mapda(pr.A_N, PHI_N, np.eye(4), np.eye(4), pr.F_A0, pr.AUX0, h)
        for _ in range(int(round(T / h))):
            eng.advance(x_a)
        return eng.output()

    cont = _regulated(dt_int=1e-5)
    cont.advance(x_a, 0.2)
    ref = cont.output()
    e1 = np.linalg.norm(run_discrete(0.01) - ref)
    e2 = np.linalg.norm(run_discrete(0.005) - ref)
    assert 1.6 <= e1 / e2 <= 2.4


# ---------------------------------------------------------------- delay-induced discrete MAPDA


def test_delay_induced_scalar_hand_value():
    # A = 0.5, A_n = 0.2, B K = -2, Phi_n = -1 -> P with Q = 2 is 1
    A, A_n, B, K = 0.5, 0.2, 1.0, -2.0
    Z1, P1, P4, h = 2.0, 1.5, 0.3, 0.1
    x0, F0 = 0.4, 0.7
    eng = make_delay_induced_discrete_mapda(
        [[A]], [[A_n]], [[B]], [[K]], [[-1.0]], [[2.0]], [[Z1]], [[P1]], [[P4]], [[F0]], [x0], h, x_a_prev0=[0.25]
    )
    x_a = 0.6
    eng.advance(np.array([x_a]))
    F_d = F0 + A_n - A
    drive = h * Z1 * P1 * x_a + h * h * Z1 * P4 * A * x_a + h * h * Z1 * P4 * B * K * 0.25 - 0.5 * h * h * Z1 * P4 * F_d * x0
    assert eng.gain[0, 0] == pytest.approx(F0 + drive * x0, rel=1e-14)
    assert eng.output()[0] == pytest.approx(np.exp((A_n + F0) * h) * x0, rel=1e-14)
    assert np.array_equal(eng.x_a_prev, [x_a])


def test_delay_induced_reduces_to_discrete_when_second_order_vanishes():
    # P4 tiny: the h^2 terms become negligible and P1 = P recovers the plain discrete update
    x_a = np.array([0.1, 0.0, -0.1, 0.2])
    plain = make_discrete_mapda(pr.A_N, PHI_N, np.eye(4), np.eye(4), pr.F_A0, pr.AUX0, 0.01)
    delay = make_delay_induced_discrete_mapda(
        pr.A_N, pr.A_N, pr.B_N, pr.K_N, PHI_N, np.eye(4), np.eye(4), None, 1e-12 * np.eye(4), pr.F_A0, pr.AUX0, 0.01
    )
    for _ in range(10):
        plain.advance(x_a)
        delay.advance(x_a)
    assert np.allclose(plain.gain, delay.gain, rtol=1e-9, atol=1e-15)


def test_delay_induced_rejects_indefinite_P4():
    with pytest.raises(NotPositiveDefinite):
        make_delay_induced_discrete_mapda(
            pr.A_N, pr.A_N, pr.B_N, pr.K_N, PHI_N, np.eye(4), np.eye(4), None, -np.eye(4), pr.F_A0, pr.AUX0, 0.01
        )


def test_delay_induced_reset_restores_previous_residual():
    eng = make_delay_induced_discrete_mapda(
        pr.A_N, pr.A_N, pr.B_N, pr.K_N, PHI_N, np.eye(4), np.eye(4), None, None, pr.F_A0, pr.AUX0, 0.01
    )
    eng.advance(np.ones(4))
    eng.reset()
    assert eng.x_a_prev is None and np.array_equal(eng.gain, pr.F_A0)
