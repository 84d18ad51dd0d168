import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import signal

from cpsres.errors import ContractViolation, NonRealizableSelection
from cpsres.te_benchmark import te_transfer_matrix
from cpsres.tf_algebra import (
    DecompositionSelection,
    RationalTF,
    TransferFunctionMatrix,
    adjugate,
    build_D,
    compute_Q,
    continuous_step_response,
    determinant,
    enumerate_selections,
    pade,
    partial_fractions,
    realize_matrix,
    realize_minimal,
    realize_state_space,
    serial_factor,
    tf_add,
    tf_mul,
)


@st.composite
def stable_tfs(draw, max_den=3):
    nd = draw(st.integers(1, max_den))
    # well-separated poles: scipy.signal.residue merges roots closer than 1e-3
    grid = draw(st.lists(st.integers(1, 100), min_size=nd, max_size=nd, unique=True))
    poles = [-0.05 * k for k in grid]
    nz = draw(st.integers(0, nd))
    zeros = draw(st.lists(st.floats(-4.0, 4.0), min_size=nz, max_size=nz))
    gain = draw(st.floats(0.2, 5.0)) * draw(st.sampled_from([-1, 1]))
    return RationalTF(gain * np.poly(zeros) if nz else [gain], np.poly(poles))


def _pts(rng, k=16):
    return rng.uniform(-2, 2, k) + 1j * rng.uniform(0.1, 3, k)


def _poly_eval(num, den, s):
    return np.polyval(num, s) / np.polyval(den, s)


@settings(max_examples=50, deadline=None)
@given(stable_tfs(), stable_tfs(), st.integers(0, 2**32 - 1))
def test_arithmetic_matches_pointwise_evaluation(a, b, seed):
    s = _pts(np.random.default_rng(seed))
    np.testing.assert_allclose(tf_mul(a, b)(s), a(s) * b(s), rtol=1e-8)
    np.testing.assert_allclose(tf_add(a, b)(s), a(s) + b(s), rtol=1e-7, atol=1e-9)
    np.testing.assert_allclose((a / b)(s), a(s) / b(s), rtol=1e-8)


@settings(max_examples=50, deadline=None)
@given(stable_tfs(), st.integers(0, 2**32 - 1))
def test_coefficients_round_trip(g, seed):
    s = _pts(np.random.default_rng(seed))
    np.testing.assert_allclose(_poly_eval(g.num, g.den, s), g(s), rtol=1e-9)
    assert g.den[0] == pytest.approx(1.0)


def test_dead_time_factor():
    g = RationalTF([2.0], [3.0, 1.0], dead_time=0.5)
    s = 0.3 + 1.2j
    assert g(s) == pytest.approx(2.0 / (3 * s + 1) * np.exp(-0.5 * s))
    assert g.dc_gain() == pytest.approx(2.0)


def test_rejects_zero_denominator():
    with pytest.raises(ContractViolation):
        RationalTF([1.0], [0.0])


@settings(max_examples=50, deadline=None)
@given(stable_tfs(max_den=4))
def test_partial_fractions_match_scipy_residue(g):
    pf = partial_fractions(g)
    r, p, k = signal.residue(g.num, g.den)
    assert sorted(np.round(p, 6), key=lambda z: (z.real, z.imag)) == \
        sorted(np.round([t.pole for t in pf.terms], 6), key=lambda z: (np.real(z), np.imag(z)))
    s = _pts(np.random.default_rng(0))
    np.testing.assert_allclose(pf.evaluate(s), g(s), rtol=1e-8, atol=1e-10)
    merged = RationalTF.constant(pf.constant)
    for sec in pf.real_sections():
        merged = tf_add(merged, sec)
    np.testing.assert_allclose(merged(s), g(s), rtol=1e-8, atol=1e-10)
    assert pf.constant == pytest.approx(k[0] if len(k) else 0.0, abs=1e-12)


def test_partial_fractions_repeated_pole():
    # 1/(s+1)^2 (s+2) = 1/(s+1)^2 - 1/(s+1) + 1/(s+2)
    g = RationalTF([1.0], np.poly([-1, -1, -2]))
    terms = {(round(np.real(t.pole), 6), t.power): np.real(t.residue) for t in partial_fractions(g).terms}
    assert terms[(-1.0, 2)] == pytest.approx(1.0)
    assert terms[(-1.0, 1)] == pytest.approx(-1.0)
    assert terms[(-2.0, 1)] == pytest.approx(1.0)


def test_partial_fractions_complex_pair_sections_are_real():
    g = RationalTF([1.0, 3.0], [1.0, 2.0, 5.0, 0.0])
    secs = partial_fractions(g).real_sections()
    for sec in secs:
        assert np.all(np.isreal(sec.num)) and np.all(np.isreal(sec.den))
    total = secs[0]
    for sec in secs[1:]:
        total = tf_add(total, sec)
    assert total(0.5 + 1j) == pytest.approx(g(0.5 + 1j))


@settings(max_examples=50, deadline=None)
@given(stable_tfs(max_den=4))
def test_serial_factors_round_trip(g):
    sf = serial_factor(g)
    s = _pts(np.random.default_rng(1))
    np.testing.assert_allclose(sf.product()(s), g(s), rtol=1e-8)
    for f in sf.factors:
        assert f.is_proper and f.den_degree <= 2


def test_pade_second_order_formula():
    L = 2.0
    g = pade(L, 2)
    s = 0.2 + 0.7j
    expected = (1 - L * s / 2 + (L * s) ** 2 / 12) / (1 + L * s / 2 + (L * s) ** 2 / 12)
    assert g(s) == pytest.approx(expected)


@settings(max_examples=30, deadline=None)
@given(stable_tfs(), st.sampled_from([0.1, 0.5, 1.0]))
def test_realization_matches_scipy_zoh(g, Ts):
    m = realize_state_space(g, Ts)
    num_d, den_d, _ = signal.cont2discrete((g.num, g.den), Ts, method="zoh")
    z = np.exp(1j * np.array([0.1, 0.5, 1.3]) * Ts) if Ts < 1 else np.exp(1j * np.array([0.1, 0.5, 1.3]))
    ours = m.frequency_response(np.angle(z) / Ts)[:, 0, 0]
    theirs = np.polyval(np.ravel(num_d), z) / np.polyval(den_d, z)
    np.testing.assert_allclose(ours, theirs, rtol=1e-7, atol=1e-10)


def test_discrete_shift_delay_adds_unit_delays():
    g = RationalTF([1.0], [5.0, 1.0], dead_time=3.0)
    m = realize_state_space(g, 1.0, "discrete_shift")
    assert m.state_dim == 4
    w = np.array([0.3])
    base = realize_state_space(g.without_delay(), 1.0).frequency_response(w)
    np.testing.assert_allclose(m.frequency_response(w), base * np.exp(-3j * w), rtol=1e-10)


def test_step_response_matches_scipy():
    g = RationalTF([2.0, 1.0], np.poly([-0.5, -3.0]))
    t = np.linspace(0, 10, 41)
    _, y = signal.step((g.num, g.den), T=t)
    np.testing.assert_allclose(continuous_step_response(g, t), y, atol=1e-8)


def test_text_round_trip():
    G = te_transfer_matrix()
    back = TransferFunctionMatrix.from_text(G.to_text())
    s = 0.1 + 0.4j
    np.testing.assert_allclose(back.evaluate(s), G.evaluate(s), rtol=1e-12)


def test_text_errors_report_line():
    with pytest.raises(ContractViolation, match="line 2"):
        TransferFunctionMatrix.from_text("1,1: 1 | 1 1\n1,2: x | 1\n")


def _random_tfm(rng, n):
    entries = []
    for _ in range(n):
        row = []
        for _ in range(n):
            g = RationalTF([rng.uniform(0.2, 3) * rng.choice([-1, 1])], [rng.uniform(0.5, 20), 1.0])
            row.append(g)
        entries.append(row)
    return TransferFunctionMatrix(entries)


@pytest.mark.parametrize("n", [2, 3])
def test_adjugate_identity(n):
    G = _random_tfm(np.random.default_rng(n), n)
    adj, det = adjugate(G), determinant(G)
    for s in _pts(np.random.default_rng(5), 4):
        Gs = G.evaluate(s)
        np.testing.assert_allclose(Gs @ adj.evaluate(s), det(s) * np.eye(n), atol=1e-9)
        assert det(s) == pytest.approx(np.linalg.det(Gs))


def _check_decomposition(G, rng):
    found = list(enumerate_selections(G))
    for sel, D, Q in found:
        assert Q.is_diagonal()
        for s in _pts(rng):
            GD = G.evaluate(s) @ D.evaluate(s)
            off = GD - np.diag(np.diag(GD))
            assert np.max(np.abs(off)) <= 1e-8 * max(1.0, np.max(np.abs(GD)))
            np.testing.assert_allclose(np.diag(GD), np.diag(Q.evaluate(s)), rtol=1e-8, atol=1e-10)
        for J, I in enumerate(sel.rows):
            assert D[I, J].gain == 1.0 and D[I, J].den_degree == 0
    return found


@pytest.mark.parametrize("seed", range(20))
def test_decomposition_random(seed):
    rng = np.random.default_rng(100 + seed)
    _check_decomposition(_random_tfm(rng, 2 + seed % 2), rng)


def test_decomposition_te_has_six_realizable_selections():
    found = _check_decomposition(te_transfer_matrix(), np.random.default_rng(7))
    labels = [sel.label() for sel, _, _ in found]
    assert labels == ["1-3-2-1", "1-3-2-3", "1-3-2-4", "3-3-2-1", "3-3-2-3", "3-3-2-4"]


def test_nonrealizable_selection_raises():
    G = te_transfer_matrix()
    with pytest.raises(NonRealizableSelection):
        build_D(G, DecompositionSelection((1, 1, 1, 1)))


def test_compute_q_is_gd():
    G = _random_tfm(np.random.default_rng(3), 2)
    D = build_D(G, DecompositionSelection.diagonal(2))
    Q = compute_Q(G, D)
    s = 0.4 + 0.9j
    np.testing.assert_allclose(np.diag(Q.evaluate(s)), np.diag(G.evaluate(s) @ D.evaluate(s)), rtol=1e-9)


def test_minimal_realization_matches_entrywise():
    G = te_transfer_matrix()
    full = realize_matrix(G, 1.0)
    small = realize_minimal(G, 1.0)
    assert small.state_dim < full.state_dim
    w = np.array([0.001, 0.05, 0.4])
    np.testing.assert_allclose(small.frequency_response(w), full.frequency_response(w), rtol=1e-8, atol=1e-8)
