import numpy as np
import pytest

import edgekit as ek
from edgekit.errors import DomainRejectionError
from edgekit.green import edge_window_z, roman_green

from oracles import loop_observables


def _random_lin(rng, N, M, z):
    X = rng.standard_normal((M, N)) / np.sqrt(N)
    t_alpha = rng.uniform(0.3, 1.2, M)
    return ek.build_linearization(X, t_alpha, z)


def test_block_structure_zero_matrix():
    lin = ek.build_linearization(np.zeros((2, 2)), np.array([0.5, 0.8]), 1.5 + 0.5j)
    H = lin.H
    assert np.allclose(H[:2, :2], -(1.5 + 0.5j) * np.eye(2))
    assert np.allclose(H[2:, 2:], -np.diag([2.0, 1.25]))
    assert np.count_nonzero(H[:2, 2:]) == 0 and np.count_nonzero(H[2:, :2]) == 0


def test_nonzero_count_dense():
    rng = np.random.default_rng(0)
    N, M = 4, 3
    lin = _random_lin(rng, N, M, 2.0 + 1.0j)
    assert np.count_nonzero(lin.H) == 2 * N * M + N + M


def test_symmetric_for_real_z():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((3, 4))
    lin = ek.build_linearization(X, np.array([0.5, 0.6, 0.7]), 2.0)
    assert np.array_equal(lin.H, lin.H.T)


def test_positivity_rejection():
    with pytest.raises(DomainRejectionError):
        ek.build_linearization(np.zeros((2, 2)), np.array([0.5, -0.1]), 1.0j)


def test_schur_residuals_random_corpus():
    rng = np.random.default_rng(7)
    for trial in range(100):
        N = int(rng.integers(2, 9))
        M = int(rng.integers(2, 9))
        z = complex(rng.uniform(-2, 4), 10.0 ** rng.uniform(-3, 0.5))
        lin = _random_lin(rng, N, M, z)
        r_good, r_bad = ek.verify_schur(lin)
        assert r_good <= 1e-10 and r_bad <= 1e-10


def test_schur_zero_matrix_roundoff():
    lin = ek.build_linearization(np.zeros((3, 3)), np.array([0.5, 0.6, 0.7]), 1.0 + 1.0j)
    r_good, r_bad = ek.verify_schur(lin)
    assert r_good < 1e-14 and r_bad < 1e-14


def test_schur_rectangular():
    rng = np.random.default_rng(8)
    lin = _random_lin(rng, 5, 3, 2.0 + 0.5j)
    r_good, r_bad = ek.verify_schur(lin)
    assert r_good <= 1e-10 and r_bad <= 1e-10


def test_ward_random_corpus():
    rng = np.random.default_rng(9)
    for trial in range(100):
        N = int(rng.integers(2, 9))
        M = int(rng.integers(2, 9))
        z = complex(rng.uniform(-2, 4), 10.0 ** rng.uniform(-3, 0.5))
        assert ek.ward_check(_random_lin(rng, N, M, z)) <= 1e-10


def test_ward_diagonal_closed_form():
    z = 1.4 + 1.0j
    lin = ek.build_linearization(np.zeros((3, 3)), np.full(3, 0.7), z)
    # X = 0: G = -1/z on the Roman block, both Ward sides equal 1/|z|^2
    G = roman_green(np.zeros((3, 3)), np.full(3, 0.7), z)
    assert np.allclose(G, -np.eye(3) / z)
    assert abs(np.sum(np.abs(G[0]) ** 2) - 1.0 / abs(z) ** 2) < 1e-15
    assert ek.ward_check(lin) < 1e-14


def test_ward_eta_scaling():
    rng = np.random.default_rng(10)
    X = rng.standard_normal((4, 4)) / 2.0
    ta = rng.uniform(0.4, 1.0, 4)
    for eta in (0.5, 1.0, 2.0):
        lin = ek.build_linearization(X, ta, 2.0 + 1j * eta)
        assert ek.ward_check(lin) <= 1e-10


def test_observables_brute_force_equivalence(twopoint200):
    state = ek.flow_state(ek.two_point_spectrum(1.0, 2.0, 0.5, 8, 8), 0.3)
    rng = np.random.default_rng(12)
    X = rng.standard_normal((8, 8)) / np.sqrt(8)
    z = edge_window_z(state)
    lin = ek.build_linearization(X, state.t_alpha, z)
    G = roman_green(X, state.t_alpha, z)
    m = np.trace(G) / 8
    for i in (0, 3, 7):
        obs = ek.observables(lin, state, i)
        loops = loop_observables(G, i, m, state.tau_t)
        for name in ("X22", "X32", "X33", "X42", "X43", "X44", "X44p"):
            assert abs(getattr(obs, name) - loops[name]) < 1e-12, name


def test_observables_zero_matrix():
    state = ek.flow_state(ek.identity_spectrum(4, 4), 0.0)
    z = edge_window_z(state)
    lin = ek.build_linearization(np.zeros((4, 4)), state.t_alpha, z)
    obs = ek.observables(lin, state, 0)
    # G is diagonal: every chain through off-diagonal entries collapses
    g = -1.0 / z
    assert abs(obs.X22 - g * g / 4) < 1e-15
    assert abs(obs.X33 - g ** 3 / 16) < 1e-15
    assert abs(obs.X44p - (g * g / 4) * (4 * g * g / 16)) < 1e-15


def test_observable_ratios_definitional(twopoint200):
    state = ek.flow_state(twopoint200, 0.5)
    rng = np.random.default_rng(13)
    X = rng.standard_normal((200, 200)) / np.sqrt(200)
    lin = ek.build_linearization(X, state.t_alpha, edge_window_z(state))
    obs = ek.observables(lin, state, 5)
    assert obs.X32 / (obs.m + state.tau_t) == pytest.approx(obs.X22, rel=1e-12)
    assert obs.X42 == pytest.approx((obs.m + state.tau_t) ** 2 * obs.X22, rel=1e-12)
    assert obs.X43 == pytest.approx((obs.m + state.tau_t) * obs.X33, rel=1e-12)


def test_optical_identity_and_twopoint():
    spec = ek.identity_spectrum(200, 200)
    report = ek.optical_residual(ek.flow_state(spec, 0.0), reps=600, seed=41)
    assert report.status == "PASS"
    assert report.residual <= report.leading / 10.0
    tp = ek.two_point_spectrum(1.0, 2.0, 0.5, 200, 200)
    report_tp = ek.optical_residual(ek.flow_state(tp, 0.5), reps=600, seed=43)
    assert report_tp.status == "PASS"


def test_optical_coefficient_is_deterministic():
    # A4 - tau^{-4} comes from the flow state, vanishing exactly at d=1 identity
    state = ek.flow_state(ek.identity_spectrum(100, 100), 0.0)
    assert abs(state.A[4] - state.tau_t ** -4) < 1e-12


def test_cancellation_twopoint_and_identity():
    tp = ek.flow_state(ek.two_point_spectrum(1.0, 2.0, 0.5, 200, 200), 0.5)
    report = ek.cancellation_check(tp, reps=600, seed=47)
    assert report.status == "PASS"
    assert report.residual <= report.leading / 10.0
    ident = ek.flow_state(ek.identity_spectrum(100, 100), 0.5)
    report_id = ek.cancellation_check(ident, reps=40, seed=48)
    assert report_id.leading == 0.0 and report_id.residual <= 1e-10
    assert report_id.status == "PASS"


def test_decoupling_identity():
    state = ek.flow_state(ek.identity_spectrum(200, 200), 0.0)
    report = ek.decoupling_residual(state, reps=2000, seed=51)
    assert report.status == "PASS"
    assert report.residual <= report.leading / 10.0


def test_decoupling_far_regime_scale_collapse():
    # far above the edge all Green entries deflate, so the order-Psi^2 lead
    # term collapses; the expansion itself is an edge-window statement and
    # carries no accuracy guarantee out there
    state = ek.flow_state(ek.identity_spectrum(200, 200), 0.0)
    edge = ek.decoupling_residual(state, reps=200, seed=51)
    far = ek.decoupling_residual(state, reps=200, seed=51, eta_override=1.0)
    assert far.leading < edge.leading / 3.0


def test_decoupling_threads_deterministic():
    state = ek.flow_state(ek.identity_spectrum(80, 80), 0.0)
    a = ek.decoupling_residual(state, reps=60, seed=5, threads=1)
    b = ek.decoupling_residual(state, reps=60, seed=5, threads=2)
    assert a.residual == b.residual and a.leading == b.leading


def test_comparison_functional_identity_null():
    spec = ek.identity_spectrum(150, 150)
    window = 150 ** (-2.0 / 3.0 + 0.05)
    mean_q, mean_w, gap, ci = ek.comparison_functional(
        spec, 150, -0.4 * window, 0.4 * window, reps=250, seed=61)
    # same ensemble in law: gap compatible with zero at 3 sigma
    assert abs(gap) <= 3.0 * ci
    assert mean_q > 0 and mean_w > 0


def test_comparison_functional_degenerate():
    spec = ek.identity_spectrum(100, 100)
    assert ek.comparison_functional(spec, 100, 0.01, 0.01, reps=10, seed=1) == (0.0, 0.0, 0.0, 0.0)


def test_comparison_functional_window_enforced():
    spec = ek.identity_spectrum(100, 100)
    with pytest.raises(DomainRejectionError):
        ek.comparison_functional(spec, 100, -0.5, 0.5, reps=10, seed=1)


def test_report_json_schema():
    state = ek.flow_state(ek.identity_spectrum(60, 60), 0.0)
    report = ek.optical_residual(state, reps=50, seed=3)
    payload = report.to_dict()
    assert set(payload) == {"check", "N", "t", "leading", "residual", "ci", "status"}
