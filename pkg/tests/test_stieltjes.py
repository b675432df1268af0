import numpy as np
import pytest

import edgekit as ek
from edgekit.errors import DomainRejectionError

from oracles import mp_quadratic_roots


def test_edge_value_identity(identity100):
    # -m(E_plus) -> xi_plus as eta -> 0
    sol = ek.solve_mfc(identity100, 4.0 + 1e-6j)
    assert sol.m == pytest.approx(-0.5, abs=1e-3)
    assert sol.m.imag >= 0


def test_large_eta_asymptotics(twopoint200):
    z = 1e6j
    sol = ek.solve_mfc(twopoint200, z)
    assert abs(sol.m - (-1.0 / z)) <= 1e-5 * abs(1.0 / z)


def test_quadratic_oracle_identity(identity100):
    z = 2.0 + 0.1j
    sol = ek.solve_mfc(identity100, z)
    # root of z m^2 + z m + 1 = 0 with Im m >= 0
    root = mp_quadratic_roots(1.0, z)
    assert abs(sol.m - root) < 1e-10
    assert abs(z * sol.m ** 2 + z * sol.m + 1.0) < 1e-10


def test_mp_reference_self_consistency():
    for d in (1.0, 2.0, 0.5):
        for z in (2.0 + 0.1j, 4.0 + 1e-9j, -1.0 + 0.3j, 1e6j):
            m = ek.mp_reference(d, z)
            resid = abs(m - 1.0 / (-z + 1.0 / (d * (m + 1.0))))
            assert resid < 1e-12
            assert m.imag >= -1e-13
    assert ek.mp_reference(1.0, 4.0 + 1e-12j) == pytest.approx(-0.5, abs=1e-5)
    z = 1e6j
    assert abs(ek.mp_reference(1.0, z) - (-1.0 / z)) < 1e-5 * abs(1.0 / z)


def test_solver_matches_mp_reference_on_grid(identity100):
    grid = np.linspace(-1.0, 5.0, 100) + 1e-2j
    m, res, _ = ek.stieltjes.solve_mfc_grid(identity100, grid, tol=1e-13)
    ref = np.array([ek.mp_reference(1.0, z) for z in grid])
    assert np.max(np.abs(m - ref)) < 1e-10
    assert np.all(m.imag >= 0)
    assert np.all(res <= 1e-13)


def test_conjugation_branch(twopoint200):
    z = 3.0 + 0.05j
    up = ek.solve_mfc(twopoint200, z)
    down = ek.solve_mfc(twopoint200, z.conjugate())
    assert abs(down.m - up.m.conjugate()) < 1e-10
    assert down.m.imag <= 0


def test_density_mass_identity(identity100):
    # d=1 has a hard edge at 0: the grid must resolve the E^{-1/2} spike for
    # the trapezoid mass to land within 2%
    grid = np.linspace(0.0, 4.5, 30000)
    curve = ek.density(identity100, grid, eta0=1e-6)
    assert np.all(curve.rho >= 0)
    assert not np.any(np.isnan(curve.rho))
    assert curve.mass() == pytest.approx(1.0, abs=0.02)


def test_density_outside_support(identity100):
    eta0 = 1e-6
    curve = ek.density(identity100, np.linspace(4.6, 6.0, 10), eta0=eta0)
    assert np.all(curve.rho < 10.0 * eta0)


def test_density_mass_twopoint(twopoint200):
    ep = ek.edge_params(twopoint200)
    grid = np.linspace(0.0, ep.E_plus + 0.25, 30000)
    curve = ek.density(twopoint200, grid, eta0=1e-6)
    assert np.all(curve.rho >= 0)
    assert curve.mass() == pytest.approx(1.0, abs=0.02)


def test_density_eta0_domain(identity100):
    with pytest.raises(DomainRejectionError):
        ek.density(identity100, [1.0], eta0=0.5)


def test_edge_exponent_identity(identity100):
    exponent, _ = ek.edge_exponent_probe(identity100, ek.edge_params(identity100))
    assert 0.47 <= exponent <= 0.53


def test_edge_exponent_twopoint(twopoint200):
    exponent, _ = ek.edge_exponent_probe(twopoint200, ek.edge_params(twopoint200))
    assert 0.45 <= exponent <= 0.55


def test_rescaled_flow_amplitude(twopoint200):
    # the renormalized time-t spectrum has edge density (1/pi) sqrt(L_plus - E)
    for t in (0.0, 0.8):
        state = ek.flow_state(twopoint200, t)
        pop = state.as_population()
        edge = ek.EdgeParams(xi_plus=state.tau_t, E_plus=state.L_plus_t, gamma0=1.0,
                             margin=1.0 - state.t_alpha.max() * state.tau_t)
        exponent, amplitude = ek.edge_exponent_probe(pop, edge)
        assert 0.45 <= exponent <= 0.55
        assert amplitude == pytest.approx(1.0 / np.pi, rel=0.05)


def test_herglotz_everywhere(twopoint200):
    rng = np.random.default_rng(5)
    z = rng.uniform(-2, 9, 50) + 1j * 10.0 ** rng.uniform(-6, 0, 50)
    m, res, _ = ek.stieltjes.solve_mfc_grid(twopoint200, z, tol=1e-12)
    assert np.all(res <= 1e-12)
    assert np.all(m.imag >= 0)
    # self-consistency independent of the iteration path
    vals = twopoint200._values[:, None]
    wts = twopoint200._weights[:, None]
    rhs = 1.0 / (-z + np.sum(wts * vals / (vals * m[None, :] + 1.0), axis=0) / twopoint200.d)
    assert np.max(np.abs(m - rhs) / np.maximum(1.0, np.abs(m))) <= 1e-12


def test_diagnostics_json(identity100):
    text = ek.stieltjes.diagnostics_json(identity100, [2.0 + 0.1j])
    import json
    rec = json.loads(text)[0]
    assert set(rec) == {"E", "eta", "re_m", "im_m", "residual", "iterations"}
    assert rec["residual"] <= 1e-12
