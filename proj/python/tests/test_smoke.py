import math

import numpy as np
import pytest

import hbvm


def test_gauss_rule_and_tableau():
    nodes, weights = hbvm.gauss_legendre_rule(3)
    assert np.isclose(weights.sum(), 1.0)
    assert np.allclose(nodes + nodes[::-1], 1.0)
    A, b, c = hbvm.build_tableau(2, 2)
    r = math.sqrt(3) / 6
    gauss = np.array([[0.25, 0.25 - r], [0.25 + r, 0.25]])
    assert np.abs(A - gauss).max() < 1e-13
    assert np.linalg.matrix_rank(hbvm.build_tableau(6, 2)[0], tol=1e-10) == 2


def test_quartic_energy_is_conserved():
    model = hbvm.model("quartic")
    y = hbvm.integrate(model, [1.1, 0.4], 0.1, 200, k=4, s=2)
    assert y.shape == (201, 2)
    energies = np.array([model.energy(row) for row in y])
    assert np.abs(np.diff(energies)).max() < 1e-13


def test_model_derivatives():
    model = hbvm.crtbp(spatial=False)
    y = np.array([0.9, 0.1, -0.05, 0.85])
    g = model.gradient(y)
    eps = 1e-6
    fd = [(model.energy(y + eps * e) - model.energy(y - eps * e)) / (2 * eps) for e in np.eye(4)]
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-9)
    assert model.hessian(y).shape == (4, 4)


def test_lyapunov_orbit_by_period():
    setup = hbvm.MissionSetup()
    orbit = hbvm.lyapunov_by_period(setup, 200.0, hbvm.lyapunov_guess(setup))
    assert abs(orbit.energy - (-1.5002604)) < 5e-5
    assert orbit.classification == "L2 Lyapunov"
    assert orbit.mesh.y.shape == (101, 4)
    assert orbit.mesh.report["converged"]
    assert orbit.max_energy_drift < 1e-10


def test_hill_transfer():
    setup = hbvm.MissionSetup(k=4)
    x = hbvm.hill_l2_abscissa()
    P1 = np.array([x, 0.0, 0.0, x])
    P2 = np.array([x + 0.005, 0.0044, -0.0044, x + 0.005])
    r = hbvm.hill_transfer(P1, P2, 8.1, setup)
    assert r.final_mismatch < 1e-10
    assert r.max_relative_drift <= 1e-10
    assert abs(hbvm.winding_number(r.mesh.y, x, 0.0)) >= 1.0
    assert r.control.shape == (101, 2)


def test_errors_map_to_python_exceptions():
    with pytest.raises(hbvm.DomainError):
        hbvm.model("no-such-model")
    setup = hbvm.MissionSetup()
    setup.newton.max_iters = 1
    with pytest.raises(hbvm.ConvergenceError):
        hbvm.lyapunov_by_period(setup, 200.0, hbvm.lyapunov_guess(setup))
    assert issubclass(hbvm.ConvergenceError, RuntimeError)


def test_cli_entry(tmp_path):
    csv = tmp_path / "orbit.csv"
    status, out, err = hbvm.run_cli(["run", "halo-period", "--T-days", "180", "--csv", str(csv)])
    assert status == 0, err
    assert out.startswith("halo-period:")
    assert len(csv.read_text().splitlines()) == 102
    status, _, err = hbvm.run_cli(["run", "halo-period"])
    assert status == 1
    assert "T_days" in err
