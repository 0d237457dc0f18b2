import time

import numpy as np
import pytest

from thinhomog.fem import integrate
from thinhomog.geometry import CellSpec, GeometryError, Profile
from thinhomog.homogenize import (
    boundary_work, compute_area_ratio, compute_p, compute_qhat, compute_qhat_energy,
    compute_theta, homogenized_coefficients, q_profile, richardson, solve_cell_problem,
    theta_table)

WAVY = CellSpec(Profile.sine(1., [(0.5, 1)]), 0.)


@pytest.mark.parametrize('g0, h0', [(1., 0.), (0.7, 0.4), (2., 1.)])
def test_flat_cell(g0, h0):
    start = time.time()
    coeffs = homogenized_coefficients(
        CellSpec(Profile.constant(g0), h0), Profile.constant(h0), 32)
    assert coeffs.q_hat == pytest.approx(g0 + h0, abs=1e-8)
    assert coeffs.p == 0.
    assert coeffs.area_ratio == pytest.approx(g0 + h0)
    assert coeffs.q0 == pytest.approx(1.)
    assert coeffs.q_hat_error_bar == 0.
    assert time.time() - start < 5.


def test_cell_solution():
    sol = solve_cell_problem(WAVY, 32)
    assert sol.report.converged
    # canonical representative
    assert integrate(sol.mesh, sol.X.values) == pytest.approx(0., abs=1e-10)
    pairs = sol.mesh.periodic_pairs
    np.testing.assert_array_equal(sol.X.values[pairs[:, 0]], sol.X.values[pairs[:, 1]])
    # weak form tested with X itself
    work, load = boundary_work(sol)
    assert work == pytest.approx(load, rel=1e-6)


def test_energy_identity():
    start = time.time()
    sol = solve_cell_problem(WAVY, 32)
    flux, work = compute_qhat(sol), compute_qhat_energy(sol)
    assert 0. < flux < 1.
    assert flux == pytest.approx(work, rel=1e-2)
    assert time.time() - start < 30.


def test_self_convergence():
    coarse = compute_qhat(solve_cell_problem(WAVY, 16))
    fine = compute_qhat(solve_cell_problem(WAVY, 32))
    assert abs(fine - coarse) / fine < 2e-2

    coeffs = homogenized_coefficients(WAVY, Profile.constant(0.), 32)
    extrapolated, bar = richardson(coarse, fine)
    assert coeffs.q_hat == pytest.approx(extrapolated)
    assert coeffs.q_hat_error_bar == pytest.approx(bar)
    assert bar > 0.
    assert coeffs.q_hat_levels == {32: pytest.approx(fine), 16: pytest.approx(coarse)}
    assert coeffs.self_convergence() == pytest.approx(abs(fine - coarse) / fine)

    single = homogenized_coefficients(WAVY, Profile.constant(0.), 32, extrapolate=False)
    assert list(single.q_hat_levels) == [32]
    assert single.self_convergence() is None


def test_richardson():
    # f(h) = 1 + h^2 sampled at h = 2, 1
    value, bar = richardson(5., 2.)
    assert value == pytest.approx(1.)
    assert bar == pytest.approx(1.)


def test_non_smooth_cell():
    tent = CellSpec(Profile.linear([(0., 1.), (0.5, 2.)]), 0.)
    with pytest.raises(GeometryError):
        solve_cell_problem(tent, 16)


def test_mass_correction():
    assert compute_p(Profile.cosine(1., [(1., 1)])) == pytest.approx(1.)
    assert compute_p(Profile.constant(0.3)) == 0.
    assert compute_area_ratio(CellSpec(Profile.sine(1., [(0.5, 1)]), 0.25)) \
        == pytest.approx(1.25)


def test_theta():
    # g = 1 + 0.5 sin, g > 1 on half of the period
    assert compute_theta(WAVY, 1.) == pytest.approx(0.5, abs=1e-10)
    assert compute_theta(WAVY, 0.25) == 1.
    # sin(2 pi y) > 0.5 on (1/12, 5/12)
    assert compute_theta(WAVY, 1.25) == pytest.approx(1. / 3., abs=1e-10)
    with pytest.raises(ValueError):
        compute_theta(WAVY, 1.6)

    x2, theta = theta_table(WAVY, 128)
    assert np.all(np.diff(theta) <= 1e-12)
    # int theta dx2 = |Y*| / L1
    assert np.sum(theta) * (x2[1] - x2[0]) == pytest.approx(1., rel=1e-2)


def test_q_profile():
    sol = solve_cell_problem(WAVY, 32)
    x2, q = q_profile(sol, 24)
    width = x2[1] - x2[0]
    assert np.sum(q) * width == pytest.approx(compute_qhat(sol), rel=1e-10)
    assert len(x2) == 24


def test_coefficients_record():
    coeffs = homogenized_coefficients(WAVY, Profile.cosine(1., [(1., 1)]), 16)
    record = coeffs.to_json()
    assert record['p'] == pytest.approx(1.)
    assert record['mass_coeff'] == pytest.approx(coeffs.area_ratio + 1.)
    assert record['diffusivity'] == pytest.approx(coeffs.q_hat / coeffs.mass_coeff)
    assert record['resolution'] == [16, 24]
    assert list(record['q_hat_levels']) == [16, 8]
