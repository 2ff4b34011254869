import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msle.dbm import ParticleConfig, sample_spectrum_matrix
from msle.errors import BranchSelectionError, ConfigurationError, HalfPlaneError
from msle.numerics import SeededRng
from msle.stieltjes import (STANDARD_GRID, GridG, InitialMeasure, burgers_residual, fixed_point_residual,
                            grid_csv, m_infty_delta0, m_infty_general, m_n, self_consistent_residual,
                            solve_self_consistent, stability_differences, stability_experiment)

upper = st.complex_numbers(min_magnitude=0, max_magnitude=20, allow_nan=False, allow_infinity=False).filter(
    lambda z: z.imag > 0.05)
times = st.floats(0.0, 4.0)


def test_grid_points_and_validation():
    g = GridG(-1, 1, 1, 2, 3, 2)
    pts = g.points
    assert g.size == 6 and len(set(pts)) == 6
    assert pts[0] == -1 + 1j and pts[-1] == 1 + 2j
    for bad in [(-1, 1, 0, 1, 2, 2), (-1, 1, 1, 2, 0, 2), (1, -1, 1, 2, 2, 2), (0, 0, 1, 2, 3, 1)]:
        with pytest.raises(ConfigurationError):
            GridG(*bad)


def test_initial_measure_validation():
    with pytest.raises(ConfigurationError):
        InitialMeasure([0.0, 1.0], [0.5, 0.6])
    with pytest.raises(ConfigurationError):
        InitialMeasure([0.0], [-1.0])
    assert InitialMeasure.dirac().is_dirac_at_zero


# empirical transform

def test_m_n_single_atom():
    assert abs(m_n(ParticleConfig(0.0, [0.0]), 1j) - (-2j)) < 1e-15


def test_m_n_two_atoms():
    assert abs(m_n([-1.0, 1.0], 1j) - (-1j)) < 1e-15


def test_m_n_large_matrix_sample():
    conf = sample_spectrum_matrix(2000, 1.0, 1, SeededRng(1).gen)
    assert abs(m_n(conf, 2j) - m_infty_delta0(2j, 1.0)) < 0.05


def test_m_n_rejects_real_points():
    with pytest.raises(HalfPlaneError):
        m_n([0.0], 1.0 + 0j)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20), upper)
def test_m_n_maps_to_lower_half_plane(atoms, z):
    assert m_n(np.array(atoms), z).imag < 0


# closed-form limit

def test_limit_at_time_zero():
    assert m_infty_delta0(1j, 0.0) == -2j


def test_limit_continuous_at_time_zero():
    assert abs(m_infty_delta0(1j, 1e-8) - (-2j)) < 1e-6


def test_limit_reference_value():
    m = m_infty_delta0(1j, 1 / 16)
    assert abs(m - 4j * (1 - math.sqrt(2))) < 1e-14
    assert fixed_point_residual(m, 1j, 1 / 16) <= 1e-12


def test_limit_rejects_bad_inputs():
    with pytest.raises(HalfPlaneError):
        m_infty_delta0(-1j, 1.0)
    with pytest.raises(ConfigurationError):
        m_infty_delta0(1j, -0.1)


@pytest.mark.parametrize("t", [1 / 16, 1 / 4, 1.0])
def test_fixed_point_identity_on_grid(t):
    z = GridG(-2, 2, 1, 2, 21, 11).points
    m = m_infty_delta0(z, t)
    assert np.all(m.imag < 0)
    assert np.max(fixed_point_residual(m, z, t)) <= 1e-12


def test_branch_continuity_along_horizontal_segment():
    x = np.linspace(-6, 6, 4001)
    z = x + 1.5j
    m = m_infty_delta0(z, 1.0)
    jumps = np.abs(np.diff(m))
    assert np.all(jumps <= 10 * 2 * np.diff(x) / 1.5 ** 2)


def test_modulus_decreasing_up_the_imaginary_axis():
    y = np.linspace(1, 10, 200)
    for t in (0.1, 1.0, 3.0):
        assert np.all(np.diff(np.abs(m_infty_delta0(1j * y, t))) < 0)


@settings(max_examples=200, deadline=None)
@given(upper, times)
def test_limit_maps_to_lower_half_plane_and_solves_quadratic(z, t):
    m = m_infty_delta0(z, t)
    assert m.imag < 0
    assert fixed_point_residual(m, z, t) <= 1e-9 * max(1.0, abs(z) ** 2, t)


@settings(max_examples=100, deadline=None)
@given(upper, st.floats(0.01, 4.0))
def test_limit_is_transform_of_semicircle(z, t):
    # M = 2 * int rho(x) / (z - x) for the semicircle of radius 4 sqrt(t), by quadrature
    r = 4 * math.sqrt(t)
    th = np.linspace(0, math.pi, 4001)[1:-1]
    x = r * np.cos(th)
    w = 2 / math.pi * np.sin(th) ** 2
    quad = 2 * np.sum(w / (z - x)) * (math.pi / 4000)
    if z.imag > 0.5:
        assert abs(quad - m_infty_delta0(z, t)) < 1e-4


# general initial measure

def test_general_matches_closed_form_reference():
    m = m_infty_general(1j, 1 / 16, InitialMeasure.dirac())
    assert abs(m - m_infty_delta0(1j, 1 / 16)) <= 1e-10


def test_general_matches_closed_form_on_standard_grid():
    z = STANDARD_GRID.points
    for t in (1 / 16, 1 / 4, 1.0):
        a = m_infty_general(z, t, InitialMeasure.dirac())
        assert np.max(np.abs(a - m_infty_delta0(z, t))) <= 1e-10
        assert np.max(fixed_point_residual(a, z, t)) <= 1e-12


def test_general_time_zero_two_atoms():
    mu = InitialMeasure([-1.0, 1.0], [0.5, 0.5])
    assert abs(m_infty_general(1j, 0.0, mu) - (-1j)) < 1e-15
    assert abs(m_infty_general(1j, 0.0, mu) - m_n([-1.0, 1.0], 1j)) < 1e-15


def test_general_solution_satisfies_fixed_point():
    mu = InitialMeasure([-2.0, 0.5, 3.0], [0.2, 0.5, 0.3])
    for z in (0.3 + 0.2j, -1 + 1j, 4 + 0.5j):
        s = solve_self_consistent(z, 0.7, mu, tol=1e-13)
        assert (z + 4 * 0.7 * s).imag > 0
        assert abs(s - mu.s0(z + 4 * 0.7 * s)) <= 1e-12


def test_general_matches_empirical_transform_of_matrix_with_diagonal():
    # D - 2 sqrt(t) A with D = diag(+-1): limit is the free convolution, solved by the fixed point
    n = 2000
    d = np.where(np.arange(n) < n // 2, -1.0, 1.0)
    conf = sample_spectrum_matrix(n, 0.5, 1, SeededRng(2).gen, diag=d)
    mu = InitialMeasure([-1.0, 1.0], [0.5, 0.5])
    for z in (2j, 1 + 1.5j):
        assert abs(m_n(conf, z) - m_infty_general(z, 0.5, mu)) < 0.02


def test_solver_iteration_cap_raises_branch_error(monkeypatch):
    import msle.stieltjes as s
    monkeypatch.setattr(s, "MAX_ITER", 1)
    with pytest.raises(BranchSelectionError) as info:
        s.solve_self_consistent(0.1 + 0.01j, 5.0, InitialMeasure([-1.0, 1.0], [0.5, 0.5]))
    assert "last_residual" in info.value.diagnostics


# Burgers equation

@pytest.mark.parametrize("z,t", [(2j, 0.25), (1 + 2j, 1.0)])
def test_burgers_residual_small(z, t):
    assert burgers_residual(t, z, 1e-4, 1e-4) <= 1e-6


def test_burgers_on_acceptance_grid():
    z = STANDARD_GRID.points
    worst = max(burgers_residual(t, zk) for t in (1 / 16, 1 / 4, 1.0) for zk in z)
    assert worst <= 1e-6


def test_initial_time_derivative():
    z, h = 1.5 + 1j, 1e-6
    one_sided = (m_infty_delta0(z, h) - 2 / z) / h
    assert abs(one_sided - 8 / z ** 3) < 1e-4


def test_burgers_step_validation():
    with pytest.raises(ConfigurationError):
        burgers_residual(0.25, 1e-3j + 1, 1e-2, 1e-4)
    with pytest.raises(ConfigurationError):
        burgers_residual(1e-5, 1j, 1e-4, 1e-4)


# empirical self-consistency

def test_self_consistent_residual_trivial():
    assert self_consistent_residual(ParticleConfig(0.0, [0.0]), 1j, 0.0) == 0.0


def test_self_consistent_residual_shrinks_with_n():
    rng = SeededRng(3)
    med = []
    for n in (250, 2000):
        r = [self_consistent_residual(sample_spectrum_matrix(n, 1.0, 1, rng.child(n, i).gen), 2j, 1.0)
             for i in range(20)]
        med.append(np.median(r))
    assert med[1] <= 0.05 and med[1] < med[0]


# stability

def test_zero_perturbation_gives_zero_difference():
    _, d = stability_differences(1.0, 1.0, [0.0, 1e-6], SeededRng(4).gen)
    assert d[0] == 0.0 and d[1] > 0


def test_small_time_response_is_linear():
    eps = np.logspace(-8, -2, 7)
    slope = stability_experiment(1e-3, 1.0, eps, SeededRng(5).gen)
    assert 0.9 <= slope <= 1.1
    _, d = stability_differences(1e-3, 1.0, eps, SeededRng(5).gen)
    # |s - s~| ~ eps / |1 - 4 t s0'(w)|, with |4 t s0'| <= 4t/eta^2 = 4e-3
    assert np.all(np.abs(d / eps - 1) < 0.01)


def test_stability_needs_three_decades():
    with pytest.raises(ConfigurationError):
        stability_experiment(1.0, 1.0, [1e-4, 1e-3, 1e-2], SeededRng(0).gen)


def test_grid_csv_format():
    buf = io.StringIO()
    z = np.array([1j, 1 + 2j])
    grid_csv(buf, z, 0.25, m_infty_delta0(z, 0.25))
    lines = buf.getvalue().splitlines()
    assert lines[0] == "re_z,im_z,t,re_m,im_m" and len(lines) == 3
    assert complex(float(lines[1].split(",")[3]), float(lines[1].split(",")[4])) == m_infty_delta0(1j, 0.25)
