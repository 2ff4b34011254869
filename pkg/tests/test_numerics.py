import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msle.dbm import semicircle_cdf
from msle.errors import ConfigurationError, ConvergenceError, HalfPlaneError, InvalidDimensionError
from msle.numerics import (SeededRng, SymmetricMatrix, check_resolvent_identity, check_trace_difference,
                           check_ward, eigenvalues_sym, gaussian_ibp_test, householder_tridiagonal,
                           quadratic_form_concentration_test, resolvent, sample_ensemble, sample_goe,
                           sample_gue, trace_difference_sides, tridiagonal_ql)
from msle.numerics.matrices import Spectrum

METHODS = ["householder", "lapack"]


def _ks_semicircle(values, radius):
    x = np.sort(values)
    cdf = semicircle_cdf(x, radius)
    n = x.size
    return max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))


# rng

def test_same_seed_and_stream_reproduce_bits():
    a = SeededRng(42, 3).gen.standard_normal(100)
    b = SeededRng(42, 3).gen.standard_normal(100)
    assert np.array_equal(a, b)


def test_distinct_streams_differ_and_are_uncorrelated():
    a = SeededRng(42, 0).gen.standard_normal(20000)
    b = SeededRng(42, 1).gen.standard_normal(20000)
    assert not np.array_equal(a, b)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.03


def test_child_does_not_consume_parent_draws():
    r = SeededRng(5)
    first = r.gen.standard_normal(3)
    r.child(1, 2)
    again = SeededRng(5).gen.standard_normal(6)
    assert np.array_equal(first, again[:3])
    assert np.array_equal(r.gen.standard_normal(3), again[3:])


def test_negative_stream_rejected():
    with pytest.raises(ValueError):
        SeededRng(1, -1)


# samplers

def test_goe_1x1_variance_two():
    gen = SeededRng(1).gen
    draws = np.array([sample_goe(1, gen).entries[0, 0] for _ in range(100_000)])
    assert abs(draws.var() - 2.0) < 0.05


def test_gue_1x1_variance_one():
    gen = SeededRng(2).gen
    draws = np.array([sample_gue(1, gen).entries[0, 0] for _ in range(100_000)])
    assert np.all(draws.imag == 0)
    assert abs(draws.real.var() - 1.0) < 0.03


def test_goe_entry_variances():
    n = 40
    gen = SeededRng(3).gen
    mats = np.array([sample_goe(n, gen).entries for _ in range(400)])
    iu = np.triu_indices(n, 1)
    assert abs(mats[:, iu[0], iu[1]].var() * n - 1.0) < 0.03
    assert abs(np.einsum("kii->ki", mats).var() * n - 2.0) < 0.1


def test_gue_entry_variances():
    n = 40
    gen = SeededRng(4).gen
    mats = np.array([sample_gue(n, gen).entries for _ in range(400)])
    iu = np.triu_indices(n, 1)
    off = mats[:, iu[0], iu[1]]
    assert abs(off.real.var() * 2 * n - 1.0) < 0.03
    assert abs(off.imag.var() * 2 * n - 1.0) < 0.03
    assert abs(np.einsum("kii->ki", mats).real.var() * n - 1.0) < 0.05


@pytest.mark.parametrize("sampler", [sample_goe, sample_gue])
def test_small_samples_are_exactly_hermitian(sampler):
    m = sampler(2, SeededRng(9).gen).entries
    assert m[0, 1] == np.conj(m[1, 0])


@pytest.mark.parametrize("sampler", [sample_goe, sample_gue])
def test_zero_dimension_rejected(sampler):
    with pytest.raises(InvalidDimensionError):
        sampler(0, SeededRng(0).gen)


@pytest.mark.parametrize("beta", [1, 2])
def test_large_sample_follows_semicircle_radius_two(beta):
    m = sample_ensemble(2000, beta, SeededRng(7).gen)
    assert _ks_semicircle(eigenvalues_sym(m).values, 2.0) <= 0.02


def test_sampler_is_deterministic():
    a = sample_gue(30, SeededRng(11, 2).gen).entries
    b = sample_gue(30, SeededRng(11, 2).gen).entries
    assert np.array_equal(a, b)


def test_symmetric_matrix_validation():
    with pytest.raises(ConfigurationError):
        SymmetricMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(ConfigurationError):
        SymmetricMatrix(np.eye(2), beta=3)
    m = SymmetricMatrix(np.eye(2))
    with pytest.raises(ValueError):
        m.entries[0, 0] = 5.0


def test_spectrum_requires_ascending():
    with pytest.raises(ValueError):
        Spectrum(np.array([2.0, 1.0]))


# eigensolver

@pytest.mark.parametrize("method", METHODS)
def test_diagonal_spectrum(method):
    vals = eigenvalues_sym(SymmetricMatrix(np.diag([3.0, 1.0, 2.0])), method=method).values
    assert np.allclose(vals, [1, 2, 3], atol=1e-15)


@pytest.mark.parametrize("method", METHODS)
def test_swap_matrix_spectrum(method):
    vals = eigenvalues_sym(SymmetricMatrix(np.array([[0.0, 1.0], [1.0, 0.0]])), method=method).values
    assert np.allclose(vals, [-1, 1], atol=1e-15)


@pytest.mark.parametrize("method", METHODS)
def test_eigenvalue_sum_matches_trace(method):
    m = sample_goe(50, SeededRng(5).gen)
    vals = eigenvalues_sym(m, method=method).values
    tr = np.trace(m.entries).real
    assert abs(vals.sum() - tr) <= 1e-10 * max(1.0, abs(tr), np.abs(vals).sum())


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("beta", [1, 2])
def test_eigenpair_residuals(method, beta):
    m = sample_ensemble(50, beta, SeededRng(6, beta).gen)
    sp = eigenvalues_sym(m, vectors=True, method=method)
    h = m.entries
    norm = np.linalg.norm(h, 2)
    for lam, v in zip(sp.values, sp.vectors.T):
        assert np.linalg.norm(h @ v - lam * v) <= 1e-9 * norm


@pytest.mark.parametrize("beta", [1, 2])
def test_backends_agree(beta):
    m = sample_ensemble(60, beta, SeededRng(8).gen)
    a = eigenvalues_sym(m, method="householder").values
    b = eigenvalues_sym(m, method="lapack").values
    assert np.max(np.abs(a - b)) < 1e-12


@pytest.mark.parametrize("beta", [1, 2])
def test_spectrum_invariant_under_conjugation(beta):
    gen = SeededRng(10).gen
    m = sample_ensemble(50, beta, gen)
    g = gen.standard_normal((50, 50)) + (1j * gen.standard_normal((50, 50)) if beta == 2 else 0)
    u, _ = np.linalg.qr(g)
    a = eigenvalues_sym(m, method="householder").values
    b = eigenvalues_sym(m.conjugate_by(u), method="householder").values
    assert np.max(np.abs(a - b)) < 1e-9


def test_householder_reduction_preserves_matrix():
    a = sample_goe(20, SeededRng(12).gen).entries
    d, e, q = householder_tridiagonal(a, want_q=True)
    t = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    assert np.allclose(q @ t @ q.T, a, atol=1e-12)


def test_ql_iteration_cap_reports_diagnostics():
    d = np.array([1.0, 2.0, 3.0, 4.0])
    e = np.array([0.0, 1.0, 1.0, 1.0])
    with pytest.raises(ConvergenceError) as info:
        tridiagonal_ql(d, e, max_iter=0)
    assert info.value.diagnostics


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1), st.sampled_from([1, 2]))
def test_householder_eigenvalues_ascending_and_match_lapack(n, seed, beta):
    m = sample_ensemble(n, beta, SeededRng(seed).gen)
    a = eigenvalues_sym(m, method="householder").values
    assert np.all(np.diff(a) >= 0)
    assert np.allclose(a, np.linalg.eigvalsh(m.entries), atol=1e-12)


# resolvent and identities

def test_scalar_resolvent():
    g = resolvent(SymmetricMatrix(np.array([[0.7]])), 1j)
    assert abs(g.entries[0, 0] - 1 / (0.7 - 1j)) < 1e-15


def test_diagonal_resolvent():
    g = resolvent(SymmetricMatrix(np.diag([1.0, -1.0])), 2j)
    assert np.allclose(np.diag(g.entries), [1 / (1 - 2j), 1 / (-1 - 2j)], atol=1e-15)
    assert g.entries[0, 1] == 0


def test_resolvent_residual_small():
    m = sample_goe(16, SeededRng(13).gen)
    g = resolvent(m, 0.3 + 0.4j)
    r = (m.entries - (0.3 + 0.4j) * np.eye(16)) @ g.entries - np.eye(16)
    assert np.max(np.abs(r)) < 1e-10


@pytest.mark.parametrize("z", [0.0, 1.0, -1j, 2.0 - 0.5j])
def test_resolvent_rejects_lower_half_plane(z):
    with pytest.raises(HalfPlaneError):
        resolvent(SymmetricMatrix(np.eye(2)), z)


def test_ward_scalar_exact():
    a, e, eta = 0.4, -0.3, 0.7
    g = resolvent(SymmetricMatrix(np.array([[a]])), complex(e, eta))
    assert check_ward(g) < 1e-15


@pytest.mark.parametrize("sampler,z", [(sample_goe, 1j), (sample_gue, 0.5 + 0.3j)])
def test_ward_random(sampler, z):
    assert check_ward(resolvent(sampler(16, SeededRng(14).gen), z)) <= 1e-10


def test_resolvent_identity_degenerate_and_scalar():
    a = sample_goe(5, SeededRng(15).gen)
    assert check_resolvent_identity(a, a, 1j) == 0.0
    one, two = SymmetricMatrix(np.array([[1.0]])), SymmetricMatrix(np.array([[2.0]]))
    assert check_resolvent_identity(one, two, 1j) <= 1e-15


def test_resolvent_identity_random():
    gen = SeededRng(16).gen
    assert check_resolvent_identity(sample_goe(16, gen), sample_goe(16, gen), 1j) <= 1e-10


def test_trace_difference_diagonal_case():
    a = SymmetricMatrix(np.diag([1.0, 2.0]))
    lhs, rhs = trace_difference_sides(a, 1, 1j)
    assert abs(lhs - 1 / (1 - 1j)) < 1e-15
    assert check_trace_difference(a, 1, 1j) <= 1e-15


def test_trace_difference_random_every_k():
    a = sample_goe(8, SeededRng(17).gen)
    assert max(check_trace_difference(a, k, 1j) for k in range(1, 9)) <= 1e-10
    assert check_trace_difference(sample_gue(8, SeededRng(18).gen), 3, 0.2 + 0.7j) <= 1e-10


@pytest.mark.parametrize("beta", [1, 2])
def test_identity_suite_hundred_instances(beta):
    gen = SeededRng(19, beta).gen
    worst = 0.0
    for _ in range(100):
        a, b = sample_ensemble(16, beta, gen), sample_ensemble(16, beta, gen)
        z = complex(gen.uniform(-2, 2), gen.uniform(0.1, 2))
        worst = max(worst, check_ward(resolvent(a, z)), check_resolvent_identity(a, b, z),
                    check_trace_difference(a, int(gen.integers(1, 17)), z))
    assert worst <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1), st.sampled_from([1, 2]),
       st.floats(-3, 3), st.floats(0.05, 3))
def test_identities_hold_for_arbitrary_instances(n, seed, beta, re, im):
    gen = SeededRng(seed).gen
    a, b = sample_ensemble(n, beta, gen), sample_ensemble(n, beta, gen)
    z = complex(re, im)
    assert check_ward(resolvent(a, z)) <= 1e-9
    assert check_resolvent_identity(a, b, z) <= 1e-9
    assert check_trace_difference(a, 1 + seed % n, z) <= 1e-9


# statistical validators

def test_quadratic_form_identity_variance():
    gen = SeededRng(20).gen
    ratio = quadratic_form_concentration_test(10, 20000, gen, matrices=[np.eye(10)])
    assert abs(ratio - 1.0) < 0.1  # Var = 2n = 20 against 2 tr I = 20


def test_quadratic_form_zero_matrix():
    assert quadratic_form_concentration_test(5, 1000, SeededRng(21).gen, matrices=[np.zeros((5, 5))]) == 0.0


def test_quadratic_form_default_set():
    assert quadratic_form_concentration_test(20, 10_000, SeededRng(22).gen) <= 1.1


def test_quadratic_form_needs_trials():
    with pytest.raises(ConfigurationError):
        quadratic_form_concentration_test(5, 999, SeededRng(0).gen)


@pytest.mark.parametrize("deg,sigma", [(0, 1.0), (1, 1.0), (3, 2.0)])
def test_gaussian_ibp(deg, sigma):
    res = gaussian_ibp_test(deg, sigma, 200_000, SeededRng(23, deg).gen)
    assert res.residual <= 3 * res.stderr + 1e-15


def test_gaussian_ibp_cubic_moments():
    # E[xi^4] = 3 sigma^4 = 48 and sigma^2 E[3 xi^2] = 48 at sigma = 2
    xi = 2.0 * SeededRng(24).gen.standard_normal(400_000)
    assert abs(np.mean(xi ** 4) - 48) < 1.5
    assert abs(4 * np.mean(3 * xi ** 2) - 48) < 0.5


def test_gaussian_ibp_needs_trials():
    with pytest.raises(ConfigurationError):
        gaussian_ibp_test(1, 1.0, 9999, SeededRng(0).gen)
