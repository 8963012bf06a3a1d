import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chbiot import kernels
from chbiot import material as mat
from chbiot.material import (MaterialParams, MobilitySpec, ParameterError, SourceSpec,
                             coeffs_at, pi_interp, psi_terms, reduced_energy, sources_at,
                             time_avg_wtilde_phi, wtilde_phi, wtilde_strain, wtilde_theta)

TABLE = MaterialParams()
N_POINTS = 100
FD_REL = 1e-6


def random_points(rng, n=N_POINTS, lo=-0.95, hi=0.95):
    phi = rng.uniform(lo, hi, n)
    eps = rng.uniform(-0.5, 0.5, (n, 3))
    theta = rng.uniform(-0.5, 0.5, n)
    return phi, eps, theta


def assert_fd(analytic, fd):
    scale = np.maximum(np.abs(analytic), 1.0)
    assert np.max(np.abs(analytic - fd) / scale) <= FD_REL


# --- interpolation and coefficients ------------------------------------------------

def test_pi_examples():
    assert pi_interp(-1.0) == 0.0
    assert pi_interp(0.0) == 0.5
    assert pi_interp(2.0) == 1.0
    assert pi_interp(-3.0) == 0.0 and pi_interp(1.0) == 1.0


def test_pi_c1_at_clamps():
    for c in (-1.0, 1.0):
        assert mat.dpi_interp(c) == 0.0
        assert abs(pi_interp(c + 1e-7) - pi_interp(c - 1e-7)) < 1e-13


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5))
def test_pi_in_unit_interval(x):
    assert 0.0 <= pi_interp(x) <= 1.0


def test_coeffs_table_endpoints():
    lo, hi, mid = (coeffs_at(v, TABLE) for v in (-1.0, 1.0, 0.0))
    assert (lo["kappa"], lo["M"], lo["alpha"]) == (1.0, 1.0, 1.0)
    assert (hi["kappa"], hi["M"], hi["alpha"]) == (0.1, 0.1, 0.5)
    np.testing.assert_array_equal(lo["C"], np.array(mat.C_TABLE_MINUS))
    np.testing.assert_array_equal(hi["C"], np.array(mat.C_TABLE_PLUS))
    assert mid["kappa"] == pytest.approx(0.55, abs=1e-15)


def test_coeffs_symmetric(rng):
    c = coeffs_at(rng.uniform(-2, 2, 50), TABLE)
    np.testing.assert_array_equal(c["C"], np.swapaxes(c["C"], -1, -2))
    np.testing.assert_array_equal(c["Cnu"], np.swapaxes(c["Cnu"], -1, -2))


# --- potential ------------------------------------------------------------------------

def test_psi_terms_examples():
    assert psi_terms(0.0, 0.0) == 0.0
    assert psi_terms(1.0, 1.0) == 0.0
    assert psi_terms(2.0, 2.0) == 6.0


def test_split_consistency(rng):
    x = rng.uniform(-3, 3, 1000)
    np.testing.assert_array_equal(mat.dpsi_vex(x) + mat.dpsi_cav(x), x * x * x - x)


def test_psi_derivative_fd(rng):
    x = rng.uniform(-2, 2, N_POINTS)
    h = 1e-6
    assert_fd(psi_terms(x, x), (mat.psi(x + h) - mat.psi(x - h)) / (2 * h))
    assert_fd(mat.d2psi_vex(x), (mat.dpsi_vex(x + h) - mat.dpsi_vex(x - h)) / (2 * h))


# --- reduced energy -----------------------------------------------------------------

def test_reduced_energy_examples():
    p0 = MaterialParams(xi=0.0)
    assert reduced_energy(0.3, np.zeros(3), 0.0, p0) == 0.0
    assert reduced_energy(1.0, np.zeros(3), 1.0, p0) == pytest.approx(0.05, abs=1e-16)
    phi = 0.4
    T = TABLE.eigenstrain(phi) * mat.VOIGT_I
    th = coeffs_at(phi, TABLE)["alpha"] * T.sum()
    assert reduced_energy(phi, T, th, TABLE) == pytest.approx(0.0, abs=1e-16)
    np.testing.assert_allclose(wtilde_strain(phi, T, th, TABLE), 0.0, atol=1e-15)
    assert wtilde_theta(phi, T, th, TABLE) == pytest.approx(0.0, abs=1e-16)


def test_wtilde_theta_at_zero_strain(rng):
    phi, _, theta = random_points(rng)
    np.testing.assert_allclose(wtilde_theta(phi, np.zeros((N_POINTS, 3)), theta, TABLE),
                               coeffs_at(phi, TABLE)["M"] * theta, rtol=1e-15)


def test_wtilde_phi_zero_cases(rng):
    assert wtilde_phi(0.2, np.zeros(3), 0.0, MaterialParams(xi=0.0)) == 0.0
    flat = MaterialParams(xi=0.0, C_plus=mat.C_TABLE_MINUS, M=(1.0, 1.0), alpha=(1.0, 1.0))
    phi, eps, theta = random_points(rng)
    np.testing.assert_array_equal(wtilde_phi(phi, eps, theta, flat), 0.0)


@pytest.mark.parametrize("params", [TABLE, MaterialParams(eigen_scale=0.5, eigen_shift=-1.0)],
                         ids=["table", "shifted-eigenstrain"])
def test_energy_derivatives_fd(params, rng):
    phi, eps, theta = random_points(rng)
    h = 1e-6
    W = lambda p, e, t: reduced_energy(p, e, t, params)
    assert_fd(wtilde_phi(phi, eps, theta, params),
              (W(phi + h, eps, theta) - W(phi - h, eps, theta)) / (2 * h))
    assert_fd(wtilde_theta(phi, eps, theta, params),
              (W(phi, eps, theta + h) - W(phi, eps, theta - h)) / (2 * h))
    sig = wtilde_strain(phi, eps, theta, params)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        assert_fd(sig[:, i], (W(phi, eps + e, theta) - W(phi, eps - e, theta)) / (2 * h))


def test_second_derivatives_fd(rng):
    phi, eps, theta = random_points(rng)
    h = 1e-6
    g = lambda p, e, t: wtilde_phi(p, e, t, TABLE)
    assert_fd(mat.wtilde_phi_phi(phi, eps, theta, TABLE),
              (g(phi + h, eps, theta) - g(phi - h, eps, theta)) / (2 * h))
    assert_fd(mat.wtilde_phi_theta(phi, eps, theta, TABLE),
              (g(phi, eps, theta + h) - g(phi, eps, theta - h)) / (2 * h))
    d_eps = mat.wtilde_phi_strain(phi, eps, theta, TABLE)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        assert_fd(d_eps[:, i], (g(phi, eps + e, theta) - g(phi, eps - e, theta)) / (2 * h))


def test_convex_in_strain_and_content(rng):
    phi = rng.uniform(-2, 2, N_POINTS)
    e1, e2 = rng.standard_normal((2, N_POINTS, 3))
    t1, t2 = rng.standard_normal((2, N_POINTS))
    W = lambda e, t: reduced_energy(phi, e, t, TABLE)
    mid = W(0.5 * (e1 + e2), 0.5 * (t1 + t2))
    assert np.all(mid <= 0.5 * W(e1, t1) + 0.5 * W(e2, t2) + 1e-12)


# --- time average -----------------------------------------------------------------------

def test_time_average_trivial_cases(rng):
    phi, eps, theta = random_points(rng)
    np.testing.assert_allclose(time_avg_wtilde_phi(phi, phi, eps, theta, TABLE),
                               wtilde_phi(phi, eps, theta, TABLE), rtol=1e-13, atol=1e-14)
    flat = MaterialParams(C_plus=mat.C_TABLE_MINUS, M=(1.0, 1.0), alpha=(1.0, 1.0))
    phi2 = rng.uniform(-0.9, 0.9, N_POINTS)
    # decoupled coefficients: wtilde_phi is affine in phi, so the average is the midpoint value
    np.testing.assert_allclose(time_avg_wtilde_phi(phi, phi2, eps, theta, flat, 1),
                               time_avg_wtilde_phi(phi, phi2, eps, theta, flat, 4), rtol=1e-13)


def test_four_points_exact_for_degree_five():
    """Constant alpha and a varying C make s -> wtilde_phi(phi(s)) a polynomial of degree <= 5."""
    params = MaterialParams(alpha=(0.8, 0.8))
    eps, theta = np.array([0.3, -0.2, 0.4]), 0.25
    a, b = -0.9, 0.8
    s = np.cos(np.pi * (np.arange(12) + 0.5) / 12) * 0.5 + 0.5
    g = wtilde_phi(a + s * (b - a), eps, theta, params)
    poly = np.polynomial.Polynomial.fit(s, g, 5, domain=[0, 1], window=[0, 1])
    assert np.abs(poly(s) - g).max() <= 1e-13 * np.abs(g).max()  # degree really <= 5
    exact = poly.integ()(1.0) - poly.integ()(0.0)
    approx = time_avg_wtilde_phi(a, b, eps, theta, params, quad_points=4)
    assert abs(approx - exact) <= 1e-14 * max(1.0, abs(exact))


def test_default_rule_exact_for_full_model():
    """With phase-dependent alpha the integrand reaches degree 8; five points integrate it exactly."""
    eps, theta = np.array([0.3, -0.2, 0.4]), 0.25
    a, b = -0.9, 0.8
    exact = time_avg_wtilde_phi(a, b, eps, theta, TABLE, quad_points=12)
    assert abs(time_avg_wtilde_phi(a, b, eps, theta, TABLE) - exact) <= 1e-14
    assert abs(time_avg_wtilde_phi(a, b, eps, theta, TABLE, quad_points=4) - exact) > 1e-12


def test_time_average_newton_derivatives_fd(rng):
    phi0, eps, theta = random_points(rng)
    phi1 = rng.uniform(-0.95, 0.95, N_POINTS)
    val, dphi, deps, dth = time_avg_wtilde_phi(phi0, phi1, eps, theta, TABLE, derivatives=True)
    f = lambda p1, e, t: time_avg_wtilde_phi(phi0, p1, e, t, TABLE)
    h = 1e-6
    assert_fd(dphi, (f(phi1 + h, eps, theta) - f(phi1 - h, eps, theta)) / (2 * h))
    assert_fd(dth, (f(phi1, eps, theta + h) - f(phi1, eps, theta - h)) / (2 * h))
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        assert_fd(deps[:, i], (f(phi1, eps + e, theta) - f(phi1, eps - e, theta)) / (2 * h))


def test_kernel_matches_reference_average(kernel_backend, rng):
    phi0, eps, theta = random_points(rng, lo=-1.3, hi=1.3)
    phi1 = rng.uniform(-1.3, 1.3, N_POINTS)
    s, w = mat.gauss_legendre_unit(5)
    for params in (TABLE, MaterialParams(eigen_scale=0.5, eigen_shift=-1.0)):
        val, der = kernels.wphi_average(phi0, phi1, eps, theta, kernels.pack_material(params),
                                        s, w)
        ref, dref, _, _ = time_avg_wtilde_phi(phi0, phi1, eps, theta, params, 5,
                                              derivatives=True)
        np.testing.assert_allclose(val, ref, rtol=1e-12, atol=1e-13)
        np.testing.assert_allclose(der, dref, rtol=1e-12, atol=1e-13)


# --- sources, mobility, validation ------------------------------------------------------

def test_sources():
    zero = MaterialParams()
    assert sources_at(0.3, np.zeros(3), 0.0, zero) == (0.0, 0.0)
    logi = MaterialParams(r=SourceSpec("logistic", 2.5))
    assert sources_at(0.0, np.zeros(3), 0.0, logi)[0] == 2.5
    assert sources_at(1.0, np.zeros(3), 0.0, logi)[0] == 0.0
    assert sources_at(-1.0, np.zeros(3), 0.0, logi)[0] == 0.0
    assert SourceSpec("constant", 0.7)(np.zeros(2)).tolist() == [0.7, 0.7]


def test_mobility():
    assert MobilitySpec()(0.3) == 1.0
    deg = MobilitySpec("degenerate")
    assert deg(1.0) == pytest.approx(1e-14, abs=1e-30)
    assert deg(0.0) == pytest.approx(1 / 16 + 1e-14)


@pytest.mark.parametrize("kwargs", [
    {"gamma": 0.0}, {"kappa": (1.0,)}, {"M": (-1.0, 1.0)}, {"f": (0.0,)},
    {"C_minus": ((1, 0, 0), (0, 1, 0), (0, 0, -1))}, {"C_plus": ((1, 2, 0), (0, 1, 0), (0, 0, 1))},
    {"C_minus": ((1, 0), (0, 1))}, {"Cnu_minus": ((-1, 0, 0), (0, 1, 0), (0, 0, 1))},
])
def test_invalid_parameters(kwargs):
    with pytest.raises(ParameterError):
        MaterialParams(**kwargs)


def test_spec_kinds_validated():
    with pytest.raises(ParameterError):
        SourceSpec("exponential")
    with pytest.raises(ParameterError):
        MobilitySpec("quadratic")


def test_assumption_warnings():
    assert TABLE.warnings() == []
    tum = MaterialParams(Cnu_minus=((0,) * 3,) * 3, Cnu_plus=((0,) * 3,) * 3,
                         mobility=MobilitySpec("degenerate"))
    w = tum.warnings()
    assert len(w) == 3 and any("degenerate" in x for x in w)
    assert TABLE.chl().M == (0.0, 0.0)
    assert TABLE.chl().warnings(chl_mode=True) == []
    assert TABLE.chl().warnings(chl_mode=False)
