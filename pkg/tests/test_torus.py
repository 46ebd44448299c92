import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thetazeros.torus import Torus


def brute_theta1(z, tau, nterms=10_000):
    # plain long summation of the odd theta series, no truncation logic
    q = np.exp(1j * np.pi * tau)
    total = 0j
    for n in range(nterms):
        term = 2 * (-1) ** n * q ** ((n + 0.5) ** 2) * np.sin((2 * n + 1) * np.pi * z)
        if term == 0:
            break
        total += term
    return total


def eta_product(tau, nfac=200):
    q2 = np.exp(2j * np.pi * tau)
    return np.exp(1j * np.pi * tau / 12) * np.prod(1 - q2 ** np.arange(1, nfac))


def polar_torus_mean(tor, center, func, n=48):
    """Torus average of ``2 log|z - center| + func(z)`` with an independent
    polar rule on the parallelogram centred at ``center``."""
    tau = tor.tau
    verts = np.array([0.5 + tau / 2, -0.5 + tau / 2, -0.5 - tau / 2, 0.5 - tau / 2])
    x, wx = np.polynomial.legendre.leggauss(n)
    total = 0.0
    for k in range(4):
        a, b = verts[k], verts[(k + 1) % 4]
        edge = b - a
        normal = -1j * edge / abs(edge)
        d = (a.conjugate() * normal).real
        if d < 0:
            normal, d = -normal, -d
        th0, th1 = np.angle(a), np.angle(b)
        if th1 < th0:
            th1 += 2 * np.pi
        th = 0.5 * (th1 - th0) * (x + 1) + th0
        wth = 0.5 * (th1 - th0) * wx
        dirs = np.exp(1j * th)
        R = d / (dirs.conjugate() * normal).real
        total += np.sum(wth * (R**2 * np.log(R) - R**2 / 2))
        r = 0.5 * R[:, None] * (x[None, :] + 1)
        wr = 0.5 * R[:, None] * wx[None, :]
        pts = center + r * dirs[:, None]
        total += np.sum(wth[:, None] * wr * r * func(pts))
    return total / tor.T


@pytest.fixture(scope="module")
def square():
    return Torus(1j)


@pytest.fixture(scope="module")
def skew():
    return Torus(0.3 + 1.1j)


def test_theta1_vanishes_at_origin(square):
    assert abs(square.theta1(0.0)) < 1e-15


@pytest.mark.parametrize("tau", [1j, 0.3 + 1.1j, -0.45 + 0.8j])
def test_theta1_matches_long_series(tau):
    tor = Torus(tau)
    for z in [0.3 + 0.4j, -0.7 + 0.2j, 0.1 + 0.9 * tau]:
        ref = brute_theta1(z, tau)
        assert abs(tor.theta1(z) - ref) <= 1e-12 * max(1.0, abs(ref))


def test_theta1_prime_at_zero_is_eta_cubed(skew):
    eta = eta_product(skew.tau)
    assert abs(skew.theta1_prime0 - 2 * np.pi * eta**3) < 1e-13


def test_theta1_derivative_finite_difference(skew):
    z = 0.21 + 0.37j
    h = 1e-6
    fd = (skew.theta1(z + h) - skew.theta1(z - h)) / (2 * h)
    assert abs(skew.theta1(z, deriv=True) - fd) < 1e-8


@pytest.mark.parametrize("tau", [1j, 0.3 + 1.1j])
def test_quasi_periodicity(tau):
    tor = Torus(tau)
    rng = np.random.default_rng(0)
    z = rng.uniform(0, 1, 100) + tau * rng.uniform(0, 1, 100)
    th = tor.theta1(z)
    err1 = np.abs(tor.theta1(z + 1) + th) / np.maximum(np.abs(th), 1e-300)
    factor = -np.exp(-1j * np.pi * tau - 2j * np.pi * z)
    err2 = np.abs(tor.theta1(z + tau) - factor * th) / np.abs(factor * th)
    assert err1.max() < 1e-10
    assert err2.max() < 1e-10


def test_theta1_odd(skew):
    z = np.array([0.1 + 0.2j, 0.7 - 0.3j, -0.25 + 0.9j])
    assert np.max(np.abs(skew.theta1(-z) + skew.theta1(z))) < 1e-13


def test_prime_form_diagonal_and_antisymmetry(skew):
    z, w = 0.3 + 0.2j, -0.1 + 0.6j
    assert skew.prime_form(z, z) == 0
    assert abs(skew.prime_form(z, w) + skew.prime_form(w, z)) < 1e-14
    h = 1e-5
    ratio = skew.prime_form(z + h, z) / h
    assert abs(ratio - 1) < 1e-5


@given(
    st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 2.0), st.floats(-0.5, 0.5)
)
@settings(max_examples=60, deadline=None)
def test_reduce_idempotent(x, y, T, tr):
    tor = Torus(complex(tr, T))
    z = tor.reduce(complex(x, y))
    assert tor.reduce(z) == z
    a, b = tor.lattice_coords(z)
    assert 0 <= a < 1 and 0 <= b < 1


def test_reduce_lattice_shift(skew):
    z = 0.37 + 0.41j
    for m, n in [(1, 0), (0, 1), (-2, 3)]:
        assert abs(skew.reduce(z + m + n * skew.tau) - skew.reduce(z)) < 1e-12


def test_dist_quotient_metric(skew):
    z = 0.05 + 0.02j
    w = z + skew.tau - 0.01
    assert abs(skew.dist(z, w) - 0.01) < 1e-12
    assert skew.dist(z, z + 3) < 1e-12


def test_green_symmetry(skew):
    rng = np.random.default_rng(1)
    z = rng.uniform(-1, 2, 200) + 1j * rng.uniform(-1, 2, 200)
    w = rng.uniform(-1, 2, 200) + 1j * rng.uniform(-1, 2, 200)
    assert np.max(np.abs(skew.green(z, w) - skew.green(w, z))) < 1e-10


def test_green_periodic(skew):
    z, w = 0.3 + 0.2j, 0.8 + 0.9j
    g = skew.green(z, w)
    assert abs(skew.green(z + 1, w) - g) < 1e-11
    assert abs(skew.green(z, w + 2 * skew.tau - 1) - g) < 1e-11


def test_green_diagonal_sentinel(square):
    assert square.green(0.2 + 0.3j, 0.2 + 0.3j) == -np.inf
    assert square.green(0.2 + 0.3j, 1.2 + 0.3j) == -np.inf


@pytest.mark.parametrize("tau", [1j, 0.3 + 1.1j])
def test_green_mean_zero_polar(tau):
    tor = Torus(tau)
    for z in [0.1 + 0.1j, 0.55 + 0.3j * tau]:
        smooth = lambda p: tor.green(p, z) - 2 * np.log(np.abs(p - z))
        assert abs(polar_torus_mean(tor, z, smooth)) < 1e-6


def test_green_log_singularity(skew):
    z = 0.4 + 0.3j
    vals = []
    for r in [1e-2, 1e-4, 1e-6]:
        w = z + r * np.exp(0.7j)
        vals.append(skew.green(z, w) - 2 * np.log(skew.dist(z, w)))
    assert np.ptp(vals) < 1e-3


def test_green_discrete_laplacian_and_flux(square):
    tor = square
    z = 0.37 + 0.41j
    M = 256
    h = 1.0 / M
    # grid of cell centres offset from z by half a cell
    idx = np.arange(-M // 2, M // 2) + 0.5
    X, Y = np.meshgrid(idx * h, idx * h, indexing="ij")
    P = z + X + 1j * Y
    G = tor.green(P, z)
    lap = (
        tor.green(P + h, z) + tor.green(P - h, z) + tor.green(P + 1j * h, z)
        + tor.green(P - 1j * h, z) - 4 * G
    ) / h**2
    ddc = lap / (4 * np.pi)
    far = np.abs(X + 1j * Y) > 0.15
    assert np.max(np.abs(ddc[far] * tor.T + 1)) < 1e-2
    # discrete Green's theorem over a box of half-width 0.125 around z
    box = (np.abs(X) < 0.125) & (np.abs(Y) < 0.125)
    flux = np.sum(ddc[box]) * h * h + box.sum() * h * h / tor.T
    assert abs(flux - 1) < 1e-3


def test_rho_constant_and_matches_offset(skew):
    rng = np.random.default_rng(2)
    w = rng.uniform(0, 1, 10) + skew.tau * rng.uniform(0, 1, 10)
    rho = np.array([skew.rho_omega(x) for x in w])
    assert np.ptp(rho) < 1e-6
    # independent polar rule on the canonical point section norm
    w0 = w[0]
    smooth = lambda p: skew.log_point_norm(p, w0) - 2 * np.log(np.abs(p - w0))
    assert abs(polar_torus_mean(skew, w0, smooth) - rho[0]) < 1e-8


def test_green_equals_point_norm_minus_rho(skew):
    z, w = 0.15 + 0.6j, 0.8 + 0.1j
    lhs = skew.green(z, w) + skew.rho_omega(w) - skew.log_point_norm(z, w)
    assert abs(lhs) < 1e-9


def test_rho_stable_under_precision():
    a = Torus(0.3 + 1.1j, precision=1e-15).rho_omega(0.2 + 0.1j)
    b = Torus(0.3 + 1.1j, precision=1e-13).rho_omega(0.2 + 0.1j)
    assert abs(a - b) < 1e-8


def test_level_n_norm_periodic(skew):
    # |theta1(z)^N|^2 e^{-N phi} is a level-N section norm
    rng = np.random.default_rng(3)
    z = rng.uniform(0, 1, 50) + skew.tau * rng.uniform(0, 1, 50)
    N = 3
    norm = lambda p: np.abs(skew.theta1(p) ** N) ** 2 * np.exp(-N * skew.phi(p))
    base = norm(z)
    assert np.max(np.abs(norm(z + 1) / base - 1)) < 1e-8
    assert np.max(np.abs(norm(z + skew.tau) / base - 1)) < 1e-8


def test_phi_ddc_is_omega(skew):
    z, h = 0.3 + 0.4j, 1e-3
    lap = (skew.phi(z + h) + skew.phi(z - h) + skew.phi(z + 1j * h) + skew.phi(z - 1j * h)
           - 4 * skew.phi(z)) / h**2
    assert abs(lap / (4 * np.pi) - 1 / skew.T) < 1e-6


def test_invalid_tau():
    with pytest.raises(ValueError):
        Torus(1.0 - 0.5j)
    with pytest.raises(ValueError):
        Torus(complex(np.nan, 1.0))
    with pytest.raises(ValueError):
        Torus(1j).theta1(np.inf)
