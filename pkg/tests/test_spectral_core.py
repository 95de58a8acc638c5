"""Grid, transform, and Riesz-convolution invariants."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

from hartreekit.spectral import (
    Field,
    Grid,
    center_of_mass,
    epstein_zeta,
    fftn,
    gradient,
    ifftn,
    integrate,
    laplacian,
    outer_shell_mass_fraction,
    recenter,
    riesz_constant,
    riesz_convolve,
)

from conftest import GAMMA, smooth_field


def test_fft_roundtrip(grid32):
    rng = np.random.default_rng(11)
    a = rng.standard_normal(grid32.shape) + 1j * rng.standard_normal(grid32.shape)
    assert np.allclose(ifftn(fftn(a)), a, atol=1e-12)


def test_parseval_mass(grid32):
    rng = np.random.default_rng(12)
    u = smooth_field(grid32, rng)
    m_phys = float(integrate(Field(grid32, (u.values * u.values.conj()).real)))
    uhat = fftn(u.values)
    m_four = float((uhat * uhat.conj()).real.sum()) * grid32.cell_volume / grid32.points**3
    assert abs(m_phys - m_four) / m_phys < 1e-13


def test_laplacian_plane_wave(grid32):
    # exact eigenfunction of the spectral Laplacian
    k = 2.0 * np.pi / (2.0 * grid32.half_length) * np.array([3.0, -1.0, 2.0])
    x, y, z = grid32.coords
    u = Field(grid32, np.exp(1j * (k[0] * x + k[1] * y + k[2] * z)))
    lap = laplacian(u)
    assert np.allclose(lap.values, -float(k @ k) * u.values, atol=1e-10)


def test_gradient_plane_wave(grid32):
    k = 2.0 * np.pi / (2.0 * grid32.half_length) * np.array([1.0, 4.0, -2.0])
    x, y, z = grid32.coords
    u = Field(grid32, np.exp(1j * (k[0] * x + k[1] * y + k[2] * z)))
    for gi, ki in zip(gradient(u), k):
        assert np.allclose(gi.values, 1j * ki * u.values, atol=1e-10)


def test_riesz_convolve_gaussian_origin(grid48):
    """(|x|^-gamma * e^{-|x|^2}) at 0 against scalar radial quadrature."""
    g0 = grid48.field_from_function(lambda *xs: np.exp(-sum(x * x for x in xs)))
    conv0 = riesz_convolve(g0, GAMMA).values[(grid48.points // 2,) * 3]
    area = 2.0 * np.pi**1.5 / gamma_fn(1.5)
    ref, _ = quad(lambda r: r ** (2.0 - GAMMA) * math.exp(-r * r), 0.0, np.inf)
    assert abs(float(conv0.real) - area * ref) / (area * ref) < 1e-4


def test_riesz_convolve_is_symmetric_positive(grid32):
    # kernel is even and positive, so a positive density gives a positive result
    g0 = grid32.field_from_function(lambda x, y, z: np.exp(-((x - 1) ** 2 + y**2 + z**2)))
    conv = riesz_convolve(g0, GAMMA).values.real
    assert conv.min() > 0.0
    g_even = grid32.field_from_function(lambda x, y, z: np.exp(-(x**2 + y**2 + z**2)))
    c = riesz_convolve(g_even, GAMMA).values.real
    n = grid32.points
    assert np.allclose(c[1:, 1:, 1:], c[1:, 1:, 1:][::-1, ::-1, ::-1], atol=1e-12 * c.max())


def test_riesz_constant_d3_coulomb():
    # gamma=1 in d=3 is the Coulomb kernel with Fourier symbol 4*pi/|k|^2
    assert abs(riesz_constant(3, 1.0) - 4.0 * np.pi) < 1e-12


def test_epstein_zeta_jellium_anchor():
    # classic simple-cubic lattice constant: Z_3(1) = -2.8372974794806...
    assert abs(epstein_zeta(1.0, 3) - (-2.8372974794806)) < 1e-10


@pytest.mark.parametrize("s", [1.7, 2.5])
def test_epstein_zeta_theta_integral(s):
    """Riemann theta representation, a numerically distinct continuation route.

    Lambda(s) = -2/s - 2/(d-s) + int_1^inf (t^{s/2-1} + t^{(d-s)/2-1}) psi(t) dt
    with psi(t) = theta(t)^d - 1, theta(t) = sum_n exp(-pi n^2 t); then
    Z(s) = pi^{s/2} Lambda(s) / Gamma(s/2).
    """
    d = 3

    def psi(t):
        th = 1.0 + 2.0 * sum(math.exp(-math.pi * n * n * t) for n in range(1, 8))
        return th**d - 1.0

    integrand = lambda t: (t ** (s / 2.0 - 1.0) + t ** ((d - s) / 2.0 - 1.0)) * psi(t)
    tail, _ = quad(integrand, 1.0, 40.0, limit=200)
    lam = -2.0 / s - 2.0 / (d - s) + tail
    ref = math.pi ** (s / 2.0) * lam / gamma_fn(s / 2.0)
    assert abs(epstein_zeta(s, 3) - ref) < 1e-10 * abs(ref)


def test_outer_shell_mass_fraction_gaussian(grid48):
    sig = 1.2
    u = grid48.field_from_function(lambda x, y, z: np.exp(-(x * x + y * y + z * z) / (2 * sig * sig)))
    frac = outer_shell_mass_fraction(u)
    # mass beyond 0.9L for a tight Gaussian: erfc-level tiny
    assert frac < 1e-12
    broad = grid48.field_from_function(lambda x, y, z: np.exp(-(x * x + y * y + z * z) / 50.0))
    assert outer_shell_mass_fraction(broad) > frac


def test_recenter_moves_center_of_mass(grid32):
    u = grid32.field_from_function(lambda x, y, z: np.exp(-((x - 1.25) ** 2 + (y + 0.625) ** 2 + z**2)))
    c0 = center_of_mass(u)
    assert abs(c0[0] - 1.25) < 1e-6
    v = recenter(u)
    c1 = center_of_mass(v)
    assert np.all(np.abs(c1) < grid32.spacing / 2 + 1e-9)


def test_grid_equality_and_hash():
    a, b = Grid(3, 32, 10.0), Grid(3, 32, 10.0)
    assert a == b and hash(a) == hash(b)
    assert a != Grid(3, 48, 10.0)
    assert a != Grid(3, 32, 12.0)


def test_grid_rejects_bad_args():
    with pytest.raises(ValueError):
        Grid(3, 0, 10.0)
    with pytest.raises(ValueError):
        Grid(3, 32, -1.0)
    with pytest.raises(ValueError):
        Grid(0, 32, 10.0)


def test_field_shape_check(grid32):
    with pytest.raises(ValueError):
        Field(grid32, np.zeros((4, 4, 4)))
