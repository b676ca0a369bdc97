"""Kernel tests, including an integral-representation oracle for the Matern."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

from spatcov.kernels import KernelSpec, covariance_matrix, exponential_cov, matern_cov


def bessel_k_quadrature(nu, x):
    """K_nu(x) through its cosh integral representation, independent of scipy.special.kv."""
    val, _err = quad(
        lambda t: math.exp(-x * math.cosh(t)) * math.cosh(nu * t), 0.0, 60.0, limit=400
    )
    return val


class TestExponential:
    def test_zero_distance_gives_variance(self):
        spec = KernelSpec("exponential", variance=2.5, range_=0.7)
        assert exponential_cov(0.0, spec) == 2.5

    def test_unit_case(self):
        spec = KernelSpec("exponential", variance=1.0, range_=1.0)
        assert exponential_cov(1.0, spec) == pytest.approx(0.36787944117144233, rel=1e-15)

    def test_monotone_decay(self):
        spec = KernelSpec("exponential", variance=1.0, range_=0.5)
        grid = np.linspace(0, 20, 200)
        vals = exponential_cov(grid, spec)
        assert np.all(np.diff(vals) < 0)
        assert vals[-1] < 1e-10

    def test_negative_distance_rejected(self):
        spec = KernelSpec("exponential", variance=1.0, range_=1.0)
        with pytest.raises(ValueError):
            exponential_cov(-0.1, spec)


class TestMatern:
    def test_half_smoothness_equals_exponential(self):
        mspec = KernelSpec("matern", variance=1.7, range_=0.6, smoothness=0.5)
        espec = KernelSpec("exponential", variance=1.7, range_=0.6)
        grid = np.linspace(1e-6, 5.0, 300)
        m = matern_cov(grid, mspec)
        e = exponential_cov(grid, espec)
        assert np.max(np.abs(m - e) / e) < 1e-12

    def test_zero_distance(self):
        spec = KernelSpec("matern", variance=3.0, range_=1.0, smoothness=0.25)
        assert matern_cov(0.0, spec) == 3.0

    def test_quadrature_oracle(self):
        # sigma^2 (2^(1-nu)/Gamma(nu)) x^nu K_nu(x) at nu=0.25, x=0.5
        spec = KernelSpec("matern", variance=1.0, range_=1.0, smoothness=0.25)
        got = matern_cov(0.5, spec)
        knu = bessel_k_quadrature(0.25, 0.5)
        expected = (2.0 ** 0.75 / gamma_fn(0.25)) * 0.5 ** 0.25 * knu
        assert got == pytest.approx(expected, rel=1e-9)

    def test_quadrature_oracle_across_smoothness(self):
        for nu in (0.1, 0.5, 1.3, 3.0):
            spec = KernelSpec("matern", variance=2.0, range_=0.8, smoothness=nu)
            for d in (1e-6 * 0.8, 0.3, 2.0, 10.0):
                x = d / 0.8
                expected = 2.0 * (2.0 ** (1 - nu) / gamma_fn(nu)) * x**nu * bessel_k_quadrature(nu, x)
                if expected < 1e-290:
                    continue
                assert matern_cov(d, spec) == pytest.approx(expected, rel=1e-9)

    def test_monotone_nonincreasing(self):
        spec = KernelSpec("matern", variance=1.0, range_=1.0, smoothness=0.25)
        grid = np.linspace(0, 10, 500)
        vals = matern_cov(grid, spec)
        assert np.all(np.diff(vals) <= 0)

    def test_negative_distance_rejected(self):
        spec = KernelSpec("matern", variance=1.0, range_=1.0, smoothness=1.0)
        with pytest.raises(ValueError):
            matern_cov(np.array([0.1, -0.2]), spec)


class TestCovarianceMatrix:
    def test_single_point(self):
        spec = KernelSpec("exponential", variance=4.0, range_=1.0)
        cov = covariance_matrix([(0.0, 0.0)], spec)
        assert cov.shape == (1, 1) and cov[0, 0] == 4.0

    def test_coincident_points(self):
        spec = KernelSpec("exponential", variance=2.0, range_=1.0)
        cov = covariance_matrix([(0.1, 0.1), (0.1, 0.1)], spec)
        assert np.allclose(cov, 2.0)
        eps = 1e-6
        jittered = covariance_matrix([(0.1, 0.1), (0.1, 0.1)], spec, jitter=eps)
        eigs = np.sort(np.linalg.eigvalsh(jittered))
        assert eigs[0] == pytest.approx(eps, rel=1e-6)
        assert eigs[1] == pytest.approx(4.0 + eps, rel=1e-12)

    def test_positive_definite_random_points(self):
        rng = np.random.default_rng(11)
        spec = KernelSpec("exponential", variance=1.0, range_=0.3)
        cov = covariance_matrix(rng.uniform(size=(10, 2)), spec)
        assert np.allclose(cov, cov.T)
        assert np.linalg.eigvalsh(cov).min() > 0

    def test_psd_tolerance_matern(self):
        rng = np.random.default_rng(12)
        spec = KernelSpec("matern", variance=2.0, range_=1.0, smoothness=0.25)
        cov = covariance_matrix(rng.uniform(size=(40, 2)), spec)
        assert np.linalg.eigvalsh(cov).min() >= -1e-8 * 2.0

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError):
            KernelSpec("gaussian", variance=1.0, range_=1.0)
        with pytest.raises(ValueError):
            KernelSpec("matern", variance=-1.0, range_=1.0)
        with pytest.raises(ValueError):
            KernelSpec("matern", variance=1.0, range_=0.0)
