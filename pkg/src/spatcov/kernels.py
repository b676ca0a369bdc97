"""Parametric spatial covariance kernels (exponential and Matern)."""

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as _gamma_fn
from scipy.special import kv as _bessel_kv

from .spatial import as_locations


@dataclass(frozen=True)
class KernelSpec:
    """Stationary isotropic kernel: family, marginal variance, length-scale, smoothness.

    ``range_`` is the length-scale r, so the exponential kernel is
    variance * exp(-d / r). ``smoothness`` is the Matern nu and is ignored for
    the exponential family.
    """

    family: str
    variance: float
    range_: float
    smoothness: float = 0.5

    def __post_init__(self):
        if self.family not in ("exponential", "matern"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not (self.variance > 0 and np.isfinite(self.variance)):
            raise ValueError(f"variance must be positive, got {self.variance}")
        if not (self.range_ > 0 and np.isfinite(self.range_)):
            raise ValueError(f"range must be positive, got {self.range_}")
        if not (self.smoothness > 0 and np.isfinite(self.smoothness)):
            raise ValueError(f"smoothness must be positive, got {self.smoothness}")


def _check_dist(dist):
    d = np.asarray(dist, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    return d


def exponential_cov(dist, spec: KernelSpec):
    """variance * exp(-dist / range). Scalar in, scalar out; array in, array out."""
    if spec.family != "exponential":
        raise ValueError(f"spec.family must be 'exponential', got {spec.family!r}")
    d = _check_dist(dist)
    out = spec.variance * np.exp(-d / spec.range_)
    return out if out.ndim else float(out)


def matern_cov(dist, spec: KernelSpec):
    """Matern kernel variance * 2^(1-nu)/Gamma(nu) * x^nu * K_nu(x), x = dist/range.

    K(0) = variance exactly. Values at distances below 1e-30 * range are
    clamped to the variance (the correction there is far below double
    precision for any admissible smoothness).
    """
    if spec.family != "matern":
        raise ValueError(f"spec.family must be 'matern', got {spec.family!r}")
    d = _check_dist(dist)
    nu = spec.smoothness
    x = np.atleast_1d(d / spec.range_)
    out = np.full(x.shape, spec.variance)
    live = x > 1e-30
    if np.any(live):
        xl = x[live]
        scale = spec.variance * (2.0 ** (1.0 - nu)) / _gamma_fn(nu)
        vals = scale * np.power(xl, nu) * _bessel_kv(nu, xl)
        # guard the deep-underflow corner where kv overflows before x^nu damps it
        vals = np.where(np.isfinite(vals), vals, spec.variance)
        out[live] = vals
    out = out.reshape(np.shape(d))
    return out if out.ndim else float(out)


def kernel_cov(dist, spec: KernelSpec):
    """Dispatch on spec.family."""
    if spec.family == "exponential":
        return exponential_cov(dist, spec)
    return matern_cov(dist, spec)


def covariance_matrix(locs, spec: KernelSpec, jitter: float = 0.0) -> np.ndarray:
    """Dense kernel covariance over the locations, optionally diagonally jittered.

    The diagonal equals variance + jitter; off-diagonals come from the kernel
    at the pairwise distances. Coincident points are legal and produce exact
    duplicates (rank deficiency), which is what the jitter is for.
    """
    pts = as_locations(locs)
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    np.fill_diagonal(d, 0.0)
    cov = kernel_cov(d, spec)
    cov = np.asarray(cov, dtype=np.float64)
    if not np.all(np.isfinite(cov)):
        raise FloatingPointError("kernel produced non-finite covariance values")
    cov = 0.5 * (cov + cov.T)
    if jitter:
        cov[np.diag_indices_from(cov)] += jitter
    return cov
