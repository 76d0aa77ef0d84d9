"""
Directional statistics for hazardset.
von Mises-Fisher densities, sampling and kernel density estimation on S^(p-1) for any p >= 2.
"""

import logging
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln, ive, logsumexp

from errors import DataError
from models import VmfKernel

logger = logging.getLogger(__name__)

KAPPA_MAX = 1e4
KAPPA_GRID = np.logspace(-2, 4, 61)
SERIES_TERMS = 40


def log_bessel_iv(nu: float, kappa):
    """log I_nu(kappa), via the exponentially scaled Bessel function with a power series fallback."""
    kappa = np.asarray(kappa, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        scaled = ive(nu, kappa)
        out = np.log(scaled) + kappa
    bad = ~np.isfinite(out) | (scaled <= 0)
    if np.any(bad):
        j = np.arange(SERIES_TERMS)
        k = np.atleast_1d(kappa[bad] if kappa.ndim else kappa)[:, None]
        terms = (2 * j + nu) * np.log(k / 2.0) - gammaln(j + 1) - gammaln(j + nu + 1)
        series = logsumexp(terms, axis=1)
        if kappa.ndim:
            out = np.array(out, copy=True)
            out[bad] = series
        else:
            out = series[0]
    return out


def log_sphere_area(p: int) -> float:
    """log surface area of S^(p-1)."""
    return np.log(2.0) + 0.5 * p * np.log(np.pi) - gammaln(0.5 * p)


def vmf_log_normalizer(p: int, kappa: float) -> float:
    """log c0(kappa) for the vMF density on S^(p-1); kappa = 0 gives the uniform density."""
    if kappa == 0:
        return -log_sphere_area(p)
    nu = 0.5 * p - 1.0
    return float(nu * np.log(kappa) - 0.5 * p * np.log(2 * np.pi) - log_bessel_iv(nu, kappa))


class SphericalService:
    """Service class for von Mises-Fisher kernels."""

    @staticmethod
    def vmf_log_density(z, mu, kappa: float):
        """log h(z; mu, kappa) = log c0(kappa) + kappa z.mu; z may hold one point per row."""
        if not kappa > 0:
            raise DataError(f"vMF density needs kappa > 0, got {kappa}", "spherical")
        z = np.asarray(z, dtype=float)
        mu = np.asarray(mu, dtype=float)
        return vmf_log_normalizer(mu.shape[-1], kappa) + kappa * (z @ mu)

    @staticmethod
    def vmf_sample(mu, kappa: float, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        """Draw unit vectors around mu (one row per row of a 2-D mu, or size draws around one mu)."""
        mu = np.asarray(mu, dtype=float)
        single = mu.ndim == 1 and size is None
        if mu.ndim == 1:
            mu = np.broadcast_to(mu, (1 if size is None else size, mu.shape[0]))
        n, p = mu.shape

        if kappa == 0:
            g = rng.standard_normal((n, p))
            out = g / np.linalg.norm(g, axis=1, keepdims=True)
            return out[0] if single else out

        cosines = SphericalService._sample_cosine(p, kappa, n, rng)
        g = rng.standard_normal((n, p))
        tangent = g - np.sum(g * mu, axis=1, keepdims=True) * mu
        tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
        out = cosines[:, None] * mu + np.sqrt(np.maximum(1.0 - cosines ** 2, 0.0))[:, None] * tangent
        out /= np.linalg.norm(out, axis=1, keepdims=True)
        return out[0] if single else out

    @staticmethod
    def _sample_cosine(p: int, kappa: float, n: int, rng: np.random.Generator) -> np.ndarray:
        """Wood's rejection sampler for t = z.mu, density proportional to e^(kappa t)(1-t^2)^((p-3)/2)."""
        dim = p - 1.0
        b = dim / (2.0 * kappa + np.sqrt(4.0 * kappa ** 2 + dim ** 2))
        x0 = (1.0 - b) / (1.0 + b)
        c = kappa * x0 + dim * np.log(1.0 - x0 ** 2)

        out = np.empty(n)
        pending = np.arange(n)
        while pending.size:
            m = pending.size
            z = rng.beta(dim / 2.0, dim / 2.0, size=m)
            w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
            u = rng.uniform(size=m)
            accept = kappa * w + dim * np.log(1.0 - x0 * w) - c >= np.log(u)
            out[pending[accept]] = w[accept]
            pending = pending[~accept]
        return out

    @staticmethod
    def kde_fit(points, kappa_max: float = KAPPA_MAX) -> VmfKernel:
        """vMF kernel density with kappa maximizing the leave-one-out log-likelihood."""
        x = np.asarray(points, dtype=float)
        if x.ndim != 2 or x.shape[0] < 2:
            raise DataError("kernel density needs at least 2 points", "spherical")
        n, p = x.shape
        gram = x @ x.T
        np.fill_diagonal(gram, -np.inf)

        def loo(kappa: float) -> float:
            inner = logsumexp(kappa * gram, axis=1) - np.log(n - 1)
            return float(np.sum(inner) + n * vmf_log_normalizer(p, kappa))

        grid = np.append(KAPPA_GRID[KAPPA_GRID < kappa_max], kappa_max)
        scores = np.array([loo(k) for k in grid])
        best = int(np.argmax(scores))
        kappa = float(grid[best])

        if best == len(grid) - 1:
            logger.warning(f"kappa reached the cap {kappa_max:g}; angular points are nearly identical")
            kappa = float(kappa_max)
        elif best > 0:
            try:
                res = minimize_scalar(
                    lambda log_k: -loo(np.exp(log_k)), method='golden',
                    bracket=(np.log(grid[best - 1]), np.log(grid[best]), np.log(grid[best + 1])),
                )
            except ValueError as e:
                # flat objective around the grid maximum
                logger.debug(f"golden-section refinement skipped: {e}")
            else:
                refined = float(np.exp(res.x))
                if np.isfinite(res.fun) and 0 < refined <= kappa_max and -res.fun >= scores[best]:
                    kappa = refined

        logger.debug(f"vMF kernel on S^{p - 1}: n={n}, kappa={kappa:.4g}")
        return VmfKernel(centers=x, kappa=kappa)

    @staticmethod
    def kde_log_density(kernel: VmfKernel, z) -> np.ndarray:
        """log of the uniform mixture of vMF kernels at z."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        log_c0 = vmf_log_normalizer(kernel.dim, kernel.kappa)
        logs = log_c0 + kernel.kappa * (z @ kernel.centers.T)
        return logsumexp(logs, axis=1) - np.log(len(kernel.centers))

    @staticmethod
    def kde_sample(kernel: VmfKernel, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        """Pick centers uniformly, then perturb each with a vMF draw."""
        idx = rng.integers(0, len(kernel.centers), size=1 if size is None else size)
        draws = SphericalService.vmf_sample(kernel.centers[idx], kernel.kappa, rng)
        return draws[0] if size is None else draws
