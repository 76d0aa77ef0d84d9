"""
Synthetic panels for hazardset.
Max-linear data with a known TPDM and conditional-extremes samples with known parameters.
"""

import logging
from typing import Tuple

import numpy as np
import pandas as pd

from errors import ConfigError
from models import DataMatrix

logger = logging.getLogger(__name__)


class SyntheticService:
    """Service class for simulators with analytic dependence structure."""

    @staticmethod
    def factor_matrix(n_sites: int, n_factors: int, rng: np.random.Generator) -> np.ndarray:
        """Nonnegative K x F loadings with unit L2 rows."""
        if n_sites < 2 or n_factors < 1:
            raise ConfigError("need at least 2 sites and 1 factor", "synthetic")
        a = rng.uniform(0.0, 1.0, size=(n_sites, n_factors)) ** 2
        a[np.arange(n_sites), rng.integers(0, n_factors, size=n_sites)] += 1.0
        return a / np.linalg.norm(a, axis=1, keepdims=True)

    @staticmethod
    def simulate_max_linear(n_sites: int, n_factors: int, n_rows: int, rng: np.random.Generator,
                            noise: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
        """X_i = max_j a_ij Z_j with Z iid Frechet(2); returns (X, A A^T)."""
        if n_rows < 2:
            raise ConfigError(f"n_rows must be at least 2, got {n_rows}", "synthetic")
        if noise < 0:
            raise ConfigError(f"noise must be non-negative, got {noise}", "synthetic")
        a = SyntheticService.factor_matrix(n_sites, n_factors, rng)
        u = rng.uniform(np.finfo(float).tiny, 1.0, size=(n_rows, n_factors))
        z = (-np.log(u)) ** -0.5
        x = (z[:, None, :] * a[None, :, :]).max(axis=2)
        if noise > 0:
            x = x * np.exp(noise * rng.standard_normal(x.shape))
        return x, a @ a.T

    @staticmethod
    def max_linear_panel(n_sites: int, n_factors: int, n_rows: int, rng: np.random.Generator,
                         noise: float = 0.0, periods_per_year: float = 52.0,
                         missing: float = 0.0) -> Tuple[DataMatrix, np.ndarray]:
        """Max-linear data wrapped as a DataMatrix with ordinal periods and optional missing cells."""
        x, truth = SyntheticService.simulate_max_linear(n_sites, n_factors, n_rows, rng, noise)
        mask = np.ones(x.shape, dtype=bool)
        if missing > 0:
            mask = rng.uniform(size=x.shape) >= missing
        data = DataMatrix(
            values=np.where(mask, x, 0.0), mask=mask,
            site_ids=[f's{k + 1:02d}' for k in range(n_sites)],
            period_index=pd.RangeIndex(n_rows), periods_per_year=periods_per_year,
        )
        logger.info(f"Simulated max-linear panel: T={n_rows}, K={n_sites}, factors={n_factors}")
        return data, truth

    @staticmethod
    def simulate_ht(n_exceed: int, alpha, beta, rng: np.random.Generator, v: float = 2.0,
                    mu=0.0, sd=1.0) -> Tuple[np.ndarray, np.ndarray]:
        """(x, Y) with x = v + Exp(1) and Y = alpha x + x^beta Z, Z ~ N(mu, sd^2)."""
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        beta = np.broadcast_to(np.asarray(beta, dtype=float), alpha.shape)
        x = v + rng.exponential(size=n_exceed)
        z = mu + sd * rng.standard_normal((n_exceed, alpha.size))
        return x, alpha * x[:, None] + x[:, None] ** beta * z
