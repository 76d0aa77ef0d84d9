"""
Unit tests for the synthetic simulators.
"""

import numpy as np
import pytest

from errors import ConfigError
from services import SyntheticService


class TestMaxLinear:
    """Test cases for max-linear panels."""

    def test_loadings(self, rng):
        """Loadings are nonnegative with unit rows."""
        a = SyntheticService.factor_matrix(8, 3, rng)
        assert np.all(a >= 0)
        np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0)

    def test_truth_has_unit_diagonal(self, rng):
        """A A^T is the true TPDM with ones on the diagonal."""
        x, truth = SyntheticService.simulate_max_linear(5, 2, 100, rng)
        assert x.shape == (100, 5)
        np.testing.assert_allclose(np.diag(truth), 1.0)
        np.testing.assert_allclose(truth, truth.T)

    def test_frechet_margins(self, rng):
        """Each site is unit Frechet(2): P(X <= 1) = e^-1."""
        x, _ = SyntheticService.simulate_max_linear(4, 3, 50000, rng)
        np.testing.assert_allclose(np.mean(x <= 1.0, axis=0), np.exp(-1.0), atol=0.01)

    def test_panel_with_missing_cells(self, rng):
        """Missing cells are masked and site ids are zero-padded."""
        data, _ = SyntheticService.max_linear_panel(3, 2, 2000, rng, missing=0.1)
        assert data.site_ids == ['s01', 's02', 's03']
        assert 0.85 < data.mask.mean() < 0.95
        assert data.periods_per_year == 52.0

    def test_rejects_negative_noise(self, rng):
        """Noise is a non-negative log-scale spread."""
        with pytest.raises(ConfigError, match='noise'):
            SyntheticService.simulate_max_linear(3, 2, 10, rng, noise=-1.0)


class TestConditionalSimulator:
    """Test cases for conditional-extremes samples."""

    def test_threshold_and_shape(self, rng):
        """x exceeds v and Y has one column per dependent site."""
        x, y = SyntheticService.simulate_ht(300, [0.5, 0.2], 0.1, rng, v=1.5)
        assert np.all(x > 1.5)
        assert y.shape == (300, 2)

    def test_zero_noise(self, rng):
        """sd = 0 gives Y = alpha x + mu x^beta."""
        x, y = SyntheticService.simulate_ht(50, 0.7, 0.5, rng, mu=1.0, sd=0.0)
        np.testing.assert_allclose(y[:, 0], 0.7 * x + x ** 0.5)
