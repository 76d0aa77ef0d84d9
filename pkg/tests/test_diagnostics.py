"""
Unit tests for event-set diagnostics.
"""

import numpy as np
import pytest

from errors import ConfigError, DataError
from models import GpdFit
from services import DiagnosticsService, MarginalService


@pytest.fixture
def site_fits():
    """Two sites with known GPD tails."""
    return [
        GpdFit(site_id='a', u=10.0, sigma=2.0, xi=0.1, rate_per_year=5.0, n_exceed=50, q_fit=0.96),
        GpdFit(site_id='b', u=3.0, sigma=1.0, xi=-0.1, rate_per_year=2.0, n_exceed=40, q_fit=0.96),
    ]


class TestOrderStatistics:
    """Test cases for order statistics and group summaries."""

    def test_top_k(self):
        """Largest values, descending."""
        np.testing.assert_array_equal(DiagnosticsService.top_order_stats([3, 1, 2], 2), [3, 2])

    def test_short_series(self):
        """Fewer values than k is an error."""
        with pytest.raises(DataError, match='fewer than k=5'):
            DiagnosticsService.top_order_stats([1, 2], 5)

    def test_group_summaries(self):
        """(3, 4) gives max 4 and norm 5."""
        group_max, group_l2 = DiagnosticsService.group_summaries(np.array([[3.0, 4.0, 100.0]]), [0, 1])
        assert group_max[0] == 4.0
        assert group_l2[0] == pytest.approx(5.0)

    def test_singleton_group(self, rng):
        """A one-site group has max equal to norm."""
        events = rng.uniform(size=(20, 3))
        group_max, group_l2 = DiagnosticsService.group_summaries(events, [2])
        np.testing.assert_allclose(group_max, group_l2)

    def test_norm_bounds(self, rng):
        """max <= L2 <= sqrt(g) max."""
        events = rng.uniform(size=(100, 5))
        group_max, group_l2 = DiagnosticsService.group_summaries(events, [0, 2, 4])
        assert np.all(group_max <= group_l2 + 1e-15)
        assert np.all(group_l2 <= np.sqrt(3) * group_max + 1e-12)

    def test_empty_group(self):
        """An empty group is a configuration error."""
        with pytest.raises(ConfigError, match='empty'):
            DiagnosticsService.group_summaries(np.ones((2, 2)), [])


class TestQqBand:
    """Test cases for simulated central bands."""

    def test_identical_sets_have_zero_width(self):
        """Identical simulated sets collapse the band onto their order statistics."""
        sets = [np.arange(10.0)] * 20
        band = DiagnosticsService.qq_band([9.0, 8.0, 7.0], sets, 0.95)
        np.testing.assert_allclose(band.lower, band.upper)
        np.testing.assert_allclose(band.median, [9.0, 8.0, 7.0])
        assert band.coverage == 1.0

    def test_bands_nest(self, rng):
        """The 0.90 band lies inside the 0.95 band."""
        sets = [rng.pareto(2.0, size=200) for _ in range(40)]
        observed = DiagnosticsService.top_order_stats(rng.pareto(2.0, size=200), 10)
        narrow = DiagnosticsService.qq_band(observed, sets, 0.90)
        wide = DiagnosticsService.qq_band(observed, sets, 0.95)
        assert np.all(wide.lower <= narrow.lower)
        assert np.all(narrow.upper <= wide.upper)

    def test_same_law_coverage_is_calibrated(self, rng):
        """Observed and simulated sets from one law give average coverage near alpha."""
        alpha = 0.9
        coverage = []
        for _ in range(200):
            sets = rng.standard_exponential(size=(200, 200))
            observed = DiagnosticsService.top_order_stats(rng.standard_exponential(size=200), 20)
            coverage.append(DiagnosticsService.qq_band(observed, list(sets), alpha).coverage)
        assert alpha - 0.05 <= np.mean(coverage) <= alpha + 0.03

    def test_too_few_sets(self):
        """0.95 needs at least 20 sets."""
        with pytest.raises(DataError, match='need at least 20'):
            DiagnosticsService.qq_band([1.0], [np.ones(3)] * 19, 0.95)

    def test_band_rows(self):
        """One tidy row per rank."""
        band = DiagnosticsService.qq_band([2.0, 1.0], [np.array([2.0, 1.0, 0.0])] * 2, 0.5)
        rows = DiagnosticsService.band_rows('site_max', band)
        assert [row['rank'] for row in rows] == [1, 2]
        assert rows[0]['statistic'] == 'site_max'
        assert rows[0]['covered'] is True


class TestSeverity:
    """Test cases for return-period classes."""

    def test_level_is_inclusive(self, site_fits):
        """An event exactly at the 100-year level is in the 100-year class."""
        event = [MarginalService.return_level(site_fits[0], 100), 0.0]
        severity = DiagnosticsService.classify_severity(event, site_fits)
        assert severity.classes == [100.0, None]
        assert severity.to_dict() == {'a': 100.0, 'b': None}

    def test_above_all_levels(self, site_fits):
        """Above the 200-year level the class is 200."""
        event = [1e6, MarginalService.return_level(site_fits[1], 200) + 1e-3]
        assert DiagnosticsService.classify_severity(event, site_fits).classes == [200.0, 200.0]

    def test_monotone_in_event_size(self, site_fits):
        """A larger event never gets a lower class."""
        small = DiagnosticsService.classify_severity([15.0, 4.0], site_fits).classes
        large = DiagnosticsService.classify_severity([25.0, 6.0], site_fits).classes
        for lo, hi in zip(small, large):
            assert (lo or 0) <= (hi or 0)

    def test_two_rung_ladder(self, site_fits):
        """With ladder {2, 200} classes follow the two levels."""
        levels = DiagnosticsService.return_level_table(site_fits, (2, 200))
        between = [(levels[0, 0] + levels[0, 1]) / 2, levels[1, 0] - 1e-6]
        classes = DiagnosticsService.classify_severity(between, site_fits, (2, 200)).classes
        assert classes == [2.0, None]

    def test_invalid_ladder(self, site_fits):
        """The ladder must be positive and strictly increasing."""
        with pytest.raises(ConfigError, match='strictly increasing'):
            DiagnosticsService.classify_severity([1.0, 1.0], site_fits, (10, 5))

    def test_counts_and_exceedances(self, site_fits):
        """Every cell lands in exactly one class."""
        events = np.array([[9.0, 1.0], [1e6, 1e6], [20.0, 2.0]])
        counts = DiagnosticsService.severity_counts(events, site_fits)
        assert sum(counts.values()) == 6
        assert counts['200.0'] == 2
        assert DiagnosticsService.sites_exceeding(events, site_fits, 100) == 2

    def test_top_events(self):
        """Largest norms first."""
        order = DiagnosticsService.top_events(np.array([[1.0, 1.0], [5.0, 0.0], [0.0, 3.0]]), 2)
        assert order.tolist() == [1, 2]


class TestPairwiseDependence:
    """Test cases for the conditional exceedance estimate."""

    def test_identical_columns(self, rng):
        """A column paired with itself gives chi = 1."""
        x = rng.uniform(size=(1000, 1))
        estimate = DiagnosticsService.pairwise_dependence(np.hstack([x, x]), 0, 1, 0.9)
        assert estimate.chi == pytest.approx(1.0)
        assert estimate.reliable

    def test_independent_columns(self, rng):
        """Independence gives chi near 1 - q."""
        estimate = DiagnosticsService.pairwise_dependence(rng.uniform(size=(100000, 2)), 0, 1, 0.9)
        assert estimate.chi == pytest.approx(0.1, abs=0.02)

    def test_threshold_range(self):
        """q must lie in (0.5, 1)."""
        with pytest.raises(ConfigError):
            DiagnosticsService.pairwise_dependence(np.ones((10, 2)), 0, 1, 0.3)

    def test_unreliable_pairs_flagged(self, rng, caplog):
        """Sparse joint exceedances are flagged and reported."""
        table = DiagnosticsService.chi_table(rng.uniform(size=(30, 3)), 0.9)
        assert len(table) == 3
        assert not any(c.reliable for c in table)
        assert 'fewer than 5 joint exceedances' in caplog.text
