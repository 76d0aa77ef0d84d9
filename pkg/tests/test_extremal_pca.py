"""
Unit tests for the Frechet transform, TPDM estimation and the Jacobi eigensolver.
"""

import numpy as np
import pytest

from errors import DataError
from models import FrechetPanel, Tpdm
from services import ExtremalPcaService, SyntheticService
from services.extremal_pca import softplus, softplus_inv


@pytest.fixture
def random_panel(rng):
    """781 rows of heavy-tailed positive values on 45 sites."""
    return FrechetPanel(values=(-np.log(rng.uniform(size=(781, 45)))) ** -0.5, rows=np.arange(781))


@pytest.fixture
def scree_eigvals():
    """45 eigenvalues summing to 45: six leading ones plus a flat remainder."""
    return np.array([28.65, 4.7, 2.2, 1.7, 1.3, 1.2] + [5.25 / 39] * 39)


class TestSoftplus:
    """Test cases for the softplus link."""

    def test_values(self):
        """tau(0) = log 2, inverse of log 2 is 0."""
        assert float(softplus(0.0)) == pytest.approx(np.log(2.0))
        assert abs(float(softplus_inv(np.log(2.0)))) <= 1e-15

    def test_large_and_small_arguments(self):
        """No overflow for large v, strictly positive for very negative v."""
        assert float(softplus(50.0)) == pytest.approx(50.0, rel=1e-15)
        assert float(softplus(-50.0)) == pytest.approx(np.exp(-50.0), rel=1e-12)
        assert float(softplus(-1000.0)) > 0

    def test_round_trip(self):
        """tau(tau^-1(x)) = x across the working range."""
        x = np.logspace(-6, 2, 200)
        np.testing.assert_allclose(softplus(softplus_inv(x)), x, rtol=1e-10)

    def test_inverse_rejects_zero(self):
        """tau^-1 is only defined for positive input."""
        with pytest.raises(DataError, match='positive'):
            softplus_inv(np.array([1.0, 0.0]))


class TestEigSym:
    """Test cases for the symmetric eigensolver."""

    def test_identity(self):
        """Identity has unit eigenvalues and the standard basis."""
        vectors, values = ExtremalPcaService.eig_sym(np.eye(4))
        np.testing.assert_allclose(values, np.ones(4))
        np.testing.assert_allclose(np.abs(vectors), np.eye(4), atol=1e-14)

    def test_two_by_two(self):
        """[[2, 1], [1, 2]] has eigenvalues 3 and 1."""
        vectors, values = ExtremalPcaService.eig_sym([[2.0, 1.0], [1.0, 2.0]])
        np.testing.assert_allclose(values, [3.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(vectors[:, 0], [1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-12)

    def test_reconstruction(self, rng):
        """U D U^T reproduces 100 random symmetric 45x45 matrices with orthonormal U."""
        for trial in range(100):
            a = rng.standard_normal((45, 45))
            sym = a @ a.T / 45 if trial % 2 else 0.5 * (a + a.T)
            vectors, values = ExtremalPcaService.eig_sym(sym)
            scale = np.abs(sym).max()
            assert np.abs(vectors @ np.diag(values) @ vectors.T - sym).max() <= 1e-10 * scale
            assert np.abs(vectors.T @ vectors - np.eye(45)).max() <= 1e-10
            assert np.all(np.diff(values) <= 0)

    def test_matches_numpy_spectrum(self, rng):
        """Eigenvalues agree with LAPACK."""
        a = rng.standard_normal((12, 12))
        _, values = ExtremalPcaService.eig_sym(a + a.T)
        np.testing.assert_allclose(values, np.linalg.eigvalsh(a + a.T)[::-1], atol=1e-10)

    def test_odd_sizes(self, rng):
        """Odd dimensions are scheduled with an idle index each round."""
        for n in (1, 3, 5):
            a = rng.standard_normal((n, n))
            vectors, values = ExtremalPcaService.eig_sym(a + a.T)
            np.testing.assert_allclose(vectors @ np.diag(values) @ vectors.T, a + a.T, atol=1e-12)

    def test_max_linear_tpdms(self):
        """Five-site TPDMs from repeated max-linear panels all decompose."""
        for seed in range(50):
            x, _ = SyntheticService.simulate_max_linear(5, 3, 1500, np.random.default_rng(seed))
            panel = FrechetPanel(values=x, rows=np.arange(len(x)))
            tpdm = ExtremalPcaService.estimate_tpdm(panel, 0.94)
            np.testing.assert_allclose(
                tpdm.eigvecs @ np.diag(tpdm.eigvals) @ tpdm.eigvecs.T, tpdm.sigma, atol=1e-10)

    def test_sign_convention(self, rng):
        """The largest-magnitude entry of every eigenvector is positive."""
        a = rng.standard_normal((8, 8))
        vectors, _ = ExtremalPcaService.eig_sym(a + a.T)
        lead = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(8)]
        assert np.all(lead > 0)

    def test_deterministic(self, rng):
        """Repeated calls return identical output."""
        a = rng.standard_normal((10, 10))
        first = ExtremalPcaService.eig_sym(a @ a.T)
        second = ExtremalPcaService.eig_sym(a @ a.T)
        assert np.array_equal(first[0], second[0])
        assert np.array_equal(first[1], second[1])

    def test_rejects_asymmetric(self):
        """Non-symmetric input is a data error."""
        with pytest.raises(DataError, match='symmetric'):
            ExtremalPcaService.eig_sym([[1.0, 2.0], [0.0, 1.0]])


class TestTpdm:
    """Test cases for TPDM estimation."""

    def test_hand_computed(self):
        """Two retained angles (0.6, 0.8) and (1, ~0)."""
        values = np.array([[6.0, 8.0], [10.0, 1e-300], [0.1, 0.1], [0.2, 0.1]])
        panel = FrechetPanel(values=values, rows=np.arange(4))
        tpdm = ExtremalPcaService.estimate_tpdm(panel, 0.5, r0=5.0)

        assert tpdm.n_exc == 2
        np.testing.assert_allclose(tpdm.sigma, [[1.36, 0.48], [0.48, 0.64]], atol=1e-12)

    def test_trace_equals_site_count(self, random_panel):
        """Unit-norm angles give trace K."""
        tpdm = ExtremalPcaService.estimate_tpdm(random_panel, 0.94)
        assert np.trace(tpdm.sigma) == pytest.approx(45, abs=1e-10)
        assert np.sum(tpdm.eigvals) == pytest.approx(45, abs=1e-9)

    def test_exceedance_count(self, random_panel):
        """781 rows at q_radial 0.94 keep 47 extremes."""
        tpdm = ExtremalPcaService.estimate_tpdm(random_panel, 0.94)
        assert tpdm.n_exc == 47

    def test_positive_semidefinite(self, random_panel):
        """Eigenvalues are clamped at zero from below."""
        tpdm = ExtremalPcaService.estimate_tpdm(random_panel, 0.94)
        assert np.all(tpdm.eigvals >= 0)
        assert np.all(tpdm.sigma >= 0)
        np.testing.assert_allclose(tpdm.sigma, tpdm.sigma.T, atol=0)

    def test_permutation_conjugates(self, rng):
        """Permuting sites permutes the TPDM."""
        values = (-np.log(rng.uniform(size=(500, 6)))) ** -0.5
        perm = rng.permutation(6)
        base = ExtremalPcaService.estimate_tpdm(FrechetPanel(values=values, rows=np.arange(500)), 0.9)
        permuted = ExtremalPcaService.estimate_tpdm(
            FrechetPanel(values=values[:, perm], rows=np.arange(500)), 0.9)
        np.testing.assert_allclose(permuted.sigma, base.sigma[np.ix_(perm, perm)], atol=1e-12)

    def test_too_few_extremes(self):
        """At least two rows must exceed r0."""
        panel = FrechetPanel(values=np.array([[1.0, 1.0], [2.0, 2.0], [9.0, 9.0]]), rows=np.arange(3))
        with pytest.raises(DataError, match='only 1 rows'):
            ExtremalPcaService.estimate_tpdm(panel, 0.5, r0=5.0)

    def test_sparse_extremes_warn(self, caplog):
        """Fewer extremes than K/3 is allowed with a warning."""
        values = np.ones((6, 12))
        values[:2] = 10.0
        values[1, 0] = 20.0
        tpdm = ExtremalPcaService.estimate_tpdm(FrechetPanel(values=values, rows=np.arange(6)), 0.5, r0=5.0)
        assert tpdm.n_exc == 2
        assert 'extremes for 12 sites' in caplog.text

    def test_max_linear_recovery(self, fitted):
        """The estimate is close to A A^T for max-linear data."""
        assert np.abs(fitted['tpdm'].sigma - fitted['truth']).max() < 0.25


class TestFrechetTransform:
    """Test cases for the marginal transform to Frechet scale."""

    def test_frechet_level_at_one(self, fitted):
        """P(x~ <= 1) = e^-1 on the unit Frechet(2) scale."""
        share = np.mean(fitted['panel'].values <= 1.0, axis=0)
        np.testing.assert_allclose(share, np.exp(-1.0), atol=0.02)

    def test_back_transform(self, fitted):
        """from_frechet undoes to_frechet on tail values."""
        data, cdfs = fitted['data'], fitted['cdfs']
        rows = fitted['panel'].rows
        original = data.values[rows]
        back = ExtremalPcaService.from_frechet(fitted['panel'].values, cdfs)
        for k, cdf in enumerate(cdfs):
            tail = original[:, k] > cdf.u
            assert tail.sum() == cdf.fit.n_exceed
            np.testing.assert_allclose(back[tail, k], original[tail, k], rtol=1e-8)

    def test_from_frechet_checks_width(self, fitted):
        """Component count must match the margins."""
        with pytest.raises(DataError, match='expected 6 components'):
            ExtremalPcaService.from_frechet(np.ones((2, 5)), fitted['cdfs'])


class TestScores:
    """Test cases for PC scores and the scree summaries."""

    def test_identity_basis(self):
        """With U = I the scores are tau^-1(x~)."""
        tpdm = Tpdm(sigma=np.eye(3), eigvecs=np.eye(3), eigvals=np.ones(3), r0=1.0, n_exc=2, q_radial=0.9)
        x = np.array([[0.5, 2.0, 40.0]])
        np.testing.assert_allclose(ExtremalPcaService.pc_scores(x, tpdm).v, softplus_inv(x))

    def test_scores_round_trip(self, fitted):
        """from_scores(pc_scores(x~)) recovers x~."""
        scores = ExtremalPcaService.pc_scores(fitted['panel'], fitted['tpdm'])
        back = ExtremalPcaService.from_scores(scores.v, fitted['tpdm'])
        np.testing.assert_allclose(back, fitted['panel'].values, rtol=1e-10)

    def test_explained_fraction(self, scree_eigvals):
        """Six components carry 39.75 of 45."""
        fraction = ExtremalPcaService.explained_fraction(scree_eigvals, 6)
        assert fraction == pytest.approx(39.75 / 45)
        assert round(100 * fraction, 1) == 88.3

    def test_heuristic_m(self, scree_eigvals):
        """Eigenvalues above one count towards m."""
        assert ExtremalPcaService.heuristic_m(scree_eigvals) == 6
        assert ExtremalPcaService.heuristic_m(np.array([1.5, 0.4, 0.1])) == 1
        assert ExtremalPcaService.heuristic_m(np.array([1.2, 1.1, 0.7])) == 2

    def test_scree_table(self, scree_eigvals):
        """Cumulative fractions end at one."""
        table = ExtremalPcaService.scree_table(scree_eigvals)
        assert len(table) == 45
        assert table[0]['j'] == 1
        assert table[-1]['cumulative_fraction'] == pytest.approx(1.0)

    def test_reconstruction_error(self, fitted):
        """Full basis leaves nothing; a single component leaves something."""
        full = ExtremalPcaService.reconstruction_error(fitted['panel'], fitted['tpdm'], 6)
        one = ExtremalPcaService.reconstruction_error(fitted['panel'], fitted['tpdm'], 1)
        assert full.max() < 1e-10
        assert np.all((one >= 0) & (one <= 1))
        assert one.mean() > 0

    def test_eigenvector_table(self, fitted):
        """K x m block of the leading eigenvectors."""
        table = ExtremalPcaService.eigenvector_table(fitted['tpdm'], 2)
        assert table.shape == (6, 2)
        np.testing.assert_array_equal(table, fitted['tpdm'].eigvecs[:, :2])
