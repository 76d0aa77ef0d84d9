"""
Unit tests for the extremal-PCA event generator.
"""

import numpy as np
import pytest
from scipy import stats

from errors import ConfigError, DataError
from models import AngularSample, FrechetPanel, GeneratorModel, VmfKernel
from services import ExtremalPcaService, FitSettings, GeneratorService, substream
from services.extremal_pca import softplus_inv


@pytest.fixture(scope='module')
def model(fitted):
    """Generator with m = 2 on the max-linear fit."""
    return GeneratorService.fit_generator(
        fitted['panel'], fitted['tpdm'], fitted['cdfs'], fitted['data'].site_ids, 2, 0.94)


@pytest.fixture
def toy_angular():
    """Two rows above r_V on a three-site score matrix."""
    v = np.array([[0.6, 0.8, 0.0], [0.6, -0.8, 0.0], [0.1, 0.1, 0.1]])
    return GeneratorService.build_angular(v, 0.5, 1, r_v=0.5)


class TestAngular:
    """Test cases for the augmented angular representation."""

    def test_toy_rows(self, toy_angular):
        """Residual norm carries the sign of the (m+1)-th coordinate."""
        assert toy_angular.n == 2
        np.testing.assert_allclose(toy_angular.z, [[0.6, 0.8], [0.6, -0.8]])
        assert toy_angular.rows.tolist() == [0, 1]

    def test_points_are_unit(self, model):
        """z lies on S^m."""
        np.testing.assert_allclose(np.linalg.norm(model.angular.z, axis=1), 1.0, atol=1e-12)
        assert model.angular.z.shape[1] == 3

    def test_m_out_of_range(self):
        """m must lie in [1, K-1]."""
        with pytest.raises(ConfigError, match='m must lie'):
            GeneratorService.build_angular(np.ones((4, 3)), 0.5, 3)

    def test_too_few_rows(self):
        """At least two rows must exceed r_V."""
        v = np.array([[1.0, 0.0, 0.0], [0.1, 0.0, 0.0]])
        with pytest.raises(DataError, match='exceed r_V'):
            GeneratorService.build_angular(v, 0.5, 1, r_v=0.5)


class TestReconstruction:
    """Test cases for nearest neighbours and residual reconstruction."""

    def test_self_match_reproduces_w(self, model):
        """z_i with its own neighbour gives back w_i exactly."""
        angular = model.angular
        q = GeneratorService.nearest_neighbor(angular.z, angular)
        assert np.array_equal(q, np.arange(angular.n))
        w = GeneratorService.reconstruct_w(angular.z, q, angular)
        assert np.abs(w - angular.w).max() <= 1e-12

    def test_ties_go_to_lowest_index(self):
        """Duplicated angular points resolve to the first one."""
        angular = AngularSample(w=np.array([[1.0, 0.0, 0.0]] * 2), z=np.array([[1.0, 0.0]] * 2),
                                r_v=0.5, m=1, rows=np.arange(2))
        assert GeneratorService.nearest_neighbor(np.array([1.0, 0.0]), angular) == 0

    def test_zero_last_coordinate_zeroes_residual(self, toy_angular):
        """z*_m = 0 leaves no residual block."""
        w = GeneratorService.reconstruct_w(np.array([1.0, 0.0]), 0, toy_angular)
        np.testing.assert_allclose(w, [1.0, 0.0, 0.0])

    def test_unit_norm(self, model, rng):
        """Reconstructed vectors have unit norm."""
        z_star = rng.standard_normal((300, 3))
        z_star /= np.linalg.norm(z_star, axis=1, keepdims=True)
        q = GeneratorService.nearest_neighbor(z_star, model.angular)
        w = GeneratorService.reconstruct_w(z_star, q, model.angular)
        np.testing.assert_allclose(np.linalg.norm(w, axis=1), 1.0, atol=1e-10)

    def test_residual_collinear_with_neighbour(self, model, rng):
        """The residual block is a scalar multiple of the neighbour's block."""
        z_star = rng.standard_normal((50, 3))
        z_star /= np.linalg.norm(z_star, axis=1, keepdims=True)
        q = GeneratorService.nearest_neighbor(z_star, model.angular)
        w = GeneratorService.reconstruct_w(z_star, q, model.angular)
        tail, anchor = w[:, 2:], model.angular.w[q, 2:]
        dots = np.abs(np.sum(tail * anchor, axis=1))
        norms = np.linalg.norm(tail, axis=1) * np.linalg.norm(anchor, axis=1)
        np.testing.assert_allclose(dots, norms, rtol=1e-10, atol=1e-14)

    def test_zero_residual_fallback(self, caplog):
        """A neighbour without residual gives a renormalized leading block."""
        angular = AngularSample(w=np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
                                z=np.array([[1.0, 0.0], [0.0, 1.0]]), r_v=0.5, m=1, rows=np.arange(2))
        w = GeneratorService.reconstruct_w(np.array([0.8, 0.6]), 0, angular)
        np.testing.assert_allclose(w, [1.0, 0.0, 0.0])
        assert 'zero residual' in caplog.text


class TestRadius:
    """Test cases for the Frechet radial law."""

    def test_quantiles(self):
        """u = e^-1 gives K; u = e^-4 gives K / 2."""
        np.testing.assert_allclose(GeneratorService.radius_from_uniform(6, np.exp([-1.0, -4.0])), [6.0, 3.0])

    def test_distribution(self, rng):
        """Draws follow exp(-(r/K)^-2)."""
        radii = GeneratorService.sample_radius(5, rng, size=100000)
        statistic, _ = stats.kstest(radii, lambda r: np.exp(-(r / 5.0) ** -2.0))
        assert statistic < 0.006
        assert np.mean(radii <= 5.0) == pytest.approx(np.exp(-1.0), abs=0.005)

    def test_truncation(self, rng):
        """min_radius bounds every draw from below."""
        radii = GeneratorService.sample_radius(5, rng, size=20000, min_radius=8.0)
        assert radii.min() > 8.0


class TestGenerate:
    """Test cases for end-to-end generation."""

    def test_shape_and_scale(self, model):
        """N x K finite events with positive Frechet values."""
        events = GeneratorService.generate(model, 4400, substream(3, 'generate', 0), seed=3)
        assert events.events.shape == (4400, 6)
        assert np.all(np.isfinite(events.events))
        assert np.all(events.xtilde > 0)
        assert events.m == 2
        assert events.meta()['n_events'] == 4400

    def test_score_norm_equals_radius(self, model):
        """||v*|| = r* for every draw."""
        xtilde, radii = GeneratorService.generate_frechet(model, 200, substream(5, 'generate', 0))
        v = softplus_inv(xtilde) @ model.tpdm.eigvecs
        np.testing.assert_allclose(np.linalg.norm(v, axis=1), radii, rtol=1e-8)

    def test_deterministic(self, model):
        """Same seed and substream give bit-identical events."""
        first = GeneratorService.generate(model, 300, substream(11, 'generate', 0))
        second = GeneratorService.generate(model, 300, substream(11, 'generate', 0))
        assert np.array_equal(first.events, second.events)

    def test_min_radius_modes(self, model):
        """'r_v' maps to the angular threshold, numbers pass through."""
        assert GeneratorService.resolve_min_radius(model, 'r_v') == model.angular.r_v
        assert GeneratorService.resolve_min_radius(model, '2.5') == 2.5
        assert GeneratorService.resolve_min_radius(model, '0') == 0.0
        with pytest.raises(ConfigError):
            GeneratorService.resolve_min_radius(model, 'large')

    def test_rejects_empty_request(self, model):
        """n_events must be positive."""
        with pytest.raises(ConfigError):
            GeneratorService.generate(model, 0, substream(1, 'generate', 0))

    def test_single_angular_direction(self, model):
        """With one angular point every event shares its direction."""
        angular = AngularSample(w=model.angular.w[:1], z=model.angular.z[:1], r_v=model.angular.r_v,
                                m=2, rows=model.angular.rows[:1])
        single = GeneratorModel(tpdm=model.tpdm, margins=model.margins, angular=angular,
                                kernel=VmfKernel(centers=angular.z, kappa=1e6),
                                site_ids=model.site_ids)
        xtilde, _ = GeneratorService.generate_frechet(single, 100, substream(2, 'generate', 0))
        v = softplus_inv(xtilde) @ model.tpdm.eigvecs
        w = v / np.linalg.norm(v, axis=1, keepdims=True)
        assert np.all(w @ angular.w[0] > 0.999)

    def test_dependence_reproduced(self, model, fitted):
        """TPDM of generated events is close to the fitted one."""
        xtilde, _ = GeneratorService.generate_frechet(model, 20000, substream(9, 'generate', 0))
        panel = FrechetPanel(values=xtilde, rows=np.arange(len(xtilde)))
        generated = ExtremalPcaService.estimate_tpdm(panel, 0.94)
        assert np.abs(generated.sigma - fitted['tpdm'].sigma).max() < 0.2


class TestFitFromData:
    """Test cases for the one-pass fit."""

    def test_matches_stepwise_fit(self, fitted):
        """fit_from_data reproduces the stepwise TPDM."""
        fits, fitted_model = GeneratorService.fit_from_data(fitted['data'], FitSettings(), 2)
        assert len(fits) == 6
        np.testing.assert_array_equal(fitted_model.tpdm.sigma, fitted['tpdm'].sigma)
        assert fitted_model.m == 2
