"""
Event generation for hazardset.
Builds the augmented angular representation of extreme PC vectors, fits its vMF kernel density
and draws synthetic events through nearest-neighbour residual reconstruction.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from errors import ConfigError, DataError
from models import (AngularSample, DataMatrix, EventSet, FrechetPanel, GeneratorModel, GpdFit,
                    PcScores, SemiParametricCdf, Tpdm)
from services.extremal_pca import ExtremalPcaService, softplus
from services.ingest import IngestService
from services.marginals import MarginalService, ShapeOverrides
from services.spherical import KAPPA_MAX, SphericalService

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitSettings:
    """Thresholds shared by every refit of the model (point fit, folds, replicates)."""

    q_fit: float = 0.94
    q_transform: float = 0.96
    q_radial: float = 0.94
    q_rv: float = 0.94
    min_exceedances: int = 10
    kappa_max: float = KAPPA_MAX


class GeneratorService:
    """Service class for the extremal-PCA event generator."""

    @staticmethod
    def build_angular(scores: Union[PcScores, np.ndarray], q_rv: float, m: int,
                      r_v: Optional[float] = None) -> AngularSample:
        """Keep rows with ||v|| > r_V and map their angles w onto S^m."""
        v = scores.v if isinstance(scores, PcScores) else np.asarray(scores, dtype=float)
        n_sites = v.shape[1]
        if not 1 <= m <= n_sites - 1:
            raise ConfigError(f"m must lie in [1, {n_sites - 1}], got {m}", "generator")
        norms = np.linalg.norm(v, axis=1)
        if r_v is None:
            r_v = float(np.quantile(norms, q_rv))
        rows = np.flatnonzero(norms > r_v)
        if len(rows) < 2:
            raise DataError(f"only {len(rows)} PC vectors exceed r_V={r_v:.4g}", "generator")

        w = v[rows] / norms[rows, None]
        z = np.empty((len(rows), m + 1))
        z[:, :m] = w[:, :m]
        sign = np.where(w[:, m] >= 0, 1.0, -1.0)
        z[:, m] = sign * np.linalg.norm(w[:, m:], axis=1)
        return AngularSample(w=w, z=z, r_v=r_v, m=m, rows=rows)

    @staticmethod
    def nearest_neighbor(z_star, angular: AngularSample):
        """Index of the angular point with the largest dot product; ties go to the lowest index."""
        z_star = np.asarray(z_star, dtype=float)
        return np.argmax(z_star @ angular.z.T, axis=-1)

    @staticmethod
    def reconstruct_w(z_star, q, angular: AngularSample) -> np.ndarray:
        """Leading m coordinates from z*, residual block rescaled from the neighbour w_q."""
        z_star = np.asarray(z_star, dtype=float)
        single = z_star.ndim == 1
        z_star = np.atleast_2d(z_star)
        q = np.atleast_1d(q)
        m = angular.m

        anchor = angular.z[q, m]
        target = np.abs(z_star[:, m])
        safe = np.where(anchor == 0, 1.0, anchor)
        scale = np.where(anchor == 0, 0.0, target / np.abs(safe))
        w_star = np.empty((len(q), angular.w.shape[1]))
        w_star[:, :m] = z_star[:, :m]
        w_star[:, m:] = scale[:, None] * angular.w[q, m:]

        fallback = (anchor == 0) & (target != 0)
        if np.any(fallback):
            logger.warning(f"{int(fallback.sum())} draws matched a neighbour with no residual block; "
                           "using a zero residual")
            w_star[fallback] /= np.linalg.norm(w_star[fallback], axis=1, keepdims=True)
        return w_star[0] if single else w_star

    @staticmethod
    def radius_from_uniform(scale: float, u, min_radius: float = 0.0):
        """Frechet(alpha=2, given scale) quantile, optionally truncated below at min_radius."""
        u = np.asarray(u, dtype=float)
        if min_radius > 0:
            floor = np.exp(-(min_radius / scale) ** -2.0)
            u = floor + u * (1.0 - floor)
        return scale * (-np.log(u)) ** -0.5

    @staticmethod
    def sample_radius(scale: float, rng: np.random.Generator, size: Optional[int] = None,
                      min_radius: float = 0.0):
        """r* with P(r* <= r) = exp(-(r/scale)^-2); the model scale is K."""
        u = rng.uniform(np.finfo(float).tiny, 1.0, size=size)
        return GeneratorService.radius_from_uniform(scale, u, min_radius)

    @staticmethod
    def fit_generator(panel: FrechetPanel, tpdm: Tpdm, margins: List[SemiParametricCdf],
                      site_ids: List[str], m: int, q_rv: float, r_v: Optional[float] = None,
                      kappa_max: float = KAPPA_MAX) -> GeneratorModel:
        scores = ExtremalPcaService.pc_scores(panel, tpdm)
        angular = GeneratorService.build_angular(scores, q_rv, m, r_v=r_v)
        kernel = SphericalService.kde_fit(angular.z, kappa_max=kappa_max)
        logger.info(f"Generator fitted: m={m}, n_angular={angular.n}, "
                    f"r_V={angular.r_v:.4g}, kappa={kernel.kappa:.4g}")
        return GeneratorModel(tpdm=tpdm, margins=list(margins), angular=angular,
                              kernel=kernel, site_ids=list(site_ids))

    @staticmethod
    def fit_from_data(data: DataMatrix, settings: FitSettings, m: int,
                      fixed_shapes: ShapeOverrides = None) -> Tuple[List[GpdFit], GeneratorModel]:
        """Margins, Frechet transform, TPDM and generator in one pass."""
        fits, cdfs = MarginalService.fit_two_step(
            data, settings.q_fit, settings.q_transform, fixed_shapes=fixed_shapes,
            min_exceedances=settings.min_exceedances)
        rows = IngestService.complete_rows(data)
        panel = ExtremalPcaService.to_frechet(data, cdfs, rows)
        tpdm = ExtremalPcaService.estimate_tpdm(panel, settings.q_radial)
        model = GeneratorService.fit_generator(
            panel, tpdm, cdfs, data.site_ids, m, settings.q_rv, kappa_max=settings.kappa_max)
        return fits, model

    @staticmethod
    def resolve_min_radius(model: GeneratorModel, mode: Union[str, float, None]) -> float:
        """Map the config value ('0', 'r_v' or a number) to a radius."""
        if mode is None:
            return 0.0
        if isinstance(mode, str):
            if mode.lower() == 'r_v':
                return model.angular.r_v
            try:
                mode = float(mode)
            except ValueError:
                raise ConfigError(f"min_radius must be 0, r_v or a number, got '{mode}'", "generator") from None
        if mode < 0:
            raise ConfigError(f"min_radius must be non-negative, got {mode}", "generator")
        return float(mode)

    @staticmethod
    def generate_frechet(model: GeneratorModel, n_events: int, rng: np.random.Generator,
                         min_radius: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
        """Steps one to four plus the softplus map: (x~*, r*)."""
        if n_events < 1:
            raise ConfigError(f"n_events must be positive, got {n_events}", "generator")
        z_star = SphericalService.kde_sample(model.kernel, rng, size=n_events)
        q = GeneratorService.nearest_neighbor(z_star, model.angular)
        w_star = GeneratorService.reconstruct_w(z_star, q, model.angular)
        radii = GeneratorService.sample_radius(model.frechet_scale, rng, size=n_events,
                                               min_radius=min_radius)
        v_star = radii[:, None] * w_star
        return softplus(v_star @ model.tpdm.eigvecs.T), radii

    @staticmethod
    def generate(model: GeneratorModel, n_events: int, rng: np.random.Generator, seed: int = None,
                 replicate_id: int = 0, min_radius: float = 0.0) -> EventSet:
        """Draw n_events joint events on the data scale."""
        xtilde, radii = GeneratorService.generate_frechet(model, n_events, rng, min_radius)
        events = ExtremalPcaService.from_frechet(xtilde, model.margins)
        logger.info(f"Generated {n_events} events (replicate {replicate_id}, m={model.m})")
        return EventSet(events=events, site_ids=model.site_ids, seed=seed, m=model.m,
                        replicate_id=replicate_id, radii=radii, generator='epca', xtilde=xtilde)
