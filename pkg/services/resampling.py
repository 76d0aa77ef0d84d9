"""
Resampling for hazardset.
Leave-one-out selection of the reduced dimension m and the nonparametric bootstrap over
event sets, both run as independent jobs with their own counter-based RNG substreams.
"""

import logging
import math
import zlib
from functools import partial
from typing import Callable, List, Optional, Sequence

import numpy as np
from pathos.multiprocessing import ProcessPool

from errors import ConfigError, DataError, HazardSetError, NumericalError
from models import DataMatrix, EventSet, FrechetPanel, GeneratorModel, SelectionResult, Tpdm
from services.extremal_pca import ExtremalPcaService
from services.generator import FitSettings, GeneratorService

logger = logging.getLogger(__name__)

N_FOLD_BOOT = 1000
FOLD_CI_LEVEL = 0.90
MIN_SUCCESS = 0.8


def substream(seed: int, stage: str, job_id: int = 0) -> np.random.Generator:
    """Philox generator keyed by (master seed, stage name, job id)."""
    if seed is None or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed}", "resampling")
    key = np.random.SeedSequence([int(seed), zlib.crc32(stage.encode('utf-8')), int(job_id)])
    return np.random.Generator(np.random.Philox(key))


def run_jobs(func: Callable, jobs_args: Sequence, jobs: int = 1) -> List:
    """Map func over jobs_args, on a process pool when jobs > 1; results keep input order."""
    if jobs <= 1 or len(jobs_args) <= 1:
        return [func(arg) for arg in jobs_args]
    pool = ProcessPool(nodes=min(jobs, len(jobs_args)))
    try:
        return pool.map(func, jobs_args)
    finally:
        pool.close()
        pool.join()
        pool.clear()


def _fold_errors(fold: int, panel: FrechetPanel, tpdm: Tpdm, extremes: np.ndarray,
                 m_grid: List[int], n_samples: int, seed: int, q_rv: float, r_v: float,
                 kappa_max: float) -> np.ndarray:
    held_out = panel.values[extremes[fold]]
    reduced = panel.drop_row(extremes[fold])
    try:
        tpdm_fold = ExtremalPcaService.estimate_tpdm(reduced, tpdm.q_radial, r0=tpdm.r0)
    except HazardSetError as e:
        raise NumericalError(f"fold {fold}: TPDM refit failed: {e}", "resampling") from e

    errors = np.empty(len(m_grid))
    for idx, m in enumerate(m_grid):
        try:
            model = GeneratorService.fit_generator(
                reduced, tpdm_fold, [], [], m, q_rv, r_v=r_v, kappa_max=kappa_max)
        except HazardSetError as e:
            raise NumericalError(f"fold {fold}, m={m}: generator refit failed: {e}", "resampling") from e
        samples, _ = GeneratorService.generate_frechet(
            model, n_samples, substream(seed, f'select_m:{m}', fold))
        errors[idx] = ResamplingService.direction_error(held_out, samples)
    logger.info(f"select_m fold {fold + 1}/{len(extremes)} done")
    return errors


def _replicate(r: int, data: DataMatrix, settings: FitSettings, m: int, n_events: int, seed: int,
               shapes: Optional[List[float]], min_radius, point_model: Optional[GeneratorModel]):
    rng = substream(seed, 'bootstrap', r)
    try:
        if point_model is None:
            rows = rng.integers(0, data.n_periods, size=data.n_periods)
            _, model = GeneratorService.fit_from_data(data.take_rows(rows), settings, m,
                                                      fixed_shapes=shapes)
        else:
            model = point_model
        radius = GeneratorService.resolve_min_radius(model, min_radius)
        return GeneratorService.generate(model, n_events, substream(seed, 'generate', r),
                                         seed=seed, replicate_id=r, min_radius=radius)
    except (DataError, NumericalError) as e:
        logger.warning(f"Bootstrap replicate {r} skipped: {e}")
        return None


class ResamplingService:
    """Service class for dimension selection and bootstrap uncertainty."""

    @staticmethod
    def direction_error(target, samples) -> float:
        """1 - max cosine similarity between target and any sample row."""
        target = np.asarray(target, dtype=float)
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        cosines = samples @ target / (np.linalg.norm(samples, axis=1) * np.linalg.norm(target))
        return float(1.0 - np.clip(cosines.max(), -1.0, 1.0))

    @staticmethod
    def select_m(panel: FrechetPanel, tpdm: Tpdm, m_grid: Sequence[int], n_samples_per_fold: int,
                 seed: int, q_rv: float, kappa_max: float = 1e4, jobs: int = 1,
                 n_boot: int = N_FOLD_BOOT, level: float = FOLD_CI_LEVEL) -> SelectionResult:
        """Leave-one-extreme-out average direction error per m; argmin wins, lowest m on ties."""
        m_grid = sorted(set(int(m) for m in m_grid))
        if not m_grid:
            raise ConfigError("m_grid is empty", "resampling")
        n_sites = panel.n_sites
        outside = [m for m in m_grid if not 1 <= m <= n_sites - 1]
        if outside:
            raise ConfigError(f"m_grid values outside [1, {n_sites - 1}]: {outside}", "resampling")
        if n_samples_per_fold < 1:
            raise ConfigError("n_samples_per_fold must be positive", "resampling")

        extremes = ExtremalPcaService.extreme_rows(panel, tpdm)
        if len(extremes) < 3:
            raise DataError(f"need at least 3 extreme events for selection, got {len(extremes)}",
                            "resampling")
        norms = ExtremalPcaService.pc_scores(panel, tpdm).norms
        r_v = float(np.quantile(norms, q_rv))
        logger.info(f"select_m: {len(extremes)} folds, m_grid={m_grid}, jobs={jobs}")

        worker = partial(_fold_errors, panel=panel, tpdm=tpdm, extremes=extremes, m_grid=m_grid,
                         n_samples=n_samples_per_fold, seed=seed, q_rv=q_rv, r_v=r_v,
                         kappa_max=kappa_max)
        fold_errors = np.vstack(run_jobs(worker, list(range(len(extremes))), jobs))
        d_bar = fold_errors.mean(axis=0)

        rng = substream(seed, 'select_m_ci', 0)
        picks = rng.integers(0, len(extremes), size=(n_boot, len(extremes)))
        boot = fold_errors[picks].mean(axis=1)
        lower, upper = np.quantile(boot, [(1 - level) / 2, (1 + level) / 2], axis=0)

        m_opt = m_grid[int(np.argmin(d_bar))]
        logger.info(f"select_m chose m={m_opt} (D={d_bar.min():.4f})")
        return SelectionResult(m_opt=m_opt, m_grid=m_grid, d_bar=d_bar, lower=lower, upper=upper,
                               fold_errors=fold_errors)

    @staticmethod
    def bootstrap_generate(data: DataMatrix, settings: FitSettings, m: int, n_replicates: int,
                           events_per_replicate: int, seed: int, point_fits=None,
                           shape_draws: Optional[Sequence[Sequence[float]]] = None,
                           min_radius=0.0, resample: bool = True,
                           point_model: Optional[GeneratorModel] = None,
                           jobs: int = 1, min_success: float = MIN_SUCCESS) -> List[EventSet]:
        """One event set per replicate; margins rescaled with shapes held at the point estimates."""
        if n_replicates < 1:
            raise ConfigError(f"n_replicates must be at least 1, got {n_replicates}", "resampling")
        if events_per_replicate < 1:
            raise ConfigError(f"n_events must be positive, got {events_per_replicate}", "resampling")
        if shape_draws is not None and len(shape_draws) < n_replicates:
            raise ConfigError(
                f"shape draws cover {len(shape_draws)} replicates, need {n_replicates}", "resampling")

        if not resample:
            if point_model is None:
                _, point_model = GeneratorService.fit_from_data(data, settings, m)
        elif point_fits is None and shape_draws is None:
            point_fits, _ = GeneratorService.fit_from_data(data, settings, m)

        base_shapes = [fit.xi for fit in point_fits] if point_fits is not None else None
        jobs_args = list(range(n_replicates))
        worker_shapes = [list(shape_draws[r]) if shape_draws is not None else base_shapes
                         for r in jobs_args]

        def job(r: int):
            return _replicate(r, data, settings, m, events_per_replicate, seed, worker_shapes[r],
                              min_radius, None if resample else point_model)

        results = run_jobs(job, jobs_args, jobs)
        sets = [s for s in results if s is not None]
        needed = math.ceil(min_success * n_replicates)
        if len(sets) < needed:
            raise NumericalError(
                f"only {len(sets)} of {n_replicates} bootstrap replicates succeeded; need {needed}",
                "resampling")
        if len(sets) < n_replicates:
            logger.warning(f"{n_replicates - len(sets)} bootstrap replicates failed and were dropped")
        return sets
