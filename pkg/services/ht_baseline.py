"""
Conditional-extremes baseline for hazardset.
Laplace margins, per-site conditional model fits and the conditional sampler used as a
reference generator in diagnostics.
"""

import logging
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize

from errors import ConfigError, DataError, NumericalError
from models import EventSet, HtFit, HtModel, SemiParametricCdf
from services.marginals import MarginalService

logger = logging.getLogger(__name__)

LOG_SCALE_BOUNDS = (-12.0, 5.0)
STARTS = ((0.0, 0.0), (0.5, 0.2), (0.9, 0.0), (-0.5, 0.2), (0.2, 0.7))


def uniform_to_laplace(p):
    """Standard Laplace quantile of p."""
    p = np.asarray(p, dtype=float)
    lower = np.log(2.0 * np.maximum(p, np.finfo(float).tiny))
    upper = -np.log(2.0 * np.maximum(1.0 - p, np.finfo(float).tiny))
    return np.where(p < 0.5, lower, upper)


def laplace_to_uniform(y):
    """Standard Laplace cdf of y."""
    y = np.asarray(y, dtype=float)
    return np.where(y < 0, 0.5 * np.exp(np.minimum(y, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(y, 0.0)))


def laplace_survival(y):
    y = np.asarray(y, dtype=float)
    return np.where(y < 0, 1.0 - 0.5 * np.exp(np.minimum(y, 0.0)), 0.5 * np.exp(-np.maximum(y, 0.0)))


def _pseudo_nll(theta, x: np.ndarray, y: np.ndarray) -> float:
    alpha, beta, mu, log_sigma = theta
    spread = np.exp(log_sigma) * x ** beta
    resid = (y - alpha * x - mu * x ** beta) / spread
    return float(np.sum(np.log(spread) + 0.5 * resid ** 2))


class HtBaselineService:
    """Service class for the conditional-extremes reference generator."""

    @staticmethod
    def to_laplace(values, cdfs: List[SemiParametricCdf]) -> np.ndarray:
        """Columnwise y = F_L^-1(F_k(x)), with the upper half computed from survival."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[1] != len(cdfs):
            raise DataError(f"expected {len(cdfs)} columns, got {values.shape[1]}", "ht_baseline")
        out = np.empty_like(values)
        tiny = np.finfo(float).tiny
        for k, cdf in enumerate(cdfs):
            p = MarginalService.cdf_eval(cdf, values[:, k])
            s = MarginalService.cdf_survival(cdf, values[:, k])
            out[:, k] = np.where(p < 0.5, np.log(2.0 * np.maximum(p, tiny)),
                                 -np.log(2.0 * np.maximum(s, tiny)))
        return out

    @staticmethod
    def from_laplace(y, cdfs: List[SemiParametricCdf]) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        s = np.clip(laplace_survival(y), np.finfo(float).tiny, np.nextafter(1.0, 0.0))
        out = np.empty_like(y)
        for k, cdf in enumerate(cdfs):
            out[:, k] = MarginalService.inverse_survival(cdf, s[:, k])
        return out

    @staticmethod
    def fit_conditional(x, y_others) -> tuple:
        """(alpha, beta, mu, scale) per column of y_others given conditioning values x > 0."""
        x = np.asarray(x, dtype=float)
        y_others = np.atleast_2d(np.asarray(y_others, dtype=float))
        if y_others.shape[0] != x.shape[0]:
            y_others = y_others.T
        if np.any(x <= 0):
            raise DataError("conditioning values must be positive on the Laplace scale", "ht_baseline")
        bounds = [(-1.0, 1.0), (-1.0, 1.0), (None, None), LOG_SCALE_BOUNDS]

        params = np.empty((y_others.shape[1], 4))
        for j in range(y_others.shape[1]):
            y = y_others[:, j]
            best = None
            for alpha0, beta0 in STARTS:
                resid0 = (y - alpha0 * x) / x ** beta0
                theta0 = [alpha0, beta0, resid0.mean(),
                          np.clip(np.log(resid0.std() + 1e-12), *LOG_SCALE_BOUNDS)]
                res = minimize(_pseudo_nll, theta0, args=(x, y), method='L-BFGS-B', bounds=bounds)
                if not np.isfinite(res.fun):
                    continue
                if best is None or res.fun < best.fun:
                    best = res
            if best is None:
                raise NumericalError(f"conditional fit failed for column {j}", "ht_baseline")
            params[j] = best.x
        alpha, beta, mu, log_sigma = params.T
        return alpha, beta, mu, np.exp(log_sigma)

    @staticmethod
    def fit_ht(y, k: int, v_quantile: float = 0.93, min_exceedances: int = 20) -> HtFit:
        """Conditional model for all other sites given site k above its v_quantile."""
        y = np.asarray(y, dtype=float)
        if not 0.5 < v_quantile < 1:
            raise ConfigError(f"v_quantile must lie in (0.5, 1), got {v_quantile}", "ht_baseline")
        v = float(np.quantile(y[:, k], v_quantile))
        exceed = y[:, k] > v
        n_exceed = int(exceed.sum())
        if n_exceed < min_exceedances:
            raise DataError(f"site {k} has {n_exceed} Laplace exceedances of v={v:.3f}; "
                            f"need at least {min_exceedances}", "ht_baseline")
        if v <= 0:
            raise DataError(f"threshold for site {k} is not positive on the Laplace scale", "ht_baseline")

        others = np.array([j for j in range(y.shape[1]) if j != k])
        x = y[exceed, k]
        block = y[exceed][:, others]
        alpha, beta, mu, scale = HtBaselineService.fit_conditional(x, block)
        residuals = (block - alpha * x[:, None]) / x[:, None] ** beta
        return HtFit(k=k, others=others, alpha=alpha, beta=beta, mu=mu, scale=scale,
                     residuals=residuals, v=v)

    @staticmethod
    def fit_ht_model(values, cdfs: List[SemiParametricCdf], site_ids: List[str],
                     v_quantile: float = 0.93, min_exceedances: int = 20,
                     weights: str = 'uniform') -> HtModel:
        if weights not in ('uniform', 'rate'):
            raise ConfigError(f"ht_weights must be 'uniform' or 'rate', got '{weights}'", "ht_baseline")
        y = HtBaselineService.to_laplace(values, cdfs)
        fits = []
        for k in range(y.shape[1]):
            fits.append(HtBaselineService.fit_ht(y, k, v_quantile, min_exceedances))
            logger.debug(f"Conditional fit for {site_ids[k]}: {fits[-1].n_exceed} exceedances")
        if weights == 'rate':
            probs = np.array([fit.n_exceed for fit in fits], dtype=float)
        else:
            probs = np.ones(len(fits))
        logger.info(f"Conditional-extremes baseline fitted for {len(fits)} sites")
        return HtModel(fits=fits, margins=list(cdfs), site_ids=list(site_ids),
                       weights=probs / probs.sum())

    @staticmethod
    def sample_laplace(model: HtModel, n_events: int, rng: np.random.Generator):
        """Laplace-scale events and their conditioning sites."""
        if n_events < 1:
            raise ConfigError(f"n_events must be positive, got {n_events}", "ht_baseline")
        n_fits = len(model.fits)
        weights = model.weights if model.weights is not None else np.full(n_fits, 1.0 / n_fits)
        picks = rng.choice(n_fits, size=n_events, p=weights)
        cond = np.array([fit.k for fit in model.fits])[picks]
        y = np.empty((n_events, len(model.site_ids)))
        for i, fit in enumerate(model.fits):
            idx = np.flatnonzero(picks == i)
            if idx.size == 0:
                continue
            yk = fit.v + rng.exponential(size=idx.size)
            z = fit.residuals[rng.integers(0, fit.n_exceed, size=idx.size)]
            y[idx, fit.k] = yk
            y[np.ix_(idx, fit.others)] = fit.alpha * yk[:, None] + yk[:, None] ** fit.beta * z
        return y, cond

    @staticmethod
    def ht_generate(model: HtModel, n_events: int, rng: np.random.Generator, seed: Optional[int] = None,
                    replicate_id: int = 0) -> EventSet:
        """Sample k, y_k above v_k, a residual row, then back-transform to data units."""
        y, _ = HtBaselineService.sample_laplace(model, n_events, rng)
        events = HtBaselineService.from_laplace(y, model.margins)
        return EventSet(events=events, site_ids=model.site_ids, seed=seed, m=None,
                        replicate_id=replicate_id, radii=y.max(axis=1), generator='ht')
