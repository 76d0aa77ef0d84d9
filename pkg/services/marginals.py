"""
Marginal tail models for hazardset.
Per-site generalized Pareto fits above quantile thresholds, the semi-parametric cdf
they induce, and return levels.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from errors import ConfigError, DataError, NumericalError
from models import DataMatrix, GpdFit, SemiParametricCdf

logger = logging.getLogger(__name__)

XI_ZERO = 1e-9
N_RESTARTS = 5

ShapeOverrides = Optional[Union[Sequence[Optional[float]], Dict[str, float]]]


def gpd_survival(x, sigma: float, xi: float):
    """P(excess > x) for GPD(sigma, xi); zero beyond the upper endpoint when xi < 0."""
    x = np.asarray(x, dtype=float)
    if abs(xi) < XI_ZERO:
        return np.exp(-x / sigma)
    base = np.maximum(1.0 + xi * x / sigma, 0.0)
    with np.errstate(divide='ignore'):
        return np.power(base, -1.0 / xi)


def gpd_quantile(s, sigma: float, xi: float):
    """Excess whose survival probability is s (inverse of gpd_survival)."""
    s = np.asarray(s, dtype=float)
    if abs(xi) < XI_ZERO:
        return -sigma * np.log(s)
    return sigma * np.expm1(-xi * np.log(s)) / xi


def gpd_nll(sigma: float, xi: float, excesses: np.ndarray) -> float:
    """Negative log-likelihood of excesses under GPD(sigma, xi)."""
    if not sigma > 0:
        return np.inf
    n = len(excesses)
    if abs(xi) < XI_ZERO:
        return n * np.log(sigma) + excesses.sum() / sigma
    scaled = xi * excesses / sigma
    if np.any(scaled <= -1.0):
        return np.inf
    return n * np.log(sigma) + (1.0 + 1.0 / xi) * np.log1p(scaled).sum()


class MarginalService:
    """Service class for per-site tail fitting and cdf evaluation."""

    @staticmethod
    def fit_gpd(excesses, fixed_xi: Optional[float] = None) -> Tuple[float, float, float]:
        """Maximum likelihood (sigma, xi, nll); only sigma is optimized when fixed_xi is given."""
        x = np.asarray(excesses, dtype=float)
        if x.size < 2:
            raise DataError(f"need at least 2 excesses, got {x.size}", "marginals")
        if np.any(x <= 0) or not np.all(np.isfinite(x)):
            raise DataError("excesses must be positive and finite", "marginals")
        if np.ptp(x) == 0:
            raise DataError("all excesses are equal; the likelihood is degenerate", "marginals")

        if fixed_xi is not None:
            return MarginalService._fit_scale(x, float(fixed_xi))

        mean, var = x.mean(), x.var(ddof=1)
        xi_moment = 0.5 * (1.0 - mean ** 2 / var)
        starts = [xi_moment, 0.0, 0.1, -0.1, 0.25][:N_RESTARTS]

        def objective(theta):
            log_sigma, xi = theta
            if xi <= -1.0:
                return np.inf
            return gpd_nll(np.exp(log_sigma), xi, x)

        best = None
        for xi0 in starts:
            xi0 = min(max(xi0, -0.45), 0.9)
            sigma0 = mean * (1.0 - xi0)
            if xi0 < 0:
                sigma0 = max(sigma0, -xi0 * x.max() * 1.05)
            res = minimize(
                objective, np.array([np.log(sigma0), xi0]), method='Nelder-Mead',
                options={'xatol': 1e-10, 'fatol': 1e-12, 'maxiter': 5000},
            )
            if not res.success or not np.isfinite(res.fun):
                logger.debug(f"GPD restart from xi0={xi0:.3f} did not converge: {res.message}")
                continue
            if best is None or res.fun < best.fun:
                best = res

        if best is None:
            raise NumericalError("GPD likelihood optimizer did not converge from any start", "marginals")
        log_sigma, xi = best.x
        return float(np.exp(log_sigma)), float(xi), float(best.fun)

    @staticmethod
    def _fit_scale(x: np.ndarray, xi: float) -> Tuple[float, float, float]:
        if xi <= -1.0:
            raise ConfigError(f"fixed shape must exceed -1, got {xi}", "marginals")
        if abs(xi) < XI_ZERO:
            sigma = float(x.mean())
            return sigma, xi, float(gpd_nll(sigma, xi, x))

        center = np.log(x.mean())
        lower = center - 10.0
        if xi < 0:
            lower = np.log(-xi * x.max()) + 1e-12
        upper = max(center, lower) + 10.0
        res = minimize_scalar(
            lambda log_sigma: gpd_nll(np.exp(log_sigma), xi, x),
            bounds=(lower, upper), method='bounded', options={'xatol': 1e-12, 'maxiter': 1000},
        )
        if not res.success or not np.isfinite(res.fun):
            raise NumericalError(f"scale optimizer failed with fixed xi={xi}", "marginals")
        return float(np.exp(res.x)), xi, float(res.fun)

    @staticmethod
    def fit_site_margins(data: DataMatrix, q_fit: float, fixed_shapes: ShapeOverrides = None,
                         min_exceedances: int = 10) -> Tuple[List[GpdFit], List[SemiParametricCdf]]:
        """Threshold each site at its empirical q_fit quantile and fit the GPD tail."""
        if not 0 < q_fit < 1:
            raise ConfigError(f"q_fit must lie in (0, 1), got {q_fit}", "marginals")
        shapes = MarginalService._resolve_shapes(fixed_shapes, data.site_ids)

        fits, cdfs = [], []
        for k, site in enumerate(data.site_ids):
            observed = data.observed(k)
            if observed.size < 2 or np.ptp(observed) == 0:
                raise DataError(f"site {site} has constant or too few observed values", "marginals")
            u = float(np.quantile(observed, q_fit))
            excesses = observed[observed > u] - u
            if excesses.size < min_exceedances:
                raise DataError(
                    f"site {site} has {excesses.size} exceedances of u={u:.4g}; "
                    f"need at least {min_exceedances}", "marginals")
            try:
                sigma, xi, nll = MarginalService.fit_gpd(excesses, shapes[k])
            except (DataError, NumericalError) as e:
                e.context = f"marginals:{site}"
                raise
            years = observed.size / data.periods_per_year
            fit = GpdFit(
                site_id=site, u=u, sigma=sigma, xi=xi,
                rate_per_year=excesses.size / years, n_exceed=int(excesses.size),
                q_fit=q_fit, nll=nll,
            )
            fits.append(fit)
            cdfs.append(SemiParametricCdf(sorted_values=observed, fit=fit))
            logger.debug(f"Fitted {fit!r}")
        return fits, cdfs

    @staticmethod
    def fit_two_step(data: DataMatrix, q_fit: float, q_transform: float,
                     fixed_shapes: ShapeOverrides = None,
                     min_exceedances: int = 10) -> Tuple[List[GpdFit], List[SemiParametricCdf]]:
        """Shapes from a free fit at q_fit (or supplied), scales refitted at q_transform."""
        if fixed_shapes is None:
            preliminary, cdfs = MarginalService.fit_site_margins(
                data, q_fit, min_exceedances=min_exceedances)
            if q_fit == q_transform:
                return preliminary, cdfs
            fixed_shapes = [fit.xi for fit in preliminary]
            logger.info("Shape estimates from q_fit=%s held fixed for the q_transform=%s fit",
                        q_fit, q_transform)
        return MarginalService.fit_site_margins(
            data, q_transform, fixed_shapes=fixed_shapes, min_exceedances=min_exceedances)

    @staticmethod
    def return_level(fit: GpdFit, tau: float) -> float:
        """Level exceeded on average once every tau years."""
        if not tau > 0:
            raise ConfigError(f"return period must be positive, got {tau}", "marginals")
        events = fit.rate_per_year * tau
        if events < 1:
            raise ConfigError(
                f"{tau}-year level at site {fit.site_id} lies below the threshold "
                f"(rate*tau = {events:.3g} < 1)", "marginals")
        if abs(fit.xi) < XI_ZERO:
            return fit.u + fit.sigma * np.log(events)
        return fit.u + fit.sigma / fit.xi * (events ** fit.xi - 1.0)

    @staticmethod
    def cdf_eval(cdf: SemiParametricCdf, x):
        """Empirical rank/(n+1) below the threshold, GPD tail above it."""
        x = np.asarray(x, dtype=float)
        below = np.searchsorted(cdf.sorted_values, x, side='right') / (cdf.n + 1)
        tail = 1.0 - MarginalService._tail_survival(cdf, x)
        return np.where(x > cdf.u, tail, below)

    @staticmethod
    def cdf_survival(cdf: SemiParametricCdf, x):
        """1 - cdf_eval, computed directly in the tail to keep precision near 1."""
        x = np.asarray(x, dtype=float)
        below = 1.0 - np.searchsorted(cdf.sorted_values, x, side='right') / (cdf.n + 1)
        return np.where(x > cdf.u, MarginalService._tail_survival(cdf, x), below)

    @staticmethod
    def cdf_inverse(cdf: SemiParametricCdf, p):
        """Quantile function; analytic on the tail."""
        p = np.asarray(p, dtype=float)
        if np.any((p <= 0) | (p >= 1)):
            raise DataError("probabilities must lie strictly inside (0, 1)", "marginals")
        return MarginalService._quantile(cdf, p, 1.0 - p)

    @staticmethod
    def inverse_survival(cdf: SemiParametricCdf, s):
        """Value whose survival probability is s, without forming 1 - s in the tail."""
        s = np.asarray(s, dtype=float)
        if np.any((s <= 0) | (s >= 1)):
            raise DataError("survival probabilities must lie strictly inside (0, 1)", "marginals")
        return MarginalService._quantile(cdf, 1.0 - s, s)

    @staticmethod
    def _quantile(cdf: SemiParametricCdf, p: np.ndarray, s: np.ndarray):
        fit = cdf.fit
        tail_mass = 1.0 - cdf.p_u
        in_tail = s < tail_mass
        ratio = np.where(in_tail, s / tail_mass, 0.5)
        tail = np.minimum(fit.u + gpd_quantile(ratio, fit.sigma, fit.xi), fit.upper_endpoint)
        ranks = np.clip(np.ceil(p * (cdf.n + 1) - 1e-9).astype(int), 1, cdf.n)
        below = cdf.sorted_values[ranks - 1]
        return np.where(in_tail, tail, below)

    @staticmethod
    def _tail_survival(cdf: SemiParametricCdf, x: np.ndarray):
        fit = cdf.fit
        excess = np.maximum(x - fit.u, 0.0)
        return (1.0 - cdf.p_u) * gpd_survival(excess, fit.sigma, fit.xi)

    @staticmethod
    def _resolve_shapes(fixed_shapes: ShapeOverrides, site_ids: List[str]) -> List[Optional[float]]:
        if fixed_shapes is None:
            return [None] * len(site_ids)
        if isinstance(fixed_shapes, dict):
            unknown = sorted(set(fixed_shapes) - set(site_ids))
            if unknown:
                raise ConfigError(f"shape overrides name unknown sites: {', '.join(unknown)}", "marginals")
            return [fixed_shapes.get(site) for site in site_ids]
        shapes = list(fixed_shapes)
        if len(shapes) != len(site_ids):
            raise ConfigError(
                f"expected {len(site_ids)} fixed shapes, got {len(shapes)}", "marginals")
        return shapes
