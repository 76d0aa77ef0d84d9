"""
Diagnostics for hazardset.
Order statistics, group summaries, sampling bands, return-period severity and
rank-based extremal dependence for observed and generated event sets.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from errors import ConfigError, DataError
from models import ChiEstimate, GpdFit, QqBand, SeverityMap
from services.marginals import MarginalService

logger = logging.getLogger(__name__)

DEFAULT_TAUS = (2, 5, 10, 25, 50, 100, 200)
MIN_JOINT = 5


class DiagnosticsService:
    """Service class for validating event sets against observations."""

    @staticmethod
    def top_order_stats(series, k: int) -> np.ndarray:
        """The k largest values, descending."""
        series = np.asarray(series, dtype=float).ravel()
        if k < 1:
            raise ConfigError(f"k must be positive, got {k}", "diagnostics")
        if series.size < k:
            raise DataError(f"series has {series.size} values, fewer than k={k}", "diagnostics")
        return np.sort(series)[::-1][:k].copy()

    @staticmethod
    def group_summaries(events, group: Sequence[int]):
        """Per-event maximum and L2 norm over the sites in group."""
        events = np.atleast_2d(np.asarray(events, dtype=float))
        group = [int(i) for i in group]
        if not group:
            raise ConfigError("site group is empty", "diagnostics")
        if any(i < 0 or i >= events.shape[1] for i in group):
            raise ConfigError(f"group indices {group} out of range for {events.shape[1]} sites",
                              "diagnostics")
        block = events[:, group]
        return block.max(axis=1), np.linalg.norm(block, axis=1)

    @staticmethod
    def qq_band(observed_topk, simulated_sets: Sequence, alpha: float = 0.95) -> QqBand:
        """Per-rank central alpha interval of simulated order statistics."""
        if not 0 < alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {alpha}", "diagnostics")
        observed = np.asarray(observed_topk, dtype=float)
        needed = math.ceil(1.0 / (1.0 - alpha) - 1e-9)
        if len(simulated_sets) < needed:
            raise DataError(f"{len(simulated_sets)} simulated sets are too few for alpha={alpha}; "
                            f"need at least {needed}", "diagnostics")
        k = len(observed)
        stats = np.vstack([DiagnosticsService.top_order_stats(s, k) for s in simulated_sets])
        lower, median, upper = np.quantile(stats, [(1 - alpha) / 2, 0.5, (1 + alpha) / 2], axis=0)
        return QqBand(observed=observed, lower=lower, median=median, upper=upper, alpha=alpha)

    @staticmethod
    def band_rows(statistic: str, band: QqBand) -> List[Dict]:
        """Tidy rows: statistic, rank, observed, lo, med, hi, covered."""
        return [
            {'statistic': statistic, 'rank': r + 1, 'observed': float(obs), 'lo': float(lo),
             'med': float(med), 'hi': float(hi), 'covered': bool(cov)}
            for r, (obs, lo, med, hi, cov) in enumerate(
                zip(band.observed, band.lower, band.median, band.upper, band.covered))
        ]

    @staticmethod
    def _validate_taus(taus: Sequence[float]) -> List[float]:
        taus = [float(t) for t in taus]
        if not taus or any(t <= 0 for t in taus) or any(b <= a for a, b in zip(taus, taus[1:])):
            raise ConfigError(f"return-period ladder must be positive and strictly increasing: {taus}",
                              "diagnostics")
        return taus

    @staticmethod
    def return_level_table(fits: List[GpdFit], taus: Sequence[float] = DEFAULT_TAUS) -> np.ndarray:
        """K x len(taus) matrix of return levels."""
        taus = DiagnosticsService._validate_taus(taus)
        return np.array([[MarginalService.return_level(fit, t) for t in taus] for fit in fits])

    @staticmethod
    def classify_severity(event, fits: List[GpdFit], taus: Sequence[float] = DEFAULT_TAUS,
                          levels: Optional[np.ndarray] = None) -> SeverityMap:
        """Highest return period whose level each site reaches (inclusive)."""
        taus = DiagnosticsService._validate_taus(taus)
        event = np.asarray(event, dtype=float)
        if event.shape != (len(fits),):
            raise DataError(f"event has {event.size} values for {len(fits)} sites", "diagnostics")
        if levels is None:
            levels = DiagnosticsService.return_level_table(fits, taus)
        reached = event[:, None] >= levels
        classes = []
        for row in reached:
            hits = np.flatnonzero(row)
            classes.append(taus[hits[-1]] if hits.size else None)
        return SeverityMap(classes=classes, site_ids=[fit.site_id for fit in fits])

    @staticmethod
    def severity_counts(events, fits: List[GpdFit], taus: Sequence[float] = DEFAULT_TAUS) -> Dict:
        """Number of (event, site) cells in each severity class."""
        taus = DiagnosticsService._validate_taus(taus)
        levels = DiagnosticsService.return_level_table(fits, taus)
        counts = {str(t): 0 for t in taus}
        counts['none'] = 0
        for event in np.atleast_2d(events):
            for cls in DiagnosticsService.classify_severity(event, fits, taus, levels).classes:
                counts['none' if cls is None else str(cls)] += 1
        return counts

    @staticmethod
    def sites_exceeding(events, fits: List[GpdFit], tau: float) -> int:
        """Sites where at least one event reaches the tau-year level."""
        events = np.atleast_2d(np.asarray(events, dtype=float))
        levels = np.array([MarginalService.return_level(fit, tau) for fit in fits])
        return int(np.sum(events.max(axis=0) >= levels))

    @staticmethod
    def top_events(xtilde, k: int) -> np.ndarray:
        """Indices of the k events with the largest L2 norm, largest first."""
        norms = np.linalg.norm(np.atleast_2d(xtilde), axis=1)
        return np.argsort(-norms, kind='stable')[:k]

    @staticmethod
    def pairwise_dependence(values, i: int, j: int, q: float = 0.9) -> ChiEstimate:
        """Empirical P(U_j > q | U_i > q) on column ranks."""
        if not 0.5 < q < 1:
            raise ConfigError(f"q must lie in (0.5, 1), got {q}", "diagnostics")
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        u_i = rankdata(values[:, i]) / (n + 1)
        u_j = rankdata(values[:, j]) / (n + 1)
        above_i = u_i > q
        n_i = int(above_i.sum())
        n_joint = int(np.sum(above_i & (u_j > q)))
        chi = n_joint / n_i if n_i else float('nan')
        reliable = n_joint >= MIN_JOINT
        if not reliable:
            logger.debug(f"chi({i},{j}) at q={q} rests on {n_joint} joint exceedances")
        return ChiEstimate(i=i, j=j, q=q, chi=chi, n_joint=n_joint, reliable=reliable)

    @staticmethod
    def chi_table(values, q: float = 0.9) -> List[ChiEstimate]:
        values = np.asarray(values, dtype=float)
        n_sites = values.shape[1]
        table = [DiagnosticsService.pairwise_dependence(values, i, j, q)
                 for i in range(n_sites) for j in range(i + 1, n_sites)]
        unreliable = sum(not c.reliable for c in table)
        if unreliable:
            logger.warning(f"{unreliable} of {len(table)} chi estimates have fewer than "
                           f"{MIN_JOINT} joint exceedances")
        return table
