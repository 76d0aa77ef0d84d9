"""
Domain models for hazardset.
Immutable containers for panels, marginal fits, dependence estimates and event sets.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from errors import DataError


def _frozen(array, dtype=float) -> np.ndarray:
    """Return a read-only copy of array."""
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DataMatrix:
    """T x K panel of per-period, per-site maxima with an observation mask."""

    values: np.ndarray
    mask: np.ndarray
    site_ids: List[str]
    period_index: pd.Index
    periods_per_year: float

    def __post_init__(self):
        values = _frozen(self.values)
        mask = _frozen(self.mask, dtype=bool)
        if values.ndim != 2 or values.shape != mask.shape:
            raise DataError("values and mask must be matching T x K matrices", "ingest")
        n_rows, n_sites = values.shape
        if n_sites < 2:
            raise DataError(f"need at least 2 sites, got {n_sites}", "ingest")
        if n_rows < 2:
            raise DataError(f"need at least 2 periods, got {n_rows}", "ingest")
        if len(self.site_ids) != n_sites:
            raise DataError("site_ids length does not match the number of columns", "ingest")
        if len(set(self.site_ids)) != n_sites:
            raise DataError("site ids must be unique", "ingest")
        if len(self.period_index) != n_rows:
            raise DataError("period_index length does not match the number of rows", "ingest")
        if not self.periods_per_year > 0:
            raise DataError("periods_per_year must be positive", "ingest")
        if not np.all(np.isfinite(values[mask])):
            raise DataError("observed cells must be finite", "ingest")
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'mask', mask)
        object.__setattr__(self, 'site_ids', list(self.site_ids))
        object.__setattr__(self, 'period_index', pd.Index(self.period_index))

    @property
    def n_periods(self) -> int:
        return self.values.shape[0]

    @property
    def n_sites(self) -> int:
        return self.values.shape[1]

    def observed(self, k: int) -> np.ndarray:
        """Observed values of site k in row order."""
        return self.values[self.mask[:, k], k]

    def take_rows(self, rows) -> 'DataMatrix':
        """Sub-panel (rows may repeat, as in bootstrap resampling)."""
        rows = np.asarray(rows, dtype=int)
        return DataMatrix(
            values=self.values[rows],
            mask=self.mask[rows],
            site_ids=self.site_ids,
            period_index=self.period_index[rows],
            periods_per_year=self.periods_per_year,
        )

    def to_dict(self):
        return {
            'n_periods': self.n_periods,
            'n_sites': self.n_sites,
            'site_ids': self.site_ids,
            'periods_per_year': self.periods_per_year,
            'observed_fraction': float(self.mask.mean()),
        }

    def __repr__(self):
        return f'<DataMatrix T={self.n_periods} K={self.n_sites}>'


@dataclass(frozen=True)
class CompleteIndex:
    """Rows of a DataMatrix where every site is observed."""

    rows: np.ndarray
    n_total: int

    def __post_init__(self):
        object.__setattr__(self, 'rows', _frozen(self.rows, dtype=int))

    @property
    def fraction(self) -> float:
        return len(self.rows) / self.n_total

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class GpdFit:
    """Generalized Pareto tail above threshold u for one site."""

    site_id: str
    u: float
    sigma: float
    xi: float
    rate_per_year: float
    n_exceed: int
    q_fit: float
    nll: float = float('nan')

    def __post_init__(self):
        if not self.sigma > 0:
            raise DataError(f"scale must be positive, got {self.sigma}", "marginals")
        if self.n_exceed < 2:
            raise DataError(f"need at least 2 exceedances, got {self.n_exceed}", "marginals")

    @property
    def upper_endpoint(self) -> float:
        if self.xi < 0:
            return self.u - self.sigma / self.xi
        return float('inf')

    def to_dict(self):
        return {
            'id': self.site_id,
            'u': self.u,
            'sigma': self.sigma,
            'xi': self.xi,
            'rate_per_year': self.rate_per_year,
            'n_exceed': self.n_exceed,
            'q_fit': self.q_fit,
        }

    def __repr__(self):
        return f'<GpdFit {self.site_id} u={self.u:.4g} sigma={self.sigma:.4g} xi={self.xi:.3f}>'


@dataclass(frozen=True)
class SemiParametricCdf:
    """Empirical cdf below the threshold spliced to a GPD tail above it."""

    sorted_values: np.ndarray
    fit: GpdFit

    def __post_init__(self):
        object.__setattr__(self, 'sorted_values', _frozen(np.sort(self.sorted_values)))

    @property
    def u(self) -> float:
        return self.fit.u

    @property
    def n(self) -> int:
        return len(self.sorted_values)

    @property
    def p_u(self) -> float:
        """Empirical level at the splice point, rank/(n+1)."""
        rank = np.searchsorted(self.sorted_values, self.u, side='right')
        return rank / (self.n + 1)


@dataclass(frozen=True)
class FrechetPanel:
    """Complete rows transformed to unit Frechet (alpha=2) margins."""

    values: np.ndarray
    rows: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 2:
            raise DataError("Frechet panel must be two-dimensional", "extremal_pca")
        if not np.all(values > 0):
            raise DataError("Frechet panel entries must be positive", "extremal_pca")
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'rows', _frozen(self.rows, dtype=int))

    @property
    def n_sites(self) -> int:
        return self.values.shape[1]

    def drop_row(self, i: int) -> 'FrechetPanel':
        keep = np.ones(len(self.values), dtype=bool)
        keep[i] = False
        return FrechetPanel(values=self.values[keep], rows=self.rows[keep])


@dataclass(frozen=True)
class Tpdm:
    """Tail pairwise dependence matrix with its cached eigendecomposition."""

    sigma: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray
    r0: float
    n_exc: int
    q_radial: float

    def __post_init__(self):
        for name in ('sigma', 'eigvecs', 'eigvals'):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n_sites(self) -> int:
        return self.sigma.shape[0]

    def to_dict(self):
        return {
            'sigma': self.sigma.ravel(order='C').tolist(),
            'eigvals': self.eigvals.tolist(),
            'eigvecs': self.eigvecs.ravel(order='F').tolist(),
            'r0': self.r0,
            'n_exc': self.n_exc,
            'q_radial': self.q_radial,
        }


@dataclass(frozen=True)
class PcScores:
    """Extremal principal component scores, one row per panel row."""

    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'v', _frozen(self.v))

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.v, axis=1)


@dataclass(frozen=True)
class VmfKernel:
    """von Mises-Fisher kernel density with uniform weights on S^(dim-1)."""

    centers: np.ndarray
    kappa: float

    def __post_init__(self):
        centers = _frozen(np.atleast_2d(self.centers))
        if centers.shape[1] < 2:
            raise DataError("kernel dimension must be at least 2", "spherical")
        if not np.allclose(np.linalg.norm(centers, axis=1), 1.0, atol=1e-12, rtol=0):
            raise DataError("kernel centers must be unit vectors", "spherical")
        if not self.kappa >= 0:
            raise DataError(f"kappa must be non-negative, got {self.kappa}", "spherical")
        object.__setattr__(self, 'centers', centers)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True)
class AngularSample:
    """Angles of extreme PC vectors and their augmented images on S^m."""

    w: np.ndarray
    z: np.ndarray
    r_v: float
    m: int
    rows: np.ndarray

    def __post_init__(self):
        for name in ('w', 'z'):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, 'rows', _frozen(self.rows, dtype=int))

    @property
    def n(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class GeneratorModel:
    """Everything needed to draw synthetic events from the fitted framework."""

    tpdm: Tpdm
    margins: List[SemiParametricCdf]
    angular: AngularSample
    kernel: VmfKernel
    site_ids: List[str]

    @property
    def m(self) -> int:
        return self.angular.m

    @property
    def frechet_scale(self) -> float:
        return float(self.tpdm.n_sites)

    def to_dict(self):
        return {
            'm': self.m,
            'kappa': self.kernel.kappa,
            'r_V': self.angular.r_v,
            'n_angular': self.angular.n,
            'eigvals': self.tpdm.eigvals.tolist(),
            'site_ids': self.site_ids,
        }


@dataclass(frozen=True)
class EventSet:
    """N x K synthetic events on the data scale with provenance."""

    events: np.ndarray
    site_ids: List[str]
    seed: int
    m: Optional[int]
    replicate_id: int
    radii: np.ndarray
    generator: str = 'epca'
    xtilde: Optional[np.ndarray] = None

    def __post_init__(self):
        events = _frozen(self.events)
        if not np.all(np.isfinite(events)):
            raise DataError("generated events must be finite", "generator")
        object.__setattr__(self, 'events', events)
        object.__setattr__(self, 'radii', _frozen(self.radii))
        if self.xtilde is not None:
            object.__setattr__(self, 'xtilde', _frozen(self.xtilde))

    @property
    def n_events(self) -> int:
        return self.events.shape[0]

    def meta(self) -> Dict:
        radii = self.radii
        return {
            'seed': self.seed,
            'm': self.m,
            'replicate_id': self.replicate_id,
            'n_events': self.n_events,
            'generator': self.generator,
            'site_ids': self.site_ids,
            'radii': {
                'min': float(radii.min()) if radii.size else None,
                'median': float(np.median(radii)) if radii.size else None,
                'max': float(radii.max()) if radii.size else None,
            },
        }


@dataclass(frozen=True)
class SelectionResult:
    """Leave-one-out error curve over candidate reduced dimensions."""

    m_opt: int
    m_grid: List[int]
    d_bar: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    fold_errors: np.ndarray

    def rows(self) -> List[Dict]:
        return [
            {'m': m, 'd_bar': float(d), 'lo': float(lo), 'hi': float(hi)}
            for m, d, lo, hi in zip(self.m_grid, self.d_bar, self.lower, self.upper)
        ]


@dataclass(frozen=True)
class QqBand:
    """Observed top order statistics against simulated central intervals."""

    observed: np.ndarray
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    alpha: float

    @property
    def k(self) -> int:
        return len(self.observed)

    @property
    def covered(self) -> np.ndarray:
        return (self.observed >= self.lower) & (self.observed <= self.upper)

    @property
    def coverage(self) -> float:
        return float(self.covered.mean())


@dataclass(frozen=True)
class SeverityMap:
    """Highest exceeded return period per site for one event (None = below all)."""

    classes: List[Optional[float]]
    site_ids: List[str]

    def to_dict(self):
        return dict(zip(self.site_ids, self.classes))


@dataclass(frozen=True)
class ChiEstimate:
    """Empirical conditional exceedance probability for one site pair."""

    i: int
    j: int
    q: float
    chi: float
    n_joint: int
    reliable: bool


@dataclass(frozen=True)
class HtFit:
    """Conditional-extremes fit given that site k exceeds v on the Laplace scale."""

    k: int
    others: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    mu: np.ndarray
    scale: np.ndarray
    residuals: np.ndarray
    v: float

    def __post_init__(self):
        for name in ('others', 'alpha', 'beta', 'mu', 'scale', 'residuals'):
            dtype = int if name == 'others' else float
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype=dtype))
        if np.any(np.abs(self.alpha) > 1) or np.any(self.beta > 1):
            raise DataError("alpha must lie in [-1, 1] and beta must not exceed 1", "ht_baseline")

    @property
    def n_exceed(self) -> int:
        return self.residuals.shape[0]

    def to_dict(self):
        return {
            'k': self.k,
            'v': self.v,
            'alpha': self.alpha.tolist(),
            'beta': self.beta.tolist(),
            'n_exceed': self.n_exceed,
        }


@dataclass(frozen=True)
class HtModel:
    """All conditioning-site fits plus margins for data-scale back-transform."""

    fits: List[HtFit]
    margins: List[SemiParametricCdf]
    site_ids: List[str]
    weights: np.ndarray = field(default=None)
