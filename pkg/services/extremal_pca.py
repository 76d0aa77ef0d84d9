"""
Extremal principal components for hazardset.
Frechet (alpha=2) margins, tail pairwise dependence matrix estimation, a round-robin Jacobi
eigensolver and the softplus maps between data, Frechet and PC spaces.
"""

import logging
from typing import Dict, List, Sequence, Union

import numpy as np

from errors import DataError, NumericalError
from models import CompleteIndex, DataMatrix, FrechetPanel, PcScores, SemiParametricCdf, Tpdm
from services.ingest import IngestService
from services.marginals import MarginalService

logger = logging.getLogger(__name__)

EIG_SLACK = 1e-10
SYMMETRY_TOL = 1e-10
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
SOFTPLUS_SWITCH = 30.0

ArrayLike = Union[np.ndarray, Sequence[float]]


def softplus(v):
    """tau(v) = log(1 + e^v); positive for every real v."""
    v = np.asarray(v, dtype=float)
    with np.errstate(over='ignore'):
        middle = np.log1p(np.exp(np.clip(v, -SOFTPLUS_SWITCH, SOFTPLUS_SWITCH)))
    lower = np.maximum(np.exp(-np.abs(v)), np.finfo(float).tiny)
    return np.where(v > SOFTPLUS_SWITCH, v + np.exp(-np.abs(v)),
                    np.where(v < -SOFTPLUS_SWITCH, lower, middle))


def softplus_inv(x):
    """tau^-1(x) = log(e^x - 1), defined for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise DataError("inverse softplus needs finite positive input", "extremal_pca")
    large = x > SOFTPLUS_SWITCH
    safe = np.where(large, 1.0, x)
    return np.where(large, x + np.log1p(-np.exp(-x)), np.log(np.expm1(safe)))


def _pair_rounds(n: int) -> List:
    """Round-robin schedule: n - 1 (or n) rounds of disjoint (p, q) index pairs covering all pairs."""
    players = list(range(n + n % 2))
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        pairs = [(players[i], players[size - 1 - i]) for i in range(size // 2)]
        pairs = [(min(x, y), max(x, y)) for x, y in pairs if x < n and y < n]
        if pairs:
            p, q = zip(*pairs)
            rounds.append((np.array(p), np.array(q)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


class ExtremalPcaService:
    """Service class for tail dependence estimation and extremal PCA."""

    @staticmethod
    def to_frechet(data: DataMatrix, cdfs: List[SemiParametricCdf],
                   rows: CompleteIndex) -> FrechetPanel:
        """x~ = [-log F(x)]^(-1/2) over complete rows."""
        if len(cdfs) != data.n_sites:
            raise DataError(f"got {len(cdfs)} marginal cdfs for {data.n_sites} sites", "extremal_pca")
        IngestService.guard_complete(data, rows)
        values = ExtremalPcaService.frechet_values(data.values[rows.rows], cdfs, data.site_ids)
        return FrechetPanel(values=values, rows=rows.rows)

    @staticmethod
    def frechet_values(values: np.ndarray, cdfs: List[SemiParametricCdf],
                       site_ids: List[str] = None) -> np.ndarray:
        """Cellwise Frechet transform of an N x K array."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        out = np.empty_like(values)
        for k, cdf in enumerate(cdfs):
            s = MarginalService.cdf_survival(cdf, values[:, k])
            if np.any((s <= 0) | (s >= 1)):
                site = site_ids[k] if site_ids else k
                raise NumericalError(f"cdf of site {site} hit 0 or 1; cannot transform", "extremal_pca")
            out[:, k] = (-np.log1p(-s)) ** -0.5
        return out

    @staticmethod
    def from_frechet(xtilde: ArrayLike, cdfs: List[SemiParametricCdf]) -> np.ndarray:
        """Back-transform Frechet-scale vectors (K or N x K) to data units."""
        xt = np.asarray(xtilde, dtype=float)
        if xt.shape[-1] != len(cdfs):
            raise DataError(f"expected {len(cdfs)} components, got {xt.shape[-1]}", "extremal_pca")
        if np.any(xt <= 0):
            raise DataError("Frechet-scale values must be positive", "extremal_pca")
        s = -np.expm1(-xt ** -2.0)
        s = np.clip(s, np.finfo(float).tiny, np.nextafter(1.0, 0.0))
        out = np.empty_like(xt)
        for k, cdf in enumerate(cdfs):
            out[..., k] = MarginalService.inverse_survival(cdf, s[..., k])
        return out

    @staticmethod
    def eig_sym(matrix: ArrayLike):
        """Jacobi eigendecomposition: (U, D) with D nonincreasing, deterministic signs.

        Each sweep visits every (p, q) pair once, in rounds of disjoint pairs that are
        rotated together.
        """
        a = np.array(matrix, dtype=float, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DataError("eig_sym needs a square matrix", "extremal_pca")
        scale = max(np.abs(a).max(), 1.0)
        if np.abs(a - a.T).max() > SYMMETRY_TOL * scale:
            raise DataError("eig_sym needs a symmetric matrix", "extremal_pca")
        a = 0.5 * (a + a.T)
        n = a.shape[0]
        v = np.eye(n)
        norm = np.linalg.norm(a)
        if norm == 0:
            return v, np.zeros(n)

        rounds = _pair_rounds(n)
        for sweep in range(JACOBI_MAX_SWEEPS):
            off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
            if off <= JACOBI_TOL * norm:
                break
            for p, q in rounds:
                apq = a[p, q]
                live = apq != 0.0
                if not live.any():
                    continue
                theta = np.where(live, (a[q, q] - a[p, p]) / (2.0 * np.where(live, apq, 1.0)), 0.0)
                t = np.where(theta == 0.0, 1.0, np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0)))
                t = np.where(live, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p], a[:, q]
                a[:, p], a[:, q] = c * col_p - s * col_q, s * col_p + c * col_q
                row_p, row_q = a[p, :], a[q, :]
                a[p, :] = c[:, None] * row_p - s[:, None] * row_q
                a[q, :] = s[:, None] * row_p + c[:, None] * row_q
                a[p, q] = a[q, p] = np.where(live, 0.0, a[p, q])
                vec_p, vec_q = v[:, p], v[:, q]
                v[:, p], v[:, q] = c * vec_p - s * vec_q, s * vec_p + c * vec_q
        else:
            raise NumericalError(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps", "extremal_pca")

        eigvals = np.diag(a).copy()
        order = np.argsort(-eigvals, kind='stable')
        eigvals, v = eigvals[order], v[:, order]
        for j in range(n):
            lead = np.argmax(np.abs(v[:, j]))
            if v[lead, j] < 0:
                v[:, j] = -v[:, j]
        return v, eigvals

    @staticmethod
    def estimate_tpdm(panel: FrechetPanel, q_radial: float, r0: float = None) -> Tpdm:
        """Empirical TPDM from the angles of rows whose L2 radius exceeds r0."""
        x = panel.values
        n_sites = panel.n_sites
        radii = np.linalg.norm(x, axis=1)
        if r0 is None:
            r0 = float(np.quantile(radii, q_radial))
        keep = radii > r0
        n_exc = int(keep.sum())
        if n_exc < 2:
            raise DataError(f"only {n_exc} rows exceed the radial threshold {r0:.4g}", "extremal_pca")
        if n_exc < n_sites / 3:
            logger.warning(f"TPDM estimated from {n_exc} extremes for {n_sites} sites")

        omega = x[keep] / radii[keep, None]
        sigma = n_sites / n_exc * (omega.T @ omega)
        sigma = 0.5 * (sigma + sigma.T)
        eigvecs, eigvals = ExtremalPcaService.eig_sym(sigma)
        if eigvals[-1] < -EIG_SLACK:
            raise NumericalError(
                f"TPDM has a negative eigenvalue {eigvals[-1]:.3g}", "extremal_pca")
        eigvals = np.maximum(eigvals, 0.0)
        return Tpdm(sigma=sigma, eigvecs=eigvecs, eigvals=eigvals,
                    r0=r0, n_exc=n_exc, q_radial=q_radial)

    @staticmethod
    def pc_scores(xtilde: Union[FrechetPanel, np.ndarray], tpdm: Tpdm) -> PcScores:
        """v_t = U^T tau^-1(x~_t) for every row."""
        values = xtilde.values if isinstance(xtilde, FrechetPanel) else np.asarray(xtilde, dtype=float)
        return PcScores(v=softplus_inv(values) @ tpdm.eigvecs)

    @staticmethod
    def from_scores(v: np.ndarray, tpdm: Tpdm) -> np.ndarray:
        """tau(sum_j v_j U_.j) row-wise."""
        return softplus(np.asarray(v, dtype=float) @ tpdm.eigvecs.T)

    @staticmethod
    def extreme_rows(panel: FrechetPanel, tpdm: Tpdm) -> np.ndarray:
        """Positions (within the panel) of rows whose radius exceeds r0."""
        return np.flatnonzero(np.linalg.norm(panel.values, axis=1) > tpdm.r0)

    @staticmethod
    def explained_fraction(eigvals: ArrayLike, m: int) -> float:
        """Share of the total scale (trace = K) carried by the leading m eigenvalues."""
        eigvals = np.asarray(eigvals, dtype=float)
        return float(eigvals[:m].sum() / len(eigvals))

    @staticmethod
    def heuristic_m(eigvals: ArrayLike) -> int:
        """Number of eigenvalues above one, kept inside [1, K-1]."""
        eigvals = np.asarray(eigvals, dtype=float)
        return int(np.clip((eigvals > 1.0).sum(), 1, len(eigvals) - 1))

    @staticmethod
    def scree_table(eigvals: ArrayLike) -> List[Dict]:
        eigvals = np.asarray(eigvals, dtype=float)
        cumulative = np.cumsum(eigvals) / len(eigvals)
        return [
            {'j': j + 1, 'eigval': float(lam), 'cumulative_fraction': float(frac)}
            for j, (lam, frac) in enumerate(zip(eigvals, cumulative))
        ]

    @staticmethod
    def reconstruction_error(panel: FrechetPanel, tpdm: Tpdm, m: int) -> np.ndarray:
        """Relative share of tau^-1(x~) outside the leading m eigenvectors, per extreme row."""
        y = softplus_inv(panel.values[ExtremalPcaService.extreme_rows(panel, tpdm)])
        basis = tpdm.eigvecs[:, :m]
        residual = y - (y @ basis) @ basis.T
        return np.linalg.norm(residual, axis=1) / np.linalg.norm(y, axis=1)

    @staticmethod
    def eigenvector_table(tpdm: Tpdm, m: int) -> np.ndarray:
        """K x m block of leading eigenvectors for external mapping."""
        return tpdm.eigvecs[:, :m].copy()
