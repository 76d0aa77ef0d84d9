"""
Services package for hazardset.
One service class per pipeline stage: ingest, marginal tails, extremal PCA, spherical
kernels, event generation, resampling, diagnostics and the conditional-extremes baseline.
"""

from services.ingest import IngestConfig, IngestService
from services.marginals import MarginalService
from services.extremal_pca import ExtremalPcaService
from services.spherical import SphericalService
from services.generator import FitSettings, GeneratorService
from services.resampling import ResamplingService, substream
from services.diagnostics import DiagnosticsService
from services.ht_baseline import HtBaselineService
from services.synthetic import SyntheticService

__all__ = [
    'IngestConfig',
    'IngestService',
    'MarginalService',
    'ExtremalPcaService',
    'SphericalService',
    'FitSettings',
    'GeneratorService',
    'ResamplingService',
    'substream',
    'DiagnosticsService',
    'HtBaselineService',
    'SyntheticService',
]
