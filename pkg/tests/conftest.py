"""
Shared fixtures for the hazardset test suite.
"""

import numpy as np
import pytest

from services import ExtremalPcaService, IngestService, MarginalService, SyntheticService


@pytest.fixture
def rng():
    """Fresh seeded generator for each test."""
    return np.random.default_rng(20240611)


@pytest.fixture(scope='session')
def max_linear():
    """Six sites driven by three Frechet factors, with the true TPDM."""
    data, truth = SyntheticService.max_linear_panel(6, 3, 3000, np.random.default_rng(7))
    return data, truth


@pytest.fixture(scope='session')
def fitted(max_linear):
    """Margins, Frechet panel and TPDM fitted to the max-linear panel."""
    data, truth = max_linear
    fits, cdfs = MarginalService.fit_two_step(data, 0.94, 0.96)
    rows = IngestService.complete_rows(data)
    panel = ExtremalPcaService.to_frechet(data, cdfs, rows)
    tpdm = ExtremalPcaService.estimate_tpdm(panel, 0.94)
    return {'data': data, 'truth': truth, 'fits': fits, 'cdfs': cdfs, 'panel': panel, 'tpdm': tpdm}
