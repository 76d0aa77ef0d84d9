"""
Synthetic data command for hazardset.
Writes a max-linear panel with a known TPDM for acceptance runs.
"""

import logging
from pathlib import Path

import click
import pandas as pd

from commands import artifacts
from errors import HazardSetError
from services import IngestService, SyntheticService, substream

logger = logging.getLogger(__name__)


@click.command('simulate-synthetic')
@click.option('--output', 'output', required=True, type=click.Path(dir_okay=False),
              help='panel CSV to write')
@click.option('--truth', 'truth_path', type=click.Path(dir_okay=False),
              help='optional CSV for the true TPDM A A^T')
@click.option('--sites', default=10, show_default=True, type=click.IntRange(min=2))
@click.option('--factors', default=5, show_default=True, type=click.IntRange(min=1))
@click.option('--rows', default=20000, show_default=True, type=click.IntRange(min=2))
@click.option('--noise', default=0.0, show_default=True, type=click.FloatRange(min=0))
@click.option('--missing', default=0.0, show_default=True, type=click.FloatRange(0, 1, max_open=True),
              help='probability that a cell is left empty')
@click.option('--periods-per-year', default=52.0, show_default=True, type=float)
@click.option('--seed', required=True, type=int)
def simulate_synthetic_command(output, truth_path, sites, factors, rows, noise, missing,
                               periods_per_year, seed):
    """Simulate X_i = max_j a_ij Z_j with Frechet(2) factors."""
    rng = substream(seed, 'synthetic', 0)
    try:
        data, truth = SyntheticService.max_linear_panel(
            sites, factors, rows, rng, noise=noise, periods_per_year=periods_per_year, missing=missing)
    except HazardSetError as e:
        logger.error(f"Simulation failed: {e}")
        raise
    Path(output).parent.mkdir(parents=True, exist_ok=True)
    IngestService.save_panel(data, output)
    if truth_path:
        frame = pd.DataFrame(truth, columns=data.site_ids)
        frame.insert(0, 'site_id', data.site_ids)
        artifacts.write_csv(truth_path, frame)
    click.echo(f"Wrote {rows} x {sites} max-linear panel to {output}")
