"""
Pipeline commands for hazardset.
fit, select-m, generate and diagnose, each reading the run config and writing artifacts
into the output directory.
"""

import glob
import logging
from dataclasses import dataclass
from functools import wraps
from pathlib import Path
from typing import Dict, List, Optional

import click
import numpy as np
import pandas as pd

from commands import artifacts
from config import RunConfig, load_run_config
from errors import ConfigError, DataError, HazardSetError
from models import DataMatrix, FrechetPanel, GeneratorModel, GpdFit, SemiParametricCdf, Tpdm
from services import (DiagnosticsService, ExtremalPcaService, FitSettings, GeneratorService,
                      HtBaselineService, IngestConfig, IngestService, MarginalService,
                      ResamplingService, substream)

logger = logging.getLogger(__name__)

pipeline_commands = []


@dataclass
class FittedState:
    """Deterministic refit shared by every pipeline command."""

    run: RunConfig
    data: DataMatrix
    fits: List[GpdFit]
    cdfs: List[SemiParametricCdf]
    panel: FrechetPanel
    tpdm: Tpdm

    @property
    def settings(self) -> FitSettings:
        return fit_settings(self.run)


def fit_settings(run: RunConfig) -> FitSettings:
    return FitSettings(q_fit=run.q_fit, q_transform=run.q_transform, q_radial=run.q_radial,
                       q_rv=run.q_rv, min_exceedances=run.min_exceedances, kappa_max=run.kappa_max)


def run_options(f):
    """Flags mirroring RunConfig; they override values from --config."""
    options = [
        click.option('--config', 'config_path', type=click.Path(dir_okay=False),
                     help='key=value run-config file'),
        click.option('--input', 'input', help='panel CSV (date column + one column per site)'),
        click.option('--output-dir', help='directory for artifacts'),
        click.option('--seed', type=int, help='master seed'),
        click.option('--m', 'm', help="reduced dimension or 'auto'"),
        click.option('--m-grid', help="candidate dimensions, e.g. '1-8'"),
        click.option('--n-events', type=int),
        click.option('--n-replicates', type=int),
        click.option('--n-samples-per-fold', type=int),
        click.option('--generator', type=click.Choice(['epca', 'ht'])),
        click.option('--min-radius', help="0, r_v or a radius"),
        click.option('--period-len', type=int),
        click.option('--q-fit', type=float),
        click.option('--q-transform', type=float),
        click.option('--q-radial', type=float),
        click.option('--q-rv', type=float),
        click.option('--v-quantile', type=float),
        click.option('--jobs', type=int, help='worker processes for folds and replicates'),
    ]
    for option in reversed(options):
        f = option(f)

    @wraps(f)
    def wrapper(config_path, **kwargs):
        overrides = {k: v for k, v in kwargs.items() if k in RunConfig.__dataclass_fields__}
        rest = {k: v for k, v in kwargs.items() if k not in RunConfig.__dataclass_fields__}
        try:
            run = load_run_config(config_path, overrides)
            logger.info(f"Run config {run.config_hash[:12]} (seed {run.seed})")
            return f(run, **rest)
        except HazardSetError as e:
            logger.error(f"{f.__name__.replace('_command', '').replace('_', '-')} failed: {e}")
            raise

    return wrapper


def load_data(run: RunConfig) -> DataMatrix:
    ingest = IngestConfig(date_column=run.date_column, periods_per_year=run.periods_per_year,
                          season_start_month=run.season_start_month,
                          season_end_month=run.season_end_month)
    data = IngestService.load_panel(run.input, ingest)
    return IngestService.aggregate_period_maxima(data, run.period_len)


def load_shapes(run: RunConfig) -> Optional[Dict[str, float]]:
    """Site shapes from a CSV with columns id, xi."""
    if not run.shapes_file:
        return None
    frame = _read_table(run.shapes_file)
    if not {'id', 'xi'} <= set(frame.columns):
        raise ConfigError(f"{run.shapes_file} needs columns 'id' and 'xi'", "cli")
    return {str(site): float(xi) for site, xi in zip(frame['id'], frame['xi'])}


def load_shape_draws(run: RunConfig, site_ids: List[str]) -> Optional[List[List[float]]]:
    """Per-replicate shapes: one row per replicate, one column per site."""
    if not run.shape_draws_file:
        return None
    frame = _read_table(run.shape_draws_file)
    missing = [s for s in site_ids if s not in frame.columns]
    if missing:
        raise ConfigError(f"{run.shape_draws_file} lacks sites: {', '.join(missing)}", "cli")
    return frame[site_ids].to_numpy(dtype=float).tolist()


def _read_table(path) -> pd.DataFrame:
    if not Path(path).is_file():
        raise ConfigError(f"file not found: {path}", "cli")
    return pd.read_csv(path)


def prepare(run: RunConfig) -> FittedState:
    """Ingest, fit margins and estimate the TPDM."""
    data = load_data(run)
    fits, cdfs = MarginalService.fit_two_step(
        data, run.q_fit, run.q_transform, fixed_shapes=load_shapes(run),
        min_exceedances=run.min_exceedances)
    rows = IngestService.complete_rows(data)
    panel = ExtremalPcaService.to_frechet(data, cdfs, rows)
    tpdm = ExtremalPcaService.estimate_tpdm(panel, run.q_radial)
    return FittedState(run=run, data=data, fits=fits, cdfs=cdfs, panel=panel, tpdm=tpdm)


def build_model(state: FittedState, m: int) -> GeneratorModel:
    if not 1 <= m <= state.data.n_sites - 1:
        raise ConfigError(f"m must lie in [1, {state.data.n_sites - 1}], got {m}", "cli")
    return GeneratorService.fit_generator(
        state.panel, state.tpdm, state.cdfs, state.data.site_ids, m, state.run.q_rv,
        kappa_max=state.run.kappa_max)


def manifest_for(state: FittedState, model: Optional[GeneratorModel], m_source: str) -> Dict:
    run = state.run
    eigvals = state.tpdm.eigvals
    m = model.m if model is not None else None
    return {
        'config_hash': run.model_hash,
        'generator': run.generator,
        'm': m,
        'm_source': m_source,
        'kappa': model.kernel.kappa if model is not None else None,
        'r_V': model.angular.r_v if model is not None else None,
        'n_angular': model.angular.n if model is not None else None,
        'q_rv': run.q_rv,
        'eigvals': eigvals.tolist(),
        'explained_fraction': ExtremalPcaService.explained_fraction(eigvals, m) if m else None,
        'seed': run.seed,
        'site_ids': state.data.site_ids,
        'margins': 'margins.json',
        'tpdm': 'tpdm.json',
    }


def format_scree(eigvals, m: int) -> str:
    """Eigenvalue table with cumulative explained scale and the share carried by m components."""
    lines = [f"{'j':>3}  {'eigval':>10}  {'cum. fraction':>13}"]
    for row in ExtremalPcaService.scree_table(eigvals):
        lines.append(f"{row['j']:>3}  {row['eigval']:>10.4f}  {100 * row['cumulative_fraction']:>12.1f}%")
    fraction = ExtremalPcaService.explained_fraction(eigvals, m)
    lines.append(f"explained scale with m={m}: {100 * fraction:.1f}%")
    return '\n'.join(lines)


def _check_hash(found: str, expected: str, name: str, force: bool = False) -> None:
    if found == expected:
        return
    message = f"{name} was produced by model config {found[:12]}, current model config is {expected[:12]}"
    if force:
        logger.warning(f"{message}; continuing because of --force")
        return
    raise DataError(message, "cli")


@click.command('fit')
@run_options
def fit_command(run: RunConfig):
    """Fit margins, the TPDM and the generator; write margins.json, tpdm.json and model.json."""
    state = prepare(run)
    out = Path(run.output_dir)
    artifacts.write_margins(out, state.fits, run.model_hash)
    artifacts.write_tpdm(out, state.tpdm, run.model_hash)

    if run.m == 'auto':
        m, source = ExtremalPcaService.heuristic_m(state.tpdm.eigvals), 'heuristic'
    else:
        m, source = run.m, 'config'
    model = build_model(state, m) if run.generator == 'epca' else None
    artifacts.write_manifest(out, manifest_for(state, model, source))

    table = pd.DataFrame(ExtremalPcaService.eigenvector_table(state.tpdm, m),
                         columns=[f'pc{j + 1}' for j in range(m)])
    table.insert(0, 'site_id', state.data.site_ids)
    artifacts.write_csv(out / 'eigenvectors.csv', table, run.model_hash)

    # events poorly explained by m components
    extremes = ExtremalPcaService.extreme_rows(state.panel, state.tpdm)
    screening = pd.DataFrame({
        'period': IngestService.period_labels(state.data, state.panel.rows[extremes]),
        'radius': np.linalg.norm(state.panel.values[extremes], axis=1),
        'error': ExtremalPcaService.reconstruction_error(state.panel, state.tpdm, m),
    }).sort_values('error', ascending=False, kind='stable')
    artifacts.write_csv(out / 'reconstruction_error.csv', screening, run.model_hash)

    click.echo(format_scree(state.tpdm.eigvals, m))
    click.echo(f"TPDM from {state.tpdm.n_exc} extremes (r0={state.tpdm.r0:.4g}); artifacts in {out}")


@click.command('select-m')
@run_options
def select_m_command(run: RunConfig):
    """Choose m by leave-one-extreme-out cross-validation; write select_m.csv and update model.json."""
    grid = run.m_grid if run.m_grid else ([run.m] if run.m != 'auto' else [])
    if not grid:
        raise ConfigError("m_grid is empty", "cli")
    state = prepare(run)
    result = ResamplingService.select_m(
        state.panel, state.tpdm, grid, run.n_samples_per_fold, run.seed, run.q_rv,
        kappa_max=run.kappa_max, jobs=run.jobs)
    out = Path(run.output_dir)
    artifacts.write_csv(out / 'select_m.csv', pd.DataFrame(result.rows()), run.model_hash)
    model = build_model(state, result.m_opt) if run.generator == 'epca' else None
    manifest = manifest_for(state, model, 'select_m')
    manifest['m'] = result.m_opt
    artifacts.write_margins(out, state.fits, run.model_hash)
    artifacts.write_tpdm(out, state.tpdm, run.model_hash)
    artifacts.write_manifest(out, manifest)
    for row in result.rows():
        click.echo(f"m={row['m']:>3}  D={row['d_bar']:.4f}  [{row['lo']:.4f}, {row['hi']:.4f}]")
    click.echo(f"chosen m = {result.m_opt}")


@click.command('generate')
@run_options
def generate_command(run: RunConfig):
    """Generate n_replicates event sets of n_events rows plus summary.json."""
    out = Path(run.output_dir)
    manifest = artifacts.read_manifest(out)
    _check_hash(manifest['config_hash'], run.model_hash, 'model.json')
    if manifest['generator'] != run.generator:
        raise DataError(f"model.json was fitted for generator '{manifest['generator']}'", "cli")

    state = prepare(run)
    if manifest['site_ids'] != state.data.site_ids:
        raise DataError("model.json site ids do not match the input panel", "cli")
    # fail on an unusable return-period ladder before generating
    DiagnosticsService.return_level_table(state.fits, run.taus)

    if run.generator == 'ht':
        sets = _generate_ht(state)
    else:
        sets = _generate_epca(state, manifest['m'])

    for event_set in sets:
        artifacts.write_event_set(out, event_set, run.config_hash, run.model_hash)
    summary = summarize(sets, state.fits, run.taus)
    summary['config_hash'] = run.config_hash
    artifacts.write_json(out / 'summary.json', summary)
    click.echo(f"Wrote {len(sets)} event sets of {run.n_events} events to {out / artifacts.EVENTS_DIR}")


def _generate_epca(state: FittedState, m: int):
    run = state.run
    if m is None:
        raise DataError("model.json has no dimension m for the epca generator", "cli")
    model = build_model(state, m)
    if run.n_replicates == 1:
        radius = GeneratorService.resolve_min_radius(model, run.min_radius)
        return [GeneratorService.generate(model, run.n_events, substream(run.seed, 'generate', 0),
                                          seed=run.seed, replicate_id=0, min_radius=radius)]
    return ResamplingService.bootstrap_generate(
        state.data, state.settings, m, run.n_replicates, run.n_events, run.seed,
        point_fits=state.fits, shape_draws=load_shape_draws(run, state.data.site_ids),
        min_radius=run.min_radius, jobs=run.jobs, min_success=run.min_success)


def _generate_ht(state: FittedState):
    run = state.run
    rows = IngestService.complete_rows(state.data)
    model = HtBaselineService.fit_ht_model(
        state.data.values[rows.rows], state.cdfs, state.data.site_ids, run.v_quantile,
        run.ht_min_exceedances, run.ht_weights)
    return [HtBaselineService.ht_generate(model, run.n_events, substream(run.seed, 'generate', r),
                                          seed=run.seed, replicate_id=r)
            for r in range(run.n_replicates)]


def summarize(sets, fits: List[GpdFit], taus) -> Dict:
    """Per-site maxima, severity counts and sites reaching each return period."""
    pooled = np.vstack([s.events for s in sets])
    site_ids = [fit.site_id for fit in fits]
    counts = {str(t): 0 for t in taus}
    counts['none'] = 0
    for s in sets:
        for key, value in DiagnosticsService.severity_counts(s.events, fits, taus).items():
            counts[key] += value
    return {
        'n_sets': len(sets),
        'n_events': int(sets[0].n_events),
        'per_site_max': dict(zip(site_ids, pooled.max(axis=0).tolist())),
        'severity_counts': counts,
        'sites_exceeding': {
            str(t): [DiagnosticsService.sites_exceeding(s.events, fits, t) for s in sets] for t in taus
        },
    }


@click.command('diagnose')
@run_options
@click.option('--events', 'events_glob', default=None,
              help='glob of event-set CSVs (default: <output_dir>/events/*.csv)')
@click.option('--group', 'group_names', multiple=True, help='restrict to these named groups')
@click.option('--force', is_flag=True, help='accept event sets from a different config')
@click.option('--json', 'as_json', is_flag=True, help='also write diagnostics.json')
def diagnose_command(run: RunConfig, events_glob, group_names, force, as_json):
    """Compare observed data with generated event sets."""
    out = Path(run.output_dir)
    pattern = events_glob or str(out / artifacts.EVENTS_DIR / 'events_r*.csv')
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise DataError(f"no event sets match {pattern}", "cli")

    state = prepare(run)
    site_ids = state.data.site_ids
    sets = []
    for path in paths:
        events, ids, meta = artifacts.read_event_set(path)
        if ids != site_ids:
            raise DataError(f"{Path(path).name}: site ids do not match the observed panel", "cli")
        _check_hash(meta['model_hash'], run.model_hash, Path(path).name, force)
        sets.append(events)

    groups = _resolve_groups(run, group_names, site_ids)
    qq_rows = []
    for k, site in enumerate(site_ids):
        observed = DiagnosticsService.top_order_stats(state.data.observed(k), run.top_k)
        band = DiagnosticsService.qq_band(observed, [s[:, k] for s in sets], run.alpha)
        qq_rows += [dict(row, subject=site) for row in DiagnosticsService.band_rows('site_max', band)]

    complete = state.data.values[IngestService.complete_rows(state.data).rows]
    for name, members in groups.items():
        obs_max, obs_l2 = DiagnosticsService.group_summaries(complete, members)
        sim = [DiagnosticsService.group_summaries(s, members) for s in sets]
        for statistic, observed, simulated in (('group_max', obs_max, [g[0] for g in sim]),
                                               ('group_l2', obs_l2, [g[1] for g in sim])):
            band = DiagnosticsService.qq_band(
                DiagnosticsService.top_order_stats(observed, run.top_k), simulated, run.alpha)
            qq_rows += [dict(row, subject=name) for row in DiagnosticsService.band_rows(statistic, band)]

    chi_rows = _chi_rows(complete, np.vstack(sets), site_ids, run.chi_q)
    severity_rows = _severity_rows(state, np.vstack(sets), run.taus)

    columns = ['statistic', 'subject', 'rank', 'observed', 'lo', 'med', 'hi', 'covered']
    artifacts.write_csv(out / 'diagnostics.csv', pd.DataFrame(qq_rows, columns=columns), run.config_hash)
    artifacts.write_csv(out / 'chi.csv', pd.DataFrame(chi_rows), run.config_hash)
    artifacts.write_csv(out / 'severity.csv', pd.DataFrame(severity_rows), run.config_hash)
    if as_json:
        artifacts.write_json(out / 'diagnostics.json', {
            'config_hash': run.config_hash, 'qq': qq_rows, 'chi': chi_rows, 'severity': severity_rows})
    coverage = np.mean([row['covered'] for row in qq_rows])
    click.echo(f"{len(sets)} event sets, {len(qq_rows)} band rows, mean coverage {100 * coverage:.1f}%")


def _resolve_groups(run: RunConfig, names, site_ids: List[str]) -> Dict[str, List[int]]:
    selected = list(names) or sorted(run.groups)
    groups = {}
    for name in selected:
        if name not in run.groups:
            raise ConfigError(f"group '{name}' is not defined in the run config", "cli")
        unknown = [s for s in run.groups[name] if s not in site_ids]
        if unknown:
            raise ConfigError(f"group '{name}' names unknown sites: {', '.join(unknown)}", "cli")
        groups[name] = [site_ids.index(s) for s in run.groups[name]]
    return groups


def _chi_rows(observed, simulated, site_ids: List[str], q: float) -> List[Dict]:
    obs = DiagnosticsService.chi_table(observed, q)
    sim = DiagnosticsService.chi_table(simulated, q)
    return [
        {'site_i': site_ids[a.i], 'site_j': site_ids[a.j], 'q': q,
         'chi_observed': a.chi, 'n_joint_observed': a.n_joint, 'reliable_observed': a.reliable,
         'chi_simulated': b.chi, 'n_joint_simulated': b.n_joint, 'reliable_simulated': b.reliable}
        for a, b in zip(obs, sim)
    ]


def _severity_rows(state: FittedState, pooled: np.ndarray, taus, n_top: int = 10) -> List[Dict]:
    xtilde = ExtremalPcaService.frechet_values(pooled, state.cdfs, state.data.site_ids)
    levels = DiagnosticsService.return_level_table(state.fits, taus)
    rows = []
    for rank, idx in enumerate(DiagnosticsService.top_events(xtilde, min(n_top, len(pooled)))):
        severity = DiagnosticsService.classify_severity(pooled[idx], state.fits, taus, levels)
        rows += [{'rank': rank + 1, 'event': int(idx), 'site_id': site,
                  'tau': '' if cls is None else cls}
                 for site, cls in zip(severity.site_ids, severity.classes)]
    return rows


pipeline_commands.extend([fit_command, select_m_command, generate_command, diagnose_command])
