"""
Panel ingestion for hazardset.
Reads site time-series CSV files into a validated DataMatrix, aggregates period maxima
and tracks which periods are complete across all sites.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from errors import ConfigError, DataError
from models import CompleteIndex, DataMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IngestConfig:
    """Options controlling how a panel file is read."""

    date_column: str = 'date'
    periods_per_year: float = 365.25
    season_start_month: Optional[int] = None
    season_end_month: Optional[int] = None


class IngestService:
    """Service class for reading and reshaping site panels."""

    @staticmethod
    def load_panel(path, config: IngestConfig = None) -> DataMatrix:
        """Parse a CSV with a date column followed by one column per site."""
        config = config or IngestConfig()
        path = Path(path)
        if not path.is_file():
            raise DataError(f"input file not found: {path}", "ingest")

        try:
            raw = pd.read_csv(
                path, header=None, dtype=str, keep_default_na=False,
                skip_blank_lines=True, encoding='utf-8-sig',
            )
        except pd.errors.ParserError as e:
            raise DataError(f"ragged rows in {path}: {e}", "ingest") from e
        except pd.errors.EmptyDataError as e:
            raise DataError(f"{path} is empty", "ingest") from e

        header = [str(name).strip() for name in raw.iloc[0].tolist()]
        IngestService._validate_header(header, config, path)
        body = raw.iloc[1:]
        if body.isna().to_numpy().any():
            first_bad = int(np.flatnonzero(body.isna().to_numpy().any(axis=1))[0]) + 2
            raise DataError(f"ragged row at line {first_bad} of {path}", "ingest")
        if len(body) == 0:
            raise DataError(f"{path} has no data rows", "ingest")

        site_ids = header[1:]
        values, mask = IngestService._parse_cells(body.iloc[:, 1:].to_numpy(dtype=str), site_ids)
        period_index = IngestService._parse_dates(body.iloc[:, 0].tolist(), path)

        keep = IngestService._season_rows(period_index, config)
        values, mask, period_index = values[keep], mask[keep], period_index[keep]
        if not mask.any(axis=1).any():
            raise DataError(f"{path} has zero usable rows", "ingest")

        data = DataMatrix(
            values=np.where(mask, values, 0.0),
            mask=mask,
            site_ids=site_ids,
            period_index=period_index,
            periods_per_year=config.periods_per_year,
        )
        logger.info(f"Loaded {path}: T={data.n_periods}, K={data.n_sites}, "
                    f"{100 * mask.mean():.1f}% cells observed")
        return data

    @staticmethod
    def save_panel(data: DataMatrix, path, date_column: str = 'date') -> None:
        """Write a panel in the same CSV layout load_panel reads."""
        frame = pd.DataFrame(
            [[repr(float(x)) if ok else '' for x, ok in zip(row, row_mask)]
             for row, row_mask in zip(data.values, data.mask)],
            columns=data.site_ids,
        )
        frame.insert(0, date_column, IngestService._format_dates(data.period_index))
        frame.to_csv(path, index=False, lineterminator='\n')

    @staticmethod
    def aggregate_period_maxima(daily: DataMatrix, period_len: int) -> DataMatrix:
        """Block maxima over consecutive runs of period_len rows, using observed rows only."""
        if int(period_len) != period_len or period_len < 1:
            raise ConfigError(f"period_len must be a positive integer, got {period_len}", "ingest")
        period_len = int(period_len)
        if period_len > daily.n_periods:
            raise DataError(
                f"period_len={period_len} exceeds the number of rows ({daily.n_periods})", "ingest")
        if period_len == 1:
            return daily

        n_blocks = daily.n_periods // period_len
        used = n_blocks * period_len
        if used < daily.n_periods:
            logger.info(f"Dropping {daily.n_periods - used} trailing rows that do not fill a block")

        shape = (n_blocks, period_len, daily.n_sites)
        values = daily.values[:used].reshape(shape)
        mask = daily.mask[:used].reshape(shape)
        block_mask = mask.any(axis=1)
        block_max = np.where(mask, values, -np.inf).max(axis=1)
        return DataMatrix(
            values=np.where(block_mask, block_max, 0.0),
            mask=block_mask,
            site_ids=daily.site_ids,
            period_index=daily.period_index[:used:period_len],
            periods_per_year=daily.periods_per_year / period_len,
        )

    @staticmethod
    def complete_rows(data: DataMatrix) -> CompleteIndex:
        """Rows in which every site is observed."""
        rows = np.flatnonzero(data.mask.all(axis=1))
        if len(rows) == 0:
            raise DataError("no period has observations for every site", "ingest")
        index = CompleteIndex(rows=rows, n_total=data.n_periods)
        logger.info(f"Complete rows: {len(rows)} of {data.n_periods} ({100 * index.fraction:.1f}%)")
        return index

    @staticmethod
    def guard_complete(data: DataMatrix, index: CompleteIndex) -> None:
        """Debug guard for consumers of complete rows."""
        assert data.mask[index.rows].all(), "complete-row index points at a masked cell"

    @staticmethod
    def _validate_header(header: List[str], config: IngestConfig, path: Path) -> None:
        if len(header) < 3:
            raise DataError(f"{path} needs a date column and at least 2 site columns", "ingest")
        if header[0] != config.date_column:
            raise DataError(
                f"malformed header in {path}: first column must be '{config.date_column}', "
                f"got '{header[0]}'", "ingest")
        sites = header[1:]
        if any(not name for name in sites):
            raise DataError(f"malformed header in {path}: empty site name", "ingest")
        duplicates = sorted({name for name in sites if sites.count(name) > 1})
        if duplicates:
            raise DataError(f"duplicated site columns in {path}: {', '.join(duplicates)}", "ingest")

    @staticmethod
    def _parse_cells(cells: np.ndarray, site_ids: List[str]):
        stripped = np.char.strip(cells)
        mask = stripped != ''
        values = np.zeros(cells.shape, dtype=float)
        for t, k in zip(*np.nonzero(mask)):
            try:
                x = float(stripped[t, k])
            except ValueError:
                raise DataError(
                    f"non-numeric value '{stripped[t, k]}' at data row {t + 1}, site {site_ids[k]}",
                    "ingest") from None
            if not np.isfinite(x):
                raise DataError(f"non-finite value at data row {t + 1}, site {site_ids[k]}", "ingest")
            values[t, k] = x
        return values, mask

    @staticmethod
    def _parse_dates(raw: List[str], path: Path) -> pd.Index:
        stripped = [s.strip() for s in raw]
        try:
            return pd.Index([int(s) for s in stripped])
        except ValueError:
            pass
        try:
            return pd.DatetimeIndex(pd.to_datetime(stripped, format='ISO8601'))
        except (ValueError, TypeError) as e:
            raise DataError(f"unparseable date column in {path}: {e}", "ingest") from e

    @staticmethod
    def period_labels(data: DataMatrix, rows) -> List[str]:
        """Date (or ordinal) labels of the given rows, formatted as in the input file."""
        return IngestService._format_dates(data.period_index[np.asarray(rows, dtype=int)])

    @staticmethod
    def _format_dates(index: pd.Index) -> List[str]:
        if isinstance(index, pd.DatetimeIndex):
            if (index == index.normalize()).all():
                return [ts.strftime('%Y-%m-%d') for ts in index]
            return [ts.isoformat() for ts in index]
        return [str(x) for x in index]

    @staticmethod
    def _season_rows(index: pd.Index, config: IngestConfig) -> np.ndarray:
        start, end = config.season_start_month, config.season_end_month
        if start is None and end is None:
            return np.ones(len(index), dtype=bool)
        if start is None or end is None:
            raise ConfigError("season filter needs both start and end months", "ingest")
        if not isinstance(index, pd.DatetimeIndex):
            raise ConfigError("season filter requires calendar dates, not ordinals", "ingest")
        months = np.asarray(index.month)
        if start <= end:
            return (months >= start) & (months <= end)
        return (months >= start) | (months <= end)
