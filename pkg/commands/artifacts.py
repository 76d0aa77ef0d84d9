"""
Artifact I/O for hazardset commands.
Deterministic JSON and CSV writers plus readers that validate against the marshmallow schemas.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from errors import DataError
from models import EventSet, GpdFit, Tpdm
from schemas import EventMetaSchema, MarginsSchema, ModelManifestSchema, TpdmSchema

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
EVENTS_DIR = 'events'


def _plain(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_json(path, payload: Dict) -> Path:
    """Sorted keys, fixed indentation, trailing newline."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2, default=_plain) + '\n',
                    encoding='utf-8')
    logger.debug(f"Wrote {path}")
    return path


def read_json(path) -> Dict:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"artifact not found: {path}", "cli")
    try:
        return json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise DataError(f"{path} is not valid JSON: {e}", "cli") from e


def write_csv(path, frame: pd.DataFrame, config_hash: Optional[str] = None) -> Path:
    """Fixed float format; a config_hash column is appended when given."""
    path = Path(path)
    if config_hash is not None:
        frame = frame.assign(config_hash=config_hash)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    logger.debug(f"Wrote {path}")
    return path


def write_margins(output_dir, fits: List[GpdFit], config_hash: str) -> Path:
    return write_json(Path(output_dir) / 'margins.json',
                      {'config_hash': config_hash, 'sites': [fit.to_dict() for fit in fits]})


def read_margins(output_dir) -> Dict:
    return MarginsSchema().load_artifact(read_json(Path(output_dir) / 'margins.json'), 'margins.json')


def write_tpdm(output_dir, tpdm: Tpdm, config_hash: str) -> Path:
    payload = tpdm.to_dict()
    payload.update({'config_hash': config_hash, 'k': tpdm.n_sites})
    return write_json(Path(output_dir) / 'tpdm.json', payload)


def read_tpdm(output_dir) -> Dict:
    return TpdmSchema().load_artifact(read_json(Path(output_dir) / 'tpdm.json'), 'tpdm.json')


def write_manifest(output_dir, manifest: Dict) -> Path:
    return write_json(Path(output_dir) / 'model.json', manifest)


def read_manifest(output_dir) -> Dict:
    return ModelManifestSchema().load_artifact(read_json(Path(output_dir) / 'model.json'), 'model.json')


def event_paths(output_dir, replicate_id: int):
    base = Path(output_dir) / EVENTS_DIR / f'events_r{replicate_id:03d}'
    return base.with_suffix('.csv'), base.with_suffix('.meta.json')


def write_event_set(output_dir, event_set: EventSet, config_hash: str, model_hash: str) -> Path:
    csv_path, meta_path = event_paths(output_dir, event_set.replicate_id)
    write_csv(csv_path, pd.DataFrame(event_set.events, columns=event_set.site_ids))
    meta = event_set.meta()
    meta.update({'config_hash': config_hash, 'model_hash': model_hash})
    write_json(meta_path, meta)
    return csv_path


def read_event_set(csv_path):
    """(events, site_ids, meta) for one event-set CSV and its sidecar."""
    csv_path = Path(csv_path)
    if not csv_path.is_file():
        raise DataError(f"event set not found: {csv_path}", "cli")
    frame = pd.read_csv(csv_path)
    meta_path = csv_path.with_suffix('.meta.json')
    meta = EventMetaSchema().load_artifact(read_json(meta_path), meta_path.name)
    site_ids = [str(c) for c in frame.columns]
    if site_ids != list(meta['site_ids']):
        raise DataError(f"{csv_path.name}: header does not match its metadata", "cli")
    return frame.to_numpy(dtype=float), site_ids, meta
