"""
Marshmallow schemas for hazardset.
Validation of the run configuration and of every JSON artifact written between pipeline stages.
"""

from typing import Dict

from marshmallow import (EXCLUDE, RAISE, Schema, ValidationError, fields, post_load, pre_load,
                         validate, validates_schema)

from config import Config, RunConfig
from errors import ConfigError, DataError

OPEN_UNIT = validate.Range(min=0, max=1, min_inclusive=False, max_inclusive=False)


class IntRangeList(fields.Field):
    """'1-8', '1,3,5' or a list of ints."""

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, (list, tuple)):
            items = list(value)
        else:
            items = []
            for part in str(value).split(','):
                part = part.strip()
                if not part:
                    continue
                if '-' in part:
                    lo, _, hi = part.partition('-')
                    try:
                        lo, hi = int(lo), int(hi)
                    except ValueError:
                        raise ValidationError(f"bad range '{part}'") from None
                    if hi < lo:
                        raise ValidationError(f"empty range '{part}'")
                    items.extend(range(lo, hi + 1))
                else:
                    items.append(part)
        try:
            return [int(x) for x in items]
        except (TypeError, ValueError):
            raise ValidationError("expected integers") from None

    def _serialize(self, value, attr, obj, **kwargs):
        return None if value is None else list(value)


class FloatList(fields.Field):
    """Comma-separated floats or a list."""

    def _deserialize(self, value, attr, data, **kwargs):
        items = value if isinstance(value, (list, tuple)) else [
            part for part in str(value).split(',') if part.strip()]
        try:
            return [float(x) for x in items]
        except (TypeError, ValueError):
            raise ValidationError("expected numbers") from None

    def _serialize(self, value, attr, obj, **kwargs):
        return None if value is None else list(value)


class DimensionField(fields.Field):
    """'auto' or a positive integer."""

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, str) and value.strip().lower() == 'auto':
            return 'auto'
        try:
            m = int(value)
        except (TypeError, ValueError):
            raise ValidationError("m must be 'auto' or an integer") from None
        if m < 1:
            raise ValidationError("m must be at least 1")
        return m

    def _serialize(self, value, attr, obj, **kwargs):
        return value


class RunConfigSchema(Schema):
    """Validates merged run settings into a RunConfig."""

    class Meta:
        unknown = RAISE

    input = fields.String(required=True)
    seed = fields.Integer(required=True, strict=False,
                          validate=validate.Range(min=0, max=2 ** 64 - 1))
    output_dir = fields.String(load_default=Config.OUTPUT_DIR)
    date_column = fields.String(load_default='date')
    period_len = fields.Integer(load_default=1, validate=validate.Range(min=1))
    periods_per_year = fields.Float(load_default=365.25, validate=validate.Range(min=0, min_inclusive=False))
    season_start_month = fields.Integer(load_default=None, allow_none=True, validate=validate.Range(1, 12))
    season_end_month = fields.Integer(load_default=None, allow_none=True, validate=validate.Range(1, 12))
    q_fit = fields.Float(load_default=Config.Q_FIT, validate=OPEN_UNIT)
    q_transform = fields.Float(load_default=Config.Q_TRANSFORM, validate=OPEN_UNIT)
    q_radial = fields.Float(load_default=Config.Q_RADIAL, validate=OPEN_UNIT)
    q_rv = fields.Float(load_default=Config.Q_RV, validate=OPEN_UNIT)
    v_quantile = fields.Float(load_default=Config.V_QUANTILE, validate=OPEN_UNIT)
    min_exceedances = fields.Integer(load_default=Config.MIN_EXCEEDANCES, validate=validate.Range(min=2))
    ht_min_exceedances = fields.Integer(load_default=Config.HT_MIN_EXCEEDANCES, validate=validate.Range(min=2))
    shapes_file = fields.String(load_default=None, allow_none=True)
    shape_draws_file = fields.String(load_default=None, allow_none=True)
    m = DimensionField(load_default='auto')
    m_grid = IntRangeList(load_default=None, allow_none=True)
    n_samples_per_fold = fields.Integer(load_default=Config.N_SAMPLES_PER_FOLD, validate=validate.Range(min=1))
    n_events = fields.Integer(load_default=Config.N_EVENTS)
    n_replicates = fields.Integer(load_default=Config.N_REPLICATES, validate=validate.Range(min=1))
    min_success = fields.Float(load_default=Config.MIN_SUCCESS,
                               validate=validate.Range(min=0, max=1, min_inclusive=False))
    min_radius = fields.String(load_default='0')
    taus = FloatList(load_default=lambda: list(Config.TAUS))
    alpha = fields.Float(load_default=Config.ALPHA, validate=OPEN_UNIT)
    top_k = fields.Integer(load_default=Config.TOP_K, validate=validate.Range(min=1))
    chi_q = fields.Float(load_default=Config.CHI_Q, validate=validate.Range(min=0.5, max=1, min_inclusive=False,
                                                                          max_inclusive=False))
    ht_weights = fields.String(load_default='uniform', validate=validate.OneOf(['uniform', 'rate']))
    generator = fields.String(load_default='epca', validate=validate.OneOf(['epca', 'ht']))
    kappa_max = fields.Float(load_default=Config.KAPPA_MAX, validate=validate.Range(min=0, min_inclusive=False))
    groups = fields.Dict(keys=fields.String(), values=fields.Raw(), load_default=dict)
    jobs = fields.Integer(load_default=Config.JOBS, validate=validate.Range(min=1))

    @pre_load
    def strip_strings(self, data, **kwargs):
        return {k: v.strip() if isinstance(v, str) else v for k, v in data.items()}

    @validates_schema
    def check_consistency(self, data, **kwargs):
        if data.get('m', 'auto') == 'auto' and not data.get('m_grid'):
            raise ValidationError("m_grid must be non-empty when m is 'auto'", 'm_grid')
        if (data.get('season_start_month') is None) != (data.get('season_end_month') is None):
            raise ValidationError("set both season months or neither", 'season_start_month')
        if data.get('n_events', 1) < 1:
            raise ValidationError("n_events must be positive", 'n_events')
        min_radius = data.get('min_radius', '0').lower()
        if min_radius != 'r_v':
            try:
                if float(min_radius) < 0:
                    raise ValueError
            except ValueError:
                raise ValidationError("min_radius must be 0, r_v or a non-negative number",
                                      'min_radius') from None

    @post_load
    def make_config(self, data, **kwargs):
        groups = {}
        for name, members in data['groups'].items():
            if isinstance(members, str):
                members = [s.strip() for s in members.split(',') if s.strip()]
            if not members:
                raise ValidationError(f"group '{name}' has no sites", 'groups')
            groups[name] = list(members)
        data['groups'] = groups
        return RunConfig(**data)

    def load_config(self, merged: Dict) -> RunConfig:
        try:
            return self.load(merged)
        except ValidationError as e:
            details = '; '.join(f"{key}: {' '.join(map(str, msgs)) if isinstance(msgs, list) else msgs}"
                                for key, msgs in sorted(e.normalized_messages().items()))
            raise ConfigError(f"invalid run configuration: {details}", "config") from e


class ArtifactSchema(Schema):
    """Common base: every artifact carries the hash of the config that produced it."""

    class Meta:
        unknown = EXCLUDE

    config_hash = fields.String(required=True)

    def load_artifact(self, payload: Dict, name: str) -> Dict:
        try:
            return self.load(payload)
        except ValidationError as e:
            raise DataError(f"{name} does not match its schema: {e.normalized_messages()}", "cli") from e


class GpdFitSchema(Schema):
    id = fields.String(required=True)
    u = fields.Float(required=True)
    sigma = fields.Float(required=True, validate=validate.Range(min=0, min_inclusive=False))
    xi = fields.Float(required=True)
    rate_per_year = fields.Float(required=True)
    n_exceed = fields.Integer(required=True)
    q_fit = fields.Float(required=True)


class MarginsSchema(ArtifactSchema):
    sites = fields.List(fields.Nested(GpdFitSchema), required=True)


class TpdmSchema(ArtifactSchema):
    k = fields.Integer(required=True)
    sigma = fields.List(fields.Float(), required=True)
    eigvals = fields.List(fields.Float(), required=True)
    eigvecs = fields.List(fields.Float(), required=True)
    r0 = fields.Float(required=True)
    n_exc = fields.Integer(required=True)
    q_radial = fields.Float(required=True)


class ModelManifestSchema(ArtifactSchema):
    m = fields.Integer(required=True, allow_none=True)
    generator = fields.String(required=True, validate=validate.OneOf(['epca', 'ht']))
    kappa = fields.Float(allow_none=True)
    r_V = fields.Float(allow_none=True)
    q_rv = fields.Float(required=True)
    n_angular = fields.Integer(allow_none=True)
    eigvals = fields.List(fields.Float(), required=True)
    explained_fraction = fields.Float(allow_none=True)
    seed = fields.Integer(required=True)
    site_ids = fields.List(fields.String(), required=True)
    margins = fields.String(required=True)
    tpdm = fields.String(required=True)
    m_source = fields.String(required=True)


class EventMetaSchema(ArtifactSchema):
    model_hash = fields.String(required=True)
    seed = fields.Integer(required=True)
    m = fields.Integer(required=True, allow_none=True)
    replicate_id = fields.Integer(required=True)
    n_events = fields.Integer(required=True)
    generator = fields.String(required=True)
    site_ids = fields.List(fields.String(), required=True)
    radii = fields.Dict(keys=fields.String(), values=fields.Float(allow_none=True))
