"""Scenario replications, the case-study pipeline and result tables.

Every random draw comes from a stream addressed by (seed, stream, index), so
a replication gives the same numbers whatever the thread layout, and a run
extended from R1 to R2 replications reproduces a fresh run at R2.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd

from geokrige import log, settings
from geokrige.evaluation import (INDEX_MODES, build_index, point_metrics,
                                 quintile_breaks, quintile_reliability,
                                 reliability, residual_summary, summarize,
                                 theoretical_breaks)
from geokrige.kriging import NeighborhoodSpec, krige_batch
from geokrige.random_field import (grid_size, sample_observations,
                                   select_test_points, simulate_grf,
                                   simulate_multivariate_grf)
from geokrige.spatial import SpatialDataset, build_spatial_index, count_within
from geokrige.utils import (ConfigError, DataError, parse_key_values,
                            resolve_threads, rng_stream, write_csv)
from geokrige.variogram import (ExponentialVariogramModel,
                                empirical_cross_variogram,
                                empirical_variogram, fallback_initial,
                                fit_exponential_wls, fit_lmc, practical_range,
                                validate_model)
from geokrige.variogram.lmc import cross_pairs

__all__ = ('ScenarioConfig', 'CaseStudyConfig', 'ScenarioResult',
           'CaseStudyResult', 'run_scenario', 'run_case_study',
           'emit_plot_data', 'load_case_study_frame', 'fit_screened',
           'fit_screened_lmc', 'PLOT_KINDS')

#: Kinds of plot data emit_plot_data knows
PLOT_KINDS = ('variogram', 'bias_by_range', 'quintile_reliability')

# Random streams under a scenario seed
STREAM_TEST_POINTS = 1
STREAM_REPLICATION = 2
STREAM_KNOWN_POINTS = 3

_TRUE_WORDS = ('1', 'true', 'yes', 'on')
_FALSE_WORDS = ('0', 'false', 'no', 'off')


def _convert(name, text, default):
    """Convert a configuration string to the type of ``default``."""
    # pylint: disable=too-many-return-statements
    text = text.strip()
    try:
        if isinstance(default, bool):
            if text.lower() in _TRUE_WORDS:
                return True
            if text.lower() in _FALSE_WORDS:
                return False
            raise ValueError(text)
        if isinstance(default, tuple):
            template = default[0] if default else 0
            return tuple(_convert(name, item, template)
                         for item in text.split(',') if item.strip())
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError:
        if isinstance(default, (int, float)) and text == 'all':
            return text
        raise ConfigError(f'invalid value {text!r} for {name}') from None


class _ConfigMixin:
    """Parsing of flat ``key = value`` files into frozen dataclasses."""

    @classmethod
    def from_mapping(cls, values, overrides=None):
        """Build a config from string values, then typed overrides."""
        defaults = {item.name: item.default for item in fields(cls)}
        merged = {}
        for key, value in {**values, **(overrides or {})}.items():
            key = key.replace('-', '_')
            if key not in defaults:
                raise ConfigError(f'unknown configuration key {key!r}')
            if value is None:
                continue
            merged[key] = _convert(key, value, defaults[key]) \
                if isinstance(value, str) else value
        config = cls(**merged)
        config.validate()
        return config

    @classmethod
    def from_text(cls, text, overrides=None):
        """Build a config from the text of a ``key = value`` file."""
        return cls.from_mapping(parse_key_values(text), overrides)

    @classmethod
    def from_file(cls, path, overrides=None):
        """Build a config from a ``key = value`` file."""
        try:
            text = Path(path).read_text(encoding='utf8')
        except OSError as error:
            raise ConfigError(f'cannot read {path}: {error}') from None
        return cls.from_text(text, overrides)

    def as_header(self):
        """Return the resolved configuration as ordered strings."""
        header = {}
        for item in fields(self):
            value = getattr(self, item.name)
            if isinstance(value, tuple):
                value = ','.join(str(part) for part in value)
            header[item.name] = value
        return header


@dataclass(frozen=True)
class ScenarioConfig(_ConfigMixin):
    """One simulation scenario.

    ``n_replications`` of 0 means 5000 univariate, 1000 multivariate.
    ``n_per_variable`` sets the heterotopic sample size of each variable and
    defaults to ``n_sample_points`` for all.
    """

    # pylint: disable=too-many-instance-attributes
    name: str = 'scenario'
    extent_m: float = 8000.0
    resolution_m: float = settings.GRID_RESOLUTION
    range_m: float = 600.0
    nugget: float = 0.0
    partial_sill: float = 1.0
    n_sample_points: int = 2300
    n_test_points: int = settings.N_TEST_POINTS
    n_replications: int = 0
    variogram_mode: str = 'estimated'
    max_vgm_dist_m: float = settings.MAX_VGM_DIST
    n_bins: int = settings.N_BINS
    allow_nugget: bool = True
    refit_invalid: bool = True
    censor_invalid: bool = False
    multivariate: bool = False
    correlation: float = 0.5
    sampling: str = 'collocated'
    n_per_variable: tuple = ()
    index_mode: str = 'sum'
    max_points: int = settings.NEIGHBORHOOD_MAX_POINTS
    max_radius_m: float = settings.NEIGHBORHOOD_MAX_RADIUS
    min_points: int = settings.NEIGHBORHOOD_MIN_POINTS
    force_neighbors: bool = False
    breaks: str = 'test_points'
    count_radius_m: float = 250.0
    seed: int = 1

    def validate(self):
        """Raise ConfigError unless the scenario is feasible."""
        # pylint: disable=too-many-branches
        for name in ('extent_m', 'resolution_m', 'range_m', 'partial_sill',
                     'max_vgm_dist_m', 'max_radius_m', 'count_radius_m'):
            if not getattr(self, name) > 0:
                raise ConfigError(f'{name} must be positive')
        for name in ('n_sample_points', 'n_test_points', 'n_bins',
                     'max_points', 'min_points'):
            if getattr(self, name) < 1:
                raise ConfigError(f'{name} must be positive')
        if self.n_replications < 0 or self.n_replications == 1:
            raise ConfigError('n_replications must be at least 2')
        if self.nugget < 0:
            raise ConfigError('nugget must be non-negative')
        if self.variogram_mode not in ('estimated', 'fixed'):
            raise ConfigError(f'unknown variogram_mode {self.variogram_mode}')
        if self.sampling not in ('collocated', 'heterotopic'):
            raise ConfigError(f'unknown sampling {self.sampling}')
        if self.index_mode not in INDEX_MODES:
            raise ConfigError(f'unknown index_mode {self.index_mode}')
        if self.breaks not in ('test_points', 'theoretical'):
            raise ConfigError(f'unknown breaks {self.breaks}')
        if not 0 <= self.correlation < 1:
            raise ConfigError('correlation must be in [0, 1)')
        if self.min_points > self.max_points:
            raise ConfigError('min_points exceeds max_points')
        if self.n_per_variable and len(self.n_per_variable) != 3:
            raise ConfigError('n_per_variable needs one size per variable')
        nodes = grid_size(self.extent_m, self.resolution_m) ** 2
        available = nodes - self.n_test_points
        largest = max(self.sample_sizes)
        if available < 1 or largest > available:
            raise ConfigError(f'{largest} sample points do not fit in '
                              f'{available} free grid nodes')

    @property
    def replications(self):
        """Resolved number of replications."""
        if self.n_replications:
            return self.n_replications
        return settings.N_REPLICATIONS_MULTIVARIATE if self.multivariate \
            else settings.N_REPLICATIONS

    @property
    def sample_sizes(self):
        """Sample size of each variable."""
        if not self.multivariate:
            return (self.n_sample_points,)
        if self.sampling == 'heterotopic' and self.n_per_variable:
            return tuple(int(n) for n in self.n_per_variable)
        return (self.n_sample_points,) * 3

    @property
    def model(self):
        """True variogram model of the simulated field."""
        return ExponentialVariogramModel.from_range(
            self.range_m, self.nugget, self.partial_sill)

    @property
    def neighborhood(self):
        """Kriging neighborhood of the scenario."""
        return NeighborhoodSpec(self.max_points, self.max_radius_m,
                                self.min_points, self.force_neighbors)

    @property
    def sd_true(self):
        """Standard deviation of the evaluated outcome.

        sqrt(c0 + sill) for one variable; for the index of three variables
        with pairwise correlation r, sqrt(total sill * (3 + 6 r)), divided
        by 3 in mean mode.
        """
        total = self.nugget + self.partial_sill
        if not self.multivariate:
            return math.sqrt(total)
        spread = math.sqrt(total * (3 + 6 * self.correlation))
        return spread if self.index_mode == 'sum' else spread / 3


@dataclass(frozen=True)
class CaseStudyConfig(_ConfigMixin):
    """Case-study pipeline over a geo-coded CSV file.

    ``variogram_source`` is all_points, sampled_points or both.
    ``max_vgm_dist_m`` is the distance menu of the variogram parameter table,
    ``fit_vgm_dist_m`` the one of the variograms used for prediction.
    """

    # pylint: disable=too-many-instance-attributes
    input_csv: str = ''
    variables: tuple = ('var_1', 'var_2', 'var_3')
    x_column: str = 'x_m'
    y_column: str = 'y_m'
    id_column: str = 'point_id'
    n_test_points: int = settings.N_TEST_POINTS
    n_known_points: tuple = settings.CASE_STUDY_KNOWN_POINTS
    variogram_source: str = 'all_points'
    max_vgm_dist_m: tuple = settings.CASE_STUDY_VGM_DISTANCES
    fit_vgm_dist_m: float = 1250.0
    n_bins: int = settings.N_BINS
    allow_nugget: bool = True
    univariate: bool = True
    multivariate: bool = True
    n_neighbors: int = settings.CASE_STUDY_NEIGHBORS
    index_mode: str = 'mean'
    count_radius_m: float = 250.0
    seed: int = 1

    def validate(self):
        """Raise ConfigError unless the pipeline is well defined."""
        if not self.input_csv:
            raise ConfigError('input_csv is required')
        if len(self.variables) < 1:
            raise ConfigError('at least one variable column is required')
        if self.variogram_source not in ('all_points', 'sampled_points',
                                         'both'):
            raise ConfigError(
                f'unknown variogram_source {self.variogram_source}')
        if self.index_mode not in INDEX_MODES:
            raise ConfigError(f'unknown index_mode {self.index_mode}')
        if not (self.univariate or self.multivariate):
            raise ConfigError('enable univariate or multivariate prediction')
        for known in self.n_known_points:
            if known != 'all' and (not isinstance(known, int) or known < 1):
                raise ConfigError(f'invalid n_known_points entry {known!r}')
        if self.n_test_points < 1 or self.n_neighbors < 1:
            raise ConfigError('counts must be positive')
        if any(not dist > 0 for dist in self.max_vgm_dist_m) or \
                not self.fit_vgm_dist_m > 0:
            raise ConfigError('variogram distances must be positive')

    @property
    def sources(self):
        """Variogram sources to run."""
        if self.variogram_source == 'both':
            return ('all_points', 'sampled_points')
        return (self.variogram_source,)


# Univariate fitting shared by scenarios and the case study

def _fit_record(model, diagnostics, verdict, **labels):
    record = dict(labels)
    record.update({'nugget': model.nugget if model else np.nan,
                   'partial_sill': model.partial_sill if model else np.nan,
                   'scale': model.scale if model else np.nan,
                   'range3': model.range3 if model else np.nan,
                   'practical_range': practical_range(model) if model
                   else np.nan,
                   'converged': diagnostics.converged if diagnostics
                   else False,
                   'valid': verdict.valid if verdict else False,
                   'reasons': ';'.join(verdict.reasons) if verdict
                   else 'fit failed'})
    return record


def fit_screened(emp, allow_nugget=True, refit_invalid=True):
    """Fit and screen a model, retrying once from the fallback start.

    Returns:
        tuple: (model or None, FitDiagnostics or None, ValidityVerdict or
        None, whether the fallback retry ran)
    """
    try:
        model, diagnostics = fit_exponential_wls(emp,
                                                 allow_nugget=allow_nugget)
    except DataError as error:
        log.debug('Variogram fit impossible: %s', error)
        return None, None, None, False
    verdict = validate_model(model, emp, diagnostics)
    if verdict.valid or not refit_invalid:
        return model, diagnostics, verdict, False
    model, diagnostics = fit_exponential_wls(
        emp, initial=fallback_initial(emp), allow_nugget=allow_nugget)
    return model, diagnostics, validate_model(model, emp, diagnostics), True


def _direct_or_none(lmc, variable):
    """Return the direct model of one LMC variable, None without a sill."""
    try:
        return lmc.direct_model(variable)
    except ValueError:
        return None


def fit_screened_lmc(direct, cross, allow_nugget=True, refit_invalid=True):
    """Fit an LMC and screen its direct models like univariate fits.

    A fit flagged as not converged, or a variable left without structural
    sill, yields a nonempty tuple of reasons.
    """
    def screen(lmc, diagnostics):
        reasons = []
        for variable, emp in enumerate(direct):
            model = _direct_or_none(lmc, variable)
            if model is None:
                reasons.append(f'variable {variable}: zero structural sill')
                continue
            verdict = validate_model(model, emp, diagnostics)
            reasons.extend(f'variable {variable}: {reason}'
                           for reason in verdict.reasons)
        return tuple(reasons)

    lmc, diagnostics = fit_lmc(direct, cross, allow_nugget=allow_nugget)
    reasons = screen(lmc, diagnostics)
    refit = False
    if reasons and refit_invalid:
        theta = fallback_initial(direct[0]).theta
        lmc, diagnostics = fit_lmc(direct, cross, initial_theta=theta,
                                   allow_nugget=allow_nugget)
        reasons, refit = screen(lmc, diagnostics), True
    return lmc, diagnostics, reasons, refit


def _predictions(results):
    """Return predicted values and variances of a batch, NaN on failures."""
    values = np.array([r.predicted_value if r.ok else np.nan
                       for r in results])
    variances = np.array([r.kriging_variance if r.ok else np.nan
                          for r in results])
    return values, variances


# Scenario engine

@dataclass
class _Replication:
    """Outcome of one replication, per prediction method."""

    index: int
    predictions: dict = field(default_factory=dict)
    variances: dict = field(default_factory=dict)
    valid: dict = field(default_factory=dict)
    fits: list = field(default_factory=list)
    neighbor_count: float = np.nan


@dataclass
class ScenarioResult:
    """Summaries and per-point tables of a scenario run."""

    config: ScenarioConfig
    summaries: list
    points: pd.DataFrame
    fits: pd.DataFrame
    breaks: object
    paths: dict = field(default_factory=dict)

    @property
    def summary(self):
        """Scenario summary rows as a DataFrame."""
        return pd.DataFrame([summary.as_row() for summary in self.summaries])


class _Scenario:
    """Fixed parts of a scenario: realization, test points, truth."""

    def __init__(self, config):
        self.config = config
        model = config.model
        if config.multivariate:
            self.realization = simulate_multivariate_grf(
                config.extent_m, config.resolution_m, model,
                config.correlation, config.seed)
            self.fields = self.realization.fields
        else:
            self.realization = simulate_grf(config.extent_m,
                                            config.resolution_m, model,
                                            config.seed)
            self.fields = (self.realization,)
        self.test = select_test_points(
            self.fields[0], config.n_test_points,
            rng_stream(config.seed, STREAM_TEST_POINTS))
        self.reserved = self.test.point_id
        truths = [fld.values.ravel()[self.reserved] for fld in self.fields]
        self.truth = truths[0] if len(truths) == 1 else \
            build_index(truths, config.index_mode)
        if config.breaks == 'theoretical':
            self.breaks = theoretical_breaks(config.sd_true)
        else:
            self.breaks = quintile_breaks(self.truth)

    def sample(self, index):
        """Return one observation dataset per variable for replication i."""
        config = self.config
        sizes = config.sample_sizes
        if config.multivariate and config.sampling == 'collocated':
            nodes = sample_observations(
                self.fields[0], sizes[0],
                rng_stream(config.seed, STREAM_REPLICATION, index),
                reserved=self.reserved).point_id
            return [fld.dataset(nodes) for fld in self.fields]
        return [sample_observations(
            fld, size,
            rng_stream(config.seed, STREAM_REPLICATION, index, variable),
            reserved=self.reserved)
            for variable, (fld, size) in enumerate(zip(self.fields, sizes))]

    def replicate(self, index):
        """Run replication ``index``."""
        config = self.config
        samples = self.sample(index)
        result = _Replication(index)
        index_tree = build_spatial_index(samples[0])
        result.neighbor_count = float(np.mean(count_within(
            index_tree, self.test.coordinates, config.count_radius_m)))
        models, valid = self._univariate_models(samples, result)
        per_variable = []
        variances = []
        for variable, (sample, model) in enumerate(zip(samples, models)):
            if model is None:
                per_variable.append(np.full(len(self.test), np.nan))
                variances.append(np.full(len(self.test), np.nan))
                continue
            values, var = _predictions(krige_batch(
                sample, model, self.test, config.neighborhood,
                variable_id=variable))
            per_variable.append(values)
            variances.append(var)
        if not config.multivariate:
            result.predictions['ordinary'] = per_variable[0]
            result.variances['ordinary'] = variances[0]
            result.valid['ordinary'] = valid
            return result
        result.predictions['univariate'] = _index(per_variable,
                                                  config.index_mode)
        result.valid['univariate'] = valid
        lmc, lmc_valid = self._lmc(samples, result)
        observations = SpatialDataset.concat(samples)
        per_variable = [_predictions(krige_batch(
            observations, lmc, self.test, config.neighborhood,
            variable_id=variable))[0] for variable in range(len(samples))]
        result.predictions['cokriging'] = _index(per_variable,
                                                 config.index_mode)
        result.valid['cokriging'] = lmc_valid
        return result

    def _univariate_models(self, samples, result):
        config = self.config
        if config.variogram_mode == 'fixed':
            return [config.model] * len(samples), True
        models, valid = [], True
        for variable, sample in enumerate(samples):
            emp = empirical_variogram(sample, config.max_vgm_dist_m,
                                      config.n_bins)
            model, diagnostics, verdict, refit = fit_screened(
                emp, config.allow_nugget, config.refit_invalid)
            valid = valid and verdict is not None and verdict.valid
            result.fits.append(_fit_record(
                model, diagnostics, verdict, replication=result.index,
                model_type='univariate', variable=variable, refit=refit))
            models.append(model)
        return models, valid

    def _lmc(self, samples, result):
        config = self.config
        if config.variogram_mode == 'fixed':
            return self.realization.lmc, True
        direct = [empirical_variogram(sample, config.max_vgm_dist_m,
                                      config.n_bins) for sample in samples]
        cross = [_cross_or_none(samples[i], samples[j], config.max_vgm_dist_m,
                                config.n_bins)
                 for i, j in cross_pairs(len(samples))]
        lmc, diagnostics, reasons, refit = fit_screened_lmc(
            direct, cross, config.allow_nugget, config.refit_invalid)
        for variable in range(len(samples)):
            record = _fit_record(
                _direct_or_none(lmc, variable), diagnostics, None,
                replication=result.index, model_type='lmc',
                variable=variable, refit=refit)
            record.update({'valid': not reasons,
                           'reasons': ';'.join(reasons)})
            result.fits.append(record)
        return lmc, not reasons


def _cross_or_none(ds_i, ds_j, max_dist, n_bins):
    """Return the cross variogram, or None when it has no usable pair."""
    try:
        return empirical_cross_variogram(ds_i, ds_j, max_dist, n_bins)
    except DataError as error:
        log.debug('Cross variogram skipped: %s', error)
        return None


def _index(per_variable, mode):
    stacked = np.vstack(per_variable)
    combined = stacked.sum(axis=0) if mode == 'sum' else stacked.mean(axis=0)
    # A failed variable leaves NaN, which propagates into the index
    return combined


def _run_replications(scenario, indices, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            return list(executor.map(scenario.replicate, indices))
    return [scenario.replicate(index) for index in indices]


def _point_rows(scenario, method, replications):
    """Return the PointSummary of every test point for one method."""
    config = scenario.config
    keep = [rep for rep in replications
            if rep.valid[method] or not config.censor_invalid]
    if not keep:
        return [], 0
    predictions = np.vstack([rep.predictions[method] for rep in keep])
    variances = None
    if method in keep[0].variances:
        variances = np.vstack([rep.variances[method] for rep in keep])
    points = []
    for column, point_id in enumerate(scenario.test.point_id):
        values = predictions[:, column]
        finite = np.isfinite(values)
        if finite.sum() < 2:
            log.warning('Test point %d has fewer than 2 predictions',
                        point_id)
            continue
        point_variances = variances[finite, column] \
            if variances is not None else None
        points.append(point_metrics(
            values[finite], scenario.truth[column], config.sd_true,
            int(point_id), scenario.breaks, point_variances))
    return points, len(keep)


def run_scenario(config, out_dir=None, threads=None):
    """Run every replication of a scenario and aggregate the results.

    Returns:
        ScenarioResult: one summary per prediction method (``ordinary`` for
        univariate scenarios, ``univariate`` and ``cokriging`` index rows for
        multivariate ones).
    """
    # pylint: disable=too-many-locals
    threads = resolve_threads(threads)
    config.validate()
    log.info('Scenario %s: simulating %s m field', config.name,
             config.extent_m)
    scenario = _Scenario(config)
    replications = _run_replications(scenario, range(config.replications),
                                     threads)
    log.info('Scenario %s: %d replications done', config.name,
             len(replications))
    methods = list(replications[0].predictions)
    summaries, frames = [], []
    for method in methods:
        points, used = _point_rows(scenario, method, replications)
        parameters = _scenario_parameters(config, method, replications, used)
        summary = summarize(parameters, points)
        summaries.append(summary)
        frame = summary.points.copy()
        frame['true_quintile'] = scenario.breaks.category(
            frame['true_value'].to_numpy()) if len(frame) else []
        for position, key in enumerate(('scenario', 'method', 'range_m',
                                        'nugget', 'variogram_mode')):
            frame.insert(position, key, parameters[key])
        frames.append(frame)
    nonempty = [frame for frame in frames if len(frame)]
    points = pd.concat(nonempty, ignore_index=True) if nonempty \
        else frames[0]
    fits = pd.DataFrame([record for rep in replications
                         for record in rep.fits])
    result = ScenarioResult(config, summaries, points, fits, scenario.breaks)
    if out_dir is not None:
        _write_scenario(result, Path(out_dir))
    return result


def _scenario_parameters(config, method, replications, used):
    invalid = sum(not rep.valid[method] for rep in replications)
    return {'scenario': config.name, 'method': method,
            'extent_m': config.extent_m, 'range_m': config.range_m,
            'nugget': config.nugget,
            'n_sample_points': config.n_sample_points,
            'variogram_mode': config.variogram_mode,
            'multivariate': config.multivariate,
            'correlation': config.correlation if config.multivariate
            else np.nan,
            'sampling': config.sampling if config.multivariate else '',
            'n_replications': len(replications),
            'n_used_replications': used, 'n_invalid_fits': invalid,
            'points_within_radius_mean': float(np.mean(
                [rep.neighbor_count for rep in replications]))}


def _write_scenario(result, out_dir):
    header = result.config.as_header()
    header['breaks_cuts'] = ','.join(f'{cut:.6g}'
                                     for cut in result.breaks.cuts)
    result.paths['scenario_summary'] = write_csv(
        result.summary, out_dir / 'scenario_summary.csv', header)
    result.paths['point_summary'] = write_csv(
        result.points, out_dir / 'point_summary.csv', header)
    result.paths['variogram_params'] = write_csv(
        result.fits, out_dir / 'variogram_params.csv', header)


# Case study

@dataclass
class CaseStudyResult:
    """Result tables of a case-study run."""

    config: CaseStudyConfig
    results: pd.DataFrame
    variogram_params: pd.DataFrame
    points: pd.DataFrame
    paths: dict = field(default_factory=dict)


def load_case_study_frame(config):
    """Read and check the input CSV of a case study.

    Rows with a non-numeric or non-finite id, coordinate or value are
    reported and dropped; more than 1% of them aborts.
    """
    try:
        frame = pd.read_csv(config.input_csv, dtype=str)
    except (OSError, ValueError) as error:
        raise DataError(f'cannot read {config.input_csv}: {error}') from None
    columns = [config.id_column, config.x_column, config.y_column,
               *config.variables]
    missing = [column for column in columns if column not in frame.columns]
    if missing:
        raise DataError(f'missing columns {missing} in {config.input_csv}')
    numeric = frame[columns].apply(pd.to_numeric, errors='coerce')
    bad = ~np.isfinite(numeric.to_numpy(dtype=float)).all(axis=1)
    for row in np.flatnonzero(bad)[:20]:
        log.warning('Rejected row %d of %s: %s', row + 2, config.input_csv,
                    frame.iloc[row].to_dict())
    if bad.sum() > settings.CASE_STUDY_MAX_BAD_ROWS * len(frame):
        raise DataError(f'{bad.sum()} of {len(frame)} rows unusable')
    numeric = numeric[~bad].reset_index(drop=True)
    needed = config.n_test_points + settings.CASE_STUDY_MIN_EXTRA_ROWS
    if len(numeric) < needed:
        raise DataError(f'need at least {needed} rows, got {len(numeric)}')
    numeric[config.id_column] = numeric[config.id_column].astype(np.int64)
    return numeric


def _case_datasets(frame, config):
    """Return one dataset per variable, variable ids 0..k-1."""
    return [SpatialDataset(frame[config.id_column], frame[config.x_column],
                           frame[config.y_column], frame[column], variable)
            for variable, column in enumerate(config.variables)]


class _CaseStudy:
    """Holdout split and fitting of the case study."""

    def __init__(self, config, frame):
        self.config = config
        self.frame = frame
        rng = rng_stream(config.seed, STREAM_TEST_POINTS)
        test_rows = np.sort(rng.choice(len(frame), config.n_test_points,
                                       replace=False))
        pool = np.setdiff1d(np.arange(len(frame)), test_rows)
        self.test = frame.iloc[test_rows].reset_index(drop=True)
        self.pool = frame.iloc[pool].reset_index(drop=True)
        self.truth = build_index(
            [self.test[column].to_numpy() for column in config.variables],
            config.index_mode)
        self.sd_true = float(np.std(self.truth, ddof=1))
        self.breaks = quintile_breaks(self.truth)
        self.targets = SpatialDataset(
            self.test[config.id_column], self.test[config.x_column],
            self.test[config.y_column], self.truth)

    def known(self, position, n_known):
        """Return the known-point sample of menu entry ``position``."""
        if n_known == 'all' or n_known >= len(self.pool):
            return self.pool
        rng = rng_stream(self.config.seed, STREAM_KNOWN_POINTS, position)
        rows = np.sort(rng.choice(len(self.pool), n_known, replace=False))
        return self.pool.iloc[rows].reset_index(drop=True)

    def fit(self, frame, max_dist, labels):
        """Fit univariate models and the LMC on ``frame``.

        Returns:
            tuple: (univariate models, lmc or None, parameter records)
        """
        config = self.config
        datasets = _case_datasets(frame, config)
        records, models = [], []
        direct = []
        for variable, dataset in enumerate(datasets):
            emp = empirical_variogram(dataset, max_dist, config.n_bins)
            direct.append(emp)
            model, diagnostics, verdict, _ = fit_screened(
                emp, config.allow_nugget)
            models.append(model)
            records.append(_fit_record(
                model, diagnostics, verdict, **labels, model_type='univariate',
                variable=config.variables[variable]))
        lmc = None
        if config.multivariate:
            cross = [_cross_or_none(datasets[i], datasets[j], max_dist,
                                    config.n_bins)
                     for i, j in cross_pairs(len(datasets))]
            lmc, diagnostics, reasons, _ = fit_screened_lmc(
                direct, cross, config.allow_nugget)
            for variable, name in enumerate(config.variables):
                record = _fit_record(
                    _direct_or_none(lmc, variable), diagnostics, None,
                    **labels, model_type='lmc', variable=name)
                record.update({'valid': not reasons,
                               'reasons': ';'.join(reasons)})
                records.append(record)
        return models, lmc, records

    def predict(self, known, models, lmc):
        """Return index predictions per method at the test points."""
        config = self.config
        datasets = _case_datasets(known, config)
        neighborhood = NeighborhoodSpec.nearest(config.n_neighbors)
        predictions = {}
        if config.univariate and all(model is not None for model in models):
            per_variable = [_predictions(krige_batch(
                dataset, model, self.targets, neighborhood,
                variable_id=variable))[0]
                for variable, (dataset, model) in enumerate(zip(datasets,
                                                                models))]
            predictions['univariate'] = _index(per_variable,
                                               config.index_mode)
        if lmc is not None:
            observations = SpatialDataset.concat(datasets)
            per_variable = [_predictions(krige_batch(
                observations, lmc, self.targets, neighborhood,
                variable_id=variable))[0]
                for variable in range(len(datasets))]
            predictions['cokriging'] = _index(per_variable,
                                              config.index_mode)
        return predictions

    def result_row(self, labels, method, predicted):
        """Return the case-study table row of one prediction set."""
        finite = np.isfinite(predicted)
        correct, neighbor = reliability(predicted[finite],
                                        self.truth[finite], self.breaks)
        errors = predicted[finite] - self.truth[finite]
        return {**labels, 'method': method, 'n_predicted': int(finite.sum()),
                'prop_correct': correct, 'prop_correct_or_neighbor': neighbor,
                'mean_bias_sd_units': float(errors.mean() / self.sd_true),
                'mse': float(np.mean(errors ** 2)),
                'prediction_mean': float(predicted[finite].mean()),
                'prediction_sd': float(predicted[finite].std(ddof=1)),
                'prediction_median': float(np.median(predicted[finite])),
                **residual_summary(predicted[finite], self.truth[finite])}


def run_case_study(config, out_dir=None, frame=None):
    """Run the case-study pipeline.

    For each variogram source and known-point count: fit the variograms
    (all rows, or the known sample), predict the three variables at the held
    out test points univariately and by co-kriging, and score the index.
    The variogram parameter table covers every distance of
    ``max_vgm_dist_m``.
    """
    # pylint: disable=too-many-locals
    config.validate()
    if frame is None:
        frame = load_case_study_frame(config)
    study = _CaseStudy(config, frame)
    log.info('Case study: %d rows, %d test points', len(frame),
             len(study.test))
    rows, params, point_frames = [], [], []
    fitted_all = None
    for position, n_known in enumerate(config.n_known_points):
        known = study.known(position, n_known)
        tree = build_spatial_index(_case_datasets(known, config)[0])
        counts = count_within(tree, study.targets.coordinates,
                              config.count_radius_m)
        within = {'points_within_radius_mean': float(np.mean(counts)),
                  'points_within_radius_sd': float(np.std(counts, ddof=1))}
        for source in config.sources:
            labels = {'variogram_source': source, 'n_known': len(known),
                      **within}
            if source == 'all_points':
                if fitted_all is None:
                    fitted_all = study.fit(frame, config.fit_vgm_dist_m,
                                           {'variogram_source': source,
                                            'n_known': len(frame),
                                            'max_vgm_dist_m':
                                            config.fit_vgm_dist_m})
                    params.extend(fitted_all[2])
                models, lmc, _ = fitted_all
            else:
                models, lmc, records = study.fit(
                    known, config.fit_vgm_dist_m,
                    {**labels, 'max_vgm_dist_m': config.fit_vgm_dist_m})
                params.extend(records)
            for method, predicted in study.predict(known, models,
                                                   lmc).items():
                rows.append(study.result_row(labels, method, predicted))
                point_frames.append(pd.DataFrame({
                    **labels, 'method': method,
                    'point_id': study.targets.point_id,
                    'true_value': study.truth,
                    'true_quintile': study.breaks.category(study.truth),
                    'predicted_value': predicted}))
            log.info('Case study: %s variograms, %d known points done',
                     source, len(known))
        params.extend(_distance_menu(study, known, position, n_known,
                                     within))
    result = CaseStudyResult(config, pd.DataFrame(rows),
                             pd.DataFrame(params),
                             pd.concat(point_frames, ignore_index=True))
    if out_dir is not None:
        out_dir = Path(out_dir)
        header = config.as_header()
        result.paths['case_study_results'] = write_csv(
            result.results, out_dir / 'case_study_results.csv', header)
        result.paths['variogram_params'] = write_csv(
            result.variogram_params, out_dir / 'variogram_params.csv', header)
        result.paths['point_predictions'] = write_csv(
            result.points, out_dir / 'point_predictions.csv', header)
    return result


def _distance_menu(study, known, position, n_known, within):
    """Return parameter records of every menu distance on one sample.

    ``within`` holds the mean and sd of the known points within
    ``count_radius_m`` of the test points, repeated on every record.
    """
    records = []
    for max_dist in study.config.max_vgm_dist_m:
        _, _, fitted = study.fit(
            known, max_dist,
            {'variogram_source': 'distance_menu', 'n_known': len(known),
             'max_vgm_dist_m': max_dist, 'menu_position': position,
             'menu_n_known': n_known, **within})
        records.extend(fitted)
    return records


# Plot data

def emit_plot_data(kind, inputs, path=None, header=None):
    """Return (and write to ``path``) tidy plot data of one kind.

    Args:
        kind (str): ``variogram`` with inputs (EmpiricalVariogram, model or
            None); ``bias_by_range`` with point-summary frames;
            ``quintile_reliability`` with point-summary frames.
    """
    if kind not in PLOT_KINDS:
        raise ConfigError(f'unknown plot kind {kind!r}, '
                          f'expected one of {PLOT_KINDS}')
    if kind == 'variogram':
        emp, model = inputs
        frame = emp.as_frame(model)
        if model is None:
            frame['model_gamma'] = np.nan
    else:
        points = pd.concat(list(inputs) if isinstance(inputs, (list, tuple))
                           else [inputs], ignore_index=True)
        if kind == 'bias_by_range':
            frame = pd.DataFrame({
                'true_value': points['true_value'],
                'mean_bias_sd_units': points['bias'],
                'range_m': points['range_m'],
                'variogram_mode': points['variogram_mode']})
            frame = frame.sort_values(['variogram_mode', 'range_m',
                                       'true_value'], kind='mergesort')
        else:
            frame = _quintile_frame(points)
    frame = frame.reset_index(drop=True)
    if path is not None:
        write_csv(frame, path, {'kind': kind, **(header or {})})
    return frame


def _quintile_frame(points):
    """Pool per-point proportions by true quintile, weighted by replications.

    Accepts point summaries, or raw per-point predictions with a
    ``predicted_value`` column.
    """
    if 'predicted_value' in points.columns:
        frames = []
        keys = [key for key in ('method', 'variogram_source', 'n_known')
                if key in points.columns]
        for key, group in points.groupby(keys, sort=True):
            cuts = quintile_breaks(group['true_value'])
            frame = quintile_reliability(group['predicted_value'],
                                         group['true_value'], cuts)
            for name, value in zip(keys, key if isinstance(key, tuple)
                                   else (key,)):
                frame.insert(0, name, value)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)
    keys = [key for key in ('scenario', 'method') if key in points.columns]
    weights = points.get('n_replications',
                         pd.Series(1, index=points.index)).astype(float)
    points = points.assign(
        weight=weights,
        correct=points['prop_correct_quintile'] * weights,
        neighbor=points['prop_correct_or_neighbor'] * weights)
    grouped = points.groupby(keys + ['true_quintile'], sort=True)
    totals = grouped[['weight', 'correct', 'neighbor']].sum().reset_index()
    return pd.DataFrame({
        **{key: totals[key] for key in keys},
        'true_quintile': totals['true_quintile'],
        'prop_correct': totals['correct'] / totals['weight'],
        'prop_correct_or_neighbor': totals['neighbor'] / totals['weight']})

