"""Reliability of replicated predictions.

Predictions are classified into the quintile categories of the true outcome
distribution; a point is reliable when its predicted category matches, or
neighbors, the true one. Per-point bias, empirical standard error and MSE
follow the bookkeeping

    mse = se**2 * (R - 1) / R + (bias * sd_true)**2

where ``se`` is the sample standard deviation over R replications and
``bias`` is in standard deviation units of the true outcome.
"""
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import pandas as pd
from scipy.stats import norm

from geokrige.utils import DataError

__all__ = ('QuintileBreaks', 'PointSummary', 'ScenarioSummary',
           'quintile_breaks', 'theoretical_breaks', 'reliability',
           'point_metrics', 'build_index', 'summarize', 'residual_summary',
           'quintile_reliability', 'INDEX_MODES')

#: Ways of combining several predicted variables into one index
INDEX_MODES = ('sum', 'mean')

_PERCENTILES = (20, 40, 60, 80)


@dataclass(frozen=True)
class QuintileBreaks:
    """Four increasing cuts splitting the real line into categories 1..5."""

    cuts: tuple

    def __post_init__(self):
        cuts = tuple(float(cut) for cut in self.cuts)
        if len(cuts) != 4:
            raise ValueError(f'need 4 cuts, got {len(cuts)}')
        if not all(low < high for low, high in zip(cuts, cuts[1:])):
            raise ValueError(f'cuts must be strictly increasing: {cuts}')
        object.__setattr__(self, 'cuts', cuts)

    def category(self, values):
        """Return 1 + the number of cuts strictly below each value.

        A value equal to a cut falls in the lower category.
        """
        values = np.asarray(values, dtype=float)
        categories = np.searchsorted(self.cuts, values, side='left') + 1
        return categories if categories.ndim else int(categories)


def quintile_breaks(values):
    """Return the 20/40/60/80th percentiles (linear interpolation)."""
    values = np.asarray(values, dtype=float).ravel()
    distinct = len(np.unique(values))
    if distinct < 5:
        raise DataError(f'quintiles need at least 5 distinct values, '
                        f'got {distinct}')
    cuts = np.percentile(values, _PERCENTILES)
    if not np.all(np.diff(cuts) > 0):
        raise DataError(f'degenerate quintile cuts {cuts.tolist()}')
    return QuintileBreaks(tuple(cuts))


def theoretical_breaks(sd, mean=0.0):
    """Return the quintile cuts of N(mean, sd**2)."""
    if not sd > 0:
        raise ValueError(f'sd must be positive, got {sd}')
    return QuintileBreaks(tuple(norm.ppf(np.array(_PERCENTILES) / 100,
                                         loc=mean, scale=sd)))


def reliability(predicted, truth, breaks):
    """Return (prop_correct, prop_correct_or_neighbor).

    Neighboring means the predicted and true categories differ by at most 1.
    """
    predicted = np.asarray(predicted, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if predicted.shape != truth.shape:
        raise ValueError(f'{predicted.shape} predictions for '
                         f'{truth.shape} true values')
    if predicted.size == 0:
        raise ValueError('reliability needs at least one prediction')
    offset = np.abs(breaks.category(predicted) - breaks.category(truth))
    return float(np.mean(offset == 0)), float(np.mean(offset <= 1))


@dataclass(frozen=True)
class PointSummary:
    """Metrics of one test point over its replications."""

    # pylint: disable=too-many-instance-attributes
    point_id: int
    true_value: float
    mean_prediction: float
    bias: float
    empirical_se: float
    mse: float
    prop_correct_quintile: float = float('nan')
    prop_correct_or_neighbor: float = float('nan')
    mean_kriging_se: float = float('nan')
    n_replications: int = 0

    #: Fields aggregated by ScenarioSummary
    metrics = ('bias', 'empirical_se', 'mse', 'prop_correct_quintile',
               'prop_correct_or_neighbor', 'mean_kriging_se')

    def as_dict(self):
        """Return the summary as a flat dictionary."""
        return asdict(self)


def point_metrics(predictions, true_value, sd_true, point_id=None,
                  breaks=None, kriging_variances=None):
    """Summarize the replicated predictions of one point.

    Args:
        predictions: one prediction per replication, at least 2.
        true_value (float): value of the field at the point.
        sd_true (float): standard deviation scaling the bias.
        breaks (QuintileBreaks): enables the reliability proportions.
        kriging_variances: enables the mean kriging standard error.
    """
    # pylint: disable=too-many-arguments
    predictions = np.asarray(predictions, dtype=float).ravel()
    if len(predictions) < 2:
        raise ValueError(f'need at least 2 replications, '
                         f'got {len(predictions)}')
    if not sd_true > 0:
        raise ValueError(f'sd_true must be positive, got {sd_true}')
    errors = predictions - true_value
    correct = neighbor = float('nan')
    if breaks is not None:
        correct, neighbor = reliability(
            predictions, np.full_like(predictions, true_value), breaks)
    kriging_se = float('nan')
    if kriging_variances is not None:
        kriging_se = float(np.mean(np.sqrt(np.asarray(kriging_variances))))
    return PointSummary(
        point_id=point_id, true_value=float(true_value),
        mean_prediction=float(predictions.mean()),
        bias=float(errors.mean() / sd_true),
        empirical_se=float(predictions.std(ddof=1)),
        mse=float(np.mean(errors ** 2)),
        prop_correct_quintile=correct, prop_correct_or_neighbor=neighbor,
        mean_kriging_se=kriging_se, n_replications=len(predictions))


def build_index(values, mode='sum'):
    """Combine the per-variable predictions at a location into an index.

    ``values`` holds one entry (scalar or array) per variable; arrays are
    combined element-wise.
    """
    if mode not in INDEX_MODES:
        raise ValueError(f'unknown index mode {mode!r}')
    if any(value is None for value in values):
        raise DataError('index needs a prediction of every variable')
    stacked = np.asarray(values, dtype=float)
    if stacked.size == 0 or np.any(np.isnan(stacked)):
        raise DataError('index needs a prediction of every variable')
    combined = stacked.sum(axis=0) if mode == 'sum' else stacked.mean(axis=0)
    return combined if np.ndim(combined) else float(combined)


@dataclass(frozen=True)
class ScenarioSummary:
    """Point summaries of a scenario with their aggregates."""

    parameters: dict
    points: pd.DataFrame = field(repr=False)

    @classmethod
    def from_points(cls, parameters, points):
        """Build the summary from PointSummary records."""
        columns = [item.name for item in fields(PointSummary)]
        frame = pd.DataFrame([point.as_dict() for point in points],
                             columns=columns)
        return cls(dict(parameters), frame)

    def aggregate(self):
        """Return mean, SD and median over points of every metric."""
        stats = {}
        for metric in PointSummary.metrics:
            column = self.points[metric].to_numpy(dtype=float)
            column = column[~np.isnan(column)]
            if len(column) == 0:
                continue
            stats[f'{metric}_mean'] = float(np.mean(column))
            stats[f'{metric}_sd'] = float(np.std(column, ddof=1)) \
                if len(column) > 1 else float('nan')
            stats[f'{metric}_median'] = float(np.median(column))
        return stats

    def as_row(self):
        """Return parameters and aggregates as one flat dictionary."""
        return {**self.parameters, 'n_points': len(self.points),
                **self.aggregate()}


def summarize(parameters, points):
    """Return the ScenarioSummary of a list of PointSummary records."""
    return ScenarioSummary.from_points(parameters, points)


def residual_summary(predicted, truth):
    """Return mean, SD, median and 5/95th percentiles of predicted - truth."""
    residuals = np.asarray(predicted, dtype=float) - \
        np.asarray(truth, dtype=float)
    if residuals.size < 2:
        raise ValueError('residual summary needs at least 2 values')
    low, high = np.percentile(residuals, (5, 95))
    return {'residual_mean': float(residuals.mean()),
            'residual_sd': float(residuals.std(ddof=1)),
            'residual_median': float(np.median(residuals)),
            'residual_p05': float(low), 'residual_p95': float(high)}


def quintile_reliability(predicted, truth, breaks):
    """Return reliability proportions grouped by true quintile.

    ``predicted`` may hold one row per replication; ``truth`` is broadcast
    against it. Categories without points are omitted.
    """
    predicted = np.asarray(predicted, dtype=float)
    truth = np.broadcast_to(np.asarray(truth, dtype=float), predicted.shape)
    frame = pd.DataFrame({
        'true_quintile': breaks.category(truth).ravel(),
        'offset': np.abs(breaks.category(predicted) -
                         breaks.category(truth)).ravel()})
    frame['correct'] = frame['offset'] == 0
    frame['neighbor'] = frame['offset'] <= 1
    grouped = frame.groupby('true_quintile', sort=True)
    return pd.DataFrame({
        'true_quintile': grouped.size().index.to_numpy(),
        'n': grouped.size().to_numpy(),
        'prop_correct': grouped['correct'].mean().to_numpy(),
        'prop_correct_or_neighbor': grouped['neighbor'].mean().to_numpy()})
