"""Ordinary kriging and LMC co-kriging at target locations.

Both predictors solve the covariance form of the kriging system

    [K  F] [lambda]   [sigma0]
    [F' 0] [mu    ] = [e     ]

with one unbiasedness constraint per variable present in the neighborhood
(F holds indicator columns, e selects the target variable). K carries the
nugget only on its index diagonal, and between different variables sharing
a location, so kriging smooths noisy data instead of honoring it.
"""
import math
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.lapack import get_lapack_funcs
from scipy.spatial.distance import cdist

from geokrige import log, settings
from geokrige.spatial import Location, SpatialIndex
from geokrige.utils import (DataError, InsufficientNeighborsError,
                            SingularSystemError)
from geokrige.variogram.models import (CoregionalizationModel,
                                       ExponentialVariogramModel)

__all__ = ('NeighborhoodSpec', 'KrigingPrediction', 'KrigingFailure',
           'KrigerFactory', 'KrigerBase', 'OrdinaryKriger', 'CoKriger',
           'covariance_from_variogram', 'ordinary_krige', 'cokrige',
           'krige_batch')

#: Pivots of U smaller than this share of the largest one mean singular
_PIVOT_TOLERANCE = 1e-13


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Local neighborhood of a kriging prediction.

    ``max_points`` nearest observations within ``max_radius`` are used. With
    ``force``, a target with fewer than ``min_points`` inside the radius
    takes the ``min_points`` nearest ones whatever their distance.
    """

    max_points: int = settings.NEIGHBORHOOD_MAX_POINTS
    max_radius: float = settings.NEIGHBORHOOD_MAX_RADIUS
    min_points: int = settings.NEIGHBORHOOD_MIN_POINTS
    force: bool = False

    def __post_init__(self):
        if self.max_points is not None and self.max_points < 1:
            raise ValueError(f'max_points must be positive, '
                             f'got {self.max_points}')
        if self.min_points < 1:
            raise ValueError(f'min_points must be positive, '
                             f'got {self.min_points}')
        if self.max_points is not None and self.min_points > self.max_points:
            raise ValueError('min_points must not exceed max_points')
        if not self.max_radius > 0:
            raise ValueError(f'max_radius must be positive, '
                             f'got {self.max_radius}')

    @classmethod
    def nearest(cls, count):
        """Return the neighborhood of exactly the ``count`` nearest points."""
        return cls(max_points=count, max_radius=math.inf, min_points=count,
                   force=True)

    def select(self, index, center, enforce_minimum=True):
        """Return (positions, distances) of the neighbors of ``center``."""
        if math.isinf(self.max_radius):
            count = self.max_points or len(index)
            return index.query_nearest(center, count)
        positions, distances = index.query_radius(center, self.max_radius,
                                                  self.max_points)
        if enforce_minimum and self.force and len(positions) < self.min_points:
            positions, distances = index.query_nearest(center,
                                                       self.min_points)
        return positions, distances


@dataclass(frozen=True)
class KrigingPrediction:
    """Prediction and kriging variance at one target."""

    # pylint: disable=too-many-instance-attributes
    target: Location
    variable_id: int
    predicted_value: float
    kriging_variance: float
    n_neighbors_used: int
    lagrange_multiplier: float
    point_id: int = None
    weights: np.ndarray = field(default=None, repr=False, compare=False)
    weight_variables: np.ndarray = field(default=None, repr=False,
                                         compare=False)

    ok = True

    def as_dict(self):
        """Return the prediction as a flat dictionary."""
        return {'point_id': self.point_id, 'x_m': self.target.x,
                'y_m': self.target.y, 'variable_id': self.variable_id,
                'predicted_value': self.predicted_value,
                'kriging_variance': self.kriging_variance,
                'n_neighbors_used': self.n_neighbors_used,
                'lagrange_multiplier': self.lagrange_multiplier}


@dataclass(frozen=True)
class KrigingFailure:
    """Per-target error record of a batch prediction."""

    target: Location
    variable_id: int
    error: str
    point_id: int = None
    n_neighbors: int = 0

    ok = False

    def as_dict(self):
        """Return the failure as a flat dictionary."""
        return {'point_id': self.point_id, 'x_m': self.target.x,
                'y_m': self.target.y, 'variable_id': self.variable_id,
                'error': self.error, 'n_neighbors': self.n_neighbors}


def covariance_from_variogram(model, h, i=0, j=0):
    """Return C(h): the total sill at h = 0, sill * exp(-theta h) beyond."""
    return model.covariance(h, i, j)


def _solve(matrix, rhs):
    """Solve by LU with partial pivoting; None when the matrix is singular."""
    getrf, getrs = get_lapack_funcs(('getrf', 'getrs'), (matrix,))
    lu_factor, pivots, info = getrf(matrix)
    if info > 0:
        return None
    pivots_u = np.abs(np.diag(lu_factor))
    if pivots_u.min() <= _PIVOT_TOLERANCE * pivots_u.max():
        return None
    solution, info = getrs(lu_factor, pivots, rhs)
    if info != 0 or not np.all(np.isfinite(solution)):
        return None
    return solution


def _deduplicate(variables, coordinates, values):
    """Average observations of one variable sharing a location."""
    keys = np.column_stack((variables, coordinates))
    unique, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    counts = np.bincount(inverse)
    means = np.bincount(inverse, weights=values) / counts
    return unique[:, 0].astype(np.int64), unique[:, 1:], means


class KrigerFactory(ABC):  # pylint: disable=too-few-public-methods
    """Choose the kriger that matches a variogram model."""

    @classmethod
    def from_model(cls, observations, model, neighborhood=None):
        """Return a kriger over ``observations`` using ``model``."""
        kriger_class = cls.get_class(model)
        return kriger_class(observations, model, neighborhood)

    @staticmethod
    def get_class(model):
        """Return the kriger class for the model type."""
        if isinstance(model, ExponentialVariogramModel):
            return OrdinaryKriger
        if isinstance(model, CoregionalizationModel):
            return CoKriger
        raise NotImplementedError(f'Unsupported model {type(model).__name__}')


class KrigerBase(ABC):
    """Kriging predictor over fixed observations and a fixed model.

    Subclasses choose the neighbors; the system assembly and solve are
    shared. Instances are immutable after construction and safe to use from
    several threads.
    """

    def __init__(self, observations, model, neighborhood=None):
        """Index the observations.

        Args:
            observations (SpatialDataset): known points.
            model: ExponentialVariogramModel or CoregionalizationModel.
            neighborhood (NeighborhoodSpec): defaults to NeighborhoodSpec().
        """
        self.observations = observations
        self.model = model
        self.neighborhood = neighborhood or NeighborhoodSpec()

    @abstractmethod
    def _neighbors(self, target, variable_id):
        """Return (model indices, coordinates, values) of the neighbors."""

    @abstractmethod
    def _model_index(self, variable_id):
        """Return the model row addressing ``variable_id``."""

    def _select(self, index, target, required):
        """Return the neighbor positions of one variable."""
        positions, _ = self.neighborhood.select(index, target,
                                                enforce_minimum=required)
        if required and len(positions) < self.neighborhood.min_points:
            raise InsufficientNeighborsError(len(positions),
                                             self.neighborhood.min_points)
        return positions

    def predict(self, target, variable_id=None, point_id=None):
        """Return the KrigingPrediction of ``variable_id`` at ``target``.

        Raises:
            InsufficientNeighborsError: too few neighbors of the target
                variable.
            SingularSystemError: the system stays singular after averaging
                duplicate locations.
        """
        variable_id = self._default_variable(variable_id)
        rows, coordinates, values = self._neighbors(target, variable_id)
        target_row = self._model_index(variable_id)
        count = len(values)
        solved = self._solve_system(rows, coordinates, values, target,
                                    target_row)
        if solved is None:
            rows, coordinates, values = _deduplicate(rows, coordinates,
                                                     values)
            if len(values) < count:
                log.debug('Averaged %d duplicate observations near (%s, %s)',
                          count - len(values), target.x, target.y)
                solved = self._solve_system(rows, coordinates, values,
                                            target, target_row)
        if solved is None:
            raise SingularSystemError(
                f'{count} neighbors around ({target.x}, {target.y})')
        weights, multiplier, variance = solved
        return KrigingPrediction(
            target, variable_id, float(weights @ values), variance, count,
            multiplier, point_id, weights, rows)

    def _default_variable(self, variable_id):
        return variable_id

    def _solve_system(self, rows, coordinates, values, target, target_row):
        """Assemble and solve the kriging system.

        Returns:
            tuple: (weights, target Lagrange multiplier, kriging variance),
            or None when the system is singular.
        """
        # pylint: disable=too-many-arguments,too-many-locals
        model = self.model
        nugget, structure = model.nugget_matrix(), model.structure_matrix()
        size = len(values)
        pairs = np.ix_(rows, rows)
        distances = cdist(coordinates, coordinates)
        block = structure[pairs] * np.exp(-model.theta * distances)
        # Nugget on the index diagonal, and across variables at one location
        shared = (distances == 0) & (rows[:, None] != rows[None, :])
        shared[np.diag_indices(size)] = True
        block += np.where(shared, nugget[pairs], 0.0)

        present = np.unique(rows)
        constraints = (rows[:, None] == present[None, :]).astype(float)
        matrix = np.zeros((size + len(present),) * 2)
        matrix[:size, :size] = block
        matrix[:size, size:] = constraints
        matrix[size:, :size] = constraints.T

        to_target = np.hypot(coordinates[:, 0] - target.x,
                             coordinates[:, 1] - target.y)
        sigma0 = structure[rows, target_row] * np.exp(-model.theta * to_target)
        rhs = np.concatenate((sigma0, (present == target_row).astype(float)))
        solution = _solve(matrix, rhs)
        if solution is None:
            return None
        weights, multipliers = solution[:size], solution[size:]
        position = int(np.flatnonzero(present == target_row)[0])
        multiplier = float(multipliers[position])
        total_sill = nugget[target_row, target_row] + \
            structure[target_row, target_row]
        variance = float(total_sill - weights @ sigma0 - multiplier)
        if variance < -1e-9:
            log.debug('Negative kriging variance %.3g clipped to 0', variance)
        return weights, multiplier, max(variance, 0.0)


class OrdinaryKriger(KrigerBase):
    """Ordinary kriging of a single variable."""

    def __init__(self, observations, model, neighborhood=None):
        super().__init__(observations, model, neighborhood)
        variables = observations.variables
        if len(variables) > 1:
            raise DataError('ordinary kriging needs a single variable, '
                            f'got {variables}')
        self.variable_id = variables[0] if variables else 0
        self.index = SpatialIndex(observations)

    def _default_variable(self, variable_id):
        return self.variable_id if variable_id is None else variable_id

    def _model_index(self, variable_id):
        return 0

    def _neighbors(self, target, variable_id):
        positions = self._select(self.index, target, required=True)
        data = self.observations
        coordinates = np.column_stack((data.x[positions], data.y[positions]))
        return (np.zeros(len(positions), dtype=np.int64), coordinates,
                data.value[positions])


class CoKriger(KrigerBase):
    """Ordinary co-kriging under a linear model of coregionalization.

    Variable ids of the observations address the rows of the LMC matrices.
    Neighbors are selected per variable; the target variable needs at least
    ``min_points`` of them, the auxiliary ones may have none.
    """

    def __init__(self, observations, model, neighborhood=None):
        super().__init__(observations, model, neighborhood)
        self.indices = {}
        for variable_id in observations.variables:
            if not 0 <= variable_id < model.n_variables:
                raise DataError(f'variable {variable_id} outside the '
                                f'{model.n_variables}-variable model')
            self.indices[variable_id] = SpatialIndex(
                observations.select(variable_id))

    def _default_variable(self, variable_id):
        if variable_id is None:
            raise ValueError('co-kriging needs a target variable')
        return variable_id

    def _model_index(self, variable_id):
        return variable_id

    def _neighbors(self, target, variable_id):
        if variable_id not in self.indices:
            raise InsufficientNeighborsError(0, self.neighborhood.min_points)
        rows, coordinates, values = [], [], []
        for other, index in self.indices.items():
            positions = self._select(index, target,
                                     required=other == variable_id)
            data = index.dataset
            rows.append(np.full(len(positions), other, dtype=np.int64))
            coordinates.append(np.column_stack((data.x[positions],
                                                data.y[positions])))
            values.append(data.value[positions])
        return (np.concatenate(rows), np.concatenate(coordinates),
                np.concatenate(values))


def ordinary_krige(observations, model, target, neighborhood=None):
    """Return the ordinary kriging prediction at ``target``."""
    return OrdinaryKriger(observations, model, neighborhood).predict(target)


def cokrige(observations, lmc, target, target_variable, neighborhood=None):
    """Return the co-kriging prediction of one variable at ``target``."""
    return CoKriger(observations, lmc, neighborhood).predict(target,
                                                             target_variable)


def krige_batch(observations, model, targets, neighborhood=None,
                variable_id=None, threads=1):
    """Predict at every point of ``targets``, in order.

    Per-target DataErrors become KrigingFailure records instead of aborting
    the batch. Results do not depend on ``threads``.

    Args:
        targets (SpatialDataset): target locations; their point ids label
            the results and, for co-kriging without ``variable_id``, their
            variable ids select the predicted variable.
    """
    # pylint: disable=too-many-arguments
    kriger = KrigerFactory.from_model(observations, model, neighborhood)

    def predict_one(position):
        target = targets.location(position)
        point_id = int(targets.point_id[position])
        variable = variable_id
        if variable is None:
            variable = int(targets.variable_id[position]) \
                if isinstance(kriger, CoKriger) else kriger.variable_id
        try:
            return kriger.predict(target, variable, point_id)
        except DataError as error:
            count = getattr(error, 'count', 0)
            return KrigingFailure(target, variable, str(error), point_id,
                                  count)

    positions = range(len(targets))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            results = list(executor.map(predict_one, positions))
    else:
        results = [predict_one(position) for position in positions]
    failures = sum(not result.ok for result in results)
    if failures:
        log.warning('%d of %d targets could not be predicted', failures,
                    len(results))
    return results
