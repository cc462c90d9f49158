"""Planar geometry, point datasets and radius-bounded neighbor search."""
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from geokrige.utils import DataError, EmptyDatasetError

__all__ = ('Location', 'SpatialDataset', 'SpatialIndex', 'distance',
           'build_spatial_index', 'neighbors_within', 'nearest',
           'count_within')


@dataclass(frozen=True)
class Location:
    """A point in planar coordinates, meters east (x) and north (y)."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f'non-finite coordinates ({self.x}, {self.y})')

    def as_array(self):
        """Return the coordinates as a numpy array."""
        return np.array([self.x, self.y], dtype=float)


def distance(a, b):
    """Return the Euclidean distance between two Locations."""
    return math.hypot(a.x - b.x, a.y - b.y)


class SpatialDataset:
    """Geo-located observations of one or more variables.

    Each point is a (point_id, x, y, value, variable_id) record. Point ids
    are unique within a variable; the same location may carry several
    variables (collocated data) or several points (duplicates).
    """

    columns = ('point_id', 'x', 'y', 'value', 'variable_id')

    def __init__(self, point_id, x, y, value, variable_id=None):
        """Validate and store the columns as read-only numpy arrays."""
        # pylint: disable=too-many-arguments
        self.point_id = np.asarray(point_id, dtype=np.int64).ravel()
        size = len(self.point_id)
        self.x = np.asarray(x, dtype=float).ravel()
        self.y = np.asarray(y, dtype=float).ravel()
        self.value = np.asarray(value, dtype=float).ravel()
        if variable_id is None:
            variable_id = np.zeros(size, dtype=np.int64)
        self.variable_id = np.broadcast_to(
            np.asarray(variable_id, dtype=np.int64), (size,)).copy()

        for name in ('x', 'y', 'value'):
            column = getattr(self, name)
            if len(column) != size:
                raise DataError(f'column {name} has {len(column)} entries, '
                                f'expected {size}')
            if not np.all(np.isfinite(column)):
                raise DataError(f'column {name} holds non-finite values')
        keys = pd.MultiIndex.from_arrays([self.variable_id, self.point_id])
        if keys.has_duplicates:
            raise DataError('point_id must be unique within a variable_id')
        for column in (self.point_id, self.x, self.y, self.value,
                       self.variable_id):
            column.setflags(write=False)

    def __len__(self):
        return len(self.point_id)

    def __repr__(self):
        return (f'{self.__class__.__name__}({len(self)} points, '
                f'variables {self.variables})')

    @classmethod
    def from_records(cls, records):
        """Build a dataset from (point_id, x, y, value[, variable_id])."""
        records = [tuple(record) for record in records]
        if not records:
            return cls([], [], [], [])
        columns = list(zip(*records))
        if len(columns) == 4:
            columns.append(None)
        return cls(*columns)

    @classmethod
    def from_frame(cls, frame, value='value', x='x_m', y='y_m',
                   point_id='point_id', variable_id=None):
        """Build a dataset from a pandas DataFrame."""
        # pylint: disable=too-many-arguments
        variables = frame[variable_id] if variable_id else None
        return cls(frame[point_id], frame[x], frame[y], frame[value],
                   variables)

    @classmethod
    def concat(cls, datasets):
        """Stack several datasets into one."""
        datasets = list(datasets)
        return cls(*(np.concatenate([getattr(ds, name) for ds in datasets])
                     for name in cls.columns))

    def as_frame(self):
        """Return the dataset as a pandas DataFrame."""
        return pd.DataFrame({name: getattr(self, name)
                             for name in self.columns})

    @property
    def coordinates(self):
        """Return an (n, 2) array of x, y coordinates."""
        return np.column_stack((self.x, self.y))

    @property
    def variables(self):
        """Return the sorted variable ids present."""
        return tuple(int(v) for v in np.unique(self.variable_id))

    def location(self, position):
        """Return the Location of the point at ``position``."""
        return Location(float(self.x[position]), float(self.y[position]))

    def take(self, positions):
        """Return the points at the given positions as a new dataset."""
        positions = np.asarray(positions, dtype=np.int64)
        return self.__class__(*(getattr(self, name)[positions]
                                for name in self.columns))

    def select(self, variable_id):
        """Return the points of one variable."""
        return self.take(np.flatnonzero(self.variable_id == variable_id))

    def with_values(self, values):
        """Return a copy carrying ``values`` instead of the current ones."""
        return self.__class__(self.point_id, self.x, self.y, values,
                              self.variable_id)

    def is_collocated(self):
        """Return whether every location carries every variable."""
        frame = pd.DataFrame({'x': self.x, 'y': self.y,
                              'variable_id': self.variable_id})
        per_location = frame.groupby(['x', 'y'])['variable_id'].nunique()
        return bool((per_location == len(self.variables)).all())


class SpatialIndex:
    """Immutable k-d tree over the locations of a SpatialDataset.

    Queries return exactly what a brute-force distance scan returns; the
    tree only narrows the candidates. Concurrent queries are safe.
    """

    def __init__(self, dataset):
        if len(dataset) == 0:
            raise EmptyDatasetError('cannot index an empty dataset')
        self.dataset = dataset
        self._tree = cKDTree(dataset.coordinates)

    def __len__(self):
        return len(self.dataset)

    def _sorted(self, positions, center):
        """Return positions and distances sorted by distance, point_id."""
        positions = np.asarray(positions, dtype=np.int64)
        distances = np.hypot(self.dataset.x[positions] - center.x,
                             self.dataset.y[positions] - center.y)
        order = np.lexsort((self.dataset.point_id[positions], distances))
        return positions[order], distances[order]

    def query_radius(self, center, radius, max_count=None):
        """Return (positions, distances) of points within ``radius``."""
        if not radius > 0:
            raise ValueError(f'radius must be positive, got {radius}')
        # Widen the tree query, then filter with our own distances
        candidates = self._tree.query_ball_point(
            (center.x, center.y), radius * (1 + 1e-9) + 1e-9)
        positions, distances = self._sorted(candidates, center)
        keep = distances <= radius
        positions, distances = positions[keep], distances[keep]
        if max_count is not None:
            positions, distances = positions[:max_count], distances[:max_count]
        return positions, distances

    def query_nearest(self, center, count):
        """Return (positions, distances) of the ``count`` nearest points."""
        count = min(int(count), len(self))
        if count < 1:
            return np.empty(0, dtype=np.int64), np.empty(0)
        _, candidates = self._tree.query((center.x, center.y), k=count)
        candidates = np.atleast_1d(candidates)
        # Include every point tied with the farthest candidate
        radius = np.hypot(self.dataset.x[candidates] - center.x,
                          self.dataset.y[candidates] - center.y).max()
        if radius > 0:
            positions, distances = self.query_radius(center, radius)
        else:
            positions, distances = self._sorted(
                self._tree.query_ball_point((center.x, center.y), 0.0),
                center)
        return positions[:count], distances[:count]


def build_spatial_index(dataset):
    """Return a SpatialIndex over ``dataset``."""
    return SpatialIndex(dataset)


def neighbors_within(index, center, radius, max_count=None):
    """List (point_id, distance) within ``radius`` of ``center``.

    Sorted ascending by distance, ties broken by ascending point_id, and
    truncated to the ``max_count`` nearest when given.
    """
    positions, distances = index.query_radius(center, radius, max_count)
    point_ids = index.dataset.point_id[positions]
    return [(int(pid), float(dist))
            for pid, dist in zip(point_ids, distances)]


def nearest(index, center, count):
    """List the ``count`` nearest (point_id, distance), whatever the radius."""
    positions, distances = index.query_nearest(center, count)
    point_ids = index.dataset.point_id[positions]
    return [(int(pid), float(dist))
            for pid, dist in zip(point_ids, distances)]


def count_within(index, centers, radius):
    """Return the number of indexed points within ``radius`` of each center."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    counts = [len(index.query_radius(Location(*center), radius)[0])
              for center in centers]
    return np.asarray(counts, dtype=np.int64)
