"""Gaussian random fields on regular grids, and sampling from them.

Fields are simulated by circulant embedding of the structural covariance on
a periodic grid of twice the side, falling back to an exact Cholesky
factorisation on small grids. The nugget is realized as independent noise
added at every node; the smooth field underneath is kept as well.
"""
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.linalg import cholesky
from scipy.spatial.distance import cdist

from geokrige import log, settings
from geokrige.spatial import SpatialDataset
from geokrige.utils import SimulationError, rng_stream
from geokrige.variogram.models import (CoregionalizationModel,
                                       ExponentialVariogramModel)

__all__ = ('FieldRealization', 'MultiFieldRealization', 'grid_size',
           'simulate_grf', 'simulate_multivariate_grf',
           'simulate_surrogate_fields', 'sample_observations',
           'select_test_points', 'field_to_frame',
           'make_case_study_surrogate')

# RNG streams under a field seed
_STRUCTURE_STREAM = 0
_NUGGET_STREAM = 1
_SHARED_STREAM = 2


def grid_size(extent, resolution):
    """Return the number of nodes per side, floor(extent/resolution) + 1."""
    if not extent > 0:
        raise ValueError(f'extent must be positive, got {extent}')
    if not resolution > 0:
        raise ValueError(f'resolution must be positive, got {resolution}')
    return int(np.floor(extent / resolution + 1e-9)) + 1


@dataclass(frozen=True)
class FieldRealization:
    """One simulated field, values indexed ``[iy, ix]``.

    Node ``point_id`` is ``iy * n_side + ix``; node coordinates are
    ``(ix * resolution, iy * resolution)``.
    """

    extent: float
    resolution: float
    values: np.ndarray
    model: ExponentialVariogramModel
    seed: int
    smooth_values: np.ndarray = None
    variable_id: int = 0
    method: str = ''

    def __post_init__(self):
        for name in ('values', 'smooth_values'):
            array = getattr(self, name)
            if array is None:
                continue
            array = np.array(array, dtype=float)
            if not np.all(np.isfinite(array)):
                raise SimulationError(f'{name} holds non-finite values')
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @property
    def n_side(self):
        """Number of nodes along each axis."""
        return self.values.shape[0]

    @property
    def n_nodes(self):
        """Total number of grid nodes."""
        return self.values.size

    @property
    def node_ids(self):
        """All node point ids in row-major order."""
        return np.arange(self.n_nodes, dtype=np.int64)

    def node_coordinates(self, point_ids=None):
        """Return x and y arrays of the given (default all) nodes."""
        point_ids = self.node_ids if point_ids is None else \
            np.asarray(point_ids, dtype=np.int64)
        iy, ix = np.divmod(point_ids, self.n_side)
        return ix * self.resolution, iy * self.resolution

    def dataset(self, point_ids=None):
        """Return the given (default all) nodes as a SpatialDataset."""
        point_ids = self.node_ids if point_ids is None else \
            np.sort(np.asarray(point_ids, dtype=np.int64))
        x, y = self.node_coordinates(point_ids)
        return SpatialDataset(point_ids, x, y, self.values.ravel()[point_ids],
                              self.variable_id)


@dataclass(frozen=True)
class MultiFieldRealization:
    """Correlated fields sharing one grid.

    ``lmc`` is the coregionalization the fields follow when the construction
    has one (simulate_multivariate_grf), otherwise None.
    """

    fields: tuple
    correlation: float
    seed: int
    lmc: CoregionalizationModel = None
    mixing: np.ndarray = field(default=None, repr=False)

    def __len__(self):
        return len(self.fields)

    def __getitem__(self, variable_id):
        return self.fields[variable_id]

    @property
    def n_nodes(self):
        """Number of nodes of the shared grid."""
        return self.fields[0].n_nodes

    def dataset(self, point_ids=None):
        """Return the nodes of every variable as one SpatialDataset."""
        return SpatialDataset.concat(fld.dataset(point_ids)
                                     for fld in self.fields)


def _torus_lags(size, resolution):
    steps = np.arange(size)
    lags = np.minimum(steps, size - steps) * resolution
    return np.hypot(lags[:, None], lags[None, :])


def _spectrum_at(size, resolution, theta, sill):
    base = sill * np.exp(-theta * _torus_lags(size, resolution))
    return np.real(np.fft.fft2(base))


def _embedding_spectrum(n_side, resolution, theta, sill=1.0):
    """Return the circulant eigenvalues of the covariance, or None.

    The periodic grid starts at 2 (n - 1) nodes per side and is doubled up to
    ``settings.EMBEDDING_DOUBLINGS`` times until no eigenvalue is below
    ``-EMBEDDING_TOLERANCE`` times the largest one.
    """
    size = max(2 * (n_side - 1), 2)
    for attempt in range(settings.EMBEDDING_DOUBLINGS + 1):
        spectrum = _spectrum_at(size, resolution, theta, sill)
        floor = -settings.EMBEDDING_TOLERANCE * spectrum.max()
        if spectrum.min() >= floor:
            return np.clip(spectrum, 0.0, None)
        log.debug('Circulant embedding of %d nodes per side not PSD '
                  '(min eigenvalue %.3g), attempt %d', size, spectrum.min(),
                  attempt + 1)
        size *= 2
    return None


def _embedding_fields(spectrum, n_side, noise):
    """Return the smooth field of a spectrum driven by complex ``noise``."""
    size = spectrum.shape[0]
    scaled = np.sqrt(spectrum / size ** 2) * noise
    return np.real(np.fft.fft2(scaled))[:n_side, :n_side]


def _complex_noise(rng, size):
    return rng.standard_normal((size, size)) + \
        1j * rng.standard_normal((size, size))


def _cholesky_factor(n_side, resolution, theta):
    """Return the lower Cholesky factor of the unit-sill node covariance."""
    ix, iy = np.meshgrid(np.arange(n_side), np.arange(n_side))
    nodes = np.column_stack((ix.ravel(), iy.ravel())) * resolution
    covariance = np.exp(-theta * cdist(nodes, nodes))
    covariance[np.diag_indices_from(covariance)] += 1e-10
    return cholesky(covariance, lower=True)


def _unit_fields(n_side, resolution, theta, rngs):
    """Return one independent unit-sill smooth field per generator.

    Returns:
        tuple: (list of fields, method name)
    """
    n_nodes = n_side ** 2
    if n_nodes <= settings.CHOLESKY_MAX_NODES:
        factor = _cholesky_factor(n_side, resolution, theta)
        return [(factor @ rng.standard_normal(n_nodes)).reshape(n_side, n_side)
                for rng in rngs], 'cholesky'
    spectrum = _embedding_spectrum(n_side, resolution, theta)
    if spectrum is None:
        raise SimulationError(
            f'circulant embedding is not positive semidefinite and '
            f'{n_nodes} nodes exceed the Cholesky limit of '
            f'{settings.CHOLESKY_MAX_NODES}')
    fields = [_embedding_fields(spectrum, n_side,
                                _complex_noise(rng, spectrum.shape[0]))
              for rng in rngs]
    return fields, 'embedding'


def simulate_grf(extent, resolution, model, seed):
    """Simulate a zero-mean Gaussian field with an exponential variogram.

    The smooth part has covariance partial_sill * exp(-theta h); independent
    node noise of variance ``model.nugget`` is added on top.
    """
    n_side = grid_size(extent, resolution)
    rng = rng_stream(seed, _STRUCTURE_STREAM)
    (unit,), method = _unit_fields(n_side, resolution, model.theta, [rng])
    smooth = np.sqrt(model.partial_sill) * unit
    noise = rng_stream(seed, _NUGGET_STREAM).standard_normal(smooth.shape)
    values = smooth + np.sqrt(model.nugget) * noise
    log.debug('Simulated %d x %d field (%s), seed %s', n_side, n_side,
              method, seed)
    return FieldRealization(float(extent), float(resolution), values, model,
                            int(seed), smooth_values=smooth, method=method)


def correlation_matrix(correlation, n_variables=3):
    """Return the equicorrelation matrix with off-diagonal ``correlation``."""
    if not 0 <= correlation < 1:
        raise ValueError(f'correlation must be in [0, 1), got {correlation}')
    matrix = np.full((n_variables, n_variables), float(correlation))
    np.fill_diagonal(matrix, 1.0)
    return matrix


def simulate_multivariate_grf(extent, resolution, model, correlation, seed,
                              n_variables=3):
    """Simulate correlated fields Z_i = sum_k A_ik W_k.

    W_k are independent fields with the structural variogram of ``model`` and
    A is the lower Cholesky factor of the equicorrelation matrix, so every
    marginal follows ``model`` and the cross-covariance is
    correlation * partial_sill * exp(-theta h). The nugget noise is mixed by
    the same A, which makes the fields follow the LMC returned with them.
    """
    # pylint: disable=too-many-arguments,too-many-locals
    mixing = cholesky(correlation_matrix(correlation, n_variables),
                      lower=True)
    n_side = grid_size(extent, resolution)
    rngs = [rng_stream(seed, _STRUCTURE_STREAM, k) for k in range(n_variables)]
    units, method = _unit_fields(n_side, resolution, model.theta, rngs)
    units = np.stack(units)
    noises = np.stack([rng_stream(seed, _NUGGET_STREAM, k).standard_normal(
        (n_side, n_side)) for k in range(n_variables)])
    smooth = np.sqrt(model.partial_sill) * np.tensordot(mixing, units, 1)
    nugget = np.sqrt(model.nugget) * np.tensordot(mixing, noises, 1)
    fields = tuple(
        FieldRealization(float(extent), float(resolution),
                         smooth[i] + nugget[i], model, int(seed),
                         smooth_values=smooth[i], variable_id=i,
                         method=method)
        for i in range(n_variables))
    lmc = CoregionalizationModel.from_models([model] * n_variables,
                                             correlation)
    return MultiFieldRealization(fields, float(correlation), int(seed), lmc,
                                 mixing)


def simulate_surrogate_fields(extent, resolution, models, correlation, seed):
    """Simulate correlated fields whose marginals follow their own models.

    Every variable filters the sum sqrt(r) W + sqrt(1 - r) W_i of a shared
    and an own white noise through its own covariance spectrum. Each
    marginal thus has exactly its model's covariance, while fields with
    equal models are correlated by ``correlation`` at every lag.
    """
    # pylint: disable=too-many-locals
    if not 0 <= correlation < 1:
        raise ValueError(f'correlation must be in [0, 1), got {correlation}')
    n_side = grid_size(extent, resolution)
    spectra = []
    for model in models:
        spectrum = _embedding_spectrum(n_side, resolution, model.theta,
                                       model.partial_sill)
        if spectrum is None:
            raise SimulationError('circulant embedding is not positive '
                                  'semidefinite for the surrogate fields')
        spectra.append(spectrum)
    size = max(spectrum.shape[0] for spectrum in spectra)
    if any(spectrum.shape[0] != size for spectrum in spectra):
        spectra = [np.clip(_spectrum_at(size, resolution, model.theta,
                                        model.partial_sill), 0.0, None)
                   for model in models]
    shared = _complex_noise(rng_stream(seed, _SHARED_STREAM), size)
    fields = []
    for i, (model, spectrum) in enumerate(zip(models, spectra)):
        own = _complex_noise(rng_stream(seed, _STRUCTURE_STREAM, i), size)
        noise = np.sqrt(correlation) * shared + np.sqrt(1 - correlation) * own
        smooth = _embedding_fields(spectrum, n_side, noise)
        nugget = rng_stream(seed, _NUGGET_STREAM, i).standard_normal(
            smooth.shape)
        fields.append(FieldRealization(
            float(extent), float(resolution),
            smooth + np.sqrt(model.nugget) * nugget, model, int(seed),
            smooth_values=smooth, variable_id=i, method='embedding'))
    return MultiFieldRealization(tuple(fields), float(correlation), int(seed))


def _available_nodes(realization, reserved):
    nodes = np.arange(realization.n_nodes, dtype=np.int64)
    if reserved is None or len(reserved) == 0:
        return nodes
    return np.setdiff1d(nodes, np.asarray(reserved, dtype=np.int64))


def sample_observations(realization, n, seed, reserved=None):
    """Draw ``n`` distinct nodes uniformly, excluding ``reserved`` ones.

    Args:
        realization (FieldRealization): field to sample values from.
        n (int): number of nodes.
        seed: integer, SeedSequence or numpy Generator.
        reserved: point ids that may not be drawn (test points).

    Returns:
        SpatialDataset: the sampled nodes ordered by point_id.
    """
    available = _available_nodes(realization, reserved)
    if not 0 < n <= len(available):
        raise ValueError(f'cannot sample {n} of {len(available)} available '
                         'nodes')
    rng = np.random.default_rng(seed)
    chosen = rng.choice(available, size=int(n), replace=False)
    return realization.dataset(chosen)


def select_test_points(realization, n, seed):
    """Select ``n`` fixed test nodes with their true values.

    The seed is scenario-level: the same field and seed always give the same
    test set. Pass ``dataset.point_id`` as ``reserved`` to
    :func:`sample_observations` to keep observations off the test nodes.
    """
    if not 0 < n <= realization.n_nodes:
        raise ValueError(f'cannot select {n} test points among '
                         f'{realization.n_nodes} nodes')
    rng = np.random.default_rng(seed)
    chosen = rng.choice(realization.n_nodes, size=int(n), replace=False)
    return realization.dataset(chosen)


def field_to_frame(realization):
    """Return a realization as rows of node_x_m, node_y_m, value.

    Multivariate realizations get a variable_id column, one block of rows per
    variable.
    """
    if isinstance(realization, MultiFieldRealization):
        frames = []
        for fld in realization.fields:
            frame = field_to_frame(fld)
            frame['variable_id'] = fld.variable_id
            frames.append(frame)
        return pd.concat(frames, ignore_index=True)
    x, y = realization.node_coordinates()
    return pd.DataFrame({'node_x_m': x, 'node_y_m': y,
                         'value': realization.values.ravel()})


def surrogate_models(models=settings.SURROGATE_MODELS):
    """Return ExponentialVariogramModels from (nugget, sill, scale) tuples."""
    return [ExponentialVariogramModel(nugget, sill, scale=scale)
            for nugget, sill, scale in models]


def make_case_study_surrogate(n_points=settings.SURROGATE_POINTS,
                              extent=settings.SURROGATE_EXTENT,
                              resolution=settings.GRID_RESOLUTION,
                              models=settings.SURROGATE_MODELS,
                              correlation=settings.SURROGATE_CORRELATION,
                              seed=0):
    """Return a synthetic case-study table with three collocated variables.

    Columns are point_id, x_m, y_m, var_1, var_2, var_3; the rows are
    ``n_points`` distinct grid nodes of surrogate fields.
    """
    # pylint: disable=too-many-arguments
    multi = simulate_surrogate_fields(extent, resolution,
                                      surrogate_models(models), correlation,
                                      seed)
    points = sample_observations(multi[0], n_points,
                                 rng_stream(seed, _SHARED_STREAM, 1))
    frame = pd.DataFrame({'point_id': points.point_id, 'x_m': points.x,
                          'y_m': points.y})
    for fld in multi.fields:
        frame[f'var_{fld.variable_id + 1}'] = \
            fld.values.ravel()[points.point_id]
    log.info('Generated surrogate case-study data: %d points', len(frame))
    return frame
