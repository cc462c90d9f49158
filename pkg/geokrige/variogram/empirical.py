"""Empirical semi-variograms and cross-variograms (Matheron estimator)."""
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from geokrige import log, settings
from geokrige.utils import DataError, NoUsablePairsError

__all__ = ('EmpiricalVariogram', 'empirical_variogram',
           'empirical_cross_variogram', 'lag_edges', 'point_pairs')


def lag_edges(max_dist, n_bins):
    """Return the n_bins + 1 edges of equal-width bins over (0, max_dist]."""
    if not max_dist > 0:
        raise ValueError(f'max_dist must be positive, got {max_dist}')
    if int(n_bins) < 1:
        raise ValueError(f'n_bins must be positive, got {n_bins}')
    return np.linspace(0.0, float(max_dist), int(n_bins) + 1)


@dataclass(frozen=True)
class EmpiricalVariogram:
    """Binned empirical semi-variogram.

    Bins are left-open, right-closed intervals of equal width over
    (0, max_dist]. Empty bins carry ``nan`` as gamma and are skipped by fits.
    """

    lag_center: np.ndarray
    gamma_hat: np.ndarray
    n_pairs: np.ndarray
    max_dist: float
    n_bins: int
    sample_variance: float = float('nan')
    zero_lag_pairs: int = 0
    zero_lag_gamma: float = float('nan')
    diagnostics: dict = field(default_factory=dict)

    @property
    def bin_width(self):
        """Width of each lag bin."""
        return self.max_dist / self.n_bins

    @property
    def nonempty(self):
        """Boolean mask of bins holding at least one pair."""
        return self.n_pairs > 0

    @property
    def is_empty(self):
        """Whether no pair fell within ``max_dist``."""
        return not np.any(self.nonempty)

    def shares_bins(self, other):
        """Whether ``other`` uses the same lag bins."""
        return self.n_bins == other.n_bins and \
            np.isclose(self.max_dist, other.max_dist)

    def as_frame(self, model=None, i=0, j=0):
        """Return the bins as a DataFrame, with model gamma if given."""
        frame = pd.DataFrame({'lag_center_m': self.lag_center,
                              'gamma_hat': self.gamma_hat,
                              'n_pairs': self.n_pairs})
        if model is not None:
            frame['model_gamma'] = model.gamma(self.lag_center, i, j)
        return frame


def point_pairs(coordinates, max_dist):
    """Return (i, j, distance) of unordered pairs closer than ``max_dist``.

    Pairs are sorted by (i, j) with i < j, so sums over them do not depend
    on the tree layout.
    """
    coordinates = np.asarray(coordinates, dtype=float)
    tree = cKDTree(coordinates)
    pairs = tree.query_pairs(max_dist * (1 + 1e-9) + 1e-9,
                             output_type='ndarray')
    if len(pairs) == 0:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, np.empty(0)
    first, second = np.sort(pairs, axis=1).T
    order = np.lexsort((second, first))
    first, second = first[order], second[order]
    distances = np.hypot(coordinates[first, 0] - coordinates[second, 0],
                         coordinates[first, 1] - coordinates[second, 1])
    keep = distances <= max_dist
    return first[keep], second[keep], distances[keep]


def _bin_products(distances, products, max_dist, n_bins):
    """Accumulate half products into lag bins; return centers, gamma, counts.

    Also returns the number and mean half product of distance-0 pairs.
    """
    edges = lag_edges(max_dist, n_bins)
    bins = np.searchsorted(edges, distances, side='left') - 1
    zero = distances == 0
    valid = (bins >= 0) & (bins < n_bins) & ~zero
    counts = np.bincount(bins[valid], minlength=n_bins)
    sums = np.bincount(bins[valid], weights=products[valid],
                       minlength=n_bins)
    with np.errstate(invalid='ignore', divide='ignore'):
        gamma = np.where(counts > 0, sums / (2 * counts), np.nan)
    n_zero = int(zero.sum())
    zero_gamma = float(products[zero].sum() / (2 * n_zero)) if n_zero \
        else float('nan')
    centers = (edges[:-1] + edges[1:]) / 2
    return centers, gamma, counts, n_zero, zero_gamma


def empirical_variogram(dataset, max_dist=settings.MAX_VGM_DIST,
                        n_bins=settings.N_BINS, variable_id=None):
    """Return the Matheron semi-variogram of one variable of ``dataset``.

    gamma_hat = sum((Z(s_i) - Z(s_j))^2) / (2 |N|) over unordered pairs per
    bin. Distance-0 pairs are excluded from the bins and reported as the
    zero-lag diagnostic instead.
    """
    if variable_id is not None:
        dataset = dataset.select(variable_id)
    elif len(dataset.variables) > 1:
        raise DataError('dataset holds several variables, pick variable_id')
    if len(dataset) < 2:
        raise DataError(f'need at least 2 points, got {len(dataset)}')
    first, second, distances = point_pairs(dataset.coordinates, max_dist)
    products = (dataset.value[first] - dataset.value[second]) ** 2
    centers, gamma, counts, n_zero, zero_gamma = _bin_products(
        distances, products, max_dist, n_bins)
    emp = EmpiricalVariogram(centers, gamma, counts, float(max_dist),
                             int(n_bins),
                             sample_variance=float(np.var(dataset.value,
                                                          ddof=1)),
                             zero_lag_pairs=n_zero, zero_lag_gamma=zero_gamma,
                             diagnostics={'mode': 'direct',
                                          'n_points': len(dataset)})
    if emp.is_empty:
        log.warning('No point pair within %s m: empirical variogram is empty',
                    max_dist)
    return emp


def _collocated_values(ds_i, ds_j):
    """Return coordinates and both values at locations carrying both."""
    frame_i = pd.DataFrame({'x': ds_i.x, 'y': ds_i.y, 'z_i': ds_i.value})
    frame_j = pd.DataFrame({'x': ds_j.x, 'y': ds_j.y, 'z_j': ds_j.value})
    frame_i = frame_i.groupby(['x', 'y'], sort=True).mean()
    frame_j = frame_j.groupby(['x', 'y'], sort=True).mean()
    joined = frame_i.join(frame_j, how='inner').reset_index()
    return (joined[['x', 'y']].to_numpy(), joined['z_i'].to_numpy(),
            joined['z_j'].to_numpy())


def _collocated_cross(ds_i, ds_j, max_dist, n_bins):
    coordinates, z_i, z_j = _collocated_values(ds_i, ds_j)
    if len(coordinates) < 2:
        raise NoUsablePairsError('collocated',
                                 {'collocated_locations': len(coordinates)})
    first, second, distances = point_pairs(coordinates, max_dist)
    products = (z_i[first] - z_i[second]) * (z_j[first] - z_j[second])
    centers, gamma, counts, _, _ = _bin_products(distances, products,
                                                 max_dist, n_bins)
    if not counts.any():
        raise NoUsablePairsError('collocated',
                                 {'collocated_locations': len(coordinates),
                                  'pairs': 0})
    return EmpiricalVariogram(
        centers, gamma, counts, float(max_dist), int(n_bins),
        sample_variance=float(np.cov(z_i, z_j)[0, 1]),
        diagnostics={'mode': 'collocated',
                     'collocated_locations': len(coordinates)})


def _heterotopic_cross(ds_i, ds_j, max_dist, n_bins):
    """Cross-structure from the sample cross-covariance.

    gamma_ij(h) = C_ij(0) - C_ij(h); C_ij(0) comes from collocated pairs when
    there are any, else from the first nonempty bin. The nugget fitted later
    absorbs the offset this choice introduces.
    """
    mean_i, mean_j = ds_i.value.mean(), ds_j.value.mean()
    tree_j = cKDTree(ds_j.coordinates)
    tree_i = cKDTree(ds_i.coordinates)
    pairs = tree_i.sparse_distance_matrix(
        tree_j, max_dist * (1 + 1e-9) + 1e-9, output_type='ndarray')
    pairs = np.sort(pairs, order=('i', 'j'))
    first, second = pairs['i'].astype(np.int64), pairs['j'].astype(np.int64)
    distances = np.hypot(ds_i.x[first] - ds_j.x[second],
                         ds_i.y[first] - ds_j.y[second])
    positive = distances > 0
    first, second = first[positive], second[positive]
    distances = distances[positive]
    # Collocated pairs come from an exact coordinate match instead
    zero_i, zero_j = _exact_matches(ds_i, ds_j)
    first = np.concatenate((zero_i, first))
    second = np.concatenate((zero_j, second))
    distances = np.concatenate((np.zeros(len(zero_i)), distances))
    keep = distances <= max_dist
    first, second, distances = first[keep], second[keep], distances[keep]
    products = 2 * (ds_i.value[first] - mean_i) * (ds_j.value[second] - mean_j)
    centers, cov, counts, n_zero, zero_cov = _bin_products(
        distances, products, max_dist, n_bins)
    if not counts.any():
        raise NoUsablePairsError('heterotopic',
                                 {'cross_pairs': len(distances),
                                  'zero_lag_pairs': n_zero})
    if n_zero:
        cov_zero, source = zero_cov, 'collocated pairs'
    else:
        cov_zero = cov[np.flatnonzero(counts)[0]]
        source = 'first nonempty bin'
    gamma = np.where(counts > 0, cov_zero - cov, np.nan)
    log.debug('Heterotopic cross-variogram: C(0) from %s', source)
    return EmpiricalVariogram(
        centers, gamma, counts, float(max_dist), int(n_bins),
        sample_variance=float(cov_zero), zero_lag_pairs=n_zero,
        diagnostics={'mode': 'heterotopic', 'zero_lag_source': source,
                     'cross_covariance_zero': float(cov_zero),
                     'warning': 'covariance-based estimator, '
                                'biased when means drift'})


def _exact_matches(ds_i, ds_j):
    """Return index pairs of points of ds_i and ds_j at the same location."""
    frame_i = pd.DataFrame({'x': ds_i.x, 'y': ds_i.y,
                            'i': np.arange(len(ds_i))})
    frame_j = pd.DataFrame({'x': ds_j.x, 'y': ds_j.y,
                            'j': np.arange(len(ds_j))})
    merged = frame_i.merge(frame_j, on=['x', 'y']).sort_values(['i', 'j'])
    return (merged['i'].to_numpy(dtype=np.int64),
            merged['j'].to_numpy(dtype=np.int64))


def empirical_cross_variogram(ds_i, ds_j, max_dist=settings.MAX_VGM_DIST,
                              n_bins=settings.N_BINS, heterotopic=None):
    """Return the empirical cross-variogram of two single-variable datasets.

    Collocated mode averages (Z_i(s) - Z_i(s+h)) (Z_j(s) - Z_j(s+h)) / 2 over
    location pairs carrying both variables at both ends. Heterotopic mode
    estimates C_ij(0) - C_ij(h) from the sample cross-covariance. With
    ``heterotopic=None`` the mode is collocated whenever at least two
    locations carry both variables.
    """
    if heterotopic is None:
        coordinates, _, _ = _collocated_values(ds_i, ds_j)
        heterotopic = len(coordinates) < 2
    if heterotopic:
        return _heterotopic_cross(ds_i, ds_j, max_dist, n_bins)
    return _collocated_cross(ds_i, ds_j, max_dist, n_bins)
