"""Exponential variogram model and linear model of coregionalization.

Both share the structural function 1 - exp(-theta * h). A univariate model is
a 1x1 coregionalization, so kriging code can address either one through
``gamma(h, i, j)`` and ``covariance(h, i, j)``.
"""
import math
from abc import ABC, abstractmethod

import numpy as np

from geokrige import settings

__all__ = ('VariogramModelBase', 'ExponentialVariogramModel',
           'CoregionalizationModel', 'model_gamma', 'practical_range',
           'project_psd')


def project_psd(matrix):
    """Return the nearest symmetric PSD matrix by eigenvalue clipping."""
    matrix = np.asarray(matrix, dtype=float)
    symmetric = (matrix + matrix.T) / 2
    eigenvalues, eigenvectors = np.linalg.eigh(symmetric)
    clipped = np.clip(eigenvalues, 0.0, None)
    projected = (eigenvectors * clipped) @ eigenvectors.T
    return (projected + projected.T) / 2


class VariogramModelBase(ABC):
    """Common interface of the variogram models."""

    #: Number of variables addressed by the model
    n_variables = 1

    @property
    @abstractmethod
    def theta(self):
        """Shape parameter of the shared exponential structure."""

    @abstractmethod
    def nugget_matrix(self):
        """Return the nugget coregionalization matrix."""

    @abstractmethod
    def structure_matrix(self):
        """Return the structural coregionalization matrix."""

    def gamma(self, h, i=0, j=0):
        """Return the (cross) semi-variogram between variables i and j.

        The model passes through the origin: gamma(0) is exactly 0, while its
        limit for h -> 0+ is the nugget.
        """
        h = np.asarray(h, dtype=float)
        if np.any(h < 0):
            raise ValueError('lag distances must be non-negative')
        nugget = self.nugget_matrix()[i, j]
        sill = self.structure_matrix()[i, j]
        value = np.where(h > 0,
                         nugget + sill * -np.expm1(-self.theta * h), 0.0)
        return value if value.ndim else float(value)

    def covariance(self, h, i=0, j=0):
        """Return the (cross) covariance C_ij(h) of the model.

        C_ij(0) is the total sill; for h > 0 only the structure remains.
        """
        h = np.asarray(h, dtype=float)
        if np.any(h < 0):
            raise ValueError('lag distances must be non-negative')
        nugget = self.nugget_matrix()[i, j]
        sill = self.structure_matrix()[i, j]
        value = sill * np.exp(-self.theta * h) + np.where(h == 0, nugget, 0.0)
        return value if value.ndim else float(value)

    def structural_covariance(self, h, i=0, j=0):
        """Return sill_ij * exp(-theta h), the covariance without nugget."""
        sill = self.structure_matrix()[i, j]
        return sill * np.exp(-self.theta * np.asarray(h, dtype=float))


class ExponentialVariogramModel(VariogramModelBase):
    """Exponential semi-variogram c0 + sill * (1 - exp(-theta * h))."""

    def __init__(self, nugget=0.0, partial_sill=1.0, theta=None, scale=None):
        """Validate the parameters.

        Args:
            nugget (float): c0 >= 0, the discontinuity at the origin.
            partial_sill (float): plateau above the nugget, > 0.
            theta (float): shape parameter > 0.
            scale (float): 1 / theta, used when ``theta`` is not given.
        """
        if theta is None:
            if scale is None:
                raise ValueError('either theta or scale must be set')
            theta = 1.0 / scale
        self.nugget = float(nugget)
        self.partial_sill = float(partial_sill)
        self._theta = float(theta)
        if not (math.isfinite(self.nugget) and self.nugget >= 0):
            raise ValueError(f'nugget must be >= 0, got {nugget}')
        if not (math.isfinite(self.partial_sill) and self.partial_sill > 0):
            raise ValueError(f'partial sill must be > 0, got {partial_sill}')
        if not (math.isfinite(self._theta) and self._theta > 0):
            raise ValueError(f'theta must be > 0, got {theta}')

    @classmethod
    def from_range(cls, range_m, nugget=0.0, partial_sill=1.0):
        """Return a model whose conventional range 3/theta is ``range_m``."""
        return cls(nugget, partial_sill, theta=3.0 / range_m)

    @property
    def theta(self):
        return self._theta

    @property
    def scale(self):
        """Scale parameter 1 / theta, in meters."""
        return 1.0 / self._theta

    @property
    def range3(self):
        """Conventional practical range 3 / theta (scale = range / 3)."""
        return 3.0 / self._theta

    @property
    def total_sill(self):
        """Field variance c0 + partial sill."""
        return self.nugget + self.partial_sill

    def nugget_matrix(self):
        return np.array([[self.nugget]])

    def structure_matrix(self):
        return np.array([[self.partial_sill]])

    def scaled(self, factor):
        """Return the model of data multiplied by ``factor``."""
        factor = float(factor) ** 2
        return self.__class__(self.nugget * factor,
                              self.partial_sill * factor, self._theta)

    def as_dict(self):
        """Return the model parameters as a serializable dictionary."""
        return {'nugget': self.nugget, 'partial_sill': self.partial_sill,
                'theta': self._theta, 'scale': self.scale,
                'range3': self.range3,
                'practical_range': practical_range(self)}

    @classmethod
    def from_dict(cls, model_dict):
        """Return a model from ``as_dict`` output or a subset of it."""
        return cls(model_dict.get('nugget', 0.0),
                   model_dict.get('partial_sill', 1.0),
                   theta=model_dict.get('theta'),
                   scale=model_dict.get('scale'))

    def __eq__(self, other):
        if not isinstance(other, self.__class__):
            return NotImplemented
        return (self.nugget, self.partial_sill, self._theta) == \
            (other.nugget, other.partial_sill, other._theta)

    def __hash__(self):
        return hash((self.nugget, self.partial_sill, self._theta))

    def __repr__(self):
        return (f'{self.__class__.__name__}(nugget={self.nugget:.6g}, '
                f'partial_sill={self.partial_sill:.6g}, '
                f'theta={self._theta:.6g})')


class CoregionalizationModel(VariogramModelBase):
    """Linear model of coregionalization with one exponential structure.

    gamma_ij(h) = B_nugget[i, j] + B_structure[i, j] * (1 - exp(-theta h))
    for h > 0. Both matrices are symmetric positive semidefinite, which
    makes every joint covariance matrix built from the model valid.
    """

    def __init__(self, theta, b_nugget, b_structure):
        self._theta = float(theta)
        if not (math.isfinite(self._theta) and self._theta > 0):
            raise ValueError(f'theta must be > 0, got {theta}')
        self.b_nugget = self._checked(b_nugget, 'nugget')
        self.b_structure = self._checked(b_structure, 'structure')
        if self.b_nugget.shape != self.b_structure.shape:
            raise ValueError('coregionalization matrices differ in shape')
        self.n_variables = self.b_nugget.shape[0]

    @staticmethod
    def _checked(matrix, name):
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f'{name} matrix must be square')
        if not np.all(np.isfinite(matrix)):
            raise ValueError(f'{name} matrix must be finite')
        # Tolerances are relative to the matrix scale, floored at 1
        size = max(1.0, float(np.abs(matrix).max(initial=0.0)))
        if not np.allclose(matrix, matrix.T, rtol=0, atol=1e-12 * size):
            raise ValueError(f'{name} matrix must be symmetric')
        matrix = (matrix + matrix.T) / 2
        if np.linalg.eigvalsh(matrix).min() < settings.PSD_TOLERANCE * size:
            raise ValueError(f'{name} matrix is not positive semidefinite')
        matrix.setflags(write=False)
        return matrix

    @classmethod
    def from_models(cls, models, correlation=0.0):
        """Return an LMC whose marginals are ``models`` (sharing theta).

        Off-diagonal entries are ``correlation`` times the geometric mean of
        the diagonal ones, for the structure and the nugget alike.
        """
        theta = models[0].theta
        if any(not math.isclose(m.theta, theta) for m in models):
            raise ValueError('models must share theta')
        nuggets = np.array([m.nugget for m in models])
        sills = np.array([m.partial_sill for m in models])
        mix = np.full((len(models),) * 2, float(correlation))
        np.fill_diagonal(mix, 1.0)
        return cls(theta, mix * np.sqrt(np.outer(nuggets, nuggets)),
                   mix * np.sqrt(np.outer(sills, sills)))

    @property
    def theta(self):
        return self._theta

    @property
    def scale(self):
        """Scale parameter 1 / theta, in meters."""
        return 1.0 / self._theta

    def nugget_matrix(self):
        return self.b_nugget

    def structure_matrix(self):
        return self.b_structure

    def direct_model(self, i):
        """Return the univariate exponential model of variable ``i``."""
        return ExponentialVariogramModel(self.b_nugget[i, i],
                                         self.b_structure[i, i], self._theta)

    def correlations(self):
        """Return the structural correlation matrix B_ij / sqrt(B_ii B_jj)."""
        diagonal = np.sqrt(np.diag(self.b_structure))
        return self.b_structure / np.outer(diagonal, diagonal)

    def as_dict(self):
        """Return the model parameters as a serializable dictionary."""
        return {'theta': self._theta, 'scale': self.scale,
                'b_nugget': self.b_nugget.tolist(),
                'b_structure': self.b_structure.tolist()}

    @classmethod
    def from_dict(cls, model_dict):
        """Return a model from ``as_dict`` output."""
        theta = model_dict.get('theta') or 1.0 / model_dict['scale']
        return cls(theta, model_dict['b_nugget'], model_dict['b_structure'])

    def __repr__(self):
        return (f'{self.__class__.__name__}(theta={self._theta:.6g}, '
                f'b_nugget={self.b_nugget.tolist()}, '
                f'b_structure={self.b_structure.tolist()})')


def model_gamma(model, h, i=0, j=0):
    """Return the model semi-variogram between variables i and j at ``h``."""
    return model.gamma(h, i, j)


def practical_range(model):
    """Return log(partial_sill / 0.05) / theta.

    This is the distance where the exponential structure has decayed to a
    covariance of 0.05; it equals the conventional ``range3`` only when the
    partial sill is 1 (approximately).
    """
    threshold = settings.PRACTICAL_RANGE_THRESHOLD
    return math.log(model.partial_sill / threshold) / model.theta
