"""Linear model of coregionalization fitted to direct and cross variograms.

The fit alternates two steps until the pooled weighted objective settles:
with theta fixed, every entry of B_nugget and B_structure is a weighted
linear regression on [1, 1 - exp(-theta h)], after which both matrices are
projected onto the PSD cone; then theta is updated by a bounded line search
on the pooled residual.
"""
from itertools import combinations

import numpy as np
from scipy.optimize import minimize_scalar, nnls

from geokrige import log, settings
from geokrige.utils import DataError, IncompatibleBinsError
from geokrige.variogram.fitting import FitDiagnostics
from geokrige.variogram.models import CoregionalizationModel, project_psd

__all__ = ('fit_lmc', 'cross_pairs')

#: Half width, in log(theta), of the line search window around theta
_LOG_THETA_WINDOW = 4.0


def cross_pairs(n_variables):
    """Return the (i, j), i < j, pairs in the order ``fit_lmc`` expects."""
    return list(combinations(range(n_variables), 2))


class _Bins:
    """Nonempty bins of one empirical variogram, with fit weights."""

    def __init__(self, emp):
        if emp is None:
            self.lags = self.gamma = self.root_weights = np.empty(0)
            return
        mask = emp.nonempty
        self.lags = emp.lag_center[mask]
        self.gamma = emp.gamma_hat[mask]
        self.root_weights = np.sqrt(emp.n_pairs[mask] / self.lags ** 2)

    def __len__(self):
        return len(self.lags)

    def design(self, theta, allow_nugget):
        """Return the weighted design matrix and response."""
        columns = [-np.expm1(-theta * self.lags)]
        if allow_nugget:
            columns.insert(0, np.ones_like(self.lags))
        design = np.column_stack(columns) * self.root_weights[:, None]
        return design, self.gamma * self.root_weights

    def scale(self):
        """Return the weighted sum of squares of the binned values."""
        return float(np.sum((self.root_weights * self.gamma) ** 2))

    def residual(self, theta, nugget, sill):
        """Return the weighted residual sum of squares."""
        curve = nugget + sill * -np.expm1(-theta * self.lags)
        return float(np.sum((self.root_weights * (self.gamma - curve)) ** 2))


class _LmcProblem:
    """Pooled weighted least squares problem over all direct and cross bins."""

    def __init__(self, direct, cross, allow_nugget):
        self.n_variables = len(direct)
        self.allow_nugget = allow_nugget
        self.bins = {}
        for i, emp in enumerate(direct):
            self.bins[(i, i)] = _Bins(emp)
        for (i, j), emp in zip(cross_pairs(self.n_variables), cross):
            self.bins[(i, j)] = _Bins(emp)

    def coefficients(self, theta):
        """Return (B_nugget, B_structure) for fixed theta, projected to PSD."""
        size = self.n_variables
        b_nugget, b_structure = np.zeros((size, size)), np.zeros((size, size))
        for (i, j), bins in self.bins.items():
            if not len(bins):
                continue
            design, response = bins.design(theta, self.allow_nugget)
            if i == j:
                solution, _ = nnls(design, response)
            else:
                solution = np.linalg.lstsq(design, response, rcond=None)[0]
            nugget, sill = solution if self.allow_nugget \
                else (0.0, solution[0])
            b_nugget[i, j] = b_nugget[j, i] = nugget
            b_structure[i, j] = b_structure[j, i] = sill
        return project_psd(b_nugget), project_psd(b_structure)

    def objective(self, theta, b_nugget, b_structure):
        """Return the pooled weighted residual sum of squares."""
        return sum(bins.residual(theta, b_nugget[i, j], b_structure[i, j])
                   for (i, j), bins in self.bins.items() if len(bins))

    def scale(self):
        """Return the objective of a zero model, the size of the data."""
        return sum(bins.scale() for bins in self.bins.values())

    def profile(self, theta):
        """Return the objective with B re-solved for this theta."""
        return self.objective(theta, *self.coefficients(theta))


def _check_inputs(direct, cross):
    n_variables = len(direct)
    if n_variables < 1:
        raise DataError('need at least one direct variogram')
    expected = len(cross_pairs(n_variables))
    if len(cross) != expected:
        raise DataError(f'need {expected} cross variograms for '
                        f'{n_variables} variables, got {len(cross)}')
    reference = direct[0]
    for emp in list(direct) + [emp for emp in cross if emp is not None]:
        if not reference.shares_bins(emp):
            raise IncompatibleBinsError(
                f'expected {reference.n_bins} bins up to {reference.max_dist}'
                f' m, got {emp.n_bins} bins up to {emp.max_dist} m')
    for i, emp in enumerate(direct):
        if emp.nonempty.sum() < 2:
            raise DataError(f'direct variogram {i} has fewer than 2 '
                            'nonempty bins')


def _theta_bounds(emp):
    """Return the (low, high) log(theta) interval of the line search."""
    longest = settings.LMC_MAX_RANGE_FACTOR * emp.max_dist
    shortest = emp.bin_width / 2
    return np.log(3.0 / longest), np.log(3.0 / shortest)


def _build_model(theta, b_nugget, b_structure):
    """Return (model, True), or a diagonal fallback and False.

    The fallback keeps the clipped direct sills and drops the cross terms,
    which is always positive semidefinite.
    """
    try:
        return CoregionalizationModel(theta, project_psd(b_nugget),
                                      project_psd(b_structure)), True
    except ValueError as error:
        log.warning('LMC matrices rejected (%s), keeping direct terms only',
                    error)
    diagonal = [np.diag(np.clip(np.nan_to_num(np.diag(matrix)), 0.0, None))
                for matrix in (b_nugget, b_structure)]
    return CoregionalizationModel(theta, *diagonal), False


def fit_lmc(direct, cross, initial_theta=None, allow_nugget=True,
            max_iterations=settings.LMC_MAX_ITERATIONS,
            tolerance=settings.LMC_TOLERANCE):
    """Fit a CoregionalizationModel sharing one theta across all variables.

    Args:
        direct (list): one EmpiricalVariogram per variable.
        cross (list): EmpiricalVariogram per pair (i, j), i < j, in the order
            of :func:`cross_pairs`; ``None`` or an empty variogram leaves the
            entry at 0.
        initial_theta (float): starting theta, default 3 / (max_dist / 2).
        allow_nugget (bool): fit B_nugget, else keep it 0.

    Returns:
        tuple: (CoregionalizationModel, FitDiagnostics); both matrices are
        PSD. Non-convergence returns the best iterate, flagged. The range
        3 / theta stays between half a bin width and
        ``LMC_MAX_RANGE_FACTOR`` times max_dist.
    """
    # pylint: disable=too-many-arguments,too-many-locals
    direct, cross = list(direct), list(cross)
    _check_inputs(direct, cross)
    problem = _LmcProblem(direct, cross, allow_nugget)
    low, high = _theta_bounds(direct[0])
    theta = initial_theta or 3.0 / (direct[0].max_dist / 2)
    theta = float(np.exp(np.clip(np.log(theta), low, high)))
    b_nugget, b_structure = problem.coefficients(theta)
    objective = problem.objective(theta, b_nugget, b_structure)
    best = (objective, theta, b_nugget, b_structure)
    # Objectives at rounding level count as settled
    floor = 1e-12 * problem.scale()
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        center = np.log(theta)
        search = minimize_scalar(
            lambda log_theta: problem.profile(np.exp(log_theta)),
            bounds=(max(center - _LOG_THETA_WINDOW, low),
                    min(center + _LOG_THETA_WINDOW, high)),
            method='bounded', options={'xatol': 1e-12})
        theta = float(np.exp(np.clip(search.x, low, high)))
        b_nugget, b_structure = problem.coefficients(theta)
        previous, objective = objective, problem.objective(
            theta, b_nugget, b_structure)
        if objective < best[0]:
            best = (objective, theta, b_nugget, b_structure)
        change = abs(previous - objective) / max(abs(previous), floor, 1e-300)
        if change < tolerance:
            converged = True
            break
    objective, theta, b_nugget, b_structure = best
    if not converged:
        log.warning('LMC fit did not converge after %d iterations',
                    iterations)
    message = 'relative objective change below tolerance' if converged \
        else 'maximum number of iterations reached'
    lmc, accepted = _build_model(theta, b_nugget, b_structure)
    if not accepted:
        converged, message = False, 'cross terms dropped, matrices not PSD'
    return lmc, FitDiagnostics(converged, iterations, float(objective),
                               message)
