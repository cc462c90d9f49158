"""Weighted least squares fitting and validity screening of variograms."""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.special import expit

from geokrige import log, settings
from geokrige.utils import DataError
from geokrige.variogram.models import ExponentialVariogramModel

__all__ = ('FitDiagnostics', 'ValidityVerdict', 'fit_exponential_wls',
           'fit_weights', 'default_initial', 'fallback_initial',
           'validate_model')


@dataclass(frozen=True)
class FitDiagnostics:
    """Outcome of a variogram fit."""

    converged: bool
    iterations: int
    objective: float
    message: str = ''

    def as_dict(self):
        """Return the diagnostics as a serializable dictionary."""
        return {'converged': self.converged, 'iterations': self.iterations,
                'objective': self.objective, 'message': self.message}


@dataclass(frozen=True)
class ValidityVerdict:
    """Result of screening a fitted model; empty ``reasons`` means valid."""

    reasons: tuple = field(default_factory=tuple)

    @property
    def valid(self):
        """Whether no screening rule fired."""
        return not self.reasons

    def __bool__(self):
        return self.valid


def fit_weights(emp):
    """Return the Cressie-style weights n_pairs / h^2 of the nonempty bins."""
    mask = emp.nonempty
    return emp.n_pairs[mask] / emp.lag_center[mask] ** 2


def _softplus(value):
    return np.logaddexp(0.0, value)


def _softplus_inverse(value):
    # log(exp(v) - 1), stable for large and tiny v
    value = max(float(value), 1e-300)
    return value + np.log(-np.expm1(-value))


def default_initial(emp):
    """Return the default starting model of ``fit_exponential_wls``.

    Nugget half the first nonempty bin, partial sill the sample variance
    minus that nugget, theta = 3 / (max_dist / 2).
    """
    gamma = emp.gamma_hat[emp.nonempty]
    nugget = 0.5 * float(gamma[0]) if len(gamma) else 0.0
    variance = emp.sample_variance
    if not np.isfinite(variance) or variance <= 0:
        variance = float(np.nanmax(gamma)) if len(gamma) else 1.0
    partial_sill = max(variance - nugget, 1e-3 * variance, 1e-12)
    return ExponentialVariogramModel(nugget, partial_sill,
                                     theta=3.0 / (emp.max_dist / 2))


def fallback_initial(emp):
    """Return a second starting model, used when the first fit is invalid.

    No nugget, partial sill the largest binned value and a range equal to
    the first lag where the empirical curve reaches 95% of that value.
    """
    mask = emp.nonempty
    gamma, lags = emp.gamma_hat[mask], emp.lag_center[mask]
    top = float(np.max(gamma)) if len(gamma) else 1.0
    top = top if top > 0 else 1.0
    reached = np.flatnonzero(gamma >= 0.95 * top)
    range_m = lags[reached[0]] if len(reached) else emp.max_dist
    return ExponentialVariogramModel(0.0, top, theta=3.0 / range_m)


def _parameters(model, allow_nugget):
    params = [np.log(model.partial_sill), np.log(model.theta)]
    if allow_nugget:
        params.insert(0, _softplus_inverse(model.nugget))
    return np.array(params)


def _model(params, allow_nugget):
    if allow_nugget:
        nugget, params = _softplus(params[0]), params[1:]
    else:
        nugget = 0.0
    return ExponentialVariogramModel(nugget, np.exp(params[0]),
                                     theta=np.exp(params[1]))


def _residuals(params, lags, gamma, root_weights, allow_nugget):
    nugget = _softplus(params[0]) if allow_nugget else 0.0
    sill, theta = np.exp(params[-2]), np.exp(params[-1])
    curve = nugget + sill * -np.expm1(-theta * lags)
    return root_weights * (gamma - curve)


def _jacobian(params, lags, gamma, root_weights, allow_nugget):
    # pylint: disable=unused-argument
    sill, theta = np.exp(params[-2]), np.exp(params[-1])
    decay = np.exp(-theta * lags)
    columns = [-root_weights * sill * -np.expm1(-theta * lags),
               -root_weights * sill * theta * lags * decay]
    if allow_nugget:
        columns.insert(0, -root_weights * expit(params[0]))
    return np.column_stack(columns)


def fit_exponential_wls(emp, initial=None, allow_nugget=True):
    """Fit an exponential model to ``emp`` by weighted least squares.

    Minimizes sum(w_b (gamma_hat_b - gamma(h_b))^2) with w_b = n_b / h_b^2
    by Levenberg-Marquardt over log(partial sill), log(theta) and, when
    ``allow_nugget``, softplus^-1(nugget). Non-convergence is flagged in the
    diagnostics and the best iterate is returned.

    Returns:
        tuple: (ExponentialVariogramModel, FitDiagnostics)
    """
    mask = emp.nonempty
    if mask.sum() < 3:
        raise DataError(f'need at least 3 nonempty bins, got {mask.sum()}')
    if initial is None:
        initial = default_initial(emp)
    lags, gamma = emp.lag_center[mask], emp.gamma_hat[mask]
    root_weights = np.sqrt(fit_weights(emp))
    start = _parameters(initial, allow_nugget)
    args = (lags, gamma, root_weights, allow_nugget)
    result = least_squares(
        _residuals, start, jac=_jacobian, method='lm', args=args,
        xtol=1e-15, ftol=1e-15, gtol=1e-15,
        max_nfev=settings.FIT_MAX_ITERATIONS * (len(start) + 1))
    converged = bool(result.status > 0) and bool(np.all(np.isfinite(result.x)))
    params = result.x if converged else _best(start, result.x, args)
    try:
        model = _model(params, allow_nugget)
    except ValueError:
        model, converged = initial, False
        params = _parameters(initial, allow_nugget)
    objective = float(np.sum(_residuals(params, *args) ** 2))
    diagnostics = FitDiagnostics(converged, int(result.nfev), objective,
                                 result.message)
    if not converged:
        log.debug('Variogram fit did not converge: %s', result.message)
    return model, diagnostics


def _best(start, final, args):
    """Return whichever of the start and final iterate fits better."""
    costs = []
    for params in (final, start):
        with np.errstate(over='ignore', invalid='ignore'):
            residuals = _residuals(params, *args)
        cost = np.sum(residuals ** 2)
        costs.append(cost if np.isfinite(cost) else np.inf)
    return final if costs[0] <= costs[1] else start


def validate_model(model, emp, diagnostics=None,
                   max_range_factor=settings.VALIDITY_MAX_RANGE_FACTOR,
                   max_sill_factor=settings.VALIDITY_MAX_SILL_FACTOR,
                   max_nugget_share=settings.VALIDITY_MAX_NUGGET_SHARE):
    """Screen a fitted model for an unreasonable shape.

    Returns:
        ValidityVerdict: invalid when the fit did not converge, the range3
        exceeds ``max_range_factor`` times max_dist or is below one bin width,
        the total sill exceeds ``max_sill_factor`` times the sample variance,
        or the nugget exceeds ``max_nugget_share`` of the total sill.
    """
    # pylint: disable=too-many-arguments
    reasons = []
    if diagnostics is not None and not diagnostics.converged:
        reasons.append('not converged')
    if model.range3 > max_range_factor * emp.max_dist:
        reasons.append(f'range exceeds {max_range_factor:g}×max_dist')
    if model.range3 < emp.bin_width:
        reasons.append('range below one bin width')
    variance = emp.sample_variance
    if np.isfinite(variance) and model.total_sill > max_sill_factor * variance:
        reasons.append('sill exceeds sample variance bound')
    if model.nugget > max_nugget_share * model.total_sill:
        reasons.append('nugget dominates')
    return ValidityVerdict(tuple(reasons))
