"""Empirical variograms, exponential models and their fitting."""
from geokrige.variogram.empirical import (EmpiricalVariogram,
                                          empirical_cross_variogram,
                                          empirical_variogram, lag_edges,
                                          point_pairs)
from geokrige.variogram.fitting import (FitDiagnostics, ValidityVerdict,
                                        default_initial, fallback_initial,
                                        fit_exponential_wls, fit_weights,
                                        validate_model)
from geokrige.variogram.lmc import cross_pairs, fit_lmc
from geokrige.variogram.models import (CoregionalizationModel,
                                       ExponentialVariogramModel,
                                       VariogramModelBase, model_gamma,
                                       practical_range, project_psd)

__all__ = ('EmpiricalVariogram', 'empirical_variogram',
           'empirical_cross_variogram', 'lag_edges', 'point_pairs',
           'FitDiagnostics', 'ValidityVerdict', 'default_initial',
           'fallback_initial', 'fit_exponential_wls', 'fit_weights',
           'validate_model', 'cross_pairs', 'fit_lmc',
           'CoregionalizationModel', 'ExponentialVariogramModel',
           'VariogramModelBase', 'model_gamma', 'practical_range',
           'project_psd')
