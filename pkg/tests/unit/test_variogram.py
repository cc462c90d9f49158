"""Test empirical variograms, the exponential model and the fits."""
import dataclasses
import math
from unittest import TestCase

import numpy as np

from geokrige.utils import DataError, IncompatibleBinsError
from geokrige.variogram import (CoregionalizationModel,
                                ExponentialVariogramModel, FitDiagnostics,
                                empirical_cross_variogram,
                                empirical_variogram, fallback_initial,
                                fit_exponential_wls, fit_lmc, model_gamma,
                                practical_range, project_psd, validate_model)
from tests.helpers import (get_dataset, get_exact_variogram,
                           get_line_dataset, get_random_dataset)


class TestExponentialModel(TestCase):
    """Test ExponentialVariogramModel."""

    def test_origin(self):
        """gamma(0) is 0 even with a nugget."""
        model = ExponentialVariogramModel(0.2, 0.8, theta=0.01)
        self.assertEqual(model.gamma(0.0), 0.0)

    def test_closed_form(self):
        """gamma(100) = 0.2 + 0.8 (1 - e^-1)."""
        model = ExponentialVariogramModel(0.2, 0.8, theta=0.01)
        self.assertAlmostEqual(model_gamma(model, 100.0), 0.70569, places=5)

    def test_asymptote(self):
        """The curve reaches the total sill."""
        model = ExponentialVariogramModel(0.2, 0.8, theta=0.01)
        self.assertAlmostEqual(model.gamma(20 / 0.01), 1.0, delta=1e-6)

    def test_covariance(self):
        """C(0) is the total sill, C(h) the decayed structure."""
        self.assertAlmostEqual(
            ExponentialVariogramModel(0.2, 0.8, theta=0.01).covariance(0.0),
            1.0)
        model = ExponentialVariogramModel(0.0, 1.0, theta=0.01)
        self.assertAlmostEqual(model.covariance(100.0), 0.36788, places=5)
        lags = np.array([10.0, 200.0])
        np.testing.assert_allclose(model.covariance(lags),
                                   model.total_sill - model.gamma(lags))

    def test_ranges(self):
        """Practical range and range3 of known parameter sets."""
        model = ExponentialVariogramModel(0.0, 1.0, theta=1 / 100)
        self.assertAlmostEqual(practical_range(model), 299.57, places=2)
        self.assertAlmostEqual(model.range3, 300.0)
        self.assertAlmostEqual(
            ExponentialVariogramModel(0.0, 0.5, scale=252).range3, 756.0)
        self.assertEqual(practical_range(
            ExponentialVariogramModel(0.0, 0.05, theta=0.01)), 0.0)

    def test_from_range(self):
        """from_range sets theta = 3 / range."""
        model = ExponentialVariogramModel.from_range(600, 0.1, 0.9)
        self.assertAlmostEqual(model.theta, 0.005)
        self.assertEqual(ExponentialVariogramModel.from_dict(
            model.as_dict()), model)

    def test_invalid_parameters(self):
        """Negative nugget, zero sill or zero theta are rejected."""
        for args in ((-0.1, 1.0, 0.01), (0.0, 0.0, 0.01), (0.0, 1.0, 0.0)):
            with self.subTest(args=args):
                with self.assertRaises(ValueError):
                    ExponentialVariogramModel(*args)

    def test_negative_lag(self):
        """Distances are non-negative."""
        with self.assertRaises(ValueError):
            ExponentialVariogramModel(0.0, 1.0, theta=0.01).gamma(-1.0)

    def test_model_gamma_monotone(self):
        """The model curve never decreases over 1000 lags."""
        lags = np.linspace(0.0, 5000.0, 1000)
        for args in ((0.0, 1.0, 0.01), (0.3, 0.7, 0.002), (0.9, 0.1, 0.05)):
            with self.subTest(args=args):
                gamma = model_gamma(ExponentialVariogramModel(*args), lags)
                self.assertGreaterEqual(np.diff(gamma).min(), 0.0)


class TestCoregionalizationModel(TestCase):
    """Test the linear model of coregionalization."""

    def test_from_models(self):
        """Off-diagonals are the correlation times the geometric mean."""
        model = ExponentialVariogramModel(0.1, 0.9, theta=0.005)
        lmc = CoregionalizationModel.from_models([model] * 3, 0.5)
        np.testing.assert_allclose(lmc.b_structure[0, 1], 0.45)
        np.testing.assert_allclose(lmc.correlations()[1, 2], 0.5)
        direct = lmc.direct_model(2)
        self.assertAlmostEqual(direct.nugget, 0.1)
        self.assertAlmostEqual(direct.partial_sill, 0.9)
        self.assertAlmostEqual(lmc.gamma(100.0, 0, 1),
                               0.05 + 0.45 * -math.expm1(-0.5))

    def test_not_psd(self):
        """Indefinite matrices are rejected."""
        with self.assertRaises(ValueError):
            CoregionalizationModel(0.01, np.zeros((2, 2)),
                                   [[1.0, 2.0], [2.0, 1.0]])

    def test_project_psd(self):
        """Projection clips negative eigenvalues."""
        projected = project_psd([[1.0, 2.0], [2.0, 1.0]])
        self.assertGreaterEqual(np.linalg.eigvalsh(projected).min(), -1e-12)
        np.testing.assert_allclose(projected, [[1.5, 1.5], [1.5, 1.5]])

    def test_large_scale_accepted(self):
        """PSD checks are relative to the size of the matrix."""
        structure = project_psd([[1.0, 0.9999], [0.9999, 0.8]]) * 1e10
        lmc = CoregionalizationModel(0.01, np.zeros((2, 2)), structure)
        np.testing.assert_allclose(lmc.b_structure, lmc.b_structure.T)
        with self.assertRaises(ValueError):
            CoregionalizationModel(0.01, np.zeros((2, 2)),
                                   [[1e10, 2e10], [2e10, 1e10]])


class TestEmpiricalVariogram(TestCase):
    """Test the Matheron estimator."""

    def test_two_points(self):
        """One pair 100 m apart with values 0 and 2."""
        emp = empirical_variogram(get_dataset([(1, 0, 0, 0.0),
                                               (2, 100, 0, 2.0)]), 150.0, 1)
        self.assertEqual(emp.n_pairs.tolist(), [1])
        self.assertAlmostEqual(emp.gamma_hat[0], 2.0)

    def test_collinear(self):
        """Pairs at 100 m of 1, 2, 4, 8 give (1 + 4 + 16) / 6."""
        emp = empirical_variogram(get_line_dataset([1.0, 2.0, 4.0, 8.0]),
                                  300.0, 3)
        self.assertEqual(emp.n_pairs.tolist(), [3, 2, 1])
        self.assertAlmostEqual(emp.gamma_hat[0], 3.5)

    def test_constant(self):
        """A constant field has gamma 0 wherever pairs exist."""
        emp = empirical_variogram(get_random_dataset(60).with_values(
            np.full(60, 3.0)), 500.0, 5)
        np.testing.assert_array_equal(emp.gamma_hat[emp.nonempty], 0.0)

    def test_zero_lag_excluded(self):
        """Duplicate locations feed the zero-lag diagnostic only."""
        dataset = get_dataset([(1, 0, 0, 1.0), (2, 0, 0, 3.0),
                               (3, 100, 0, 2.0)])
        emp = empirical_variogram(dataset, 150.0, 1)
        self.assertEqual(emp.zero_lag_pairs, 1)
        self.assertAlmostEqual(emp.zero_lag_gamma, 2.0)
        self.assertEqual(emp.n_pairs.tolist(), [2])

    def test_bin_edges(self):
        """A pair exactly on an edge belongs to the lower bin."""
        emp = empirical_variogram(get_line_dataset([0.0, 1.0]), 200.0, 2)
        self.assertEqual(emp.n_pairs.tolist(), [1, 0])
        self.assertTrue(np.isnan(emp.gamma_hat[1]))

    def test_errors(self):
        """Too few points is an error, no pair an empty variogram."""
        with self.assertRaises(DataError):
            empirical_variogram(get_dataset([(1, 0, 0, 1.0)]))
        emp = empirical_variogram(get_line_dataset([0.0, 1.0], 5000.0),
                                  1000.0, 5)
        self.assertTrue(emp.is_empty)

    def test_frame(self):
        """The exported frame carries the plot columns."""
        model = ExponentialVariogramModel(0.0, 1.0, theta=0.01)
        frame = get_exact_variogram(model).as_frame(model)
        self.assertEqual(list(frame.columns), ['lag_center_m', 'gamma_hat',
                                               'n_pairs', 'model_gamma'])
        np.testing.assert_allclose(frame['gamma_hat'], frame['model_gamma'])

    def test_shift_and_scale(self):
        """Shifted values keep gamma, values scaled by a scale it by a**2."""
        dataset = get_random_dataset(200, seed=8)
        emp = empirical_variogram(dataset, 500.0, 10)
        shifted = empirical_variogram(
            dataset.with_values(dataset.value + 7.5), 500.0, 10)
        scaled = empirical_variogram(
            dataset.with_values(dataset.value * -3.0), 500.0, 10)
        np.testing.assert_array_equal(shifted.n_pairs, emp.n_pairs)
        np.testing.assert_allclose(shifted.gamma_hat, emp.gamma_hat,
                                   rtol=1e-9)
        np.testing.assert_allclose(scaled.gamma_hat, 9.0 * emp.gamma_hat,
                                   rtol=1e-12)


class TestCrossVariogram(TestCase):
    """Test empirical cross-variograms."""

    def test_self_cross(self):
        """The cross-variogram of a variable with itself is its variogram."""
        dataset = get_random_dataset(80, seed=3)
        direct = empirical_variogram(dataset, 500.0, 5)
        cross = empirical_cross_variogram(dataset, dataset, 500.0, 5)
        np.testing.assert_allclose(cross.gamma_hat, direct.gamma_hat)
        np.testing.assert_array_equal(cross.n_pairs, direct.n_pairs)
        self.assertEqual(cross.diagnostics['mode'], 'collocated')

    def test_identical_copy(self):
        """A copy under another variable id gives the direct variogram."""
        dataset = get_random_dataset(80, seed=3)
        copy = get_random_dataset(80, seed=3, variable_id=1)
        direct = empirical_variogram(dataset, 500.0, 5)
        cross = empirical_cross_variogram(dataset, copy, 500.0, 5)
        np.testing.assert_allclose(cross.gamma_hat, direct.gamma_hat)

    def test_heterotopic(self):
        """Disjoint locations use the covariance-based estimator."""
        ds_i = get_random_dataset(60, seed=1)
        ds_j = get_random_dataset(60, seed=2, variable_id=1)
        cross = empirical_cross_variogram(ds_i, ds_j, 500.0, 5)
        self.assertEqual(cross.diagnostics['mode'], 'heterotopic')
        self.assertEqual(cross.diagnostics['zero_lag_source'],
                         'first nonempty bin')
        first = np.flatnonzero(cross.nonempty)[0]
        self.assertAlmostEqual(cross.gamma_hat[first], 0.0)

    def test_no_pairs(self):
        """Collocated mode without two shared locations fails."""
        ds_i = get_line_dataset([0.0, 1.0])
        ds_j = get_dataset([(0, 0, 0, 1.0, 1)])
        with self.assertRaises(DataError):
            empirical_cross_variogram(ds_i, ds_j, 500.0, 5,
                                      heterotopic=False)


class TestFitExponential(TestCase):
    """Test the weighted least squares fit and the screening."""

    def test_exact_recovery(self):
        """A curve lying on the model gives back its parameters."""
        model = ExponentialVariogramModel(0.0, 1.0, theta=0.01)
        fitted, _ = fit_exponential_wls(get_exact_variogram(model))
        self.assertAlmostEqual(fitted.nugget, 0.0, delta=1e-4)
        self.assertAlmostEqual(fitted.partial_sill, 1.0, delta=1e-4)
        self.assertAlmostEqual(fitted.theta, 0.01, delta=1e-6)

    def test_recovery_with_nugget(self):
        """A nugget is recovered as well."""
        model = ExponentialVariogramModel(0.3, 0.7, theta=0.006)
        fitted, diagnostics = fit_exponential_wls(get_exact_variogram(model))
        self.assertTrue(diagnostics.converged)
        self.assertAlmostEqual(fitted.nugget, 0.3, delta=1e-4)
        self.assertAlmostEqual(fitted.partial_sill, 0.7, delta=1e-4)

    def test_without_nugget(self):
        """allow_nugget=False pins c0 at 0."""
        model = ExponentialVariogramModel(0.0, 2.0, theta=0.008)
        fitted, _ = fit_exponential_wls(get_exact_variogram(model),
                                        allow_nugget=False)
        self.assertEqual(fitted.nugget, 0.0)
        self.assertAlmostEqual(fitted.partial_sill, 2.0, delta=1e-4)

    def test_too_few_bins(self):
        """Fewer than 3 nonempty bins cannot be fitted."""
        emp = empirical_variogram(get_line_dataset([1.0, 2.0, 4.0]),
                                  300.0, 3)
        with self.assertRaises(DataError):
            fit_exponential_wls(emp)

    def test_fallback_initial(self):
        """The fallback start uses the plateau and its first lag."""
        model = ExponentialVariogramModel(0.0, 1.0, theta=0.01)
        emp = get_exact_variogram(model)
        start = fallback_initial(emp)
        self.assertEqual(start.nugget, 0.0)
        self.assertAlmostEqual(start.partial_sill, np.nanmax(emp.gamma_hat))

    def test_validity(self):
        """Screening rules fire on unreasonable models."""
        model = ExponentialVariogramModel(0.0, 1.0, theta=0.01)
        emp = get_exact_variogram(model)
        self.assertTrue(validate_model(model, emp).valid)
        long_range = ExponentialVariogramModel(0.0, 1.0, theta=1e-6)
        self.assertIn('range exceeds 2×max_dist',
                      validate_model(long_range, emp).reasons)
        nuggety = ExponentialVariogramModel(0.99, 0.01, theta=0.01)
        self.assertIn('nugget dominates',
                      validate_model(nuggety, emp).reasons)
        failed = FitDiagnostics(False, 600, 1.0)
        self.assertFalse(validate_model(model, emp, failed))


class TestFitLmc(TestCase):
    """Test the linear model of coregionalization fit."""

    @staticmethod
    def exact_inputs(lmc, n_variables=3):
        direct = [get_exact_variogram(lmc, i=i, j=i)
                  for i in range(n_variables)]
        cross = [get_exact_variogram(lmc, i=i, j=j)
                 for i in range(n_variables)
                 for j in range(i + 1, n_variables)]
        return direct, cross

    def test_exact_recovery(self):
        """Curves lying on an LMC give back its matrices."""
        structure = [[1.0, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, 0.5, 1.0]]
        lmc = CoregionalizationModel(1 / 200, np.zeros((3, 3)), structure)
        fitted, diagnostics = fit_lmc(*self.exact_inputs(lmc))
        self.assertTrue(diagnostics.converged)
        np.testing.assert_allclose(fitted.b_structure, structure, atol=1e-3)
        np.testing.assert_allclose(fitted.b_nugget, 0.0, atol=1e-3)
        self.assertAlmostEqual(fitted.theta, 1 / 200, delta=1e-5)

    def test_reduces_to_univariate(self):
        """Cloned variables without cross bins match the univariate fit."""
        model = ExponentialVariogramModel(0.2, 0.8, theta=0.006)
        emp = get_exact_variogram(model)
        fitted, _ = fit_lmc([emp, emp], [None])
        single, _ = fit_exponential_wls(emp)
        for i in range(2):
            direct = fitted.direct_model(i)
            self.assertAlmostEqual(direct.nugget, single.nugget, delta=1e-6)
            self.assertAlmostEqual(direct.partial_sill, single.partial_sill,
                                   delta=1e-6)
        self.assertAlmostEqual(fitted.b_structure[0, 1], 0.0, delta=1e-12)

    def test_incompatible_bins(self):
        """Variograms must share their bins."""
        model = ExponentialVariogramModel(0.0, 1.0, theta=0.01)
        with self.assertRaises(IncompatibleBinsError):
            fit_lmc([get_exact_variogram(model),
                     get_exact_variogram(model, max_dist=800.0)], [None])

    def test_wrong_cross_count(self):
        """One cross-variogram per variable pair is required."""
        model = ExponentialVariogramModel(0.0, 1.0, theta=0.01)
        emp = get_exact_variogram(model)
        with self.assertRaises(DataError):
            fit_lmc([emp, emp, emp], [None])

    @staticmethod
    def noisy_inputs(noise, seed):
        """Three direct and three cross curves plus white noise."""
        rng = np.random.default_rng(seed)
        truth = ExponentialVariogramModel(0.0, 1.0, theta=1 / 200)
        emp = get_exact_variogram(truth, n_pairs=50)

        def jittered(factor):
            gamma = factor * emp.gamma_hat + \
                noise * rng.standard_normal(emp.n_bins)
            return dataclasses.replace(emp, gamma_hat=gamma)

        return ([jittered(1.0) for _ in range(3)],
                [jittered(0.5) for _ in range(3)])

    def test_noisy_inputs_stay_psd(self):
        """Noisy curves give PSD matrices and a bounded theta."""
        for noise in (0.2, 0.5, 1.0):
            for seed in range(10):
                with self.subTest(noise=noise, seed=seed):
                    fitted, diagnostics = fit_lmc(
                        *self.noisy_inputs(noise, seed), max_iterations=50)
                    for matrix in (fitted.b_nugget, fitted.b_structure):
                        self.assertGreaterEqual(
                            np.linalg.eigvalsh(matrix).min(), -1e-8)
                    range3 = 3 / fitted.theta
                    self.assertLessEqual(range3, 10_000.0 * (1 + 1e-9))
                    self.assertGreaterEqual(range3, 1000 / 30 * (1 - 1e-9))
                    self.assertIsInstance(diagnostics.converged, bool)
