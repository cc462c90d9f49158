"""Acceptance checks of the simulation and case-study protocols.

The fast checks run everywhere; medium ones take about a minute and the large
ones reproduce scaled versions of the full simulation study.
"""
import tempfile
from pathlib import Path
from unittest import TestCase

import numpy as np
import pytest

from geokrige import settings
from geokrige.harness import run_case_study, run_scenario
from geokrige.kriging import NeighborhoodSpec, cokrige, ordinary_krige
from geokrige.random_field import (make_case_study_surrogate,
                                   sample_observations, select_test_points,
                                   simulate_grf, simulate_multivariate_grf)
from geokrige.spatial import (Location, SpatialDataset, build_spatial_index,
                              count_within)
from geokrige.variogram import (ExponentialVariogramModel,
                                empirical_variogram, fit_exponential_wls,
                                fit_lmc)
from geokrige.variogram.empirical import empirical_cross_variogram
from geokrige.variogram.lmc import cross_pairs
from tests.helpers import (get_case_config, get_random_dataset,
                           get_scenario_config, solve_kriging_oracle)

MODEL = ExponentialVariogramModel.from_range(600.0)
WIDE = NeighborhoodSpec(max_points=60, max_radius=1e5)


def shifted(dataset, dx, dy):
    """Return ``dataset`` translated by (dx, dy)."""
    return SpatialDataset(dataset.point_id, dataset.x + dx, dataset.y + dy,
                          dataset.value, dataset.variable_id)


class TestExactness(TestCase):
    """Deterministic properties of the predictors and estimators."""

    def test_weights_and_interpolation(self):
        """Weights sum to one and observed values are honored."""
        dataset = get_random_dataset(40, seed=21)
        for row in range(0, 40, 7):
            target = dataset.location(row)
            prediction = ordinary_krige(dataset, MODEL, target, WIDE)
            self.assertLess(abs(prediction.weights.sum() - 1.0), 1e-9)
            self.assertAlmostEqual(prediction.predicted_value,
                                   dataset.value[row], delta=1e-6)
            self.assertLessEqual(prediction.kriging_variance, 1e-6)

    def test_translation(self):
        """A rigid shift changes neither predictions nor variances."""
        dataset = get_random_dataset(30, seed=22)
        moved = shifted(dataset, 2500.0, -700.0)
        for target in (Location(100.0, 900.0), Location(480.0, 20.0)):
            first = ordinary_krige(dataset, MODEL, target, WIDE)
            second = ordinary_krige(moved, MODEL, Location(
                target.x + 2500.0, target.y - 700.0), WIDE)
            self.assertAlmostEqual(first.predicted_value,
                                   second.predicted_value, delta=1e-9)
            self.assertAlmostEqual(first.kriging_variance,
                                   second.kriging_variance, delta=1e-9)

    def test_large_oracle(self):
        """A 60-point system equals the independent solve."""
        dataset = get_random_dataset(60, seed=23)
        target = Location(333.0, 444.0)
        prediction = ordinary_krige(dataset, MODEL, target, WIDE)
        distances = np.hypot(dataset.x - target.x, dataset.y - target.y)
        order = np.lexsort((dataset.point_id, distances))
        points = [(0, dataset.x[i], dataset.y[i], dataset.value[i])
                  for i in order]
        expected, weights = solve_kriging_oracle(points, MODEL,
                                                 (target.x, target.y))
        self.assertAlmostEqual(prediction.predicted_value, expected,
                               delta=1e-8)
        np.testing.assert_allclose(prediction.weights, weights, atol=1e-8)

    def test_cokriging_weights(self):
        """Target weights sum to one, auxiliary weights to zero."""
        multi = simulate_multivariate_grf(1000, 50, MODEL, 0.7, 3)
        samples = [sample_observations(fld, 25, 10 + variable)
                   for variable, fld in enumerate(multi.fields)]
        observations = SpatialDataset.concat(samples)
        prediction = cokrige(observations, multi.lmc, Location(510, 490), 1,
                             WIDE)
        variables = prediction.weight_variables
        for variable in range(3):
            total = prediction.weights[variables == variable].sum()
            self.assertAlmostEqual(total, 1.0 if variable == 1 else 0.0,
                                   delta=1e-9)

    def test_matheron_bins(self):
        """Binned semi-variances equal a full pair enumeration."""
        dataset = get_random_dataset(400, seed=24)
        emp = empirical_variogram(dataset, 500.0, 10)
        dx = dataset.x[:, None] - dataset.x[None, :]
        dy = dataset.y[:, None] - dataset.y[None, :]
        first, second = np.triu_indices(len(dataset), 1)
        distances = np.hypot(dx, dy)[first, second]
        squares = (dataset.value[first] - dataset.value[second]) ** 2
        bins = np.ceil(distances / 50.0).astype(int) - 1
        keep = (distances > 0) & (distances <= 500.0)
        counts = np.bincount(bins[keep], minlength=10)
        sums = np.bincount(bins[keep], weights=squares[keep], minlength=10)
        np.testing.assert_array_equal(emp.n_pairs, counts)
        np.testing.assert_allclose(emp.gamma_hat, sums / (2 * counts),
                                   rtol=1e-12)

    def test_fit_scale_equivariance(self):
        """Scaling values by a scales the sills by a**2, theta unchanged."""
        field = simulate_grf(
            2000, 50, ExponentialVariogramModel.from_range(400.0, 0.2, 0.8),
            4)
        sample = sample_observations(field, 600, 5)
        scaled = SpatialDataset(sample.point_id, sample.x, sample.y,
                                3.0 * sample.value)
        first, _ = fit_exponential_wls(empirical_variogram(sample, 800.0))
        second, _ = fit_exponential_wls(empirical_variogram(scaled, 800.0))
        self.assertAlmostEqual(second.theta / first.theta, 1.0, delta=1e-4)
        self.assertAlmostEqual(second.partial_sill / first.partial_sill, 9.0,
                               delta=1e-3)

    def test_scenario_bytes(self):
        """The summary file does not depend on the thread count."""
        with tempfile.TemporaryDirectory() as tmp:
            run_scenario(get_scenario_config(), Path(tmp) / 'one', threads=1)
            run_scenario(get_scenario_config(), Path(tmp) / 'four',
                         threads=4)
            self.assertEqual(
                (Path(tmp) / 'one' / 'scenario_summary.csv').read_bytes(),
                (Path(tmp) / 'four' / 'scenario_summary.csv').read_bytes())


@pytest.mark.medium
class TestPointsWithinRadius(TestCase):
    """Expected number of sampled points near a test point."""

    @classmethod
    def setUpClass(cls):
        """An 8 km field and its 200 test points."""
        cls.field = simulate_grf(8000, 50, MODEL, 1)
        cls.test = select_test_points(cls.field, settings.N_TEST_POINTS, 2)

    def mean_count(self, n_points):
        """Mean count within 250 m, averaged over 100 samplings."""
        counts = []
        for seed in range(100):
            sample = sample_observations(self.field, n_points, seed,
                                         reserved=self.test.point_id)
            counts.append(count_within(build_spatial_index(sample),
                                       self.test.coordinates, 250.0).mean())
        return float(np.mean(counts))

    def test_counts(self):
        """650 points give about 2, 2300 about 7."""
        count = self.mean_count(650)
        self.assertTrue(1.7 <= count <= 2.2, count)
        count = self.mean_count(2300)
        self.assertTrue(6.3 <= count <= 7.3, count)


@pytest.mark.large
class TestVariogramRecovery(TestCase):
    """Fits on full realizations recover the generating model."""

    def test_range_and_sill(self):
        """Mean range3 within 20% of 600 m, sill within 15% of 1."""
        ranges, sills = [], []
        for seed in range(20):
            field = simulate_grf(4000, 50, MODEL, seed)
            model, _ = fit_exponential_wls(empirical_variogram(
                field.dataset(), 1000.0))
            ranges.append(model.range3)
            sills.append(model.total_sill)
        self.assertAlmostEqual(np.mean(ranges), 600.0, delta=120.0)
        self.assertAlmostEqual(np.mean(sills), 1.0, delta=0.15)

    def test_lmc_correlation(self):
        """The fitted structural correlation of an r = 0.9 triple."""
        correlations = []
        for seed in range(50):
            multi = simulate_multivariate_grf(2000, 50, MODEL, 0.9, seed)
            samples = [multi[variable].dataset() for variable in range(3)]
            direct = [empirical_variogram(sample, 800.0, 10)
                      for sample in samples]
            cross = [empirical_cross_variogram(samples[i], samples[j], 800.0,
                                               10)
                     for i, j in cross_pairs(3)]
            lmc, _ = fit_lmc(direct, cross)
            b_structure = lmc.b_structure
            correlations.append(b_structure[0, 1] / np.sqrt(
                b_structure[0, 0] * b_structure[1, 1]))
        self.assertAlmostEqual(np.mean(correlations), 0.9, delta=0.1)


@pytest.mark.large
class TestReliabilityStudy(TestCase):
    """Scaled reproduction of the univariate simulation study."""

    @staticmethod
    def run_cell(range_m, nugget, n_sample_points):
        """Run one estimated cell with 200 replications."""
        config = get_scenario_config(
            name=f'r{range_m:g}_n{nugget:g}_{n_sample_points}',
            extent_m=8000.0, range_m=range_m, nugget=nugget,
            partial_sill=1.0 - nugget, n_sample_points=n_sample_points,
            n_test_points=settings.N_TEST_POINTS, n_replications=200,
            max_vgm_dist_m=settings.MAX_VGM_DIST, n_bins=settings.N_BINS,
            max_radius_m=settings.NEIGHBORHOOD_MAX_RADIUS,
            max_points=settings.NEIGHBORHOOD_MAX_POINTS, seed=17)
        return run_scenario(config, threads=4)

    def test_range_cells(self):
        """Longer ranges predict more reliably with less bias."""
        cells = {(range_m, nugget): self.run_cell(range_m, nugget, 2300)
                 for range_m in (300.0, 600.0) for nugget in (0.0, 0.2)}

        def pooled(range_m, column):
            return np.mean([cells[(range_m, nugget)].summary.iloc[0][column]
                            for nugget in (0.0, 0.2)])

        def abs_bias(range_m):
            return np.mean([cells[(range_m, nugget)].points['bias'].abs()
                            .mean() for nugget in (0.0, 0.2)])

        self.assertAlmostEqual(
            pooled(600.0, 'prop_correct_or_neighbor_mean'), 0.80, delta=0.08)
        self.assertAlmostEqual(
            pooled(300.0, 'prop_correct_or_neighbor_mean'), 0.72, delta=0.08)
        self.assertLess(abs_bias(600.0), abs_bias(300.0))
        mse = [np.mean([cells[(range_m, nugget)].summary.iloc[0]['mse_mean']
                        for range_m in (300.0, 600.0)])
               for nugget in (0.0, 0.2)]
        self.assertTrue(0.55 <= mse[0] / mse[1] <= 0.95, mse)


@pytest.mark.large
class TestMultivariateStudy(TestCase):
    """Co-kriging against separate univariate predictions."""

    @staticmethod
    def run_cell(correlation, **overrides):
        """Run one multivariate cell with 100 replications."""
        values = {'name': f'multi_r{correlation:g}', 'extent_m': 8000.0,
                  'range_m': 600.0, 'multivariate': True,
                  'correlation': correlation, 'n_sample_points': 650,
                  'n_test_points': settings.N_TEST_POINTS,
                  'n_replications': 100,
                  'max_vgm_dist_m': settings.MAX_VGM_DIST,
                  'n_bins': settings.N_BINS,
                  'max_radius_m': settings.NEIGHBORHOOD_MAX_RADIUS,
                  'max_points': settings.NEIGHBORHOOD_MAX_POINTS, 'seed': 29}
        values.update(overrides)
        summary = run_scenario(get_scenario_config(**values),
                               threads=4).summary.set_index('method')
        return (summary.loc['univariate', 'prop_correct_quintile_mean'],
                summary.loc['cokriging', 'prop_correct_quintile_mean'])

    def test_collocated_equivalence(self):
        """Collocated co-kriging adds next to nothing."""
        pairs = [self.run_cell(correlation) for correlation in (0.1, 0.5, 0.9)]
        univariate, cokriging = np.mean(pairs, axis=0)
        self.assertLessEqual(abs(univariate - cokriging), 0.03)

    def test_heterotopic_gain(self):
        """Denser auxiliary variables help the index."""
        univariate, cokriging = self.run_cell(
            0.9, sampling='heterotopic', n_per_variable=(650, 2300, 2300))
        self.assertGreaterEqual(cokriging - univariate, 0.02)


@pytest.mark.large
class TestCaseStudySurrogate(TestCase):
    """The case-study pipeline on a full-size synthetic dataset."""

    @classmethod
    def setUpClass(cls):
        """Run the default pipeline on the surrogate table."""
        frame = make_case_study_surrogate(seed=31)
        config = get_case_config(
            n_test_points=settings.N_TEST_POINTS,
            n_known_points=settings.CASE_STUDY_KNOWN_POINTS,
            max_vgm_dist_m=(1250.0,), fit_vgm_dist_m=1250.0,
            n_bins=settings.N_BINS, n_neighbors=settings.CASE_STUDY_NEIGHBORS)
        cls.result = run_case_study(config, frame=frame)

    def test_parameters(self):
        """All-point fits recover the generating sills and scales."""
        params = self.result.variogram_params
        fits = params[(params['variogram_source'] == 'all_points') &
                      (params['model_type'] == 'univariate')]
        for (nugget, sill, scale), (_, row) in zip(settings.SURROGATE_MODELS,
                                                   fits.iterrows()):
            self.assertAlmostEqual(row['nugget'] + row['partial_sill'],
                                   nugget + sill, delta=0.1 * (nugget + sill))
            self.assertAlmostEqual(row['scale'], scale, delta=0.1 * scale)

    def test_more_points_help(self):
        """Reliability does not drop as known points are added."""
        results = self.result.results
        for method in ('univariate', 'cokriging'):
            props = results[results['method'] == method] \
                .sort_values('n_known')['prop_correct_or_neighbor'].tolist()
            for smaller, larger in zip(props, props[1:]):
                self.assertGreaterEqual(larger, smaller - 0.03)

    def test_methods_agree(self):
        """With every point known both methods are as reliable."""
        results = self.result.results
        full = results[results['n_known'] == results['n_known'].max()] \
            .set_index('method')['prop_correct_or_neighbor']
        self.assertLessEqual(abs(full['univariate'] - full['cokriging']),
                             0.03)
