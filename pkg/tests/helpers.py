"""Module to help to create tests."""
import math

import numpy as np

from geokrige.harness import CaseStudyConfig, ScenarioConfig
from geokrige.random_field import make_case_study_surrogate
from geokrige.spatial import SpatialDataset
from geokrige.variogram import EmpiricalVariogram, lag_edges


def get_dataset(records):
    """Return a dataset from (point_id, x, y, value[, variable_id])."""
    return SpatialDataset.from_records(records)


def get_line_dataset(values, spacing=100.0, variable_id=0):
    """Return points along the x axis, ``spacing`` meters apart."""
    positions = np.arange(len(values))
    return SpatialDataset(positions, positions * spacing,
                          np.zeros(len(values)), values, variable_id)


def get_random_dataset(n_points, seed=0, extent=1000.0, variable_id=0,
                       first_id=0):
    """Return uniformly scattered points carrying standard normal values."""
    rng = np.random.default_rng(seed)
    return SpatialDataset(np.arange(first_id, first_id + n_points),
                          rng.uniform(0, extent, n_points),
                          rng.uniform(0, extent, n_points),
                          rng.standard_normal(n_points), variable_id)


def get_exact_variogram(model, max_dist=1000.0, n_bins=15, n_pairs=100,
                        i=0, j=0):
    """Return an empirical variogram lying exactly on ``model``."""
    edges = lag_edges(max_dist, n_bins)
    centers = (edges[:-1] + edges[1:]) / 2
    return EmpiricalVariogram(centers, model.gamma(centers, i, j),
                              np.full(n_bins, n_pairs), float(max_dist),
                              n_bins, sample_variance=float(
                                  model.nugget_matrix()[i, i] +
                                  model.structure_matrix()[i, i]))


def brute_force_within(dataset, center, radius):
    """List (point_id, distance) within ``radius`` by scanning every point."""
    found = []
    for pid, x, y in zip(dataset.point_id, dataset.x, dataset.y):
        dist = math.hypot(x - center.x, y - center.y)
        if dist <= radius:
            found.append((int(pid), dist))
    return sorted(found, key=lambda item: (item[1], item[0]))


def gaussian_elimination(matrix, rhs):
    """Solve a linear system by Gaussian elimination with partial pivoting."""
    size = len(rhs)
    augmented = [list(map(float, row)) + [float(value)]
                 for row, value in zip(matrix, rhs)]
    for col in range(size):
        pivot = max(range(col, size), key=lambda row: abs(augmented[row][col]))
        augmented[col], augmented[pivot] = augmented[pivot], augmented[col]
        for row in range(col + 1, size):
            factor = augmented[row][col] / augmented[col][col]
            for k in range(col, size + 1):
                augmented[row][k] -= factor * augmented[col][k]
    solution = [0.0] * size
    for row in reversed(range(size)):
        total = sum(augmented[row][k] * solution[k]
                    for k in range(row + 1, size))
        solution[row] = (augmented[row][size] - total) / augmented[row][row]
    return solution


def solve_kriging_oracle(points, model, target, target_variable=0):
    """Solve the co-kriging system of ``points`` by Gaussian elimination.

    Args:
        points: (variable, x, y, value) tuples, all used as neighbors.
        model: object with nugget_matrix(), structure_matrix() and theta.

    Returns:
        tuple: (prediction, weights)
    """
    nugget, structure = model.nugget_matrix(), model.structure_matrix()
    present = sorted({variable for variable, *_ in points})
    size = len(points) + len(present)
    matrix = [[0.0] * size for _ in range(size)]
    rhs = [0.0] * size
    for row, (var_a, xa, ya, _) in enumerate(points):
        for col, (var_b, xb, yb, _) in enumerate(points):
            dist = math.hypot(xa - xb, ya - yb)
            value = structure[var_a][var_b] * math.exp(-model.theta * dist)
            if row == col or (dist == 0 and var_a != var_b):
                value += nugget[var_a][var_b]
            matrix[row][col] = value
        column = len(points) + present.index(var_a)
        matrix[row][column] = matrix[column][row] = 1.0
        dist = math.hypot(xa - target[0], ya - target[1])
        rhs[row] = structure[var_a][target_variable] * \
            math.exp(-model.theta * dist)
    rhs[len(points) + present.index(target_variable)] = 1.0
    solution = gaussian_elimination(matrix, rhs)
    weights = solution[:len(points)]
    prediction = sum(w * point[3] for w, point in zip(weights, points))
    return prediction, weights


def get_scenario_config(**overrides):
    """Return a small, fast univariate scenario."""
    values = {'name': 'small', 'extent_m': 1000.0, 'resolution_m': 50.0,
              'range_m': 300.0, 'n_sample_points': 150, 'n_test_points': 20,
              'n_replications': 4, 'max_vgm_dist_m': 500.0, 'n_bins': 10,
              'max_radius_m': 400.0, 'max_points': 20, 'seed': 7}
    values.update(overrides)
    return ScenarioConfig(**values)


def get_case_frame(n_points=400, seed=3):
    """Return a small synthetic case-study table."""
    return make_case_study_surrogate(n_points, extent=2000.0, resolution=50.0,
                                     seed=seed)


def get_case_config(**overrides):
    """Return a small case-study configuration."""
    values = {'input_csv': 'surrogate.csv', 'n_test_points': 40,
              'n_known_points': (150, 'all'),
              'max_vgm_dist_m': (500.0, 750.0), 'fit_vgm_dist_m': 750.0,
              'n_bins': 10, 'n_neighbors': 20, 'seed': 5}
    values.update(overrides)
    return CaseStudyConfig(**values)
