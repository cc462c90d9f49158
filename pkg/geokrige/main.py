"""Command line entry point of geokrige.

Every subcommand maps to a ``handle_<name>`` method of :class:`Main`. Exit
codes: 0 on success, 2 on configuration errors, 3 on data errors and 4
when a field cannot be simulated.
"""
import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

from geokrige import __version__, log, settings
from geokrige.harness import (PLOT_KINDS, CaseStudyConfig, ScenarioConfig,
                              emit_plot_data, fit_screened, run_case_study,
                              run_scenario)
from geokrige.kriging import NeighborhoodSpec, krige_batch
from geokrige.random_field import (field_to_frame, make_case_study_surrogate,
                                   simulate_grf, simulate_multivariate_grf)
from geokrige.spatial import SpatialDataset
from geokrige.utils import (ConfigError, DataError, SimulationError,
                            parse_key_values, write_csv)
from geokrige.variogram import ExponentialVariogramModel, empirical_variogram

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_DATA_ERROR = 3
EXIT_SIMULATION_ERROR = 4

#: Numeric options that must be strictly positive when given
POSITIVE_OPTIONS = ('extent', 'resolution', 'range', 'points', 'max_dist',
                    'bins', 'max_points', 'max_radius', 'threads',
                    'replications')


def _read_points(path, value_column='value'):
    """Read a point_id,x_m,y_m,value CSV into a SpatialDataset."""
    try:
        frame = pd.read_csv(path, comment='#')
    except (OSError, ValueError) as error:
        raise DataError(f'cannot read {path}: {error}') from None
    missing = {'point_id', 'x_m', 'y_m', value_column} - set(frame.columns)
    if missing:
        raise DataError(f'{path} lacks columns {sorted(missing)}')
    return SpatialDataset.from_frame(frame, value=value_column)


def _overrides(pairs):
    """Turn repeated ``--set key=value`` options into a dictionary."""
    return parse_key_values('\n'.join(pairs or []))


def _check_options(args):
    """Raise ConfigError for a non-positive numeric option."""
    for name in POSITIVE_OPTIONS:
        value = getattr(args, name, None)
        if value is not None and not value > 0:
            option = '--' + name.replace('_', '-')
            raise ConfigError(f'{option} must be positive, got {value}')


def _load_config(cls, path, overrides):
    if path is None:
        return cls.from_mapping({}, overrides)
    return cls.from_file(path, overrides)


class Main:
    """Command line interface running geokrige operations."""

    def __init__(self):
        self.parser = self.setup()

    def setup(self):
        """Build the argument parser with one subparser per command."""
        parser = argparse.ArgumentParser(
            prog='geokrige',
            description='Variograms, kriging and reliability simulations.')
        parser.add_argument('--version', action='version',
                            version=f'%(prog)s {__version__}')
        parser.add_argument('-v', '--verbose', action='count', default=0,
                            help='more output, repeat for debug messages')
        commands = parser.add_subparsers(dest='command', required=True)

        field = commands.add_parser('simulate-field',
                                    help='dump a simulated field as CSV')
        self._add_field_options(field)
        field.add_argument('--correlation', type=float, default=None,
                           help='simulate three fields with this pairwise r')
        field.add_argument('--out', required=True, type=Path)

        surrogate = commands.add_parser(
            'simulate-case-data', help='write a synthetic case-study CSV')
        surrogate.add_argument('--points', type=int,
                               default=settings.SURROGATE_POINTS)
        surrogate.add_argument('--seed', type=int, default=0)
        surrogate.add_argument('--out', required=True, type=Path)

        variogram = commands.add_parser(
            'variogram', help='empirical variogram and exponential fit')
        variogram.add_argument('--data', required=True, type=Path)
        variogram.add_argument('--value-column', default='value')
        variogram.add_argument('--max-dist', type=float,
                               default=settings.MAX_VGM_DIST)
        variogram.add_argument('--bins', type=int, default=settings.N_BINS)
        variogram.add_argument('--no-nugget', action='store_true')
        variogram.add_argument('--out', required=True, type=Path)

        krige = commands.add_parser('krige', help='ordinary kriging')
        krige.add_argument('--data', required=True, type=Path)
        krige.add_argument('--targets', required=True, type=Path)
        krige.add_argument('--value-column', default='value')
        krige.add_argument('--range', type=float, default=None,
                           help='use this range instead of a fitted model')
        krige.add_argument('--nugget', type=float, default=0.0)
        krige.add_argument('--sill', type=float, default=1.0)
        krige.add_argument('--max-dist', type=float,
                           default=settings.MAX_VGM_DIST)
        krige.add_argument('--max-points', type=int,
                           default=settings.NEIGHBORHOOD_MAX_POINTS)
        krige.add_argument('--max-radius', type=float,
                           default=settings.NEIGHBORHOOD_MAX_RADIUS)
        krige.add_argument('--threads', type=int, default=None)
        krige.add_argument('--out', required=True, type=Path)

        for name, help_text in (('run-scenario', 'run a simulation scenario'),
                                ('run-case-study', 'run the case study')):
            command = commands.add_parser(name, help=help_text)
            command.add_argument('--config', type=Path, default=None)
            command.add_argument('--set', action='append', metavar='KEY=VALUE',
                                 help='override a configuration value')
            command.add_argument('--seed', type=int, default=None)
            command.add_argument('--out', required=True, type=Path)
            if name == 'run-scenario':
                command.add_argument('--threads', type=int, default=None)
                command.add_argument('--replications', type=int,
                                     default=None)
            else:
                command.add_argument('--data', type=Path, default=None)

        plot = commands.add_parser('emit-plot-data',
                                   help='write tidy plot data')
        plot.add_argument('kind', choices=PLOT_KINDS)
        plot.add_argument('--inputs', nargs='+', type=Path, default=[],
                          help='point_summary.csv or point_predictions.csv '
                               'files, or data CSV for variograms')
        plot.add_argument('--max-dist', type=float,
                          default=settings.MAX_VGM_DIST)
        plot.add_argument('--bins', type=int, default=settings.N_BINS)
        plot.add_argument('--out', required=True, type=Path)
        return parser

    @staticmethod
    def _add_field_options(parser):
        parser.add_argument('--extent', type=float, default=8000.0)
        parser.add_argument('--resolution', type=float,
                            default=settings.GRID_RESOLUTION)
        parser.add_argument('--range', type=float, default=600.0)
        parser.add_argument('--nugget', type=float, default=0.0)
        parser.add_argument('--sill', type=float, default=1.0)
        parser.add_argument('--seed', type=int, default=1)

    def execute(self, argv=None):
        """Run the command of ``argv`` and return its exit code."""
        args = self.parser.parse_args(argv)
        level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose,
                                                          logging.DEBUG)
        logging.basicConfig(level=level,
                            format='%(asctime)s %(levelname)s %(message)s')
        log.setLevel(level)
        handler = getattr(self, 'handle_' + args.command.replace('-', '_'))
        try:
            _check_options(args)
            handler(args)
        except ConfigError as error:
            log.error('%s', error)
            return EXIT_CONFIG_ERROR
        except DataError as error:
            log.error('%s', error)
            return EXIT_DATA_ERROR
        except SimulationError as error:
            log.error('%s', error)
            return EXIT_SIMULATION_ERROR
        return EXIT_OK

    @staticmethod
    def handle_simulate_field(args):
        """Simulate one field, or three correlated ones, and dump them."""
        try:
            model = ExponentialVariogramModel.from_range(args.range,
                                                         args.nugget,
                                                         args.sill)
            if args.correlation is None:
                realization = simulate_grf(args.extent, args.resolution,
                                           model, args.seed)
            else:
                realization = simulate_multivariate_grf(
                    args.extent, args.resolution, model, args.correlation,
                    args.seed)
        except ValueError as error:
            raise ConfigError(str(error)) from None
        header = {'extent_m': args.extent, 'resolution_m': args.resolution,
                  **model.as_dict(), 'seed': args.seed}
        if args.correlation is not None:
            header['correlation'] = args.correlation
        write_csv(field_to_frame(realization), args.out, header)

    @staticmethod
    def handle_simulate_case_data(args):
        """Write the synthetic case-study dataset."""
        frame = make_case_study_surrogate(args.points, seed=args.seed)
        write_csv(frame, args.out, {'n_points': args.points,
                                    'seed': args.seed})

    @staticmethod
    def handle_variogram(args):
        """Compute, fit and export an empirical variogram."""
        dataset = _read_points(args.data, args.value_column)
        emp = empirical_variogram(dataset, args.max_dist, args.bins)
        model, diagnostics, verdict, refit = fit_screened(
            emp, allow_nugget=not args.no_nugget)
        header = {'max_dist_m': args.max_dist, 'n_bins': args.bins,
                  'zero_lag_pairs': emp.zero_lag_pairs}
        if model is not None:
            header.update(model.as_dict())
            header.update(diagnostics.as_dict())
            header['valid'] = verdict.valid
            header['reasons'] = ';'.join(verdict.reasons)
            header['refit'] = refit
        emit_plot_data('variogram', (emp, model), args.out, header)

    @staticmethod
    def handle_krige(args):
        """Krige the values of a CSV file at target locations."""
        dataset = _read_points(args.data, args.value_column)
        try:
            targets = pd.read_csv(args.targets, comment='#')
        except (OSError, ValueError) as error:
            raise DataError(f'cannot read {args.targets}: {error}') from None
        if 'value' not in targets.columns:
            targets = targets.assign(value=0.0)
        targets = SpatialDataset.from_frame(targets)
        if args.range is not None:
            try:
                model = ExponentialVariogramModel.from_range(
                    args.range, args.nugget, args.sill)
            except ValueError as error:
                raise ConfigError(str(error)) from None
        else:
            emp = empirical_variogram(dataset, args.max_dist)
            model, _, verdict, _ = fit_screened(emp)
            if model is None:
                raise DataError('variogram could not be fitted')
            if not verdict.valid:
                log.warning('Fitted model flagged: %s',
                            ', '.join(verdict.reasons))
        neighborhood = NeighborhoodSpec(args.max_points, args.max_radius)
        results = krige_batch(dataset, model, targets, neighborhood,
                              threads=args.threads or 1)
        frame = pd.DataFrame([result.as_dict() for result in results])
        write_csv(frame, args.out, {**model.as_dict(),
                                    'max_points': args.max_points,
                                    'max_radius_m': args.max_radius})

    @staticmethod
    def handle_run_scenario(args):
        """Run a scenario configured by file and overrides."""
        overrides = _overrides(args.set)
        overrides.update({'seed': args.seed,
                          'n_replications': args.replications})
        config = _load_config(ScenarioConfig, args.config, overrides)
        result = run_scenario(config, args.out, args.threads)
        log.info('Scenario summary written to %s',
                 result.paths['scenario_summary'])

    @staticmethod
    def handle_run_case_study(args):
        """Run the case study configured by file and overrides."""
        overrides = _overrides(args.set)
        overrides['seed'] = args.seed
        if args.data is not None:
            overrides['input_csv'] = str(args.data)
        config = _load_config(CaseStudyConfig, args.config, overrides)
        run_case_study(config, args.out)

    @staticmethod
    def handle_emit_plot_data(args):
        """Turn result tables into tidy plot data."""
        if not args.inputs:
            raise ConfigError('emit-plot-data needs --inputs')
        if args.kind == 'variogram':
            dataset = _read_points(args.inputs[0])
            emp = empirical_variogram(dataset, args.max_dist, args.bins)
            model = fit_screened(emp)[0]
            emit_plot_data('variogram', (emp, model), args.out)
            return
        frames = []
        for path in args.inputs:
            try:
                frames.append(pd.read_csv(path, comment='#'))
            except (OSError, ValueError) as error:
                raise DataError(f'cannot read {path}: {error}') from None
        emit_plot_data(args.kind, frames, args.out)


def main(argv=None):
    """Run the command line interface."""
    return Main().execute(argv)


if __name__ == '__main__':
    sys.exit(main())
