"""geokrige utility functions and classes."""

import os
from pathlib import Path

import numpy as np

from geokrige import log, settings


class GeokrigeError(Exception):
    """Base exception of the geokrige package."""

    prefix = 'geokrige error'

    def __str__(self):
        return f'{self.prefix}: ' + super().__str__()


class ConfigError(GeokrigeError):
    """Exception raised when a configuration is invalid or infeasible."""

    prefix = 'Configuration error'


class DataError(GeokrigeError):
    """Exception raised when input data cannot be used."""

    prefix = 'Data error'


class EmptyDatasetError(DataError):
    """Exception raised when an operation needs at least one point."""

    prefix = 'Empty dataset'


class NoUsablePairsError(DataError):
    """Exception raised when a cross-variogram has no point pair to use."""

    prefix = 'No usable pairs'

    def __init__(self, mode, counts):
        self.mode = mode
        self.counts = dict(counts)
        super().__init__(f'mode {mode}, pair counts {self.counts}')


class InsufficientNeighborsError(DataError):
    """Exception raised when too few observations surround a target."""

    prefix = 'Insufficient neighbors'

    def __init__(self, count, required):
        self.count = count
        self.required = required
        super().__init__(f'found {count}, need at least {required}')


class SingularSystemError(DataError):
    """Exception raised when a kriging system cannot be solved."""

    prefix = 'Singular kriging system'


class IncompatibleBinsError(DataError):
    """Exception raised when variograms do not share their lag bins."""

    prefix = 'Incompatible bins'


class SimulationError(GeokrigeError):
    """Exception raised when a random field cannot be simulated."""

    prefix = 'Simulation failed'


def rng_stream(seed, *keys):
    """Return a numpy Generator addressed by ``seed`` and integer ``keys``.

    Streams with different keys are statistically independent, and the same
    (seed, keys) always yields the same draws, whatever the thread layout.
    """
    entropy = [int(seed)] + [int(key) for key in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def resolve_threads(threads=None):
    """Return the worker count from the argument or the environment."""
    if threads is None:
        threads = os.environ.get(settings.THREADS_ENV_VAR, 1)
    try:
        threads = int(threads)
    except (TypeError, ValueError):
        raise ConfigError(f'invalid thread count {threads!r}') from None
    if threads < 1:
        raise ConfigError(f'thread count must be positive, got {threads}')
    return threads


def parse_key_values(text):
    """Parse flat ``key = value`` lines into an ordered dict of strings.

    Blank lines and lines starting with ``#`` are ignored.
    """
    values = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigError(f'line {number}: expected "key = value"')
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigError(f'line {number}: empty key')
        values[key.replace('-', '_')] = value
    return values


def write_csv(frame, path, header=None):
    """Write ``frame`` to ``path`` preceded by a ``# key = value`` block.

    Numbers are written with ``settings.OUTPUT_DIGITS`` significant digits
    and rows keep the frame order, so equal inputs give equal bytes.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf8', newline='') as file:
        for key, value in (header or {}).items():
            file.write(f'# {key} = {value}\n')
        frame.to_csv(file, index=False,
                     float_format=f'%.{settings.OUTPUT_DIGITS}g',
                     lineterminator='\n')
    log.info('Wrote %s (%d rows)', path, len(frame))
    return path
