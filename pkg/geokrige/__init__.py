"""Geostatistics library: variograms, kriging and reliability simulations."""
import logging

__version__ = '2023.1.0'

#: Package logger, shared by every module
log = logging.getLogger('geokrige')
log.addHandler(logging.NullHandler())
