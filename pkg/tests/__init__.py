"""Tests of the geokrige package."""
