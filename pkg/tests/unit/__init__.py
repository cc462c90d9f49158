"""geokrige unit tests."""
