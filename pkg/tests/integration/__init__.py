"""geokrige integration tests."""
