"""Shared types, geometry, configuration and metrics."""
