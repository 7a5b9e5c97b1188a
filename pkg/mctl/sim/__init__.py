"""Deterministic simulation of sensors, subjects and networks."""

from mctl.sim.scenario import ScenarioConfig, load_scenario

__all__ = ["ScenarioConfig", "load_scenario"]
