"""Orchestration services for constraint assembly, simulation and checking."""
