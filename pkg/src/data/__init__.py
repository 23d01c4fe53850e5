"""Scenario files and step logs."""
