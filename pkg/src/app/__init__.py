"""Command-line application for the VFI simulator."""
