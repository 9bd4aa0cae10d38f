"""Reconfigurable dataflow unit simulator and SSM performance model."""

__version__ = "0.1.0"
