"""Desk-scale field simulation engine with a micromagnetics layer."""

__version__ = "0.1.0"
