"""Vaccine rationing microsimulation: priority tiers, deprivation index, reserve allocation."""

__version__ = "0.1.0"
