"""Numerical gluing of anti-self-dual conformal structures along cylindrical necks."""

__version__ = "0.1.0"
