"""Historical probable-error and chi-square procedures next to their corrections."""

__version__ = "0.1.0"
