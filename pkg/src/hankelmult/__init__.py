"""Hankel transforms, Bessel heat semigroups and Laplace-type spectral multipliers."""

__version__ = "0.1.0"
