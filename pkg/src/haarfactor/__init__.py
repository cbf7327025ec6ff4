"""Constructive factorisations of the identity through operators on dyadic SL^inf."""
__version__ = "0.1.0"
