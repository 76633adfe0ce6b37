"""Numerical laboratory for McKean-Vlasov diffusions and their measure derivatives."""

__version__ = "0.1.0"
