"""Numerical checks for Ricci-flow sequences collapsing in the pointed Gromov-Hausdorff sense."""

__version__ = "0.1.0"
