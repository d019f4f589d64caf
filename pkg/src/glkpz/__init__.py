"""Ginzburg-Landau lattice dynamics, Cole-Hopf transform and homogenization diagnostics."""

__version__ = "0.1.0"
