"""
finepot - numerical toolkit for nonlinear fine potential theory.
Capacities, Wiener-type thinness, obstacle/Dirichlet p-energy problems
and fine (super)minimizer checks on weighted Euclidean grids.
"""

__version__ = "0.1.0"
