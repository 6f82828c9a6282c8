"""Numerical toolkit for weighted affine connections on Riemannian manifolds.

Symbolic fields, curvature of ``D^{alpha,gamma}``, boundary geometry,
quadrature on catalog domains, the integral identity verifier, D-Laplacian
solvers and the inequality harness.
"""

__version__ = "0.1.0"
