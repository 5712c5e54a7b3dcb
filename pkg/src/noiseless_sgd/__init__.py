"""Convergence-rate laboratory for SGD in the noiseless linear model.

Gaussian-feature least squares, kernel interpolation on the torus and the
averaging process on graphs, with Monte-Carlo tracing and exponent fits.
"""

__version__ = "0.1.0"
