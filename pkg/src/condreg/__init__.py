"""Exact and kernel-estimated conditional moments.

The exact engine (:mod:`condreg.finite_space`) computes conditional
expectations, laws and covariances on finite probability spaces. On top of it
:mod:`condreg.affine` builds the affine representation of ``E(Y | X, Z)`` and
the covariance-ratio slope, :mod:`condreg.projection` gives an independent
Hilbert-space route to the same slope, :mod:`condreg.gaussian_example`
simulates the Rademacher-mixed Gaussian model, and :mod:`condreg.estimators`
provides kernel plug-in estimates from samples.
"""

__version__ = "0.1.0"
