"""Landmark motion synthesis on the SRVF hypersphere.

Motions of 2-D landmark sets are encoded as square-root velocity functions
(points on a unit hypersphere), registered and averaged with the sphere's
Riemannian toolbox, modeled with a conditional Wasserstein GAN trained in the
tangent space at the Karcher mean, and decoded back into landmark sequences.
"""

__version__ = "0.1.0"
