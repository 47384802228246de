"""Geometry-aware latent collaborative filtering.

An autoencoder recommender trained with an entropic optimal-transport
reconstruction loss under an item ground cost, plus an MMD prior penalty on
the latent codes. The package also ships exact and entropic OT solvers, the
evaluation protocol for held-out users, reference baselines and covering-number
diagnostics for user samples.
"""

__version__ = "0.1.0"
