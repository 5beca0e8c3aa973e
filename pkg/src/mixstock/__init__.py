"""Bayesian mixed-stock analysis with covariate-driven Dirichlet priors."""

__version__ = "0.1.0"
