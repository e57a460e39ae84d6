"""Causal structure learning for binary data with the multivariate Bernoulli model."""
from . import datagen, exact, graph, learner, mvb

__version__ = "0.1.0"
