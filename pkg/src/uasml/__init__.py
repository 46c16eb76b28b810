"""Uncertainty-aware soft sensors for a jacketed polymerization reactor.

The pipeline calibrates a first-principles reactor model by DRAM MCMC,
propagates the posterior through the model to build a Monte Carlo ensemble
of synthetic experiments, selects NARX lags by Lipschitz analysis, trains
one dense network per ensemble member, and cross-validates the resulting
uncertainty bands against the physical model's own coverage regions.
"""

__version__ = "0.1.0"
