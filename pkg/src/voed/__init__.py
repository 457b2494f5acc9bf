"""Variational Bayesian optimal experimental design with normalizing flows.

Estimates expected information gain (EIG) by nested Monte Carlo and by
variational lower/upper bounds whose variational family is a conditional
coupling-layer normalizing flow, and optimizes designs by stochastic
gradient ascent or SPSA.
"""

__version__ = "0.1.0"
