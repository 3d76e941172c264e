"""Screening policies for latent TB among hospital employees.

Per-group Markov decision models, exact and column-generation solvers, a
Monte Carlo simulator, and practitioner summaries of the resulting policies.
"""
__version__ = "0.1.0"
