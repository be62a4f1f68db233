"""Two-stage Bayesian shrinkage estimators for transfer learning.

Library layout:

- ``core``: domain types, splittable random streams, posterior summaries.
- ``shrinkage``: stable evaluation of the shrinkage-weight integrals.
- ``classical``: MLE and James-Stein estimators, two-stage assembly.
- ``hs_gibbs`` / ``pcp``: the two MCMC samplers.
- ``baselines``: thresholding and ridge-sharing competitors.
- ``simgen``: synthetic sparse / bounded-difference scenarios.
- ``regression``: the second-stage linear-regression extension.
- ``harness`` / ``tables`` / ``report``: Monte Carlo benchmarking and output.
"""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    EstimateResult,
    Method,
    PosteriorDraws,
    RngStream,
    SufficientStats,
    mcse,
    summarize,
)
