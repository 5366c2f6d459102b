"""Small-area self-rated-health projection toolkit.

Projects a spatially disaggregated population forward with a dynamic
microsimulation, predicts each individual's self-rated health with an
aligned cumulative-logit ordinal regression, and forecasts per-cohort SRH
distributions with log-ratio Gaussian processes and Monte Carlo scenario
bands.
"""

__version__ = "0.1.0"
