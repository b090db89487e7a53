"""soccerlab: a desk-scale 2v2 soccer laboratory.

Independent actor-critic agents with multi-channel value decomposition are
trained against each other by a population scheduler, then compared through
round-robin tournaments, maximum-entropy equilibrium weighting and
behavioural statistics.
"""

__version__ = "0.1.0"
