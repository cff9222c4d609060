"""Learning task rewards from implicit human facial reactions.

Subpackages cover the taxi gridworld environment, value-iteration
planning, a synthetic observer, the facial-feature pipeline, the
reaction model, Bayesian reward-ranking inference, and live sessions.
"""

__version__ = "0.1.0"
