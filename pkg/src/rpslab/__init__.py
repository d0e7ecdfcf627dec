"""rpslab: an iterated rock-paper-scissors laboratory.

Simulate bot opponents, collect gameplay, fit interpretable behavioral
models by maximum likelihood, and discover new models with a multi-objective
evolutionary search over a typed expression DSL.
"""

__version__ = "0.1.0"
