"""Meta-RL as task inference: belief networks, exact posteriors, and learners."""

__version__ = "0.1.0"
