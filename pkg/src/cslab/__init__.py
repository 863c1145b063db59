"""Discrete predictive-state reconstruction from recurrent world models.

The package trains a recurrent next-step world model on trajectories,
quantizes its hidden state into a finite state set, validates the induced
state machine (unifilarity, purity against ground truth, predictive
sufficiency), and reuses the states for reinforcement learning and
graph-based planning. `cslab --help` lists the pipeline stages.
"""

__version__ = "0.1.0"
