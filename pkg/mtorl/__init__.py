"""
mtorl - multi-task offline reinforcement learning for multi-channel advertising.

Learns a channel-recommendation policy and a reward model from logged user
journeys, then runs a budget-constrained advertising procedure against a
synthetic environment.
"""

__version__ = "0.1.0"
__author__ = "Ifeoluwa Sulaiman"
__email__ = "ifeoluwasulaiman@gmail.com"

__all__ = ["__version__"]
