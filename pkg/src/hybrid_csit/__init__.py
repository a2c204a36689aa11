"""Hybrid CSIT acquisition for reciprocal (TDD) multi-antenna links.

A user splits a fixed budget of uplink channel uses between plain pilots and
an RVQ codebook index sent over the same channel. The base station combines
both to estimate the downlink channel direction.
"""

from . import channel, estimation, fec, joint, modem, outage, rvq

__version__ = "0.1.0"

__all__ = ["channel", "estimation", "fec", "joint", "modem", "outage", "rvq", "__version__"]
