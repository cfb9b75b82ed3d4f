"""Delay-violation bounds and rate adaptation for two-user NOMA uplinks.

The package computes analytic bounds on the probability that a user's
queueing delay exceeds a deadline, for a two-user uplink with successive
or joint decoding (plus an orthogonal baseline), under perfect channel
knowledge, imperfect channel estimates, and finite-blocklength coding.
It optimizes per-slot rate adaptation against those bounds and validates
both the error approximations and the bounds against exact-model Monte
Carlo simulation.
"""

__version__ = "0.1.0"
