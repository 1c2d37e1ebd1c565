"""Verification lab for pseudocalibrated densities of random boolean CSPs.

Core layers: exact predicates/instances (csp_core), the mixed sparse Fourier
basis (fourier), exact planted-density coefficients and decay envelopes
(planted), derivation counting (derivations), distribution decomposition
(cbd), brute-force oracles (oracle), and the experiment drivers
(experiments).  The command line front end lives in cli.
"""

__version__ = "0.1.0"
