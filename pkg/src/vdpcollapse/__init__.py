"""Quantum van der Pol oscillators with dissipative coupling: oscillation collapse.

Modules
-------
hilbert      truncated Fock spaces, operators, density matrices
liouvillian  Lindblad generators (pair, global N-body, mean-field one-body)
evolve       time integration and steady states
observables  phonon number, Mandel Q, order parameter, Wigner function
classical    noiseless amplitude equations and analytic boundaries
stochastic   classical stochastic model of the pair
meanfield    self-consistent factorized model
harness      sweeps, persistence and the ``vdp`` command line
"""
from __future__ import annotations

__version__ = "0.1.0"
