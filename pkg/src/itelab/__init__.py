"""Numerical laboratory for information-theoretic equilibration.

Hamiltonian ensembles, exact pure-state dynamics, outcome-variance scaling,
Haar/Weingarten moment checks, GUE form-factor analytics and a
collision-based distinguisher.
"""

__version__ = "0.1.0"
