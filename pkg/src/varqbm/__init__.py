"""Variational quantum Boltzmann machines on a statevector simulator."""

from .ansatz import AnsatzTemplate, Circuit
from .qcore import PauliString, PauliSum, exact_gibbs, fidelity, partial_trace
from .regularize import RegularizationPolicy
from .varqite import EvolutionConfig, EvolutionError, evolve, prepare_gibbs

__version__ = "0.1.0"

__all__ = [
    "AnsatzTemplate",
    "Circuit",
    "EvolutionConfig",
    "EvolutionError",
    "PauliString",
    "PauliSum",
    "RegularizationPolicy",
    "evolve",
    "exact_gibbs",
    "fidelity",
    "partial_trace",
    "prepare_gibbs",
]
