"""Reflected Markov-modulated Brownian motion with state-dependent barriers.

Stationary distributions, explicit two-state solutions, expected discounted
dividends and a seeded Monte Carlo simulator.
"""
from .dividend import make_dividend_model, solve_value_function
from .errors import InputError, MmbmError, NumericalError
from .model import load_model, validate_model
from .simulator import SimConfig, empirical_dividend, simulate_path
from .stationary import regeneration, solve_stationary

__all__ = [
    "InputError", "MmbmError", "NumericalError", "SimConfig", "empirical_dividend", "load_model",
    "make_dividend_model", "regeneration", "simulate_path", "solve_stationary", "solve_value_function",
    "validate_model",
]
