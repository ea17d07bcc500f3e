"""Numerical engine for the stochastic optimal-savings HJB problem with random population."""

from savings_hjb.model import (
    BoundConstants,
    CRRAUtility,
    ModelParams,
    compute_bound_constants,
    drift_f,
    j,
    lipschitz_constant,
    lower_envelope,
    production,
    u1,
    u1_prime,
    u2,
    u2_prime,
    upper_envelope,
)

__version__ = "0.1.0"
