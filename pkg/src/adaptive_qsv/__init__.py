"""Adaptive two-qubit quantum state verification: strategies, bounds, simulation and protocol."""

from .quantum import eigh, expectation, fidelity, orthogonal_state, target_state, tensor
from .statistics import (
    confidence_bound,
    global_bound,
    infidelity_at_confidence,
    kl_divergence,
    required_measurements,
)
from .strategies import (
    Strategy,
    build,
    build_bi_locc,
    build_global,
    build_lo_optimal,
    build_uni_locc,
    constant_factor,
)

__version__ = "0.1.0"
