"""Quantum stochastic simulators embedded in quantum-jump trajectory dynamics."""

from .analysis import compare_ensemble, empirical_transition_matrix, ks_test, validate_run
from .embedding import (
    EmbeddingReport,
    Lindblad,
    embed_discrete,
    embed_process,
    effective_hamiltonian,
    jump_operators,
    natural_hamiltonian,
    verify_embedding,
)
from .process_core import (
    Branch,
    DiscreteBranch,
    DiscreteProcessSpec,
    EventLog,
    ExpMixture,
    Exponential,
    MemoryMeasures,
    ProcessSpec,
    Tabulated,
    classical_measures,
    classical_sample,
    dwell_density,
    stationary_mode_dist,
    survival,
    validate_spec,
)
from .quantum_model import (
    KrausSet,
    MemoryBasis,
    analytic_gram,
    build_kraus,
    discrete_model,
    extract_states,
    gram_fixed_point,
    quantum_measures,
)
from .reverse_map import conditional_density, extract_hsmm, is_erasing, roundtrip_check
from .trajectory_engine import (
    StatePath,
    ensemble_density,
    evolve_no_jump,
    master_equation_evolve,
    run_trajectory,
    sample_jump_time,
    select_jump,
)

__version__ = "0.1.0"
