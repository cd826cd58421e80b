"""Simulation lab for RRDPS quantum key distribution with an untrusted
measurement device: honest rounds, two detector-side attacks, the
phase-error formulas they undermine, random-graph and difference-coverage
scans, and a numerical zero-leakage verifier for the perfect case."""

__version__ = "0.1.0"

from .analysis import (
    clopper_pearson_interval,
    clopper_pearson_lower,
    component_scan,
    contradiction_report,
    coverage_scan,
    critical_scaling_scan,
    phase_error_improved,
    phase_error_original,
    remark_upper_bound,
)
from .attack1 import (
    Attack1Stats,
    PairObservation,
    PhaseGraph,
    build_phase_graph,
    difference_table,
    fred_respond,
    harvest,
    largest_component,
    passive_interference,
    run_attack1_session,
)
from .attack2 import (
    Attack2Stats,
    JointState,
    ResidualState,
    entangle,
    eve_extract,
    fred_measure_ancilla,
    run_attack2_session,
)
from .protocol import (
    DetectionRecord,
    EncodingState,
    KeyBits,
    RoundRecord,
    disjoint_pairing,
    encode_state,
    generate_key_bits,
    honest_measure,
    run_honest_round,
    run_honest_session,
    sift,
)
from .security import (
    AttackModel,
    check_constraints,
    eve_leakage,
    identity_model,
    leaky_counterexample,
    optimize_leakage,
    random_feasible_model,
    verify_theorem,
)
from .seeding import make_rng
