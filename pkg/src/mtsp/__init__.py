"""Tile self-assembly engine: stochastic growth simulators for square and
cubic Wang-style tiles, an exhaustive constraint verifier, and a
multi-objective evolutionary search for minimal tile sets."""

from .model import (
    EPS,
    WILDCARD,
    LabelTable,
    ModelKind,
    Seed,
    Tile,
    build_label_table,
    canonical_tile,
    enumerate_orientations,
    finalize_seed,
    format_tiles,
    labels_bind,
    parse_tiles,
    placement_admissible,
    rotation_equivalent,
)
from .simulator import (
    GrowthState,
    SimConfig,
    SimOutcome,
    Trace,
    TraceStep,
    format_trace,
    parse_trace,
    simulate,
    simulate_once,
)
from .metrics import (
    MetricsReport,
    Shape,
    VerifyResult,
    active_region,
    alpha,
    evaluate_outcome,
    exhaustive_verify,
    kappa,
    max_bonds,
)
from .evolution import (
    Evaluated,
    FitnessTriple,
    GAConfig,
    RunResult,
    build_layers,
    crossover,
    dominates,
    fitness_f,
    fitness_g,
    fitness_h,
    mutate,
    run,
    schedule_W,
    schedule_p,
)

__all__ = [
    "EPS", "WILDCARD", "LabelTable", "ModelKind", "Seed", "Tile",
    "build_label_table", "canonical_tile", "enumerate_orientations",
    "finalize_seed", "format_tiles", "labels_bind", "parse_tiles",
    "placement_admissible", "rotation_equivalent",
    "GrowthState", "SimConfig", "SimOutcome", "Trace", "TraceStep",
    "format_trace", "parse_trace", "simulate", "simulate_once",
    "MetricsReport", "Shape", "VerifyResult", "active_region", "alpha",
    "evaluate_outcome", "exhaustive_verify", "kappa", "max_bonds",
    "Evaluated", "FitnessTriple", "GAConfig", "RunResult", "build_layers",
    "crossover", "dominates", "fitness_f", "fitness_g", "fitness_h",
    "mutate", "run", "schedule_W", "schedule_p",
]

__version__ = "0.1.0"
