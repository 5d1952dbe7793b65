"""Adaptive statistical-query games at desk scale.

Interactive analyst-versus-mechanism games over finite universes, a tracing
analyst that defeats every natural answering mechanism, mask liftings that
extend the attack to arbitrary mechanisms, and chained-decryption
counterexamples showing that post hoc generalization does not compose.
"""

from .bits import Bits
from .core import (
    BitString,
    Dataset,
    DomainError,
    GapReport,
    Index,
    LiftedTableQuery,
    MaskedQuery,
    MembershipQuery,
    Pair,
    Query,
    TableQuery,
    UniformBits,
    UniformIndex,
    UniformPairs,
    phg_gap,
    query_mean_population,
    query_mean_sample,
    sample_dataset,
)
from .harness import GameConfig, GameResult, TrialAggregate, run_trials
from .seeding import child_rng, child_seed
from .tracer import Tracer, TracerConfig

__version__ = "0.1.0"
