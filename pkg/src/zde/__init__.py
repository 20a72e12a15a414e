"""Zero-dimensional extensions: block subshifts tuned to a target entropy and measure.

The package builds finite block families whose tiling subshifts carry an
exact, computable entropy inside a prescribed window while every orbit stays
measure-close to a chosen target; everything is checked at explicit finite
scales with stated error intervals.
"""

from .construction import (
    SFT,
    BlockSubshift,
    ConstructionParams,
    InfeasibleParameters,
    SamplingBudgetExhausted,
    build_delta,
    choose_params,
    delta_point,
    disjointness_experiment,
    exact_entropy,
    membership_Z,
    proximity_check,
    random_delta_point,
    read_sidecar,
    sample_block_set,
    separated_pair_check,
    trace_targets,
    verify_sandwich,
    write_sidecar,
)
from .counting import binary_entropy, log_q_count, q_count
from .lattice import LatticeBox, LatticeMode, compose, decompose, decompose_generic, make_box
from .measures import (
    CylinderMeasure,
    MeasureDistance,
    bernoulli,
    bernoulli_entropy,
    dirac,
    empirical_measure,
    measure_in_ball,
    metric_D,
    mixture,
    pattern_empirical,
    read_measure,
    var_bound,
    write_measure,
)
from .separation import (
    FullShift,
    delta_separated,
    entropy_from_counts,
    katok_entropy,
    max_separated,
    min_spanning,
    spanning_count,
)
from .symbolic import (
    Alphabet,
    BlockTilingConfiguration,
    Configuration,
    Pattern,
    depth_for_epsilon,
    orbit_distance,
    pattern_at,
    periodic,
    point_distance,
    read_blockset,
    shift,
    write_blockset,
)

__version__ = "0.1.0"

__all__ = [
    "Alphabet",
    "BlockSubshift",
    "BlockTilingConfiguration",
    "Configuration",
    "ConstructionParams",
    "CylinderMeasure",
    "FullShift",
    "InfeasibleParameters",
    "LatticeBox",
    "LatticeMode",
    "MeasureDistance",
    "Pattern",
    "SFT",
    "SamplingBudgetExhausted",
    "bernoulli",
    "bernoulli_entropy",
    "binary_entropy",
    "build_delta",
    "choose_params",
    "compose",
    "decompose",
    "decompose_generic",
    "delta_point",
    "delta_separated",
    "depth_for_epsilon",
    "dirac",
    "disjointness_experiment",
    "empirical_measure",
    "entropy_from_counts",
    "exact_entropy",
    "katok_entropy",
    "log_q_count",
    "make_box",
    "max_separated",
    "measure_in_ball",
    "membership_Z",
    "metric_D",
    "min_spanning",
    "mixture",
    "orbit_distance",
    "pattern_at",
    "pattern_empirical",
    "periodic",
    "point_distance",
    "proximity_check",
    "q_count",
    "random_delta_point",
    "read_blockset",
    "read_measure",
    "read_sidecar",
    "sample_block_set",
    "separated_pair_check",
    "shift",
    "spanning_count",
    "trace_targets",
    "var_bound",
    "verify_sandwich",
    "write_blockset",
    "write_measure",
    "write_sidecar",
]
