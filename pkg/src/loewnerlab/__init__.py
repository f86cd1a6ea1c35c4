"""Numerical laboratory for backward Loewner chains driven by Brownian motion."""

from .bessel import (
    BesselParams,
    RealPath,
    besq_exact_step,
    besq_pathwise,
    boundary_bessel_from_loewner,
    classify_boundary,
    dimension,
    mirror_solution,
    pv_residual,
    simulate_reflecting,
)
from .driver import (
    BrownianPath,
    DriverPath,
    TimeGrid,
    negate,
    refine,
    reverse_shift,
    sample_brownian,
    shift_increments,
)
from .excursions import (
    ExcursionRecord,
    LambdaEstimate,
    decompose,
    estimate_lambda,
    filter_macroscopic,
    macroscopic_start_times,
)
from .geometry import (
    BubbleRecord,
    DoublePointRecord,
    HullReport,
    detect_double_points,
    detect_real_hits,
    excursion_hull_experiment,
    extract_bubble,
    hull_base,
    squared_trace,
)
from .loewner import (
    BackwardChain,
    ElementarySlitMap,
    TracePolyline,
    backward_elementary,
    backward_trace,
    boundary_images,
    build_chain,
    evolve_backward,
    forward_elementary,
    inverse_forward,
    shifted_chain,
    squared_map,
    trace,
)
from ._validation import GridAlignmentError, LoewnerLabError

__version__ = "0.1.0"

__all__ = [
    "BesselParams",
    "RealPath",
    "besq_exact_step",
    "besq_pathwise",
    "boundary_bessel_from_loewner",
    "classify_boundary",
    "dimension",
    "mirror_solution",
    "pv_residual",
    "simulate_reflecting",
    "BrownianPath",
    "DriverPath",
    "TimeGrid",
    "negate",
    "refine",
    "reverse_shift",
    "sample_brownian",
    "shift_increments",
    "ExcursionRecord",
    "LambdaEstimate",
    "decompose",
    "estimate_lambda",
    "filter_macroscopic",
    "macroscopic_start_times",
    "BubbleRecord",
    "DoublePointRecord",
    "HullReport",
    "detect_double_points",
    "detect_real_hits",
    "excursion_hull_experiment",
    "extract_bubble",
    "hull_base",
    "squared_trace",
    "BackwardChain",
    "ElementarySlitMap",
    "TracePolyline",
    "backward_elementary",
    "backward_trace",
    "boundary_images",
    "build_chain",
    "evolve_backward",
    "forward_elementary",
    "inverse_forward",
    "shifted_chain",
    "squared_map",
    "trace",
    "GridAlignmentError",
    "LoewnerLabError",
    "__version__",
]
