"""Tube covers of conormal bundles, looping partitions and submanifold-average bounds."""

from .bound import (
    BoundCounts,
    ConstantsLedger,
    InfeasibleError,
    evaluate_bound,
    make_schedule,
    quantitative_ift,
)
from .conormal import Submanifold, Tube
from .cover import CoverError, GoodCover, build_good_cover, classify_looping, partition_single_window
from .discrete import DiscreteHyperbolicSystem
from .eigenlab import average_over, compare_growth, growth_fit, sphere_zonal, torus_eigenfunction
from .flow import (
    HorizonError,
    PreconditionError,
    StiffnessError,
    conjugate_points,
    ehrenfest_time,
    phase_point,
    propagate_linearization,
)
from .harness import ConfigError, RunReport, Scenario, run, verify
from .ladder import CatLeaf, CatMapLeafCover, dyadic_ladder
from .manifold import get_model, registered_models

__version__ = "0.1.0"
