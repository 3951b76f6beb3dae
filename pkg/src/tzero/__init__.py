"""Zero-temperature disorder thresholds of the 2D random-bond Ising model and
the 3D random-plaquette gauge model via minimum-weight matching of defects."""

__version__ = "0.1.0"

from .lattice import (
    Chain,
    CycleClass,
    DefectSet,
    LatticeSpec,
    boundary,
    classify_homology,
    torus_distance,
)
from .disorder import (
    DisorderSample,
    RngPolicy,
    defects,
    generate_sample,
    model_spec,
    nishimori_coupling,
)
from .matcher import Matching, brute_force_matching, min_weight_perfect_matching
from .decoder import TrialOutcome, build_recovery_chain, decode_chain, run_trial
from .montecarlo import PfailPoint, SweepPlan, estimate_pfail, read_points_csv, run_sweep
from .scaling import (
    ScalingFit,
    crossing_estimate,
    fit_corrected,
    fit_quadratic,
    slope_exponent,
)
