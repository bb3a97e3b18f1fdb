"""Designing classifiers that anticipate the behavior they induce.

Agents choose whether to comply (or cheat) given the reward a
classification rule offers; the designer picks the rule knowing this.
"""

from .binned import (
    BinnedProblem,
    BinnedSolution,
    RefinementReport,
    StructureCertificate,
    build_bins,
    refinement_study,
    solve_binned,
    switching_constants,
    verify_structure,
    wtilde_zeros,
)
from .config import RunConfig, dump_config, parse_config
from .distributions import Gaussian, Logistic, SignalModel, check_mlrp, exp_family_ratios
from .equilibrium import DesignerPayoff, EquilibriumOutcome, ScenarioSpec, evaluate, objective_preset
from .errors import (
    ConfigError,
    EquiclassError,
    GridSizeError,
    IntegrationError,
    InvalidModelError,
    ModelRejectedError,
    NumericalFailureError,
    UnsupportedFamilyError,
)
from .optimizer import OptimizationResult, SearchConfig, optimize, optimize_threshold, optimize_two_cut
from .oracle import brute_force_binned, simulate
from .rules import Binned, InnerTwoCut, NegativeThreshold, OuterTwoCut, PositiveThreshold, rule_from_dict

__version__ = "0.1.0"
